use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::tensor::{GradStore, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    /// Multiplier applied to each Adadelta update.
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
            lr: 0.04,
        }
    }
}

/// Running averages `E[g²]` and `E[Δx²]`, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    pub sq_grad: Vec<Vec<f64>>,
    pub sq_update: Vec<Vec<f64>>,
}

impl AdadeltaState {
    pub fn new(params: &ParamStore, config: AdadeltaConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Self {
            config,
            sq_grad: zeros.clone(),
            sq_update: zeros,
        }
    }

    /// One update of every trainable parameter:
    ///
    /// ```text
    /// E[g²]  ← ρ·E[g²] + (1−ρ)·g²
    /// Δx     = −√(E[Δx²]+ε) / √(E[g²]+ε) · g
    /// E[Δx²] ← ρ·E[Δx²] + (1−ρ)·Δx²
    /// x      ← x + lr·Δx
    /// ```
    pub fn step(&mut self, params: &mut ParamStore, grads: &GradStore) -> Result<()> {
        if self.sq_grad.len() != params.len() {
            return Err(TrainError::Invalid(format!(
                "optimizer tracks {} parameters, store has {}",
                self.sq_grad.len(),
                params.len()
            )));
        }
        if let Some(id) = grads.first_non_finite() {
            return Err(TrainError::NonFiniteGradient {
                epoch: None,
                param: params.get(id).name.clone(),
            });
        }
        let AdadeltaConfig { rho, eps, lr } = self.config;
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let param = params.get_mut(id);
            if !param.trainable {
                continue;
            }
            let g = grads.get(id);
            let eg = &mut self.sq_grad[id.index()];
            let ex = &mut self.sq_update[id.index()];
            if g.len() != eg.len() {
                return Err(TrainError::Invalid(format!(
                    "gradient shape mismatch for `{}`",
                    param.name
                )));
            }
            for (j, x) in param.value.data_mut().iter_mut().enumerate() {
                eg[j] = rho * eg[j] + (1.0 - rho) * g[j] * g[j];
                let dx = -((ex[j] + eps).sqrt() / (eg[j] + eps).sqrt()) * g[j];
                ex[j] = rho * ex[j] + (1.0 - rho) * dx * dx;
                *x += lr * dx;
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradStore, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
