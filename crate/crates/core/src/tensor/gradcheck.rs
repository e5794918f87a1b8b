use serde::Serialize;

use super::{ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Maximum tolerated per-coordinate relative error.
    pub tol: f64,
    /// Failing coordinates kept in the report (the count is always exact).
    pub max_listed_failures: usize,
    /// Adds a delta to one analytic coordinate before comparison. Test hook
    /// for proving the checker notices a wrong gradient.
    pub corrupt: Option<(ParamId, usize, f64)>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_listed_failures: 20,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FailingCoord {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub h: f64,
    pub tol: f64,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub passed: bool,
    pub groups: Vec<GroupReport>,
    pub failing: Vec<FailingCoord>,
}

/// Relative error with denominator `max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares tape gradients of `build`'s scalar output with central finite
/// differences over every coordinate of every trainable parameter.
///
/// `build` must be deterministic; it is re-run twice per coordinate.
pub fn grad_check<F, E>(params: &mut ParamStore, opts: &GradCheckOptions, build: F) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, E>,
    E: From<TensorError>,
{
    if !(opts.h > 0.0) {
        return Err(TensorError::Invalid {
            op: "grad_check",
            msg: format!("step must be positive, got {}", opts.h),
        }
        .into());
    }
    let mut analytic = {
        let mut tape = Tape::new(params);
        let root = build(&mut tape)?;
        tape.backward(root)?.to_grad_store(params)
    };
    if let Some((id, index, delta)) = opts.corrupt {
        analytic.get_mut(id)[index] += delta;
    }

    let eval = |params: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new(params);
        let root = build(&mut tape)?;
        Ok(tape.scalar_value(root))
    };

    let ids: Vec<ParamId> = params.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut groups = Vec::with_capacity(ids.len());
    let mut failing = Vec::new();
    let mut coords_checked = 0;
    let mut overall = 0.0f64;
    for id in ids {
        let name = params.get(id).name.clone();
        let n = params.get(id).value.numel();
        let mut group = GroupReport {
            name: name.clone(),
            coords: n,
            max_rel_error: 0.0,
            failures: 0,
        };
        for index in 0..n {
            let original = params.get(id).value.data()[index];
            params.get_mut(id).value.data_mut()[index] = original + opts.h;
            let plus = eval(params);
            params.get_mut(id).value.data_mut()[index] = original - opts.h;
            let minus = eval(params);
            params.get_mut(id).value.data_mut()[index] = original;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(TensorError::NonFiniteProbe { param: name, index }.into());
            }
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic.get(id)[index];
            let rel = relative_error(a, numeric);
            group.max_rel_error = group.max_rel_error.max(rel);
            if rel > opts.tol {
                group.failures += 1;
                if failing.len() < opts.max_listed_failures {
                    failing.push(FailingCoord {
                        param: name.clone(),
                        index,
                        analytic: a,
                        numeric,
                        rel_error: rel,
                    });
                }
            }
            coords_checked += 1;
        }
        overall = overall.max(group.max_rel_error);
        groups.push(group);
    }
    let passed = groups.iter().all(|g| g.failures == 0);
    Ok(GradCheckReport {
        h: opts.h,
        tol: opts.tol,
        max_rel_error: overall,
        coords_checked,
        passed,
        groups,
        failing,
    })
}
