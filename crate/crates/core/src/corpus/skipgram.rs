use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Maximum distance between a center word and a context word.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate; decays linearly to `1e-4 ×` this value.
    pub learning_rate: f64,
    /// Standard deviation of the Gaussian initialisation of input vectors.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// Skip-gram with negative sampling over id sequences.
///
/// Returns the `[vocab_size × dim]` input-vector table. Each sentence is
/// traversed left to right with a fixed context window; negatives are drawn
/// from the unigram distribution raised to 3/4. Ids never seen in `sentences`
/// keep their Gaussian initialisation. Single-threaded and deterministic for
/// a given seed.
pub fn train_skipgram(sentences: &[Vec<u32>], vocab_size: usize, cfg: &SkipGramConfig) -> Result<Tensor> {
    let mut counts = vec![0usize; vocab_size];
    let mut total_tokens = 0usize;
    for s in sentences {
        for &id in s {
            let slot = counts.get_mut(id as usize).ok_or_else(|| {
                CorpusError::Invalid(format!("token id {id} out of range for vocabulary of {vocab_size}"))
            })?;
            *slot += 1;
            total_tokens += 1;
        }
    }
    if total_tokens == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(CorpusError::Invalid("skip-gram dim and window must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input = Tensor::randn(&[vocab_size, cfg.dim], cfg.init_std, &mut rng).into_data();
    let mut output = vec![0.0; vocab_size * cfg.dim];
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise =
        WeightedIndex::new(&weights).map_err(|e| CorpusError::Invalid(format!("negative sampling table: {e}")))?;

    let dim = cfg.dim;
    let total_steps = (total_tokens * cfg.epochs.max(1)) as f64;
    let mut step = 0usize;
    let mut grad_center = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        for sentence in sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (cfg.learning_rate * (1.0 - step as f64 / total_steps)).max(cfg.learning_rate * 1e-4);
                step += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(sentence.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sentence[ctx_pos] as usize;
                    let c = center as usize * dim;
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target * dim;
                        let score: f64 = (0..dim).map(|j| input[c + j] * output[o + j]).sum();
                        let g = lr * (label - crate::tensor::sigmoid(score));
                        for j in 0..dim {
                            grad_center[j] += g * output[o + j];
                            output[o + j] += g * input[c + j];
                        }
                    }
                    for j in 0..dim {
                        input[c + j] += grad_center[j];
                    }
                }
            }
        }
    }
    Ok(Tensor::new(vec![vocab_size, dim], input).expect("shape matches buffer"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dim_is_100() {
        assert_eq!(SkipGramConfig::default().dim, 100);
    }

    #[test]
    fn deterministic_for_seed() {
        let sents = vec![vec![2, 3, 4, 2, 5], vec![3, 3, 4]];
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 3,
            seed: 17,
            ..Default::default()
        };
        let a = train_skipgram(&sents, 6, &cfg).unwrap();
        let b = train_skipgram(&sents, 6, &cfg).unwrap();
        assert_eq!(a, b);
        let other = train_skipgram(&sents, 6, &SkipGramConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn unseen_rows_keep_initialisation() {
        let sents = vec![vec![2, 3, 2, 3]];
        let cfg = SkipGramConfig {
            dim: 4,
            epochs: 2,
            seed: 1,
            ..Default::default()
        };
        let trained = train_skipgram(&sents, 5, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = Tensor::randn(&[5, 4], cfg.init_std, &mut rng);
        assert_eq!(&trained.data()[16..20], &init.data()[16..20]);
        assert_ne!(&trained.data()[8..12], &init.data()[8..12]);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let cfg = SkipGramConfig::default();
        assert!(matches!(
            train_skipgram(&[vec![]], 3, &cfg),
            Err(CorpusError::EmptyCorpus)
        ));
        assert!(train_skipgram(&[vec![7]], 3, &cfg).is_err());
    }
}
