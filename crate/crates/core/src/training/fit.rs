use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clip_global_norm, AdadeltaConfig, AdadeltaState, Result, TrainError};
use crate::corpus::{Direction, WindowSample};
use crate::model::{AtLstmModel, Network, Prediction};
use crate::tensor::{GradStore, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Number of trailing epochs summarised by average and max accuracy.
    pub average_window: usize,
    /// Record train-set accuracy after every epoch.
    pub track_train_accuracy: bool,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            clip_norm: Some(5.0),
            seed: 0,
            average_window: 50,
            track_train_accuracy: true,
            optimizer: AdadeltaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub up_predicted_up: usize,
    pub up_predicted_down: usize,
    pub down_predicted_up: usize,
    pub down_predicted_down: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub confusion: Confusion,
}

/// Counts predictions whose direction matches the label. Prediction ties
/// count as down.
pub fn evaluate(net: &Network, params: &ParamStore, samples: &[WindowSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(TrainError::EmptySamples("evaluation set"));
    }
    let predictions: Vec<Prediction> = samples
        .par_iter()
        .map(|s| net.predict(params, s))
        .collect::<Result<_, _>>()?;
    let mut confusion = Confusion::default();
    for (s, p) in samples.iter().zip(&predictions) {
        let cell = match (s.label, p.direction) {
            (Direction::Up, Direction::Up) => &mut confusion.up_predicted_up,
            (Direction::Up, Direction::Down) => &mut confusion.up_predicted_down,
            (Direction::Down, Direction::Up) => &mut confusion.down_predicted_up,
            (Direction::Down, Direction::Down) => &mut confusion.down_predicted_down,
        };
        *cell += 1;
    }
    let correct = confusion.up_predicted_up + confusion.down_predicted_down;
    Ok(Evaluation {
        accuracy: correct as f64 / samples.len() as f64,
        correct,
        total: samples.len(),
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were retained (highest dev accuracy, earliest
    /// on ties; the last epoch when there is no dev set).
    pub best_epoch: usize,
    pub best_dev_accuracy: Option<f64>,
    /// Split summarised by `average_accuracy` and `max_accuracy`.
    pub accuracy_split: Option<String>,
    /// Mean accuracy over the trailing `average_window` epochs.
    pub average_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
    pub steps: usize,
}

fn maybe_accuracy(net: &Network, params: &ParamStore, samples: &[WindowSample]) -> Result<Option<f64>> {
    if samples.is_empty() {
        Ok(None)
    } else {
        Ok(Some(evaluate(net, params, samples)?.accuracy))
    }
}

/// Accumulates the gradient of the summed loss over `batch` into `grads`.
/// Returns the summed loss.
fn batch_gradient(net: &Network, params: &ParamStore, batch: &[&WindowSample], grads: &mut GradStore) -> Result<f64> {
    let mut total = 0.0;
    for s in batch {
        let mut tape = Tape::new(params);
        let loss = net.loss(&mut tape, s)?;
        total += tape.scalar_value(loss);
        tape.backward(loss)?.accumulate_into(grads);
    }
    Ok(total)
}

/// Trains with Adadelta over seeded shuffles of `train`, evaluating dev and
/// test after each epoch. On return the model holds the best-dev
/// parameters and `state` the optimizer accumulators of the final step.
pub fn fit(
    model: &mut AtLstmModel,
    state: &mut AdadeltaState,
    train: &[WindowSample],
    dev: &[WindowSample],
    test: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(TrainError::EmptySamples("training set"));
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Invalid("batch_size must be positive".into()));
    }
    if let Some(c) = cfg.clip_norm {
        if !(c.is_finite() && c > 0.0) {
            return Err(TrainError::Invalid(format!("clip_norm must be positive, got {c}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let track = |model: &AtLstmModel, epoch, loss| -> Result<EpochRecord> {
        let train_accuracy = if cfg.track_train_accuracy {
            maybe_accuracy(&model.net, &model.params, train)?
        } else {
            None
        };
        Ok(EpochRecord {
            epoch,
            train_loss: loss,
            train_accuracy,
            dev_accuracy: maybe_accuracy(&model.net, &model.params, dev)?,
            test_accuracy: maybe_accuracy(&model.net, &model.params, test)?,
        })
    };

    let first = track(model, 0, None)?;
    let mut best = (0usize, first.dev_accuracy, model.params.clone());
    let mut records = vec![first];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = GradStore::zeros_like(&model.params);
    let mut steps = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &train[i]).collect();
            grads.zero();
            epoch_loss += batch_gradient(&model.net, &model.params, &batch, &mut grads)?;
            grads.scale(1.0 / batch.len() as f64);
            if let Some(id) = grads.first_non_finite() {
                return Err(TrainError::NonFiniteGradient {
                    epoch: Some(epoch),
                    param: model.params.get(id).name.clone(),
                });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            state.step(&mut model.params, &grads)?;
            steps += 1;
        }
        let record = track(model, epoch, Some(epoch_loss / train.len() as f64))?;
        let improved = match (record.dev_accuracy, best.1) {
            (Some(now), Some(prev)) => now > prev,
            (None, _) => true,
            (Some(_), None) => true,
        };
        if improved {
            best = (epoch, record.dev_accuracy, model.params.clone());
        }
        records.push(record);
    }

    let (accuracy_split, series): (Option<&str>, Vec<f64>) = {
        let tail_start = if records.len() > 1 { 1 } else { 0 };
        let tail = &records[tail_start..];
        let tail = &tail[tail.len().saturating_sub(cfg.average_window.max(1))..];
        let tests: Vec<f64> = tail.iter().filter_map(|r| r.test_accuracy).collect();
        if !tests.is_empty() {
            (Some("test"), tests)
        } else {
            let devs: Vec<f64> = tail.iter().filter_map(|r| r.dev_accuracy).collect();
            (if devs.is_empty() { None } else { Some("dev") }, devs)
        }
    };
    let average_accuracy = (!series.is_empty()).then(|| series.iter().sum::<f64>() / series.len() as f64);
    let max_accuracy = series.iter().copied().reduce(f64::max);

    let (best_epoch, best_dev_accuracy, best_params) = best;
    model.params = best_params;
    Ok(TrainReport {
        epochs: records,
        best_epoch,
        best_dev_accuracy,
        accuracy_split: accuracy_split.map(str::to_string),
        average_accuracy,
        max_accuracy,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DaySlot, EncodedTitle};
    use crate::model::{build_variant, Hyper, Variant};
    use chrono::{Days, NaiveDate};

    fn hyper() -> Hyper {
        Hyper {
            word_dim: 4,
            char_dim: 2,
            filter_widths: vec![1, 2],
            maps_per_filter: 2,
            u: 2,
            v: 2,
            d_a: 3,
            r: 2,
            window: 2,
            ..Hyper::default()
        }
    }

    /// Token 2 means up, token 3 means down.
    fn samples(n: usize) -> Vec<WindowSample> {
        let start = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
        (0..n)
            .map(|i| {
                let up = i % 2 == 0;
                let key = if up { 2 } else { 3 };
                let t = EncodedTitle {
                    token_ids: vec![4, key],
                    char_ids: vec![vec![2], vec![key]],
                };
                WindowSample {
                    target_date: start + Days::new(i as u64 + 2),
                    anchor_date: start + Days::new(i as u64 + 1),
                    symbol: "INDEX".into(),
                    days: vec![
                        DaySlot {
                            date: start + Days::new(i as u64),
                            titles: vec![],
                        },
                        DaySlot {
                            date: start + Days::new(i as u64 + 1),
                            titles: vec![t],
                        },
                    ],
                    label: if up { Direction::Up } else { Direction::Down },
                    technical: None,
                }
            })
            .collect()
    }

    fn setup() -> (AtLstmModel, AdadeltaState) {
        let m = build_variant(Variant::AtLstm, &hyper(), 5, 4, 1).unwrap();
        let st = AdadeltaState::new(&m.params, AdadeltaConfig::default());
        (m, st)
    }

    #[test]
    fn zero_epochs_reports_untrained_only() {
        let (mut m, mut st) = setup();
        let before = m.params.clone();
        let data = samples(6);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let r = fit(&mut m, &mut st, &data, &data, &data, &cfg).unwrap();
        assert_eq!(r.epochs.len(), 1);
        assert_eq!(r.epochs[0].epoch, 0);
        assert!(r.epochs[0].train_loss.is_none());
        assert_eq!(r.steps, 0);
        assert_eq!(r.average_accuracy, r.epochs[0].test_accuracy);
        assert_eq!(m.params, before);
    }

    #[test]
    fn same_seed_same_report() {
        let data = samples(10);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 9,
            ..Default::default()
        };
        let run = || {
            let (mut m, mut st) = setup();
            let r = fit(&mut m, &mut st, &data, &data[..4], &data[4..], &cfg).unwrap();
            (r, m.params, st)
        };
        let (a, pa, sa) = run();
        let (b, pb, sb) = run();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
        assert_eq!(a.steps, 9);
        assert!(a.max_accuracy.unwrap() >= a.average_accuracy.unwrap());
    }

    #[test]
    fn empty_sets_rejected() {
        let (mut m, mut st) = setup();
        let cfg = TrainConfig::default();
        assert!(matches!(
            fit(&mut m, &mut st, &[], &[], &[], &cfg),
            Err(TrainError::EmptySamples(_))
        ));
        assert!(evaluate(&m.net, &m.params, &[]).is_err());
    }

    #[test]
    fn uniform_head_predicts_down() {
        let (mut m, _) = setup();
        m.params.get_mut(m.net.head.w).value.data_mut().fill(0.0);
        let e = evaluate(&m.net, &m.params, &samples(8)).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert_eq!(e.confusion.up_predicted_down, 4);
        assert_eq!(e.confusion.down_predicted_down, 4);
    }

    #[test]
    fn evaluate_is_permutation_invariant() {
        let (m, _) = setup();
        let mut data = samples(9);
        let a = evaluate(&m.net, &m.params, &data).unwrap();
        data.reverse();
        data.swap(0, 4);
        assert_eq!(a, evaluate(&m.net, &m.params, &data).unwrap());
    }

    #[test]
    fn learns_keyword_task() {
        let h = Hyper {
            init_std: 0.5,
            ..hyper()
        };
        let mut m = build_variant(Variant::AtLstm, &h, 5, 4, 1).unwrap();
        let mut st = AdadeltaState::new(&m.params, AdadeltaConfig::default());
        let data = samples(16);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 4,
            optimizer: AdadeltaConfig {
                lr: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = fit(&mut m, &mut st, &data, &[], &[], &cfg).unwrap();
        let first = r.epochs[1].train_loss.unwrap();
        let last = r.epochs.last().unwrap().train_loss.unwrap();
        assert!(last < first, "{first} -> {last}");
        assert_eq!(r.best_epoch, 40);
        assert!(r.average_accuracy.is_none());
    }
}
