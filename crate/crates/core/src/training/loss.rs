use super::{Result, TrainError};
use crate::tensor::PROB_FLOOR;

fn check_label(label: [f64; 2]) -> Result<()> {
    if label == [1.0, 0.0] || label == [0.0, 1.0] {
        Ok(())
    } else {
        Err(TrainError::InvalidLabel(label.to_vec()))
    }
}

/// `−(y₀·ln ŷ₀ + y₁·ln ŷ₁)` with probabilities clamped below at `1e-12`.
pub fn cross_entropy(pred: [f64; 2], label: [f64; 2]) -> Result<f64> {
    check_label(label)?;
    let loss = -(label[0] * pred[0].max(PROB_FLOOR).ln() + label[1] * pred[1].max(PROB_FLOOR).ln());
    Ok(loss)
}

/// Mean loss over a batch. Errors on an empty batch.
pub fn mean_cross_entropy(batch: &[([f64; 2], [f64; 2])]) -> Result<f64> {
    if batch.is_empty() {
        return Err(TrainError::EmptySamples("loss batch"));
    }
    let mut total = 0.0;
    for &(p, y) in batch {
        total += cross_entropy(p, y)?;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        assert!(cross_entropy([1.0, 0.0], [1.0, 0.0]).unwrap().abs() < 1e-12);
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy([0.5, 0.5], [0.0, 1.0]).unwrap() - ln2).abs() < 1e-12);
        let mean = mean_cross_entropy(&[([1.0, 0.0], [1.0, 0.0]), ([0.5, 0.5], [1.0, 0.0])]).unwrap();
        assert!((mean - 0.346574).abs() < 1e-6);
        assert!((mean - ln2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_zero_probability() {
        let l = cross_entropy([0.0, 1.0], [1.0, 0.0]).unwrap();
        assert!((l - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn rejects_soft_labels() {
        assert!(cross_entropy([0.5, 0.5], [0.5, 0.5]).is_err());
        assert!(mean_cross_entropy(&[]).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative_and_monotone(p in 1e-9f64..1.0, q in 1e-9f64..1.0, up in any::<bool>()) {
            let y = if up { [1.0, 0.0] } else { [0.0, 1.0] };
            let pair = |x: f64| if up { [x, 1.0 - x] } else { [1.0 - x, x] };
            let lp = cross_entropy(pair(p), y).unwrap();
            let lq = cross_entropy(pair(q), y).unwrap();
            prop_assert!(lp >= 0.0 && lq >= 0.0);
            if p < q {
                prop_assert!(lp > lq);
            }
        }
    }
}
