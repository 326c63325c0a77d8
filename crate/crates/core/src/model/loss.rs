use super::TaskLayout;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before any log.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

#[inline]
pub(crate) fn inside_clamp(p: f64) -> bool {
    p > PROB_FLOOR && p < 1.0 - PROB_FLOOR
}

/// Binary cross-entropy of the target prediction.
pub fn target_loss(y_hat: f64, y: bool) -> f64 {
    let q = clamp_prob(y_hat);
    if y {
        -q.ln()
    } else {
        -(1.0 - q).ln()
    }
}

/// Mean over tasks of the per-task categorical cross-entropy. `probs` holds
/// every class probability in layout order; `targets` the true class per task.
pub fn gpsr_loss(probs: &[f64], targets: &[u16], layout: &TaskLayout) -> Result<f64> {
    if probs.len() != layout.total() {
        return Err(Error::Shape {
            op: "gpsr_loss",
            left: (probs.len(), 1),
            right: (layout.total(), 1),
        });
    }
    if targets.len() != layout.n_tasks() {
        return Err(Error::Shape {
            op: "gpsr_loss",
            left: (targets.len(), 1),
            right: (layout.n_tasks(), 1),
        });
    }
    let mut sum = 0.0;
    for ((off, m), &c) in layout.blocks().zip(targets) {
        let c = c as usize;
        if c >= m {
            return Err(Error::invalid("gpsr target", format!("class {c} outside a {m}-class task")));
        }
        sum += -clamp_prob(probs[off + c]).ln();
    }
    Ok(sum / layout.n_tasks() as f64)
}

/// `p * err_y + (1 - p) * err_x`.
pub fn combined_loss(p: f64, err_y: f64, err_x_mean: f64) -> Result<f64> {
    check_weight(p)?;
    Ok(p * err_y + (1.0 - p) * err_x_mean)
}

pub(crate) fn check_weight(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid("p", format!("loss weight must lie in [0, 1], got {p}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn target_examples() {
        assert!((target_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((target_loss(0.25, true) - 4f64.ln()).abs() < 1e-12);
        assert!(target_loss(1e-300, false) < 1e-11);
        assert!(target_loss(0.0, true).is_finite());
    }

    #[test]
    fn gpsr_examples() {
        let one = TaskLayout::new(vec![3]).unwrap();
        let l = gpsr_loss(&[0.5, 0.25, 0.25], &[1], &one).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);

        let two = TaskLayout::new(vec![2, 2]).unwrap();
        assert_eq!(gpsr_loss(&[1.0, 0.0, 0.0, 1.0], &[0, 1], &two).unwrap(), -(1.0 - PROB_FLOOR).ln());
        let l = gpsr_loss(&[0.5, 0.5, 0.75, 0.25], &[0, 1], &two).unwrap();
        assert!((l - 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gpsr_layout_mismatch() {
        let two = TaskLayout::new(vec![2, 2]).unwrap();
        assert!(gpsr_loss(&[0.5; 3], &[0, 0], &two).is_err());
        assert!(gpsr_loss(&[0.5; 4], &[0], &two).is_err());
        assert!(gpsr_loss(&[0.5; 4], &[0, 2], &two).is_err());
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_loss(0.8, 1.0, 0.5).unwrap(), 0.9);
        assert!(combined_loss(1.1, 1.0, 0.5).is_err());
        assert!(combined_loss(-0.1, 1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn degenerate_weights_are_bit_exact(a in 0.0f64..50.0, b in 0.0f64..50.0) {
            prop_assert_eq!(combined_loss(1.0, a, b).unwrap().to_bits(), a.to_bits());
            prop_assert_eq!(combined_loss(0.0, a, b).unwrap().to_bits(), b.to_bits());
        }

        #[test]
        fn losses_non_negative(q in 0.0f64..=1.0, y: bool, p in 0.0f64..=1.0, b in 0.0f64..10.0) {
            let ey = target_loss(q, y);
            prop_assert!(ey >= 0.0);
            let layout = TaskLayout::new(vec![2]).unwrap();
            prop_assert!(gpsr_loss(&[q, 1.0 - q], &[y as u16], &layout).unwrap() >= 0.0);
            prop_assert!(combined_loss(p, ey, b).unwrap() >= 0.0);
        }
    }
}
