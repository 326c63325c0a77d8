use super::Matrix;
use crate::error::{Error, Result};

/// Central-difference gradient of `loss` at `theta`.
///
/// Each coordinate is perturbed by `±eps` in turn; the returned matrix has the
/// shape of `theta`.
pub fn finite_diff_grad<F>(mut loss: F, theta: &Matrix, eps: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be positive and finite, got {eps}")));
    }
    let mut probe = theta.clone();
    let mut grad = Matrix::zeros(theta.rows(), theta.cols());
    for i in 0..theta.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + eps;
        let up = loss(&probe);
        probe.as_mut_slice()[i] = orig - eps;
        let down = loss(&probe);
        probe.as_mut_slice()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss evaluation at coordinate {i}")));
        }
        grad.as_mut_slice()[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::sigmoid;

    #[test]
    fn square() {
        let g = finite_diff_grad(|t| t.get(0, 0).powi(2), &Matrix::column(&[3.0]), 1e-5).unwrap();
        assert!((g.get(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_gives_zero() {
        let g = finite_diff_grad(|_| 4.2, &Matrix::column(&[1.0, -2.0, 0.5]), 1e-5).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let g = finite_diff_grad(|t| sigmoid(t.get(0, 0)), &Matrix::column(&[0.0]), 1e-5).unwrap();
        assert!((g.get(0, 0) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_loss_with_coordinate() {
        let theta = Matrix::column(&[1.0, 0.0]);
        // finite only while the second coordinate stays at zero
        let err = finite_diff_grad(|t| if t.get(1, 0) > 0.0 { f64::NAN } else { t.get(0, 0) }, &theta, 1e-5).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }

    #[test]
    fn rejects_bad_eps() {
        assert!(finite_diff_grad(|_| 0.0, &Matrix::column(&[1.0]), 0.0).is_err());
    }
}
