use crate::error::{Error, Result};

/// Central-difference gradient of `loss_fn` at `theta` with step `h`.
///
/// Coordinate `i` is `(f(θ + h eᵢ) − f(θ − h eᵢ)) / (2h)`. Used as an
/// independent oracle for the hand-derived gradients.
pub fn finite_diff_grad<F>(mut loss_fn: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::contract(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = loss_fn(&probe);
        probe[i] = orig - h;
        let minus = loss_fn(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::OracleFailure { coordinate: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a − b| / max(|a|, |b|, floor)`; the floor keeps near-zero coordinates
/// from dominating a relative comparison.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff_grad(|t| t.iter().map(|v| v * v).sum(), &[1.0, -2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
        assert!((g[1] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function() {
        let g = finite_diff_grad(|_| 3.25, &[0.3, -1.0, 8.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn product_rule() {
        let g = finite_diff_grad(|t| t[0] * t[1], &[3.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn closed_forms_within_relative_tolerance() {
        let theta = [0.7, -1.3, 2.1];
        let g = finite_diff_grad(|t| t[0].sin() * t[1].exp() + t[2].powi(3), &theta, 1e-5).unwrap();
        let exact = [
            theta[0].cos() * theta[1].exp(),
            theta[0].sin() * theta[1].exp(),
            3.0 * theta[2] * theta[2],
        ];
        for (a, b) in g.iter().zip(exact) {
            assert!(relative_error(*a, b, 1e-12) < 1e-5);
        }
    }

    #[test]
    fn non_finite_loss_fails() {
        let err = finite_diff_grad(|t| if t[0] > 0.5 { f64::NAN } else { 0.0 }, &[0.5], 1e-3);
        assert_eq!(err, Err(Error::OracleFailure { coordinate: 0 }));
    }

    #[test]
    fn non_positive_step_rejected() {
        assert!(finite_diff_grad(|_| 0.0, &[1.0], 0.0).is_err());
    }
}
