//! Central finite differences, used as the reference for analytic gradients.

/// `(L(p + h e_i) - L(p - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<F>(mut loss_fn: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = loss_fn(&probe);
            probe[i] = orig - h;
            let minus = loss_fn(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest entrywise relative error `|a - n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries that are both essentially zero from dominating.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(max_relative_error(&[0.0], &[1e-12], 1e-6), 1e-6);
        assert!((max_relative_error(&[2.0], &[1.0], 1e-6) - 0.5).abs() < 1e-15);
    }
}
