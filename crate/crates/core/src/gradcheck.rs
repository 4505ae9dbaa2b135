//! Central finite-difference gradient checking.
//!
//! The numeric gradient here is computed purely from scalar function
//! evaluations and shares no code with the analytic gradients it validates.

/// Central-difference gradient of `f` at `x`: `(f(x+h) - f(x-h)) / 2h`
/// per coordinate.
pub fn central_difference<F>(x: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let original = probe[i];
        probe[i] = original + step;
        let plus = f(&probe);
        probe[i] = original - step;
        let minus = f(&probe);
        probe[i] = original;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// `|a - b| / max(|a| + |b|, floor)` — symmetric relative error with an
/// absolute floor so near-zero pairs compare absolutely.
pub fn relative_error_floored(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(floor)
}

/// [`relative_error_floored`] with the default floor of 1e-8, suitable for
/// loss gradients whose entries are either exactly structural zeros or well
/// above the finite-difference noise floor.
pub fn relative_error(a: f64, b: f64) -> f64 {
    relative_error_floored(a, b, 1e-8)
}

/// Worst per-coordinate [`relative_error`] between two gradients.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    max_relative_error_floored(analytic, numeric, 1e-8)
}

/// Worst per-coordinate relative error with an explicit floor.
///
/// End-to-end parameter gradients can contain near-cancelling coordinates
/// whose true magnitude sits below the central-difference noise floor
/// (~1e-10 for unit-scale objectives at step 1e-6); a floor of 1e-3 makes
/// the comparison absolute there instead of amplifying that noise.
pub fn max_relative_error_floored(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| relative_error_floored(a, n, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        // f(x) = sum x_i^2 has gradient 2x; central differences are exact for
        // quadratics up to roundoff.
        let x = vec![0.3, -1.2, 2.5];
        let grad = central_difference(&x, 1e-6, |p| p.iter().map(|v| v * v).sum());
        let expected: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!(max_relative_error(&expected, &grad) < 1e-9);
    }

    #[test]
    fn relative_error_uses_absolute_floor_near_zero() {
        assert!(relative_error(0.0, 0.0) == 0.0);
        assert!(relative_error(1e-12, -1e-12) < 1e-3);
    }
}
