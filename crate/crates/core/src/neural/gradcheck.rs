//! Central finite-difference gradient checking.

/// Denominator floor for relative error, so components whose true gradient
/// is ~0 are judged on absolute error instead of blowing up.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Central difference `(f(x + εe_i) − f(x − εe_i)) / 2ε` for every `i`.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = z[i];
            z[i] = orig + eps;
            let up = f(&z);
            z[i] = orig - eps;
            let down = f(&z);
            z[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `|a − n| / max(|a|, |n|, floor)` for one component.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest relative error between `analytic` and the central-difference
/// gradient of `f` at `x`.
pub fn max_relative_error<F>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    numeric_gradient(f, x, eps)
        .iter()
        .zip(analytic)
        .map(|(&n, &a)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_quadratic() {
        let f = |z: &[f64]| z[0] * z[0] + 3.0 * z[0] * z[1];
        let g = numeric_gradient(f, &[1.5, -2.0], 1e-5);
        assert!((g[0] - (3.0 - 6.0)).abs() < 1e-8);
        assert!((g[1] - 4.5).abs() < 1e-8);
        assert!(max_relative_error(f, &[1.5, -2.0], &[-3.0, 4.5], 1e-5) < 1e-8);
        assert!(max_relative_error(f, &[1.5, -2.0], &[-3.0, 4.0], 1e-5) > 0.1);
    }
}
