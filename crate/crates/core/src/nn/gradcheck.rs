//! Central finite-difference verification of analytic gradients.

/// Numerical partial derivative of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut probe = x.to_vec();
    probe[i] = x[i] + eps;
    let up = f(&probe);
    probe[i] = x[i] - eps;
    let down = f(&probe);
    (up - down) / (2.0 * eps)
}

/// Max over `coords` of `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_difference_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    coords: &[usize],
) -> f64 {
    coords
        .iter()
        .map(|&i| {
            let numeric = central_difference(&mut f, x, i, eps);
            (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Evenly spread coordinate subset of size at most `max`.
pub fn sample_coords(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    (0..max).map(|k| k * len / max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.5, -2.0, 3.25];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let err = finite_difference_check(f, &[1.0, 2.0, -1.0], &w, 1e-4, &[0, 1, 2]);
        assert!(err < 1e-10);
    }

    #[test]
    fn detects_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0];
        let err = finite_difference_check(f, &[3.0], &[5.0], 1e-4, &[0]);
        assert!(err > 0.1);
    }
}
