//! Bjøntegaard delta rate and PSNR from cubic least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rate-distortion samples with strictly increasing positive rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// `points` are `(bits per point, PSNR dB)`; they are sorted by rate.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Invalid(format!("an RD curve needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|&(r, d)| !(r > 0.0 && r.is_finite() && d.is_finite())) {
            return Err(Error::Invalid("RD points need positive finite rates and finite PSNR".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Invalid("RD curve rates must be strictly increasing".into()));
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Cubic `y = c0 + c1 t + c2 t² + c3 t³` in the normalized variable
/// `t = (x - shift) / scale`.
struct Cubic {
    coef: [f64; 4],
    shift: f64,
    scale: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len() as f64;
        let shift = xs.iter().sum::<f64>() / n;
        let scale = (xs.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / n).sqrt().max(f64::MIN_POSITIVE);
        let a = DMatrix::from_fn(xs.len(), 4, |i, j| ((xs[i] - shift) / scale).powi(j as i32));
        let b = DVector::from_column_slice(ys);
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Invalid(format!("cubic fit failed: {e}")))?;
        Ok(Cubic { coef: [sol[0], sol[1], sol[2], sol[3]], shift, scale })
    }

    /// Exact integral over `[x0, x1]`.
    fn integral(&self, x0: f64, x1: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.shift) / self.scale;
            self.scale * self.coef.iter().enumerate().map(|(j, c)| c * t.powi(j as i32 + 1) / (j as f64 + 1.0)).sum::<f64>()
        };
        anti(x1) - anti(x0)
    }
}

fn overlap(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = (min(a).max(min(b)), max(a).min(max(b)));
    if !(hi > lo) {
        return Err(Error::Invalid(format!("RD curves do not overlap ({lo} .. {hi})")));
    }
    Ok((lo, hi))
}

fn average_gap(ref_x: &[f64], ref_y: &[f64], test_x: &[f64], test_y: &[f64]) -> Result<f64> {
    let (lo, hi) = overlap(ref_x, test_x)?;
    let fr = Cubic::fit(ref_x, ref_y)?;
    let ft = Cubic::fit(test_x, test_y)?;
    Ok((ft.integral(lo, hi) - fr.integral(lo, hi)) / (hi - lo))
}

/// Average rate difference of `test` against `reference` in percent over
/// the overlapping PSNR interval.
pub fn bd_rate(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    let split = |c: &RdCurve| -> (Vec<f64>, Vec<f64>) { c.points.iter().map(|&(r, d)| (d, r.log10())).unzip() };
    let (rx, ry) = split(reference);
    let (tx, ty) = split(test);
    let delta = average_gap(&rx, &ry, &tx, &ty)?;
    Ok((10f64.powf(delta) - 1.0) * 100.0)
}

/// Average PSNR difference of `test` against `reference` in dB over the
/// overlapping log-rate interval.
pub fn bd_psnr(reference: &RdCurve, test: &RdCurve) -> Result<f64> {
    let split = |c: &RdCurve| -> (Vec<f64>, Vec<f64>) { c.points.iter().map(|&(r, d)| (r.log10(), d)).unzip() };
    let (rx, ry) = split(reference);
    let (tx, ty) = split(test);
    average_gap(&rx, &ry, &tx, &ty)
}
