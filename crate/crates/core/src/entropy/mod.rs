//! Quantization, learned priors, rate estimation and range coding.

pub mod cdf;
pub mod factorized;
pub mod range_coder;

pub use cdf::{gaussian_tables, scale_of_bin, scale_bin, CdfTable, SCALE_BINS, SCALE_MAX, SCALE_MIN};
pub use factorized::FactorizedPrior;
pub use range_coder::{range_decode, range_encode, read_stream, write_stream};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Lower bound applied to every likelihood before taking logs.
pub const LIKELIHOOD_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive uniform noise in `(-1/2, 1/2)`; gradient is the identity.
    Train,
    /// Round half away from zero.
    Test,
}

pub fn quantize(y: &Tensor, mode: QuantMode, seed: u64) -> Result<Tensor> {
    if !y.all_finite() {
        return Err(Error::NonFinite("quantizer input".into()));
    }
    Ok(match mode {
        QuantMode::Test => y.map(f64::round),
        QuantMode::Train => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = y.clone();
            out.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
            out
        }
    })
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Mass of the unit bin around `y` under `N(0, sigma^2)`, computed on the
/// lower tail for accuracy, and its derivatives in `y` and `sigma`
/// (unfloored).
pub fn gaussian_bin(y: f64, sigma: f64) -> (f64, f64, f64) {
    let a = y.abs();
    let u = (0.5 - a) / sigma;
    let l = (-0.5 - a) / sigma;
    let p = phi(u) - phi(l);
    let (du, dl) = (density(u), density(l));
    // d/da of phi(u) - phi(l) is -(du - dl) / sigma; chain through |y|.
    let dp_dy = -(du - dl) / sigma * if y < 0.0 { -1.0 } else { 1.0 };
    let dp_ds = -(u * du - l * dl) / sigma;
    (p, dp_dy, dp_ds)
}

fn check_pair(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    a.expect_shape(b.shape(), what)?;
    if !a.all_finite() || !b.all_finite() {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// `p = Phi((y + 1/2) / sigma) - Phi((y - 1/2) / sigma)`, floored at 1e-9.
pub fn likelihood_gaussian(y: &Tensor, sigma: &Tensor) -> Result<Tensor> {
    check_pair(y, sigma, "gaussian likelihood")?;
    y.zip_map(sigma, |v, s| gaussian_bin(v, s).0.max(LIKELIHOOD_FLOOR))
}

/// `-sum log2 p` over every element of every tensor.
pub fn rate_bits(likelihoods: &[&Tensor]) -> f64 {
    likelihoods.iter().flat_map(|t| t.data()).map(|p| -p.log2()).sum()
}

/// Derivative of `-log2(max(p, floor))` with respect to `p`.
pub(crate) fn bits_grad(p: f64) -> f64 {
    if p > LIKELIHOOD_FLOOR {
        -1.0 / (p * std::f64::consts::LN_2)
    } else {
        0.0
    }
}

/// Rate of `y` under the Gaussian scale model with gradients.
pub struct GaussianRate {
    pub bits: f64,
    pub grad_y: Tensor,
    pub grad_sigma: Tensor,
}

pub fn gaussian_rate(y: &Tensor, sigma: &Tensor) -> Result<GaussianRate> {
    check_pair(y, sigma, "gaussian rate")?;
    let mut bits = 0.0;
    let mut gy = Tensor::zeros(y.shape());
    let mut gs = Tensor::zeros(y.shape());
    for i in 0..y.data().len() {
        let (p, dy, ds) = gaussian_bin(y[i], sigma[i]);
        bits -= p.max(LIKELIHOOD_FLOOR).log2();
        let g = bits_grad(p);
        gy[i] = g * dy;
        gs[i] = g * ds;
    }
    Ok(GaussianRate { bits, grad_y: gy, grad_sigma: gs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::finite_difference_check;
    use crate::nn::tensor::Shape;

    fn t(v: Vec<f64>) -> Tensor {
        Tensor::from_vec(Shape::new(v.len(), [1, 1, 1]), v).unwrap()
    }

    #[test]
    fn quantizer_modes() {
        let y = t(vec![1.4, -1.5, 2.5, -0.2]);
        assert_eq!(quantize(&y, QuantMode::Test, 0).unwrap().data(), &[1.0, -2.0, 3.0, -0.0]);
        let a = quantize(&y, QuantMode::Train, 7).unwrap();
        assert_eq!(a, quantize(&y, QuantMode::Train, 7).unwrap());
        assert!(a.data().iter().zip(y.data()).all(|(q, v)| (q - v).abs() <= 0.5));
    }

    #[test]
    fn gaussian_values_and_total() {
        let p = likelihood_gaussian(&t(vec![0.0, 1.0]), &t(vec![1.0, 1.0])).unwrap();
        assert!((p[0] - 0.382925).abs() < 1e-6);
        assert!((p[1] - 0.241730).abs() < 1e-6);
        let total: f64 = (-30..=30).map(|v| gaussian_bin(v as f64, 1.0).0).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_bits(&[&t(vec![0.5, 0.5])]), 2.0);
        assert_eq!(rate_bits(&[&t(vec![1.0; 3])]), 0.0);
    }

    #[test]
    fn gaussian_rate_gradients() {
        let y = vec![0.3, -1.7, 2.2, 0.9];
        let s = vec![0.8, 1.5, 0.6, 3.0];
        let n = y.len();
        let mut x = y.clone();
        x.extend(&s);
        let f = |x: &[f64]| gaussian_rate(&t(x[..n].to_vec()), &t(x[n..].to_vec())).unwrap().bits;
        let r = gaussian_rate(&t(y), &t(s)).unwrap();
        let mut analytic = r.grad_y.into_vec();
        analytic.extend(r.grad_sigma.into_vec());
        let err = finite_difference_check(f, &x, &analytic, 1e-5, &(0..2 * n).collect::<Vec<_>>());
        assert!(err < 1e-6, "{err}");
    }
}
