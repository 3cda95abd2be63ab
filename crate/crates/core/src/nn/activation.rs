//! Pointwise and channel-normalizing nonlinearities with their gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BETA_MIN: f64 = 1e-6;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Tensor> {
    x.zip_map(grad, |v, g| if v > 0.0 { g } else { 0.0 })
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Gradient through a sigmoid given its *output*.
pub fn sigmoid_backward(y: &Tensor, grad: &Tensor) -> Result<Tensor> {
    y.zip_map(grad, |s, g| g * s * (1.0 - s))
}

/// Parameters of a divisive normalization over channels:
/// `y_i = x_i / (beta_i + sum_j gamma_ij |x_j|^alpha)^eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct GdnParams {
    pub beta: Vec<f64>,
    /// Row-major `C x C`, `gamma[i * C + j]`.
    pub gamma: Vec<f64>,
    pub alpha_exp: f64,
    pub eps_exp: f64,
}

impl GdnParams {
    /// Classic GDN: `alpha = 2`, `eps = 1/2`.
    pub fn gdn(beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        GdnParams { beta, gamma, alpha_exp: 2.0, eps_exp: 0.5 }
    }

    /// Simplified variant with `alpha = eps = 1`.
    pub fn cgdn(beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        GdnParams { beta, gamma, alpha_exp: 1.0, eps_exp: 1.0 }
    }

    /// Near-identity start: `beta = 1`, `gamma = 0.1 I`.
    pub fn identity_init(channels: usize, alpha_exp: f64, eps_exp: f64) -> Self {
        let mut gamma = vec![0.0; channels * channels];
        for i in 0..channels {
            gamma[i * channels + i] = 0.1;
        }
        GdnParams { beta: vec![1.0; channels], gamma, alpha_exp, eps_exp }
    }

    pub fn channels(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.gamma.len() != c * c {
            return Err(Error::Shape(format!("gamma has {} entries for {c} channels", self.gamma.len())));
        }
        if self.beta.iter().any(|&b| !(b >= BETA_MIN)) {
            return Err(Error::Invalid(format!("GDN beta below {BETA_MIN}")));
        }
        if self.gamma.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::Invalid("GDN gamma must be nonnegative".into()));
        }
        Ok(())
    }

    /// Projects onto the feasible set `beta >= BETA_MIN`, `gamma >= 0`.
    pub fn project(beta: &mut [f64], gamma: &mut [f64]) {
        beta.iter_mut().for_each(|b| *b = b.max(BETA_MIN));
        gamma.iter_mut().for_each(|g| *g = g.max(0.0));
    }

    #[inline]
    fn pow_abs(&self, v: f64) -> f64 {
        if self.alpha_exp == 2.0 {
            v * v
        } else if self.alpha_exp == 1.0 {
            v.abs()
        } else {
            v.abs().powf(self.alpha_exp)
        }
    }

    /// d|v|^alpha / dv
    #[inline]
    fn pow_abs_deriv(&self, v: f64) -> f64 {
        if self.alpha_exp == 2.0 {
            2.0 * v
        } else if self.alpha_exp == 1.0 {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        } else {
            self.alpha_exp * v.abs().powf(self.alpha_exp - 1.0) * v.signum()
        }
    }

    #[inline]
    fn root(&self, u: f64) -> f64 {
        if self.eps_exp == 1.0 {
            u
        } else if self.eps_exp == 0.5 {
            u.sqrt()
        } else {
            u.powf(self.eps_exp)
        }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GdnCache {
    pow: Vec<f64>,
    norm: Vec<f64>,
}

fn normalizer(x: &Tensor, p: &GdnParams) -> Result<GdnCache> {
    p.validate()?;
    let c = x.channels();
    if c != p.channels() {
        return Err(Error::Shape(format!("GDN over {} channels applied to {c}", p.channels())));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("GDN input".into()));
    }
    let nv = x.shape().voxels();
    let pow: Vec<f64> = x.data().iter().map(|&v| p.pow_abs(v)).collect();
    let mut norm = vec![0.0; c * nv];
    for i in 0..c {
        let row = &mut norm[i * nv..(i + 1) * nv];
        row.iter_mut().for_each(|u| *u = p.beta[i]);
        for j in 0..c {
            let g = p.gamma[i * c + j];
            if g != 0.0 {
                for (u, &q) in row.iter_mut().zip(&pow[j * nv..(j + 1) * nv]) {
                    *u += g * q;
                }
            }
        }
    }
    Ok(GdnCache { pow, norm })
}

pub fn gdn_forward(x: &Tensor, p: &GdnParams) -> Result<(Tensor, GdnCache)> {
    let cache = normalizer(x, p)?;
    let mut y = x.clone();
    for (v, &u) in y.data_mut().iter_mut().zip(&cache.norm) {
        *v /= p.root(u);
    }
    Ok((y, cache))
}

pub fn gdn(x: &Tensor, p: &GdnParams) -> Result<Tensor> {
    Ok(gdn_forward(x, p)?.0)
}

/// `cgdn` is GDN with both exponents fixed to one.
pub fn cgdn(x: &Tensor, p: &GdnParams) -> Result<Tensor> {
    if p.alpha_exp != 1.0 || p.eps_exp != 1.0 {
        return Err(Error::Invalid("CGDN requires alpha = eps = 1".into()));
    }
    gdn(x, p)
}

#[derive(Clone, Debug)]
pub struct GdnGrads {
    pub input: Tensor,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

pub fn gdn_backward(x: &Tensor, grad: &Tensor, p: &GdnParams, cache: &GdnCache) -> Result<GdnGrads> {
    x.expect_shape(grad.shape(), "GDN backward")?;
    let c = x.channels();
    let nv = x.shape().voxels();
    let xd = x.data();
    let gd = grad.data();
    // t_i = g_i x_i eps u_i^(-eps-1)
    let t: Vec<f64> = (0..c * nv)
        .map(|k| {
            let u = cache.norm[k];
            gd[k] * xd[k] * p.eps_exp / (p.root(u) * u)
        })
        .collect();
    let mut gbeta = vec![0.0; c];
    let mut ggamma = vec![0.0; c * c];
    let mut gin = Tensor::zeros(x.shape());
    {
        let gi = gin.data_mut();
        for k in 0..c * nv {
            gi[k] = gd[k] / p.root(cache.norm[k]);
        }
    }
    let mut back = vec![0.0; c * nv];
    for i in 0..c {
        let ti = &t[i * nv..(i + 1) * nv];
        gbeta[i] = -ti.iter().sum::<f64>();
        for kch in 0..c {
            let pk = &cache.pow[kch * nv..(kch + 1) * nv];
            ggamma[i * c + kch] = -ti.iter().zip(pk).map(|(a, b)| a * b).sum::<f64>();
            let g = p.gamma[i * c + kch];
            if g != 0.0 {
                for (b, &tv) in back[kch * nv..(kch + 1) * nv].iter_mut().zip(ti) {
                    *b += g * tv;
                }
            }
        }
    }
    for (k, gi) in gin.data_mut().iter_mut().enumerate() {
        *gi -= back[k] * p.pow_abs_deriv(xd[k]);
    }
    Ok(GdnGrads { input: gin, beta: gbeta, gamma: ggamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Shape;

    fn vec2(a: f64, b: f64) -> Tensor {
        Tensor::from_vec(Shape::new(2, [1, 1, 1]), vec![a, b]).unwrap()
    }

    #[test]
    fn gdn_identity_when_gamma_zero() {
        let x = vec2(3.0, -4.0);
        for (a, e) in [(2.0, 0.5), (1.0, 1.0), (1.5, 0.7)] {
            let p = GdnParams { beta: vec![1.0; 2], gamma: vec![0.0; 4], alpha_exp: a, eps_exp: e };
            assert_eq!(gdn(&x, &p).unwrap(), x);
        }
    }

    #[test]
    fn gdn_two_channel_value() {
        let p = GdnParams::gdn(vec![1.0, 1.0], vec![1.0; 4]);
        let y = gdn(&vec2(3.0, 4.0), &p).unwrap();
        let d = 26f64.sqrt();
        assert!((y[0] - 3.0 / d).abs() < 1e-12);
        assert!((y[1] - 4.0 / d).abs() < 1e-12);
        assert!((y[0] - 0.58835).abs() < 1e-5 && (y[1] - 0.78446).abs() < 1e-5);
    }

    #[test]
    fn cgdn_scalar_values() {
        let p = GdnParams::cgdn(vec![1.0], vec![1.0]);
        let one = Tensor::from_vec(Shape::new(1, [1, 1, 1]), vec![1.0]).unwrap();
        assert_eq!(cgdn(&one, &p).unwrap()[0], 0.5);
        let m2 = Tensor::from_vec(Shape::new(1, [1, 1, 1]), vec![-2.0]).unwrap();
        assert!((cgdn(&m2, &p).unwrap()[0] + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cgdn_shrinks_when_gamma_active() {
        let p = GdnParams::cgdn(vec![0.5, 2.0], vec![0.0, 0.3, 0.2, 0.0]);
        let x = vec2(1.5, -0.7);
        let y = cgdn(&x, &p).unwrap();
        assert!(y[0].abs() < 1.5 / 0.5);
        assert!(y[1].abs() < 0.7 / 2.0);
    }

    #[test]
    fn rejects_invalid_params_and_input() {
        let bad = GdnParams::gdn(vec![0.0], vec![1.0]);
        let x = Tensor::from_vec(Shape::new(1, [1, 1, 1]), vec![1.0]).unwrap();
        assert!(gdn(&x, &bad).is_err());
        let neg = GdnParams::gdn(vec![1.0], vec![-0.1]);
        assert!(gdn(&x, &neg).is_err());
        let nan = Tensor::from_vec(Shape::new(1, [1, 1, 1]), vec![f64::NAN]).unwrap();
        assert!(matches!(gdn(&nan, &GdnParams::gdn(vec![1.0], vec![0.0])), Err(Error::NonFinite(_))));
        assert!(cgdn(&x, &GdnParams::gdn(vec![1.0], vec![0.0])).is_err());
    }

    #[test]
    fn projection_restores_constraints() {
        let mut b = vec![-1.0, 0.5];
        let mut g = vec![-0.2, 0.1];
        GdnParams::project(&mut b, &mut g);
        assert_eq!(b, vec![BETA_MIN, 0.5]);
        assert_eq!(g, vec![0.0, 0.1]);
    }
}
