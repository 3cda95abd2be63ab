//! Per-channel monotone CDF network used as the prior for the hyper-latent.
//!
//! Each channel owns a small network `R -> R` with layer widths
//! `1 -> 3 -> 3 -> 1`. Layer `k` computes `pre = softplus(M_k) h + b_k`;
//! the two hidden layers then apply the monotone nonlinearity
//! `h' = pre + tanh(a_k) * tanh(pre)` and the last layer's output is a logit,
//! so `CDF(x) = sigmoid(logit(x))`. Positive matrices and `tanh(a) > -1`
//! make the logit nondecreasing in `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cdf::CdfTable;
use super::{bits_grad, LIKELIHOOD_FLOOR};
use crate::error::{Error, Result};
use crate::nn::activation::{sigmoid_scalar, softplus_scalar};
use crate::nn::tensor::{Param, Tensor};

/// Layer widths of the per-channel network.
pub const WIDTHS: [usize; 4] = [1, 3, 3, 1];
const LAYERS: usize = WIDTHS.len() - 1;
pub const DEFAULT_INIT_SCALE: f64 = 3.0;
/// Half-width of the integer range searched when building tables.
const TABLE_SEARCH: i32 = 4096;

#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    channels: usize,
    /// `matrices[k]` has dims `[channels, WIDTHS[k+1], WIDTHS[k]]`.
    matrices: Vec<Param>,
    /// `biases[k]` has dims `[channels, WIDTHS[k+1]]`.
    biases: Vec<Param>,
    /// `factors[k]` has dims `[channels, WIDTHS[k+1]]` for hidden layers.
    factors: Vec<Param>,
}

/// Activations of one channel network evaluated at one point.
struct Trace {
    /// Layer inputs, `inputs[k]` feeds layer `k`.
    inputs: [Vec<f64>; LAYERS],
    /// Pre-activations per layer.
    pre: [Vec<f64>; LAYERS],
}

fn dsoftplus(x: f64) -> f64 {
    sigmoid_scalar(x)
}

fn dsigmoid(x: f64) -> f64 {
    let s = sigmoid_scalar(x);
    s * (1.0 - s)
}

impl FactorizedPrior {
    pub fn new(channels: usize, seed: u64) -> Self {
        Self::with_init_scale(channels, DEFAULT_INIT_SCALE, seed)
    }

    pub fn with_init_scale(channels: usize, init_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5052_494f_5221);
        let scale = init_scale.powf(1.0 / LAYERS as f64);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for k in 0..LAYERS {
            let (fan_in, fan_out) = (WIDTHS[k], WIDTHS[k + 1]);
            let init = (1.0 / scale / fan_out as f64).exp_m1().ln();
            matrices.push(Param::new(
                format!("prior.matrix{k}"),
                vec![channels, fan_out, fan_in],
                vec![init; channels * fan_out * fan_in],
            ));
            biases.push(Param::new(
                format!("prior.bias{k}"),
                vec![channels, fan_out],
                (0..channels * fan_out).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            ));
            if k + 1 < LAYERS {
                factors.push(Param::zeros(format!("prior.factor{k}"), vec![channels, fan_out]));
            }
        }
        FactorizedPrior { channels, matrices, biases, factors }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn params(&self) -> Vec<&Param> {
        self.matrices.iter().chain(&self.biases).chain(&self.factors).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.matrices.iter_mut().chain(self.biases.iter_mut()).chain(self.factors.iter_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn forward(&self, c: usize, x: f64) -> (f64, Trace) {
        let mut h = vec![x];
        let mut inputs: [Vec<f64>; LAYERS] = Default::default();
        let mut pres: [Vec<f64>; LAYERS] = Default::default();
        for k in 0..LAYERS {
            let (fi, fo) = (WIDTHS[k], WIDTHS[k + 1]);
            let m = &self.matrices[k].value[c * fo * fi..(c + 1) * fo * fi];
            let b = &self.biases[k].value[c * fo..(c + 1) * fo];
            let pre: Vec<f64> =
                (0..fo).map(|o| b[o] + (0..fi).map(|i| softplus_scalar(m[o * fi + i]) * h[i]).sum::<f64>()).collect();
            inputs[k] = h;
            h = if k + 1 < LAYERS {
                let a = &self.factors[k].value[c * fo..(c + 1) * fo];
                pre.iter().zip(a).map(|(&p, &a)| p + a.tanh() * p.tanh()).collect()
            } else {
                pre.clone()
            };
            pres[k] = pre;
        }
        (h[0], Trace { inputs, pre: pres })
    }

    /// Accumulates parameter gradients for `d(loss)/d(logit) = g` and
    /// returns `d(loss)/dx`.
    fn backward(&mut self, c: usize, trace: &Trace, g: f64) -> f64 {
        let mut grad = vec![g];
        for k in (0..LAYERS).rev() {
            let (fi, fo) = (WIDTHS[k], WIDTHS[k + 1]);
            let pre = &trace.pre[k];
            // Through the monotone nonlinearity.
            let gpre: Vec<f64> = if k + 1 < LAYERS {
                let a = &self.factors[k].value[c * fo..(c + 1) * fo];
                let da: Vec<f64> = (0..fo)
                    .map(|o| grad[o] * pre[o].tanh() * (1.0 - a[o].tanh().powi(2)))
                    .collect();
                let gp = (0..fo).map(|o| grad[o] * (1.0 + a[o].tanh() * (1.0 - pre[o].tanh().powi(2)))).collect();
                let fg = &mut self.factors[k].grad[c * fo..(c + 1) * fo];
                fg.iter_mut().zip(da).for_each(|(s, d)| *s += d);
                gp
            } else {
                grad.clone()
            };
            let h = &trace.inputs[k];
            let bg = &mut self.biases[k].grad[c * fo..(c + 1) * fo];
            bg.iter_mut().zip(&gpre).for_each(|(s, d)| *s += d);
            let mut gin = vec![0.0; fi];
            let mv = self.matrices[k].value[c * fo * fi..(c + 1) * fo * fi].to_vec();
            let mg = &mut self.matrices[k].grad[c * fo * fi..(c + 1) * fo * fi];
            for o in 0..fo {
                for i in 0..fi {
                    let w = mv[o * fi + i];
                    mg[o * fi + i] += gpre[o] * h[i] * dsoftplus(w);
                    gin[i] += gpre[o] * softplus_scalar(w);
                }
            }
            grad = gin;
        }
        grad[0]
    }

    /// Cumulative probability of channel `c` below `x`.
    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        sigmoid_scalar(self.forward(c, x).0)
    }

    /// Unfloored mass of the unit bin centred on `x`, evaluated as a
    /// difference of upper-tail values when that is more accurate.
    fn bin(u: f64, l: f64) -> f64 {
        let s = if u + l > 0.0 { -1.0 } else { 1.0 };
        (sigmoid_scalar(s * u) - sigmoid_scalar(s * l)).abs()
    }

    pub fn bin_mass(&self, c: usize, x: f64) -> f64 {
        Self::bin(self.forward(c, x + 0.5).0, self.forward(c, x - 0.5).0)
    }

    fn check(&self, z: &Tensor) -> Result<()> {
        if z.channels() != self.channels {
            return Err(Error::Shape(format!("prior has {} channels, input {}", self.channels, z.channels())));
        }
        if !z.all_finite() {
            return Err(Error::NonFinite("factorized prior input".into()));
        }
        Ok(())
    }

    /// `p = CDF(z + 1/2) - CDF(z - 1/2)` per channel, floored at 1e-9.
    pub fn likelihood(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let mut out = Tensor::zeros(z.shape());
        for c in 0..self.channels {
            for (o, &x) in out.channel_mut(c).iter_mut().zip(z.channel(c)) {
                *o = self.bin_mass(c, x).max(LIKELIHOOD_FLOOR);
            }
        }
        Ok(out)
    }

    /// Rate of `z` in bits. Parameter gradients are accumulated into the
    /// prior's `grad` buffers; the gradient with respect to `z` is returned.
    pub fn rate_and_grad(&mut self, z: &Tensor) -> Result<(f64, Tensor)> {
        self.check(z)?;
        let mut bits = 0.0;
        let mut gz = Tensor::zeros(z.shape());
        for c in 0..self.channels {
            let xs = z.channel(c).to_vec();
            for (j, x) in xs.into_iter().enumerate() {
                let (u, tu) = self.forward(c, x + 0.5);
                let (l, tl) = self.forward(c, x - 0.5);
                let p = Self::bin(u, l);
                bits -= p.max(LIKELIHOOD_FLOOR).log2();
                let g = bits_grad(p);
                if g == 0.0 {
                    continue;
                }
                // p = sigmoid(u) - sigmoid(l) in either sign convention.
                let dx = self.backward(c, &tu, g * dsigmoid(u)) + self.backward(c, &tl, -g * dsigmoid(l));
                gz.channel_mut(c)[j] = dx;
            }
        }
        Ok((bits, gz))
    }

    /// One coding table per channel.
    pub fn cdf_tables(&self) -> Result<Vec<CdfTable>> {
        (0..self.channels).map(|c| CdfTable::from_cdf(|x| self.cdf(c, x), TABLE_SEARCH)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::phi;
    use crate::nn::adam::AdamState;
    use crate::nn::gradcheck::finite_difference_check;
    use crate::nn::tensor::Shape;

    #[test]
    fn fresh_prior_pmf_sums_to_one_and_is_monotone() {
        let prior = FactorizedPrior::new(4, 1);
        for c in 0..4 {
            let total: f64 = (-50..=50).map(|v| prior.bin_mass(c, v as f64)).sum();
            assert!((total - 1.0).abs() < 1e-6, "channel {c}: {total}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-60.0..60.0);
            let b: f64 = a + rng.gen_range(0.0..10.0);
            assert!(prior.cdf(1, a) <= prior.cdf(1, b));
        }
        assert_eq!(prior.param_count(), 4 * (3 + 9 + 3 + 3 + 3 + 1 + 3 + 3));
    }

    #[test]
    fn likelihood_in_range() {
        let prior = FactorizedPrior::new(2, 5);
        let z = Tensor::from_vec(Shape::new(2, [2, 1, 1]), vec![0.0, 1e6, -3.0, 2.0]).unwrap();
        let p = prior.likelihood(&z).unwrap();
        assert!(p.data().iter().all(|&v| (LIKELIHOOD_FLOOR..=1.0).contains(&v)));
        assert_eq!(p[1], LIKELIHOOD_FLOOR);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut prior = FactorizedPrior::new(2, 9);
        // Move factors off zero so every term contributes.
        for f in &mut prior.factors {
            f.value.iter_mut().enumerate().for_each(|(i, v)| *v = 0.3 - 0.1 * i as f64);
        }
        let z = Tensor::from_vec(Shape::new(2, [3, 1, 1]), vec![0.2, -1.3, 2.6, 0.0, 1.1, -0.7]).unwrap();
        prior.zero_grad();
        let (_, gz) = prior.rate_and_grad(&z).unwrap();
        // Flatten z and parameters into one vector.
        let mut x = z.data().to_vec();
        let mut analytic = gz.data().to_vec();
        for p in prior.params() {
            x.extend(&p.value);
            analytic.extend(&p.grad);
        }
        let template = prior.clone();
        let f = |x: &[f64]| {
            let mut pr = template.clone();
            let mut off = z.data().len();
            for p in pr.params_mut() {
                let n = p.len();
                p.value.copy_from_slice(&x[off..off + n]);
                off += n;
            }
            let zz = Tensor::from_vec(z.shape(), x[..z.data().len()].to_vec()).unwrap();
            pr.rate_and_grad(&zz).unwrap().0
        };
        let coords: Vec<usize> = (0..x.len()).collect();
        let err = finite_difference_check(f, &x, &analytic, 1e-6, &coords);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn fits_discretized_normal_within_a_tenth_of_a_bit() {
        let sigma = 2.0;
        let mass = |v: i32| phi((v as f64 + 0.5) / sigma) - phi((v as f64 - 0.5) / sigma);
        let entropy: f64 = (-40..=40).map(|v| mass(v)).filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum();
        let mut prior = FactorizedPrior::new(1, 11);
        let mut adam = AdamState::new(0.9, 0.999, 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = rand_distr_normal(sigma);
        for _ in 0..1500 {
            let samples: Vec<f64> = (0..256).map(|_| normal(&mut rng).round()).collect();
            let z = Tensor::from_vec(Shape::new(1, [samples.len(), 1, 1]), samples).unwrap();
            prior.zero_grad();
            prior.rate_and_grad(&z).unwrap();
            let mut ps = prior.params_mut();
            for p in ps.iter_mut() {
                p.grad.iter_mut().for_each(|g| *g /= 256.0);
            }
            adam.step(&mut ps, 1e-2).unwrap();
        }
        let cross: f64 = (-40..=40).map(|v| -mass(v) * prior.bin_mass(0, v as f64).max(LIKELIHOOD_FLOOR).log2()).sum();
        assert!(cross - entropy < 0.1, "cross-entropy {cross} vs entropy {entropy}");
    }

    fn rand_distr_normal(sigma: f64) -> impl Fn(&mut ChaCha8Rng) -> f64 {
        let d = statrs::distribution::Normal::new(0.0, sigma).unwrap();
        move |rng| rand::distributions::Distribution::sample(&d, rng)
    }

    #[test]
    fn tables_cover_the_mass() {
        let prior = FactorizedPrior::new(3, 2);
        for t in prior.cdf_tables().unwrap() {
            assert_eq!(*t.cum.last().unwrap(), crate::entropy::cdf::TOTAL);
            assert!(t.min_sym < 0 && t.max_sym() > 0);
            assert!((t.probability(0) - prior.bin_mass(0, 0.0)).abs() < 0.2);
        }
    }
}
