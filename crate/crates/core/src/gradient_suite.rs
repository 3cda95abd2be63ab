//! Finite-difference verification of every differentiable operation.
//!
//! Each case evaluates a scalar objective, its analytic gradient, and
//! central differences at a sample of coordinates (inputs and parameters).
//! The reported error for a case is the maximum over checked coordinates of
//! `|analytic - numeric| / max(|analytic|, |numeric|, floor)`, where `floor`
//! is `1e-3` times the largest checked analytic magnitude so that
//! coordinates with vanishing gradients are judged on the case's own scale.
//! Inputs are drawn away from the kinks of ReLU and `|x|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::architecture::{build_analysis, build_synthesis, ModelConfig, Variant};
use crate::entropy::{gaussian_rate, quantize, FactorizedPrior, QuantMode};
use crate::error::Result;
use crate::nn::conv::KernelShape;
use crate::nn::gradcheck::sample_coords;
use crate::nn::layers::{Conv, Gdn, Layer, Relu};
use crate::nn::loss::{focal_loss, FocalLossParams};
use crate::nn::tensor::{Axis, Shape, Tensor};

/// Step used for every central difference.
pub const EPS: f64 = 1e-6;
/// Smaller step for whole networks at 16^3: tens of thousands of ReLU
/// pre-activations make a kink inside a `1e-6` probe interval likely, while
/// the loss magnitude keeps roundoff acceptable down to a few `1e-7`.
pub const EPS_NETWORK: f64 = 3e-7;
/// Coordinates sampled per tensor.
const COORDS: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

fn score(pairs: &[(f64, f64)]) -> f64 {
    let scale = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(1e-12);
    pairs.iter().map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

/// Random values with magnitude in `[lo, hi]` and random sign.
fn away_from_zero(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

fn tensor(shape: Shape, data: Vec<f64>) -> Tensor {
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Checks `L = <w, layer(x)>` with respect to `x` and every parameter.
fn check_layer(name: &str, layer: &mut dyn Layer, x: Tensor, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let y = layer.forward(&x)?;
    let w = tensor(y.shape(), (0..y.shape().len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    layer.zero_grad();
    let gx = layer.backward(&w)?;
    let mut pairs = Vec::new();
    let loss = |layer: &mut dyn Layer, x: &Tensor| -> Result<f64> { layer.forward(x)?.dot(&w) };

    for i in sample_coords(x.data().len(), COORDS) {
        let mut probe = x.clone();
        probe[i] = x[i] + EPS;
        let up = loss(layer, &probe)?;
        probe[i] = x[i] - EPS;
        let down = loss(layer, &probe)?;
        pairs.push((gx[i], (up - down) / (2.0 * EPS)));
    }
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for i in sample_coords(grads.len(), COORDS) {
            let orig = layer.params()[pi].value[i];
            layer.params_mut()[pi].value[i] = orig + EPS;
            let up = loss(layer, &x)?;
            layer.params_mut()[pi].value[i] = orig - EPS;
            let down = loss(layer, &x)?;
            layer.params_mut()[pi].value[i] = orig;
            pairs.push((grads[i], (up - down) / (2.0 * EPS)));
        }
    }
    Ok(GradCheck { name: name.into(), max_rel_error: score(&pairs), coords_checked: pairs.len() })
}

fn randomize_params(layer: &mut dyn Layer, lo: f64, hi: f64, rng: &mut ChaCha8Rng) {
    for p in layer.params_mut() {
        p.value.iter_mut().for_each(|v| *v = rng.gen_range(lo..hi));
    }
}

fn conv_cases(rng: &mut ChaCha8Rng) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    let input = |c: usize, d: [usize; 3], rng: &mut ChaCha8Rng| Tensor::random_uniform(Shape::new(c, d), -1.0, 1.0, rng);
    let mut full = Conv::new("g.full", KernelShape::full(3, 2, 3), 1, true, 1);
    out.push(check_layer("conv3d 3x3x3", &mut full, input(2, [5, 4, 6], rng), rng)?);
    let mut strided = Conv::new("g.stride", KernelShape::full(3, 2, 3), 2, true, 2);
    out.push(check_layer("conv3d stride 2", &mut strided, input(2, [6, 5, 4], rng), rng)?);
    let mut pointwise = Conv::new("g.pw", KernelShape::pointwise(4, 3), 1, true, 3);
    out.push(check_layer("conv3d 1x1x1", &mut pointwise, input(3, [3, 3, 3], rng), rng)?);
    let mut tconv = Conv::transposed("g.t", 3, 2, 3, 2, [6, 6, 5], true, 4);
    out.push(check_layer("transposed conv3d stride 2", &mut tconv, input(3, [3, 3, 3], rng), rng)?);
    for axis in Axis::ALL {
        let mut c = Conv::new("g.axis", KernelShape::axis(3, 2, axis, 3), 1, true, 5);
        out.push(check_layer(&format!("axis-1D conv ({})", axis.name()), &mut c, input(2, [4, 5, 3], rng), rng)?);
        let mut p = Conv::new("g.plane", KernelShape::plane(3, 2, axis, 3), 1, true, 6);
        out.push(check_layer(&format!("plane-2D conv (normal {})", axis.name()), &mut p, input(2, [4, 3, 5], rng), rng)?);
    }
    Ok(out)
}

fn activation_cases(rng: &mut ChaCha8Rng) -> Result<Vec<GradCheck>> {
    let shape = Shape::new(3, [3, 3, 2]);
    let mut out = Vec::new();
    let x = tensor(shape, away_from_zero(shape.len(), 0.1, 2.0, rng));
    out.push(check_layer("ReLU", &mut Relu::new(), x.clone(), rng)?);
    let mut gdn = Gdn::new("g.gdn", 3, 2.0, 0.5);
    randomize_params(&mut gdn, 0.05, 1.0, rng);
    out.push(check_layer("GDN", &mut gdn, x.clone(), rng)?);
    let mut cgdn = Gdn::new("g.cgdn", 3, 1.0, 1.0);
    randomize_params(&mut cgdn, 0.05, 1.0, rng);
    out.push(check_layer("CGDN", &mut cgdn, x, rng)?);
    Ok(out)
}

fn focal_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let shape = Shape::new(1, [4, 4, 4]);
    let target = tensor(shape, (0..shape.len()).map(|_| if rng.gen_bool(0.3) { 1.0 } else { 0.0 }).collect());
    let probs = Tensor::random_uniform(shape, 0.05, 0.95, rng);
    let params = FocalLossParams::default();
    let (_, g) = focal_loss(&target, &probs, &params)?;
    let mut pairs = Vec::new();
    for i in sample_coords(shape.len(), 2 * COORDS) {
        let mut p = probs.clone();
        p[i] = probs[i] + EPS;
        let up = focal_loss(&target, &p, &params)?.0;
        p[i] = probs[i] - EPS;
        let down = focal_loss(&target, &p, &params)?.0;
        pairs.push((g[i], (up - down) / (2.0 * EPS)));
    }
    Ok(GradCheck { name: "focal loss".into(), max_rel_error: score(&pairs), coords_checked: pairs.len() })
}

fn gaussian_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let shape = Shape::new(4, [2, 2, 2]);
    let y = Tensor::random_uniform(shape, -3.0, 3.0, rng);
    let sigma = Tensor::random_uniform(shape, 0.3, 4.0, rng);
    let r = gaussian_rate(&y, &sigma)?;
    let mut pairs = Vec::new();
    for i in sample_coords(shape.len(), COORDS) {
        for (which, grad) in [(0, &r.grad_y), (1, &r.grad_sigma)] {
            let mut a = [y.clone(), sigma.clone()];
            a[which][i] += EPS;
            let up = gaussian_rate(&a[0], &a[1])?.bits;
            a[which][i] -= 2.0 * EPS;
            let down = gaussian_rate(&a[0], &a[1])?.bits;
            pairs.push((grad[i], (up - down) / (2.0 * EPS)));
        }
    }
    Ok(GradCheck { name: "Gaussian likelihood (rate in bits)".into(), max_rel_error: score(&pairs), coords_checked: pairs.len() })
}

fn factorized_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let mut prior = FactorizedPrior::new(3, 9);
    let shape = Shape::new(3, [2, 2, 1]);
    let z = Tensor::random_uniform(shape, -4.0, 4.0, rng);
    prior.zero_grad();
    let (_, gz) = prior.rate_and_grad(&z)?;
    let analytic: Vec<Vec<f64>> = prior.params().iter().map(|p| p.grad.clone()).collect();
    let bits = |prior: &mut FactorizedPrior, z: &Tensor| -> Result<f64> {
        let mut scratch = prior.params().iter().map(|p| p.grad.clone()).collect::<Vec<_>>();
        let b = prior.rate_and_grad(z)?.0;
        // Leave accumulated gradients untouched.
        for (p, g) in prior.params_mut().into_iter().zip(scratch.drain(..)) {
            p.grad = g;
        }
        Ok(b)
    };
    let mut pairs = Vec::new();
    for i in 0..shape.len() {
        let mut p = z.clone();
        p[i] = z[i] + EPS;
        let up = bits(&mut prior, &p)?;
        p[i] = z[i] - EPS;
        let down = bits(&mut prior, &p)?;
        pairs.push((gz[i], (up - down) / (2.0 * EPS)));
    }
    for (pi, grads) in analytic.iter().enumerate() {
        for i in sample_coords(grads.len(), 6) {
            let orig = prior.params()[pi].value[i];
            prior.params_mut()[pi].value[i] = orig + EPS;
            let up = bits(&mut prior, &z)?;
            prior.params_mut()[pi].value[i] = orig - EPS;
            let down = bits(&mut prior, &z)?;
            prior.params_mut()[pi].value[i] = orig;
            pairs.push((grads[i], (up - down) / (2.0 * EPS)));
        }
    }
    Ok(GradCheck { name: "factorized likelihood (rate in bits)".into(), max_rel_error: score(&pairs), coords_checked: pairs.len() })
}

/// `focal(x, f_s(f_a(x) + u))` at 16^3 with a fixed noise draw `u`, checked
/// against parameters of both transforms.
fn full_model_case(variant: Variant, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let cfg = ModelConfig {
        channels: [4, 8, 8],
        latent_channels: 4,
        hyper_channels: 4,
        seed: rng.gen(),
        ..ModelConfig::desk(variant)
    };
    let mut fa = build_analysis(&cfg)?;
    let mut fs = build_synthesis(&cfg)?;
    // Identity-initialized GDN couplings sit on the gamma >= 0 boundary;
    // move them inside so that +-EPS_NETWORK probes stay feasible.
    for p in fa.params_mut().into_iter().chain(fs.params_mut()) {
        if p.name.ends_with("gamma") {
            p.value.iter_mut().for_each(|v| *v += rng.gen_range(0.01..0.1));
        }
    }
    let shape = Shape::cube(1, cfg.block_size);
    let x = tensor(shape, (0..shape.len()).map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 }).collect());
    let params = FocalLossParams::default();
    let noise_seed: u64 = rng.gen();
    // Sum rather than mean keeps the objective O(1) per voxel.
    let n = shape.len() as f64;
    let loss = |fa: &mut crate::architecture::Network, fs: &mut crate::architecture::Network| -> Result<(f64, Tensor)> {
        let y = quantize(&fa.forward(&x)?, QuantMode::Train, noise_seed)?;
        let (l, g) = focal_loss(&x, &fs.forward(&y)?, &params)?;
        Ok((l * n, g.map(|v| v * n)))
    };
    fa.layers.zero_grad();
    fs.layers.zero_grad();
    let (_, g) = loss(&mut fa, &mut fs)?;
    let gy = fs.backward(&g)?;
    fa.backward(&gy)?;

    let mut pairs = Vec::new();
    for net in 0..2 {
        let count = if net == 0 { fa.params().len() } else { fs.params().len() };
        for pi in sample_coords(count, 8) {
            let len = if net == 0 { fa.params()[pi].len() } else { fs.params()[pi].len() };
            for i in sample_coords(len, 3) {
                let analytic = if net == 0 { fa.params()[pi].grad[i] } else { fs.params()[pi].grad[i] };
                let eval = |delta: f64, fa: &mut crate::architecture::Network, fs: &mut crate::architecture::Network| -> Result<f64> {
                    let target = if net == 0 { &mut fa.params_mut()[pi].value[i] } else { &mut fs.params_mut()[pi].value[i] };
                    *target += delta;
                    let l = loss(fa, fs)?.0;
                    let target = if net == 0 { &mut fa.params_mut()[pi].value[i] } else { &mut fs.params_mut()[pi].value[i] };
                    *target -= delta;
                    Ok(l)
                };
                let up = eval(EPS_NETWORK, &mut fa, &mut fs)?;
                let down = eval(-EPS_NETWORK, &mut fa, &mut fs)?;
                pairs.push((analytic, (up - down) / (2.0 * EPS_NETWORK)));
            }
        }
    }
    Ok(GradCheck {
        name: format!("f_s(Q(f_a(x))) at 16^3, {}", variant.name()),
        max_rel_error: score(&pairs),
        coords_checked: pairs.len(),
    })
}

/// Runs every case with inputs drawn from `seed`.
pub fn run_gradient_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = conv_cases(&mut rng)?;
    out.extend(activation_cases(&mut rng)?);
    out.push(focal_case(&mut rng)?);
    out.push(gaussian_case(&mut rng)?);
    out.push(factorized_case(&mut rng)?);
    for v in [Variant::Baseline, Variant::BaselineCgdn, Variant::Proposed, Variant::Proposed2] {
        out.push(full_model_case(v, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_is_relative_with_scale_floor() {
        assert_eq!(score(&[(2.0, 2.0)]), 0.0);
        assert!((score(&[(2.0, 1.0)]) - 0.5).abs() < 1e-12);
        // A tiny gradient is judged against 1e-3 of the case scale.
        assert!(score(&[(1.0, 1.0), (0.0, 1e-9)]) < 1e-5);
    }
}
