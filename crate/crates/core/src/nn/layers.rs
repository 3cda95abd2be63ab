//! Layer graph with a fixed-order backward pass.
//!
//! Each layer caches what it needs from its most recent `forward` call, so a
//! `backward` must follow the matching `forward` before the next one.
//! Parameter gradients accumulate until [`Layer::zero_grad`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{
    gdn_backward, gdn_forward, relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar,
    softplus_scalar, GdnCache, GdnParams,
};
use super::conv::{conv3d, conv3d_backward, conv3d_transposed, conv3d_transposed_backward, KernelShape};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor>;
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Restores parameter constraints after an optimizer step.
    fn project(&mut self) {}
}

fn missing_cache(what: &str) -> Error {
    Error::Structure(format!("{what}: backward called without forward"))
}

/// 64-bit FNV-1a, used to derive per-parameter seeds from names.
pub fn name_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// He-uniform initialization `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, which
/// keeps activation variance roughly constant through ReLU stacks.
pub fn fan_in_uniform(seed: u64, name: &str, len: usize, fan_in: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, name));
    let bound = (6.0 / fan_in.max(1.0)).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvDirection {
    Forward,
    /// Adjoint of the forward correlation; output dims fixed at build time.
    Transposed { out_dims: [usize; 3] },
}

pub struct Conv {
    pub kernel: KernelShape,
    pub stride: usize,
    pub direction: ConvDirection,
    pub weight: Param,
    pub bias: Option<Param>,
    input: Option<Tensor>,
}

impl Conv {
    pub fn new(name: &str, kernel: KernelShape, stride: usize, bias: bool, seed: u64) -> Self {
        let fan_in = (kernel.c_in * kernel.taps_len()) as f64;
        let wname = format!("{name}.weight");
        let weight = Param::new(
            wname.clone(),
            vec![kernel.c_out, kernel.c_in, kernel.taps[0], kernel.taps[1], kernel.taps[2]],
            fan_in_uniform(seed, &wname, kernel.len(), fan_in),
        );
        let bias = bias.then(|| Param::zeros(format!("{name}.bias"), vec![kernel.c_out]));
        Conv { kernel, stride, direction: ConvDirection::Forward, weight, bias, input: None }
    }

    /// Upsampling layer mapping `c_in -> c_out` channels. Weights are stored
    /// as the forward kernel `c_in x c_out x taps` whose adjoint this is.
    pub fn transposed(
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        out_dims: [usize; 3],
        bias: bool,
        seed: u64,
    ) -> Self {
        let kernel = KernelShape::full(c_in, c_out, k);
        // Each output gathers about taps / stride^3 taps per input channel.
        let fan_in = (c_in * kernel.taps_len()) as f64 / stride.pow(3) as f64;
        let wname = format!("{name}.weight");
        let weight = Param::new(
            wname.clone(),
            vec![c_in, c_out, k, k, k],
            fan_in_uniform(seed, &wname, kernel.len(), fan_in),
        );
        let bias = bias.then(|| Param::zeros(format!("{name}.bias"), vec![c_out]));
        Conv { kernel, stride, direction: ConvDirection::Transposed { out_dims }, weight, bias, input: None }
    }

    pub fn zero_weights(&mut self) {
        self.weight.value.iter_mut().for_each(|w| *w = 0.0);
    }
}

impl Layer for Conv {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let bias = self.bias.as_ref().map(|b| b.value.as_slice());
        let y = match self.direction {
            ConvDirection::Forward => conv3d(x, &self.weight.value, self.kernel, bias, self.stride)?,
            ConvDirection::Transposed { out_dims } => {
                conv3d_transposed(x, &self.weight.value, self.kernel, bias, self.stride, Some(out_dims))?
            }
        };
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self.input.as_ref().ok_or_else(|| missing_cache(&self.weight.name))?;
        let g = match self.direction {
            ConvDirection::Forward => conv3d_backward(x, grad, &self.weight.value, self.kernel, self.stride)?,
            ConvDirection::Transposed { .. } => {
                conv3d_transposed_backward(x, grad, &self.weight.value, self.kernel, self.stride)?
            }
        };
        for (a, b) in self.weight.grad.iter_mut().zip(&g.weights) {
            *a += b;
        }
        if let Some(bias) = &mut self.bias {
            for (a, b) in bias.grad.iter_mut().zip(&g.bias) {
                *a += b;
            }
        }
        Ok(g.input)
    }

    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

pub struct Relu {
    input: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { input: None }
    }
}

impl Default for Relu {
    fn default() -> Self {
        Relu::new()
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.input = Some(x.clone());
        Ok(relu(x))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        relu_backward(self.input.as_ref().ok_or_else(|| missing_cache("relu"))?, grad)
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

pub struct Sigmoid {
    output: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }
}

impl Default for Sigmoid {
    fn default() -> Self {
        Sigmoid::new()
    }
}

impl Layer for Sigmoid {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = sigmoid(x);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        sigmoid_backward(self.output.as_ref().ok_or_else(|| missing_cache("sigmoid"))?, grad)
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// `softplus(x) + floor`, a strictly positive scale map.
pub struct PositiveScale {
    pub floor: f64,
    input: Option<Tensor>,
}

impl PositiveScale {
    pub fn new(floor: f64) -> Self {
        PositiveScale { floor, input: None }
    }
}

impl Layer for PositiveScale {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.input = Some(x.clone());
        let floor = self.floor;
        Ok(x.map(|v| softplus_scalar(v) + floor))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        self.input.as_ref().ok_or_else(|| missing_cache("scale"))?.zip_map(grad, |v, g| g * sigmoid_scalar(v))
    }

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// Divisive normalization layer with trainable `beta` and `gamma`.
pub struct Gdn {
    pub beta: Param,
    pub gamma: Param,
    pub alpha_exp: f64,
    pub eps_exp: f64,
    cache: Option<(Tensor, GdnCache)>,
}

impl Gdn {
    pub fn new(name: &str, channels: usize, alpha_exp: f64, eps_exp: f64) -> Self {
        let init = GdnParams::identity_init(channels, alpha_exp, eps_exp);
        Gdn {
            beta: Param::new(format!("{name}.beta"), vec![channels], init.beta),
            gamma: Param::new(format!("{name}.gamma"), vec![channels, channels], init.gamma),
            alpha_exp,
            eps_exp,
            cache: None,
        }
    }

    fn params_view(&self) -> GdnParams {
        GdnParams {
            beta: self.beta.value.clone(),
            gamma: self.gamma.value.clone(),
            alpha_exp: self.alpha_exp,
            eps_exp: self.eps_exp,
        }
    }
}

impl Layer for Gdn {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, cache) = gdn_forward(x, &self.params_view())?;
        self.cache = Some((x.clone(), cache));
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (x, cache) = self.cache.as_ref().ok_or_else(|| missing_cache(&self.beta.name))?;
        let g = gdn_backward(x, grad, &self.params_view(), cache)?;
        for (a, b) in self.beta.grad.iter_mut().zip(&g.beta) {
            *a += b;
        }
        for (a, b) in self.gamma.grad.iter_mut().zip(&g.gamma) {
            *a += b;
        }
        Ok(g.input)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.beta, &self.gamma]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.beta, &mut self.gamma]
    }

    fn project(&mut self) {
        GdnParams::project(&mut self.beta.value, &mut self.gamma.value);
    }
}

#[derive(Default)]
pub struct Sequential {
    pub layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(&mut self, layer: impl Layer + 'static) -> &mut Self {
        self.layers.push(Box::new(layer));
        self
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn project(&mut self) {
        self.layers.iter_mut().for_each(|l| l.project());
    }
}

/// `x + body(x)`.
pub struct Residual {
    pub body: Sequential,
}

impl Layer for Residual {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut y = self.body.forward(x)?;
        y.add_assign(x)?;
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = self.body.backward(grad)?;
        g.add_assign(grad)?;
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.body.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.body.params_mut()
    }

    fn project(&mut self) {
        self.body.project();
    }
}

/// Parallel branches on the same input, concatenated along channels.
pub struct Concat {
    pub branches: Vec<Sequential>,
    widths: Vec<usize>,
}

impl Concat {
    pub fn new(branches: Vec<Sequential>) -> Self {
        Concat { branches, widths: Vec::new() }
    }
}

impl Layer for Concat {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let outs = self.branches.iter_mut().map(|b| b.forward(x)).collect::<Result<Vec<_>>>()?;
        self.widths = outs.iter().map(|t| t.channels()).collect();
        Tensor::concat_channels(&outs)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let parts = grad.split_channels(&self.widths)?;
        let mut total: Option<Tensor> = None;
        for (b, g) in self.branches.iter_mut().zip(&parts) {
            let gi = b.backward(g)?;
            match &mut total {
                Some(t) => t.add_assign(&gi)?,
                None => total = Some(gi),
            }
        }
        total.ok_or_else(|| missing_cache("concat"))
    }

    fn params(&self) -> Vec<&Param> {
        self.branches.iter().flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.branches.iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    fn project(&mut self) {
        self.branches.iter_mut().for_each(|b| b.project());
    }
}
