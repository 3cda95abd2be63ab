//! Model configuration and the analysis / synthesis / hyper networks.
//!
//! Every network is first described as a [`Node`] blueprint. The same
//! blueprint is instantiated into trainable layers by [`Node::build`] and
//! walked analytically by the cost model, so both always describe one
//! structure.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{strided_dims, KernelShape};
use crate::nn::layers::{Concat, Conv, Gdn, Layer, PositiveScale, Relu, Residual, Sequential, Sigmoid};
use crate::nn::tensor::{Axis, Param, Tensor};

/// Floor added to the hyper-synthesis scale output.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    BaselineCgdn,
    Proposed,
    Proposed2,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::BaselineCgdn, Variant::Proposed, Variant::Proposed2];

    pub fn id(self) -> u8 {
        match self {
            Variant::Baseline => 0,
            Variant::BaselineCgdn => 1,
            Variant::Proposed => 2,
            Variant::Proposed2 => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        Variant::ALL.get(id as usize).copied().ok_or_else(|| Error::Corrupt(format!("unknown variant id {id}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::BaselineCgdn => "baseline_cgdn",
            Variant::Proposed => "proposed",
            Variant::Proposed2 => "proposed2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }

    /// Activation the variant uses unless overridden: ReLU for the plain
    /// baseline, CGDN otherwise.
    pub fn default_activation(self) -> ActivationKind {
        match self {
            Variant::Baseline => ActivationKind::Relu,
            _ => ActivationKind::Cgdn,
        }
    }

    /// Whether analysis block `i` (1-based) uses proposed blocks.
    pub fn proposed_in_block(self, i: usize) -> bool {
        match self {
            Variant::Proposed => i == 3,
            Variant::Proposed2 => i >= 2,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Gdn,
    Cgdn,
}

impl ActivationKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActivationKind::Relu),
            "gdn" => Ok(ActivationKind::Gdn),
            "cgdn" => Ok(ActivationKind::Cgdn),
            _ => Err(Error::Config(format!("unknown activation '{s}'"))),
        }
    }
}

fn default_kernel() -> usize {
    3
}

fn default_true() -> bool {
    true
}

fn default_hyper_layers() -> usize {
    3
}

fn default_relu() -> ActivationKind {
    ActivationKind::Relu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Channels of analysis blocks 1..3 `(C1, C2, C3)`.
    pub channels: [usize; 3],
    pub latent_channels: usize,
    pub hyper_channels: usize,
    /// Number of hyper-analysis convolutions; the last two have stride 2.
    #[serde(default = "default_hyper_layers")]
    pub hyper_layers: usize,
    pub activation: ActivationKind,
    #[serde(default = "default_relu")]
    pub synthesis_activation: ActivationKind,
    pub block_size: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// Paper-scale layout: 64^3 blocks, channels 16/32/64, 64 latent and
    /// hyper channels, three hyper-analysis convolutions.
    pub fn paper(variant: Variant) -> Self {
        ModelConfig {
            variant,
            channels: [16, 32, 64],
            latent_channels: 64,
            hyper_channels: 64,
            hyper_layers: 3,
            activation: variant.default_activation(),
            synthesis_activation: ActivationKind::Relu,
            block_size: 64,
            kernel: 3,
            bias: true,
            seed: 0,
        }
    }

    /// Small layout that trains on one CPU core in minutes.
    pub fn desk(variant: Variant) -> Self {
        ModelConfig {
            channels: [8, 16, 32],
            latent_channels: 32,
            hyper_channels: 32,
            block_size: 16,
            ..ModelConfig::paper(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [c1, c2, c3] = self.channels;
        if c1 == 0 || c1 > c2 || c2 > c3 {
            return Err(Error::Config(format!("channels must satisfy 0 < C1 <= C2 <= C3, got {:?}", self.channels)));
        }
        for i in 1..=3 {
            if self.variant.proposed_in_block(i) && self.channels[i - 1] % 4 != 0 {
                return Err(Error::Config(format!(
                    "proposed block needs channels divisible by 4, block {i} has {}",
                    self.channels[i - 1]
                )));
            }
        }
        if self.latent_channels == 0 || self.hyper_channels == 0 {
            return Err(Error::Config("latent and hyper channels must be positive".into()));
        }
        if self.hyper_layers < 2 {
            return Err(Error::Config("at least two hyper-analysis layers are required".into()));
        }
        if !self.block_size.is_power_of_two() || self.block_size < 8 {
            return Err(Error::Config(format!("block size {} must be a power of two >= 8", self.block_size)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ModelConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        ModelConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Spatial side after each analysis stage: `[block, /2, /4, /8]`.
    pub fn pyramid(&self) -> [usize; 4] {
        let mut p = [self.block_size; 4];
        for i in 1..4 {
            p[i] = p[i - 1].div_ceil(2);
        }
        p
    }

    fn hyper_strides(&self) -> Vec<usize> {
        (0..self.hyper_layers).map(|i| if i + 2 >= self.hyper_layers { 2 } else { 1 }).collect()
    }

    /// Spatial side of the hyper latent `z`.
    pub fn hyper_side(&self) -> usize {
        self.hyper_strides().iter().fold(self.pyramid()[3], |d, s| d.div_ceil(*s))
    }

    pub fn latent_dims(&self) -> [usize; 3] {
        [self.pyramid()[3]; 3]
    }

    pub fn hyper_dims(&self) -> [usize; 3] {
        [self.hyper_side(); 3]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvKind {
    Full(usize),
    Pointwise,
    Axis(Axis, usize),
    Plane(Axis, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub kind: ConvKind,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub bias: bool,
    /// Set for transposed (upsampling) convolutions.
    pub transposed_out: Option<[usize; 3]>,
}

impl ConvSpec {
    /// Kernel of the forward correlation (for transposed convs, of the
    /// correlation this layer is the adjoint of).
    pub fn kernel(&self) -> KernelShape {
        let (co, ci) = if self.transposed_out.is_some() { (self.c_in, self.c_out) } else { (self.c_out, self.c_in) };
        match self.kind {
            ConvKind::Full(k) => KernelShape::full(co, ci, k),
            ConvKind::Pointwise => KernelShape::pointwise(co, ci),
            ConvKind::Axis(a, k) => KernelShape::axis(co, ci, a, k),
            ConvKind::Plane(a, k) => KernelShape::plane(co, ci, a, k),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.kernel().len()
    }

    pub fn out_dims(&self, in_dims: [usize; 3]) -> [usize; 3] {
        self.transposed_out.unwrap_or_else(|| strided_dims(in_dims, self.stride))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActKind {
    Relu,
    Gdn,
    Cgdn,
    Sigmoid,
    PositiveScale,
}

impl From<ActivationKind> for ActKind {
    fn from(a: ActivationKind) -> Self {
        match a {
            ActivationKind::Relu => ActKind::Relu,
            ActivationKind::Gdn => ActKind::Gdn,
            ActivationKind::Cgdn => ActKind::Cgdn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActSpec {
    pub name: String,
    pub kind: ActKind,
    pub channels: usize,
}

impl ActSpec {
    /// GDN-family layers carry `beta` (C) and `gamma` (C x C).
    pub fn param_count(&self) -> usize {
        match self.kind {
            ActKind::Gdn | ActKind::Cgdn => self.channels * self.channels + self.channels,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Conv(ConvSpec),
    Act(ActSpec),
    Seq(Vec<Node>),
    /// `x + body(x)`.
    Residual(Vec<Node>),
    /// Branches applied to the same input, concatenated on channels.
    Concat(Vec<Vec<Node>>),
}

fn build_seq(nodes: &[Node], seed: u64) -> Sequential {
    Sequential { layers: nodes.iter().map(|n| n.build(seed)).collect() }
}

impl Node {
    pub fn build(&self, seed: u64) -> Box<dyn Layer> {
        match self {
            Node::Conv(c) => Box::new(match c.transposed_out {
                None => Conv::new(&c.name, c.kernel(), c.stride, c.bias, seed),
                Some(out) => {
                    let k = match c.kind {
                        ConvKind::Full(k) => k,
                        _ => unreachable!("transposed convs are full kernels"),
                    };
                    Conv::transposed(&c.name, c.c_in, c.c_out, k, c.stride, out, c.bias, seed)
                }
            }),
            Node::Act(a) => match a.kind {
                ActKind::Relu => Box::new(Relu::new()),
                ActKind::Gdn => Box::new(Gdn::new(&a.name, a.channels, 2.0, 0.5)),
                ActKind::Cgdn => Box::new(Gdn::new(&a.name, a.channels, 1.0, 1.0)),
                ActKind::Sigmoid => Box::new(Sigmoid::new()),
                ActKind::PositiveScale => Box::new(PositiveScale::new(SCALE_FLOOR)),
            },
            Node::Seq(nodes) => Box::new(build_seq(nodes, seed)),
            Node::Residual(nodes) => Box::new(Residual { body: build_seq(nodes, seed) }),
            Node::Concat(branches) => Box::new(Concat::new(branches.iter().map(|b| build_seq(b, seed)).collect())),
        }
    }

    /// Visits convolutions and activations in execution order with their
    /// input spatial dims; returns the output dims.
    pub fn walk(&self, in_dims: [usize; 3], f: &mut impl FnMut(&Node, [usize; 3])) -> [usize; 3] {
        match self {
            Node::Conv(c) => {
                f(self, in_dims);
                c.out_dims(in_dims)
            }
            Node::Act(_) => {
                f(self, in_dims);
                in_dims
            }
            Node::Seq(nodes) | Node::Residual(nodes) => nodes.iter().fold(in_dims, |d, n| n.walk(d, f)),
            Node::Concat(branches) => {
                let mut out = in_dims;
                for b in branches {
                    out = b.iter().fold(in_dims, |d, n| n.walk(d, f));
                }
                out
            }
        }
    }

    /// Parameter count implied by the blueprint.
    pub fn param_count(&self) -> usize {
        let mut total = 0;
        self.walk([1; 3], &mut |n, _| match n {
            Node::Conv(c) => total += c.weight_count() + if c.bias { c.c_out } else { 0 },
            Node::Act(a) => total += a.param_count(),
            _ => {}
        });
        total
    }
}

struct Builder<'a> {
    cfg: &'a ModelConfig,
}

impl Builder<'_> {
    fn conv(&self, name: String, kind: ConvKind, c_in: usize, c_out: usize, stride: usize) -> Node {
        Node::Conv(ConvSpec { name, kind, c_in, c_out, stride, bias: self.cfg.bias, transposed_out: None })
    }

    fn full(&self, name: String, c_in: usize, c_out: usize, stride: usize) -> Node {
        self.conv(name, ConvKind::Full(self.cfg.kernel), c_in, c_out, stride)
    }

    fn up(&self, name: String, c_in: usize, c_out: usize, stride: usize, out: usize) -> Node {
        Node::Conv(ConvSpec {
            name,
            kind: ConvKind::Full(self.cfg.kernel),
            c_in,
            c_out,
            stride,
            bias: self.cfg.bias,
            transposed_out: Some([out; 3]),
        })
    }

    fn act(name: String, kind: impl Into<ActKind>, channels: usize) -> Node {
        Node::Act(ActSpec { name, kind: kind.into(), channels })
    }

    fn residual_baseline(&self, p: &str, c: usize, act: ActivationKind) -> Node {
        Node::Residual(vec![
            self.full(format!("{p}.conv1"), c, c, 1),
            Self::act(format!("{p}.act1"), act, c),
            self.full(format!("{p}.conv2"), c, c, 1),
            Self::act(format!("{p}.act2"), act, c),
        ])
    }

    fn proposed(&self, p: &str, c: usize, act: ActivationKind) -> Node {
        let (half, quarter) = (c / 2, c / 4);
        let k = self.cfg.kernel;
        let path_a = vec![
            self.conv(format!("{p}.path_a"), ConvKind::Pointwise, c, quarter, 1),
            Self::act(format!("{p}.path_a.act"), act, quarter),
        ];
        let axis_paths: Vec<Node> = Axis::ALL
            .iter()
            .map(|&a| {
                let q = format!("{p}.{}", a.name());
                Node::Seq(vec![
                    self.conv(format!("{q}.axis"), ConvKind::Axis(a, k), half, quarter, 1),
                    Self::act(format!("{q}.axis.act"), act, quarter),
                    self.conv(format!("{q}.plane"), ConvKind::Plane(a, k), quarter, quarter, 1),
                    Self::act(format!("{q}.plane.act"), act, quarter),
                ])
            })
            .collect();
        let factorized = vec![
            self.conv(format!("{p}.bottleneck"), ConvKind::Pointwise, c, half, 1),
            Self::act(format!("{p}.bottleneck.act"), act, half),
            Node::Concat(axis_paths.into_iter().map(|n| vec![n]).collect()),
        ];
        Node::Residual(vec![Node::Concat(vec![path_a, vec![Node::Seq(factorized)]])])
    }

    fn analysis(&self) -> Node {
        let cfg = self.cfg;
        let act = cfg.activation;
        let mut nodes = Vec::new();
        let mut c_prev = 1;
        for (i, &c) in cfg.channels.iter().enumerate() {
            let b = i + 1;
            nodes.push(self.full(format!("analysis.block{b}.down"), c_prev, c, 2));
            nodes.push(Self::act(format!("analysis.block{b}.down.act"), act, c));
            if cfg.variant.proposed_in_block(b) {
                for j in 1..=2 {
                    nodes.push(self.proposed(&format!("analysis.block{b}.prop{j}"), c, act));
                }
            } else {
                nodes.push(self.residual_baseline(&format!("analysis.block{b}.res"), c, act));
            }
            c_prev = c;
        }
        nodes.push(self.full("analysis.final".into(), c_prev, cfg.latent_channels, 1));
        Node::Seq(nodes)
    }

    fn synthesis(&self) -> Node {
        let cfg = self.cfg;
        let act = cfg.synthesis_activation;
        let pyr = cfg.pyramid();
        let [c1, c2, c3] = cfg.channels;
        let mut nodes = vec![
            self.full("synthesis.entry".into(), cfg.latent_channels, c3, 1),
            Self::act("synthesis.entry.act".into(), act, c3),
        ];
        let stages = [(c3, c2, pyr[2]), (c2, c1, pyr[1]), (c1, c1, pyr[0])];
        for (i, &(ci, co, side)) in stages.iter().enumerate() {
            let b = i + 1;
            nodes.push(self.up(format!("synthesis.block{b}.up"), ci, co, 2, side));
            nodes.push(Self::act(format!("synthesis.block{b}.up.act"), act, co));
            nodes.push(self.residual_baseline(&format!("synthesis.block{b}.res"), co, act));
        }
        nodes.push(self.full("synthesis.out".into(), c1, 1, 1));
        nodes.push(Self::act("synthesis.sigmoid".into(), ActKind::Sigmoid, 1));
        Node::Seq(nodes)
    }

    fn hyper_analysis(&self) -> Node {
        let cfg = self.cfg;
        let strides = cfg.hyper_strides();
        let mut nodes = Vec::new();
        let mut c_prev = cfg.latent_channels;
        for (i, &s) in strides.iter().enumerate() {
            nodes.push(self.full(format!("hyper_analysis.conv{}", i + 1), c_prev, cfg.hyper_channels, s));
            if i + 1 < strides.len() {
                nodes.push(Self::act(format!("hyper_analysis.act{}", i + 1), ActKind::Relu, cfg.hyper_channels));
            }
            c_prev = cfg.hyper_channels;
        }
        Node::Seq(nodes)
    }

    fn hyper_synthesis(&self) -> Node {
        let cfg = self.cfg;
        let strides = cfg.hyper_strides();
        // Side length entering each hyper-analysis layer.
        let mut sides = vec![cfg.pyramid()[3]];
        for s in &strides {
            sides.push(sides.last().unwrap().div_ceil(*s));
        }
        let n = strides.len();
        let mut nodes = Vec::new();
        for j in 0..n {
            let layer = n - 1 - j;
            let c_out = if j + 1 == n { cfg.latent_channels } else { cfg.hyper_channels };
            let name = format!("hyper_synthesis.conv{}", j + 1);
            nodes.push(if strides[layer] == 1 {
                self.full(name, cfg.hyper_channels, c_out, 1)
            } else {
                self.up(name, cfg.hyper_channels, c_out, strides[layer], sides[layer])
            });
            if j + 1 < n {
                nodes.push(Self::act(format!("hyper_synthesis.act{}", j + 1), ActKind::Relu, c_out));
            }
        }
        nodes.push(Self::act("hyper_synthesis.scale".into(), ActKind::PositiveScale, cfg.latent_channels));
        Node::Seq(nodes)
    }
}

/// Baseline residual block with `c` channels (Fig. 4 layout).
pub fn residual_block_baseline(cfg: &ModelConfig, prefix: &str, c: usize) -> Node {
    Builder { cfg }.residual_baseline(prefix, c, cfg.activation)
}

/// Proposed separable block with `c` channels: a 1x1x1 path to `c/4` and a
/// shared 1x1x1 bottleneck to `c/2` feeding three axis paths (1D along the
/// axis to `c/4`, then 2D in the orthogonal plane), concatenated to `c` and
/// added to the input.
pub fn proposed_block(cfg: &ModelConfig, prefix: &str, c: usize) -> Result<Node> {
    if c % 4 != 0 {
        return Err(Error::Config(format!("proposed block needs channels divisible by 4, got {c}")));
    }
    Ok(Builder { cfg }.proposed(prefix, c, cfg.activation))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Analysis,
    Synthesis,
    HyperAnalysis,
    HyperSynthesis,
}

pub struct Network {
    pub role: Role,
    pub blueprint: Node,
    pub layers: Box<dyn Layer>,
}

impl Network {
    fn new(role: Role, blueprint: Node, seed: u64) -> Self {
        let layers = blueprint.build(seed);
        Network { role, blueprint, layers }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.layers.forward(x)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        self.layers.backward(grad)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub fn analysis_blueprint(cfg: &ModelConfig) -> Result<Node> {
    cfg.validate()?;
    Ok(Builder { cfg }.analysis())
}

pub fn synthesis_blueprint(cfg: &ModelConfig) -> Result<Node> {
    cfg.validate()?;
    Ok(Builder { cfg }.synthesis())
}

pub fn hyper_blueprints(cfg: &ModelConfig) -> Result<(Node, Node)> {
    cfg.validate()?;
    let b = Builder { cfg };
    Ok((b.hyper_analysis(), b.hyper_synthesis()))
}

pub fn build_analysis(cfg: &ModelConfig) -> Result<Network> {
    Ok(Network::new(Role::Analysis, analysis_blueprint(cfg)?, cfg.seed))
}

pub fn build_synthesis(cfg: &ModelConfig) -> Result<Network> {
    Ok(Network::new(Role::Synthesis, synthesis_blueprint(cfg)?, cfg.seed))
}

pub fn build_hyper_networks(cfg: &ModelConfig) -> Result<(Network, Network)> {
    let (ha, hs) = hyper_blueprints(cfg)?;
    Ok((Network::new(Role::HyperAnalysis, ha, cfg.seed), Network::new(Role::HyperSynthesis, hs, cfg.seed)))
}
