//! Exact parameter and multiply-accumulate counting, filter-utilization
//! fractions, and the search that pins unstated channel layouts to known
//! totals.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::architecture::{analysis_blueprint, hyper_blueprints, ActKind, ActivationKind, ConvKind, ConvSpec, ModelConfig, Node, Variant};
use crate::error::{Error, Result};

/// One layer's exact cost. `macs` counts multiply-accumulates over the
/// layer's output volume (input volume for transposed convolutions).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub weights: u64,
    pub biases: u64,
    /// Non-convolution parameters (GDN `beta` and `gamma`).
    pub other: u64,
    pub macs: u64,
    /// MACs under the table-calibrated convention (see [`MacConvention`]).
    pub table_macs: u64,
}

impl LayerCost {
    pub fn params(&self) -> u64 {
        self.weights + self.biases + self.other
    }
}

fn volume(d: [usize; 3]) -> u64 {
    d.iter().map(|&v| v as u64).product()
}

/// `params = x*y*z*C_i*C_o (+ C_o)`, `macs = x*y*z*C_i*C_o*|D_out|`.
pub fn conv3d_cost(k: [usize; 3], c_in: usize, c_out: usize, d_out: [usize; 3], bias: bool) -> LayerCost {
    let w = volume(k) * c_in as u64 * c_out as u64;
    LayerCost {
        name: format!("conv{}x{}x{}", k[0], k[1], k[2]),
        weights: w,
        biases: if bias { c_out as u64 } else { 0 },
        other: 0,
        macs: w * volume(d_out),
        table_macs: w * volume(d_out),
    }
}

/// 1D (length 3, `C_i -> mid`) followed by 2D (3x3, `mid -> C_o`).
pub fn separable_cost_with_mid(c_in: usize, mid: usize, c_out: usize, d_out: [usize; 3], bias: bool) -> LayerCost {
    let w = 3 * (c_in * mid) as u64 + 9 * (mid * c_out) as u64;
    LayerCost {
        name: "separable1d2d".into(),
        weights: w,
        biases: if bias { (mid + c_out) as u64 } else { 0 },
        other: 0,
        macs: w * volume(d_out),
        table_macs: w * volume(d_out),
    }
}

/// The textbook pairing with intermediate width `C_o`:
/// `3*C_i*C_o + 9*C_o^2` weights.
pub fn separable_cost(c_in: usize, c_out: usize, d_out: [usize; 3], bias: bool) -> LayerCost {
    separable_cost_with_mid(c_in, c_out, c_out, d_out, bias)
}

/// How operation totals are tallied.
///
/// `OutputVolume` is the literal convention: every conv costs
/// `taps * C_i * C_o` MACs per output voxel. `Table` instead evaluates every
/// hyper-analysis convolution over the full latent grid `y` lives on,
/// whatever its stride or position in the stack; this is the calibration under
/// which the encoder operation counts of the comparison table are
/// reproduced exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacConvention {
    OutputVolume,
    Table,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub name: String,
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params()).sum()
    }

    pub fn conv_weights(&self) -> u64 {
        self.layers.iter().map(|l| l.weights).sum()
    }

    pub fn biases(&self) -> u64 {
        self.layers.iter().map(|l| l.biases).sum()
    }

    pub fn activation_params(&self) -> u64 {
        self.layers.iter().map(|l| l.other).sum()
    }

    pub fn total_macs(&self, convention: MacConvention) -> u64 {
        self.layers
            .iter()
            .map(|l| match convention {
                MacConvention::OutputVolume => l.macs,
                MacConvention::Table => l.table_macs,
            })
            .sum()
    }

    /// Plain-text table of every layer followed by totals.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<44} {:>10} {:>8} {:>8} {:>14} {:>14}\n", "layer", "weights", "biases", "other", "macs", "table_macs");
        for l in &self.layers {
            let _ = writeln!(s, "{:<44} {:>10} {:>8} {:>8} {:>14} {:>14}", l.name, l.weights, l.biases, l.other, l.macs, l.table_macs);
        }
        let _ = writeln!(
            s,
            "{:<44} {:>10} {:>8} {:>8} {:>14} {:>14}",
            "TOTAL",
            self.conv_weights(),
            self.biases(),
            self.activation_params(),
            self.total_macs(MacConvention::OutputVolume),
            self.total_macs(MacConvention::Table)
        );
        let _ = writeln!(s, "total parameters (weights + biases + activation): {}", self.total_params());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,weights,biases,other,macs,table_macs\n");
        for l in &self.layers {
            let _ = writeln!(s, "{},{},{},{},{},{}", l.name, l.weights, l.biases, l.other, l.macs, l.table_macs);
        }
        let _ = writeln!(
            s,
            "TOTAL,{},{},{},{},{}",
            self.conv_weights(),
            self.biases(),
            self.activation_params(),
            self.total_macs(MacConvention::OutputVolume),
            self.total_macs(MacConvention::Table)
        );
        s
    }
}

/// Costs every conv and activation in `node`, starting at `in_dims`.
/// With `table_grid` set, table MACs evaluate every conv over that grid.
pub fn blueprint_costs(node: &Node, in_dims: [usize; 3], table_grid: Option<[usize; 3]>) -> Vec<LayerCost> {
    let mut out = Vec::new();
    node.walk(in_dims, &mut |n, d_in| match n {
        Node::Conv(c) => out.push(conv_layer_cost(c, d_in, table_grid)),
        Node::Act(a) if a.param_count() > 0 => out.push(LayerCost {
            name: a.name.clone(),
            weights: 0,
            biases: 0,
            other: a.param_count() as u64,
            macs: 0,
            table_macs: 0,
        }),
        _ => {}
    });
    out
}

fn conv_layer_cost(c: &ConvSpec, d_in: [usize; 3], table_grid: Option<[usize; 3]>) -> LayerCost {
    let w = c.weight_count() as u64;
    // A transposed conv does its work once per input voxel.
    let vol = if c.transposed_out.is_some() { volume(d_in) } else { volume(c.out_dims(d_in)) };
    let table_vol = table_grid.map_or(vol, volume);
    LayerCost {
        name: c.name.clone(),
        weights: w,
        biases: if c.bias { c.c_out as u64 } else { 0 },
        other: 0,
        macs: w * vol,
        table_macs: w * table_vol,
    }
}

/// Encoder cost: analysis plus hyper-analysis.
pub fn model_cost(cfg: &ModelConfig) -> Result<CostReport> {
    let mut layers = blueprint_costs(&analysis_blueprint(cfg)?, [cfg.block_size; 3], None);
    let (ha, _) = hyper_blueprints(cfg)?;
    layers.extend(blueprint_costs(&ha, cfg.latent_dims(), Some(cfg.latent_dims())));
    Ok(CostReport { name: cfg.variant.name().into(), layers })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    LearnedPcgc,
    Proposed,
    Proposed2,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Baseline, Preset::LearnedPcgc, Preset::Proposed, Preset::Proposed2];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "learned_pcgc" => Ok(Preset::LearnedPcgc),
            "proposed" => Ok(Preset::Proposed),
            "proposed2" => Ok(Preset::Proposed2),
            _ => Err(Error::Config(format!(
                "unknown preset '{s}' (expected baseline, learned_pcgc, proposed or proposed2)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Baseline => "baseline",
            Preset::LearnedPcgc => "learned_pcgc",
            Preset::Proposed => "proposed",
            Preset::Proposed2 => "proposed2",
        }
    }

    /// The paper-scale model configuration, where one exists.
    pub fn config(self) -> Option<ModelConfig> {
        match self {
            Preset::Baseline => Some(ModelConfig::paper(Variant::Baseline)),
            Preset::Proposed => Some(ModelConfig::paper(Variant::Proposed)),
            Preset::Proposed2 => Some(ModelConfig::paper(Variant::Proposed2)),
            Preset::LearnedPcgc => None,
        }
    }
}

/// Voxception-ResNet unit on `c` channels: two branches
/// (1x1x1 -> 3x3x3 and 3x3x3 -> 1x1x1) of widths `c/4 -> c/2`, concatenated
/// and added to the input.
fn vrn(p: &str, c: usize) -> Node {
    let conv = |name: String, kind, ci, co| {
        Node::Conv(ConvSpec { name, kind, c_in: ci, c_out: co, stride: 1, bias: true, transposed_out: None })
    };
    let relu = |name: String, ch| Node::Act(crate::architecture::ActSpec { name, kind: ActKind::Relu, channels: ch });
    Node::Residual(vec![Node::Concat(vec![
        vec![
            conv(format!("{p}.a1"), ConvKind::Pointwise, c, c / 4),
            relu(format!("{p}.a1.act"), c / 4),
            conv(format!("{p}.a2"), ConvKind::Full(3), c / 4, c / 2),
        ],
        vec![
            conv(format!("{p}.b1"), ConvKind::Full(3), c, c / 4),
            relu(format!("{p}.b1.act"), c / 4),
            conv(format!("{p}.b2"), ConvKind::Pointwise, c / 4, c / 2),
        ],
    ])])
}

/// Encoder of the earlier learned point-cloud codec used as a comparison
/// row: a 3x3x3 stem at full resolution, then three stride-2 stages
/// (16 -> 32 -> 64 channels) each followed by three Voxception-ResNet
/// units, and a 3x3x3 projection to 8 latent channels. Its hyperprior is not
/// counted. This layout is reconstructed from that codec's description and
/// does not reproduce the comparison-table figures; see
/// [`table1_rows`] for the reported discrepancy.
pub fn learned_pcgc_blueprint() -> Node {
    let conv = |name: &str, ci, co, stride| {
        Node::Conv(ConvSpec { name: name.into(), kind: ConvKind::Full(3), c_in: ci, c_out: co, stride, bias: true, transposed_out: None })
    };
    let relu = |name: &str, ch| Node::Act(crate::architecture::ActSpec { name: name.into(), kind: ActKind::Relu, channels: ch });
    let mut nodes = vec![conv("pcgc.stem", 1, 16, 1), relu("pcgc.stem.act", 16)];
    let mut c_prev = 16;
    for (i, c) in [16usize, 32, 64].into_iter().enumerate() {
        nodes.push(conv(&format!("pcgc.stage{}.down", i + 1), c_prev, c, 2));
        nodes.push(relu(&format!("pcgc.stage{}.down.act", i + 1), c));
        for j in 1..=3 {
            nodes.push(vrn(&format!("pcgc.stage{}.vrn{j}", i + 1), c));
        }
        c_prev = c;
    }
    nodes.push(conv("pcgc.latent", c_prev, 8, 1));
    Node::Seq(nodes)
}

pub fn preset_cost(preset: Preset) -> Result<CostReport> {
    match preset.config() {
        Some(cfg) => {
            let mut r = model_cost(&cfg)?;
            r.name = preset.name().into();
            Ok(r)
        }
        None => Ok(CostReport { name: preset.name().into(), layers: blueprint_costs(&learned_pcgc_blueprint(), [64; 3], None) }),
    }
}

/// A figure printed with limited precision, such as `802k` or `1.118B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Displayed(pub &'static str);

impl Displayed {
    fn parts(self) -> (f64, usize, f64) {
        let s = self.0;
        let (num, mult) = match s.chars().last() {
            Some('k') => (&s[..s.len() - 1], 1e3),
            Some('M') => (&s[..s.len() - 1], 1e6),
            Some('B') => (&s[..s.len() - 1], 1e9),
            _ => (s, 1.0),
        };
        let decimals = num.split('.').nth(1).map_or(0, |f| f.len());
        (num.parse().expect("displayed figures are numeric"), decimals, mult)
    }

    /// Whether `value` rounds to this figure at its displayed precision.
    pub fn matches(self, value: u64) -> bool {
        let (shown, decimals, mult) = self.parts();
        let scale = 10f64.powi(decimals as i32);
        ((value as f64 / mult) * scale).round() == (shown * scale).round()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table1Row {
    pub preset: Preset,
    pub ops: Displayed,
    pub params: Displayed,
    pub computed_ops: u64,
    pub computed_params: u64,
}

impl Table1Row {
    pub fn ops_match(&self) -> bool {
        self.ops.matches(self.computed_ops)
    }

    pub fn params_match(&self) -> bool {
        self.params.matches(self.computed_params)
    }
}

/// The comparison-table rows next to this model's figures: operations
/// under [`MacConvention::Table`] and parameters as convolution weights.
pub fn table1_rows() -> Result<Vec<Table1Row>> {
    let target = |p| match p {
        Preset::Baseline => (Displayed("1.118B"), Displayed("802k")),
        Preset::LearnedPcgc => (Displayed("5.233B"), Displayed("311k")),
        Preset::Proposed => (Displayed("1.02B"), Displayed("610k")),
        Preset::Proposed2 => (Displayed("823M"), Displayed("562k")),
    };
    Preset::ALL
        .into_iter()
        .map(|p| {
            let r = preset_cost(p)?;
            let (ops, params) = target(p);
            Ok(Table1Row {
                preset: p,
                ops,
                params,
                computed_ops: r.total_macs(MacConvention::Table),
                computed_params: r.conv_weights(),
            })
        })
        .collect()
}

/// `((n - (k - 1)) / n)^d`: share of an `n^d` input whose `k^d`
/// neighborhood lies entirely inside the unpadded volume.
pub fn utilization_fraction(n: u64, k: u64, d: u32) -> Result<Ratio<u64>> {
    if n <= k.saturating_sub(1) {
        return Err(Error::Invalid(format!("input side {n} must exceed kernel size {k} minus one")));
    }
    Ok(Ratio::new(n - (k - 1), n).pow(d as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    Corner,
    Edge,
    Face,
    Interior,
}

impl Position {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "corner" => Ok(Position::Corner),
            "edge" => Ok(Position::Edge),
            "face" => Ok(Position::Face),
            "interior" => Ok(Position::Interior),
            _ => Err(Error::Config(format!("unknown position '{s}'"))),
        }
    }

    /// Number of axes along which the position touches the boundary.
    fn boundary_axes(self, d: u32) -> u32 {
        match self {
            Position::Corner => d,
            Position::Edge => d.saturating_sub(1),
            Position::Face => d.saturating_sub(2),
            Position::Interior => 0,
        }
    }
}

/// Fraction of the `k^d` taps that fall into zero padding at `position`,
/// by exhaustive enumeration.
pub fn masked_fraction(position: Position, k: u32, d: u32) -> Result<Ratio<u64>> {
    if !(1..=3).contains(&d) || k % 2 == 0 {
        return Err(Error::Invalid(format!("need odd k and 1 <= D <= 3, got k = {k}, D = {d}")));
    }
    let boundary = position.boundary_axes(d);
    let total = (k as u64).pow(d);
    let half = (k / 2) as i64;
    let mut masked = 0;
    for t in 0..total {
        let mut rest = t;
        let mut outside = false;
        for axis in 0..d {
            let off = (rest % k as u64) as i64 - half;
            rest /= k as u64;
            if axis < boundary && off < 0 {
                outside = true;
            }
        }
        if outside {
            masked += 1;
        }
    }
    Ok(Ratio::new(masked, total))
}

/// MAC ratio of the proposed block's factorized paths to full 3D kernels at
/// the same `N/2 -> N/4` channel split.
pub fn proposed_path_ratio(n: usize) -> Ratio<u64> {
    let d = [1; 3];
    let sep = separable_cost_with_mid(n / 2, n / 4, n / 4, d, false).macs;
    let full = conv3d_cost([3; 3], n / 2, n / 4, d, false).macs;
    Ratio::new(sep, full)
}

/// Which parameters count towards a total.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamCounting {
    /// Weights, biases and GDN parameters.
    All,
    /// Convolution weights only.
    ConvWeights,
}

impl ParamCounting {
    pub fn count(self, r: &CostReport) -> u64 {
        match self {
            ParamCounting::All => r.total_params(),
            ParamCounting::ConvWeights => r.conv_weights(),
        }
    }
}

/// Enumerated layouts for [`resolve_config`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub variant: Variant,
    pub c3: Vec<usize>,
    /// `C2 = C3 * num / 4` for each entry.
    pub c2_quarters: Vec<usize>,
    /// `C1 = C2 * num / 4` for each entry.
    pub c1_quarters: Vec<usize>,
    /// `latent = C3 * num / 4`; the hyper width equals the latent width.
    pub latent_quarters: Vec<usize>,
    pub hyper_layers: Vec<usize>,
    pub activations: Vec<ActivationKind>,
    pub bias: Vec<bool>,
    pub block_size: usize,
}

impl SearchSpace {
    /// Arithmetic and geometric schedules with `C3` in {64, 128, 256}.
    pub fn standard(variant: Variant) -> Self {
        SearchSpace {
            variant,
            c3: vec![64, 128, 256],
            c2_quarters: vec![1, 2, 3, 4],
            c1_quarters: vec![1, 2, 3, 4],
            latent_quarters: vec![1, 2, 4],
            hyper_layers: vec![2, 3],
            activations: vec![ActivationKind::Relu, ActivationKind::Gdn],
            bias: vec![false, true],
            block_size: 64,
        }
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &c3 in &self.c3 {
            for &q2 in &self.c2_quarters {
                let c2 = c3 * q2 / 4;
                for &q1 in &self.c1_quarters {
                    let c1 = c2 * q1 / 4;
                    for &ql in &self.latent_quarters {
                        let latent = c3 * ql / 4;
                        for &h in &self.hyper_layers {
                            for &act in &self.activations {
                                for &bias in &self.bias {
                                    let cfg = ModelConfig {
                                        variant: self.variant,
                                        channels: [c1, c2, c3],
                                        latent_channels: latent,
                                        hyper_channels: latent,
                                        hyper_layers: h,
                                        activation: act,
                                        bias,
                                        block_size: self.block_size,
                                        ..ModelConfig::paper(self.variant)
                                    };
                                    if cfg.validate().is_ok() {
                                        out.push(cfg);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn describe(cfg: &ModelConfig) -> String {
    format!(
        "channels {:?}, latent {}, hyper layers {}, {:?}, bias {}",
        cfg.channels, cfg.latent_channels, cfg.hyper_layers, cfg.activation, cfg.bias
    )
}

/// Every config in `space` whose encoder parameter total equals
/// `target`; fails with the five nearest totals when none does.
pub fn resolve_config(target: u64, space: &SearchSpace, counting: ParamCounting) -> Result<Vec<ModelConfig>> {
    let mut scored: Vec<(u64, ModelConfig)> = space
        .configs()
        .into_iter()
        .map(|c| {
            let total = counting.count(&model_cost(&c).expect("configs are validated"));
            (total, c)
        })
        .collect();
    let hits: Vec<ModelConfig> = scored.iter().filter(|(t, _)| *t == target).map(|(_, c)| c.clone()).collect();
    if !hits.is_empty() {
        return Ok(hits);
    }
    scored.sort_by_key(|(t, _)| t.abs_diff(target));
    let nearest = scored
        .iter()
        .take(5)
        .map(|(t, c)| format!("{t} ({:+}; {})", *t as i64 - target as i64, describe(c)))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::NoMatch { target, nearest })
}

/// Every config in `space` whose conv-weight count and table-convention
/// operation count both round to the displayed figures.
pub fn resolve_displayed(params: Displayed, ops: Displayed, space: &SearchSpace) -> Vec<ModelConfig> {
    space
        .configs()
        .into_iter()
        .filter(|c| {
            let r = model_cost(c).expect("configs are validated");
            params.matches(r.conv_weights()) && ops.matches(r.total_macs(MacConvention::Table))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        assert_eq!(conv3d_cost([3; 3], 64, 32, [1; 3], true).params(), 55_328);
        let one = conv3d_cost([1; 3], 1, 1, [1; 3], false);
        assert_eq!((one.params(), one.macs), (1, 1));
        let n = 16u64;
        assert_eq!(conv3d_cost([3; 3], 16, 16, [5; 3], false).macs, 27 * n * n * 125);
        assert_eq!(separable_cost(64, 32, [1; 3], false).params(), 15_360);
        assert_eq!(separable_cost(1, 1, [1; 3], false).macs, 12);
    }

    #[test]
    fn ratio_and_fractions() {
        assert_eq!(proposed_path_ratio(64), Ratio::new(5, 18));
        assert_eq!(utilization_fraction(8, 3, 3).unwrap(), Ratio::new(27, 64));
        assert_eq!(utilization_fraction(16, 3, 3).unwrap(), Ratio::new(343, 512));
        assert_eq!(utilization_fraction(16, 3, 0).unwrap(), Ratio::from_integer(1));
        assert!(utilization_fraction(2, 3, 3).is_err());
        assert_eq!(masked_fraction(Position::Corner, 3, 2).unwrap(), Ratio::new(5, 9));
        assert_eq!(masked_fraction(Position::Corner, 3, 3).unwrap(), Ratio::new(19, 27));
        for d in 1..=3 {
            assert_eq!(masked_fraction(Position::Interior, 3, d).unwrap(), Ratio::from_integer(0));
            let expect = Ratio::from_integer(1) - Ratio::new(2u64, 3).pow(d as i32);
            assert_eq!(masked_fraction(Position::Corner, 3, d).unwrap(), expect);
        }
        assert_eq!(masked_fraction(Position::Face, 3, 3).unwrap(), Ratio::new(1, 3));
    }

    #[test]
    fn table_figures() {
        let rows = table1_rows().unwrap();
        let get = |p| rows.iter().find(|r| r.preset == p).unwrap().clone();
        assert_eq!(get(Preset::Baseline).computed_params, 802_224);
        assert_eq!(get(Preset::Proposed).computed_params, 610_224);
        assert_eq!(get(Preset::Proposed2).computed_params, 562_224);
        assert_eq!(get(Preset::Baseline).computed_ops, 1_118_306_304);
        assert_eq!(get(Preset::Proposed).computed_ops, 1_020_002_304);
        assert_eq!(get(Preset::Proposed2).computed_ops, 823_394_304);
        for p in [Preset::Baseline, Preset::Proposed, Preset::Proposed2] {
            assert!(get(p).ops_match() && get(p).params_match(), "{p:?}");
        }
        let out = preset_cost(Preset::Baseline).unwrap().total_macs(MacConvention::OutputVolume);
        assert_eq!(out, 1_013_022_720);
    }

    #[test]
    fn displayed_rounding() {
        assert!(Displayed("802k").matches(802_224));
        assert!(!Displayed("802k").matches(806_888));
        assert!(Displayed("1.02B").matches(1_020_002_304));
        assert!(Displayed("823M").matches(823_394_304));
        assert!(!Displayed("1.118B").matches(1_013_022_720));
    }

    #[test]
    fn resolve_self_consistency_and_miss_report() {
        let space = SearchSpace { c3: vec![64], ..SearchSpace::standard(Variant::Baseline) };
        let known = model_cost(&ModelConfig::paper(Variant::Baseline)).unwrap().total_params();
        let hits = resolve_config(known, &space, ParamCounting::All).unwrap();
        assert!(hits.contains(&ModelConfig::paper(Variant::Baseline)));
        match resolve_config(3, &space, ParamCounting::All) {
            Err(Error::NoMatch { nearest, .. }) => assert_eq!(nearest.matches("; channels").count(), 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn text_and_csv_totals() {
        let r = preset_cost(Preset::Proposed).unwrap();
        assert!(r.to_text().contains("TOTAL"));
        let last = r.to_csv().lines().last().unwrap().to_string();
        assert!(last.starts_with("TOTAL,610224,"));
        assert!(Preset::parse("nope").is_err());
    }
}
