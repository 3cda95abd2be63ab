//! `pcgc`: dataset preparation, training, coding, evaluation, cost analysis
//! and plotting for the learned point-cloud geometry codec.

mod manifest;
mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pcgc_core::architecture::Variant;
use pcgc_core::codec::{measure, read_rd_csv, train, write_rd_csv, Bitstream, Codec, Progress, RdPoint};
use pcgc_core::config::RunConfig;
use pcgc_core::cost_model::{model_cost, preset_cost, resolve_config, table1_rows, MacConvention, ParamCounting, Preset, SearchSpace};
use pcgc_core::geometry::synthetic::{synthetic_blocks, synthetic_cloud};
use pcgc_core::geometry::{
    load_off, load_point_cloud, partition_octree, read_block_archive, sample_mesh_surface, select_densest_blocks, voxelize,
    write_block_archive, write_ply, PlyFormat, PointCloud, VoxelBlock,
};
use pcgc_core::metrics::bd::{bd_psnr, bd_rate, RdCurve};
use pcgc_core::nn::Checkpoint;
use pcgc_core::Error as CoreError;

use manifest::{sha256_hex, RunManifest};

/// Environment variable naming a directory for cached voxelized inputs.
const CACHE_ENV: &str = "PCGC_CACHE_DIR";

#[derive(Parser)]
#[command(name = "pcgc", version, about = "Learned point-cloud geometry compression workbench")]
struct Cli {
    /// Worker threads for per-block and per-file parallel work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

/// Model/schedule selection shared by commands that need a configuration.
#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// Run configuration TOML ([model] and [schedule] sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile used when no --config is given.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Variant used with --profile.
    #[arg(long, default_value = "proposed")]
    variant: String,
    /// Dotted overrides such as schedule.batch=4 or model.activation=cgdn.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::profile(&self.profile, Variant::parse(&self.variant)?)?,
        };
        Ok(base.with_overrides(&self.overrides)?)
    }

    fn record(&self, m: &mut RunManifest) -> Result<()> {
        match &self.config {
            Some(p) => {
                m.config_path = Some(p.display().to_string());
                m.input(p)?;
            }
            None => {
                m.setting("profile", &self.profile).setting("variant", &self.variant);
            }
        }
        for (i, o) in self.overrides.iter().enumerate() {
            m.setting(&format!("set.{i}"), o);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    D1,
    D2,
}

#[derive(Subcommand)]
enum Command {
    /// Build a block archive from meshes/point clouds or synthetic shapes.
    Prepare {
        /// Directory of .off meshes and .ply clouds.
        dataset: Option<PathBuf>,
        /// Generate synthetic blocks instead of reading a dataset.
        #[arg(long)]
        synthetic: bool,
        /// Number of synthetic blocks.
        #[arg(long, default_value_t = 128)]
        blocks: usize,
        #[arg(long, default_value_t = 64)]
        block_size: usize,
        #[arg(long, default_value_t = 512)]
        resolution: u32,
        /// Blocks retained (densest first).
        #[arg(long, default_value_t = 4000)]
        keep: usize,
        /// Largest clouds (by point count) drawn from the dataset.
        #[arg(long, default_value_t = 200)]
        clouds: usize,
        /// Surface samples per mesh.
        #[arg(long, default_value_t = 500_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a synthetic test cloud as PLY.
    Generate {
        #[arg(long, default_value_t = 64)]
        resolution: u32,
        #[arg(long, default_value_t = 3)]
        shapes: usize,
        #[arg(long, default_value_t = 77)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train one checkpoint per λ (warm-started in ascending order).
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Block archive from `prepare`.
        #[arg(long)]
        archive: PathBuf,
        /// Output directory for checkpoints, index, log and manifest.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compress a PLY cloud.
    Encode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration; defaults to config.toml beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid resolution, overriding the PLY header.
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decompress a .bin stream to PLY.
    Decode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write ASCII rather than binary PLY.
        #[arg(long)]
        ascii: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode streams, measure rate and D1/D2 PSNR, write rd.csv.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        /// Training output directory (index.json, config.toml, checkpoints).
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(required = true)]
        streams: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Bjøntegaard delta rate and PSNR between two rd.csv files.
    Bd {
        reference: PathBuf,
        test: PathBuf,
        #[arg(long, value_enum, default_value = "d1")]
        metric: Metric,
    },
    /// Per-layer parameter and MAC table.
    AnalyzeCost {
        /// baseline, learned_pcgc, proposed or proposed2.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Run configuration whose [model] is costed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Compare every preset with the comparison-table figures.
        #[arg(long)]
        table1: bool,
    },
    /// Search channel layouts whose encoder parameter total equals a target.
    ResolveConfig {
        #[arg(long)]
        target: u64,
        #[arg(long, default_value = "baseline")]
        variant: String,
        /// Count convolution weights only instead of all parameters.
        #[arg(long)]
        conv_weights_only: bool,
    },
    /// Print the resolved run configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// SVG of D1 PSNR vs bits per point for one or more rd.csv files.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Exit code for an error: 2 for bad data or configuration, 3 for
/// violated internal invariants.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<CoreError>()) {
        Some(CoreError::Structure(_) | CoreError::NonFinite(_) | CoreError::Diverged { .. }) => 3,
        _ => 2,
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    match e.chain().find_map(|c| c.downcast_ref::<CoreError>()) {
        Some(CoreError::Io(_)) => "io",
        Some(CoreError::Parse { .. }) => "parse",
        Some(CoreError::OutOfRange { .. }) => "out_of_range",
        Some(CoreError::Shape(_)) => "shape",
        Some(CoreError::Config(_)) => "config",
        Some(CoreError::Invalid(_)) => "invalid",
        Some(CoreError::Structure(_)) => "structure",
        Some(CoreError::NonFinite(_)) => "non_finite",
        Some(CoreError::Diverged { .. }) => "diverged",
        Some(CoreError::Corrupt(_)) => "corrupt",
        Some(CoreError::NoMatch { .. }) => "no_match",
        None if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) => "io",
        None => "data",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error: kind={} code={code} message={:?}", error_kind(&e), msg);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(CoreError::Invalid("--jobs must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global().context("configuring worker threads")?;
    match cli.command {
        Command::Prepare { dataset, synthetic, blocks, block_size, resolution, keep, clouds, samples, seed, output } => {
            cmd_prepare(dataset, synthetic, blocks, block_size, resolution, keep, clouds, samples, seed, &output)
        }
        Command::Generate { resolution, shapes, seed, output } => cmd_generate(resolution, shapes, seed, &output),
        Command::Train { config, archive, output } => cmd_train(&config, &archive, &output),
        Command::Encode { input, checkpoint, config, resolution, output } => {
            cmd_encode(&input, &checkpoint, config.as_deref(), resolution, &output)
        }
        Command::Decode { input, checkpoint, config, ascii, output } => {
            cmd_decode(&input, &checkpoint, config.as_deref(), ascii, &output)
        }
        Command::Evaluate { reference, run, resolution, streams, output } => {
            cmd_evaluate(&reference, &run, resolution, &streams, &output)
        }
        Command::Bd { reference, test, metric } => cmd_bd(&reference, &test, metric),
        Command::AnalyzeCost { preset, config, format, table1 } => cmd_analyze_cost(preset, config, format, table1),
        Command::ResolveConfig { target, variant, conv_weights_only } => cmd_resolve(target, &variant, conv_weights_only),
        Command::ShowConfig { config } => {
            print!("{}", config.resolve()?.to_toml_string());
            Ok(())
        }
        Command::Plot { inputs, output } => cmd_plot(&inputs, &output),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).map_err(CoreError::from).with_context(|| format!("writing {}", path.display()))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(CoreError::from).with_context(|| format!("reading {}", path.display()))
}

// ---------------------------------------------------------------- prepare

/// Voxelized cloud for one dataset file, via the cache when configured.
fn load_dataset_cloud(path: &Path, resolution: u32, samples: usize, seed: u64) -> Result<PointCloud> {
    let bytes = read_file(path)?;
    let key = sha256_hex(format!("{}:{resolution}:{samples}:{seed}", sha256_hex(&bytes)).as_bytes());
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    if let Some(dir) = &cache {
        let cached = dir.join(format!("{key}.ply"));
        if cached.exists() {
            return Ok(load_point_cloud(&cached, Some(resolution))?);
        }
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let cloud = match ext.as_str() {
        "off" => {
            let mesh = load_off(path)?;
            voxelize(&sample_mesh_surface(&mesh, samples, seed)?, resolution)?
        }
        _ => {
            let c = load_point_cloud(path, None)?;
            if c.resolution() == resolution {
                c
            } else {
                voxelize(&c.as_f64(), resolution)?
            }
        }
    };
    if let Some(dir) = &cache {
        write_file(&dir.join(format!("{key}.ply")), &write_ply(&cloud, PlyFormat::BinaryLittleEndian))?;
    }
    Ok(cloud)
}

#[allow(clippy::too_many_arguments)]
fn cmd_prepare(
    dataset: Option<PathBuf>,
    synthetic: bool,
    count: usize,
    block_size: usize,
    resolution: u32,
    keep: usize,
    clouds: usize,
    samples: usize,
    seed: u64,
    output: &Path,
) -> Result<()> {
    let mut m = RunManifest::new("prepare");
    m.seed("seed", seed).setting("block_size", block_size);
    let blocks: Vec<VoxelBlock> = if synthetic {
        if dataset.is_some() {
            bail!(CoreError::Config("give either a dataset directory or --synthetic, not both".into()));
        }
        m.setting("synthetic_blocks", count);
        synthetic_blocks(count, block_size, seed)?
    } else {
        let dir = dataset.ok_or_else(|| CoreError::Config("a dataset directory or --synthetic is required".into()))?;
        m.setting("resolution", resolution).setting("keep", keep).setting("clouds", clouds).setting("samples", samples);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(CoreError::from)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(), Some("off" | "ply")))
            .collect();
        files.sort();
        if files.is_empty() {
            bail!(CoreError::Invalid(format!("no .off or .ply files in {}", dir.display())));
        }
        let loaded: Vec<PointCloud> = files
            .par_iter()
            .map(|f| load_dataset_cloud(f, resolution, samples, seed).with_context(|| format!("preparing {}", f.display())))
            .collect::<Result<_>>()?;
        for f in &files {
            m.input(f)?;
        }
        // The largest clouds by point count, ties in file order.
        let mut order: Vec<usize> = (0..loaded.len()).collect();
        order.sort_by(|&a, &b| loaded[b].len().cmp(&loaded[a].len()).then(a.cmp(&b)));
        order.truncate(clouds);
        order.sort_unstable();
        let mut candidates = Vec::new();
        for i in order {
            candidates.extend(partition_octree(&loaded[i], block_size)?.1);
        }
        select_densest_blocks(candidates, keep)
    };
    if blocks.is_empty() {
        bail!(CoreError::Invalid("dataset produced no blocks".into()));
    }
    write_file(output, &write_block_archive(&blocks, block_size)?)?;
    m.setting("blocks_written", blocks.len());
    m.output(output)?;
    m.write_beside(output)?;
    println!("wrote {} blocks of size {block_size} to {}", blocks.len(), output.display());
    Ok(())
}

fn cmd_generate(resolution: u32, shapes: usize, seed: u64, output: &Path) -> Result<()> {
    let cloud = synthetic_cloud(resolution, shapes, seed)?;
    write_file(output, &write_ply(&cloud, PlyFormat::BinaryLittleEndian))?;
    let mut m = RunManifest::new("generate");
    m.seed("seed", seed).setting("resolution", resolution).setting("shapes", shapes);
    m.output(output)?;
    m.write_beside(output)?;
    println!("wrote {} points at resolution {resolution} to {}", cloud.len(), output.display());
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    lambda: f64,
    file: String,
    content_id: String,
    steps: usize,
    best_validation_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunIndex {
    variant: String,
    checkpoints: Vec<IndexEntry>,
}

fn cmd_train(args: &ConfigArgs, archive: &Path, output: &Path) -> Result<()> {
    let cfg = args.resolve()?;
    let (block_size, blocks) = read_block_archive(&read_file(archive)?)?;
    if block_size != cfg.model.block_size {
        bail!(CoreError::Config(format!(
            "archive holds {block_size}^3 blocks but the model expects {}^3",
            cfg.model.block_size
        )));
    }
    let n_val = cfg.schedule.validation_batches * cfg.schedule.batch;
    if blocks.len() <= n_val {
        bail!(CoreError::Invalid(format!(
            "archive has {} blocks; {n_val} are held out for validation and at least one more is needed",
            blocks.len()
        )));
    }
    let (train_blocks, validation) = blocks.split_at(blocks.len() - n_val);
    fs::create_dir_all(output).map_err(CoreError::from).with_context(|| format!("creating {}", output.display()))?;

    let mut log = String::from("lambda,step,kind,loss,rate_bits,distortion\n");
    let runs = train(&cfg.model, &cfg.schedule, train_blocks, validation, &mut |p| match p {
        Progress::Step { lambda, step, terms } => {
            log.push_str(&format!("{lambda},{step},train,{},{},{}\n", terms.loss, terms.rate_bits, terms.distortion));
        }
        Progress::Validation { lambda, step, terms, best } => {
            log.push_str(&format!("{lambda},{step},validation,{},{},{}\n", terms.loss, terms.rate_bits, terms.distortion));
            eprintln!(
                "lambda {lambda:e} step {step}: validation loss {:.3} (rate {:.2} bits, distortion {:.5}){}",
                terms.loss,
                terms.rate_bits,
                terms.distortion,
                if best { " *" } else { "" }
            );
        }
        Progress::Finished { lambda, steps } => eprintln!("lambda {lambda:e} finished after {steps} steps"),
    })?;

    let mut m = RunManifest::new("train");
    args.record(&mut m)?;
    m.input(archive)?;
    m.seed("model", cfg.model.seed).seed("schedule", cfg.schedule.seed);
    let config_path = output.join("config.toml");
    write_file(&config_path, cfg.to_toml_string().as_bytes())?;
    let mut entries = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let file = format!("lambda_{i}.ckpt");
        let path = output.join(&file);
        r.checkpoint.save(&path)?;
        let best = r.validations.iter().map(|v| v.terms.loss).fold(f64::INFINITY, f64::min);
        m.checkpoints.insert(file.clone(), r.checkpoint.content_hash_hex());
        entries.push(IndexEntry {
            lambda: r.lambda,
            file,
            content_id: format!("{:016x}", r.checkpoint.content_id()),
            steps: r.steps,
            best_validation_loss: best,
        });
        m.output(&path)?;
    }
    let index = RunIndex { variant: cfg.model.variant.name().into(), checkpoints: entries };
    let index_path = output.join("index.json");
    write_file(&index_path, format!("{}\n", serde_json::to_string_pretty(&index)?).as_bytes())?;
    let log_path = output.join("train_log.csv");
    write_file(&log_path, log.as_bytes())?;
    for p in [&config_path, &index_path, &log_path] {
        m.output(p)?;
    }
    m.write_beside(output)?;
    println!("trained {} checkpoints into {}", runs.len(), output.display());
    Ok(())
}

// ---------------------------------------------------------------- coding

fn config_for(checkpoint: &Path, config: Option<&Path>) -> Result<(PathBuf, RunConfig)> {
    let path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join("config.toml"),
    };
    let cfg = RunConfig::load(&path).with_context(|| format!("loading run configuration {}", path.display()))?;
    Ok((path, cfg))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn cmd_encode(input: &Path, checkpoint: &Path, config: Option<&Path>, resolution: Option<u32>, output: &Path) -> Result<()> {
    let (config_path, cfg) = config_for(checkpoint, config)?;
    let ck = load_checkpoint(checkpoint)?;
    let cloud = load_point_cloud(input, resolution).with_context(|| format!("loading {}", input.display()))?;
    let mut codec = Codec::new(&cfg.model, &ck)?;
    let (stream, stats) = codec.encode(&cloud)?;
    let bytes = stream.to_bytes();
    write_file(output, &bytes)?;

    let mut m = RunManifest::new("encode");
    m.config_path = Some(config_path.display().to_string());
    m.input(input)?.input(checkpoint)?.input(&config_path)?;
    m.checkpoints.insert(checkpoint.display().to_string(), ck.content_hash_hex());
    m.setting("points", cloud.len()).setting("blocks", stats.len()).setting("bytes", bytes.len());
    m.output(output)?;
    m.write_beside(output)?;
    println!(
        "encoded {} points in {} blocks: {} bytes, {:.4} bits per point",
        cloud.len(),
        stats.len(),
        bytes.len(),
        8.0 * bytes.len() as f64 / cloud.len() as f64
    );
    Ok(())
}

fn cmd_decode(input: &Path, checkpoint: &Path, config: Option<&Path>, ascii: bool, output: &Path) -> Result<()> {
    let (config_path, cfg) = config_for(checkpoint, config)?;
    let ck = load_checkpoint(checkpoint)?;
    let stream = Bitstream::from_bytes(&read_file(input)?).with_context(|| format!("parsing {}", input.display()))?;
    let cloud = Codec::new(&cfg.model, &ck)?.decode(&stream)?;
    let format = if ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    write_file(output, &write_ply(&cloud, format))?;

    let mut m = RunManifest::new("decode");
    m.config_path = Some(config_path.display().to_string());
    m.input(input)?.input(checkpoint)?.input(&config_path)?;
    m.checkpoints.insert(checkpoint.display().to_string(), ck.content_hash_hex());
    m.setting("points", cloud.len());
    m.output(output)?;
    m.write_beside(output)?;
    println!("decoded {} points to {}", cloud.len(), output.display());
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn cmd_evaluate(reference: &Path, run: &Path, resolution: Option<u32>, streams: &[PathBuf], output: &Path) -> Result<()> {
    let index_path = run.join("index.json");
    let index: RunIndex = serde_json::from_slice(&read_file(&index_path)?)
        .map_err(|e| CoreError::Parse { line: e.line(), msg: e.to_string() })
        .with_context(|| format!("parsing {}", index_path.display()))?;
    let config_path = run.join("config.toml");
    let cfg = RunConfig::load(&config_path).with_context(|| format!("loading {}", config_path.display()))?;
    let reference_cloud = load_point_cloud(reference, resolution).with_context(|| format!("loading {}", reference.display()))?;
    let by_id: BTreeMap<&str, &IndexEntry> = index.checkpoints.iter().map(|e| (e.content_id.as_str(), e)).collect();

    let results: Vec<(RdPoint, String)> = streams
        .par_iter()
        .map(|path| -> Result<(RdPoint, String)> {
            let bytes = read_file(path)?;
            let stream = Bitstream::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?;
            let id = format!("{:016x}", stream.header.lambda_id);
            let entry = by_id.get(id.as_str()).ok_or_else(|| {
                anyhow!(CoreError::Config(format!("{} was coded with checkpoint {id}, which is not in {}", path.display(), index_path.display())))
            })?;
            let ck = load_checkpoint(&run.join(&entry.file))?;
            let decoded = Codec::new(&cfg.model, &ck)?.decode(&stream).with_context(|| format!("decoding {}", path.display()))?;
            let (point, _) = measure(&reference_cloud, bytes.len(), &decoded, entry.lambda)?;
            Ok((point, entry.file.clone()))
        })
        .collect::<Result<_>>()?;
    let mut points: Vec<RdPoint> = results.iter().map(|(p, _)| *p).collect();
    points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.bpp.total_cmp(&b.bpp)));
    write_file(output, write_rd_csv(&points)?.as_bytes())?;

    let mut m = RunManifest::new("evaluate");
    m.config_path = Some(config_path.display().to_string());
    m.input(reference)?.input(&index_path)?.input(&config_path)?;
    for s in streams {
        m.input(s)?;
    }
    for (_, file) in &results {
        m.checkpoints.insert(file.clone(), load_checkpoint(&run.join(file))?.content_hash_hex());
    }
    m.output(output)?;
    m.write_beside(output)?;
    for p in &points {
        println!("lambda {:e}: {:.4} bpp, D1 {:.3} dB, D2 {:.3} dB", p.lambda, p.bpp, p.d1_psnr, p.d2_psnr);
    }
    Ok(())
}

fn load_rd(path: &Path) -> Result<Vec<RdPoint>> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| CoreError::Parse { line: 1, msg: e.to_string() })?;
    read_rd_csv(&text).with_context(|| format!("reading {}", path.display()))
}

fn curve(points: &[RdPoint], metric: Metric) -> Result<RdCurve> {
    let mut pts: Vec<(f64, f64)> =
        points.iter().map(|p| (p.bpp, if matches!(metric, Metric::D1) { p.d1_psnr } else { p.d2_psnr })).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(RdCurve::new(pts)?)
}

fn cmd_bd(reference: &Path, test: &Path, metric: Metric) -> Result<()> {
    let r = curve(&load_rd(reference)?, metric).with_context(|| format!("reference curve {}", reference.display()))?;
    let t = curve(&load_rd(test)?, metric).with_context(|| format!("test curve {}", test.display()))?;
    let rate = bd_rate(&r, &t)?;
    let psnr = bd_psnr(&r, &t)?;
    let name = if matches!(metric, Metric::D1) { "d1" } else { "d2" };
    println!("metric={name} bd_rate_percent={rate:.4} bd_psnr_db={psnr:.4}");
    Ok(())
}

// ---------------------------------------------------------------- cost

fn cmd_analyze_cost(preset: Option<String>, config: Option<PathBuf>, format: Format, table1: bool) -> Result<()> {
    if table1 {
        let rows = table1_rows()?;
        match format {
            Format::Csv => {
                println!("preset,displayed_ops,computed_ops,ops_match,displayed_params,computed_params,params_match");
                for r in &rows {
                    println!(
                        "{},{},{},{},{},{},{}",
                        r.preset.name(),
                        r.ops.0,
                        r.computed_ops,
                        r.ops_match(),
                        r.params.0,
                        r.computed_params,
                        r.params_match()
                    );
                }
            }
            Format::Text => {
                println!("{:<14} {:>8} {:>14} {:>6} {:>8} {:>10} {:>6}", "preset", "ops", "computed", "match", "params", "computed", "match");
                for r in &rows {
                    println!(
                        "{:<14} {:>8} {:>14} {:>6} {:>8} {:>10} {:>6}",
                        r.preset.name(),
                        r.ops.0,
                        r.computed_ops,
                        r.ops_match(),
                        r.params.0,
                        r.computed_params,
                        r.params_match()
                    );
                }
                for r in rows.iter().filter(|r| !(r.ops_match() && r.params_match())) {
                    println!(
                        "discrepancy: {} computes {} ops / {} params against the displayed {} / {}; its layer list is reconstructed, not published with these figures",
                        r.preset.name(),
                        r.computed_ops,
                        r.computed_params,
                        r.ops.0,
                        r.params.0
                    );
                }
            }
        }
        return Ok(());
    }
    let report = match (preset, config) {
        (Some(p), None) => preset_cost(Preset::parse(&p)?)?,
        (None, Some(c)) => model_cost(&RunConfig::load(&c).with_context(|| format!("loading {}", c.display()))?.model)?,
        (None, None) => bail!(CoreError::Config("give --preset, --config or --table1".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects --preset with --config"),
    };
    match format {
        Format::Text => {
            print!("{}", report.to_text());
            let baseline = preset_cost(Preset::Baseline)?;
            let ratio = |a: u64, b: u64| 100.0 * (1.0 - a as f64 / b as f64);
            println!(
                "vs baseline: parameters -{:.2}%, conv weights -{:.2}%, macs -{:.2}%",
                ratio(report.total_params(), baseline.total_params()),
                ratio(report.conv_weights(), baseline.conv_weights()),
                ratio(report.total_macs(MacConvention::OutputVolume), baseline.total_macs(MacConvention::OutputVolume))
            );
        }
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn cmd_resolve(target: u64, variant: &str, conv_weights_only: bool) -> Result<()> {
    let counting = if conv_weights_only { ParamCounting::ConvWeights } else { ParamCounting::All };
    let hits = resolve_config(target, &SearchSpace::standard(Variant::parse(variant)?), counting)?;
    for c in hits {
        println!(
            "channels={:?} latent={} hyper_layers={} activation={:?} bias={}",
            c.channels, c.latent_channels, c.hyper_layers, c.activation, c.bias
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- plot

fn cmd_plot(inputs: &[PathBuf], output: &Path) -> Result<()> {
    let mut series = Vec::new();
    let mut data = String::from("series,lambda,bpp,d1_psnr,d2_psnr\n");
    for path in inputs {
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = if name == "rd" {
            path.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned()).unwrap_or(name)
        } else {
            name
        };
        let points = load_rd(path)?;
        for p in &points {
            data.push_str(&format!("{name},{},{},{},{}\n", p.lambda, p.bpp, p.d1_psnr, p.d2_psnr));
        }
        series.push((name, points));
    }
    write_file(output, plot::rd_svg(&series).as_bytes())?;
    let csv_path = output.with_extension("csv");
    write_file(&csv_path, data.as_bytes())?;
    let mut m = RunManifest::new("plot");
    for p in inputs {
        m.input(p)?;
    }
    m.output(output)?.output(&csv_path)?;
    m.write_beside(output)?;
    println!("wrote {} and {}", output.display(), csv_path.display());
    Ok(())
}
