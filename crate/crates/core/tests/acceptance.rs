//! Acceptance criteria 1-7. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use num_rational::Ratio;
use pcgc_core::architecture::{ModelConfig, Variant};
use pcgc_core::codec::{evaluate_rd, train, train_lambda, Codec, CompressionModel, RdPoint, TrainSchedule};
use pcgc_core::cost_model::{
    masked_fraction, model_cost, proposed_path_ratio, table1_rows, utilization_fraction, Position, Preset,
};
use pcgc_core::entropy::{range_decode, range_encode, CdfTable};
use pcgc_core::geometry::synthetic::{synthetic_blocks, synthetic_cloud};
use pcgc_core::geometry::{partition_octree, PointCloud};
use pcgc_core::gradient_suite::run_gradient_suite;
use pcgc_core::metrics::{bd_psnr, bd_rate, d1_mse, d1_psnr, d2_mse, estimate_normals, NormalField, RdCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: a verdict plus the lines that justify it.
struct Outcome {
    pass: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, notes: Vec::new() }
    }

    /// Records a named check.
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.notes.push(format!("[{}] {}", if ok { "ok" } else { "MISS" }, what.into()));
        self.pass &= ok;
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(format!("      {}", what.into()));
    }

    fn within(&mut self, elapsed: Duration, limit: Duration) {
        self.check(elapsed < limit, format!("runtime {:.1?} < {:?}", elapsed, limit));
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut o = Outcome::new();
    let base = model_cost(&ModelConfig::paper(Variant::Baseline)).unwrap().total_params();
    let prop = model_cost(&ModelConfig::paper(Variant::Proposed)).unwrap().total_params();
    let reduction = 100.0 * (base as f64 - prop as f64) / base as f64;
    o.check(base == 806_888, format!("baseline encoder total {base} == 806888"));
    o.check(prop == 639_192, format!("proposed encoder total {prop} == 639192"));
    o.note(format!("computed reduction {reduction:.2}% (quoted 20.78%)"));
    for row in table1_rows().unwrap() {
        let line = format!(
            "{}: ops {} vs {} ({}), params {} vs {} ({})",
            row.preset.name(),
            row.computed_ops,
            row.ops.0,
            row.ops_match(),
            row.computed_params,
            row.params.0,
            row.params_match()
        );
        if row.preset == Preset::LearnedPcgc {
            // Excluded from exact match; a mismatch must be reported as a discrepancy.
            let flagged = !(row.ops_match() && row.params_match());
            o.check(true, format!("{line} -> {}", if flagged { "flagged with discrepancy report" } else { "matches" }));
        } else {
            o.check(row.ops_match() && row.params_match(), line);
        }
    }
    o.within(t.elapsed(), Duration::from_secs(1));
    o
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let r = proposed_path_ratio(64);
    o.check(r == Ratio::new(5, 18), format!("separable/full MAC ratio {r} == 5/18"));
    let u8 = utilization_fraction(8, 3, 3).unwrap();
    let u16 = utilization_fraction(16, 3, 3).unwrap();
    o.check(u8 == Ratio::new(27, 64), format!("utilization_fraction(8,3,3) = {u8}"));
    o.check(u16 == Ratio::new(343, 512), format!("utilization_fraction(16,3,3) = {u16}"));
    let m2 = masked_fraction(Position::Corner, 3, 2).unwrap();
    let m3 = masked_fraction(Position::Corner, 3, 3).unwrap();
    o.check(m2 == Ratio::new(5, 9), format!("corner masked fraction D=2 = {m2}"));
    o.check(m3 == Ratio::new(19, 27), format!("corner masked fraction D=3 = {m3}"));
    o
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let mut o = Outcome::new();
    let checks = run_gradient_suite(2024).unwrap();
    for c in &checks {
        o.check(c.max_rel_error < 1e-4, format!("{:<40} max rel err {:.2e} over {} coords", c.name, c.max_rel_error, c.coords_checked));
    }
    for needle in ["conv3d", "transposed", "axis", "plane", "relu", "gdn", "cgdn", "focal", "gaussian", "factorized", "f_s(q(f_a(x)))"] {
        let found = checks.iter().any(|c| c.name.to_lowercase().contains(needle));
        o.check(found, format!("suite covers '{needle}'"));
    }
    o.within(t.elapsed(), Duration::from_secs(300));
    o
}

// ---------------------------------------------------------------- 4

fn random_table(rng: &mut ChaCha8Rng) -> CdfTable {
    let n = rng.gen_range(1..40);
    let pmf: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(3) + 1e-9).collect();
    CdfTable::from_pmf(rng.gen_range(-20..20), &pmf).unwrap()
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    for _ in 0..10_000 {
        let pool: Vec<CdfTable> = (0..rng.gen_range(1..4)).map(|_| random_table(&mut rng)).collect();
        let len = rng.gen_range(0..200);
        let tables: Vec<&CdfTable> = (0..len).map(|_| &pool[rng.gen_range(0..pool.len())]).collect();
        let symbols: Vec<i32> = tables.iter().map(|t| t.min_sym + rng.gen_range(0..t.len() as i32)).collect();
        let bytes = range_encode(&symbols, &tables).unwrap();
        if range_decode(&bytes, &tables).ok().as_ref() != Some(&symbols) {
            failures += 1;
        }
    }
    o.check(failures == 0, format!("10^4 fuzz round trips, {failures} failures"));

    let mut worst: f64 = 0.0;
    let mut blocks_checked = 0;
    for (variant, seed) in [(Variant::Baseline, 1), (Variant::Proposed, 2), (Variant::BaselineCgdn, 3)] {
        let cfg = ModelConfig::desk(variant);
        let ck = CompressionModel::new(&ModelConfig { seed, ..cfg.clone() }).unwrap().checkpoint();
        let cloud = synthetic_cloud(64, 3, seed).unwrap();
        let mut codec = Codec::new(&cfg, &ck).unwrap();
        let (stream, stats) = codec.encode(&cloud).unwrap();
        let decoded = codec.decode(&stream).unwrap();
        let (octree, blocks) = partition_octree(&cloud, cfg.block_size).unwrap();
        let (doctree, dblocks) = partition_octree(&decoded, cfg.block_size).unwrap();
        o.check(doctree == octree && stream.octree == octree, format!("{}: octree recovered losslessly", variant.name()));
        let counts_ok = blocks.len() == dblocks.len()
            && blocks.iter().zip(&dblocks).zip(&stream.blocks).all(|((a, b), r)| {
                a.point_count() == b.point_count() && r.point_count as usize == b.point_count()
            });
        o.check(counts_ok, format!("{}: per-block point counts equal the transmitted counts", variant.name()));
        for s in &stats {
            let est = s.estimated_bits / 8.0;
            let coded = s.coded_bytes() as f64;
            worst = worst.max((coded - est).abs() - 0.01 * est);
            blocks_checked += 1;
        }
    }
    o.check(worst <= 32.0, format!("{blocks_checked} blocks: max(|coded - estimate| - 1% estimate) = {worst:.1} B <= 32 B"));
    o.within(t.elapsed(), Duration::from_secs(120));
    o
}

// ---------------------------------------------------------------- 5

fn rd_table(o: &mut Outcome, name: &str, rd: &[RdPoint]) {
    for p in rd {
        o.note(format!("{name:<14} lambda {:<7} bpp {:.4}  D1 {:.2} dB  D2 {:.2} dB", p.lambda, p.bpp, p.d1_psnr, p.d2_psnr));
    }
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut o = Outcome::new();
    let blocks = synthetic_blocks(208, 16, 1).unwrap();
    let (train_blocks, validation) = blocks.split_at(128);
    let cloud = synthetic_cloud(64, 3, 77).unwrap();
    let schedule = TrainSchedule::desk();

    // Smoke run: 200 steps at the first λ without early stopping.
    let smoke = TrainSchedule { max_steps: 200, patience: usize::MAX, ..schedule.clone() };
    let mut model = CompressionModel::new(&ModelConfig::desk(Variant::Proposed)).unwrap();
    let run = train_lambda(&mut model, &smoke, 0, train_blocks, validation, &mut |_| {}).unwrap();
    let windows: Vec<f64> = run.train_losses.chunks(50).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let strictly = windows.windows(2).all(|w| w[1] < w[0]);
    o.check(
        run.steps == 200 && strictly,
        format!("smoke run: mean training loss per 50-step window {:.1?} strictly decreases", windows),
    );

    let mut curves = Vec::new();
    for variant in [Variant::Baseline, Variant::BaselineCgdn] {
        let cfg = ModelConfig::desk(variant);
        let runs = train(&cfg, &schedule, train_blocks, validation, &mut |_| {}).unwrap();
        let warm = runs.windows(2).all(|w| w[1].initial == w[0].checkpoint);
        o.check(warm, format!("{}: each λ warm-starts from the previous checkpoint", variant.name()));
        let cks: Vec<_> = runs.iter().map(|r| (r.lambda, r.checkpoint.clone())).collect();
        let rd = evaluate_rd(&cloud, &cks, &cfg).unwrap();
        rd_table(&mut o, variant.name(), &rd);
        let mono = rd.windows(2).all(|w| w[1].bpp >= w[0].bpp && w[1].d1_psnr >= w[0].d1_psnr);
        o.check(mono, format!("{}: bpp and D1 PSNR nondecreasing in λ", variant.name()));
        curves.push(rd);
    }
    let ordered = curves[0].iter().zip(&curves[1]).all(|(relu, cgdn)| cgdn.d1_psnr >= relu.d1_psnr);
    let gaps: Vec<String> = curves[0].iter().zip(&curves[1]).map(|(r, c)| format!("{:+.2}", c.d1_psnr - r.d1_psnr)).collect();
    o.check(ordered, format!("CGDN D1 PSNR >= ReLU at every λ (gaps dB: {})", gaps.join(", ")));
    o.within(t.elapsed(), Duration::from_secs(30 * 60));
    o
}

// ---------------------------------------------------------------- 6

fn brute_directional(from: &[[f64; 3]], to: &[[f64; 3]], normals: Option<&NormalField>) -> f64 {
    let mut sum = 0.0;
    for q in from {
        let d = |p: &[f64; 3]| (0..3).map(|a| (q[a] - p[a]).powi(2)).sum::<f64>();
        let i = (0..to.len()).fold(0, |b, i| if d(&to[i]) < d(&to[b]) { i } else { b });
        sum += match normals {
            None => d(&to[i]),
            Some(nf) => (0..3).map(|a| (q[a] - to[i][a]) * nf.normals[i][a]).sum::<f64>().powi(2),
        };
    }
    sum / from.len() as f64
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    (0..=n).map(|i| w(i) * f(a + i as f64 * h)).sum::<f64>() * h / 3.0
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let res = [16u32, 128, 1024][trial % 3];
        let cloud = |rng: &mut ChaCha8Rng| {
            let n = rng.gen_range(20..250);
            let pts = (0..n).map(|_| [rng.gen_range(0..res), rng.gen_range(0..res), rng.gen_range(0..res)]).collect();
            PointCloud::new(pts, res).unwrap()
        };
        let (a, b) = (cloud(&mut rng), cloud(&mut rng));
        let (pa, pb) = (a.as_f64(), b.as_f64());
        let (na, nb) = (estimate_normals(&a, 12).unwrap(), estimate_normals(&b, 12).unwrap());
        let d1 = brute_directional(&pa, &pb, None).max(brute_directional(&pb, &pa, None));
        let d2 = brute_directional(&pb, &pa, Some(&na)).max(brute_directional(&pa, &pb, Some(&nb)));
        worst = worst.max((d1_mse(&a, &b).unwrap() - d1).abs() / d1.max(1.0));
        worst = worst.max((d2_mse(&a, &b, &na, &nb).unwrap() - d2).abs() / d2.max(1.0));
    }
    o.check(worst <= 1e-9, format!("D1/D2 vs brute-force oracle on 20 random cloud pairs: max rel diff {worst:.1e}"));

    let a = PointCloud::new(vec![[0, 0, 0]], 1024).unwrap();
    let b = PointCloud::new(vec![[1, 0, 0]], 1024).unwrap();
    let single = d1_psnr(&a, &b, 1023.0).unwrap();
    let exact = 10.0 * (3.0 * 1023f64.powi(2)).log10();
    o.check((single - exact).abs() < 1e-12 && (single - 64.97).abs() < 0.005, format!("single-point D1 PSNR {single:.4} dB"));

    let base = vec![(0.1, 30.0), (0.2, 33.0), (0.4, 35.5), (0.8, 37.0)];
    let r = RdCurve::new(base.clone()).unwrap();
    let ident = bd_rate(&r, &r).unwrap();
    o.check(ident.abs() < 1e-9, format!("BD-rate on identical curves {ident:.2e}%"));
    let doubled = RdCurve::new(base.iter().map(|&(x, y)| (2.0 * x, y)).collect()).unwrap();
    let dbl = bd_rate(&r, &doubled).unwrap();
    o.check((dbl - 100.0).abs() < 1e-6, format!("BD-rate on rate-doubled curves {dbl:.9}%"));

    // Analytic curves: PSNR cubic in log10 rate (BD-PSNR) and log10 rate
    // cubic in PSNR (BD-rate), so the dense integral of the analytic gap is
    // the exact value the four-point fits must reproduce.
    let cubic = |c: [f64; 4]| move |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
    let (f_ref, f_test) = (cubic([36.0, 9.0, -1.5, 0.3]), cubic([37.0, 8.0, -1.0, 0.2]));
    let xs = [-1.0, -0.6, -0.2, 0.2];
    let pts = |f: &dyn Fn(f64) -> f64| RdCurve::new(xs.iter().map(|&x| (10f64.powf(x), f(x))).collect()).unwrap();
    let oracle = simpson(|x| f_test(x) - f_ref(x), -1.0, 0.2) / 1.2;
    let got = bd_psnr(&pts(&f_ref), &pts(&f_test)).unwrap();
    let rel_psnr = ((got - oracle) / oracle).abs();
    let (g_ref, g_test) = (cubic([-9.0, 0.25, 0.0, 0.0]), cubic([-8.5, 0.2, 0.001, -0.00002]));
    let ds = [28.0, 31.0, 34.0, 37.0];
    let pts_r = |g: &dyn Fn(f64) -> f64| RdCurve::new(ds.iter().map(|&d| (10f64.powf(g(d)), d)).collect()).unwrap();
    let oracle_r = (10f64.powf(simpson(|d| g_test(d) - g_ref(d), 28.0, 37.0) / 9.0) - 1.0) * 100.0;
    let got_r = bd_rate(&pts_r(&g_ref), &pts_r(&g_test)).unwrap();
    let rel_rate = ((got_r - oracle_r) / oracle_r).abs();
    o.check(
        rel_psnr < 1e-4 && rel_rate < 1e-4,
        format!("BD vs numerical oracle: psnr {got:.6} vs {oracle:.6} dB, rate {got_r:.6} vs {oracle_r:.6}%"),
    );
    o.within(t.elapsed(), Duration::from_secs(60));
    o
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    o.note("NOT REPRODUCED at desk scale: Table 2 BD-rates vs G-PCC (e.g. -76.22% / -66.31% on loot) and the");
    o.note("0.02% D1 / 0.32% D2 deltas need full ModelNet40 training, the 8iVFB sequences and a G-PCC anchor.");
    o.note("Criteria 1-6 stand in for them; README.md documents the paper-scale runbook.");
    let readme = include_str!("../../../README.md");
    o.check(readme.contains("## Paper-scale runbook"), "README contains the paper-scale runbook");
    o
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a filter
    // argument selects criteria by number.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "cost-model exactness", criterion_1),
        (2, "formula identities", criterion_2),
        (3, "gradient suite", criterion_3),
        (4, "codec correctness", criterion_4),
        (5, "training behavior", criterion_5),
        (6, "metrics", criterion_6),
        (7, "explicit non-reproducibility", criterion_7),
    ];
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        for line in &outcome.notes {
            println!("    {line}");
        }
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} ({name}): {verdict} [{:.1?}]", t.elapsed());
        if !outcome.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria pass");
}
