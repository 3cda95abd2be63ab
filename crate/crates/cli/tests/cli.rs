use std::path::Path;
use std::process::{Command, Output};

fn pcgc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcgc")).args(args).current_dir(dir).output().expect("run pcgc")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = pcgc(args, dir);
    assert!(
        out.status.success(),
        "pcgc {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TINY: [&str; 18] = [
    "--profile", "desk", "--variant", "baseline_cgdn",
    "--set", "model.channels=[4,8,8]",
    "--set", "model.latent_channels=8",
    "--set", "model.hyper_channels=4",
    "--set", "schedule.batch=2",
    "--set", "schedule.validation_batches=1",
    "--set", "schedule.validate_every=2",
    "--set", "schedule.max_steps=4",
];

#[test]
fn desk_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["prepare", "--synthetic", "--blocks", "8", "--block-size", "16", "--seed", "3", "-o", "blocks.blk"], d);
    let first = std::fs::read(d.join("blocks.blk")).unwrap();
    ok(&["prepare", "--synthetic", "--blocks", "8", "--block-size", "16", "--seed", "3", "-o", "again.blk"], d);
    assert_eq!(first, std::fs::read(d.join("again.blk")).unwrap(), "prepare is deterministic");
    assert!(d.join("blocks.blk.manifest.json").exists());

    let mut train = vec!["train", "--archive", "blocks.blk", "-o", "run"];
    train.extend(TINY);
    ok(&train, d);
    for f in ["lambda_0.ckpt", "lambda_3.ckpt", "index.json", "config.toml", "train_log.csv", "manifest.json"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let manifest = std::fs::read_to_string(d.join("run/manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"train\"") && manifest.contains("lambda_0.ckpt"));

    ok(&["generate", "--resolution", "32", "--shapes", "2", "--seed", "5", "-o", "ref.ply"], d);
    let mut bins = Vec::new();
    for i in 0..4 {
        let ck = format!("run/lambda_{i}.ckpt");
        let bin = format!("s{i}.bin");
        ok(&["encode", "ref.ply", "--checkpoint", &ck, "-o", &bin], d);
        ok(&["decode", &bin, "--checkpoint", &ck, "-o", &format!("s{i}.ply")], d);
        bins.push(bin);
    }
    // Re-encoding is byte-identical.
    ok(&["encode", "ref.ply", "--checkpoint", "run/lambda_0.ckpt", "-o", "again.bin"], d);
    assert_eq!(std::fs::read(d.join("s0.bin")).unwrap(), std::fs::read(d.join("again.bin")).unwrap());

    let mut eval = vec!["evaluate", "--reference", "ref.ply", "--run", "run", "-o", "rd.csv"];
    eval.extend(bins.iter().map(String::as_str));
    ok(&eval, d);
    let rd = std::fs::read_to_string(d.join("rd.csv")).unwrap();
    assert!(rd.starts_with("lambda,bpp,d1_psnr,d2_psnr"));
    assert_eq!(rd.lines().count(), 5);

    std::fs::write(
        d.join("curve.csv"),
        "lambda,bpp,d1_psnr,d2_psnr\n1,0.1,60,64\n2,0.2,63,67\n3,0.4,66,70\n4,0.8,68,72\n",
    )
    .unwrap();
    let bd = ok(&["bd", "curve.csv", "curve.csv"], d);
    assert!(bd.contains("bd_rate_percent=0.0000"), "{bd}");

    ok(&["plot", "rd.csv", "-o", "rd.svg"], d);
    let svg = std::fs::read_to_string(d.join("rd.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(d.join("rd.csv").exists());
}

#[test]
fn decode_with_wrong_checkpoint_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&["prepare", "--synthetic", "--blocks", "6", "--block-size", "16", "-o", "b.blk"], d);
    let mut train = vec!["train", "--archive", "b.blk", "-o", "run"];
    train.extend(TINY);
    ok(&train, d);
    ok(&["generate", "--resolution", "32", "--shapes", "1", "-o", "ref.ply"], d);
    ok(&["encode", "ref.ply", "--checkpoint", "run/lambda_0.ckpt", "-o", "s.bin"], d);
    let out = pcgc(&["decode", "s.bin", "--checkpoint", "run/lambda_1.ckpt", "-o", "x.ply"], d);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=config code=2"), "{err}");
}

#[test]
fn analyze_cost_reports_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(&["analyze-cost", "--preset", "baseline"], tmp.path());
    assert!(text.contains("TOTAL") && text.contains("total parameters"));
    let csv = ok(&["analyze-cost", "--preset", "proposed", "--format", "csv"], tmp.path());
    assert!(csv.starts_with("layer,weights,biases,other,macs,table_macs"));
    let t1 = ok(&["analyze-cost", "--table1", "--format", "csv"], tmp.path());
    assert!(t1.contains("baseline,1.118B,1118306304,true,802k,802224,true"), "{t1}");
    assert!(t1.contains("learned_pcgc"));
    let text = ok(&["analyze-cost", "--table1"], tmp.path());
    assert!(text.contains("discrepancy: learned_pcgc"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(pcgc(&["--version"], d).status.code(), Some(0));
    assert_eq!(pcgc(&["--help"], d).status.code(), Some(0));
    assert_eq!(pcgc(&["no-such-command"], d).status.code(), Some(1));
    assert_eq!(pcgc(&["encode"], d).status.code(), Some(1));
    let missing = pcgc(&["bd", "nope.csv", "nope.csv"], d);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8(missing.stderr).unwrap().starts_with("error: kind=io"));
    let bad = pcgc(&["analyze-cost", "--preset", "huge"], d);
    assert_eq!(bad.status.code(), Some(2));
    std::fs::write(d.join("junk.bin"), b"garbage").unwrap();
    let cfg = pcgc_core::config::RunConfig::profile("desk", pcgc_core::architecture::Variant::Baseline).unwrap();
    std::fs::write(d.join("config.toml"), cfg.to_toml_string()).unwrap();
    std::fs::write(d.join("c.ckpt"), b"garbage").unwrap();
    assert_eq!(pcgc(&["decode", "junk.bin", "--checkpoint", "c.ckpt", "-o", "x.ply"], d).status.code(), Some(2));
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = pcgc(&["prepare", empty.to_str().unwrap(), "-o", "x.blk"], d);
    assert_eq!(out.status.code(), Some(2));
    let out = pcgc(&["resolve-config", "--target", "1"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: kind=no_match"));
}

#[test]
fn prepare_from_mesh_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("meshes");
    std::fs::create_dir(&data).unwrap();
    // A unit tetrahedron and a single quad split into two triangles.
    std::fs::write(data.join("a.off"), "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n").unwrap();
    std::fs::write(data.join("b.off"), "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n").unwrap();
    let cache = tmp.path().join("cache");
    let run = |out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_pcgc"))
            .args(["prepare", data.to_str().unwrap(), "--resolution", "64", "--block-size", "16", "--keep", "5", "--samples", "20000", "-o", out])
            .current_dir(tmp.path())
            .env("PCGC_CACHE_DIR", &cache)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(tmp.path().join(out)).unwrap()
    };
    let a = run("a.blk");
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 2, "both clouds cached");
    let b = run("b.blk");
    assert_eq!(a, b, "cached rerun is byte-identical");
    let (size, blocks) = pcgc_core::geometry::read_block_archive(&a).unwrap();
    assert_eq!((size, blocks.len()), (16, 5));
    assert!(blocks.windows(2).all(|w| w[0].point_count() >= w[1].point_count()));
}

#[test]
fn resolve_config_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["resolve-config", "--target", "802224", "--conv-weights-only"], tmp.path());
    assert!(out.contains("channels=[16, 32, 64]"), "{out}");
    let mut train = vec!["train", "--archive", "missing.blk", "-o", "run", "--set", "schedule.nope=1"];
    train.extend(&TINY[..4]);
    let bad = pcgc(&train, tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8(bad.stderr).unwrap().contains("kind=config"));
}
