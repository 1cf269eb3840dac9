use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use krawtex::colorspace::rgb_to_ycbcr;
use krawtex::scenes::hazy_pair;
use krawtex::{load_image, save_image};

fn krawtex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krawtex"))
        .args(args)
        .current_dir(dir)
        .env_remove("KRAWTEX_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = krawtex(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    serde_json::from_str(err.trim()).unwrap()
}

/// Writes `n` hazy/clear pairs under `hazy/` and `clear/` plus a manifest.
fn fixture(dir: &Path, n: u64, side: usize) {
    fs::create_dir_all(dir.join("hazy")).unwrap();
    fs::create_dir_all(dir.join("clear")).unwrap();
    let mut manifest = String::from("# hazy\tclear\n");
    for i in 0..n {
        let pair = hazy_pair(side, side, 40 + i, 0.8, 0.3, 0.7);
        save_image(&pair.hazy, &dir.join(format!("hazy/{i}.png"))).unwrap();
        save_image(&pair.clear, &dir.join(format!("clear/{i}.png"))).unwrap();
        manifest.push_str(&format!("hazy/{i}.png\tclear/{i}.png\n"));
    }
    fs::write(dir.join("m.txt"), manifest).unwrap();
}

#[test]
fn basis_writes_64_rows_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["basis", "--p", "0.5", "--out", "basis.csv"]);
    let csv = fs::read_to_string(dir.path().join("basis.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
    assert!(csv.starts_with("index,i,j,v00,"));
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("basis.csv.config.json")).unwrap()).unwrap();
    assert_eq!(echo["command"], "basis");
    assert_eq!(echo["args"]["p"], 0.5);
}

#[test]
fn transform_roundtrip_reports_small_error() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), 1, 37);
    let out = ok(dir.path(), &["transform", "--in", "clear/0.png", "--roundtrip"]);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert!(f[2].parse::<f64>().unwrap() < 1e-8, "{row}");
        assert!(f[3].parse::<f64>().unwrap() < 1e-8, "{row}");
    }
}

#[test]
fn transform_band_energy_table() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), 1, 32);
    ok(dir.path(), &["transform", "--in", "clear/0.png", "--out", "energy.csv"]);
    let csv = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("band,i,j,energy"));
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn analyze_over_directories() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), 3, 32);
    ok(dir.path(), &["analyze", "--hazy", "hazy", "--clear", "clear", "--out", "band_stats.csv"]);
    let csv = fs::read_to_string(dir.path().join("band_stats.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("band,i,j,mean_abs_hazy,mean_abs_clear,mean_diff"));
    assert_eq!(lines.count(), 64);
}

#[test]
fn analyze_reports_missing_counterpart() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), 2, 16);
    fs::remove_file(dir.path().join("clear/1.png")).unwrap();
    let out = krawtex(dir.path(), &["analyze", "--hazy", "hazy", "--clear", "clear"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn synthesize_with_and_without_depth() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), 1, 24);
    let p = dir.path();
    ok(p, &["synthesize", "--clear", "clear/0.png", "--beta", "1.2", "--airlight", "0.8", "--out", "h1.png"]);
    // A black depth map means t = 1 everywhere: the clear image comes back.
    let black = krawtex::PlanarImage::filled(24, 24, &[0.0], krawtex::ColorSpace::Luma).unwrap();
    save_image(&black, &p.join("depth.png")).unwrap();
    ok(
        p,
        &[
            "synthesize", "--clear", "clear/0.png", "--depth", "depth.png", "--beta", "1", "--airlight",
            "0.9,0.8,0.7", "--out", "h2.png",
        ],
    );
    let clear = load_image(&p.join("clear/0.png")).unwrap();
    assert_eq!(load_image(&p.join("h2.png")).unwrap(), clear);
    let hazy = load_image(&p.join("h1.png")).unwrap();
    assert_eq!(hazy.dim(), (24, 24));
    assert_ne!(hazy, clear);

    let out = krawtex(p, &["synthesize", "--clear", "clear/0.png", "--beta", "1", "--airlight", "1,2", "--out", "x.png"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_dehaze_keeps_size_and_chroma() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fixture(p, 2, 24);
    let summary = ok(
        p,
        &[
            "train", "--manifest", "m.txt", "--epochs", "1", "--scale", "0.125", "--patch", "16", "--batch", "2",
            "--patches-per-image", "2", "--seed", "3",
        ],
    );
    assert!(summary.contains("trained 2 steps"), "{summary}");
    let log = fs::read_to_string(p.join("out.ckpt.loss.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,loss_total,loss_l1,loss_mse,loss_feat,loss_g,loss_d"));
    assert_eq!(log.lines().count(), 3);

    // A 13x9 input is smaller than the network's minimum and gets padded.
    let small = load_image(&p.join("hazy/0.png")).unwrap().crop(0, 0, 13, 9).unwrap();
    save_image(&small, &p.join("small.png")).unwrap();
    for input in ["hazy/0.png", "small.png"] {
        ok(p, &["dehaze", "--model", "out.ckpt", "--in", input, "--out", "dehazed.png"]);
        let src = load_image(&p.join(input)).unwrap();
        let out = load_image(&p.join("dehazed.png")).unwrap();
        assert_eq!(out.dim(), src.dim());
        let (a, b) = (rgb_to_ycbcr(&src).unwrap(), rgb_to_ycbcr(&out).unwrap());
        // Only 8-bit rounding and clipping separate the chroma planes.
        for (x, y) in a.cb.iter().zip(b.cb.iter()).chain(a.cr.iter().zip(b.cr.iter())) {
            assert!((x - y).abs() < 0.03, "chroma moved: {x} vs {y}");
        }
    }
}

#[test]
fn dcp_baseline_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fixture(p, 2, 48);
    fs::create_dir_all(p.join("dcp")).unwrap();
    for i in 0..2 {
        let (src, dst) = (format!("hazy/{i}.png"), format!("dcp/{i}.png"));
        ok(p, &["dehaze", "--baseline", "dcp", "--in", &src, "--out", &dst]);
    }
    ok(p, &["evaluate", "--pred", "dcp", "--gt", "clear", "--out", "metrics.csv"]);
    let csv = fs::read_to_string(p.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "image,psnr_db,ssim");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("MEAN,"));

    ok(p, &["evaluate", "--pred", "dcp/0.png", "--gt", "clear/0.png", "--y-only", "--out", "y.csv"]);
    let y = fs::read_to_string(p.join("y.csv")).unwrap();
    assert_eq!(y.lines().count(), 3);
}

#[test]
fn dehaze_needs_model_or_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let out = krawtex(dir.path(), &["dehaze", "--in", "a.png", "--out", "b.png"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn usage_and_runtime_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = krawtex(p, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");

    let out = krawtex(p, &["basis", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = krawtex(p, &["transform", "--in", "nothing.png", "--roundtrip"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "io");

    fs::write(p.join("bad.png"), b"not an image").unwrap();
    let out = krawtex(p, &["transform", "--in", "bad.png"]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(p.join("m.txt"), "only-one-column\n").unwrap();
    let out = krawtex(p, &["train", "--manifest", "m.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "manifest");
}

#[test]
fn env_seed_fallback_lands_in_echo() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_krawtex"))
        .args(["basis", "--out", "b.csv"])
        .current_dir(dir.path())
        .env("KRAWTEX_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    let echo = fs::read_to_string(dir.path().join("b.csv.config.json")).unwrap();
    assert!(echo.contains("\"seed\": 42"));
}

#[test]
fn gradcheck_small_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["gradcheck", "--scale", "0.125", "--side", "16", "--samples", "1", "--out", "g.csv"],
    );
    let csv = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
    assert!(csv.contains("\ngenerator,") && csv.contains("\ndiscriminator,"));
}
