mod common;

use common::crop;
use mbwpnm::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use mbwpnm::{load, save};
use std::path::{Path, PathBuf};
use tempfile::TempDir;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn mbwpnm(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("mbwpnm").chain(args.iter().copied()), &mut out, &mut err);
    Outcome { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 24×24 RGB crop written into a fresh temp dir.
fn workspace() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("clean.png");
    save(&crop("astronaut").crop(50, 50, 24, 24).unwrap(), &path, None).unwrap();
    (dir, path)
}

#[test]
fn synth_prints_rms_and_is_seeded() {
    let (dir, clean) = workspace();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let first = mbwpnm(&["synth", "--in", s(&clean), "--out", s(&a), "--sigma", "5,30,15", "--seed", "7"]);
    assert_eq!(first.code, EXIT_OK, "{}", first.err);
    assert!(first.out.contains("rms sigma: 19.5789"), "{}", first.out);
    mbwpnm(&["synth", "--in", s(&clean), "--out", s(&b), "--sigma", "5,30,15", "--seed", "7"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn synth_without_noise_copies_the_input() {
    let (dir, clean) = workspace();
    let out = dir.path().join("same.png");
    assert_eq!(mbwpnm(&["synth", "--in", s(&clean), "--out", s(&out), "--sigma", "0,0,0"]).code, EXIT_OK);
    assert_eq!(load(&clean, None).unwrap(), load(&out, None).unwrap());
}

#[test]
fn synth_rejects_wrong_sigma_count() {
    let (dir, clean) = workspace();
    let out = dir.path().join("x.png");
    assert_eq!(mbwpnm(&["synth", "--in", s(&clean), "--out", s(&out), "--sigma", "5,5"]).code, EXIT_USAGE);
}

#[test]
fn denoise_needs_a_noise_level() {
    let (dir, clean) = workspace();
    let out = dir.path().join("x.png");
    assert_eq!(mbwpnm(&["denoise", "--in", s(&clean), "--out", s(&out)]).code, EXIT_USAGE);
}

#[test]
fn denoise_picks_unit_power_at_low_noise() {
    let (dir, clean) = workspace();
    let out = dir.path().join("x.png");
    let r = mbwpnm(&["denoise", "--in", s(&clean), "--out", s(&out), "--sigma", "5,30,15", "--k", "1", "--ref", s(&clean)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.starts_with("p = 1 [auto]"), "{}", r.out);
    assert!(r.out.contains("iteration 1:") && r.out.contains("psnr"), "{}", r.out);
}

#[test]
fn denoise_with_zero_weights_is_identity() {
    let (dir, clean) = workspace();
    let out = dir.path().join("x.png");
    let r = mbwpnm(&["denoise", "--in", s(&clean), "--out", s(&out), "--sigma", "20,20,20", "--k", "1", "--c", "0"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(load(&clean, None).unwrap(), load(&out, None).unwrap());
}

#[test]
fn denoise_accepts_estimated_noise_and_feedback() {
    let (dir, clean) = workspace();
    let noisy = dir.path().join("noisy.png");
    let out = dir.path().join("x.png");
    mbwpnm(&["synth", "--in", s(&clean), "--out", s(&noisy), "--sigma", "20,20,20", "--seed", "1"]);
    let r = mbwpnm(&["denoise", "--in", s(&noisy), "--out", s(&out), "--estimate", "--k", "2", "--feedback", "0.9"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("estimated sigma:"), "{}", r.out);
}

#[test]
fn metrics_of_identical_images() {
    let (dir, clean) = workspace();
    let r = mbwpnm(&["metrics", "--ref", s(&clean), "--test", s(&clean)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("inf"), "{}", r.out);
    let csv = dir.path().join("m.csv");
    for _ in 0..2 {
        mbwpnm(&["metrics", "--ref", s(&clean), "--test", s(&clean), "--csv", s(&csv), "--id", "same"]);
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines, ["image,psnr,ssim,ergas,sam", "same,inf,1.000000,0.000000,0.000000", "same,inf,1.000000,0.000000,0.000000"]);
}

#[test]
fn metrics_shape_mismatch_is_usage_error() {
    let (dir, clean) = workspace();
    let other = dir.path().join("small.png");
    save(&load(&clean, None).unwrap().crop(0, 0, 12, 12).unwrap(), &other, None).unwrap();
    assert_eq!(mbwpnm(&["metrics", "--ref", s(&clean), "--test", s(&other)]).code, EXIT_USAGE);
}

#[test]
fn psweep_single_power_and_empty_range() {
    let (dir, clean) = workspace();
    let csv = dir.path().join("p.csv");
    let r = mbwpnm(&["psweep", "--clean", s(&clean), "--sigma", "10,10,10", "--pmin", "0.7", "--pmax", "0.7", "--k", "1", "--csv", s(&csv)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("best p: 0.7"), "{}", r.out);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
    let r = mbwpnm(&["psweep", "--clean", s(&clean), "--sigma", "10,10,10", "--pmin", "0.9", "--pmax", "0.5", "--csv", s(&csv)]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn bench_reports_every_image_and_an_average() {
    let dir = TempDir::new().unwrap();
    for (i, name) in common::CROPS.iter().enumerate() {
        save(&crop(name).crop(10 * i, 20, 24, 24).unwrap(), dir.path().join(format!("{name}.png")), None).unwrap();
    }
    let out = TempDir::new().unwrap();
    let bench = |file: &str| {
        let csv = out.path().join(file);
        let r = mbwpnm(&["bench", "--dir", s(dir.path()), "--sigma", "15,15,15", "--seed", "2", "--k", "1", "--csv", s(&csv)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.err);
        std::fs::read_to_string(csv).unwrap()
    };
    let (first, second) = (bench("a.csv"), bench("b.csv"));
    let rows: Vec<Vec<&str>> = first.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "average");
    assert!(rows.iter().all(|r| r[6].parse::<f64>().unwrap() > 0.0));
    // Everything but the timing column repeats exactly.
    let strip = |t: &str| t.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn bench_on_empty_directory_fails() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("b.csv");
    let r = mbwpnm(&["bench", "--dir", s(dir.path()), "--sigma", "5", "--csv", s(&csv)]);
    assert_eq!(r.code, EXIT_FAILURE);
}
