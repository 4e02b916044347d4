//! The `mbwpnm` command line: `synth`, `denoise`, `metrics`, `psweep` and
//! `bench`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. The worker pool
//! is capped by the `MBWPNM_THREADS` environment variable (unset or 0 means
//! all cores).

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::imaging::{self, add_awgn, ImageStack};
use crate::pipeline::{
    denoise_with, estimate_noise, DenoiseConfig, NoiseProfile, SchattenSolver,
};
use crate::quality::{self, psnr, QualityReport};
use crate::shrinkage::SingularEstimate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const THREADS_ENV: &str = "MBWPNM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mbwpnm", version, about = "Weighted Schatten-p low-rank image denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add seeded per-band Gaussian noise to an image.
    Synth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Per-band standard deviations, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Denoise an image.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Per-band noise levels, comma separated.
        #[arg(long, value_delimiter = ',', conflicts_with = "estimate")]
        sigma: Option<Vec<f64>>,
        /// Estimate per-band noise levels from the input.
        #[arg(long)]
        estimate: bool,
        /// Clean reference; prints quality indices after every iteration.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Compare a test image against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Append a CSV row to this file instead of printing.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Row label; defaults to the test file name.
        #[arg(long)]
        id: Option<String>,
    },
    /// Sweep the power p on one clean image and report PSNR per value.
    Psweep {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        pmin: f64,
        #[arg(long, default_value_t = 1.0)]
        pmax: f64,
        #[arg(long, default_value_t = 0.05)]
        pstep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Synthesize, denoise and score every image in a directory.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
}

#[derive(Debug, Clone, Args)]
struct Tuning {
    /// Schatten power in (0, 1], or `auto` to pick it from the noise level.
    #[arg(long, default_value = "auto")]
    p: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    group: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    j: Option<usize>,
    /// Build weights from the observed singular values, without noise
    /// correction.
    #[arg(long)]
    raw_weights: bool,
    /// Noise re-estimation factor between iterations; 0 keeps the input
    /// noise levels fixed.
    #[arg(long)]
    feedback: Option<f64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Synth {
            input,
            output,
            sigma,
            seed,
        } => cmd_synth(&input, &output, sigma, seed, out),
        Command::Denoise {
            input,
            output,
            sigma,
            estimate,
            reference,
            tuning,
        } => cmd_denoise(
            &input,
            &output,
            sigma,
            estimate,
            reference.as_deref(),
            &tuning,
            threads,
            out,
        ),
        Command::Metrics {
            reference,
            test,
            csv,
            id,
        } => cmd_metrics(&reference, &test, csv.as_deref(), id, out),
        Command::Psweep {
            clean,
            sigma,
            pmin,
            pmax,
            pstep,
            seed,
            csv,
            tuning,
        } => cmd_psweep(
            &clean,
            sigma,
            (pmin, pmax, pstep),
            seed,
            &csv,
            &tuning,
            threads,
            out,
        ),
        Command::Bench {
            dir,
            sigma,
            seed,
            csv,
            tuning,
        } => cmd_bench(&dir, sigma, seed, &csv, &tuning, threads, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn threads_from_env() -> std::result::Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        },
    }
}

fn noise_for(img: &ImageStack, sigma: Vec<f64>) -> std::result::Result<NoiseProfile, Failure> {
    if sigma.len() != img.bands() {
        return Err(Failure::Usage(format!(
            "{} sigma values given for a {}-band image",
            sigma.len(),
            img.bands()
        )));
    }
    NoiseProfile::new(sigma).map_err(|e| Failure::Usage(e.to_string()))
}

impl Tuning {
    /// Builds the config for this noise level; `auto` resolves `p` from
    /// the RMS σ.
    fn config(
        &self,
        noise: &NoiseProfile,
        threads: Option<usize>,
    ) -> std::result::Result<(DenoiseConfig, bool), Failure> {
        let mut cfg = DenoiseConfig::for_noise(noise);
        let auto = self.p.eq_ignore_ascii_case("auto");
        if !auto {
            cfg.p = self
                .p
                .parse()
                .map_err(|_| Failure::Usage(format!("--p must be a number or auto, got {:?}", self.p)))?;
        }
        self.apply(&mut cfg, threads)?;
        Ok((cfg, auto))
    }

    fn apply(&self, cfg: &mut DenoiseConfig, threads: Option<usize>) -> CmdResult {
        if let Some(v) = self.k {
            cfg.iterations = v;
        }
        if let Some(v) = self.patch {
            cfg.patch = v;
        }
        if let Some(v) = self.group {
            cfg.group = v;
        }
        if let Some(v) = self.window {
            cfg.window = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(v) = self.feedback {
            cfg.noise_feedback = (v != 0.0).then_some(v);
        }
        if let Some(v) = self.j {
            cfg.gst_iterations = v;
        }
        if self.raw_weights {
            cfg.estimate = SingularEstimate::Raw;
        }
        cfg.threads = threads;
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
    }
}

fn cmd_synth(input: &Path, output: &Path, sigma: Vec<f64>, seed: u64, out: &mut dyn Write) -> CmdResult {
    let img = imaging::load(input, None)?;
    let noise = noise_for(&img, sigma)?;
    let noisy = add_awgn(&img, &noise, seed)?;
    imaging::save(&noisy, output, None)?;
    writeln!(out, "rms sigma: {:.4}", noise.rms())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_denoise(
    input: &Path,
    output: &Path,
    sigma: Option<Vec<f64>>,
    estimate: bool,
    reference: Option<&Path>,
    tuning: &Tuning,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CmdResult {
    let img = imaging::load(input, None)?;
    let noise = match (sigma, estimate) {
        (Some(s), _) => noise_for(&img, s)?,
        (None, true) => {
            let n = estimate_noise(&img)?;
            writeln!(out, "estimated sigma: {}", join(n.sigmas(), 4))?;
            n
        }
        (None, false) => {
            return Err(Failure::Usage(
                "give --sigma s1,...,sB or --estimate".into(),
            ))
        }
    };
    let clean = reference.map(|p| imaging::load(p, None)).transpose()?;
    if let Some(c) = &clean {
        if !c.same_shape(&img) {
            return Err(Failure::Usage(format!(
                "reference shape {:?} differs from input {:?}",
                c.shape(),
                img.shape()
            )));
        }
    }
    let (cfg, auto) = tuning.config(&noise, threads)?;
    writeln!(
        out,
        "p = {}{} (rms sigma {:.4})",
        cfg.p,
        if auto { " [auto]" } else { "" },
        noise.rms()
    )?;
    let mut lines = Vec::new();
    let result = denoise_with(&img, &noise, &cfg, &SchattenSolver, |report| {
        let mut line = format!(
            "iteration {}: {:.3} s, {} groups",
            report.iteration,
            report.elapsed.as_secs_f64(),
            report.groups
        );
        if let Some(c) = &clean {
            match QualityReport::compute(c, &report.estimate.clamped(0.0, 255.0)) {
                Ok(q) => line.push_str(&format!("  {q}")),
                Err(e) => line.push_str(&format!("  (metrics unavailable: {e})")),
            }
        }
        lines.push(line);
    });
    for line in &lines {
        writeln!(out, "{line}")?;
    }
    let denoised = result?;
    imaging::save(&denoised, output, None)?;
    Ok(())
}

fn cmd_metrics(
    reference: &Path,
    test: &Path,
    csv: Option<&Path>,
    id: Option<String>,
    out: &mut dyn Write,
) -> CmdResult {
    let r = imaging::load(reference, None)?;
    let t = imaging::load(test, None)?;
    if !r.same_shape(&t) {
        return Err(Failure::Usage(format!(
            "shape mismatch: reference {:?}, test {:?}",
            r.shape(),
            t.shape()
        )));
    }
    let report = QualityReport::compute(&r, &t)?;
    match csv {
        Some(path) => {
            let id = id.unwrap_or_else(|| file_label(test));
            append_csv(path, quality::CSV_HEADER, &[report.csv_row(&id)])?;
        }
        None => writeln!(out, "{report}")?,
    }
    Ok(())
}

/// `pmin, pmin + pstep, …` up to `pmax`, rounded to 1e-9.
pub fn power_grid(pmin: f64, pmax: f64, pstep: f64) -> Vec<f64> {
    if !(pstep > 0.0) || !(pmin > 0.0) || pmax > 1.0 || pmin > pmax + 1e-12 {
        return Vec::new();
    }
    let n = ((pmax - pmin) / pstep + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|i| ((pmin + i as f64 * pstep) * 1e9).round() / 1e9)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_psweep(
    clean: &Path,
    sigma: Vec<f64>,
    (pmin, pmax, pstep): (f64, f64, f64),
    seed: u64,
    csv: &Path,
    tuning: &Tuning,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CmdResult {
    let powers = power_grid(pmin, pmax, pstep);
    if powers.is_empty() {
        return Err(Failure::Usage(format!(
            "empty p range: pmin {pmin}, pmax {pmax}, pstep {pstep} (powers must lie in (0, 1])"
        )));
    }
    let img = imaging::load(clean, None)?;
    let noise = noise_for(&img, sigma)?;
    let (mut cfg, _) = tuning.config(&noise, threads)?;
    let noisy = add_awgn(&img, &noise, seed)?;
    writeln!(
        out,
        "noisy psnr {:.4} dB, rms sigma {:.4}",
        psnr(&img, &noisy.clamped(0.0, 255.0))?,
        noise.rms()
    )?;
    let mut rows = Vec::with_capacity(powers.len());
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for p in powers {
        cfg.p = p;
        let start = Instant::now();
        let den = denoise_with(&noisy, &noise, &cfg, &SchattenSolver, |_| {})?;
        let value = psnr(&img, &den)?;
        writeln!(
            out,
            "p {p:.4}: psnr {value:.4} dB ({:.2} s)",
            start.elapsed().as_secs_f64()
        )?;
        if value > best.1 {
            best = (p, value);
        }
        rows.push(format!("{p:.6},{value:.6}"));
    }
    write_csv(csv, "p,psnr", &rows)?;
    writeln!(out, "best p: {} ({:.4} dB)", best.0, best.1)?;
    Ok(())
}

fn cmd_bench(
    dir: &Path,
    sigma: Vec<f64>,
    seed: u64,
    csv: &Path,
    tuning: &Tuning,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CmdResult {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && imaging::Format::from_extension(p).is_some())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Runtime(format!(
            "{} contains no images",
            dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(files.len() + 1);
    let mut sums = [0.0f64; 6];
    for (i, path) in files.iter().enumerate() {
        let img = imaging::load(path, None)?;
        let noise = noise_for(&img, sigma.clone())?;
        let (cfg, _) = tuning.config(&noise, threads)?;
        let noisy = add_awgn(&img, &noise, seed.wrapping_add(i as u64))?;
        let start = Instant::now();
        let den = denoise_with(&noisy, &noise, &cfg, &SchattenSolver, |_| {})?;
        let seconds = start.elapsed().as_secs_f64();
        let q = QualityReport::compute(&img, &den)?;
        let noisy_psnr = psnr(&img, &noisy.clamped(0.0, 255.0))?;
        let label = file_label(path);
        writeln!(out, "{label}: {q}  ({seconds:.2} s, p = {})", cfg.p)?;
        let values = [noisy_psnr, q.psnr, q.ssim, q.ergas, q.sam, seconds];
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }
        rows.push(csv_line(&label, &values));
    }
    let n = files.len() as f64;
    let avg: Vec<f64> = sums.iter().map(|s| s / n).collect();
    rows.push(csv_line("average", &avg));
    write_csv(csv, "image,noisy_psnr,psnr,ssim,ergas,sam,act_s", &rows)?;
    writeln!(out, "average psnr {:.4} dB over {} images", avg[1], files.len())?;
    Ok(())
}

fn csv_line(label: &str, values: &[f64]) -> String {
    let mut line = label.to_string();
    for &v in values {
        line.push(',');
        quality::push_number(&mut line, v);
    }
    line
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn join(values: &[f64], decimals: usize) -> String {
    values
        .iter()
        .map(|v| format!("{v:.decimals$}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

fn append_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    for r in rows {
        writeln!(f, "{r}")?;
    }
    Ok(())
}
