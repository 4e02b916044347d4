//! The iterative patch-group denoiser and noise-level utilities.
//!
//! Each outer iteration feeds back a fraction of the residual,
//! `Ŷ = X̂ + α(Y − X̂)`, matches similar patches on `Ŷ` around every
//! reference of a stride grid, shrinks each group with per-group weights and
//! averages the estimates back into the next `X̂`.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::ImageStack;
use crate::lowrank::{solve_traced, PatchMatrix, WhiteningMatrix};
use crate::patching::{block_match, reference_grid, Aggregator, PatchGroup, PatchIndex};
use crate::shrinkage::{
    make_weights, SingularEstimate, WeightRule, DEFAULT_GST_ITERATIONS, DEFAULT_WEIGHT_CONSTANT,
    DEFAULT_WEIGHT_EPS,
};

/// Largest representable intensity; outputs are clamped to `[0, PEAK]`.
pub const PEAK: f64 = 255.0;

/// Groups solved in parallel before their estimates are folded into the
/// aggregate in grid order.
const CHUNK: usize = 256;

/// Per-band AWGN standard deviations in intensity units.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    sigmas: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Domain("noise profile needs at least one band".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Domain(format!(
                "noise levels must be finite and non-negative, got {s}"
            )));
        }
        Ok(Self { sigmas })
    }

    pub fn uniform(sigma: f64, bands: usize) -> Result<Self> {
        Self::new(vec![sigma; bands])
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn bands(&self) -> usize {
        self.sigmas.len()
    }

    pub fn rms(&self) -> f64 {
        rms_sigma(self)
    }
}

/// `sqrt(Σ σ_b² / B)`.
pub fn rms_sigma(noise: &NoiseProfile) -> f64 {
    let s = noise.sigmas();
    (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
}

/// Power chosen from the RMS noise level: low noise favours `p = 1`,
/// heavier noise smaller powers.
pub fn auto_power(rms: f64) -> f64 {
    if rms < 20.0 {
        1.0
    } else if rms < 30.0 {
        0.95
    } else if rms < 40.0 {
        0.8
    } else {
        0.55
    }
}

/// Per-band noise estimate from the mean absolute response of the 3×3
/// Laplacian-difference mask `[[1,−2,1],[−2,4,−2],[1,−2,1]]` over interior
/// pixels: `σ̂ = sqrt(π/2)·mean|r| / 6`. Accurate for AWGN on smooth
/// content; texture inflates it.
pub fn estimate_noise(img: &ImageStack) -> Result<NoiseProfile> {
    let (h, w, bands) = img.shape();
    if h < 3 || w < 3 {
        return Err(Error::TooSmall(format!(
            "noise estimation needs at least 3x3 pixels, got {h}x{w}"
        )));
    }
    const MASK: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let scale = (std::f64::consts::FRAC_PI_2).sqrt() / 6.0;
    let count = ((h - 2) * (w - 2)) as f64;
    let sigmas = (0..bands)
        .map(|b| {
            let plane = img.band(b);
            let mut total = 0.0;
            for r in 1..h - 1 {
                for c in 1..w - 1 {
                    let mut acc = 0.0;
                    for (dr, mrow) in MASK.iter().enumerate() {
                        for (dc, m) in mrow.iter().enumerate() {
                            acc += m * plane[(r + dr - 1) * w + c + dc - 1];
                        }
                    }
                    total += acc.abs();
                }
            }
            scale * total / count
        })
        .collect();
    NoiseProfile::new(sigmas)
}

/// All tunables of [`denoise`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Patch side `h`.
    pub patch: usize,
    /// Patches per group `M`, reference included.
    pub group: usize,
    /// Side of the square search window.
    pub window: usize,
    /// Step of the reference grid; must not exceed `patch`.
    pub stride: usize,
    /// Outer iterations `K`.
    pub iterations: usize,
    /// Residual feedback `α`.
    pub alpha: f64,
    /// Schatten power `p`.
    pub p: f64,
    pub c: f64,
    pub eps: f64,
    /// GST fixed-point iterations `J`.
    pub gst_iterations: usize,
    pub estimate: SingularEstimate,
    /// When set to `γ`, iterations after the first re-estimate each band's
    /// remaining noise as `γ·sqrt(|σ_b² − mean_b((Y − Ŷ)²)|)`.
    pub noise_feedback: Option<f64>,
    /// Worker threads; `None` uses the ambient rayon pool.
    pub threads: Option<usize>,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            patch: 6,
            group: 70,
            window: 40,
            stride: 3,
            iterations: 8,
            alpha: 0.1,
            p: 1.0,
            c: DEFAULT_WEIGHT_CONSTANT,
            eps: DEFAULT_WEIGHT_EPS,
            gst_iterations: DEFAULT_GST_ITERATIONS,
            estimate: SingularEstimate::NoiseCorrected,
            noise_feedback: None,
            threads: None,
        }
    }
}

impl DenoiseConfig {
    /// Defaults with `p` picked by [`auto_power`] for this noise level.
    pub fn for_noise(noise: &NoiseProfile) -> Self {
        Self {
            p: auto_power(noise.rms()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Domain(m));
        if self.patch == 0 {
            return fail("patch size must be >= 1".into());
        }
        if self.stride == 0 || self.stride > self.patch {
            return fail(format!(
                "stride must lie in 1..={} (got {})",
                self.patch, self.stride
            ));
        }
        if self.group == 0 {
            return fail("group size must be >= 1".into());
        }
        if self.iterations == 0 {
            return fail("iteration count must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return fail(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return fail(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) || !(self.eps >= 0.0) {
            return fail("c and eps must be finite and non-negative".into());
        }
        if self.gst_iterations == 0 {
            return fail("GST iteration count must be >= 1".into());
        }
        if let Some(g) = self.noise_feedback {
            if !(g > 0.0 && g.is_finite()) {
                return fail(format!("noise feedback must be positive, got {g}"));
            }
        }
        if self.threads == Some(0) {
            return fail("thread count must be >= 1".into());
        }
        Ok(())
    }

    fn rule(&self) -> WeightRule {
        WeightRule {
            c: self.c,
            eps: self.eps,
            estimate: self.estimate,
        }
    }

    fn radius(&self) -> usize {
        self.window / 2
    }
}

/// What a group solver needs besides the matrix and whitening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupContext {
    pub p: f64,
    pub gst_iterations: usize,
    pub rule: WeightRule,
    /// Per-entry noise variance after whitening.
    pub noise_var: f64,
}

/// Low-rank estimator applied to each similar-patch group.
pub trait GroupSolver: Sync {
    fn solve_group(
        &self,
        y: &PatchMatrix,
        w: &WhiteningMatrix,
        ctx: &GroupContext,
    ) -> Result<PatchMatrix>;
}

/// Weighted Schatten-p shrinkage with per-group weights from the group's
/// own spectrum.
#[derive(Debug, Clone, Copy, Default)]
pub struct SchattenSolver;

impl GroupSolver for SchattenSolver {
    fn solve_group(
        &self,
        y: &PatchMatrix,
        w: &WhiteningMatrix,
        ctx: &GroupContext,
    ) -> Result<PatchMatrix> {
        let m = y.ncols();
        solve_traced(y, w, ctx.p, ctx.gst_iterations, |delta| {
            make_weights(delta, &ctx.rule, m, ctx.p, ctx.noise_var)
        })
        .map(|t| t.estimate)
    }
}

/// Progress of one outer iteration, handed to the observer of
/// [`denoise_with`].
pub struct IterationReport<'a> {
    /// 1-based.
    pub iteration: usize,
    pub elapsed: Duration,
    pub groups: usize,
    /// Unclamped estimate after this iteration.
    pub estimate: &'a ImageStack,
}

/// Denoises `noisy` with the default solver.
pub fn denoise(noisy: &ImageStack, noise: &NoiseProfile, cfg: &DenoiseConfig) -> Result<ImageStack> {
    denoise_with(noisy, noise, cfg, &SchattenSolver, |_| {})
}

/// Denoises `noisy` with an arbitrary group solver, calling `observe` after
/// every outer iteration. The result is clamped to `[0, 255]`.
pub fn denoise_with<S, F>(
    noisy: &ImageStack,
    noise: &NoiseProfile,
    cfg: &DenoiseConfig,
    solver: &S,
    mut observe: F,
) -> Result<ImageStack>
where
    S: GroupSolver,
    F: FnMut(&IterationReport<'_>),
{
    cfg.validate()?;
    if noise.bands() != noisy.bands() {
        return Err(Error::ShapeMismatch(format!(
            "{} noise levels for {} bands",
            noise.bands(),
            noisy.bands()
        )));
    }
    if noise.sigmas().iter().all(|&s| s == 0.0) {
        return Err(Error::NothingToDenoise);
    }
    let (height, width, _) = noisy.shape();
    let grid = reference_grid(height, width, cfg.patch, cfg.stride)?;
    let ctx = GroupContext {
        p: cfg.p,
        gst_iterations: cfg.gst_iterations,
        rule: cfg.rule(),
        noise_var: 1.0,
    };

    let pool = cfg
        .threads
        .map(|n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("thread pool: {e}")))
        })
        .transpose()?;

    let mut estimate = noisy.clone();
    for k in 1..=cfg.iterations {
        let start = Instant::now();
        let target = regularize(noisy, &estimate, cfg.alpha);
        let sigmas = match cfg.noise_feedback {
            Some(gamma) if k > 1 => remaining_noise(noisy, &target, noise, gamma),
            _ => noise.sigmas().to_vec(),
        };
        let whitening = WhiteningMatrix::from_sigmas(&sigmas)?;
        let pass = || denoise_pass(&target, &grid, cfg, &whitening, &ctx, solver);
        estimate = match &pool {
            Some(pool) => pool.install(pass)?,
            None => pass()?,
        };
        observe(&IterationReport {
            iteration: k,
            elapsed: start.elapsed(),
            groups: grid.len(),
            estimate: &estimate,
        });
    }
    Ok(estimate.clamped(0.0, PEAK))
}

/// `X̂ + α(Y − X̂)`.
fn regularize(noisy: &ImageStack, estimate: &ImageStack, alpha: f64) -> ImageStack {
    let mut out = estimate.clone();
    for (o, y) in out.data_mut().iter_mut().zip(noisy.data()) {
        *o += alpha * (y - *o);
    }
    out
}

/// `γ·sqrt(|σ_b² − mean_b((Y − Ŷ)²)|)` per band.
fn remaining_noise(noisy: &ImageStack, target: &ImageStack, noise: &NoiseProfile, gamma: f64) -> Vec<f64> {
    (0..noisy.bands())
        .map(|b| {
            let (y, t) = (noisy.band(b), target.band(b));
            let mse = y.iter().zip(t).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / y.len() as f64;
            let s = noise.sigmas()[b];
            gamma * (s * s - mse).abs().sqrt()
        })
        .collect()
}

/// One sweep over the reference grid of `target`.
fn denoise_pass<S: GroupSolver>(
    target: &ImageStack,
    grid: &[PatchIndex],
    cfg: &DenoiseConfig,
    whitening: &WhiteningMatrix,
    ctx: &GroupContext,
    solver: &S,
) -> Result<ImageStack> {
    let (height, width, bands) = target.shape();
    let mut acc = Aggregator::new(height, width, bands, cfg.patch);
    for chunk in grid.chunks(CHUNK) {
        let solved: Vec<Result<(PatchGroup, PatchMatrix)>> = chunk
            .par_iter()
            .map(|&reference| {
                let group = block_match(target, reference, cfg.patch, cfg.group, cfg.radius())?;
                let y = group.matrix(target, cfg.patch)?;
                let x = solver.solve_group(&y, whitening, ctx)?;
                Ok((group, x))
            })
            .collect();
        for item in solved {
            let (group, x) = item?;
            acc.add(&group, &x)?;
        }
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_examples() {
        let n = NoiseProfile::new(vec![5.0, 30.0, 15.0]).unwrap();
        assert!((rms_sigma(&n) - (1150.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((rms_sigma(&n) - 19.5789).abs() < 1e-4);
        assert_eq!(rms_sigma(&NoiseProfile::uniform(12.5, 4).unwrap()), 12.5);
        assert_eq!(rms_sigma(&NoiseProfile::new(vec![0.0]).unwrap()), 0.0);
    }

    #[test]
    fn auto_power_cut_points() {
        assert_eq!(auto_power(19.58), 1.0);
        assert_eq!(auto_power(20.0), 0.95);
        assert_eq!(auto_power(35.0), 0.8);
        assert_eq!(auto_power(41.0), 0.55);
    }

    #[test]
    fn config_validation() {
        assert!(DenoiseConfig::default().validate().is_ok());
        let bad = [
            DenoiseConfig { stride: 7, ..Default::default() },
            DenoiseConfig { stride: 0, ..Default::default() },
            DenoiseConfig { alpha: 0.0, ..Default::default() },
            DenoiseConfig { p: 1.5, ..Default::default() },
            DenoiseConfig { iterations: 0, ..Default::default() },
            DenoiseConfig { group: 0, ..Default::default() },
            DenoiseConfig { threads: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn noise_profile_validation() {
        assert!(NoiseProfile::new(vec![]).is_err());
        assert!(NoiseProfile::new(vec![-1.0]).is_err());
        assert!(NoiseProfile::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn zero_noise_is_rejected() {
        let img = ImageStack::zeros(8, 8, 3);
        let noise = NoiseProfile::new(vec![0.0; 3]).unwrap();
        assert!(matches!(
            denoise(&img, &noise, &DenoiseConfig::default()),
            Err(Error::NothingToDenoise)
        ));
    }

    #[test]
    fn image_smaller_than_patch() {
        let img = ImageStack::zeros(4, 4, 1);
        let noise = NoiseProfile::new(vec![10.0]).unwrap();
        assert!(matches!(
            denoise(&img, &noise, &DenoiseConfig::default()),
            Err(Error::TooSmall(_))
        ));
    }

    #[test]
    fn zero_weights_give_identity() {
        let img = ImageStack::from_fn(20, 17, 3, |b, r, c| ((b * 31 + r * 7 + c * 13) % 97) as f64 * 2.0);
        let noise = NoiseProfile::new(vec![10.0, 0.0, 20.0]).unwrap();
        let cfg = DenoiseConfig {
            iterations: 1,
            c: 0.0,
            group: 8,
            window: 10,
            ..Default::default()
        };
        let out = denoise(&img, &noise, &cfg).unwrap();
        assert!(out
            .data()
            .iter()
            .zip(img.data())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn constant_band_estimates_zero() {
        let img = ImageStack::from_fn(16, 16, 2, |b, _, _| 40.0 * b as f64);
        let est = estimate_noise(&img).unwrap();
        assert_eq!(est.sigmas(), &[0.0, 0.0]);
        assert!(estimate_noise(&ImageStack::zeros(2, 5, 1)).is_err());
    }

    #[test]
    fn ramp_estimates_near_zero() {
        let img = ImageStack::from_fn(64, 64, 1, |_, r, c| 0.7 * r as f64 + 1.9 * c as f64);
        assert!(estimate_noise(&img).unwrap().sigmas()[0] <= 1.0);
    }
}
