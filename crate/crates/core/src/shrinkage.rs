//! Scalar generalized soft-thresholding and per-group weight construction.
//!
//! The scalar problem solved here is
//!
//! ```text
//! minimize_σ≥0  ½(σ − δ)² + ω·σ^p,    0 < p ≤ 1
//! ```
//!
//! equivalently `(σ − δ)² + 2ω·σ^p`. Below the threshold `τ_p(ω)` the global
//! minimizer is exactly zero; above it the minimizer is the larger root of
//! `σ − |δ| + ω·p·σ^(p−1) = 0`, reached by a short fixed-point iteration.

use crate::error::{Error, Result};

/// Default number of fixed-point iterations inside [`gst`].
pub const DEFAULT_GST_ITERATIONS: usize = 3;

/// Default weight constant `c` (2√2).
pub const DEFAULT_WEIGHT_CONSTANT: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Default `ε` guarding the weight denominator.
pub const DEFAULT_WEIGHT_EPS: f64 = 1e-16;

fn check_domain(omega: f64, p: f64) -> Result<()> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!(
            "weight must be finite and non-negative, got {omega}"
        )));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("power must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Parameters of one singular-value shrinkage: power, weights and inner
/// iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageSpec {
    p: f64,
    iterations: usize,
    omega: Vec<f64>,
}

impl ShrinkageSpec {
    /// Validates `0 < p ≤ 1`, `iterations ≥ 1` and that `omega` is
    /// non-negative and non-descending.
    pub fn new(p: f64, iterations: usize, omega: Vec<f64>) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("power must lie in (0, 1], got {p}")));
        }
        if iterations == 0 {
            return Err(Error::Domain("GST iteration count must be >= 1".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(**w >= 0.0)) {
            return Err(Error::Domain(format!("negative or NaN weight {w}")));
        }
        if let Some(i) = omega.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::Contract(format!(
                "weights must be non-descending: omega[{i}] = {} > omega[{}] = {}",
                omega[i],
                i + 1,
                omega[i + 1]
            )));
        }
        Ok(Self {
            p,
            iterations,
            omega,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Weighted Schatten-p penalty `Σ ω_i σ_i^p` of a spectrum.
    pub fn penalty(&self, singulars: &[f64]) -> f64 {
        self.omega
            .iter()
            .zip(singulars)
            .map(|(w, s)| w * s.powf(self.p))
            .sum()
    }
}

/// The magnitude below which [`gst`] returns exactly zero.
pub fn gst_threshold(omega: f64, p: f64) -> Result<f64> {
    check_domain(omega, p)?;
    Ok(threshold_unchecked(omega, p))
}

fn threshold_unchecked(omega: f64, p: f64) -> f64 {
    if p == 1.0 {
        // 0^0 in the general formula; the limit is the soft threshold.
        return omega;
    }
    if omega == 0.0 {
        return 0.0;
    }
    let base = 2.0 * omega * (1.0 - p);
    base.powf(1.0 / (2.0 - p)) + omega * p * base.powf((p - 1.0) / (2.0 - p))
}

/// Generalized soft-thresholding of `delta` with weight `omega`, power `p`
/// and `iterations` fixed-point steps. `p = 1` takes the exact
/// soft-thresholding closed form.
pub fn gst(delta: f64, omega: f64, p: f64, iterations: usize) -> Result<f64> {
    check_domain(omega, p)?;
    if iterations == 0 {
        return Err(Error::Domain("GST iteration count must be >= 1".into()));
    }
    Ok(gst_unchecked(delta, omega, p, iterations))
}

#[inline]
pub(crate) fn gst_unchecked(delta: f64, omega: f64, p: f64, iterations: usize) -> f64 {
    if p == 1.0 {
        return delta.signum() * (delta.abs() - omega).max(0.0);
    }
    let magnitude = delta.abs();
    if magnitude <= threshold_unchecked(omega, p) {
        return 0.0;
    }
    let step = omega * p;
    let mut sigma = magnitude;
    for _ in 0..iterations {
        sigma = magnitude - step * sigma.powf(p - 1.0);
    }
    delta.signum() * sigma
}

/// How the clean singular values feeding the weight rule are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularEstimate {
    /// `σ̂_i = sqrt(max(δ_i² − M·v, 0))`: subtract the expected noise energy.
    #[default]
    NoiseCorrected,
    /// Use the observed `δ_i` directly.
    Raw,
}

/// Parameters of the weight rule `ω_i = c·√M / (σ̂_i^(1/p) + ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRule {
    pub c: f64,
    pub eps: f64,
    pub estimate: SingularEstimate,
}

impl Default for WeightRule {
    fn default() -> Self {
        Self {
            c: DEFAULT_WEIGHT_CONSTANT,
            eps: DEFAULT_WEIGHT_EPS,
            estimate: SingularEstimate::NoiseCorrected,
        }
    }
}

/// Builds the non-descending weight vector for one patch group from its
/// non-increasing observed singular values `delta`.
///
/// `group_size` is the number of columns `M`, `noise_var` the per-entry
/// noise variance after whitening.
pub fn make_weights(
    delta: &[f64],
    rule: &WeightRule,
    group_size: usize,
    p: f64,
    noise_var: f64,
) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("power must lie in (0, 1], got {p}")));
    }
    if !(rule.c >= 0.0) || !(rule.eps >= 0.0) || !(noise_var >= 0.0) {
        return Err(Error::Domain(
            "c, eps and noise variance must be non-negative".into(),
        ));
    }
    if let Some(i) = delta.windows(2).position(|w| w[0] < w[1]) {
        return Err(Error::Contract(format!(
            "singular values must be non-increasing (index {i})"
        )));
    }
    let numerator = rule.c * (group_size as f64).sqrt();
    let energy = group_size as f64 * noise_var;
    let weights = delta
        .iter()
        .map(|&d| {
            let clean = match rule.estimate {
                SingularEstimate::NoiseCorrected => (d * d - energy).max(0.0).sqrt(),
                SingularEstimate::Raw => d,
            };
            let denom = clean.powf(1.0 / p) + rule.eps;
            if numerator == 0.0 {
                0.0
            } else {
                numerator / denom
            }
        })
        .collect();
    Ok(weights)
}
