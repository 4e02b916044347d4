//! Brute-force references for the test suite. Nothing in the denoising path
//! calls into this module.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::lowrank::{objective, ObjectiveForm, PatchMatrix, WhiteningMatrix, PENALTY_SCALE};
use crate::shrinkage::ShrinkageSpec;

/// `(σ − |δ|)² + PENALTY_SCALE·ω·σ^p`.
pub fn scalar_objective(sigma: f64, delta: f64, omega: f64, p: f64) -> f64 {
    let d = sigma - delta.abs();
    d * d + PENALTY_SCALE * omega * sigma.powf(p)
}

/// Exhaustive minimum of [`scalar_objective`] over `σ ∈ {0, step, 2·step, …}`
/// up to `|δ|`, endpoint included. Returns `(argmin, min)`; ties keep the
/// smallest σ.
///
/// Grid points whose fidelity term alone, or whose penalty alone, already
/// exceeds the incumbent cannot win and are skipped.
pub fn scalar_min(delta: f64, omega: f64, p: f64, step: f64) -> (f64, f64) {
    assert!(step > 0.0, "grid step must be positive");
    let target = delta.abs();
    let f = |s: f64| scalar_objective(s, delta, omega, p);
    let (mut best_s, mut best) = (0.0, f(0.0));
    let end = f(target);
    if end < best {
        best_s = target;
        best = end;
    }
    let n = (target / step).floor() as usize;
    let lo = ((target - best.sqrt()) / step).floor().max(1.0) as usize;
    let hi = if omega > 0.0 {
        ((best / (PENALTY_SCALE * omega)).powf(1.0 / p) / step).ceil() as usize
    } else {
        n
    };
    for k in lo..=hi.min(n) {
        let s = k as f64 * step;
        let v = f(s);
        if v < best || (v == best && s < best_s) {
            best = v;
            best_s = s;
        }
    }
    (best_s, best)
}

/// Checks that `x_hat` is no worse than `x_hat + eta·Δ` for `trials` random
/// unit-Frobenius directions `Δ`, under both objective forms, with slack
/// `1e-10`. Directions come from ChaCha8 seeded with `seed`.
pub fn perturbation_check(
    x_hat: &PatchMatrix,
    y: &PatchMatrix,
    w: &WhiteningMatrix,
    spec: &ShrinkageSpec,
    trials: usize,
    eta: f64,
    seed: u64,
) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forms = [ObjectiveForm::Original, ObjectiveForm::Whitened];
    let base: Vec<f64> = forms
        .iter()
        .map(|&f| objective(x_hat, y, w, spec, f))
        .collect::<Result<_>>()?;
    for _ in 0..trials {
        let mut dir = DMatrix::from_fn(x_hat.nrows(), x_hat.ncols(), |_, _| {
            StandardNormal.sample(&mut rng)
        });
        let norm = dir.norm();
        dir /= norm;
        let moved = PatchMatrix::new(
            x_hat.matrix() + dir * eta,
            x_hat.bands(),
            x_hat.pixels_per_band(),
        )?;
        for (form, b) in forms.iter().zip(&base) {
            if objective(&moved, y, w, spec, *form)? + 1e-10 < *b {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
