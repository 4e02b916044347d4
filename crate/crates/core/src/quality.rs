//! Picture quality indices: PSNR, SSIM, ERGAS and SAM.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::imaging::ImageStack;
use crate::pipeline::PEAK;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Header matching [`QualityReport::csv_row`].
pub const CSV_HEADER: &str = "image,psnr,ssim,ergas,sam";

fn same_shape(x: &ImageStack, y: &ImageStack) -> Result<()> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

/// `10·log₁₀(255² / MSE)` over every sample; `+∞` for identical images.
pub fn psnr(x: &ImageStack, y: &ImageStack) -> Result<f64> {
    same_shape(x, y)?;
    let n = x.data().len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn gaussian_kernel() -> Vec<f64> {
    let k: Vec<f64> = (0..=2 * SSIM_RADIUS)
        .map(|i| {
            let t = i as f64 - SSIM_RADIUS as f64;
            (-t * t / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is `(h − 10) × (w − 10)`.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = k.iter().zip(&src[c..c + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean single-scale SSIM: 11×11 Gaussian window (σ = 1.5) over all fully
/// contained positions, `K1 = 0.01`, `K2 = 0.03`, `L = 255`, averaged over
/// bands.
pub fn ssim(x: &ImageStack, y: &ImageStack) -> Result<f64> {
    same_shape(x, y)?;
    let (h, w, bands) = x.shape();
    let side = 2 * SSIM_RADIUS + 1;
    if h < side || w < side {
        return Err(Error::TooSmall(format!(
            "SSIM needs at least {side}x{side} pixels, got {h}x{w}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for b in 0..bands {
        let (px, py) = (x.band(b), y.band(b));
        let xx: Vec<f64> = px.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = py.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = px.iter().zip(py).map(|(a, b)| a * b).collect();
        let mx = filter_valid(px, h, w, &k);
        let my = filter_valid(py, h, w, &k);
        let sxx = filter_valid(&xx, h, w, &k);
        let syy = filter_valid(&yy, h, w, &k);
        let sxy = filter_valid(&xy, h, w, &k);
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / bands as f64)
}

/// `100·sqrt(mean_b (RMSE_b / mean_b(x_ref))²)`, resolution ratio 1.
pub fn ergas(x_ref: &ImageStack, y: &ImageStack) -> Result<f64> {
    same_shape(x_ref, y)?;
    let bands = x_ref.bands();
    let mut acc = 0.0;
    for b in 0..bands {
        let (r, t) = (x_ref.band(b), y.band(b));
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return Err(Error::Domain(format!("reference band {b} has zero mean")));
        }
        let mse = r.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        acc += mse / (mean * mean);
    }
    Ok(100.0 * (acc / bands as f64).sqrt())
}

/// Mean spectral angle in degrees over pixels where both spectra are
/// nonzero.
pub fn sam(x_ref: &ImageStack, y: &ImageStack) -> Result<f64> {
    same_shape(x_ref, y)?;
    let (h, w, bands) = x_ref.shape();
    let plane = h * w;
    let (xs, ys) = (x_ref.data(), y.data());
    let mut total = 0.0;
    let mut counted = 0usize;
    for p in 0..plane {
        let (mut nx, mut ny) = (0.0f64, 0.0f64);
        for b in 0..bands {
            let (a, c) = (xs[b * plane + p], ys[b * plane + p]);
            nx += a * a;
            ny += c * c;
        }
        if nx == 0.0 || ny == 0.0 {
            continue;
        }
        // Half-angle form: exact for identical spectra and well conditioned
        // for small angles, unlike acos of the cosine.
        let (nx, ny) = (nx.sqrt(), ny.sqrt());
        let (mut diff, mut sum) = (0.0f64, 0.0f64);
        for b in 0..bands {
            let (a, c) = (xs[b * plane + p] / nx, ys[b * plane + p] / ny);
            diff += (a - c) * (a - c);
            sum += (a + c) * (a + c);
        }
        total += 2.0 * diff.sqrt().atan2(sum.sqrt());
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Domain("every pixel has a zero spectrum".into()));
    }
    Ok((total / counted as f64).to_degrees())
}

/// The four indices for one reference/test pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub ergas: f64,
    pub sam: f64,
}

impl QualityReport {
    pub fn compute(reference: &ImageStack, test: &ImageStack) -> Result<Self> {
        Ok(Self {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            ergas: ergas(reference, test)?,
            sam: sam(reference, test)?,
        })
    }

    /// `id,psnr,ssim,ergas,sam` with six decimals; infinite PSNR prints as
    /// `inf`.
    pub fn csv_row(&self, id: &str) -> String {
        let mut row = String::from(id);
        for v in [self.psnr, self.ssim, self.ergas, self.sam] {
            row.push(',');
            push_number(&mut row, v);
        }
        row
    }
}

pub(crate) fn push_number(out: &mut String, v: f64) {
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "inf" } else { "-inf" });
    } else {
        let _ = write!(out, "{v:.6}");
    }
}

impl std::fmt::Display for QualityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let psnr = if self.psnr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.4}", self.psnr)
        };
        write!(
            f,
            "psnr {psnr} dB  ssim {:.4}  ergas {:.4}  sam {:.4} deg",
            self.ssim, self.ergas, self.sam
        )
    }
}
