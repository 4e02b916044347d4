#![allow(dead_code)]

use mbwpnm::pipeline::{GroupContext, GroupSolver};
use mbwpnm::{load, ImageStack, PatchMatrix, WhiteningMatrix};
use nalgebra::DMatrix;

pub const CROPS: [&str; 3] = ["astronaut", "chelsea", "coffee"];

pub fn crop(name: &str) -> ImageStack {
    load(format!("{}/data/{name}_128.png", env!("CARGO_MANIFEST_DIR")), None).unwrap()
}

/// Weighted singular value soft thresholding of the whitened group, written
/// against nalgebra's own SVD so it shares no code with the crate's solver.
pub struct SoftThresholdSolver;

impl GroupSolver for SoftThresholdSolver {
    fn solve_group(
        &self,
        y: &PatchMatrix,
        w: &WhiteningMatrix,
        ctx: &GroupContext,
    ) -> mbwpnm::error::Result<PatchMatrix> {
        let per_band = y.pixels_per_band();
        let scale: Vec<f64> = w.inv_sigmas().to_vec();
        let whitened = DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| y.matrix()[(r, c)] * scale[r / per_band]);
        let svd = whitened.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let m = y.ncols() as f64;
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        for (i, &d) in svd.singular_values.iter().enumerate() {
            let clean = (d * d - m * ctx.noise_var).max(0.0).sqrt();
            let omega = ctx.rule.c * m.sqrt() / (clean + ctx.rule.eps);
            let s = (d - omega).max(0.0);
            if s > 0.0 {
                out += u.column(i) * v_t.row(i) * s;
            }
        }
        for r in 0..out.nrows() {
            let inv = scale[r / per_band];
            for c in 0..out.ncols() {
                out[(r, c)] /= inv;
            }
        }
        PatchMatrix::new(out, y.bands(), per_band)
    }
}
