//! Weighted Schatten-p low-rank approximation of whitened patch matrices.
//!
//! For a group matrix `Y` and block-diagonal whitening `W`, the solver takes
//! the thin SVD `W·Y = U·diag(δ)·Vᵀ`, shrinks every `δ_i` independently with
//! [`gst`](crate::shrinkage::gst) under its own weight, and maps the result
//! back with `W⁻¹`. Non-descending weights keep the shrunk spectrum ordered,
//! so the independent scalar problems solve the coupled one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::shrinkage::{gst_unchecked, ShrinkageSpec};

/// Multiplier on the weighted penalty in [`objective`]. The shrinkage kernel
/// minimizes `½(σ − δ)² + ω·σ^p`, i.e. `(σ − δ)² + 2ω·σ^p`.
pub const PENALTY_SCALE: f64 = 2.0;

/// Smallest noise level used when inverting a band's σ.
pub const SIGMA_FLOOR: f64 = 1e-3;

/// `d × M` matrix of vectorized patches: each column stacks band 0's `h²`
/// pixels, then band 1's, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: DMatrix<f64>,
    bands: usize,
    pixels_per_band: usize,
}

impl PatchMatrix {
    pub fn new(data: DMatrix<f64>, bands: usize, pixels_per_band: usize) -> Result<Self> {
        if bands == 0 || pixels_per_band == 0 {
            return Err(Error::Contract("patch layout must be non-empty".into()));
        }
        if data.nrows() != bands * pixels_per_band {
            return Err(Error::Contract(format!(
                "{} rows, expected {bands} bands x {pixels_per_band} pixels",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::Contract("patch matrix needs at least one column".into()));
        }
        Ok(Self {
            data,
            bands,
            pixels_per_band,
        })
    }

    /// Single-band matrix with `pixels_per_band = nrows`.
    pub fn single_band(data: DMatrix<f64>) -> Result<Self> {
        let rows = data.nrows();
        Self::new(data, 1, rows)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels_per_band(&self) -> usize {
        self.pixels_per_band
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn rank_bound(&self) -> usize {
        self.nrows().min(self.ncols())
    }

    fn with_data(&self, data: DMatrix<f64>) -> Self {
        Self {
            data,
            bands: self.bands,
            pixels_per_band: self.pixels_per_band,
        }
    }
}

/// Per-band `σ_b⁻¹` scaling, applied to the `h²` rows of each band.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningMatrix {
    inv_sigmas: Vec<f64>,
}

impl WhiteningMatrix {
    pub fn new(inv_sigmas: Vec<f64>) -> Result<Self> {
        if inv_sigmas.is_empty() {
            return Err(Error::Domain("whitening needs at least one band".into()));
        }
        if let Some(v) = inv_sigmas.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Domain(format!(
                "whitening entries must be positive and finite, got {v}"
            )));
        }
        Ok(Self { inv_sigmas })
    }

    pub fn identity(bands: usize) -> Self {
        Self {
            inv_sigmas: vec![1.0; bands.max(1)],
        }
    }

    /// `W = diag(1/σ_b)`, with σ_b floored at [`SIGMA_FLOOR`].
    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self> {
        Self::new(sigmas.iter().map(|s| 1.0 / s.max(SIGMA_FLOOR)).collect())
    }

    pub fn inv_sigmas(&self) -> &[f64] {
        &self.inv_sigmas
    }

    pub fn bands(&self) -> usize {
        self.inv_sigmas.len()
    }

    fn check(&self, m: &PatchMatrix) -> Result<()> {
        if m.bands() != self.bands() {
            return Err(Error::Contract(format!(
                "whitening has {} bands, patch matrix {}",
                self.bands(),
                m.bands()
            )));
        }
        Ok(())
    }

    fn scale_rows(&self, m: &DMatrix<f64>, pixels: usize, invert: bool) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            for (b, &s) in self.inv_sigmas.iter().enumerate() {
                let f = if invert { 1.0 / s } else { s };
                col.rows_mut(b * pixels, pixels).iter_mut().for_each(|v| *v *= f);
            }
        }
        out
    }

    /// `W·M`.
    pub fn apply(&self, m: &PatchMatrix) -> Result<DMatrix<f64>> {
        self.check(m)?;
        Ok(self.scale_rows(&m.data, m.pixels_per_band, false))
    }

    /// `W⁻¹·M` for a matrix laid out like `like`.
    pub fn unapply(&self, m: DMatrix<f64>, like: &PatchMatrix) -> Result<PatchMatrix> {
        self.check(like)?;
        let data = self.scale_rows(&m, like.pixels_per_band, true);
        Ok(like.with_data(data))
    }
}

/// Thin SVD `A = U·diag(singulars)·Vᵀ` with `r = min(d, M)` components.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DMatrix<f64>,
    pub singulars: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdResult {
    pub fn rank_bound(&self) -> usize {
        self.singulars.len()
    }

    /// `U·diag(s)·Vᵀ` for an arbitrary spectrum `s` of length `r`; zero
    /// entries are skipped.
    pub fn reconstruct_with(&self, s: &[f64]) -> DMatrix<f64> {
        let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] != 0.0).collect();
        let mut left = DMatrix::zeros(self.u.nrows(), keep.len());
        let mut right = DMatrix::zeros(self.v.nrows(), keep.len());
        for (k, &i) in keep.iter().enumerate() {
            left.set_column(k, &(self.u.column(i) * s[i]));
            right.set_column(k, &self.v.column(i));
        }
        left * right.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(&self.singulars)
    }
}

/// Thin SVD with singular values sorted non-increasing and each left vector
/// signed so its first nonzero entry is non-negative.
pub fn svd_thin(a: &DMatrix<f64>) -> Result<SvdResult> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("SVD input has non-finite entries".into()));
    }
    let r = a.nrows().min(a.ncols());
    if r == 0 {
        return Ok(SvdResult {
            u: DMatrix::zeros(a.nrows(), 0),
            singulars: Vec::new(),
            v: DMatrix::zeros(a.ncols(), 0),
        });
    }
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::Domain(format!("SVD failed to converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut out_u = DMatrix::zeros(a.nrows(), r);
    let mut out_v = DMatrix::zeros(a.ncols(), r);
    let mut singulars = Vec::with_capacity(r);
    for (k, &i) in order.iter().enumerate() {
        let flip = (0..a.nrows())
            .map(|row| u[(row, i)])
            .find(|x| *x != 0.0)
            .is_some_and(|x| x < 0.0);
        let sign = if flip { -1.0 } else { 1.0 };
        for row in 0..a.nrows() {
            out_u[(row, k)] = sign * u[(row, i)];
        }
        for row in 0..a.ncols() {
            out_v[(row, k)] = sign * v[(row, i)];
        }
        singulars.push(s[i].max(0.0));
    }
    Ok(SvdResult {
        u: out_u,
        singulars,
        v: out_v,
    })
}

/// Intermediate quantities of one solve, for callers that need the spectra.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub estimate: PatchMatrix,
    /// Singular values of `W·Y`.
    pub observed: Vec<f64>,
    /// Shrunk singular values of `W·X̂`.
    pub shrunk: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `X̂ = W⁻¹·U·diag(gst(δ_i, ω_i))·Vᵀ` where `W·Y = U·diag(δ)·Vᵀ`.
pub fn solve(y: &PatchMatrix, w: &WhiteningMatrix, spec: &ShrinkageSpec) -> Result<PatchMatrix> {
    let r = y.rank_bound();
    if spec.omega().len() != r {
        return Err(Error::Contract(format!(
            "{} weights for a rank-{r} problem",
            spec.omega().len()
        )));
    }
    let omega = spec.omega().to_vec();
    solve_traced(y, w, spec.p(), spec.iterations(), |_| Ok(omega)).map(|t| t.estimate)
}

/// Like [`solve`], with weights computed from the observed spectrum of
/// `W·Y`. The weight function must return `r` non-descending non-negative
/// values.
pub fn solve_traced<F>(
    y: &PatchMatrix,
    w: &WhiteningMatrix,
    p: f64,
    iterations: usize,
    weights: F,
) -> Result<SolveTrace>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>>,
{
    let wy = w.apply(y)?;
    let svd = svd_thin(&wy)?;
    let omega = weights(&svd.singulars)?;
    let spec = ShrinkageSpec::new(p, iterations, omega)?;
    if spec.omega().len() != svd.rank_bound() {
        return Err(Error::Contract(format!(
            "{} weights for a rank-{} problem",
            spec.omega().len(),
            svd.rank_bound()
        )));
    }
    if svd.singulars.iter().all(|&s| s == 0.0) || spec.omega().iter().all(|&om| om == 0.0) {
        return Ok(SolveTrace {
            estimate: y.clone(),
            shrunk: svd.singulars.clone(),
            observed: svd.singulars,
            weights: spec.omega().to_vec(),
        });
    }
    let shrunk: Vec<f64> = svd
        .singulars
        .iter()
        .zip(spec.omega())
        .map(|(&d, &om)| gst_unchecked(d, om, spec.p(), spec.iterations()))
        .collect();
    debug_assert!(
        shrunk.windows(2).all(|s| s[0] + 1e-9 * s[0].max(1.0) >= s[1]),
        "shrunk spectrum lost its ordering: {shrunk:?}"
    );
    let estimate = w.unapply(svd.reconstruct_with(&shrunk), y)?;
    Ok(SolveTrace {
        estimate,
        observed: svd.singulars,
        shrunk,
        weights: spec.omega().to_vec(),
    })
}

/// Which singular values the penalty is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveForm {
    /// Penalty on `σ(X)`.
    Original,
    /// Penalty on `σ(W·X)`.
    Whitened,
}

/// `‖W(X − Y)‖_F² + PENALTY_SCALE·Σ ω_i σ_i^p`, with σ taken from `X` or
/// `W·X` according to `form`.
pub fn objective(
    x: &PatchMatrix,
    y: &PatchMatrix,
    w: &WhiteningMatrix,
    spec: &ShrinkageSpec,
    form: ObjectiveForm,
) -> Result<f64> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() || x.bands() != y.bands() {
        return Err(Error::Contract(format!(
            "X is {}x{}, Y is {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if spec.omega().len() != x.rank_bound() {
        return Err(Error::Contract(format!(
            "{} weights for a rank-{} problem",
            spec.omega().len(),
            x.rank_bound()
        )));
    }
    let diff = x.with_data(&x.data - &y.data);
    let fit = w.apply(&diff)?.norm_squared();
    let spectrum = match form {
        ObjectiveForm::Original => svd_thin(&x.data)?.singulars,
        ObjectiveForm::Whitened => svd_thin(&w.apply(x)?)?.singulars,
    };
    Ok(fit + PENALTY_SCALE * spec.penalty(&spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values))
    }

    #[test]
    fn svd_of_diagonal_and_zero() {
        let s = svd_thin(&diag(&[1.0, 3.0])).unwrap();
        assert!((s.singulars[0] - 3.0).abs() < 1e-14);
        assert!((s.singulars[1] - 1.0).abs() < 1e-14);
        let z = svd_thin(&DMatrix::zeros(4, 3)).unwrap();
        assert_eq!(z.singulars, vec![0.0; 3]);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd_thin(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn svd_sign_convention() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let s = svd_thin(&a).unwrap();
        for col in s.u.column_iter() {
            let first = col.iter().find(|x| **x != 0.0).unwrap();
            assert!(*first >= 0.0);
        }
        assert!((s.reconstruct() - &a).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn diagonal_soft_threshold() {
        let y = PatchMatrix::single_band(diag(&[5.0, 2.0])).unwrap();
        let spec = ShrinkageSpec::new(1.0, 3, vec![1.0, 1.0]).unwrap();
        let x = solve(&y, &WhiteningMatrix::identity(1), &spec).unwrap();
        assert!((x.matrix() - diag(&[4.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn zero_weights_reproduce_input() {
        let y = PatchMatrix::new(
            DMatrix::from_fn(8, 5, |i, j| (i as f64 - j as f64 * 1.5).sin() * 40.0 + 100.0),
            2,
            4,
        )
        .unwrap();
        let w = WhiteningMatrix::new(vec![0.1, 0.02]).unwrap();
        let spec = ShrinkageSpec::new(0.6, 3, vec![0.0; 5]).unwrap();
        let x = solve(&y, &w, &spec).unwrap();
        assert!((x.matrix() - y.matrix()).amax() < 1e-10);
    }

    #[test]
    fn huge_weights_zero_everything() {
        let y = PatchMatrix::single_band(DMatrix::from_fn(4, 6, |i, j| (i + 2 * j) as f64)).unwrap();
        let spec = ShrinkageSpec::new(0.5, 3, vec![1e6; 4]).unwrap();
        let x = solve(&y, &WhiteningMatrix::identity(1), &spec).unwrap();
        assert_eq!(x.matrix().amax(), 0.0);
    }

    #[test]
    fn weight_length_mismatch() {
        let y = PatchMatrix::single_band(DMatrix::zeros(3, 2)).unwrap();
        let spec = ShrinkageSpec::new(1.0, 1, vec![0.0; 3]).unwrap();
        assert!(matches!(
            solve(&y, &WhiteningMatrix::identity(1), &spec),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn all_zero_input_returned_unchanged() {
        let y = PatchMatrix::single_band(DMatrix::zeros(3, 2)).unwrap();
        let spec = ShrinkageSpec::new(0.3, 1, vec![1.0; 2]).unwrap();
        assert_eq!(solve(&y, &WhiteningMatrix::identity(1), &spec).unwrap(), y);
    }

    #[test]
    fn whitening_round_trip() {
        let y = PatchMatrix::new(DMatrix::from_fn(6, 2, |i, j| (i * 2 + j) as f64), 3, 2).unwrap();
        let w = WhiteningMatrix::from_sigmas(&[2.0, 0.0, 4.0]).unwrap();
        assert_eq!(w.inv_sigmas(), &[0.5, 1000.0, 0.25]);
        let wy = w.apply(&y).unwrap();
        assert_eq!(wy[(0, 1)], 0.5);
        assert_eq!(wy[(2, 0)], 4000.0);
        let back = w.unapply(wy, &y).unwrap();
        assert!((back.matrix() - y.matrix()).amax() < 1e-12);
        assert!(WhiteningMatrix::new(vec![0.0]).is_err());
        assert!(w.apply(&PatchMatrix::single_band(DMatrix::zeros(2, 2)).unwrap()).is_err());
    }

    #[test]
    fn objective_examples() {
        let w = WhiteningMatrix::identity(1);
        let y = PatchMatrix::single_band(diag(&[5.0, 2.0])).unwrap();
        let zero_w = ShrinkageSpec::new(1.0, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(objective(&y, &y, &w, &zero_w, ObjectiveForm::Original).unwrap(), 0.0);

        let ones = ShrinkageSpec::new(1.0, 1, vec![1.0, 1.0]).unwrap();
        let zero = PatchMatrix::single_band(DMatrix::zeros(2, 2)).unwrap();
        let at_zero = objective(&zero, &y, &w, &ones, ObjectiveForm::Whitened).unwrap();
        assert!((at_zero - 29.0).abs() < 1e-12);

        // fit (1 + 1) plus 2·(4 + 1)
        let x = PatchMatrix::single_band(diag(&[4.0, 1.0])).unwrap();
        let v = objective(&x, &y, &w, &ones, ObjectiveForm::Original).unwrap();
        assert!((v - 12.0).abs() < 1e-12);
    }
}
