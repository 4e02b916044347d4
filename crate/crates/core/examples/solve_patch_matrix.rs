//! Weighted Schatten-p shrinkage of one whitened two-band patch matrix.

use mbwpnm::lowrank::solve_traced;
use mbwpnm::{objective, solve, svd_thin, ObjectiveForm, PatchMatrix, ShrinkageSpec, WhiteningMatrix};
use nalgebra::DMatrix;

fn main() -> mbwpnm::error::Result<()> {
    // Two bands of four pixels each, six similar patches. Band 1 is noisier.
    let sigmas = [5.0, 20.0];
    let clean = DMatrix::from_fn(8, 6, |r, c| 100.0 + 10.0 * (r % 4) as f64 + 3.0 * c as f64);
    let jitter = DMatrix::from_fn(8, 6, |r, c| {
        let s = sigmas[r / 4];
        s * (((r * 7 + c * 13) % 11) as f64 / 5.0 - 1.0)
    });
    let y = PatchMatrix::new(&clean + jitter, 2, 4)?;
    let w = WhiteningMatrix::from_sigmas(&sigmas)?;

    // Small weights keep the dominant component, large ones remove the rest.
    let omega = vec![0.05, 3.0, 3.0, 3.0, 3.0, 3.0];
    let spec = ShrinkageSpec::new(0.8, 3, omega.clone())?;
    let trace = solve_traced(&y, &w, spec.p(), spec.iterations(), |_| Ok(omega))?;
    println!("observed singular values: {:.3?}", trace.observed);
    println!("shrunk singular values:   {:.3?}", trace.shrunk);

    let x = solve(&y, &w, &spec)?;
    let rank = svd_thin(x.matrix())?.singulars.iter().filter(|&&s| s > 1e-9).count();
    println!("estimate rank: {rank}");
    for form in [ObjectiveForm::Original, ObjectiveForm::Whitened] {
        println!(
            "{form:?} objective: noisy {:.3}, estimate {:.3}",
            objective(&y, &y, &w, &spec, form)?,
            objective(&x, &y, &w, &spec, form)?
        );
    }
    let err = |a: &DMatrix<f64>| (a - &clean).norm();
    println!("distance to clean: noisy {:.3}, estimate {:.3}", err(y.matrix()), err(x.matrix()));
    Ok(())
}
