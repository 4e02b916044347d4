//! Scalar shrinkage: thresholds, the fixed-point kernel, and a brute-force
//! comparison against the exhaustive minimizer.

use mbwpnm::oracle::scalar_min;
use mbwpnm::{gst, gst_threshold};

fn main() -> mbwpnm::error::Result<()> {
    let omega = 1.0;
    println!("thresholds for omega = {omega}");
    for p in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
        println!("  p = {p:.1}  tau = {:.6}", gst_threshold(omega, p)?);
    }

    println!();
    println!("{:>6} {:>6} {:>12} {:>12}", "delta", "p", "gst", "brute force");
    for &p in &[0.5, 0.8, 1.0] {
        for &delta in &[-3.0, 0.5, 1.2, 2.0, 4.0] {
            let fast = gst(delta, omega, p, 3)?;
            let (slow, _) = scalar_min(delta, omega, p, 1e-4);
            println!("{delta:>6.2} {p:>6.2} {fast:>12.6} {:>12.6}", slow * delta.signum());
        }
    }
    Ok(())
}
