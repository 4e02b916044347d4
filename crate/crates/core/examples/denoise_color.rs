//! Denoises a color crop corrupted by band-dependent Gaussian noise and
//! writes the noisy and restored images next to the crate.
//!
//! Run with `cargo run --release --example denoise_color [crop] [p]`.

use mbwpnm::pipeline::{auto_power, denoise_with, SchattenSolver};
use mbwpnm::{add_awgn, load, save, DenoiseConfig, NoiseProfile, QualityReport};

fn main() -> mbwpnm::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let crop = args.next().unwrap_or_else(|| "chelsea".into());
    let path = format!("{}/data/{crop}_128.png", env!("CARGO_MANIFEST_DIR"));
    let clean = load(&path, None)?;

    let noise = NoiseProfile::new(vec![30.0, 10.0, 50.0])?;
    let noisy = add_awgn(&clean, &noise, 1)?;
    let p = match args.next() {
        Some(v) => v.parse().expect("p must be a number"),
        None => auto_power(noise.rms()),
    };
    println!("noise {:?}, rms {:.2}, p = {p}", noise.sigmas(), noise.rms());

    let cfg = DenoiseConfig { p, ..DenoiseConfig::for_noise(&noise) };
    let restored = denoise_with(&noisy, &noise, &cfg, &SchattenSolver, |r| {
        println!("  iteration {}: {:.1} s, {} groups", r.iteration, r.elapsed.as_secs_f64(), r.groups);
    })?;

    println!("noisy:    {}", QualityReport::compute(&clean, &noisy.clamped(0.0, 255.0))?);
    println!("restored: {}", QualityReport::compute(&clean, &restored)?);
    save(&noisy.clamped(0.0, 255.0), format!("{crop}_noisy.png"), None)?;
    save(&restored, format!("{crop}_restored.png"), None)?;
    Ok(())
}
