//! Denoises a synthetic eight-band stack stored in the raw `.mbs` container,
//! with per-band noise estimated from the data.

use mbwpnm::imaging::{decode, encode};
use mbwpnm::{add_awgn, denoise, estimate_noise, psnr, DenoiseConfig, Format, ImageStack, NoiseProfile};

fn main() -> mbwpnm::error::Result<()> {
    let (w, h, bands) = (64, 64, 8);
    // Smooth spectra over a few flat regions and a ramp.
    let clean = ImageStack::from_fn(w, h, bands, |b, r, c| {
        let region = (r / 16 + c / 21) % 3;
        let base = [60.0, 120.0, 190.0][region];
        (base + 8.0 * b as f64 + 0.5 * c as f64).min(250.0)
    });
    let truth = NoiseProfile::new((0..bands).map(|b| 4.0 + 3.0 * b as f64).collect())?;
    let noisy = add_awgn(&clean, &truth, 7)?;

    let bytes = encode(&noisy, Format::Mbs)?;
    let stored = decode(&bytes, Format::Mbs)?;
    println!("container: {} bytes, {} bands", bytes.len(), stored.bands());

    let guess = estimate_noise(&stored)?;
    for (b, (t, e)) in truth.sigmas().iter().zip(guess.sigmas()).enumerate() {
        println!("  band {b}: true sigma {t:>5.1}, estimated {e:>5.1}");
    }

    let cfg = DenoiseConfig { iterations: 4, ..DenoiseConfig::for_noise(&guess) };
    let restored = denoise(&stored, &guess, &cfg)?;
    println!("psnr noisy {:.2} dB, restored {:.2} dB",
        psnr(&clean, &noisy.clamped(0.0, 255.0))?, psnr(&clean, &restored)?);
    Ok(())
}
