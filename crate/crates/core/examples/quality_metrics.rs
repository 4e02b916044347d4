//! Full-reference quality of a crop under increasing noise.

use mbwpnm::quality::CSV_HEADER;
use mbwpnm::{add_awgn, load, NoiseProfile, QualityReport};

fn main() -> mbwpnm::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/coffee_128.png");
    let clean = load(path, None)?;
    println!("{CSV_HEADER}");
    println!("{}", QualityReport::compute(&clean, &clean)?.csv_row("identical"));
    for sigma in [5.0, 10.0, 25.0, 50.0] {
        let noisy = add_awgn(&clean, &NoiseProfile::uniform(sigma, 3)?, 3)?.clamped(0.0, 255.0);
        let report = QualityReport::compute(&clean, &noisy)?;
        println!("{}", report.csv_row(&format!("sigma_{sigma}")));
    }
    Ok(())
}
