//! Similar-patch grouping and uniform aggregation on a bundled crop.

use mbwpnm::patching::reference_grid;
use mbwpnm::{aggregate, block_match, load, PatchIndex};

fn main() -> mbwpnm::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/chelsea_128.png");
    let img = load(path, None)?;
    let (h, m) = (6, 16);

    let group = block_match(&img, PatchIndex::new(40, 60), h, m, 20)?;
    println!("{} patches similar to (40, 60):", group.len());
    for (idx, d) in group.members.iter().zip(&group.distances).take(6) {
        println!("  ({:>3}, {:>3})  squared distance {d:.1}", idx.row, idx.col);
    }

    // Grouping every reference patch and writing the patches back unchanged
    // must reproduce the image.
    let grid = reference_grid(img.height(), img.width(), h, 3)?;
    let groups = grid
        .iter()
        .map(|&r| block_match(&img, r, h, m, 20))
        .collect::<mbwpnm::error::Result<Vec<_>>>()?;
    let matrices = groups
        .iter()
        .map(|g| g.matrix(&img, h))
        .collect::<mbwpnm::error::Result<Vec<_>>>()?;
    let rebuilt = aggregate(groups.iter().zip(&matrices), img.shape(), h)?;
    let worst = img
        .data()
        .iter()
        .zip(rebuilt.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("{} groups, largest round-trip error {worst:.2e}", groups.len());
    Ok(())
}
