//! Patch vectorization, block matching and overlap averaging.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::imaging::ImageStack;
use crate::lowrank::PatchMatrix;

/// Top-left corner of an `h × h` spatial patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchIndex {
    pub row: usize,
    pub col: usize,
}

impl PatchIndex {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn check(&self, img: &ImageStack, h: usize) -> Result<()> {
        if h == 0 || self.row + h > img.height() || self.col + h > img.width() {
            return Err(Error::Contract(format!(
                "{h}x{h} patch at ({}, {}) outside {}x{} image",
                self.row,
                self.col,
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }
}

/// A reference patch and its nearest neighbours, reference first.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub reference: PatchIndex,
    pub members: Vec<PatchIndex>,
    /// Squared distance of each member to the reference.
    pub distances: Vec<f64>,
}

impl PatchGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Stacks the members' patch vectors column by column.
    pub fn matrix(&self, img: &ImageStack, h: usize) -> Result<PatchMatrix> {
        for m in &self.members {
            m.check(img, h)?;
        }
        let d = h * h * img.bands();
        let mut data = DMatrix::zeros(d, self.members.len());
        for (j, m) in self.members.iter().enumerate() {
            fill_patch(img, *m, h, data.column_mut(j).as_mut_slice());
        }
        PatchMatrix::new(data, img.bands(), h * h)
    }
}

#[inline]
fn fill_patch(img: &ImageStack, idx: PatchIndex, h: usize, out: &mut [f64]) {
    let w = img.width();
    let mut k = 0;
    for b in 0..img.bands() {
        let band = img.band(b);
        for r in 0..h {
            let start = (idx.row + r) * w + idx.col;
            out[k..k + h].copy_from_slice(&band[start..start + h]);
            k += h;
        }
    }
}

/// Band-major, row-major vector of the `h × h` patch at `idx`.
pub fn extract_patch(img: &ImageStack, idx: PatchIndex, h: usize) -> Result<Vec<f64>> {
    idx.check(img, h)?;
    let mut out = vec![0.0; h * h * img.bands()];
    fill_patch(img, idx, h, &mut out);
    Ok(out)
}

fn patch_distance(img: &ImageStack, a: PatchIndex, b: PatchIndex, h: usize) -> f64 {
    let w = img.width();
    let mut acc = 0.0;
    for band in 0..img.bands() {
        let plane = img.band(band);
        for r in 0..h {
            let ra = &plane[(a.row + r) * w + a.col..][..h];
            let rb = &plane[(b.row + r) * w + b.col..][..h];
            acc += ra
                .iter()
                .zip(rb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>();
        }
    }
    acc
}

/// Finds the `group_size` patches nearest to `reference` (squared Euclidean
/// distance over all bands) among those whose top-left corner lies within
/// `radius` pixels of it in each direction.
///
/// The reference always comes first. The rest follow by ascending distance,
/// ties broken in raster order.
pub fn block_match(
    img: &ImageStack,
    reference: PatchIndex,
    h: usize,
    group_size: usize,
    radius: usize,
) -> Result<PatchGroup> {
    reference.check(img, h)?;
    if group_size == 0 {
        return Err(Error::Contract("group size must be >= 1".into()));
    }
    let row_lo = reference.row.saturating_sub(radius);
    let row_hi = (reference.row + radius).min(img.height() - h);
    let col_lo = reference.col.saturating_sub(radius);
    let col_hi = (reference.col + radius).min(img.width() - h);

    let mut candidates = Vec::with_capacity((row_hi - row_lo + 1) * (col_hi - col_lo + 1));
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let idx = PatchIndex { row, col };
            if idx != reference {
                candidates.push((patch_distance(img, reference, idx, h), idx));
            }
        }
    }
    let order = |a: &(f64, PatchIndex), b: &(f64, PatchIndex)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let keep = (group_size - 1).min(candidates.len());
    if keep < candidates.len() && keep > 0 {
        candidates.select_nth_unstable_by(keep - 1, order);
    }
    candidates.truncate(keep);
    candidates.sort_unstable_by(order);

    let mut members = Vec::with_capacity(keep + 1);
    let mut distances = Vec::with_capacity(keep + 1);
    members.push(reference);
    distances.push(0.0);
    for (d, idx) in candidates {
        members.push(idx);
        distances.push(d);
    }
    Ok(PatchGroup {
        reference,
        members,
        distances,
    })
}

/// Reference positions along one axis: `0, s, 2s, …` plus the last valid
/// offset so the final patch touches the border.
fn axis_grid(extent: usize, h: usize, stride: usize) -> Vec<usize> {
    let last = extent - h;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Reference patches on a stride grid, row-major, clamped to the border.
pub fn reference_grid(height: usize, width: usize, h: usize, stride: usize) -> Result<Vec<PatchIndex>> {
    if h == 0 || stride == 0 || stride > h {
        return Err(Error::Contract(format!(
            "stride {stride} must lie in 1..={h} for full coverage"
        )));
    }
    if height < h || width < h {
        return Err(Error::TooSmall(format!(
            "{height}x{width} image cannot hold a {h}x{h} patch"
        )));
    }
    let cols = axis_grid(width, h, stride);
    Ok(axis_grid(height, h, stride)
        .into_iter()
        .flat_map(|row| cols.iter().map(move |&col| PatchIndex { row, col }))
        .collect())
}

/// Running sum and count per pixel. Contributions are added in call order
/// with Neumaier compensation, so averaging many copies of one value gives
/// that value back to within an ulp or two.
#[derive(Debug, Clone)]
pub struct Aggregator {
    h: usize,
    sum: ImageStack,
    carry: Vec<f64>,
    count: Vec<u32>,
}

impl Aggregator {
    pub fn new(height: usize, width: usize, bands: usize, h: usize) -> Self {
        Self {
            h,
            sum: ImageStack::zeros(width, height, bands),
            carry: vec![0.0; width * height * bands],
            count: vec![0; width * height],
        }
    }

    /// Adds every column of `estimate` at the matching member position.
    pub fn add(&mut self, group: &PatchGroup, estimate: &PatchMatrix) -> Result<()> {
        let (height, width, bands) = self.sum.shape();
        let h = self.h;
        if estimate.ncols() != group.members.len() || estimate.nrows() != h * h * bands {
            return Err(Error::Contract(format!(
                "estimate is {}x{}, group needs {}x{}",
                estimate.nrows(),
                estimate.ncols(),
                h * h * bands,
                group.members.len()
            )));
        }
        for (j, m) in group.members.iter().enumerate() {
            if m.row + h > height || m.col + h > width {
                return Err(Error::Contract(format!("member {m:?} out of bounds")));
            }
            let col = estimate.matrix().column(j);
            let col = col.as_slice();
            let mut k = 0;
            for b in 0..bands {
                let offset = b * height * width;
                let plane = self.sum.band_mut(b);
                for r in 0..h {
                    let start = (m.row + r) * width + m.col;
                    let carry = &mut self.carry[offset + start..offset + start + h];
                    for ((dst, c), &x) in plane[start..start + h].iter_mut().zip(carry).zip(&col[k..k + h]) {
                        let t = *dst + x;
                        *c += if dst.abs() >= x.abs() { (*dst - t) + x } else { (x - t) + *dst };
                        *dst = t;
                    }
                    k += h;
                }
            }
            for r in 0..h {
                let start = (m.row + r) * width + m.col;
                self.count[start..start + h].iter_mut().for_each(|c| *c += 1);
            }
        }
        Ok(())
    }

    /// Per-pixel average. Fails if any pixel received no contribution.
    pub fn finish(self) -> Result<ImageStack> {
        let (height, width, bands) = self.sum.shape();
        if let Some(i) = self.count.iter().position(|&c| c == 0) {
            return Err(Error::Uncovered {
                row: i / width,
                col: i % width,
            });
        }
        let mut out = self.sum;
        let plane = height * width;
        for b in 0..bands {
            let carry = &self.carry[b * plane..(b + 1) * plane];
            for ((v, &c), &n) in out.band_mut(b).iter_mut().zip(carry).zip(&self.count) {
                *v = (*v + c) / n as f64;
            }
        }
        debug_assert_eq!(out.shape(), (height, width, bands));
        Ok(out)
    }
}

/// Uniformly averages the denoised patches of every group into an image of
/// shape `(height, width, bands)`.
pub fn aggregate<'a, I>(
    contributions: I,
    shape: (usize, usize, usize),
    h: usize,
) -> Result<ImageStack>
where
    I: IntoIterator<Item = (&'a PatchGroup, &'a PatchMatrix)>,
{
    let (height, width, bands) = shape;
    let mut acc = Aggregator::new(height, width, bands, h);
    for (group, estimate) in contributions {
        acc.add(group, estimate)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_layout() {
        let img = ImageStack::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(extract_patch(&img, PatchIndex::new(0, 0), 1).unwrap(), vec![1.0, 2.0, 3.0]);
        let img = ImageStack::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            extract_patch(&img, PatchIndex::new(0, 0), 2).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
        let flat = ImageStack::from_fn(5, 5, 2, |_, _, _| 7.0);
        assert!(extract_patch(&flat, PatchIndex::new(1, 2), 3)
            .unwrap()
            .iter()
            .all(|v| *v == 7.0));
    }

    #[test]
    fn extract_out_of_bounds() {
        let img = ImageStack::zeros(4, 4, 1);
        assert!(matches!(
            extract_patch(&img, PatchIndex::new(2, 0), 3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn constant_image_matches_in_raster_order() {
        let img = ImageStack::from_fn(10, 10, 1, |_, _, _| 3.0);
        let g = block_match(&img, PatchIndex::new(4, 4), 3, 5, 2).unwrap();
        assert_eq!(g.members[0], PatchIndex::new(4, 4));
        assert_eq!(
            &g.members[1..],
            &[
                PatchIndex::new(2, 2),
                PatchIndex::new(2, 3),
                PatchIndex::new(2, 4),
                PatchIndex::new(2, 5)
            ]
        );
        assert!(g.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn single_member_group() {
        let img = ImageStack::from_fn(8, 8, 2, |b, r, c| (b + r * c) as f64);
        let g = block_match(&img, PatchIndex::new(1, 1), 2, 1, 3).unwrap();
        assert_eq!(g.members, vec![PatchIndex::new(1, 1)]);
    }

    #[test]
    fn group_capped_by_window() {
        let img = ImageStack::zeros(4, 4, 1);
        let g = block_match(&img, PatchIndex::new(0, 0), 2, 100, 10).unwrap();
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn grid_touches_border() {
        let grid = reference_grid(10, 8, 4, 3).unwrap();
        let rows: Vec<usize> = grid.iter().map(|p| p.row).filter(|_| true).collect();
        assert!(rows.contains(&6));
        assert!(grid.contains(&PatchIndex::new(6, 4)));
        assert_eq!(grid[0], PatchIndex::new(0, 0));
        assert!(reference_grid(10, 10, 4, 5).is_err());
        assert!(reference_grid(3, 10, 4, 2).is_err());
    }

    #[test]
    fn averaging_rules() {
        let img = ImageStack::zeros(1, 1, 1);
        let group = PatchGroup {
            reference: PatchIndex::new(0, 0),
            members: vec![PatchIndex::new(0, 0), PatchIndex::new(0, 0)],
            distances: vec![0.0, 0.0],
        };
        let est = PatchMatrix::single_band(DMatrix::from_row_slice(1, 2, &[0.0, 2.0])).unwrap();
        let out = aggregate([(&group, &est)], img.shape(), 1).unwrap();
        assert_eq!(out.data(), &[1.0]);
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let group = PatchGroup {
            reference: PatchIndex::new(0, 0),
            members: vec![PatchIndex::new(0, 0)],
            distances: vec![0.0],
        };
        let est = PatchMatrix::single_band(DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(
            aggregate([(&group, &est)], (1, 2, 1), 1),
            Err(Error::Uncovered { row: 0, col: 1 })
        ));
    }

    #[test]
    fn whole_image_group_is_identity() {
        let img = ImageStack::from_fn(4, 4, 3, |b, r, c| (b * 16 + r * 4 + c) as f64);
        let group = block_match(&img, PatchIndex::new(0, 0), 4, 1, 0).unwrap();
        let m = group.matrix(&img, 4).unwrap();
        let out = aggregate([(&group, &m)], img.shape(), 4).unwrap();
        assert_eq!(out, img);
    }
}
