//! Planar image stacks, file I/O and seeded noise synthesis.
//!
//! Supported containers:
//!
//! * PNG, 8-bit gray or RGB (alpha is dropped on read);
//! * binary PGM (`P5`) and PPM (`P6`) with `maxval ≤ 255`;
//! * MBS: `"MBS1"`, little-endian `u32` width, height, bands, then
//!   `width·height·bands` little-endian `f32` samples, band-major, rows
//!   row-major;
//! * a directory of single-band PGM files, one per band, ordered by file name.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pipeline::NoiseProfile;

pub const MBS_MAGIC: &[u8; 4] = b"MBS1";
const MBS_HEADER_LEN: usize = 16;

/// An `H × W × B` raster stored planar: band 0's rows, then band 1's, ...
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f64>,
}

impl ImageStack {
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Domain(format!(
                "image dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        if data.len() != width * height * bands {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a {width}x{height}x{bands} stack",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("image samples must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, bands: usize) -> Self {
        assert!(width > 0 && height > 0 && bands > 0, "empty image");
        Self {
            width,
            height,
            bands,
            data: vec![0.0; width * height * bands],
        }
    }

    /// Builds a stack from `f(band, row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::zeros(width, height, bands);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    img.data[(b * height + r) * width + c] = f(b, r, c);
                }
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `(height, width, bands)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.bands)
    }

    pub fn same_shape(&self, other: &ImageStack) -> bool {
        self.shape() == other.shape()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, band: usize, row: usize, col: usize, value: f64) {
        self.data[(band * self.height + row) * self.width + col] = value;
    }

    pub fn band(&self, band: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[band * n..(band + 1) * n]
    }

    pub fn band_mut(&mut self, band: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[band * n..(band + 1) * n]
    }

    /// Copy with every sample clamped to `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> ImageStack {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        out
    }

    /// Top-left `height × width` window starting at `(row, col)`, all bands.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<ImageStack> {
        if row + height > self.height || col + width > self.width || height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(ImageStack::from_fn(width, height, self.bands, |b, r, c| {
            self.get(b, row + r, col + c)
        }))
    }
}

/// Container format of an image file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Png,
    Pgm,
    Ppm,
    Mbs,
    /// Directory of per-band PGM files.
    BandDir,
}

impl Format {
    pub fn from_extension(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(Format::Png),
            "pgm" => Some(Format::Pgm),
            "ppm" => Some(Format::Ppm),
            "pnm" => Some(Format::Ppm),
            "mbs" => Some(Format::Mbs),
            _ => None,
        }
    }

    fn resolve(path: &Path, hint: Option<Format>) -> Result<Format> {
        if let Some(f) = hint {
            return Ok(f);
        }
        if path.is_dir() {
            return Ok(Format::BandDir);
        }
        Format::from_extension(path)
            .ok_or_else(|| Error::UnsupportedFormat(path.display().to_string()))
    }
}

pub fn load(path: impl AsRef<Path>, hint: Option<Format>) -> Result<ImageStack> {
    let path = path.as_ref();
    match Format::resolve(path, hint)? {
        Format::BandDir => load_band_dir(path),
        format => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode(&bytes, format)
        }
    }
}

pub fn save(img: &ImageStack, path: impl AsRef<Path>, format: Option<Format>) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => Format::from_extension(path)
            .ok_or_else(|| Error::UnsupportedFormat(path.display().to_string()))?,
    };
    if format == Format::BandDir {
        return save_band_dir(img, path);
    }
    let bytes = encode(img, format)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes an in-memory file.
pub fn decode(bytes: &[u8], format: Format) -> Result<ImageStack> {
    match format {
        Format::Png => decode_png(bytes),
        Format::Pgm | Format::Ppm => decode_pnm(bytes),
        Format::Mbs => decode_mbs(bytes),
        Format::BandDir => Err(Error::UnsupportedFormat(
            "band directories cannot be decoded from bytes".into(),
        )),
    }
}

/// Encodes to an in-memory file. 8-bit formats round and clamp to `[0, 255]`.
pub fn encode(img: &ImageStack, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Png => encode_png(img),
        Format::Pgm => encode_pnm(img, 1, b"P5"),
        Format::Ppm => encode_pnm(img, 3, b"P6"),
        Format::Mbs => Ok(encode_mbs(img)),
        Format::BandDir => Err(Error::UnsupportedFormat(
            "band directories cannot be encoded to bytes".into(),
        )),
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Interleaves a planar stack into 8-bit pixels.
fn interleave_u8(img: &ImageStack) -> Vec<u8> {
    let (h, w, b) = img.shape();
    let mut out = Vec::with_capacity(h * w * b);
    for r in 0..h {
        for c in 0..w {
            for band in 0..b {
                out.push(to_u8(img.get(band, r, c)));
            }
        }
    }
    out
}

fn deinterleave(width: usize, height: usize, bands: usize, pixels: &[u8]) -> ImageStack {
    ImageStack::from_fn(width, height, bands, |b, r, c| {
        pixels[(r * width + c) * bands + b] as f64
    })
}

fn decode_png(bytes: &[u8]) -> Result<ImageStack> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let (channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette PNG".into()))
        }
    };
    let buf = &buf[..info.buffer_size()];
    Ok(ImageStack::from_fn(width, height, keep, |b, r, c| {
        buf[r * info.line_size + c * channels + b] as f64
    }))
}

fn encode_png(img: &ImageStack) -> Result<Vec<u8>> {
    let color = match img.bands() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        bands => {
            return Err(Error::BandMismatch {
                format: "PNG",
                bands,
            })
        }
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&interleave_u8(img))
            .map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn pnm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated("PNM header ended early".into()));
    }
    Ok(&bytes[start..*pos])
}

fn pnm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = pnm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Header(format!("bad PNM number {:?}", String::from_utf8_lossy(tok))))
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageStack> {
    let mut pos = 0;
    let bands = match pnm_token(bytes, &mut pos)? {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNM magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = pnm_number(bytes, &mut pos)?;
    let height = pnm_number(bytes, &mut pos)?;
    let maxval = pnm_number(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PNM maxval {maxval} (only 8-bit supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Header("zero PNM dimension".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * bands;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < need {
        return Err(Error::Truncated(format!(
            "PNM raster has {} of {need} bytes",
            payload.len()
        )));
    }
    Ok(deinterleave(width, height, bands, &payload[..need]))
}

fn encode_pnm(img: &ImageStack, bands: usize, magic: &[u8]) -> Result<Vec<u8>> {
    if img.bands() != bands {
        return Err(Error::BandMismatch {
            format: if bands == 1 { "PGM" } else { "PPM" },
            bands: img.bands(),
        });
    }
    let mut out = Vec::with_capacity(img.data().len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(format!("\n{} {}\n255\n", img.width(), img.height()).as_bytes());
    out.extend_from_slice(&interleave_u8(img));
    Ok(out)
}

fn decode_mbs(bytes: &[u8]) -> Result<ImageStack> {
    if bytes.len() < MBS_HEADER_LEN {
        return Err(Error::Truncated(format!(
            "MBS header needs {MBS_HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MBS_MAGIC {
        return Err(Error::UnsupportedFormat("missing MBS1 magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (width, height, bands) = (word(0), word(1), word(2));
    if width == 0 || height == 0 || bands == 0 {
        return Err(Error::Header(format!(
            "zero MBS dimension {width}x{height}x{bands}"
        )));
    }
    let payload = &bytes[MBS_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(bands))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Header("MBS dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ImageStack::new(width, height, bands, data)
}

fn encode_mbs(img: &ImageStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(MBS_HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(MBS_MAGIC);
    for dim in [img.width(), img.height(), img.bands()] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn load_band_dir(dir: &Path) -> Result<ImageStack> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| Format::from_extension(p) == Some(Format::Pgm))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::UnsupportedFormat(format!(
            "{} holds no PGM bands",
            dir.display()
        )));
    }
    let bands: Vec<ImageStack> = files
        .iter()
        .map(|p| load(p, Some(Format::Pgm)))
        .collect::<Result<_>>()?;
    let (h, w, _) = bands[0].shape();
    if let Some(bad) = bands.iter().position(|b| b.shape() != (h, w, 1)) {
        return Err(Error::ShapeMismatch(format!(
            "band file {} differs from {}x{}",
            files[bad].display(),
            h,
            w
        )));
    }
    let data = bands.into_iter().flat_map(ImageStack::into_data).collect();
    ImageStack::new(w, h, files.len(), data)
}

fn save_band_dir(img: &ImageStack, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digits = img.bands().to_string().len().max(3);
    for b in 0..img.bands() {
        let band = ImageStack::new(img.width(), img.height(), 1, img.band(b).to_vec())?;
        let path = dir.join(format!("band_{b:0digits$}.pgm"));
        let mut file = BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        file.write_all(&encode_pnm(&band, 1, b"P5")?)
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Adds i.i.d. `N(0, σ_b²)` noise to every sample of band `b`.
///
/// Draws come from ChaCha20 seeded with `seed_from_u64(seed)` through the
/// ziggurat `StandardNormal` sampler, one draw per sample in storage order
/// (band-major, then row-major) whatever the σ values, so each band's noise
/// field depends only on the seed. The result is not clamped.
pub fn add_awgn(img: &ImageStack, noise: &NoiseProfile, seed: u64) -> Result<ImageStack> {
    if noise.bands() != img.bands() {
        return Err(Error::ShapeMismatch(format!(
            "{} noise levels for {} bands",
            noise.bands(),
            img.bands()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let plane = img.width() * img.height();
    for (i, v) in out.data.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        *v += noise.sigmas()[i / plane] * z;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_pixels_decode() {
        let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 85, 170, 255]);
        let img = decode(&bytes, Format::Pgm).unwrap();
        assert_eq!(img.shape(), (2, 2, 1));
        assert_eq!(img.data(), &[0.0, 85.0, 170.0, 255.0]);
    }

    #[test]
    fn ppm_is_interleaved_on_disk() {
        let img = ImageStack::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode(&img, Format::Ppm).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[1, 2, 3]);
        assert_eq!(decode(&bytes, Format::Ppm).unwrap(), img);
    }

    #[test]
    fn save_clamps_and_rounds() {
        let img = ImageStack::new(3, 1, 1, vec![300.0, -5.0, 127.6]).unwrap();
        let back = decode(&encode(&img, Format::Pgm).unwrap(), Format::Pgm).unwrap();
        assert_eq!(back.data(), &[255.0, 0.0, 128.0]);
        let back = decode(&encode(&img, Format::Png).unwrap(), Format::Png).unwrap();
        assert_eq!(back.data(), &[255.0, 0.0, 128.0]);
    }

    #[test]
    fn mbs_layout_is_bit_exact() {
        let img = ImageStack::new(2, 1, 2, vec![1.0, 2.0, 3.0, -4.5]).unwrap();
        let bytes = encode(&img, Format::Mbs).unwrap();
        assert_eq!(&bytes[..4], b"MBS1");
        assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-4.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 16 + 16);
    }

    #[test]
    fn truncated_mbs_is_size_mismatch() {
        let img = ImageStack::zeros(4, 4, 5);
        let mut bytes = encode(&img, Format::Mbs).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            decode(&bytes, Format::Mbs),
            Err(Error::SizeMismatch { expected: 320, found: 317 })
        ));
        assert!(matches!(decode(&bytes[..10], Format::Mbs), Err(Error::Truncated(_))));
    }

    #[test]
    fn truncated_pnm_and_bad_magic_are_distinct() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0; 5]);
        assert!(matches!(decode(&bytes, Format::Ppm), Err(Error::Truncated(_))));
        assert!(matches!(
            decode(b"P2\n1 1\n255\n0", Format::Pgm),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode(b"garbage", Format::Png), Err(Error::Png(_))));
    }

    #[test]
    fn band_count_checked_on_write() {
        let img = ImageStack::zeros(2, 2, 4);
        assert!(matches!(
            encode(&img, Format::Png),
            Err(Error::BandMismatch { bands: 4, .. })
        ));
        assert!(encode(&img, Format::Pgm).is_err());
        assert!(encode(&ImageStack::zeros(2, 2, 1), Format::Ppm).is_err());
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let img = ImageStack::from_fn(5, 4, 3, |b, r, c| (b * 7 + r * 3 + c) as f64);
        let noise = NoiseProfile::new(vec![0.0; 3]).unwrap();
        assert_eq!(add_awgn(&img, &noise, 11).unwrap(), img);
    }

    #[test]
    fn noise_is_seeded() {
        let img = ImageStack::zeros(16, 16, 2);
        let noise = NoiseProfile::new(vec![10.0, 20.0]).unwrap();
        let a = add_awgn(&img, &noise, 7).unwrap();
        assert_eq!(a, add_awgn(&img, &noise, 7).unwrap());
        assert_ne!(a, add_awgn(&img, &noise, 8).unwrap());
        assert!(add_awgn(&img, &NoiseProfile::new(vec![1.0]).unwrap(), 7).is_err());
    }

    #[test]
    fn noise_std_matches_sigma() {
        let img = ImageStack::zeros(256, 256, 1);
        let noise = NoiseProfile::new(vec![25.0]).unwrap();
        let noisy = add_awgn(&img, &noise, 2024).unwrap();
        let n = noisy.data().len() as f64;
        let mean = noisy.data().iter().sum::<f64>() / n;
        let var = noisy.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((24.0..=26.0).contains(&std), "std {std}");
    }
}
