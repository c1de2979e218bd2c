//! 64-bit DCT perceptual hashes.
//!
//! The pipeline is fixed so that hashes are reproducible across machines:
//!
//! 1. convert to 8-bit luminance with integer BT.601 weights,
//! 2. resample to 32×32 with a triangle (bilinear) filter whose support widens
//!    with the downscale factor,
//! 3. take the 8×8 low-frequency corner of the 2D DCT-II,
//! 4. set bit `i` (`value >> i & 1`) when coefficient `i` of that block, in
//!    row-major order, is strictly greater than the median of all 64
//!    coefficients (DC included).

mod dct;
mod resample;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::DynamicImage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use dct::low_frequency_block;
pub use resample::resize_bilinear;

/// Number of bits in a hash.
pub const HASH_BITS: u32 = 64;

/// Side of the resampled luminance grid fed to the DCT.
pub const RESAMPLE_SIZE: usize = 32;

/// Side of the retained low-frequency coefficient block.
pub const BLOCK_SIZE: usize = 8;

#[derive(Debug, Error)]
pub enum HashError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid hash hex {0:?}: expected 16 hex digits")]
    InvalidHex(String),
    #[error("distance {0} outside [0, 64]")]
    DistanceOutOfRange(u32),
}

/// A 64-bit perceptual fingerprint.
///
/// Renders as 16 uppercase hex digits, most-significant nibble first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub const fn new(bits: u64) -> Self {
        Self(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn distance(self, other: Self) -> u32 {
        hamming_distance(self, other)
    }

    pub fn to_hex(self) -> String {
        format!("{:016X}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(HashError::InvalidHex(s.to_string()));
        }
        u64::from_str_radix(s, 16)
            .map(Self)
            .map_err(|_| HashError::InvalidHex(s.to_string()))
    }

    /// Hex digit at 1-indexed position `pos` (1 = most significant).
    pub fn hex_digit(self, pos: u32) -> u8 {
        debug_assert!((1..=16).contains(&pos));
        ((self.0 >> (4 * (16 - pos))) & 0xF) as u8
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016X}", self.0)
    }
}

impl fmt::Debug for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PerceptualHash({:016X})", self.0)
    }
}

impl FromStr for PerceptualHash {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Number of differing bit positions.
#[inline]
pub fn hamming_distance(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// `(1 - d/64) * 100`, the normalized similarity reported next to a match.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimilarityScore {
    distance: u32,
}

impl SimilarityScore {
    pub fn distance(self) -> u32 {
        self.distance
    }

    /// Unrounded percentage.
    pub fn percent(self) -> f64 {
        (1.0 - f64::from(self.distance) / f64::from(HASH_BITS)) * 100.0
    }

    /// Percentage rounded half away from zero to two decimals.
    pub fn rounded(self) -> f64 {
        (self.percent() * 100.0).round() / 100.0
    }
}

impl fmt::Display for SimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.rounded())
    }
}

impl Serialize for SimilarityScore {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.rounded())
    }
}

impl<'de> Deserialize<'de> for SimilarityScore {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let percent = f64::deserialize(deserializer)?;
        let d = ((100.0 - percent) * f64::from(HASH_BITS) / 100.0).round();
        if !(0.0..=64.0).contains(&d) {
            return Err(serde::de::Error::custom("similarity outside [0, 100]"));
        }
        let score = SimilarityScore { distance: d as u32 };
        if (score.rounded() - percent).abs() > 0.005 {
            return Err(serde::de::Error::custom(format!(
                "{percent} is not a similarity reachable from an integer distance"
            )));
        }
        Ok(score)
    }
}

pub fn similarity_score(distance: u32) -> Result<SimilarityScore, HashError> {
    if distance > HASH_BITS {
        return Err(HashError::DistanceOutOfRange(distance));
    }
    Ok(SimilarityScore { distance })
}

/// 8-bit luminance raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, HashError> {
        if width == 0 || height == 0 {
            return Err(HashError::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(HashError::InvalidImage(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// Luminance of a decoded image; alpha is discarded.
    pub fn from_image(image: &DynamicImage) -> Result<Self, HashError> {
        let rgb = image.to_rgb8();
        let (w, h) = rgb.dimensions();
        let samples = rgb.pixels().map(|p| luma_bt601(p.0)).collect();
        Self::new(w as usize, h as usize, samples)
    }
}

/// Integer BT.601: `(299 R + 587 G + 114 B + 500) / 1000`.
#[inline]
pub fn luma_bt601([r, g, b]: [u8; 3]) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}

pub fn phash_gray(image: &GrayImage) -> PerceptualHash {
    let grid = resize_bilinear(image, RESAMPLE_SIZE, RESAMPLE_SIZE);
    let block = low_frequency_block(&grid);
    binarize(&block)
}

pub fn compute_phash(image: &DynamicImage) -> Result<PerceptualHash, HashError> {
    Ok(phash_gray(&GrayImage::from_image(image)?))
}

/// Decode PNG or JPEG bytes and hash them.
pub fn phash_bytes(bytes: &[u8]) -> Result<PerceptualHash, HashError> {
    let img = image::load_from_memory(bytes).map_err(|e| HashError::InvalidImage(e.to_string()))?;
    compute_phash(&img)
}

pub fn phash_file(path: impl AsRef<Path>) -> Result<PerceptualHash, HashError> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| HashError::InvalidImage(format!("{}: {e}", path.display())))?;
    compute_phash(&img)
}

fn binarize(block: &[f64; BLOCK_SIZE * BLOCK_SIZE]) -> PerceptualHash {
    let mut sorted = *block;
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = (sorted[mid - 1] + sorted[mid]) / 2.0;
    let bits = block
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > median)
        .fold(0u64, |acc, (i, _)| acc | (1u64 << i));
    PerceptualHash(bits)
}
