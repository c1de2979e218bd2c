//! 16-bit bucket keys and neighbor-bucket enumeration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hashing::PerceptualHash;

/// Size of the prefix key space.
pub const BUCKET_COUNT: usize = 1 << 16;

/// Largest supported neighbor flip tolerance.
pub const MAX_FLIP_TOLERANCE: u32 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefixError {
    #[error("invalid prefix {0:?}: expected 4 hex digits")]
    InvalidHex(String),
    #[error("unknown prefix scheme {0:?} (expected continuous or discontinuous)")]
    UnknownScheme(String),
    #[error("flip tolerance {0} outside [0, 4]")]
    ToleranceOutOfRange(u32),
}

/// Which four hex digits of the 16-digit rendering form the bucket key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrefixScheme {
    /// Digits 1–4.
    Continuous,
    /// Digits 4, 8, 12 and 16 (1-indexed, most significant first).
    #[default]
    Discontinuous,
}

impl PrefixScheme {
    pub const ALL: [PrefixScheme; 2] = [PrefixScheme::Continuous, PrefixScheme::Discontinuous];

    pub fn as_str(self) -> &'static str {
        match self {
            PrefixScheme::Continuous => "continuous",
            PrefixScheme::Discontinuous => "discontinuous",
        }
    }
}

impl fmt::Display for PrefixScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrefixScheme {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "continuous" => Ok(PrefixScheme::Continuous),
            "discontinuous" => Ok(PrefixScheme::Discontinuous),
            _ => Err(PrefixError::UnknownScheme(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PrefixKey(pub u16);

impl PrefixKey {
    pub fn value(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    /// The four nibbles, most significant first.
    pub fn nibbles(self) -> [u8; 4] {
        let v = self.0;
        [
            (v >> 12) as u8 & 0xF,
            (v >> 8) as u8 & 0xF,
            (v >> 4) as u8 & 0xF,
            v as u8 & 0xF,
        ]
    }

    pub fn to_hex(self) -> String {
        format!("{:04X}", self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, PrefixError> {
        if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(PrefixError::InvalidHex(s.to_string()));
        }
        u16::from_str_radix(s, 16)
            .map(PrefixKey)
            .map_err(|_| PrefixError::InvalidHex(s.to_string()))
    }

    pub fn distance(self, other: PrefixKey) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for PrefixKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04X}", self.0)
    }
}

impl fmt::Debug for PrefixKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrefixKey({:04X})", self.0)
    }
}

impl FromStr for PrefixKey {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for PrefixKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PrefixKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn extract_prefix(hash: PerceptualHash, scheme: PrefixScheme) -> PrefixKey {
    let v = hash.bits();
    match scheme {
        PrefixScheme::Continuous => PrefixKey((v >> 48) as u16),
        PrefixScheme::Discontinuous => {
            // hex digits 4, 8, 12, 16 are the low nibbles of each 16-bit group
            let d4 = (v >> 48) & 0xF;
            let d8 = (v >> 32) & 0xF;
            let d12 = (v >> 16) & 0xF;
            let d16 = v & 0xF;
            PrefixKey(((d4 << 12) | (d8 << 8) | (d12 << 4) | d16) as u16)
        }
    }
}

/// `sum_{i=0..=t} C(16, i)`.
pub fn neighbor_count(flip_tolerance: u32) -> usize {
    (0..=flip_tolerance.min(16))
        .map(|i| binomial(16, i as u64) as usize)
        .sum()
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Every key within `flip_tolerance` bit flips of `key`: the key itself
/// first, then ascending by (distance, value).
pub fn enumerate_neighbors(
    key: PrefixKey,
    flip_tolerance: u32,
) -> Result<Vec<PrefixKey>, PrefixError> {
    if flip_tolerance > MAX_FLIP_TOLERANCE {
        return Err(PrefixError::ToleranceOutOfRange(flip_tolerance));
    }
    let mut out = Vec::with_capacity(neighbor_count(flip_tolerance));
    out.push(key);
    for d in 1..=flip_tolerance {
        let start = out.len();
        out.extend(masks_with_popcount(d).map(|m| PrefixKey(key.0 ^ m)));
        out[start..].sort_unstable();
    }
    Ok(out)
}

/// All 16-bit masks with exactly `ones` bits set, ascending (Gosper's hack).
fn masks_with_popcount(ones: u32) -> impl Iterator<Item = u16> {
    let first: u32 = (1u32 << ones) - 1;
    std::iter::successors(Some(first), |&m| {
        let c = m & m.wrapping_neg();
        let r = m + c;
        let next = (((r ^ m) >> 2) / c) | r;
        (next < (1 << 16)).then_some(next)
    })
    .map(|m| m as u16)
}
