//! Image edits used to build the edited query set.
//!
//! Every transform takes a single `magnitude` whose meaning depends on the
//! kind (see [`TransformKind::range`]). A magnitude of zero is the identity
//! for every kind except `TextOverlay`, where it is the glyph scale and must
//! be at least 1.

use std::fmt;
use std::str::FromStr;

use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    /// Gaussian blur; magnitude is sigma in pixels.
    Blur,
    /// 3x3 unsharp kernel; magnitude is the sharpening amount.
    Sharpen,
    /// 3x3 edge-boost kernel; magnitude is the boost amount.
    EdgeEnhance,
    /// Additive offset in intensity levels.
    Brightness,
    /// Contrast change in percent around mid-grey.
    Contrast,
    /// Hue rotation in degrees.
    ColorShift,
    /// Seeded caption; magnitude is the glyph scale.
    TextOverlay,
    /// Seeded Gaussian noise; magnitude is sigma in intensity levels.
    Noise,
}

impl TransformKind {
    pub const ALL: [TransformKind; 8] = [
        TransformKind::Blur,
        TransformKind::Sharpen,
        TransformKind::EdgeEnhance,
        TransformKind::Brightness,
        TransformKind::Contrast,
        TransformKind::ColorShift,
        TransformKind::TextOverlay,
        TransformKind::Noise,
    ];

    /// Accepted magnitudes, inclusive.
    pub fn range(self) -> (f32, f32) {
        match self {
            TransformKind::Blur => (0.0, 20.0),
            TransformKind::Sharpen => (0.0, 4.0),
            TransformKind::EdgeEnhance => (0.0, 2.0),
            TransformKind::Brightness => (-255.0, 255.0),
            TransformKind::Contrast => (-100.0, 200.0),
            TransformKind::ColorShift => (-180.0, 180.0),
            TransformKind::TextOverlay => (1.0, 16.0),
            TransformKind::Noise => (0.0, 128.0),
        }
    }

    /// Magnitudes used when generating the edited set: visible but not
    /// destructive edits.
    pub fn moderate_range(self) -> (f32, f32) {
        match self {
            TransformKind::Blur => (0.8, 2.0),
            TransformKind::Sharpen => (0.5, 1.5),
            TransformKind::EdgeEnhance => (0.3, 1.0),
            TransformKind::Brightness => (-40.0, 40.0),
            TransformKind::Contrast => (-25.0, 40.0),
            TransformKind::ColorShift => (-60.0, 60.0),
            TransformKind::TextOverlay => (1.0, 3.0),
            TransformKind::Noise => (4.0, 16.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Blur => "blur",
            TransformKind::Sharpen => "sharpen",
            TransformKind::EdgeEnhance => "edge-enhance",
            TransformKind::Brightness => "brightness",
            TransformKind::Contrast => "contrast",
            TransformKind::ColorShift => "color-shift",
            TransformKind::TextOverlay => "text-overlay",
            TransformKind::Noise => "noise",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Config(format!("unknown transform {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub magnitude: f32,
    /// Used by the stochastic kinds (noise, text placement); ignored otherwise.
    #[serde(default)]
    pub seed: u64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, magnitude: f32, seed: u64) -> Self {
        Self {
            kind,
            magnitude,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let (lo, hi) = self.kind.range();
        if !self.magnitude.is_finite() || self.magnitude < lo || self.magnitude > hi {
            return Err(HarnessError::Config(format!(
                "{} magnitude {} outside [{lo}, {hi}]",
                self.kind, self.magnitude
            )));
        }
        Ok(())
    }

    /// A random moderate edit.
    pub fn random_moderate(rng: &mut impl Rng) -> Self {
        let kind = TransformKind::ALL[rng.random_range(0..TransformKind::ALL.len())];
        let (lo, hi) = kind.moderate_range();
        let magnitude = rng.random_range(lo..=hi);
        let magnitude = if kind == TransformKind::TextOverlay {
            magnitude.round()
        } else {
            magnitude
        };
        Self::new(kind, magnitude, rng.random())
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:.2})", self.kind, self.magnitude)
    }
}

/// Apply one edit. Output dimensions always match the input.
pub fn apply_transform(image: &RgbImage, spec: &TransformSpec) -> Result<RgbImage, HarnessError> {
    spec.validate()?;
    let m = spec.magnitude;
    if m == 0.0 {
        return Ok(image.clone());
    }
    Ok(match spec.kind {
        TransformKind::Blur => imageops::blur(image, m),
        TransformKind::Sharpen => convolve3x3(
            image,
            [0.0, -m, 0.0, -m, 1.0 + 4.0 * m, -m, 0.0, -m, 0.0],
        ),
        TransformKind::EdgeEnhance => convolve3x3(
            image,
            [-m, -m, -m, -m, 1.0 + 8.0 * m, -m, -m, -m, -m],
        ),
        TransformKind::Brightness => map_channels(image, |v| v + m),
        TransformKind::Contrast => {
            let gain = 1.0 + m / 100.0;
            map_channels(image, |v| (v - 127.5) * gain + 127.5)
        }
        TransformKind::ColorShift => hue_rotate(image, m),
        TransformKind::TextOverlay => text_overlay(image, m as u32, spec.seed),
        TransformKind::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let normal = Normal::new(0.0f32, m).expect("sigma validated");
            let mut out = image.clone();
            for px in out.pixels_mut() {
                for c in px.0.iter_mut() {
                    *c = to_u8(f32::from(*c) + normal.sample(&mut rng));
                }
            }
            out
        }
    })
}

/// Apply edits left to right.
pub fn apply_all(image: &RgbImage, specs: &[TransformSpec]) -> Result<RgbImage, HarnessError> {
    let mut out = image.clone();
    for s in specs {
        out = apply_transform(&out, s)?;
    }
    Ok(out)
}

fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn map_channels(image: &RgbImage, f: impl Fn(f32) -> f32) -> RgbImage {
    let mut out = image.clone();
    for px in out.pixels_mut() {
        for c in px.0.iter_mut() {
            *c = to_u8(f(f32::from(*c)));
        }
    }
    out
}

// imageops::filter3x3 leaves the border untouched, so clamp edges here
fn convolve3x3(image: &RgbImage, k: [f32; 9]) -> RgbImage {
    let (w, h) = image.dimensions();
    let mut out = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (i, kv) in k.iter().enumerate() {
                let sx = (x as i64 + (i % 3) as i64 - 1).clamp(0, w as i64 - 1) as u32;
                let sy = (y as i64 + (i / 3) as i64 - 1).clamp(0, h as i64 - 1) as u32;
                let p = image.get_pixel(sx, sy);
                for (a, v) in acc.iter_mut().zip(p.0) {
                    *a += kv * f32::from(v);
                }
            }
            out.put_pixel(x, y, Rgb(acc.map(to_u8)));
        }
    }
    out
}

/// Luma-preserving hue rotation.
fn hue_rotate(image: &RgbImage, degrees: f32) -> RgbImage {
    let (s, c) = degrees.to_radians().sin_cos();
    let m = [
        [
            0.213 + c * 0.787 - s * 0.213,
            0.715 - c * 0.715 - s * 0.715,
            0.072 - c * 0.072 + s * 0.928,
        ],
        [
            0.213 - c * 0.213 + s * 0.143,
            0.715 + c * 0.285 + s * 0.140,
            0.072 - c * 0.072 - s * 0.283,
        ],
        [
            0.213 - c * 0.213 - s * 0.787,
            0.715 - c * 0.715 + s * 0.715,
            0.072 + c * 0.928 + s * 0.072,
        ],
    ];
    let mut out = image.clone();
    for px in out.pixels_mut() {
        let [r, g, b] = px.0.map(f32::from);
        px.0 = m.map(|row| to_u8(row[0] * r + row[1] * g + row[2] * b));
    }
    out
}

const CAPTIONS: [&str; 8] = [
    "SAMPLE", "AI ART", "@USER42", "2024", "NEW POST", "DRAFT", "REPOST", "WOW",
];

fn text_overlay(image: &RgbImage, scale: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = CAPTIONS[rng.random_range(0..CAPTIONS.len())];
    let color = if rng.random_bool(0.5) {
        Rgb([255, 255, 255])
    } else {
        Rgb([0, 0, 0])
    };
    let (w, h) = image.dimensions();
    let advance = (font::WIDTH + 1) * scale;
    let text_w = advance * text.len() as u32;
    let text_h = font::HEIGHT * scale;
    let x0 = rng.random_range(0..=w.saturating_sub(text_w));
    let y0 = rng.random_range(0..=h.saturating_sub(text_h));

    let mut out = image.clone();
    for (i, ch) in text.chars().enumerate() {
        let rows = font::glyph(ch);
        let gx = x0 + i as u32 * advance;
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..font::WIDTH {
                if bits & (1 << (font::WIDTH - 1 - rx)) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let x = gx + rx * scale + dx;
                        let y = y0 + ry as u32 * scale + dy;
                        if x < w && y < h {
                            out.put_pixel(x, y, color);
                        }
                    }
                }
            }
        }
    }
    out
}

/// 3x5 bitmap glyphs for the caption alphabet.
mod font {
    pub const WIDTH: u32 = 3;
    pub const HEIGHT: u32 = 5;

    pub fn glyph(c: char) -> [u8; 5] {
        match c.to_ascii_uppercase() {
            'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
            'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
            'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
            'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
            'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
            'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
            'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
            'N' => [0b101, 0b111, 0b111, 0b111, 0b101],
            'O' => [0b111, 0b101, 0b101, 0b101, 0b111],
            'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
            'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
            'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
            'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
            'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
            'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
            '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
            '2' => [0b110, 0b001, 0b010, 0b100, 0b111],
            '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
            '@' => [0b111, 0b101, 0b111, 0b100, 0b111],
            _ => [0; 5],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RgbImage {
        RgbImage::from_fn(40, 30, |x, y| Rgb([(x * 6) as u8, (y * 8) as u8, ((x + y) * 3) as u8]))
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let img = sample();
        for kind in TransformKind::ALL {
            if kind == TransformKind::TextOverlay {
                continue;
            }
            let out = apply_transform(&img, &TransformSpec::new(kind, 0.0, 9)).unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn dimensions_are_preserved() {
        let img = sample();
        for kind in TransformKind::ALL {
            let (lo, hi) = kind.range();
            let spec = TransformSpec::new(kind, (lo + hi) / 2.0, 3);
            let out = apply_transform(&img, &spec).unwrap();
            assert_eq!(out.dimensions(), img.dimensions(), "{kind}");
        }
    }

    #[test]
    fn seeded_kinds_are_deterministic() {
        let img = sample();
        for kind in [TransformKind::Noise, TransformKind::TextOverlay] {
            let spec = TransformSpec::new(kind, 2.0, 1234);
            assert_eq!(
                apply_transform(&img, &spec).unwrap(),
                apply_transform(&img, &spec).unwrap()
            );
        }
        let a = apply_transform(&img, &TransformSpec::new(TransformKind::Noise, 10.0, 1)).unwrap();
        let b = apply_transform(&img, &TransformSpec::new(TransformKind::Noise, 10.0, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn out_of_range_magnitude_is_rejected() {
        let img = sample();
        for (kind, m) in [
            (TransformKind::Blur, -1.0),
            (TransformKind::Noise, 500.0),
            (TransformKind::TextOverlay, 0.0),
            (TransformKind::Brightness, f32::NAN),
        ] {
            assert!(matches!(
                apply_transform(&img, &TransformSpec::new(kind, m, 0)),
                Err(HarnessError::Config(_))
            ));
        }
    }

    #[test]
    fn brightness_and_contrast_arithmetic() {
        let img = RgbImage::from_pixel(2, 2, Rgb([100, 200, 250]));
        let b = apply_transform(&img, &TransformSpec::new(TransformKind::Brightness, 10.0, 0)).unwrap();
        assert_eq!(b.get_pixel(0, 0).0, [110, 210, 255]);
        let c = apply_transform(&img, &TransformSpec::new(TransformKind::Contrast, 100.0, 0)).unwrap();
        // (v - 127.5) * 2 + 127.5
        assert_eq!(c.get_pixel(1, 1).0, [73, 255, 255]);
    }

    #[test]
    fn sharpen_leaves_flat_regions_alone() {
        let img = RgbImage::from_pixel(8, 8, Rgb([90, 90, 90]));
        for kind in [TransformKind::Sharpen, TransformKind::EdgeEnhance] {
            let out = apply_transform(&img, &TransformSpec::new(kind, 1.0, 0)).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn text_overlay_changes_pixels_within_bounds() {
        let img = RgbImage::from_pixel(64, 32, Rgb([128, 128, 128]));
        let out = apply_transform(&img, &TransformSpec::new(TransformKind::TextOverlay, 2.0, 5)).unwrap();
        assert_ne!(out, img);
        // huge scale on a small image: clipped, never panics
        let out = apply_transform(&img, &TransformSpec::new(TransformKind::TextOverlay, 16.0, 5)).unwrap();
        assert_eq!(out.dimensions(), (64, 32));
    }

    #[test]
    fn hue_rotation_keeps_grey() {
        let img = RgbImage::from_pixel(3, 3, Rgb([77, 77, 77]));
        let out = apply_transform(&img, &TransformSpec::new(TransformKind::ColorShift, 90.0, 0)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in TransformKind::ALL {
            assert_eq!(kind.as_str().parse::<TransformKind>().unwrap(), kind);
        }
        assert!("sepia".parse::<TransformKind>().is_err());
    }
}
