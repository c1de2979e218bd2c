//! Procedural scene images and the three evaluation query sets.
//!
//! A scene is a two-colour gradient with a handful of flat shapes on top,
//! which gives pHash the kind of coarse luminance layout that photographs and
//! generated images have. Look-alike negatives are independent renders that
//! reuse the layout of a registered scene with fresh details, standing in for
//! unregistered images that happen to resemble registered ones.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transform::{apply_all, TransformSpec};
use super::HarnessError;
use crate::hashing::{compute_phash, PerceptualHash};

#[derive(Clone, Copy, Debug, PartialEq)]
enum ShapeKind {
    Ellipse,
    Rect,
    Triangle,
}

#[derive(Clone, Debug, PartialEq)]
struct Shape {
    kind: ShapeKind,
    // normalized bounding box
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
    color: [u8; 3],
}

/// Parameters of one procedural image.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    angle: f32,
    from: [u8; 3],
    to: [u8; 3],
    shapes: Vec<Shape>,
}

fn random_color(rng: &mut impl Rng) -> [u8; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn random_shape(rng: &mut impl Rng) -> Shape {
    let kind = match rng.random_range(0..3) {
        0 => ShapeKind::Ellipse,
        1 => ShapeKind::Rect,
        _ => ShapeKind::Triangle,
    };
    let x0 = rng.random_range(-0.2..0.9);
    let y0 = rng.random_range(-0.2..0.9);
    Shape {
        kind,
        x0,
        y0,
        x1: x0 + rng.random_range(0.1..0.6),
        y1: y0 + rng.random_range(0.1..0.6),
        color: random_color(rng),
    }
}

impl Scene {
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(2..=6);
        Self {
            angle: rng.random_range(0.0..std::f32::consts::TAU),
            from: random_color(rng),
            to: random_color(rng),
            shapes: (0..n).map(|_| random_shape(rng)).collect(),
        }
    }

    /// Same background and dominant shape, everything else redrawn.
    pub fn lookalike(&self, rng: &mut impl Rng) -> Self {
        let mut out = self.clone();
        let jitter = |c: u8, rng: &mut dyn rand::RngCore| {
            (i32::from(c) + rng.random_range(-24..=24)).clamp(0, 255) as u8
        };
        out.from = self.from.map(|c| jitter(c, rng));
        out.to = self.to.map(|c| jitter(c, rng));
        out.angle += rng.random_range(-0.3..0.3);
        let keep = self
            .shapes
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| area(a).total_cmp(&area(b)))
            .map(|(i, _)| i);
        for (i, s) in out.shapes.iter_mut().enumerate() {
            if Some(i) == keep {
                s.color = s.color.map(|c| jitter(c, rng));
            } else {
                *s = random_shape(rng);
            }
        }
        out
    }

    pub fn render(&self, width: u32, height: u32) -> RgbImage {
        let (w, h) = (width as f32, height as f32);
        let (sin, cos) = self.angle.sin_cos();
        // project the corners to normalize the gradient parameter
        let proj = |x: f32, y: f32| x * cos + y * sin;
        let corners = [proj(0.0, 0.0), proj(w, 0.0), proj(0.0, h), proj(w, h)];
        let lo = corners.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = corners.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = (hi - lo).max(1e-6);

        RgbImage::from_fn(width, height, |x, y| {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let mut color = {
                let t = (proj(px, py) - lo) / span;
                let mix = |a: u8, b: u8| (f32::from(a) * (1.0 - t) + f32::from(b) * t).round() as u8;
                [
                    mix(self.from[0], self.to[0]),
                    mix(self.from[1], self.to[1]),
                    mix(self.from[2], self.to[2]),
                ]
            };
            let (u, v) = (px / w, py / h);
            for s in &self.shapes {
                if s.contains(u, v) {
                    color = s.color;
                }
            }
            Rgb(color)
        })
    }
}

fn area(s: &Shape) -> f32 {
    (s.x1.min(1.0) - s.x0.max(0.0)).max(0.0) * (s.y1.min(1.0) - s.y0.max(0.0)).max(0.0)
}

impl Shape {
    fn contains(&self, u: f32, v: f32) -> bool {
        if u < self.x0 || u > self.x1 || v < self.y0 || v > self.y1 {
            return false;
        }
        match self.kind {
            ShapeKind::Rect => true,
            ShapeKind::Ellipse => {
                let cx = (self.x0 + self.x1) / 2.0;
                let cy = (self.y0 + self.y1) / 2.0;
                let rx = (self.x1 - self.x0) / 2.0;
                let ry = (self.y1 - self.y0) / 2.0;
                ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2) <= 1.0
            }
            ShapeKind::Triangle => {
                // apex at the top centre, base along the bottom edge
                let t = (v - self.y0) / (self.y1 - self.y0);
                let half = t * (self.x1 - self.x0) / 2.0;
                let cx = (self.x0 + self.x1) / 2.0;
                (u - cx).abs() <= half
            }
        }
    }
}

/// Knobs for [`build_corpus`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub originals: usize,
    pub edits_per_original: usize,
    pub negatives: usize,
    /// Share of negatives that are look-alikes of a registered scene.
    pub lookalike_fraction: f64,
    pub max_transforms: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            originals: 120,
            edits_per_original: 3,
            negatives: 120,
            lookalike_fraction: 0.5,
            max_transforms: 3,
            width: 128,
            height: 128,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EditedImage {
    /// Index into [`Corpus::originals`].
    pub source: usize,
    pub transforms: Vec<TransformSpec>,
    pub image: RgbImage,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub originals: Vec<RgbImage>,
    pub edited: Vec<EditedImage>,
    pub negatives: Vec<RgbImage>,
}

/// Hashes of a corpus, ready for [`run_sweep`](super::run_sweep).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySets {
    pub originals: Vec<PerceptualHash>,
    pub edited: Vec<PerceptualHash>,
    pub negatives: Vec<PerceptualHash>,
}

/// Derive an independent stream for one purpose from the corpus seed.
fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Build originals, edited variants (1 to `max_transforms` random moderate
/// edits each) and negatives, all determined by `cfg.seed`.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus, HarnessError> {
    if cfg.width == 0 || cfg.height == 0 || cfg.max_transforms == 0 {
        return Err(HarnessError::Config(
            "corpus dimensions and transform count must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.lookalike_fraction) {
        return Err(HarnessError::Config("lookalike fraction outside [0, 1]".into()));
    }
    let mut scene_rng = stream(cfg.seed, 1);
    let scenes: Vec<Scene> = (0..cfg.originals).map(|_| Scene::random(&mut scene_rng)).collect();
    let originals: Vec<RgbImage> = scenes.iter().map(|s| s.render(cfg.width, cfg.height)).collect();

    let mut edit_rng = stream(cfg.seed, 2);
    let mut edited = Vec::with_capacity(cfg.originals * cfg.edits_per_original);
    for (source, img) in originals.iter().enumerate() {
        for _ in 0..cfg.edits_per_original {
            let n = edit_rng.random_range(1..=cfg.max_transforms);
            let transforms: Vec<TransformSpec> =
                (0..n).map(|_| TransformSpec::random_moderate(&mut edit_rng)).collect();
            edited.push(EditedImage {
                source,
                image: apply_all(img, &transforms)?,
                transforms,
            });
        }
    }

    let mut neg_rng = stream(cfg.seed, 3);
    let lookalikes = if scenes.is_empty() {
        0
    } else {
        (cfg.negatives as f64 * cfg.lookalike_fraction).round() as usize
    };
    let negatives = (0..cfg.negatives)
        .map(|i| {
            let scene = if i < lookalikes {
                scenes[neg_rng.random_range(0..scenes.len())].lookalike(&mut neg_rng)
            } else {
                Scene::random(&mut neg_rng)
            };
            scene.render(cfg.width, cfg.height)
        })
        .collect();

    Ok(Corpus {
        originals,
        edited,
        negatives,
    })
}

fn hash_rgb(img: &RgbImage) -> PerceptualHash {
    compute_phash(&image::DynamicImage::ImageRgb8(img.clone())).expect("rendered images are valid")
}

impl Corpus {
    pub fn hashes(&self) -> QuerySets {
        QuerySets {
            originals: self.originals.iter().map(hash_rgb).collect(),
            edited: self.edited.iter().map(|e| hash_rgb(&e.image)).collect(),
            negatives: self.negatives.iter().map(hash_rgb).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            originals: 6,
            edits_per_original: 2,
            negatives: 4,
            width: 48,
            height: 40,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn corpus_sizes_follow_config() {
        let c = build_corpus(&small()).unwrap();
        assert_eq!(c.originals.len(), 6);
        assert_eq!(c.edited.len(), 12);
        assert_eq!(c.negatives.len(), 4);
        for e in &c.edited {
            assert!((1..=3).contains(&e.transforms.len()));
            assert_eq!(e.image.dimensions(), (48, 40));
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let a = build_corpus(&small()).unwrap();
        let b = build_corpus(&small()).unwrap();
        assert_eq!(a.originals, b.originals);
        assert_eq!(a.negatives, b.negatives);
        assert_eq!(a.hashes(), b.hashes());
        let other = build_corpus(&CorpusConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.originals, other.originals);
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(build_corpus(&CorpusConfig { width: 0, ..small() }).is_err());
        assert!(build_corpus(&CorpusConfig {
            lookalike_fraction: 1.5,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn shapes_cover_their_interior() {
        let s = Shape {
            kind: ShapeKind::Ellipse,
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
            color: [0; 3],
        };
        assert!(s.contains(0.5, 0.5));
        assert!(!s.contains(0.02, 0.02));
        let t = Shape {
            kind: ShapeKind::Triangle,
            ..s.clone()
        };
        assert!(t.contains(0.5, 0.9));
        assert!(!t.contains(0.1, 0.1));
    }
}
