//! Severity-parameterized image corruptions.
//!
//! Fifteen kinds across the noise, blur, weather and digital families. Each
//! kind has a five-step parameter ladder indexed by severity 1..=5. Stochastic
//! kinds draw from a generator seeded by [`CorruptionSpec::seed`], so a given
//! `(spec, image)` pair always yields the same output.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::seed;

mod cid;

pub use cid::{build_cid_dataset, CidSample, CidSet, Condition, LabeledImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    SpeckleNoise,
    GaussianBlur,
    DefocusBlur,
    MotionBlur,
    ZoomBlur,
    Contrast,
    Brightness,
    Saturate,
    Pixelate,
    Elastic,
    Spatter,
    FogLike,
}

impl Kind {
    pub const ALL: [Kind; 15] = [
        Kind::GaussianNoise,
        Kind::ShotNoise,
        Kind::ImpulseNoise,
        Kind::SpeckleNoise,
        Kind::GaussianBlur,
        Kind::DefocusBlur,
        Kind::MotionBlur,
        Kind::ZoomBlur,
        Kind::Contrast,
        Kind::Brightness,
        Kind::Saturate,
        Kind::Pixelate,
        Kind::Elastic,
        Kind::Spatter,
        Kind::FogLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::GaussianNoise => "gaussian_noise",
            Kind::ShotNoise => "shot_noise",
            Kind::ImpulseNoise => "impulse_noise",
            Kind::SpeckleNoise => "speckle_noise",
            Kind::GaussianBlur => "gaussian_blur",
            Kind::DefocusBlur => "defocus_blur",
            Kind::MotionBlur => "motion_blur",
            Kind::ZoomBlur => "zoom_blur",
            Kind::Contrast => "contrast",
            Kind::Brightness => "brightness",
            Kind::Saturate => "saturate",
            Kind::Pixelate => "pixelate",
            Kind::Elastic => "elastic",
            Kind::Spatter => "spatter",
            Kind::FogLike => "fog_like",
        }
    }

    /// Stable index used when deriving per-image seeds.
    pub fn index(self) -> u64 {
        Kind::ALL.iter().position(|&k| k == self).unwrap() as u64
    }

    /// Whether the output depends on the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Kind::GaussianNoise
                | Kind::ShotNoise
                | Kind::ImpulseNoise
                | Kind::SpeckleNoise
                | Kind::MotionBlur
                | Kind::Elastic
                | Kind::Spatter
                | Kind::FogLike
        )
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown corruption kind {s:?}")))
    }
}

/// One corruption at one severity with its generator seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub kind: Kind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: Kind, severity: u8, seed: u64) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return invalid(format!("severity {severity} outside 1..=5"));
        }
        Ok(Self {
            kind,
            severity,
            seed,
        })
    }

    fn level<T: Copy>(&self, ladder: [T; 5]) -> T {
        ladder[self.severity as usize - 1]
    }
}

/// Noise standard deviation shared by gaussian and speckle noise.
pub const NOISE_SIGMA: [f64; 5] = [0.04, 0.08, 0.12, 0.18, 0.26];
pub const SHOT_RATE: [f64; 5] = [60.0, 25.0, 12.0, 5.0, 3.0];
pub const IMPULSE_PROB: [f64; 5] = [0.01, 0.03, 0.06, 0.1, 0.17];
pub const BLUR_SIGMA: [f64; 5] = [0.4, 0.6, 0.9, 1.3, 1.8];
pub const DEFOCUS_RADIUS: [usize; 5] = [1, 2, 3, 4, 5];
pub const MOTION_LENGTH: [usize; 5] = [3, 5, 7, 9, 11];
pub const ZOOM_MAX: [f64; 5] = [1.04, 1.08, 1.12, 1.16, 1.21];
pub const CONTRAST_FACTOR: [f32; 5] = [0.75, 0.6, 0.45, 0.3, 0.2];
pub const BRIGHTNESS_SHIFT: [f32; 5] = [0.05, 0.1, 0.15, 0.2, 0.3];
pub const SATURATE_FACTOR: [f32; 5] = [1.3, 1.6, 2.0, 2.5, 3.0];
pub const PIXELATE_BLOCK: [usize; 5] = [2, 3, 4, 5, 6];
pub const ELASTIC_ALPHA: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
pub const SPATTER_COVERAGE: [f64; 5] = [0.01, 0.02, 0.04, 0.06, 0.09];
pub const FOG_WEIGHT: [f32; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// Applies `spec` to `img`. The output has the same shape, clamped to `[0, 1]`.
pub fn apply(spec: &CorruptionSpec, img: &Image) -> Result<Image> {
    if !(1..=5).contains(&spec.severity) {
        return invalid(format!("severity {} outside 1..=5", spec.severity));
    }
    let mut rng = seed::rng(spec.seed, &[spec.kind.index()]);
    let rng = &mut rng;
    match spec.kind {
        Kind::GaussianNoise => {
            let normal = Normal::new(0.0, spec.level(NOISE_SIGMA)).unwrap();
            map_pixels(img, |p| p + normal.sample(rng) as f32)
        }
        Kind::ShotNoise => {
            let rate = spec.level(SHOT_RATE);
            map_pixels(img, |p| {
                let mean = rate * p as f64;
                if mean <= 0.0 {
                    0.0
                } else {
                    let n: f64 = Poisson::new(mean).unwrap().sample(rng);
                    (n / rate) as f32
                }
            })
        }
        Kind::ImpulseNoise => {
            let prob = spec.level(IMPULSE_PROB);
            map_pixels(img, |p| {
                if rng.random_bool(prob) {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    p
                }
            })
        }
        Kind::SpeckleNoise => {
            let normal = Normal::new(0.0, spec.level(NOISE_SIGMA)).unwrap();
            map_pixels(img, |p| p + p * normal.sample(rng) as f32)
        }
        Kind::GaussianBlur => {
            let kernel = gaussian_kernel(spec.level(BLUR_SIGMA));
            Ok(separable_blur(img, &kernel))
        }
        Kind::DefocusBlur => Ok(convolve(img, &disk_kernel(spec.level(DEFOCUS_RADIUS)))),
        Kind::MotionBlur => {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            Ok(convolve(img, &line_kernel(spec.level(MOTION_LENGTH), angle)))
        }
        Kind::ZoomBlur => Ok(zoom_blur(img, spec.level(ZOOM_MAX))),
        Kind::Contrast => {
            let c = spec.level(CONTRAST_FACTOR);
            map_pixels(img, |p| (p - 0.5) * c + 0.5)
        }
        Kind::Brightness => {
            let b = spec.level(BRIGHTNESS_SHIFT);
            map_pixels(img, |p| p + b)
        }
        Kind::Saturate => saturate(img, spec.level(SATURATE_FACTOR)),
        Kind::Pixelate => Ok(pixelate(img, spec.level(PIXELATE_BLOCK))),
        Kind::Elastic => Ok(elastic(img, spec.level(ELASTIC_ALPHA), rng)),
        Kind::Spatter => Ok(spatter(img, spec.level(SPATTER_COVERAGE), rng)),
        Kind::FogLike => Ok(fog(img, spec.level(FOG_WEIGHT), rng)),
    }
}

fn map_pixels(img: &Image, mut f: impl FnMut(f32) -> f32) -> Result<Image> {
    Image::from_unclamped(
        img.width(),
        img.height(),
        img.channels(),
        img.pixels().iter().map(|&p| f(p)),
    )
}

fn build(img: &Image, mut f: impl FnMut(usize, usize, usize) -> f32) -> Image {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let mut values = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                values.push(f(x, y, c));
            }
        }
    }
    Image::from_unclamped(w, h, ch, values).expect("shape preserved")
}

/// Normalized 1-D Gaussian taps over radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Horizontal then vertical pass with edge-clamp padding.
pub fn separable_blur(img: &Image, kernel: &[f64]) -> Image {
    let r = (kernel.len() / 2) as isize;
    let horizontal = build(img, |x, y, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * img.get_clamped(x as isize + k as isize - r, y as isize, c) as f64)
            .sum::<f64>() as f32
    });
    build(&horizontal, |x, y, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| {
                w * horizontal.get_clamped(x as isize, y as isize + k as isize - r, c) as f64
            })
            .sum::<f64>() as f32
    })
}

/// Sparse 2-D kernel: `(dx, dy, weight)` taps.
type Kernel = Vec<(isize, isize, f64)>;

fn normalize(mut k: Kernel) -> Kernel {
    let sum: f64 = k.iter().map(|t| t.2).sum();
    k.iter_mut().for_each(|t| t.2 /= sum);
    k
}

fn disk_kernel(radius: usize) -> Kernel {
    let r = radius as isize;
    let taps = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .map(|(dx, dy)| (dx, dy, 1.0))
        .collect();
    normalize(taps)
}

/// Box of `length` taps along a line at `angle` radians.
fn line_kernel(length: usize, angle: f64) -> Kernel {
    let half = (length as f64 - 1.0) / 2.0;
    let mut taps: Kernel = Vec::new();
    for t in 0..length {
        let s = t as f64 - half;
        let dx = (s * angle.cos()).round() as isize;
        let dy = (s * angle.sin()).round() as isize;
        match taps.iter_mut().find(|k| k.0 == dx && k.1 == dy) {
            Some(k) => k.2 += 1.0,
            None => taps.push((dx, dy, 1.0)),
        }
    }
    normalize(taps)
}

fn convolve(img: &Image, kernel: &Kernel) -> Image {
    build(img, |x, y, c| {
        kernel
            .iter()
            .map(|&(dx, dy, w)| w * img.get_clamped(x as isize + dx, y as isize + dy, c) as f64)
            .sum::<f64>() as f32
    })
}

fn zoom_blur(img: &Image, max_zoom: f64) -> Image {
    const STEPS: usize = 4;
    let cx = (img.width() as f64 - 1.0) / 2.0;
    let cy = (img.height() as f64 - 1.0) / 2.0;
    let factors: Vec<f64> = (0..STEPS)
        .map(|k| 1.0 + (max_zoom - 1.0) * k as f64 / (STEPS - 1) as f64)
        .collect();
    build(img, |x, y, c| {
        let sum: f64 = factors
            .iter()
            .map(|z| {
                let sx = (cx + (x as f64 - cx) / z).round() as isize;
                let sy = (cy + (y as f64 - cy) / z).round() as isize;
                img.get_clamped(sx, sy, c) as f64
            })
            .sum();
        (sum / STEPS as f64) as f32
    })
}

fn saturate(img: &Image, factor: f32) -> Result<Image> {
    if img.channels() != 3 {
        return invalid("saturate requires a 3-channel image");
    }
    let values = img.pixels().chunks_exact(3).flat_map(|px| {
        let luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        px.iter()
            .map(move |&p| luma + (p - luma) * factor)
            .collect::<Vec<_>>()
    });
    Image::from_unclamped(img.width(), img.height(), 3, values)
}

fn pixelate(img: &Image, block: usize) -> Image {
    let block = block.min(img.width()).min(img.height()).max(1);
    build(img, |x, y, c| {
        let (bx, by) = (x / block * block, y / block * block);
        let xe = (bx + block).min(img.width());
        let ye = (by + block).min(img.height());
        let mut sum = 0.0f64;
        for yy in by..ye {
            for xx in bx..xe {
                sum += img.get(xx, yy, c) as f64;
            }
        }
        (sum / ((xe - bx) * (ye - by)) as f64) as f32
    })
}

/// Smooth random field in `[-1, 1]` (max-abs normalized).
fn smooth_field(w: usize, h: usize, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let noise: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0f32..1.0)).collect();
    let noise = Image::new(w, h, 1, noise).expect("in range");
    let blurred = separable_blur(&noise, &gaussian_kernel(sigma));
    let centered: Vec<f64> = blurred.pixels().iter().map(|&p| p as f64 - 0.5).collect();
    let max = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        centered.into_iter().map(|v| v / max).collect()
    } else {
        centered
    }
}

fn bilinear(img: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x = x.clamp(0.0, img.width() as f64 - 1.0);
    let y = y.clamp(0.0, img.height() as f64 - 1.0);
    let (x0, y0) = (x.floor() as isize, y.floor() as isize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = |dx: isize, dy: isize| img.get_clamped(x0 + dx, y0 + dy, c) as f64;
    (1.0 - fy) * ((1.0 - fx) * p(0, 0) + fx * p(1, 0)) + fy * ((1.0 - fx) * p(0, 1) + fx * p(1, 1))
}

fn elastic(img: &Image, alpha: f64, rng: &mut impl Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let dx = smooth_field(w, h, 3.0, rng);
    let dy = smooth_field(w, h, 3.0, rng);
    build(img, |x, y, c| {
        let i = y * w + x;
        bilinear(img, x as f64 + alpha * dx[i], y as f64 + alpha * dy[i], c) as f32
    })
}

fn spatter(img: &Image, coverage: f64, rng: &mut impl Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let target = (coverage * (w * h) as f64).ceil() as usize;
    let mut mask = vec![false; w * h];
    let mut marked = 0;
    while marked < target {
        let cx = rng.random_range(0..w) as isize;
        let cy = rng.random_range(0..h) as isize;
        let r = rng.random_range(0..=1i64) as isize;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx + dx, cy + dy);
                if dx * dx + dy * dy > r * r || x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    continue;
                }
                let i = y as usize * w + x as usize;
                if !mask[i] {
                    mask[i] = true;
                    marked += 1;
                }
            }
        }
    }
    build(img, |x, y, c| {
        let p = img.get(x, y, c);
        if mask[y * w + x] {
            0.85 + 0.15 * p
        } else {
            p
        }
    })
}

/// Two-octave value noise, min-max normalized to `[0, 1]`.
fn plasma(w: usize, h: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut field = vec![0.0; w * h];
    for (cells, amp) in [(3usize, 1.0), (6, 0.5)] {
        let grid: Vec<f64> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        for y in 0..h {
            for x in 0..w {
                let gx = x as f64 / w.max(2).saturating_sub(1) as f64 * cells as f64;
                let gy = y as f64 / h.max(2).saturating_sub(1) as f64 * cells as f64;
                let (x0, y0) = ((gx.floor() as usize).min(cells - 1), (gy.floor() as usize).min(cells - 1));
                let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
                let g = |i: usize, j: usize| grid[j * (cells + 1) + i];
                let v = (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x0 + 1, y0))
                    + fy * ((1.0 - fx) * g(x0, y0 + 1) + fx * g(x0 + 1, y0 + 1));
                field[y * w + x] += amp * v;
            }
        }
    }
    let (lo, hi) = field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    field
        .into_iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.5 })
        .collect()
}

fn fog(img: &Image, weight: f32, rng: &mut impl Rng) -> Image {
    let w = img.width();
    let field = plasma(w, img.height(), rng);
    build(img, |x, y, c| {
        (1.0 - weight) * img.get(x, y, c) + weight * field[y * w + x] as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(seed: u64) -> Image {
        let mut rng = seed::rng(seed, &[]);
        let px: Vec<f32> = (0..16 * 16).map(|_| rng.random_range(0.1..0.9)).collect();
        Image::new(16, 16, 1, px).unwrap()
    }

    fn spec(kind: Kind, severity: u8) -> CorruptionSpec {
        CorruptionSpec::new(kind, severity, 77).unwrap()
    }

    fn sample_std(img: &Image) -> f64 {
        let n = img.pixels().len() as f64;
        let mean = img.pixels().iter().map(|&p| p as f64).sum::<f64>() / n;
        (img.pixels().iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn gaussian_noise_std_matches_table() {
        // 0.5 ± 3·0.26 stays inside [0, 1] except for rare tails, so clamping
        // barely shrinks the spread.
        let img = Image::constant(128, 128, 1, 0.5).unwrap();
        for s in 1..=5u8 {
            let out = apply(&spec(Kind::GaussianNoise, s), &img).unwrap();
            let sigma = NOISE_SIGMA[s as usize - 1];
            let got = sample_std(&out);
            assert!((got - sigma).abs() <= 0.1 * sigma, "severity {s}: {got} vs {sigma}");
        }
    }

    #[test]
    fn brightness_saturates_white() {
        let img = Image::constant(4, 4, 3, 1.0).unwrap();
        assert_eq!(apply(&spec(Kind::Brightness, 5), &img).unwrap(), img);
    }

    #[test]
    fn unit_block_pixelate_is_identity() {
        let img = textured(1);
        assert_eq!(pixelate(&img, 1), img);
        let out = apply(&spec(Kind::Pixelate, 5), &img).unwrap();
        assert_eq!(out.get(0, 0, 0), out.get(5, 5, 0));
    }

    #[test]
    fn every_kind_preserves_shape_and_range() {
        let gray = textured(2);
        let rgb = Image::new(
            16,
            12,
            3,
            (0..16 * 12 * 3).map(|i| (i % 7) as f32 / 7.0).collect(),
        )
        .unwrap();
        for kind in Kind::ALL {
            for s in 1..=5 {
                for img in [&gray, &rgb] {
                    let out = match apply(&spec(kind, s), img) {
                        Ok(o) => o,
                        Err(_) => {
                            assert!(kind == Kind::Saturate && img.channels() == 1);
                            continue;
                        }
                    };
                    assert!(out.same_shape(img), "{kind}");
                    assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
                }
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let img = textured(3);
        for kind in Kind::ALL.into_iter().filter(|&k| k != Kind::Saturate) {
            let a = apply(&spec(kind, 3), &img).unwrap();
            let b = apply(&spec(kind, 3), &img).unwrap();
            assert_eq!(a, b, "{kind}");
        }
        let a = apply(&CorruptionSpec::new(Kind::GaussianNoise, 3, 1).unwrap(), &img).unwrap();
        let b = apply(&CorruptionSpec::new(Kind::GaussianNoise, 3, 2).unwrap(), &img).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_bad_severity() {
        assert!(CorruptionSpec::new(Kind::Contrast, 0, 1).is_err());
        assert!(CorruptionSpec::new(Kind::Contrast, 6, 1).is_err());
        let raw = CorruptionSpec {
            kind: Kind::Contrast,
            severity: 9,
            seed: 0,
        };
        assert!(apply(&raw, &textured(1)).is_err());
        assert!("snow".parse::<Kind>().is_err());
        assert_eq!("zoom_blur".parse::<Kind>().unwrap(), Kind::ZoomBlur);
    }

    #[test]
    fn severity_is_monotone_for_noise_blur_and_contrast() {
        let images: Vec<Image> = (0..40).map(textured).collect();
        let kinds = [
            Kind::GaussianNoise,
            Kind::ShotNoise,
            Kind::ImpulseNoise,
            Kind::SpeckleNoise,
            Kind::GaussianBlur,
            Kind::DefocusBlur,
            Kind::MotionBlur,
            Kind::ZoomBlur,
            Kind::Contrast,
        ];
        for kind in kinds {
            let means: Vec<f64> = (1..=5u8)
                .map(|s| {
                    images
                        .iter()
                        .enumerate()
                        .map(|(i, img)| {
                            let sp = CorruptionSpec::new(kind, s, i as u64).unwrap();
                            apply(&sp, img).unwrap().mean_abs_diff(img).unwrap()
                        })
                        .sum::<f64>()
                        / images.len() as f64
                })
                .collect();
            for w in means.windows(2) {
                assert!(w[1] >= w[0] * 0.95, "{kind}: {means:?}");
            }
        }
    }

    #[test]
    fn kernels_are_normalized() {
        for k in [disk_kernel(3), line_kernel(7, 0.7)] {
            assert!((k.iter().map(|t| t.2).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((gaussian_kernel(1.3).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(1.3).len(), 2 * 4 + 1);
    }
}
