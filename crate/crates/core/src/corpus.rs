//! Seeded synthetic image corpus: ten geometric pattern classes.
//!
//! Every image draws its own geometry (phase, period, position, size) and
//! intensity levels, plus mild sensor noise, so the classes are learnable but
//! not trivially separable by pixel templates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corruptions::LabeledImage;
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::seed;

pub const CLASS_NAMES: [&str; 10] = [
    "h_stripes",
    "v_stripes",
    "diag_stripes",
    "anti_diag_stripes",
    "checker",
    "disk",
    "ring",
    "cross",
    "frame",
    "edge",
];

/// Corpus generator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub count: usize,
    pub size: usize,
    pub channels: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            size: 16,
            channels: 1,
            seed: 0,
        }
    }
}

/// Pattern intensity in `[0, 1]` for class `class` at pixel `(x, y)`.
fn pattern(class: usize, x: f64, y: f64, size: f64, rng_params: &[f64; 4]) -> f64 {
    let [a, b, c, d] = *rng_params;
    let period = 4.0 + 4.0 * a;
    let phase = 2.0 * PI * b;
    let wave = |t: f64| 0.5 + 0.5 * (2.0 * PI * t / period + phase).sin();
    let cx = size * (0.3 + 0.4 * c);
    let cy = size * (0.3 + 0.4 * d);
    let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    let soft = |v: f64| 1.0 / (1.0 + (-3.0 * v).exp());
    match class {
        0 => wave(y),
        1 => wave(x),
        2 => wave((x + y) / 2f64.sqrt()),
        3 => wave((x - y) / 2f64.sqrt()),
        4 => {
            let cell = 2.0 + (3.0 * a).floor();
            let ox = (b * cell).floor();
            let oy = (c * cell).floor();
            let parity = (((x + ox) / cell).floor() + ((y + oy) / cell).floor()) as i64;
            if parity.rem_euclid(2) == 0 {
                1.0
            } else {
                0.0
            }
        }
        5 => soft(size * (0.2 + 0.1 * a) - r),
        6 => {
            let radius = size * (0.22 + 0.1 * a);
            soft(1.2 - (r - radius).abs())
        }
        7 => {
            let half = 1.0 + a;
            let bar = |v: f64| soft(half - v.abs());
            bar(x - cx).max(bar(y - cy))
        }
        8 => {
            let half_w = size * (0.25 + 0.15 * a);
            let half_h = size * (0.25 + 0.15 * b);
            let dx = (x - size / 2.0 + 0.5).abs() - half_w;
            let dy = (y - size / 2.0 + 0.5).abs() - half_h;
            let outside = dx.max(dy);
            soft(1.0 - outside.abs())
        }
        _ => {
            let angle = PI * a * 2.0;
            let proj = (x - cx) * angle.cos() + (y - cy) * angle.sin();
            soft(proj)
        }
    }
}

/// Generates `spec.count` images, class `i % 10` for image `i`.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<LabeledImage>> {
    if spec.count == 0 || spec.size < 4 {
        return invalid("corpus needs at least one image of size ≥ 4");
    }
    if spec.channels != 1 && spec.channels != 3 {
        return invalid("corpus images must have 1 or 3 channels");
    }
    let noise = Normal::new(0.0, 0.03).unwrap();
    (0..spec.count)
        .map(|i| {
            let class = i % CLASS_NAMES.len();
            let mut rng = seed::rng(spec.seed, &[seed::tag("corpus"), i as u64]);
            let params: [f64; 4] = rng.random();
            let background: f64 = rng.random_range(0.15..0.4);
            let amplitude: f64 = rng.random_range(0.35..0.55);
            let tint: [f64; 3] = [
                rng.random_range(0.7..1.0),
                rng.random_range(0.7..1.0),
                rng.random_range(0.7..1.0),
            ];
            let size = spec.size as f64;
            let mut values = Vec::with_capacity(spec.size * spec.size * spec.channels);
            for y in 0..spec.size {
                for x in 0..spec.size {
                    let p = pattern(class, x as f64, y as f64, size, &params);
                    for t in tint.iter().take(spec.channels) {
                        let scale = if spec.channels == 3 { *t } else { 1.0 };
                        let v = (background + amplitude * p) * scale + noise.sample(&mut rng);
                        values.push(v as f32);
                    }
                }
            }
            Ok(LabeledImage {
                image: Image::from_unclamped(spec.size, spec.size, spec.channels, values)?,
                class: class as u32,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_balanced_deterministic_corpus() {
        let spec = CorpusSpec {
            count: 30,
            ..CorpusSpec::default()
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.len(), 30);
        for c in 0..10 {
            assert_eq!(a.iter().filter(|i| i.class == c).count(), 3);
        }
        assert_eq!(a[0].image.width(), 16);
        let other = generate(&CorpusSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn supports_color() {
        let spec = CorpusSpec {
            count: 10,
            channels: 3,
            size: 8,
            seed: 2,
        };
        assert!(generate(&spec).unwrap().iter().all(|i| i.image.channels() == 3));
        assert!(generate(&CorpusSpec { channels: 2, ..spec }).is_err());
    }
}
