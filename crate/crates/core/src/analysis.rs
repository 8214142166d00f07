//! Structural similarity between corruption kinds, and pruning of
//! near-duplicate kinds from the label set.

use std::fmt::Write as _;

use rand::seq::index;

use crate::corruptions::{Condition, LabeledImage};
use crate::error::{invalid, Result};
use crate::image::Image;
use crate::seed;

pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.75;

fn window_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter with edge-replicating borders.
fn filter(values: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .map(|o| k[(o + r) as usize] * values[y * w + clamp(x as isize + o, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .map(|o| k[(o + r) as usize] * tmp[clamp(y as isize + o, h) * w + x])
                .sum();
        }
    }
    out
}

/// Mean local SSIM over all pixels (11×11 Gaussian window, σ = 1.5).
/// Colour images are compared on luma.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return invalid("ssim needs images of identical shape");
    }
    let (w, h) = (a.width(), a.height());
    let (x, y) = (a.luma(), b.luma());
    let k = window_kernel();
    let product = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter(&x, w, h, &k);
    let my = filter(&y, w, h, &k);
    let mxx = filter(&product(&x, &x), w, h, &k);
    let myy = filter(&product(&y, &y), w, h, &k);
    let mxy = filter(&product(&x, &y), w, h, &k);
    let total: f64 = (0..x.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            ((2.0 * ux * uy + C1) * (2.0 * cov + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .sum();
    Ok(total / x.len() as f64)
}

/// Colour band used when reporting similarities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Band {
    /// `> 0.75`
    High,
    /// `(0.5, 0.75]`
    Medium,
    Low,
}

impl Band {
    pub fn of(v: f64) -> Band {
        if v > 0.75 {
            Band::High
        } else if v > 0.5 {
            Band::Medium
        } else {
            Band::Low
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::High => "green",
            Band::Medium => "yellow",
            Band::Low => "none",
        }
    }
}

/// Symmetric matrix of mean SSIM between conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
    sample_count: usize,
}

impl SsimMatrix {
    pub fn from_values(labels: Vec<String>, values: Vec<f64>, sample_count: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 || values.len() != n * n {
            return invalid("similarity matrix must be square and non-empty");
        }
        if values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return invalid("similarity values must lie in [-1, 1]");
        }
        Ok(Self {
            labels,
            values,
            sample_count,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Header row and column of names, values to two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind");
        for l in &self.labels {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.len() {
                write!(out, ",{:.2}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// One row per unordered off-diagonal pair with its colour band.
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("a,b,ssim,band\n");
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let v = self.get(i, j);
                writeln!(out, "{},{},{:.2},{}", self.labels[i], self.labels[j], v, Band::of(v).name())
                    .unwrap();
            }
        }
        out
    }
}

/// Mean SSIM between every pair of conditions.
///
/// Entry `(i, j)` averages `ssim(cond_i(img), cond_j(img))` over
/// `sample_count` base images drawn without replacement with a seed derived
/// from the pair. Each image is corrupted with the same per-image seed used
/// for the corrupted dataset, so the diagonal compares identical images.
pub fn ssim_matrix(
    base: &[LabeledImage],
    conditions: &[Condition],
    severity: u8,
    sample_count: usize,
    seed: u64,
) -> Result<SsimMatrix> {
    if conditions.is_empty() {
        return invalid("no conditions to compare");
    }
    if sample_count == 0 || base.len() < sample_count {
        return invalid(format!(
            "need {sample_count} base images, have {}",
            base.len()
        ));
    }
    let n = conditions.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut rng = seed::rng(seed, &[seed::tag("ssim"), i as u64, j as u64]);
            let picks = index::sample(&mut rng, base.len(), sample_count);
            let mut total = 0.0;
            for idx in picks.iter() {
                let img = &base[idx].image;
                let a = conditions[i].apply_indexed(img, severity, seed, idx)?;
                let b = conditions[j].apply_indexed(img, severity, seed, idx)?;
                total += ssim(&a, &b)?;
            }
            let v = (total / sample_count as f64).clamp(-1.0, 1.0);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    SsimMatrix::from_values(
        conditions.iter().map(|c| c.name().to_owned()).collect(),
        values,
        sample_count,
    )
}

/// Greedy pruning of highly similar kinds.
///
/// Off-diagonal pairs above `threshold` are visited in descending order; when
/// both members are still present, the one with the higher mean similarity to
/// the other remaining kinds is dropped (the later one on ties). The clean
/// condition is never dropped. Kept names are returned in matrix order.
pub fn suggest_pruned_set(m: &SsimMatrix, threshold: f64) -> Vec<String> {
    let n = m.len();
    let clean = Condition::Clean.name();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| m.get(i, j) > threshold)
        .collect();
    pairs.sort_by(|a, b| m.get(b.0, b.1).total_cmp(&m.get(a.0, a.1)));
    let mut keep = vec![true; n];
    for (i, j) in pairs {
        if !(keep[i] && keep[j]) {
            continue;
        }
        let mean_sim = |x: usize, keep: &[bool]| {
            let others: Vec<f64> = (0..n).filter(|&y| y != x && keep[y]).map(|y| m.get(x, y)).collect();
            others.iter().sum::<f64>() / others.len() as f64
        };
        let drop = if m.labels[i] == clean {
            j
        } else if m.labels[j] == clean {
            i
        } else if mean_sim(i, &keep) > mean_sim(j, &keep) {
            i
        } else {
            j
        };
        keep[drop] = false;
    }
    m.labels
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(l, _)| l.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, CorpusSpec};
    use crate::corruptions::Kind;
    use proptest::prelude::*;

    fn checkerboard(n: usize, lo: f32, hi: f32) -> Image {
        let px = (0..n * n)
            .map(|i| if (i / n + i % n) % 2 == 0 { hi } else { lo })
            .collect();
        Image::new(n, n, 1, px).unwrap()
    }

    fn invert(img: &Image) -> Image {
        let px = img.pixels().iter().map(|p| 1.0 - p).collect();
        Image::new(img.width(), img.height(), img.channels(), px).unwrap()
    }

    #[test]
    fn identity_is_one() {
        for img in [checkerboard(16, 0.25, 0.75), Image::constant(8, 8, 3, 0.4).unwrap()] {
            assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let x = checkerboard(16, 0.25, 0.75);
        assert!(ssim(&x, &invert(&x)).unwrap() < 0.0);
    }

    #[test]
    fn constant_images_match_closed_form() {
        // With zero variance everywhere the structure term is C2/C2 and only
        // the luminance term remains.
        for (a, b) in [(0.2f32, 0.7f32), (0.0, 1.0), (0.5, 0.55)] {
            let x = Image::constant(12, 12, 1, a).unwrap();
            let y = Image::constant(12, 12, 1, b).unwrap();
            let (a, b) = (a as f64, b as f64);
            let want = (2.0 * a * b + C1) / (a * a + b * b + C1);
            assert!((ssim(&x, &y).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Image::constant(4, 4, 1, 0.5).unwrap();
        let b = Image::constant(4, 5, 1, 0.5).unwrap();
        assert!(ssim(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(px in proptest::collection::vec(0.0f32..=1.0, 200)) {
            let a = Image::new(10, 10, 1, px[..100].to_vec()).unwrap();
            let b = Image::new(10, 10, 1, px[100..].to_vec()).unwrap();
            let ab = ssim(&a, &b).unwrap();
            prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }

    fn matrix(labels: &[&str], values: Vec<f64>) -> SsimMatrix {
        SsimMatrix::from_values(labels.iter().map(|s| s.to_string()).collect(), values, 1).unwrap()
    }

    #[test]
    fn pruning_examples() {
        let m = matrix(&["id", "a", "b"], vec![1.0, 0.3, 0.2, 0.3, 1.0, 0.5, 0.2, 0.5, 1.0]);
        assert_eq!(suggest_pruned_set(&m, 0.75), ["id", "a", "b"]);
        let m = matrix(&["id", "a", "b"], vec![1.0, 0.3, 0.2, 0.3, 1.0, 1.0, 0.2, 1.0, 1.0]);
        assert_eq!(suggest_pruned_set(&m, 0.75), ["id", "b"]);
        let m = matrix(&["id", "a", "b"], vec![1.0, 0.2, 0.2, 0.2, 1.0, 1.0, 0.2, 1.0, 1.0]);
        assert_eq!(suggest_pruned_set(&m, 0.75), ["id", "a"]);
        // "a" is closer to everything else, so it goes.
        let m = matrix(&["id", "a", "b"], vec![1.0, 0.6, 0.2, 0.6, 1.0, 0.9, 0.2, 0.9, 1.0]);
        assert_eq!(suggest_pruned_set(&m, 0.75), ["id", "b"]);
        let m = matrix(&["id", "a"], vec![1.0, 0.95, 0.95, 1.0]);
        assert_eq!(suggest_pruned_set(&m, 0.75), ["id"]);
    }

    proptest! {
        #[test]
        fn pruning_keeps_id_and_never_empties(raw in proptest::collection::vec(-1.0f64..=1.0, 36), t in 0.0f64..1.0) {
            let n = 6;
            let mut v = vec![1.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    v[i * n + j] = raw[i * n + j];
                    v[j * n + i] = raw[i * n + j];
                }
            }
            let m = matrix(&["id", "a", "b", "c", "d", "e"], v);
            let kept = suggest_pruned_set(&m, t);
            prop_assert!(kept.iter().any(|k| k == "id"));
            for (x, y) in kept.iter().zip(kept.iter().skip(1)) {
                prop_assert!(m.index_of(x) < m.index_of(y));
            }
            prop_assert_eq!(kept, suggest_pruned_set(&m, t));
        }
    }

    #[test]
    fn matrix_properties_on_corpus() {
        let base = generate(&CorpusSpec {
            count: 30,
            ..CorpusSpec::default()
        })
        .unwrap();
        let conds = [
            Condition::Clean,
            Condition::Corrupt(Kind::GaussianBlur),
            Condition::Corrupt(Kind::DefocusBlur),
            Condition::Corrupt(Kind::ImpulseNoise),
        ];
        let m = ssim_matrix(&base, &conds, 5, 20, 7).unwrap();
        assert_eq!(m.len(), 4);
        for i in 0..4 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-6);
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert!(m.get(1, 2) > m.get(1, 3));
        assert_eq!(m, ssim_matrix(&base, &conds, 5, 20, 7).unwrap());
        assert!(ssim_matrix(&base, &conds, 5, 31, 7).is_err());
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().all(|l| l.split(',').count() == 5));
        assert_eq!(m.pairs_csv().lines().count(), 7);
    }
}
