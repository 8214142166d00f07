//! Labeled real-valued feature sets and their on-disk format.
//!
//! File layout: one text header line
//! `HDCSET v1 d=<d> n=<n> L=<L> split=<tag>`, one line of comma-separated
//! label names, then `n` binary records of `d` little-endian `f32` features
//! followed by a little-endian `u32` label.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => invalid(format!("unknown split tag {other:?}")),
        }
    }
}

/// Feature vectors of a fixed dimension, each with a class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatureSet {
    d: usize,
    features: Vec<f64>,
    labels: Vec<u32>,
    label_names: Vec<String>,
    split: Split,
}

impl LabeledFeatureSet {
    pub fn new(
        samples: Vec<(Vec<f64>, u32)>,
        label_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        let d = match samples.first() {
            Some((f, _)) => f.len(),
            None => return invalid("feature set must be non-empty"),
        };
        let mut features = Vec::with_capacity(d * samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        for (f, l) in samples {
            features.extend_from_slice(&f);
            labels.push(l);
            if f.len() != d {
                return invalid(format!("feature length {} differs from {d}", f.len()));
            }
        }
        Self::from_parts(d, features, labels, label_names, split)
    }

    pub fn from_parts(
        d: usize,
        features: Vec<f64>,
        labels: Vec<u32>,
        label_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        if d == 0 || labels.is_empty() {
            return invalid("feature set must be non-empty with positive dimension");
        }
        if features.len() != d * labels.len() {
            return invalid("feature storage does not match d × n");
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= label_names.len()) {
            return invalid(format!(
                "label {bad} out of range for {} classes",
                label_names.len()
            ));
        }
        if label_names.iter().any(|n| n.contains(',') || n.contains('\n')) {
            return invalid("label names may not contain commas or newlines");
        }
        Ok(Self {
            d,
            features,
            labels,
            label_names,
            split,
        })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: feature sets are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    #[inline]
    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.d)
            .zip(&self.labels)
            .map(|(f, &l)| (f, l as usize))
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self::from_parts(self.d, features, labels, self.label_names.clone(), split)
    }

    /// Keeps only samples whose class name is in `keep`, relabeling classes
    /// densely in the order of `keep`.
    pub fn restrict_to(&self, keep: &[String]) -> Result<Self> {
        let remap: Vec<Option<u32>> = self
            .label_names
            .iter()
            .map(|n| keep.iter().position(|k| k == n).map(|p| p as u32))
            .collect();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(new) = remap[l as usize] {
                features.extend_from_slice(self.features(i));
                labels.push(new);
            }
        }
        Self::from_parts(self.d, features, labels, keep.to_vec(), self.split)
    }

    /// Writes the `HDCSET v1` format. Features are stored as `f32`.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "HDCSET v1 d={} n={} L={} split={}",
            self.d,
            self.len(),
            self.num_classes(),
            self.split
        )?;
        writeln!(w, "{}", self.label_names.join(","))?;
        for (f, l) in self.iter() {
            for &x in f {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
            w.write_all(&(l as u32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead + ?Sized>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "feature set",
            reason,
        };
        let mut header = String::new();
        r.read_line(&mut header)?;
        let mut fields = header.trim_end().split(' ');
        if fields.next() != Some("HDCSET") || fields.next() != Some("v1") {
            return Err(bad(format!("bad header {header:?}")));
        }
        let mut get = |key: &str| -> Result<String> {
            let field = fields.next().ok_or_else(|| bad(format!("missing {key}")))?;
            field
                .strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected {key}=..., got {field:?}")))
        };
        let num = |s: String| s.parse::<usize>().map_err(|e| bad(e.to_string()));
        let d = num(get("d")?)?;
        let n = num(get("n")?)?;
        let classes = num(get("L")?)?;
        let split: Split = get("split")?.parse()?;
        let mut names = String::new();
        r.read_line(&mut names)?;
        let label_names: Vec<String> = names
            .trim_end_matches('\n')
            .split(',')
            .map(str::to_owned)
            .collect();
        if label_names.len() != classes {
            return Err(bad(format!(
                "header declares {classes} labels, found {}",
                label_names.len()
            )));
        }
        let mut features = Vec::with_capacity(d * n);
        let mut labels = Vec::with_capacity(n);
        let mut record = vec![0u8; 4 * d + 4];
        for _ in 0..n {
            r.read_exact(&mut record)?;
            let (feat, label) = record.split_at(4 * d);
            features.extend(
                feat.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64),
            );
            labels.push(u32::from_le_bytes(label.try_into().unwrap()));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after last record".into()));
        }
        Self::from_parts(d, features, labels, label_names, split)
            .map_err(|e| bad(e.to_string()))
    }
}

/// Per-feature standardization statistics fitted on a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per feature. Constant features
    /// get a unit scale.
    pub fn fit(set: &LabeledFeatureSet) -> Self {
        let n = set.len() as f64;
        let mut mean = vec![0.0; set.d()];
        for (f, _) in set.iter() {
            for (m, x) in mean.iter_mut().zip(f) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; set.d()];
        for (f, _) in set.iter() {
            for ((v, x), m) in var.iter_mut().zip(f).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn apply_set(&self, set: &LabeledFeatureSet) -> Result<LabeledFeatureSet> {
        let features = set.iter().flat_map(|(f, _)| self.apply(f)).collect();
        LabeledFeatureSet::from_parts(
            set.d(),
            features,
            set.labels().to_vec(),
            set.label_names().to_vec(),
            set.split(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn validates_invariants() {
        assert!(LabeledFeatureSet::new(vec![], names(2), Split::Train).is_err());
        assert!(
            LabeledFeatureSet::new(vec![(vec![1.0], 2)], names(2), Split::Train).is_err()
        );
        assert!(LabeledFeatureSet::new(
            vec![(vec![1.0], 0), (vec![1.0, 2.0], 1)],
            names(2),
            Split::Train
        )
        .is_err());
    }

    #[test]
    fn file_round_trip() {
        let set = LabeledFeatureSet::new(
            vec![(vec![0.5, -1.25], 1), (vec![3.0, 0.0], 0)],
            vec!["gaussian_noise".into(), "contrast".into()],
            Split::Test,
        )
        .unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        let header = b"HDCSET v1 d=2 n=2 L=2 split=test\ngaussian_noise,contrast\n";
        assert!(buf.starts_with(header));
        assert_eq!(buf.len(), header.len() + 2 * 12);
        let back = LabeledFeatureSet::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_truncated_file() {
        let set =
            LabeledFeatureSet::new(vec![(vec![0.5], 0)], names(1), Split::Train).unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(LabeledFeatureSet::read_from(&mut &buf[..]).is_err());
    }

    #[test]
    fn restrict_relabels_densely() {
        let set = LabeledFeatureSet::new(
            vec![(vec![0.0], 0), (vec![1.0], 1), (vec![2.0], 2)],
            names(3),
            Split::Train,
        )
        .unwrap();
        let r = set.restrict_to(&["c2".into(), "c0".into()]).unwrap();
        assert_eq!(r.labels(), &[1, 0]);
        assert_eq!(r.features(1), &[2.0]);
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let set = LabeledFeatureSet::new(
            vec![(vec![1.0, 5.0], 0), (vec![3.0, 5.0], 0)],
            names(1),
            Split::Train,
        )
        .unwrap();
        let s = Standardizer::fit(&set);
        assert_eq!(s.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&[3.0, 6.0]), vec![1.0, 1.0]);
    }
}
