use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::{apply, CorruptionSpec, Kind};
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::seed;

/// A clean image with its content class.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub class: u32,
}

/// Either the uncorrupted input or one corruption kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    Clean,
    Corrupt(Kind),
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Clean => "id",
            Condition::Corrupt(k) => k.name(),
        }
    }

    /// Seed for corrupting base image `index` under this condition.
    pub fn image_seed(self, seed: u64, index: usize) -> u64 {
        let kind = match self {
            Condition::Clean => u64::MAX,
            Condition::Corrupt(k) => k.index(),
        };
        seed::derive(seed, &[index as u64, kind])
    }

    /// Applies the condition to base image `index` of a corpus.
    pub fn apply_indexed(self, img: &Image, severity: u8, seed: u64, index: usize) -> Result<Image> {
        match self {
            Condition::Clean => Ok(img.clone()),
            Condition::Corrupt(kind) => apply(
                &CorruptionSpec::new(kind, severity, self.image_seed(seed, index))?,
                img,
            ),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Condition::Clean),
            other => other.parse().map(Condition::Corrupt),
        }
    }
}

/// One corrupted image.
#[derive(Clone, Debug, PartialEq)]
pub struct CidSample {
    pub image: Image,
    /// Index into [`CidSet::label_names`].
    pub label: u32,
    /// Content class of the base image.
    pub class: u32,
}

/// Corrupted images labeled by condition.
#[derive(Clone, Debug, PartialEq)]
pub struct CidSet {
    pub samples: Vec<CidSample>,
    pub label_names: Vec<String>,
}

/// Corrupts every base image once per kind.
///
/// Labels follow `kinds` order; with `include_id` the clean images are added
/// as label 0 ("id") and the kinds start at 1. Image `i` under kind `k` is
/// corrupted with seed `derive(seed, [i, k])`, so any single sample can be
/// regenerated on its own.
pub fn build_cid_dataset(
    base: &[LabeledImage],
    kinds: &[Kind],
    severity: u8,
    seed: u64,
    include_id: bool,
) -> Result<CidSet> {
    if base.is_empty() {
        return invalid("no base images");
    }
    if kinds.is_empty() {
        return invalid("no corruption kinds");
    }
    for (i, k) in kinds.iter().enumerate() {
        if kinds[..i].contains(k) {
            return invalid(format!("corruption kind {k} listed twice"));
        }
    }
    let conditions: Vec<Condition> = include_id
        .then_some(Condition::Clean)
        .into_iter()
        .chain(kinds.iter().map(|&k| Condition::Corrupt(k)))
        .collect();
    let mut samples = Vec::with_capacity(conditions.len() * base.len());
    for (label, cond) in conditions.iter().enumerate() {
        for (i, b) in base.iter().enumerate() {
            samples.push(CidSample {
                image: cond.apply_indexed(&b.image, severity, seed, i)?,
                label: label as u32,
                class: b.class,
            });
        }
    }
    Ok(CidSet {
        samples,
        label_names: conditions.iter().map(|c| c.name().to_owned()).collect(),
    })
}

impl CidSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `IMGSET v1 n=<n> L=<L>`, the comma-separated label names, then
    /// per record: label (u32 LE), content class (u32 LE), raw image dump.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "IMGSET v1 n={} L={}", self.len(), self.label_names.len())?;
        writeln!(w, "{}", self.label_names.join(","))?;
        for s in &self.samples {
            w.write_all(&s.label.to_le_bytes())?;
            w.write_all(&s.class.to_le_bytes())?;
            s.image.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead + ?Sized>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "image set",
            reason,
        };
        let mut header = String::new();
        r.read_line(&mut header)?;
        let fields: Vec<&str> = header.trim_end().split(' ').collect();
        let parse = |field: Option<&&str>, key: &str| -> Result<usize> {
            field
                .and_then(|f| f.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad header {header:?}")))
        };
        if fields.first() != Some(&"IMGSET") || fields.get(1) != Some(&"v1") {
            return Err(bad(format!("bad header {header:?}")));
        }
        let n = parse(fields.get(2), "n=")?;
        let classes = parse(fields.get(3), "L=")?;
        let mut names = String::new();
        r.read_line(&mut names)?;
        let label_names: Vec<String> = names.trim_end_matches('\n').split(',').map(str::to_owned).collect();
        if label_names.len() != classes {
            return Err(bad("label count mismatch".into()));
        }
        let mut samples = Vec::with_capacity(n);
        let mut b4 = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut b4)?;
            let label = u32::from_le_bytes(b4);
            r.read_exact(&mut b4)?;
            let class = u32::from_le_bytes(b4);
            if label as usize >= classes {
                return Err(bad(format!("label {label} out of range")));
            }
            samples.push(CidSample {
                image: Image::read_from(r)?,
                label,
                class,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Self {
            samples,
            label_names,
        })
    }
}
