//! Model file: a trained class bank plus what is needed to classify raw
//! images with it.
//!
//! Layout (little-endian): magic `HDBG`, `u16` version, then six sections in
//! fixed order, each prefixed by its `u64` byte length:
//! projection, accumulators, binarized bank, label names, surrogate network
//! (tap layer byte + weights), standardizer. The last two are empty when
//! absent.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::Standardizer;
use crate::encoding::ProjectionMatrix;
use crate::error::{invalid, Error, Result};
use crate::hdc::{ClassBank, Prediction};
use crate::image::Image;
use crate::mlp::MlpModel;
use crate::pipeline::{FeatureTap, SurrogateTap, TapLayer};

pub const MAGIC: &[u8; 4] = b"HDBG";
pub const VERSION: u16 = 1;

/// A class bank with its optional feature front end.
#[derive(Clone, Debug, PartialEq)]
pub struct DebugModel {
    pub bank: ClassBank,
    pub surrogate: Option<(MlpModel, TapLayer)>,
    pub standardizer: Option<Standardizer>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "model file",
        reason: reason.into(),
    }
}

fn write_section<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> Result<()> {
    w.write_all(&(body.len() as u64).to_le_bytes())?;
    w.write_all(body)?;
    Ok(())
}

fn read_section<R: Read + ?Sized>(r: &mut R) -> Result<Vec<u8>> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8);
    if len > 1 << 34 {
        return Err(bad(format!("implausible section length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(body)
}

/// Parses a whole section, rejecting leftover bytes.
fn parse<T>(body: &[u8], f: impl FnOnce(&mut &[u8]) -> Result<T>) -> Result<T> {
    let mut cur = body;
    let v = f(&mut cur)?;
    if !cur.is_empty() {
        return Err(bad(format!("{} unread bytes in section", cur.len())));
    }
    Ok(v)
}

fn write_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend((v.len() as u32).to_le_bytes());
    v.iter().for_each(|x| out.extend(x.to_le_bytes()));
}

fn read_f64s(r: &mut &[u8]) -> Result<Vec<f64>> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    if n * 8 > r.len() {
        return Err(bad("vector longer than section"));
    }
    let mut b8 = [0u8; 8];
    (0..n)
        .map(|_| {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        })
        .collect()
}

impl DebugModel {
    pub fn new(bank: ClassBank) -> Self {
        Self {
            bank,
            surrogate: None,
            standardizer: None,
        }
    }

    /// Classifies a tapped feature vector.
    pub fn classify_features(&self, f: &[f64]) -> Result<Prediction> {
        match &self.standardizer {
            Some(s) => {
                if f.len() != s.mean.len() {
                    return invalid("feature length does not match the standardizer");
                }
                self.bank.classify(&s.apply(f))
            }
            None => self.bank.classify(f),
        }
    }

    /// Taps `image` with the stored surrogate, then classifies.
    pub fn classify_image(&self, image: &Image) -> Result<Prediction> {
        let Some((net, layer)) = &self.surrogate else {
            return invalid("model has no surrogate network for raw images");
        };
        let f: Vec<f64> = SurrogateTap::new(net, *layer)?
            .extract(image)?
            .into_iter()
            .map(|v| v as f32 as f64)
            .collect();
        self.classify_features(&f)
    }

    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let mut buf = Vec::new();
        self.bank.projection().write_to(&mut buf)?;
        write_section(w, &buf)?;
        buf.clear();
        self.bank.write_accumulators(&mut buf)?;
        write_section(w, &buf)?;
        buf.clear();
        self.bank.write_binarized(&mut buf)?;
        write_section(w, &buf)?;
        buf.clear();
        buf.extend((self.bank.num_classes() as u32).to_le_bytes());
        for name in self.bank.label_names() {
            buf.extend((name.len() as u32).to_le_bytes());
            buf.extend(name.as_bytes());
        }
        write_section(w, &buf)?;
        buf.clear();
        if let Some((net, layer)) = &self.surrogate {
            buf.push(TapLayer::ALL.iter().position(|l| l == layer).unwrap() as u8);
            net.write_to(&mut buf)?;
        }
        write_section(w, &buf)?;
        buf.clear();
        if let Some(s) = &self.standardizer {
            write_f64s(&mut buf, &s.mean);
            write_f64s(&mut buf, &s.std);
        }
        write_section(w, &buf)
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("missing HDBG magic"));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let projection = parse(&read_section(r)?, |c| ProjectionMatrix::read_from(c))?;
        let accumulators = parse(&read_section(r)?, |c| ClassBank::read_accumulators(c))?;
        let binarized = parse(&read_section(r)?, |c| ClassBank::read_binarized(c))?;
        let label_names = parse(&read_section(r)?, |c| {
            let mut b4 = [0u8; 4];
            c.read_exact(&mut b4)?;
            let n = u32::from_le_bytes(b4) as usize;
            let mut names = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                c.read_exact(&mut b4)?;
                let len = u32::from_le_bytes(b4) as usize;
                if len > c.len() {
                    return Err(bad("label name longer than section"));
                }
                let (s, rest) = c.split_at(len);
                names.push(String::from_utf8(s.to_vec()).map_err(|_| bad("label name is not UTF-8"))?);
                *c = rest;
            }
            Ok(names)
        })?;
        let bank = ClassBank::from_parts(projection, accumulators, binarized, label_names)
            .map_err(|e| bad(e.to_string()))?;
        let body = read_section(r)?;
        let surrogate = if body.is_empty() {
            None
        } else {
            let layer = *TapLayer::ALL
                .get(body[0] as usize)
                .ok_or_else(|| bad("unknown tap layer"))?;
            Some((parse(&body[1..], |c| MlpModel::read_from(c))?, layer))
        };
        let body = read_section(r)?;
        let standardizer = if body.is_empty() {
            None
        } else {
            Some(parse(&body, |c| {
                Ok(Standardizer {
                    mean: read_f64s(c)?,
                    std: read_f64s(c)?,
                })
            })?)
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            bank,
            surrogate,
            standardizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
