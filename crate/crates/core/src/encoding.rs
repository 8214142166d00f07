//! Projection matrices and the encoder.
//!
//! A feature vector `f` of length `d` is projected through a `d × hyper_d`
//! bipolar matrix and the result is binarized immediately:
//! bit `j` of the hypervector is `Σᵢ f[i]·P[i][j] ≥ 0`.
//!
//! The matrix is either random (the classic HDC encoder) or the sign of a
//! trained MLP hidden layer.

use std::fmt;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{dim_mismatch, invalid, Error, Result};
use crate::hypervec::{words_for, Hypervector, WORD_BITS};
use crate::linalg::Matrix;
use crate::seed;

/// Where a projection matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Random,
    MlpLearned,
}

impl Origin {
    fn tag(self) -> u8 {
        match self {
            Origin::Random => 0,
            Origin::MlpLearned => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Origin::Random),
            1 => Some(Origin::MlpLearned),
            _ => None,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Random => "random",
            Origin::MlpLearned => "mlp-learned",
        })
    }
}

/// A `d × hyper_d` matrix with entries in `{-1, +1}`.
///
/// Entries are stored bit-packed per output column (bit set ↔ `+1`). A dense
/// row-major copy of the signs is kept alongside for the encoder's inner
/// loop.
#[derive(Clone, Debug)]
pub struct ProjectionMatrix {
    d: usize,
    hyper_d: usize,
    origin: Origin,
    columns: Vec<u64>,
    signs: Vec<f64>,
}

impl PartialEq for ProjectionMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d
            && self.hyper_d == other.hyper_d
            && self.origin == other.origin
            && self.columns == other.columns
    }
}

impl ProjectionMatrix {
    fn from_fn(
        d: usize,
        hyper_d: usize,
        origin: Origin,
        mut positive: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        if d == 0 || hyper_d == 0 {
            return invalid(format!(
                "projection dimensions must be positive (d={d}, hyper_d={hyper_d})"
            ));
        }
        let wpc = words_for(d);
        let mut columns = vec![0u64; wpc * hyper_d];
        let mut signs = vec![-1.0; d * hyper_d];
        for i in 0..d {
            for j in 0..hyper_d {
                if positive(i, j) {
                    columns[j * wpc + i / WORD_BITS] |= 1 << (i % WORD_BITS);
                    signs[i * hyper_d + j] = 1.0;
                }
            }
        }
        Ok(Self {
            d,
            hyper_d,
            origin,
            columns,
            signs,
        })
    }

    /// I.i.d. uniform `±1` entries from a seeded generator.
    pub fn random(d: usize, hyper_d: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed, &[seed::tag("projection")]);
        // Drawn row by row so the matrix for a given seed does not depend on
        // the storage layout.
        Self::from_fn(d, hyper_d, Origin::Random, |_, _| rng.random::<bool>())
    }

    /// Sign of a trained hidden-layer weight matrix (`d × hyper_d`), with
    /// `sgn(0) = +1`.
    pub fn from_mlp_hidden(weights: &Matrix) -> Result<Self> {
        if !weights.is_finite() {
            return invalid("hidden weights must be finite");
        }
        Self::from_fn(weights.rows(), weights.cols(), Origin::MlpLearned, |i, j| {
            weights.get(i, j) >= 0.0
        })
    }

    /// Builds a matrix from explicit `±1` rows.
    pub fn from_bipolar_rows(rows: &[Vec<i8>], origin: Origin) -> Result<Self> {
        let d = rows.len();
        let hyper_d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != hyper_d) {
            return invalid("ragged projection rows");
        }
        if rows.iter().flatten().any(|&v| v != 1 && v != -1) {
            return invalid("projection entries must be -1 or +1");
        }
        Self::from_fn(d, hyper_d, origin, |i, j| rows[i][j] == 1)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn hyper_d(&self) -> usize {
        self.hyper_d
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    /// Entry `(i, j)` as `-1` or `+1`.
    pub fn entry(&self, i: usize, j: usize) -> i8 {
        assert!(i < self.d && j < self.hyper_d);
        let w = self.columns[j * words_for(self.d) + i / WORD_BITS];
        if (w >> (i % WORD_BITS)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// Column `j` as a hypervector of dimension `d`.
    pub fn column(&self, j: usize) -> Hypervector {
        let wpc = words_for(self.d);
        Hypervector::from_words(self.d, self.columns[j * wpc..(j + 1) * wpc].to_vec())
            .expect("column storage keeps pad bits clear")
    }

    /// Fraction of `+1` entries.
    pub fn positive_fraction(&self) -> f64 {
        let ones: u64 = self.columns.iter().map(|w| w.count_ones() as u64).sum();
        ones as f64 / (self.d * self.hyper_d) as f64
    }

    fn check_input(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.d {
            return dim_mismatch("encode", self.d, f.len());
        }
        if f.iter().any(|v| !v.is_finite()) {
            return invalid("feature vector contains a non-finite value");
        }
        Ok(())
    }

    /// The real-valued projection `Pᵀ f` before binarization.
    ///
    /// Every output sums its terms in ascending feature order.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_input(f)?;
        let mut raw = vec![0.0; self.hyper_d];
        for (x, row) in f.iter().zip(self.signs.chunks_exact(self.hyper_d)) {
            for (r, s) in raw.iter_mut().zip(row) {
                *r += x * s;
            }
        }
        Ok(raw)
    }

    /// Encodes `f` into a hypervector: bit `j` is set iff `(Pᵀ f)[j] ≥ 0`.
    pub fn encode(&self, f: &[f64]) -> Result<Hypervector> {
        let raw = self.project(f)?;
        Ok(Hypervector::from_bits(raw.iter().map(|&v| v >= 0.0)).expect("hyper_d is positive"))
    }

    /// Writes `d`, `hyper_d` (u32 LE), the origin tag byte, then each column's
    /// packed words (u64 LE) in column order.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&(self.hyper_d as u32).to_le_bytes())?;
        w.write_all(&[self.origin.tag()])?;
        for word in &self.columns {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "projection matrix",
            reason,
        };
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let hyper_d = u32::from_le_bytes(b4) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let origin = Origin::from_tag(tag[0]).ok_or_else(|| bad(format!("origin tag {}", tag[0])))?;
        if d == 0 || hyper_d == 0 {
            return Err(bad("zero dimension".into()));
        }
        let wpc = words_for(d);
        let mut columns = Vec::with_capacity(wpc * hyper_d);
        let mut b8 = [0u8; 8];
        for _ in 0..wpc * hyper_d {
            r.read_exact(&mut b8)?;
            columns.push(u64::from_le_bytes(b8));
        }
        let bit = |i: usize, j: usize| (columns[j * wpc + i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1;
        let m = Self::from_fn(d, hyper_d, origin, bit)?;
        if m.columns != columns {
            return Err(bad("pad bits set in column storage".into()));
        }
        Ok(m)
    }
}
