//! Bit-packed binary hypervectors and bundling accumulators.
//!
//! A [`Hypervector`] stores one bit per component: bit set ↔ bipolar `+1`,
//! bit clear ↔ bipolar `-1`. Component `i` lives in bit `i % 64` of word
//! `i / 64` (little-endian bit order). Pad bits past `dim` in the last word
//! are always zero, so whole-word XOR/popcount never needs masking.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{dim_mismatch, invalid, Error, Result};

/// Bits per storage word.
pub const WORD_BITS: usize = u64::BITS as usize;

/// Number of words needed for `dim` bits.
#[inline]
pub const fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

/// A binary (bipolar) hypervector of fixed dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    /// The all-`-1` vector (all bits clear).
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("hypervector dimension must be positive");
        }
        Ok(Self {
            dim,
            words: vec![0; words_for(dim)],
        })
    }

    /// Builds a hypervector from a sequence of `-1`/`+1` values.
    pub fn from_bipolar(values: &[i8]) -> Result<Self> {
        let mut hv = Self::zeros(values.len())?;
        for (i, &v) in values.iter().enumerate() {
            match v {
                1 => hv.words[i / WORD_BITS] |= 1 << (i % WORD_BITS),
                -1 => {}
                other => return invalid(format!("non-bipolar value {other} at index {i}")),
            }
        }
        Ok(hv)
    }

    /// Builds a hypervector from one boolean per component.
    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self> {
        let mut words = Vec::new();
        let mut dim = 0;
        for b in bits {
            if dim % WORD_BITS == 0 {
                words.push(0);
            }
            if b {
                *words.last_mut().unwrap() |= 1 << (dim % WORD_BITS);
            }
            dim += 1;
        }
        if dim == 0 {
            return invalid("hypervector dimension must be positive");
        }
        Ok(Self { dim, words })
    }

    /// Wraps raw words, validating length and pad bits.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return invalid("hypervector dimension must be positive");
        }
        if words.len() != words_for(dim) {
            return invalid(format!(
                "{} words cannot hold exactly {dim} bits",
                words.len()
            ));
        }
        let hv = Self { dim, words };
        if !hv.pad_bits_clear() {
            return invalid("pad bits beyond dimension must be zero");
        }
        Ok(hv)
    }

    /// Uniformly random hypervector.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let mut hv = Self::zeros(dim)?;
        for w in &mut hv.words {
            *w = rng.random();
        }
        hv.clear_pad();
        Ok(hv)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Component `i` as a bit (`true` ↔ `+1`).
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.dim, "bit index {i} out of range for dim {}", self.dim);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    /// Component `i` in the bipolar domain.
    #[inline]
    pub fn bipolar(&self, i: usize) -> i8 {
        if self.bit(i) {
            1
        } else {
            -1
        }
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        (0..self.dim).map(|i| self.bipolar(i)).collect()
    }

    /// Flips every component.
    pub fn complement(&self) -> Self {
        let mut out = Self {
            dim: self.dim,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.clear_pad();
        out
    }

    /// Number of `+1` components.
    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Number of components where `self` and `other` differ.
    pub fn hamming(&self, other: &Self) -> Result<u32> {
        if self.dim != other.dim {
            return dim_mismatch("hamming", self.dim, other.dim);
        }
        Ok(hamming_words(&self.words, &other.words))
    }

    /// True when every pad bit past `dim` is zero.
    pub fn pad_bits_clear(&self) -> bool {
        match self.dim % WORD_BITS {
            0 => true,
            used => self.words.last().is_some_and(|w| w >> used == 0),
        }
    }

    fn clear_pad(&mut self) {
        let used = self.dim % WORD_BITS;
        if used != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << used) - 1;
            }
        }
    }

    /// Writes the 4-byte little-endian dimension followed by the packed words.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        let dim = u32::try_from(self.dim)
            .map_err(|_| Error::Validation("dimension exceeds u32".into()))?;
        w.write_all(&dim.to_le_bytes())?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        if dim == 0 {
            return Err(Error::Format {
                what: "hypervector",
                reason: "zero dimension".into(),
            });
        }
        let mut words = Vec::with_capacity(words_for(dim));
        let mut b8 = [0u8; 8];
        for _ in 0..words_for(dim) {
            r.read_exact(&mut b8)?;
            words.push(u64::from_le_bytes(b8));
        }
        Self::from_words(dim, words).map_err(|e| Error::Format {
            what: "hypervector",
            reason: e.to_string(),
        })
    }
}

/// Popcount of word-wise XOR. Slices must have equal length.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Per-component running sums of bundled hypervectors, in the bipolar domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccumulatorVector {
    counts: Vec<i32>,
    bundled: u32,
}

impl AccumulatorVector {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("accumulator dimension must be positive");
        }
        Ok(Self {
            counts: vec![0; dim],
            bundled: 0,
        })
    }

    /// Rebuilds an accumulator from stored counts.
    pub fn from_counts(counts: Vec<i32>, bundled: u32) -> Result<Self> {
        if counts.is_empty() {
            return invalid("accumulator dimension must be positive");
        }
        Ok(Self { counts, bundled })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn counts(&self) -> &[i32] {
        &self.counts
    }

    /// How many hypervectors were bundled with [`accumulate`](Self::accumulate).
    pub fn bundled(&self) -> u32 {
        self.bundled
    }

    /// Adds `bipolar(h)` componentwise.
    pub fn accumulate(&mut self, h: &Hypervector) -> Result<()> {
        self.add_scaled(h, 1)?;
        self.bundled += 1;
        Ok(())
    }

    /// Adds `weight · bipolar(h)` componentwise. Does not change the bundle count.
    pub fn add_scaled(&mut self, h: &Hypervector, weight: i32) -> Result<()> {
        if h.dim() != self.dim() {
            return dim_mismatch("accumulate", self.dim(), h.dim());
        }
        for (w, chunk) in h.words().iter().zip(self.counts.chunks_mut(WORD_BITS)) {
            for (bit, c) in chunk.iter_mut().enumerate() {
                if (w >> bit) & 1 == 1 {
                    *c += weight;
                } else {
                    *c -= weight;
                }
            }
        }
        Ok(())
    }

    /// Componentwise sum of two partial accumulators.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dim() != self.dim() {
            return dim_mismatch("merge", self.dim(), other.dim());
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.bundled += other.bundled;
        Ok(())
    }

    /// Sign binarization with `sgn(0) = +1`.
    pub fn binarize(&self) -> Hypervector {
        Hypervector::from_bits(self.counts.iter().map(|&c| c >= 0))
            .expect("accumulator dimension is positive")
    }
}
