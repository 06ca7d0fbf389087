//! Deterministic uniform and low-discrepancy streams over [0,1).
//!
//! All three kinds are indexable: the i-th value is a pure function of the
//! configuration and i, so streams replay exactly and can be split into
//! disjoint strided children that different workers may advance
//! independently.
//!
//! * `PseudoRandom` is a counter-based SplitMix64: output i is
//!   `mix64(seed + (i+1) * 0x9E3779B97F4A7C15)` mapped to [0,1) with 53
//!   mantissa bits. Same seed, same sequence, on any platform.
//! * `Sobol1D` is the one-dimensional Sobol sequence with identity
//!   direction numbers, i.e. van der Corput base 2 in Gray-code order.
//! * `Halton` is the radical inverse in a given (prime) base.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Indices are capped so every value keeps full mantissa resolution.
pub const MAX_INDEX: u64 = 1 << 52;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream exhausted: index {0} exceeds 2^52")]
    Exhausted(u64),
    #[error("cannot split a stream into 0 children")]
    EmptySplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamKind {
    PseudoRandom { seed: u64 },
    Sobol1d { start_index: u64 },
    Halton { base: u32, start_index: u64 },
}

/// A single-owner cursor over one of the deterministic sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformStream {
    kind: StreamKind,
    offset: u64,
    stride: u64,
    cursor: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Radical inverse of `index` in base 2 via bit reversal.
#[inline]
fn van_der_corput2(index: u64) -> f64 {
    (index.reverse_bits() >> 12) as f64 * (1.0 / (1u64 << 52) as f64)
}

/// Radical inverse of `index` in an arbitrary base.
fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut value = 0.0;
    let mut scale = inv;
    while index > 0 {
        value += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

impl UniformStream {
    pub fn new(kind: StreamKind) -> Self {
        let offset = match kind {
            StreamKind::PseudoRandom { .. } => 0,
            StreamKind::Sobol1d { start_index } => start_index,
            StreamKind::Halton { start_index, .. } => start_index,
        };
        Self {
            kind,
            offset,
            stride: 1,
            cursor: 0,
        }
    }

    pub fn pseudo(seed: u64) -> Self {
        Self::new(StreamKind::PseudoRandom { seed })
    }

    /// Sobol/van-der-Corput stream starting at index 1 (index 0 maps to 0.0).
    pub fn sobol() -> Self {
        Self::new(StreamKind::Sobol1d { start_index: 1 })
    }

    pub fn halton(base: u32) -> Self {
        Self::new(StreamKind::Halton {
            base,
            start_index: 1,
        })
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    /// Value at absolute sequence index, independent of the cursor.
    #[inline]
    fn value_at(&self, index: u64) -> f64 {
        match self.kind {
            StreamKind::PseudoRandom { seed } => {
                to_unit(mix64(seed.wrapping_add((index + 1).wrapping_mul(GOLDEN))))
            }
            StreamKind::Sobol1d { .. } => {
                let gray = index ^ (index >> 1);
                van_der_corput2(gray)
            }
            StreamKind::Halton { base, .. } => {
                if base == 2 {
                    van_der_corput2(index)
                } else {
                    radical_inverse(base as u64, index)
                }
            }
        }
    }

    #[inline]
    fn index_of(&self, cursor: u64) -> Result<u64, StreamError> {
        let idx = self
            .offset
            .checked_add(cursor.checked_mul(self.stride).ok_or(StreamError::Exhausted(u64::MAX))?)
            .ok_or(StreamError::Exhausted(u64::MAX))?;
        if idx > MAX_INDEX {
            return Err(StreamError::Exhausted(idx));
        }
        Ok(idx)
    }

    /// Next value in [0,1); advances the cursor.
    pub fn next_value(&mut self) -> Result<f64, StreamError> {
        let idx = self.index_of(self.cursor)?;
        self.cursor += 1;
        Ok(self.value_at(idx))
    }

    /// Advances the cursor past `n` values without computing them.
    /// Equivalent to discarding `n` calls to [`Self::next_value`].
    pub fn advance(&mut self, n: u64) -> Result<(), StreamError> {
        if n > 0 {
            self.index_of(self.cursor + n - 1)?;
        }
        self.cursor += n;
        Ok(())
    }

    /// Checks the whole block up-front, then yields `n` values without
    /// per-value error handling. Used by the samplers' hot loops.
    pub fn next_block(&mut self, n: u64) -> Result<BlockIter<'_>, StreamError> {
        if n > 0 {
            self.index_of(self.cursor + n - 1)?;
        }
        let start = self.cursor;
        self.cursor += n;
        Ok(BlockIter {
            stream: self,
            cursor: start,
            remaining: n,
        })
    }

    /// Splits off `n` disjoint children covering the remainder of this
    /// stream by strided interleaving: child j gets positions j, j+n,
    /// j+2n, ... of the parent's remaining sequence.
    pub fn split(&self, n: usize) -> Result<Vec<UniformStream>, StreamError> {
        if n == 0 {
            return Err(StreamError::EmptySplit);
        }
        Ok((0..n as u64)
            .map(|j| UniformStream {
                kind: self.kind,
                offset: self.offset + (self.cursor + j) * self.stride,
                stride: self.stride * n as u64,
                cursor: 0,
            })
            .collect())
    }
}

pub struct BlockIter<'a> {
    stream: &'a UniformStream,
    cursor: u64,
    remaining: u64,
}

impl Iterator for BlockIter<'_> {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        if self.remaining == 0 {
            return None;
        }
        let idx = self.stream.offset + self.cursor * self.stream.stride;
        self.cursor += 1;
        self.remaining -= 1;
        Some(self.stream.value_at(idx))
    }
}
