//! Block schemes and the sample stream `X_1, X_2, ...`.
//!
//! A scheme assigns sample `k` a contiguous block of `n(k)` bits; the block
//! sum `s` becomes the sample value `x = (2s - n) / sqrt(n)`. Blocks tile the
//! stream with no gaps or overlaps, so a whole run is a single forward pass.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bitsource::{BitStream, SourceError};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid scheme `{scheme}`: {reason}")]
    Parse { scheme: String, reason: String },
    #[error("block index {k} overflows the bit index range")]
    Overflow { k: u64 },
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("source exhausted at sample {k}: {source}")]
    Exhausted { k: u64, source: SourceError },
}

/// Maps sample index `k` (1-based) to its block of bit indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockScheme {
    /// `n(k) = k`: sample k uses bits `k(k-1)/2 + 1 ..= k(k+1)/2`.
    Triangular,
    /// `n(k) = N` for a fixed `N >= 1`.
    Fixed { n: u64 },
    /// `n(k) = a*k + b` with `a >= 1`, `b >= 0`.
    Affine { a: u64, b: u64 },
}

impl BlockScheme {
    /// Block size `n(k)`.
    pub fn block_size(&self, k: u64) -> Result<u64, SchemeError> {
        debug_assert!(k >= 1);
        match self {
            BlockScheme::Triangular => Ok(k),
            BlockScheme::Fixed { n } => Ok(*n),
            BlockScheme::Affine { a, b } => a
                .checked_mul(k)
                .and_then(|ak| ak.checked_add(*b))
                .ok_or(SchemeError::Overflow { k }),
        }
    }

    /// 1-based index of the first bit of block `k`, and the block size.
    /// Blocks are consecutive and disjoint: `start(k+1) = start(k) + n(k)`,
    /// `start(1) = 1`.
    pub fn block_bounds(&self, k: u64) -> Result<(u64, u64), SchemeError> {
        debug_assert!(k >= 1);
        let overflow = || SchemeError::Overflow { k };
        let size = self.block_size(k)?;
        let start = match self {
            // 1 + sum_{j<k} j = k(k-1)/2 + 1
            BlockScheme::Triangular => half_product(k, k - 1)
                .and_then(|s| s.checked_add(1))
                .ok_or_else(overflow)?,
            BlockScheme::Fixed { n } => (k - 1)
                .checked_mul(*n)
                .and_then(|s| s.checked_add(1))
                .ok_or_else(overflow)?,
            // 1 + sum_{j<k} (a*j + b) = 1 + a*k(k-1)/2 + b*(k-1)
            BlockScheme::Affine { a, b } => half_product(k, k - 1)
                .and_then(|t| t.checked_mul(*a))
                .and_then(|t| t.checked_add(b.checked_mul(k - 1)?))
                .and_then(|t| t.checked_add(1))
                .ok_or_else(overflow)?,
        };
        Ok((start, size))
    }
}

// k*(k-1)/2 without intermediate overflow (one factor is even)
fn half_product(k: u64, km1: u64) -> Option<u64> {
    if k.is_multiple_of(2) {
        (k / 2).checked_mul(km1)
    } else {
        k.checked_mul(km1 / 2)
    }
}

impl fmt::Display for BlockScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockScheme::Triangular => write!(f, "tri"),
            BlockScheme::Fixed { n } => write!(f, "fixed:{n}"),
            BlockScheme::Affine { a, b } => write!(f, "affine:{a}:{b}"),
        }
    }
}

impl FromStr for BlockScheme {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, SchemeError> {
        let invalid = |reason: &str| SchemeError::Parse {
            scheme: s.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = s.split(':');
        match parts.next() {
            Some("tri") => match parts.next() {
                None => Ok(BlockScheme::Triangular),
                Some(_) => Err(invalid("tri takes no parameters")),
            },
            Some("fixed") => {
                let n = parts
                    .next()
                    .ok_or_else(|| invalid("expected fixed:<N>"))?
                    .parse::<u64>()
                    .map_err(|_| invalid("N must be a positive integer"))?;
                if n == 0 {
                    return Err(invalid("N must be >= 1"));
                }
                if parts.next().is_some() {
                    return Err(invalid("expected fixed:<N>"));
                }
                Ok(BlockScheme::Fixed { n })
            }
            Some("affine") => {
                let a = parts
                    .next()
                    .ok_or_else(|| invalid("expected affine:<a>:<b>"))?
                    .parse::<u64>()
                    .map_err(|_| invalid("a must be a positive integer"))?;
                let b = parts
                    .next()
                    .ok_or_else(|| invalid("expected affine:<a>:<b>"))?
                    .parse::<u64>()
                    .map_err(|_| invalid("b must be a non-negative integer"))?;
                if a == 0 {
                    return Err(invalid("a must be >= 1 so block sizes diverge"));
                }
                if parts.next().is_some() {
                    return Err(invalid("expected affine:<a>:<b>"));
                }
                Ok(BlockScheme::Affine { a, b })
            }
            _ => Err(invalid("expected tri, fixed:<N>, or affine:<a>:<b>")),
        }
    }
}

/// One block turned into a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// 1-based sample index.
    pub index: u64,
    /// `(2*block_sum - block_size) / sqrt(block_size)`.
    pub value: f64,
    /// Count of ones in the block.
    pub block_sum: u64,
    /// Bits in the block, `n(k)`.
    pub block_size: u64,
}

impl Sample {
    fn from_block(index: u64, block_sum: u64, block_size: u64) -> Self {
        // 2s - n is exact in i64 for any desk-scale block; the sqrt and the
        // final division are the only roundings.
        let centered = 2 * block_sum as i64 - block_size as i64;
        let value = centered as f64 / (block_size as f64).sqrt();
        Sample {
            index,
            value,
            block_sum,
            block_size,
        }
    }
}

/// Consumer of a sample run; sinks observe every sample exactly once, in order.
pub trait SampleSink {
    fn observe(&mut self, sample: &Sample);
}

impl<T: SampleSink + ?Sized> SampleSink for &mut T {
    fn observe(&mut self, sample: &Sample) {
        (**self).observe(sample);
    }
}

/// Plain collector of sample values, for sorting/CDF work.
#[derive(Clone, Debug, Default)]
pub struct SampleCollector {
    pub values: Vec<f64>,
}

impl SampleSink for SampleCollector {
    fn observe(&mut self, sample: &Sample) {
        self.values.push(sample.value);
    }
}

/// Produce sample `k`; the stream must be positioned at `start(k) - 1`.
pub fn next_sample(
    stream: &mut BitStream,
    scheme: BlockScheme,
    k: u64,
) -> Result<Sample, SampleError> {
    let (start, size) = scheme.block_bounds(k)?;
    debug_assert_eq!(
        stream.position(),
        start - 1,
        "blocks must be consumed in order"
    );
    let sum = stream
        .popcount_block(size)
        .map_err(|source| SampleError::Exhausted { k, source })?;
    Ok(Sample::from_block(k, sum, size))
}

/// Totals of a completed run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunStats {
    pub samples: u64,
    pub bits_consumed: u64,
}

/// Single-pass driver: feed `X_1 ..= X_{k_max}` to every sink.
pub fn sample_run(
    stream: &mut BitStream,
    scheme: BlockScheme,
    k_max: u64,
    sinks: &mut [&mut dyn SampleSink],
) -> Result<RunStats, SampleError> {
    let mut bits = 0u64;
    for k in 1..=k_max {
        let size = scheme.block_size(k)?;
        let sum = stream
            .popcount_block(size)
            .map_err(|source| SampleError::Exhausted { k, source })?;
        let sample = Sample::from_block(k, sum, size);
        for sink in sinks.iter_mut() {
            sink.observe(&sample);
        }
        bits += size;
    }
    Ok(RunStats {
        samples: k_max,
        bits_consumed: bits,
    })
}
