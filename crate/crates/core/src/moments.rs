//! Moments: normal-distribution targets, exact Rademacher-sum moments via the
//! partition/multinomial expansion, a brute-force enumeration oracle, and
//! streaming empirical moments of the sample powers.
//!
//! For a sum `S_n` of `n` independent +-1 signs, `E[S_n^m]` is an exact
//! integer: zero for odd `m`, and for even `m` a sum over the partitions
//! `p = (k_1 >= ... >= k_l)` of `m/2` of
//!
//! ```text
//!   multinomial(m; 2k_1, ..., 2k_l) * placements(p, n)
//! ```
//!
//! where `placements(p, n) = n! / ((n-l)! * prod_j mult_j!)` counts the ways
//! to assign the parts to `n` ordered slots. The closed formula is validated
//! against [`brute_force_moment`], which enumerates all `2^n` sign vectors;
//! the enumeration, not the formula, is the ground truth.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::accum::{pow_int, CompensatedSum};
use crate::sampling::{Sample, SampleSink};

/// Highest moment order supported by the exact calculators.
pub const MAX_MOMENT: u32 = 16;
/// Largest block size for the exact partition-formula moment.
pub const MAX_EXACT_BLOCK: u64 = 1_000_000;
/// Largest block size for the `2^n` enumeration oracle.
pub const MAX_BRUTE_BLOCK: u64 = 20;
/// Default highest power tracked by a streaming [`MomentTable`].
pub const DEFAULT_M_MAX: u32 = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MomentError {
    #[error("moment order {m} out of range (max {max})")]
    OrderOutOfRange { m: u32, max: u32 },
    #[error("block size {n} out of range [1, {max}]")]
    BlockOutOfRange { n: u64, max: u64 },
    #[error("empirical moment queried before any samples were observed")]
    NoSamples,
}

/// `m`-th moment of the standard normal distribution: `(m-1)!!` for even `m`,
/// `0` for odd `m`, `1` for `m = 0`.
pub fn normal_moment(m: u32) -> f64 {
    if !m.is_multiple_of(2) {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut factor = m.saturating_sub(1);
    while factor > 1 {
        acc *= factor as f64;
        factor -= 2;
    }
    acc
}

/// Integer partition in non-increasing part order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    parts: Vec<u64>,
}

impl Partition {
    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    /// Number of parts, `l`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `(part value, multiplicity)` for each distinct part value.
    pub fn multiplicities(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for &p in &self.parts {
            match out.last_mut() {
                Some((value, count)) if *value == p => *count += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }
}

/// All partitions of `target`, parts non-increasing, in lexicographically
/// decreasing order starting from the single-part partition.
pub fn partitions(target: u64) -> Vec<Partition> {
    fn recurse(remaining: u64, max_part: u64, stack: &mut Vec<u64>, out: &mut Vec<Partition>) {
        if remaining == 0 {
            out.push(Partition {
                parts: stack.clone(),
            });
            return;
        }
        let mut part = max_part.min(remaining);
        while part >= 1 {
            stack.push(part);
            recurse(remaining - part, part, stack, out);
            stack.pop();
            part -= 1;
        }
    }
    let mut out = Vec::new();
    recurse(target, target, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: u64) -> BigUint {
    (1..=n).map(BigUint::from).product()
}

fn falling_factorial(n: u64, l: u64) -> BigUint {
    (0..l).map(|i| BigUint::from(n - i)).product()
}

/// `n choose l` as an exact integer.
pub fn binomial(n: u64, l: u64) -> BigUint {
    if l > n {
        return BigUint::zero();
    }
    falling_factorial(n, l) / factorial(l)
}

/// One partition's contribution to `E[S_n^m]`.
#[derive(Clone, Debug)]
pub struct PartitionTerm {
    /// Partition `p` of `m/2`; the doubled parts `2p` partition `m`.
    pub partition: Partition,
    /// `multinomial(m; 2k_1, ..., 2k_l)`.
    pub multinomial: BigUint,
    /// Placements of the parts into `n` ordered slots,
    /// `n! / ((n-l)! * prod mult_j!)`; lies in `[binom(n,l), n^l]`.
    pub placements: BigUint,
}

fn check_exact_range(n: u64, m: u32) -> Result<(), MomentError> {
    if m > MAX_MOMENT {
        return Err(MomentError::OrderOutOfRange { m, max: MAX_MOMENT });
    }
    if n == 0 || n > MAX_EXACT_BLOCK {
        return Err(MomentError::BlockOutOfRange {
            n,
            max: MAX_EXACT_BLOCK,
        });
    }
    Ok(())
}

/// Per-partition terms of the even-moment expansion (`m` even, `m >= 2`).
pub fn rademacher_moment_terms(n: u64, m: u32) -> Result<Vec<PartitionTerm>, MomentError> {
    check_exact_range(n, m)?;
    assert!(m >= 2 && m.is_multiple_of(2), "terms exist only for even m >= 2");
    let m_fact = factorial(u64::from(m));
    let mut terms = Vec::new();
    for partition in partitions(u64::from(m) / 2) {
        let l = partition.len() as u64;
        if l > n {
            // more parts than slots: no placements
            continue;
        }
        let mut denom = BigUint::one();
        for &part in partition.parts() {
            denom *= factorial(2 * part);
        }
        let multinomial = &m_fact / denom;
        let mut mult_product = BigUint::one();
        for (_, count) in partition.multiplicities() {
            mult_product *= factorial(count);
        }
        let placements = falling_factorial(n, l) / mult_product;
        terms.push(PartitionTerm {
            partition,
            multinomial,
            placements,
        });
    }
    Ok(terms)
}

/// Exact `E[S_n^m]` for a sum of `n` independent +-1 signs, via the
/// partition formula. Zero for odd `m`.
pub fn exact_rademacher_moment(n: u64, m: u32) -> Result<BigInt, MomentError> {
    check_exact_range(n, m)?;
    if m == 0 {
        return Ok(BigInt::one());
    }
    if m % 2 == 1 {
        return Ok(BigInt::zero());
    }
    let total: BigUint = rademacher_moment_terms(n, m)?
        .into_iter()
        .map(|t| t.multinomial * t.placements)
        .sum();
    Ok(total.into())
}

/// Exact `E[S_n^m]` by enumerating all `2^n` sign vectors. Independent of the
/// partition formula; `n <= 20` keeps the enumeration desk-scale.
pub fn brute_force_moment(n: u64, m: u32) -> Result<BigInt, MomentError> {
    if m > MAX_MOMENT {
        return Err(MomentError::OrderOutOfRange { m, max: MAX_MOMENT });
    }
    if n == 0 || n > MAX_BRUTE_BLOCK {
        return Err(MomentError::BlockOutOfRange {
            n,
            max: MAX_BRUTE_BLOCK,
        });
    }
    let mut total: i128 = 0;
    for mask in 0u64..(1u64 << n) {
        let s = i128::from(2 * i64::from(mask.count_ones() as i32) - n as i64);
        let mut power: i128 = 1;
        for _ in 0..m {
            power *= s;
        }
        total += power;
    }
    // the average over all sign vectors is an exact integer
    let divisor = 1i128 << n;
    assert_eq!(total % divisor, 0, "moment sum not divisible by 2^n");
    Ok(BigInt::from(total / divisor))
}

/// `E[X_n^m]` for the scaled block value `X_n = S_n / sqrt(n)`:
/// the exact moment divided by `n^(m/2)`. For even `m` this is
/// `(m-1)!! + O(1/n)`.
pub fn scaled_block_moment(n: u64, m: u32) -> Result<f64, MomentError> {
    check_exact_range(n, m)?;
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let exact = exact_rademacher_moment(n, m)?;
    let numerator = exact.to_f64().expect("moment magnitude fits in f64 range");
    Ok(numerator / pow_int(n as f64, m / 2))
}

/// Streaming accumulator for empirical moments `sum_i X_i^m / k`.
///
/// Powers are formed by square-and-multiply and each running sum is
/// compensated, so the estimates stay within ~1e-12 relative of exact
/// arithmetic over million-sample runs. Tables over disjoint sample ranges
/// merge exactly by summing counts and sums.
#[derive(Clone, Debug)]
pub struct MomentTable {
    m_max: u32,
    count: u64,
    sums: Vec<CompensatedSum>,
}

impl Default for MomentTable {
    fn default() -> Self {
        Self::new(DEFAULT_M_MAX)
    }
}

impl MomentTable {
    pub fn new(m_max: u32) -> Self {
        assert!(m_max >= 1, "track at least the first moment");
        Self {
            m_max,
            count: 0,
            sums: vec![CompensatedSum::new(); m_max as usize],
        }
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn observe(&mut self, x: f64) {
        self.count += 1;
        for m in 1..=self.m_max {
            self.sums[(m - 1) as usize].add(pow_int(x, m));
        }
    }

    /// `(X_1^m + ... + X_k^m) / k`.
    pub fn empirical_moment(&self, m: u32) -> Result<f64, MomentError> {
        if m > self.m_max {
            return Err(MomentError::OrderOutOfRange {
                m,
                max: self.m_max,
            });
        }
        if self.count == 0 {
            return Err(MomentError::NoSamples);
        }
        if m == 0 {
            return Ok(1.0);
        }
        Ok(self.sums[(m - 1) as usize].value() / self.count as f64)
    }

    /// Fold a table for a disjoint sample range into this one.
    pub fn merge(&mut self, other: &MomentTable) {
        assert_eq!(self.m_max, other.m_max, "tables must track the same powers");
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            a.merge(b);
        }
    }
}

impl SampleSink for MomentTable {
    fn observe(&mut self, sample: &Sample) {
        MomentTable::observe(self, sample.value);
    }
}

/// True if `value` differs from `expected` by more than `tol` (helper for
/// report verdicts; treats NaN as a failure).
pub fn exceeds_tolerance(value: f64, expected: f64, tol: f64) -> bool {
    let diff = (value - expected).abs();
    diff.is_nan() || diff > tol
}
