//! Effective tail bounds for the strong law of large numbers, and the
//! threshold schedules that turn them into measure-bounded test plans.
//!
//! For independent variables with variances `sigma_k^2`, the Kolmogorov
//! maximal inequality yields the computable bound
//!
//! ```text
//!   P( sup_{k>=M} |mean_k - mu| > eps )
//!       <= (4/eps^2) * [ M^-2 * sum_{k<=M} sigma_k^2  +  D_{M+1} ]
//! ```
//!
//! with `D_{M+1} = sum_{k>M} sigma_k^2 / k^2`. Infinite tails are handled by
//! interval arithmetic: for a constant variance the tail lies in
//! `[sigma^2/(M+1), sigma^2/M]` (integral bounds), and the upper end is used
//! wherever a valid bound is required. `find_m` searches powers of two for
//! the smallest `M` that pushes the bound below a `2^-(n+l)` measure target,
//! and `build_test_plan` tabulates one row per precision level `l`.

use thiserror::Error;

use crate::accum::{pow_int, CompensatedSum};
use crate::bitsource::BitStream;
use crate::moments::{scaled_block_moment, MomentError};
use crate::sampling::{BlockScheme, SampleError, SchemeError};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("epsilon must be positive, got {eps}")]
    NonPositiveEps { eps: f64 },
    #[error("no M <= 2^63 meets the measure target at level n={n}, l={l}")]
    GiveUp { n: u32, l: u32 },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

impl From<SchemeError> for TraceError {
    fn from(e: SchemeError) -> Self {
        TraceError::Sample(SampleError::Scheme(e))
    }
}

/// Variance sequence `sigma_k^2`: either a constant value for all `k`, or an
/// explicit finite table (zero beyond the table).
#[derive(Clone, Debug, PartialEq)]
pub enum VarianceSpec {
    Constant { sigma2: f64 },
    Table { sigma2s: Vec<f64> },
}

impl VarianceSpec {
    pub fn constant(sigma2: f64) -> Self {
        assert!(sigma2 >= 0.0, "variances are non-negative");
        VarianceSpec::Constant { sigma2 }
    }

    pub fn table(sigma2s: Vec<f64>) -> Self {
        assert!(
            sigma2s.iter().all(|&v| v >= 0.0),
            "variances are non-negative"
        );
        VarianceSpec::Table { sigma2s }
    }

    /// `sum_{k<=M} sigma_k^2`.
    fn head_sum(&self, m: u64) -> f64 {
        match self {
            VarianceSpec::Constant { sigma2 } => sigma2 * m as f64,
            VarianceSpec::Table { sigma2s } => {
                let mut sum = CompensatedSum::new();
                for &v in sigma2s.iter().take(m as usize) {
                    sum.add(v);
                }
                sum.value()
            }
        }
    }

    /// Interval enclosing `D_{M+1} = sum_{k>M} sigma_k^2 / k^2`.
    ///
    /// Constant kind: integral bounds `[sigma^2/(M+1), sigma^2/M]`.
    /// Table kind: the sum is finite, so the interval is a point.
    pub fn tail_interval(&self, m: u64) -> (f64, f64) {
        match self {
            VarianceSpec::Constant { sigma2 } => {
                if *sigma2 == 0.0 {
                    (0.0, 0.0)
                } else {
                    (sigma2 / (m + 1) as f64, sigma2 / m as f64)
                }
            }
            VarianceSpec::Table { sigma2s } => {
                let mut sum = CompensatedSum::new();
                for (i, &v) in sigma2s.iter().enumerate().skip(m as usize) {
                    let k = (i + 1) as f64;
                    sum.add(v / (k * k));
                }
                let v = sum.value();
                (v, v)
            }
        }
    }
}

/// Upper bound on `P(sup_{k>=M} |mean_k - mu| > eps)`: the `4/eps^2` bracket
/// evaluated with the upper end of the tail interval.
pub fn tail_bound(spec: &VarianceSpec, eps: f64, m: u64) -> Result<f64, BoundsError> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(BoundsError::NonPositiveEps { eps });
    }
    debug_assert!(m >= 1);
    let head_over_m2 = match spec {
        // sigma^2 * M / M^2, simplified to avoid the extreme-M rounding
        VarianceSpec::Constant { sigma2 } => sigma2 / m as f64,
        VarianceSpec::Table { .. } => {
            let mf = m as f64;
            spec.head_sum(m) / (mf * mf)
        }
    };
    let (_, tail_upper) = spec.tail_interval(m);
    Ok(4.0 / (eps * eps) * (head_over_m2 + tail_upper))
}

/// Smallest power-of-two `M` with
/// `tail_bound(spec, 2^-l, M) < 2^-(n+l)`. Powers of two keep the output
/// platform-stable; only existence of some computable threshold matters.
pub fn find_m(spec: &VarianceSpec, n: u32, l: u32) -> Result<u64, BoundsError> {
    debug_assert!(n >= 1 && l >= 1);
    let eps = pow_int(2.0, l).recip();
    let target = pow_int(2.0, n + l).recip();
    let mut m = 1u64;
    loop {
        if tail_bound(spec, eps, m)? < target {
            return Ok(m);
        }
        match m.checked_mul(2) {
            Some(next) => m = next,
            None => return Err(BoundsError::GiveUp { n, l }),
        }
    }
}

/// One precision level of a test plan.
#[derive(Clone, Copy, Debug)]
pub struct TestPlanRow {
    pub l: u32,
    /// `2^-l`.
    pub eps: f64,
    /// Threshold index from [`find_m`].
    pub m: u64,
    /// Bound value at `(eps, m)`; always below `threshold`.
    pub bound: f64,
    /// Measure target `2^-(n+l)`.
    pub threshold: f64,
}

/// Rows `l = 1..=l_max` at test level `n`, plus the measure of the omitted
/// tail. Row measures and the truncation sum to exactly `2^-n`.
#[derive(Clone, Debug)]
pub struct TestPlan {
    pub level: u32,
    pub rows: Vec<TestPlanRow>,
    /// `2^-(n+l_max)`, bounding everything past `l_max`.
    pub truncation: f64,
}

pub fn build_test_plan(
    spec: &VarianceSpec,
    n: u32,
    l_max: u32,
) -> Result<TestPlan, BoundsError> {
    debug_assert!(l_max >= 1);
    let mut rows = Vec::with_capacity(l_max as usize);
    for l in 1..=l_max {
        let eps = pow_int(2.0, l).recip();
        let m = find_m(spec, n, l)?;
        rows.push(TestPlanRow {
            l,
            eps,
            m,
            bound: tail_bound(spec, eps, m)?,
            threshold: pow_int(2.0, n + l).recip(),
        });
    }
    Ok(TestPlan {
        level: n,
        rows,
        truncation: pow_int(2.0, n + l_max).recip(),
    })
}

/// One emission point of a centered-average trace.
#[derive(Clone, Copy, Debug)]
pub struct TracePoint {
    pub k: u64,
    /// `mean of X_i^m  -  mean of exact E[X_i^m]`, for `i <= k`.
    pub deviation: f64,
}

/// Running centered averages of `X_k^m` along a sample run, emitted at
/// powers of two and at `k_max`. The per-block means are the exact scaled
/// moments for each block size, so a sufficiently random stream drives the
/// deviation to zero.
pub fn centered_average_trace(
    stream: &mut BitStream,
    scheme: BlockScheme,
    m: u32,
    k_max: u64,
) -> Result<Vec<TracePoint>, TraceError> {
    debug_assert!(k_max >= 1);
    let mut sample_sum = CompensatedSum::new();
    let mut mean_sum = CompensatedSum::new();
    let mut points = Vec::new();
    // fixed schemes reuse one exact moment; growing schemes recompute per k
    let mut cached: Option<(u64, f64)> = None;
    for k in 1..=k_max {
        let size = scheme.block_size(k)?;
        let sum = stream
            .popcount_block(size)
            .map_err(|source| SampleError::Exhausted { k, source })?;
        let x = (2 * sum as i64 - size as i64) as f64 / (size as f64).sqrt();
        sample_sum.add(pow_int(x, m));
        let mu = match cached {
            Some((n, mu)) if n == size => mu,
            _ => {
                let mu = scaled_block_moment(size, m)?;
                cached = Some((size, mu));
                mu
            }
        };
        mean_sum.add(mu);
        if k.is_power_of_two() || k == k_max {
            points.push(TracePoint {
                k,
                deviation: (sample_sum.value() - mean_sum.value()) / k as f64,
            });
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitsource::SourceSpec;

    const UNIT: VarianceSpec = VarianceSpec::Constant { sigma2: 1.0 };

    #[test]
    fn tail_bound_closed_form_arithmetic() {
        // 4/eps^2 * (sigma^2/M + sigma^2/M) with sigma^2=1, eps=0.1, M=1000
        let bound = tail_bound(&UNIT, 0.1, 1000).unwrap();
        assert!((bound - 0.8).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_variances_bound_to_zero() {
        let zero = VarianceSpec::constant(0.0);
        for m in [1u64, 10, 1 << 20] {
            assert_eq!(tail_bound(&zero, 0.25, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn bound_is_monotone_in_m() {
        let mut previous = f64::INFINITY;
        for m in [10u64, 100, 1000, 10_000] {
            let b = tail_bound(&UNIT, 0.5, m).unwrap();
            assert!(b <= previous);
            previous = b;
        }
    }

    #[test]
    fn eps_scaling_is_exact() {
        for spec in [
            UNIT,
            VarianceSpec::constant(2.5),
            VarianceSpec::table(vec![1.0, 0.5, 2.0, 0.25]),
        ] {
            for m in [1u64, 7, 64, 5000] {
                for eps in [0.1f64, 0.25, 1.0, 1.7] {
                    let fine = tail_bound(&spec, eps, m).unwrap();
                    let coarse = tail_bound(&spec, 2.0 * eps, m).unwrap();
                    assert!(
                        (fine - 4.0 * coarse).abs() <= 1e-12 * fine.abs().max(1e-300),
                        "spec {spec:?} m={m} eps={eps}"
                    );
                }
            }
        }
    }

    #[test]
    fn non_positive_eps_is_a_domain_error() {
        assert!(matches!(
            tail_bound(&UNIT, 0.0, 10),
            Err(BoundsError::NonPositiveEps { .. })
        ));
        assert!(matches!(
            tail_bound(&UNIT, -0.5, 10),
            Err(BoundsError::NonPositiveEps { .. })
        ));
    }

    #[test]
    fn table_tail_is_the_exact_finite_sum() {
        let spec = VarianceSpec::table(vec![1.0, 2.0, 3.0]);
        let (lo, hi) = spec.tail_interval(1);
        let want = 2.0 / 4.0 + 3.0 / 9.0;
        assert_eq!(lo, hi);
        assert!((hi - want).abs() <= 1e-15);
        // beyond the table the tail vanishes
        assert_eq!(spec.tail_interval(3), (0.0, 0.0));
    }

    #[test]
    fn find_m_examples() {
        assert_eq!(find_m(&UNIT, 1, 1).unwrap(), 256);
        assert_eq!(find_m(&VarianceSpec::constant(0.0), 1, 1).unwrap(), 1);
        assert!(find_m(&UNIT, 1, 2).unwrap() > find_m(&UNIT, 1, 1).unwrap());
    }

    #[test]
    fn find_m_monotone_in_level() {
        for l in 1..=4u32 {
            for n in 1..=3u32 {
                assert!(find_m(&UNIT, n + 1, l).unwrap() >= find_m(&UNIT, n, l).unwrap());
            }
        }
    }

    #[test]
    fn test_plan_degenerate() {
        let plan = build_test_plan(&VarianceSpec::constant(0.0), 3, 1).unwrap();
        assert_eq!(plan.rows.len(), 1);
        let row = &plan.rows[0];
        assert_eq!((row.l, row.eps, row.m, row.bound), (1, 0.5, 1, 0.0));
        assert_eq!(plan.truncation, 0.0625);
    }

    #[test]
    fn test_plan_rows_meet_their_thresholds() {
        let plan = build_test_plan(&UNIT, 1, 3).unwrap();
        assert_eq!(plan.rows.len(), 3);
        let mut last_m = 0;
        for row in &plan.rows {
            assert!(row.bound < row.threshold);
            assert!(row.m > last_m, "thresholds should grow with l");
            last_m = row.m;
        }
    }

    #[test]
    fn plan_measures_telescope_to_the_level() {
        for n in 1..=4u32 {
            for l_max in 1..=6u32 {
                let plan = build_test_plan(&VarianceSpec::constant(0.5), n, l_max).unwrap();
                let total: f64 =
                    plan.rows.iter().map(|r| r.threshold).sum::<f64>() + plan.truncation;
                assert_eq!(total, pow_int(2.0, n).recip());
            }
        }
    }

    #[test]
    fn trace_constant_ones_hand_value() {
        let mut stream = BitStream::open(SourceSpec::Constant { bit: true }).unwrap();
        let points =
            centered_average_trace(&mut stream, BlockScheme::Triangular, 1, 4).unwrap();
        let last = points.last().unwrap();
        assert_eq!(last.k, 4);
        let want = (1.0 + 2f64.sqrt() + 3f64.sqrt() + 2.0) / 4.0;
        assert!((last.deviation - want).abs() <= 1e-15);
        // the sanity envelope: averages never exceed the largest sample
        for p in &points {
            assert!(p.deviation.abs() <= 2.0);
        }
    }

    #[test]
    fn trace_emits_log_spaced_checkpoints() {
        let mut stream = BitStream::open(SourceSpec::Prng { seed: 1 }).unwrap();
        let points =
            centered_average_trace(&mut stream, BlockScheme::Fixed { n: 8 }, 2, 100).unwrap();
        let ks: Vec<u64> = points.iter().map(|p| p.k).collect();
        assert_eq!(ks, vec![1, 2, 4, 8, 16, 32, 64, 100]);
    }

    #[test]
    fn trace_second_moment_concentrates_on_prng() {
        let mut stream = BitStream::open(SourceSpec::Prng { seed: 23 }).unwrap();
        let points =
            centered_average_trace(&mut stream, BlockScheme::Triangular, 2, 100_000).unwrap();
        let last = points.last().unwrap();
        // Var(X^2) ~ 2 at large blocks: 4-sigma margin is ~0.018
        assert!(last.deviation.abs() < 0.02, "deviation {}", last.deviation);
    }
}
