//! The almost-sure CLT estimator and its verification machinery.
//!
//! One bit per step: bit `w_k` becomes the sign `r_k = 2 w_k - 1`, `S_k` is
//! the running sign sum, and `Y_k = S_k / sqrt(k)`. The log-average
//!
//! ```text
//!   (1 / log n) * sum_{k<=n} (1/k) * 1{ Y_k <= x }
//! ```
//!
//! converges to `Phi(x)` along a single sufficiently random path. This module
//! provides that estimator under two equivalent weightings, the checked
//! subsequence construction `n_k = min{ n : log(n+1) >= a^k }`, exact
//! expectations `E f(Y_k)` under the binomial law of `S_k`, the centered
//! statistic `T_n`, and a seed-sweep study of `E[T_n^2]` against its
//! `loglog n / log n` envelope.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::accum::CompensatedSum;
use crate::bitsource::{BitStream, SourceError, SourceSpec};

/// Largest `k` for a single exact binomial expectation (the evaluation is
/// O(k)).
pub const MAX_EXPECTATION_STEPS: u64 = 1_000_000;
/// Minimum seeds for a variance study.
pub const MIN_STUDY_SEEDS: usize = 100;
/// Minimum step count per variance-study checkpoint.
pub const MIN_STUDY_STEPS: u64 = 100;

#[derive(Debug, Error)]
pub enum AscltError {
    #[error("estimator needs n >= 2 steps (log-normalizer degenerates), got {n}")]
    TooFewSteps { n: u64 },
    #[error("subsequence ratio must satisfy 1 < a <= 2, got {a}")]
    RatioOutOfRange { a: f64 },
    #[error("subsequence value n_{k} overflows 64-bit range for a={a}")]
    SubsequenceOverflow { k: u64, a: f64 },
    #[error("binomial expectation step count {k} out of range [1, {max}]")]
    StepsOutOfRange { k: u64, max: u64 },
    #[error("expectation cache holds {have} entries for `{id}`, need {need}")]
    CacheTooShort { id: String, have: u64, need: u64 },
    #[error("expectation cache was built for `{cached}`, not `{requested}`")]
    CacheMismatch { cached: String, requested: String },
    #[error("variance study needs at least {min} seeds, got {got}")]
    InsufficientSeeds { got: usize, min: usize },
    #[error("variance study step counts must be strictly increasing and >= {min}")]
    BadStudyGrid { min: u64 },
    #[error(transparent)]
    Source(#[from] SourceError),
}

/// Weighting of the log-average: `1/k` against `log n`, or
/// `d_k = log(1 + 1/k)` against `D_n = sum d_k` (telescoping to
/// `log(n + 1)`). The two are asymptotically interchangeable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSeq {
    HarmonicOverLog,
    DkOverDn,
}

impl WeightSeq {
    pub fn weight(self, k: u64) -> f64 {
        match self {
            WeightSeq::HarmonicOverLog => 1.0 / k as f64,
            WeightSeq::DkOverDn => (1.0 / k as f64).ln_1p(),
        }
    }
}

impl std::fmt::Display for WeightSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightSeq::HarmonicOverLog => write!(f, "harmonic"),
            WeightSeq::DkOverDn => write!(f, "dk"),
        }
    }
}

impl std::str::FromStr for WeightSeq {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "harmonic" => Ok(WeightSeq::HarmonicOverLog),
            "dk" => Ok(WeightSeq::DkOverDn),
            other => Err(format!("unknown weight sequence `{other}` (expected harmonic or dk)")),
        }
    }
}

/// A bounded Lipschitz test function with its documented constants.
#[derive(Clone)]
pub struct TestFunction {
    id: String,
    bound: f64,
    lipschitz: f64,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl TestFunction {
    pub fn new(
        id: impl Into<String>,
        bound: f64,
        lipschitz: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            bound,
            lipschitz,
            eval: Arc::new(eval),
        }
    }

    /// `clip(x, -1, 1)`: B = 1, L = 1.
    pub fn clip() -> Self {
        Self::new("clip", 1.0, 1.0, |x| x.clamp(-1.0, 1.0))
    }

    /// Smoothed indicator of `(-inf, x0]`: `clip((x0 + 0.1 - x)/0.1, 0, 1)`,
    /// B = 1, L = 10.
    pub fn smoothed_step(x0: f64) -> Self {
        Self::new(format!("step:{x0}"), 1.0, 10.0, move |x| {
            ((x0 + 0.1 - x) / 0.1).clamp(0.0, 1.0)
        })
    }

    /// Constant function: B = |c|, L = 0.
    pub fn constant(c: f64) -> Self {
        Self::new(format!("const:{c}"), c.abs(), 0.0, move |_| c)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

/// `sum_{k<=n} log(1 + 1/k)`, which telescopes to `log(n + 1)`.
pub fn dn(n: u64) -> f64 {
    ((n + 1) as f64).ln()
}

fn normalizer(weights: WeightSeq, n: u64) -> f64 {
    match weights {
        WeightSeq::HarmonicOverLog => (n as f64).ln(),
        WeightSeq::DkOverDn => dn(n),
    }
}

/// Signed random walk driven one bit at a time.
#[derive(Clone, Copy, Debug, Default)]
struct SignWalk {
    steps: u64,
    sum: i64,
}

impl SignWalk {
    fn step(&mut self, bit: bool) -> f64 {
        self.steps += 1;
        self.sum += if bit { 1 } else { -1 };
        self.sum as f64 / (self.steps as f64).sqrt()
    }
}

/// One threshold's estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub x: f64,
    pub value: f64,
}

/// Running state of the indicator log-average for a set of thresholds.
#[derive(Clone, Debug)]
pub struct IndicatorEstimator {
    weights: WeightSeq,
    xs: Vec<f64>,
    walk: SignWalk,
    sums: Vec<CompensatedSum>,
}

impl IndicatorEstimator {
    pub fn new(xs: Vec<f64>, weights: WeightSeq) -> Self {
        let sums = vec![CompensatedSum::new(); xs.len()];
        Self {
            weights,
            xs,
            walk: SignWalk::default(),
            sums,
        }
    }

    pub fn step(&mut self, bit: bool) {
        let y = self.walk.step(bit);
        let w = self.weights.weight(self.walk.steps);
        for (x, sum) in self.xs.iter().zip(&mut self.sums) {
            if y <= *x {
                sum.add(w);
            }
        }
    }

    pub fn steps(&self) -> u64 {
        self.walk.steps
    }

    pub fn estimates(&self) -> Result<Vec<Estimate>, AscltError> {
        let n = self.walk.steps;
        if n < 2 {
            return Err(AscltError::TooFewSteps { n });
        }
        let norm = normalizer(self.weights, n);
        Ok(self
            .xs
            .iter()
            .zip(&self.sums)
            .map(|(&x, sum)| Estimate {
                x,
                value: sum.value() / norm,
            })
            .collect())
    }
}

/// Run the log-average estimator for `n` steps of the stream.
pub fn asclt_estimate(
    stream: &mut BitStream,
    n: u64,
    xs: &[f64],
    weights: WeightSeq,
) -> Result<Vec<Estimate>, AscltError> {
    if n < 2 {
        return Err(AscltError::TooFewSteps { n });
    }
    let mut estimator = IndicatorEstimator::new(xs.to_vec(), weights);
    for _ in 0..n {
        estimator.step(stream.next_bit()?);
    }
    estimator.estimates()
}

/// Both weightings evaluated on the identical bit prefix.
#[derive(Clone, Copy, Debug)]
pub struct WeightEquivalence {
    pub harmonic: f64,
    pub dk: f64,
    /// `harmonic - dk`; shrinks as `n` grows.
    pub difference: f64,
}

pub fn weight_equivalence_check(
    stream: &mut BitStream,
    n: u64,
    x: f64,
) -> Result<WeightEquivalence, AscltError> {
    if n < 2 {
        return Err(AscltError::TooFewSteps { n });
    }
    let mut harmonic = IndicatorEstimator::new(vec![x], WeightSeq::HarmonicOverLog);
    let mut dk = IndicatorEstimator::new(vec![x], WeightSeq::DkOverDn);
    for _ in 0..n {
        let bit = stream.next_bit()?;
        harmonic.step(bit);
        dk.step(bit);
    }
    let h = harmonic.estimates()?[0].value;
    let d = dk.estimates()?[0].value;
    Ok(WeightEquivalence {
        harmonic: h,
        dk: d,
        difference: h - d,
    })
}

/// `n_k = min{ n : log(n+1) >= a^k }` for `k = 1..=k_max`. Along this
/// subsequence `D_{n_k} >= a^k` with `D_{n_k}/a^k -> 1`.
pub fn subsequence(a: f64, k_max: u64) -> Result<Vec<u64>, AscltError> {
    if !(a > 1.0 && a <= 2.0) {
        return Err(AscltError::RatioOutOfRange { a });
    }
    let mut out = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let target = crate::accum::pow_int(a, k as u32);
        let grown = target.exp();
        if grown >= 9.0e18 {
            return Err(AscltError::SubsequenceOverflow { k, a });
        }
        let mut n = (grown.ceil() as u64).saturating_sub(1).max(1);
        // settle float boundary cases onto the exact minimality conditions
        while dn(n) < target {
            n += 1;
        }
        while n > 1 && dn(n - 1) >= target {
            n -= 1;
        }
        out.push(n);
    }
    Ok(out)
}

/// Exact `E[f(S_k / sqrt(k))]` under the fair binomial law of `S_k`.
///
/// Weights are generated from the central binomial coefficient outward by the
/// exact ratio recurrence and normalized by their own sum, so the common
/// scale cancels; absolute error stays below `1e-10 * sup|f|` through
/// `k = 10^6`. Symmetric `j <-> k-j` pairs carry bitwise-equal weights, so
/// odd test functions integrate to ~1e-16.
pub fn binomial_expectation(f: &TestFunction, k: u64) -> Result<f64, AscltError> {
    if k == 0 || k > MAX_EXPECTATION_STEPS {
        return Err(AscltError::StepsOutOfRange {
            k,
            max: MAX_EXPECTATION_STEPS,
        });
    }
    let kf = k as f64;
    let root = kf.sqrt();
    let value_at = |j: u64| (2.0 * j as f64 - kf) / root;
    let mut weighted = CompensatedSum::new();
    let mut total = CompensatedSum::new();

    // downward from the central coefficient: u_{j-1} = u_j * j / (k - j + 1)
    let center = k / 2;
    let mut u = 1.0;
    let mut j = center;
    loop {
        weighted.add(u * f.eval(value_at(j)));
        total.add(u);
        if j == 0 || u < 1e-320 {
            break;
        }
        u *= j as f64 / (k - j + 1) as f64;
        j -= 1;
    }
    // upward: u_{j+1} = u_j * (k - j) / (j + 1); for odd k the second central
    // coefficient equals the first, so it starts at exactly 1
    if center < k {
        let mut u = if k % 2 == 1 {
            1.0
        } else {
            center as f64 / (center + 1) as f64
        };
        let mut j = center + 1;
        loop {
            weighted.add(u * f.eval(value_at(j)));
            total.add(u);
            if j == k || u < 1e-320 {
                break;
            }
            u *= (k - j) as f64 / (j + 1) as f64;
            j += 1;
        }
    }
    Ok(weighted.value() / total.value())
}

/// Precomputed `E f(Y_k)` for `k = 1..=len`, shared read-only across seeds.
#[derive(Clone, Debug)]
pub struct ExpectationCache {
    function_id: String,
    values: Vec<f64>,
}

impl ExpectationCache {
    pub fn build(f: &TestFunction, n_max: u64) -> Result<Self, AscltError> {
        if n_max == 0 || n_max > MAX_EXPECTATION_STEPS {
            return Err(AscltError::StepsOutOfRange {
                k: n_max,
                max: MAX_EXPECTATION_STEPS,
            });
        }
        let values = (1..=n_max)
            .into_par_iter()
            .map(|k| binomial_expectation(f, k))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(Self {
            function_id: f.id().to_string(),
            values,
        })
    }

    pub fn function_id(&self) -> &str {
        &self.function_id
    }

    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, k: u64) -> Option<f64> {
        self.values.get((k - 1) as usize).copied()
    }

    fn check(&self, f: &TestFunction, need: u64) -> Result<(), AscltError> {
        if self.function_id != f.id() {
            return Err(AscltError::CacheMismatch {
                cached: self.function_id.clone(),
                requested: f.id().to_string(),
            });
        }
        if self.len() < need {
            return Err(AscltError::CacheTooShort {
                id: self.function_id.clone(),
                have: self.len(),
                need,
            });
        }
        Ok(())
    }
}

/// `T_n = (1/normalizer) * sum_{k<=n} w_k * (f(Y_k) - E f(Y_k))` at each
/// checkpoint in `ns` (strictly increasing, all >= 2), one stream pass.
pub fn tn_checkpoints(
    stream: &mut BitStream,
    ns: &[u64],
    f: &TestFunction,
    weights: WeightSeq,
    cache: &ExpectationCache,
) -> Result<Vec<f64>, AscltError> {
    assert!(!ns.is_empty(), "need at least one checkpoint");
    assert!(
        ns.windows(2).all(|w| w[0] < w[1]),
        "checkpoints must be strictly increasing"
    );
    let last = *ns.last().unwrap();
    if ns[0] < 2 {
        return Err(AscltError::TooFewSteps { n: ns[0] });
    }
    cache.check(f, last)?;
    let mut walk = SignWalk::default();
    let mut sum = CompensatedSum::new();
    let mut out = Vec::with_capacity(ns.len());
    let mut next_checkpoint = 0usize;
    for k in 1..=last {
        let y = walk.step(stream.next_bit()?);
        let centered = f.eval(y) - cache.get(k).unwrap();
        sum.add(weights.weight(k) * centered);
        if ns[next_checkpoint] == k {
            out.push(sum.value() / normalizer(weights, k));
            next_checkpoint += 1;
        }
    }
    Ok(out)
}

/// `T_n` for a single step count.
pub fn tn_statistic(
    stream: &mut BitStream,
    n: u64,
    f: &TestFunction,
    weights: WeightSeq,
    cache: &ExpectationCache,
) -> Result<f64, AscltError> {
    Ok(tn_checkpoints(stream, &[n], f, weights, cache)?[0])
}

/// One row of the variance study.
#[derive(Clone, Copy, Debug)]
pub struct VarianceStudyRow {
    pub n: u64,
    /// Monte-Carlo estimate of `E[T_n^2]` over the seed sweep.
    pub mean_tn2: f64,
    /// `C_hat * loglog n / log n`, with `C_hat` calibrated at the first row.
    pub bound: f64,
    /// Estimate exceeded 1.5x the fitted bound.
    pub flagged: bool,
}

/// Shape of the envelope: `loglog n / log n`.
pub fn loglog_over_log(n: u64) -> f64 {
    let log_n = (n as f64).ln();
    log_n.ln() / log_n
}

/// Monte-Carlo study of `E[T_n^2]` across PRNG seeds against the fitted
/// `loglog n / log n` envelope. The expectation cache is built once and
/// shared read-only across the parallel per-seed runs.
pub fn variance_study(
    seeds: &[u64],
    ns: &[u64],
    f: &TestFunction,
) -> Result<Vec<VarianceStudyRow>, AscltError> {
    if seeds.len() < MIN_STUDY_SEEDS {
        return Err(AscltError::InsufficientSeeds {
            got: seeds.len(),
            min: MIN_STUDY_SEEDS,
        });
    }
    let grid_ok = !ns.is_empty()
        && ns[0] >= MIN_STUDY_STEPS
        && ns.windows(2).all(|w| w[0] < w[1]);
    if !grid_ok {
        return Err(AscltError::BadStudyGrid {
            min: MIN_STUDY_STEPS,
        });
    }
    let cache = ExpectationCache::build(f, *ns.last().unwrap())?;
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut stream = BitStream::open(SourceSpec::Prng { seed })?;
            tn_checkpoints(&mut stream, ns, f, WeightSeq::DkOverDn, &cache)
        })
        .collect::<Result<_, _>>()?;

    let mut means = vec![CompensatedSum::new(); ns.len()];
    for tns in &per_seed {
        for (mean, &t) in means.iter_mut().zip(tns) {
            mean.add(t * t);
        }
    }
    let means: Vec<f64> = means
        .iter()
        .map(|m| m.value() / seeds.len() as f64)
        .collect();

    let c_hat = means[0] / loglog_over_log(ns[0]);
    Ok(ns
        .iter()
        .zip(&means)
        .map(|(&n, &mean_tn2)| {
            let bound = c_hat * loglog_over_log(n);
            VarianceStudyRow {
                n,
                mean_tn2,
                bound,
                flagged: mean_tn2 > 1.5 * bound,
            }
        })
        .collect())
}
