//! Python bindings for the bitclt sampling and verification library.
//!
//! Exposes the main types (bit streams, block schemes, moment tables,
//! empirical CDFs) and the top-level operations (exact Rademacher moments
//! and their brute-force oracle, normal CDF, tail bounds and test plans, the
//! log-average estimator, subsequences, binomial expectations, and the
//! variance study). Sources, schemes, weightings, and test functions use the
//! same string serializations as the CLI flags.

use num_bigint::BigInt;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bitclt::asclt;
use bitclt::bitsource;
use bitclt::cdf;
use bitclt::moments;
use bitclt::sampling;
use bitclt::slln_bounds;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_source(spec: &str) -> PyResult<bitsource::SourceSpec> {
    spec.parse().map_err(value_err)
}

fn parse_scheme(scheme: &str) -> PyResult<sampling::BlockScheme> {
    scheme.parse().map_err(value_err)
}

fn parse_weights(weights: &str) -> PyResult<asclt::WeightSeq> {
    weights.parse().map_err(value_err)
}

fn parse_function(function: &str) -> PyResult<asclt::TestFunction> {
    if function == "clip" {
        return Ok(asclt::TestFunction::clip());
    }
    if let Some(x0) = function.strip_prefix("step:") {
        let x0: f64 = x0
            .parse()
            .map_err(|_| value_err("step threshold must be a number"))?;
        return Ok(asclt::TestFunction::smoothed_step(x0));
    }
    Err(value_err(format!(
        "unknown test function `{function}` (expected clip or step:<x0>)"
    )))
}

/// Deterministic, seedable, resettable bit stream.
#[pyclass(name = "BitStream")]
struct PyBitStream {
    inner: bitsource::BitStream,
}

#[pymethods]
impl PyBitStream {
    /// Open a stream from a source spec string, e.g. "prng:seed=1",
    /// "constant:1", "periodic:01", "champernowne", "file-ascii:<path>",
    /// "file-raw:<path>".
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        let spec = parse_source(spec)?;
        Ok(Self {
            inner: bitsource::BitStream::open(spec).map_err(runtime_err)?,
        })
    }

    /// Next `count` bits as `bytes` of 0/1 values.
    fn next_bits(&mut self, count: u64) -> PyResult<Vec<u8>> {
        let block = self.inner.next_bits(count).map_err(runtime_err)?;
        Ok(block.iter().map(u8::from).collect())
    }

    /// Sum of the next `count` bits (word-packed popcount).
    fn popcount_block(&mut self, count: u64) -> PyResult<u64> {
        self.inner.popcount_block(count).map_err(runtime_err)
    }

    /// Rewind to the first bit; re-emission reproduces the prefix exactly.
    fn reset(&mut self) {
        self.inner.reset();
    }

    /// Count of bits emitted so far.
    #[getter]
    fn position(&self) -> u64 {
        self.inner.position()
    }

    #[getter]
    fn spec(&self) -> String {
        self.inner.spec().to_string()
    }
}

/// Block scheme mapping sample index k to a contiguous block of bits.
#[pyclass(name = "BlockScheme")]
#[derive(Clone)]
struct PyBlockScheme {
    inner: sampling::BlockScheme,
}

#[pymethods]
impl PyBlockScheme {
    /// Parse from "tri", "fixed:<N>", or "affine:<a>:<b>".
    #[new]
    fn new(scheme: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_scheme(scheme)?,
        })
    }

    /// (start, size) of block k, with 1-based bit indices.
    fn block_bounds(&self, k: u64) -> PyResult<(u64, u64)> {
        self.inner.block_bounds(k).map_err(value_err)
    }

    fn block_size(&self, k: u64) -> PyResult<u64> {
        self.inner.block_size(k).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("BlockScheme(\"{}\")", self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

/// Streaming accumulator of empirical moments.
#[pyclass(name = "MomentTable")]
struct PyMomentTable {
    inner: moments::MomentTable,
}

#[pymethods]
impl PyMomentTable {
    #[new]
    #[pyo3(signature = (m_max = 8))]
    fn new(m_max: u32) -> PyResult<Self> {
        if m_max < 1 {
            return Err(value_err("m_max must be >= 1"));
        }
        Ok(Self {
            inner: moments::MomentTable::new(m_max),
        })
    }

    fn observe(&mut self, x: f64) {
        self.inner.observe(x);
    }

    fn empirical_moment(&self, m: u32) -> PyResult<f64> {
        self.inner.empirical_moment(m).map_err(value_err)
    }

    #[getter]
    fn count(&self) -> u64 {
        self.inner.count()
    }
}

/// Sorted empirical distribution with exact KS distance to the normal CDF.
#[pyclass(name = "EmpiricalCdf")]
struct PyEmpiricalCdf {
    inner: cdf::EmpiricalCdf,
}

#[pymethods]
impl PyEmpiricalCdf {
    #[new]
    fn new(samples: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: cdf::EmpiricalCdf::from_samples(samples).map_err(value_err)?,
        })
    }

    fn eval(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn ks_distance(&self) -> f64 {
        self.inner.ks_distance()
    }

    /// Rows (t, ecdf, phi, diff) over a sorted grid.
    fn pointwise_error(&self, grid: Vec<f64>) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .pointwise_error(&grid)
            .into_iter()
            .map(|r| (r.t, r.ecdf, r.phi, r.diff))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Standard normal CDF, absolute error below 1e-12.
#[pyfunction]
fn phi(x: f64) -> f64 {
    cdf::phi(x)
}

/// m-th moment of the standard normal: (m-1)!! for even m, 0 for odd.
#[pyfunction]
fn normal_moment(m: u32) -> f64 {
    moments::normal_moment(m)
}

/// Exact E[S_n^m] for a sum of n independent +-1 signs (partition formula).
#[pyfunction]
fn exact_rademacher_moment(n: u64, m: u32) -> PyResult<BigInt> {
    moments::exact_rademacher_moment(n, m).map_err(value_err)
}

/// Exact E[S_n^m] by enumerating all 2^n sign vectors (n <= 20).
#[pyfunction]
fn brute_force_moment(n: u64, m: u32) -> PyResult<BigInt> {
    moments::brute_force_moment(n, m).map_err(value_err)
}

/// E[(S_n/sqrt(n))^m]: the exact moment scaled by n^(m/2).
#[pyfunction]
fn scaled_block_moment(n: u64, m: u32) -> PyResult<f64> {
    moments::scaled_block_moment(n, m).map_err(value_err)
}

/// Run the block sampler: returns (samples, bits_consumed).
#[pyfunction]
fn sample_run(source: &str, scheme: &str, k_max: u64) -> PyResult<(Vec<f64>, u64)> {
    let mut stream = bitsource::BitStream::open(parse_source(source)?).map_err(runtime_err)?;
    let scheme = parse_scheme(scheme)?;
    let mut collector = sampling::SampleCollector::default();
    let stats = sampling::sample_run(&mut stream, scheme, k_max, &mut [&mut collector])
        .map_err(runtime_err)?;
    Ok((collector.values, stats.bits_consumed))
}

/// Upper bound on P(sup_{k>=M} |mean_k - mu| > eps) for constant variance.
#[pyfunction]
fn tail_bound(sigma2: f64, eps: f64, m: u64) -> PyResult<f64> {
    if sigma2 < 0.0 {
        return Err(value_err("sigma2 must be >= 0"));
    }
    slln_bounds::tail_bound(&slln_bounds::VarianceSpec::Constant { sigma2 }, eps, m)
        .map_err(value_err)
}

/// Smallest power-of-two M meeting the 2^-(n+l) measure target.
#[pyfunction]
fn find_m(sigma2: f64, n: u32, l: u32) -> PyResult<u64> {
    if sigma2 < 0.0 {
        return Err(value_err("sigma2 must be >= 0"));
    }
    slln_bounds::find_m(&slln_bounds::VarianceSpec::Constant { sigma2 }, n, l).map_err(value_err)
}

/// One test-plan row: (l, eps, M, bound, threshold).
type PlanRow = (u32, f64, u64, f64, f64);

/// Test-plan rows and the truncation measure.
#[pyfunction]
fn build_test_plan(sigma2: f64, n: u32, l_max: u32) -> PyResult<(Vec<PlanRow>, f64)> {
    if sigma2 < 0.0 {
        return Err(value_err("sigma2 must be >= 0"));
    }
    let plan = slln_bounds::build_test_plan(
        &slln_bounds::VarianceSpec::Constant { sigma2 },
        n,
        l_max,
    )
    .map_err(value_err)?;
    let rows = plan
        .rows
        .iter()
        .map(|r| (r.l, r.eps, r.m, r.bound, r.threshold))
        .collect();
    Ok((rows, plan.truncation))
}

/// Log-average estimates: list of (x, estimate) for the given thresholds.
#[pyfunction]
#[pyo3(signature = (source, n, xs, weights = "harmonic"))]
fn asclt_estimate(source: &str, n: u64, xs: Vec<f64>, weights: &str) -> PyResult<Vec<(f64, f64)>> {
    let mut stream = bitsource::BitStream::open(parse_source(source)?).map_err(runtime_err)?;
    let weights = parse_weights(weights)?;
    let estimates = asclt::asclt_estimate(&mut stream, n, &xs, weights).map_err(runtime_err)?;
    Ok(estimates.into_iter().map(|e| (e.x, e.value)).collect())
}

/// Harmonic and d_k estimates on the identical prefix: (harmonic, dk, diff).
#[pyfunction]
fn weight_equivalence_check(source: &str, n: u64, x: f64) -> PyResult<(f64, f64, f64)> {
    let mut stream = bitsource::BitStream::open(parse_source(source)?).map_err(runtime_err)?;
    let eq = asclt::weight_equivalence_check(&mut stream, n, x).map_err(runtime_err)?;
    Ok((eq.harmonic, eq.dk, eq.difference))
}

/// n_k = min{ n : log(n+1) >= a^k } for k = 1..=k_max.
#[pyfunction]
fn subsequence(a: f64, k_max: u64) -> PyResult<Vec<u64>> {
    asclt::subsequence(a, k_max).map_err(value_err)
}

/// Exact E[f(S_k/sqrt(k))] for a named test function (clip or step:<x0>).
#[pyfunction]
fn binomial_expectation(function: &str, k: u64) -> PyResult<f64> {
    asclt::binomial_expectation(&parse_function(function)?, k).map_err(value_err)
}

/// T_n statistic for one source prefix.
#[pyfunction]
#[pyo3(signature = (source, n, function = "clip", weights = "dk"))]
fn tn_statistic(source: &str, n: u64, function: &str, weights: &str) -> PyResult<f64> {
    let f = parse_function(function)?;
    let weights = parse_weights(weights)?;
    let cache = asclt::ExpectationCache::build(&f, n).map_err(value_err)?;
    let mut stream = bitsource::BitStream::open(parse_source(source)?).map_err(runtime_err)?;
    asclt::tn_statistic(&mut stream, n, &f, weights, &cache).map_err(runtime_err)
}

/// Running centered averages of X_k^m against the exact per-block means,
/// emitted at powers of two and at k_max: rows (k, deviation).
#[pyfunction]
fn centered_average_trace(
    source: &str,
    scheme: &str,
    m: u32,
    k_max: u64,
) -> PyResult<Vec<(u64, f64)>> {
    let mut stream = bitsource::BitStream::open(parse_source(source)?).map_err(runtime_err)?;
    let scheme = parse_scheme(scheme)?;
    let points = slln_bounds::centered_average_trace(&mut stream, scheme, m, k_max)
        .map_err(runtime_err)?;
    Ok(points.into_iter().map(|p| (p.k, p.deviation)).collect())
}

/// Seed-sweep study of E[T_n^2]: rows (n, mean_tn2, bound, flagged).
#[pyfunction]
#[pyo3(signature = (seeds, ns, function = "clip"))]
fn variance_study(
    seeds: Vec<u64>,
    ns: Vec<u64>,
    function: &str,
) -> PyResult<Vec<(u64, f64, f64, bool)>> {
    let rows = asclt::variance_study(&seeds, &ns, &parse_function(function)?)
        .map_err(runtime_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.n, r.mean_tn2, r.bound, r.flagged))
        .collect())
}

#[pymodule]
fn bitclt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PRNG_ID", bitsource::PRNG_ID)?;
    m.add_class::<PyBitStream>()?;
    m.add_class::<PyBlockScheme>()?;
    m.add_class::<PyMomentTable>()?;
    m.add_class::<PyEmpiricalCdf>()?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(normal_moment, m)?)?;
    m.add_function(wrap_pyfunction!(exact_rademacher_moment, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_moment, m)?)?;
    m.add_function(wrap_pyfunction!(scaled_block_moment, m)?)?;
    m.add_function(wrap_pyfunction!(sample_run, m)?)?;
    m.add_function(wrap_pyfunction!(tail_bound, m)?)?;
    m.add_function(wrap_pyfunction!(find_m, m)?)?;
    m.add_function(wrap_pyfunction!(build_test_plan, m)?)?;
    m.add_function(wrap_pyfunction!(asclt_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(weight_equivalence_check, m)?)?;
    m.add_function(wrap_pyfunction!(subsequence, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(tn_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(centered_average_trace, m)?)?;
    m.add_function(wrap_pyfunction!(variance_study, m)?)?;
    Ok(())
}
