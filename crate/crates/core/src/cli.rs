//! Command-line front end: sources, schemes, and analyses bound into
//! reproducible runs with CSV/JSON output.
//!
//! Every output begins with a metadata block echoing the full configuration
//! and the frozen PRNG identifier, floats are printed with a fixed 12
//! significant digits, and seed sweeps are emitted in ascending seed order, so a rerun
//! of the same configuration is byte-identical.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 configuration error,
//! 3 source exhaustion, 4 oracle mismatch.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::asclt::{
    self, asclt_estimate, variance_study, Estimate, TestFunction, WeightSeq,
};
use crate::bitsource::{BitStream, SourceError, SourceSpec, PRNG_ID};
use crate::cdf::{phi, EmpiricalCdf};
use crate::moments::{
    self, brute_force_moment, exact_rademacher_moment, normal_moment, scaled_block_moment,
    MomentTable,
};
use crate::sampling::{sample_run, BlockScheme, SampleCollector, SampleError};
use crate::slln_bounds::{build_test_plan, VarianceSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_ORACLE_MISMATCH: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "bitclt",
    version,
    about = "Block-sample bit streams into near-normal samples and verify the convergence"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Empirical sample moments against their normal / fixed-block targets
    Moments(MomentsArgs),
    /// Empirical CDF against Phi: exact KS distance plus a pointwise grid
    Cdf(CdfArgs),
    /// Exact partition-formula moments against brute-force enumeration
    Oracle(OracleArgs),
    /// Tail-bound test plans for the effective strong law
    Bounds(BoundsArgs),
    /// Log-average CLT estimates, or the T_n variance study with --study
    Asclt(AscltArgs),
    /// Combined moments + KS + log-average verdict for one source (JSON)
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Args, Debug)]
struct MomentsArgs {
    /// Source spec: prng:seed=<u64>, constant:<0|1>, periodic:<bits>,
    /// champernowne, file-ascii:<path>, file-raw:<path>
    #[arg(long)]
    source: String,
    /// Block scheme: tri, fixed:<N>, or affine:<a>:<b>
    #[arg(long, default_value = "tri")]
    scheme: String,
    /// Number of samples
    #[arg(long)]
    k: u64,
    /// Highest moment order tracked
    #[arg(long, default_value_t = moments::DEFAULT_M_MAX)]
    m_max: u32,
    /// PRNG seed sweep (prng sources only); moments are averaged across seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct CdfArgs {
    #[arg(long)]
    source: String,
    #[arg(long, default_value = "tri")]
    scheme: String,
    /// Number of samples
    #[arg(long)]
    k: u64,
    /// PRNG seed sweep (prng sources only); emits one KS row per seed
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Largest block size in the comparison grid (enumeration-limited)
    #[arg(long, default_value_t = 16)]
    n_max: u64,
    /// Highest moment order in the grid
    #[arg(long, default_value_t = 10)]
    m_max: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Constant per-term variance
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Explicit variance table (overrides --sigma2; zero beyond the table)
    #[arg(long, value_delimiter = ',')]
    sigma2_table: Vec<f64>,
    /// Test level n
    #[arg(long, default_value_t = 1)]
    level: u32,
    /// Number of precision levels l to tabulate
    #[arg(long, default_value_t = 8)]
    lmax: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct AscltArgs {
    /// Bit source (one bit per estimator step); unused by --study, which
    /// always sweeps prng seeds
    #[arg(long, required_unless_present = "study")]
    source: Option<String>,
    /// Steps (bits) per run
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Indicator thresholds
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    x: Vec<f64>,
    /// PRNG seed sweep (prng sources only)
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Weighting: harmonic (1/k over log n) or dk (log(1+1/k) over D_n)
    #[arg(long, default_value = "harmonic")]
    weights: String,
    /// Run the T_n variance study instead of point estimates
    #[arg(long)]
    study: bool,
    /// Step-count checkpoints for the study
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    ns: Vec<u64>,
    /// Test function for the study: clip or step:<x0>
    #[arg(long, default_value = "clip")]
    function: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    source: String,
    #[arg(long, default_value = "tri")]
    scheme: String,
    /// Number of block samples for the moment/KS checks
    #[arg(long, default_value_t = 100_000)]
    k: u64,
    /// Steps for the log-average check
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Log-average thresholds
    #[arg(long, value_delimiter = ',', default_value = "0", allow_hyphen_values = true)]
    x: Vec<f64>,
    /// Tolerance on |m2 - target|
    #[arg(long, default_value_t = 0.05)]
    tol_m2: f64,
    /// Tolerance on |m4 - target|
    #[arg(long, default_value_t = 0.25)]
    tol_m4: f64,
    /// Tolerance on the KS distance
    #[arg(long, default_value_t = 0.05)]
    tol_ks: f64,
    /// Tolerance on |estimate - Phi(x)| per threshold
    #[arg(long, default_value_t = 0.25)]
    tol_asclt: f64,
    /// Output path; stdout when omitted (report is always JSON)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Terminal failure: message to stderr, process exit code.
#[derive(Debug)]
struct CliFailure {
    message: String,
    code: i32,
}

impl CliFailure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_CONFIG,
        }
    }
}

impl From<SampleError> for CliFailure {
    fn from(e: SampleError) -> Self {
        let code = match &e {
            SampleError::Exhausted { .. } => EXIT_EXHAUSTED,
            SampleError::Scheme(_) => EXIT_CONFIG,
        };
        CliFailure {
            message: e.to_string(),
            code,
        }
    }
}

impl From<asclt::AscltError> for CliFailure {
    fn from(e: asclt::AscltError) -> Self {
        let code = match &e {
            asclt::AscltError::Source(SourceError::Exhausted { .. }) => EXIT_EXHAUSTED,
            _ => EXIT_CONFIG,
        };
        CliFailure {
            message: e.to_string(),
            code,
        }
    }
}

/// Finished command: document text, exit code, optional stderr note.
struct Outcome {
    text: String,
    code: i32,
    note: Option<String>,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self {
            text,
            code: EXIT_OK,
            note: None,
        }
    }
}

/// Parse argv, run the command, write its output. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (out_path, result) = match cli.command {
        Command::Moments(a) => (a.output.out.clone(), cmd_moments(a)),
        Command::Cdf(a) => (a.output.out.clone(), cmd_cdf(a)),
        Command::Oracle(a) => (a.output.out.clone(), cmd_oracle(a)),
        Command::Bounds(a) => (a.output.out.clone(), cmd_bounds(a)),
        Command::Asclt(a) => (a.output.out.clone(), cmd_asclt(a)),
        Command::Report(a) => (a.out.clone(), cmd_report(a)),
    };
    match result {
        Ok(outcome) => {
            if let Some(note) = &outcome.note {
                eprintln!("{note}");
            }
            match write_output(&out_path, &outcome.text) {
                Ok(()) => outcome.code,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn write_output(path: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())
        }
    }
}

// ---------------------------------------------------------------- formatting

/// Fixed 12-significant-digit float formatting for byte-stable CSV.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.11e}")
}

/// Round to 12 significant digits for JSON emission.
fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exponent = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - exponent);
    (x * scale).round() / scale
}

fn jnum(x: f64) -> Value {
    json!(round_sig(x))
}

/// Ordered `key=value` configuration echo.
struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    fn new(command: &str) -> Self {
        let mut meta = Metadata {
            entries: Vec::new(),
        };
        meta.push("command", command);
        meta
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn push_list<T: ToString>(&mut self, key: &str, values: &[T]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.push(key, if joined.is_empty() { "-".to_string() } else { joined });
    }

    /// Close the block with the frozen generator identifier.
    fn finish(mut self, format: &str) -> Self {
        self.push("format", format);
        self.push("prng", PRNG_ID);
        self
    }

    fn csv_block(&self) -> String {
        let mut out = format!("# bitclt {}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    fn json_object(&self) -> Value {
        let mut map = Map::new();
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        for (k, v) in &self.entries {
            map.insert(k.clone(), json!(v));
        }
        Value::Object(map)
    }
}

fn csv_document(meta: &Metadata, header: &str, rows: &[Vec<String>]) -> String {
    let mut out = meta.csv_block();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn json_document(meta: &Metadata, extra: Vec<(&str, Value)>) -> String {
    let mut map = Map::new();
    map.insert("metadata".into(), meta.json_object());
    for (k, v) in extra {
        map.insert(k.into(), v);
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("serializable");
    text.push('\n');
    text
}

// ------------------------------------------------------------------ parsing

fn parse_source(s: &str) -> Result<SourceSpec, CliFailure> {
    s.parse::<SourceSpec>()
        .map_err(|e| CliFailure::config(e.to_string()))
}

fn parse_scheme(s: &str) -> Result<BlockScheme, CliFailure> {
    s.parse::<BlockScheme>()
        .map_err(|e| CliFailure::config(e.to_string()))
}

fn parse_weights(s: &str) -> Result<WeightSeq, CliFailure> {
    s.parse::<WeightSeq>().map_err(CliFailure::config)
}

fn parse_function(s: &str) -> Result<TestFunction, CliFailure> {
    if s == "clip" {
        return Ok(TestFunction::clip());
    }
    if let Some(x0) = s.strip_prefix("step:") {
        let x0: f64 = x0
            .parse()
            .map_err(|_| CliFailure::config("step threshold must be a number"))?;
        return Ok(TestFunction::smoothed_step(x0));
    }
    Err(CliFailure::config(format!(
        "unknown test function `{s}` (expected clip or step:<x0>)"
    )))
}

/// Expand a seed sweep into concrete source specs. Rows of a sweep are
/// emitted in ascending seed order regardless of the flag order, so parallel
/// fan-out stays order-deterministic; the metadata block still echoes the
/// flag verbatim.
fn resolve_specs(
    base: &SourceSpec,
    seeds: &[u64],
) -> Result<(Vec<u64>, Vec<SourceSpec>), CliFailure> {
    if seeds.is_empty() {
        return Ok((Vec::new(), vec![base.clone()]));
    }
    if !matches!(base, SourceSpec::Prng { .. }) {
        return Err(CliFailure::config(
            "--seeds is only meaningful for prng sources",
        ));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    let specs = sorted.iter().map(|&s| base.with_seed(s)).collect();
    Ok((sorted, specs))
}

fn require(cond: bool, message: &str) -> Result<(), CliFailure> {
    if cond {
        Ok(())
    } else {
        Err(CliFailure::config(message))
    }
}

// ----------------------------------------------------------------- commands

fn open_stream(spec: &SourceSpec) -> Result<BitStream, CliFailure> {
    BitStream::open(spec.clone()).map_err(|e| CliFailure::config(e.to_string()))
}

/// Target for the m-th empirical moment under a scheme: the exact fixed-block
/// moment when block sizes stay at N, the normal moment otherwise.
fn moment_target(scheme: BlockScheme, m: u32) -> Result<f64, CliFailure> {
    match scheme {
        BlockScheme::Fixed { n } => {
            scaled_block_moment(n, m).map_err(|e| CliFailure::config(e.to_string()))
        }
        _ => Ok(normal_moment(m)),
    }
}

fn run_moment_table(
    spec: &SourceSpec,
    scheme: BlockScheme,
    k: u64,
    m_max: u32,
) -> Result<MomentTable, CliFailure> {
    let mut stream = open_stream(spec)?;
    let mut table = MomentTable::new(m_max);
    sample_run(&mut stream, scheme, k, &mut [&mut table])?;
    Ok(table)
}

fn cmd_moments(args: MomentsArgs) -> Result<Outcome, CliFailure> {
    let source = parse_source(&args.source)?;
    let scheme = parse_scheme(&args.scheme)?;
    require(args.k >= 1, "--k must be >= 1")?;
    require(
        (1..=moments::MAX_MOMENT).contains(&args.m_max),
        "--m-max must be in 1..=16",
    )?;
    let (_, specs) = resolve_specs(&source, &args.seeds)?;

    let tables: Vec<MomentTable> = specs
        .par_iter()
        .map(|spec| run_moment_table(spec, scheme, args.k, args.m_max))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for m in 1..=args.m_max {
        let mean = tables
            .iter()
            .map(|t| t.empirical_moment(m).expect("k >= 1 samples observed"))
            .sum::<f64>()
            / tables.len() as f64;
        let target = moment_target(scheme, m)?;
        let diff = mean - target;
        rows.push(vec![
            m.to_string(),
            fmt_sig(mean),
            fmt_sig(target),
            fmt_sig(diff),
        ]);
        json_rows.push(json!({
            "m": m,
            "empirical": jnum(mean),
            "target": jnum(target),
            "diff": jnum(diff),
        }));
    }

    let mut meta = Metadata::new("moments");
    meta.push("source", &source);
    meta.push("scheme", scheme);
    meta.push("k", args.k);
    meta.push("m_max", args.m_max);
    meta.push_list("seeds", &args.seeds);
    let meta = meta.finish(args.output.format.name());

    let text = match args.output.format {
        OutputFormat::Csv => csv_document(&meta, "m,empirical,target,diff", &rows),
        OutputFormat::Json => json_document(&meta, vec![("rows", Value::Array(json_rows))]),
    };
    Ok(Outcome::ok(text))
}

fn run_sample_values(
    spec: &SourceSpec,
    scheme: BlockScheme,
    k: u64,
) -> Result<Vec<f64>, CliFailure> {
    let mut stream = open_stream(spec)?;
    let mut collector = SampleCollector::default();
    sample_run(&mut stream, scheme, k, &mut [&mut collector])?;
    Ok(collector.values)
}

fn default_grid() -> Vec<f64> {
    (-16..=16).map(|i| f64::from(i) * 0.25).collect()
}

fn cmd_cdf(args: CdfArgs) -> Result<Outcome, CliFailure> {
    let source = parse_source(&args.source)?;
    let scheme = parse_scheme(&args.scheme)?;
    require(args.k >= 1, "--k must be >= 1")?;
    let (seeds, specs) = resolve_specs(&source, &args.seeds)?;

    let cdfs: Vec<EmpiricalCdf> = specs
        .par_iter()
        .map(|spec| {
            let values = run_sample_values(spec, scheme, args.k)?;
            EmpiricalCdf::from_samples(values).map_err(|e| CliFailure::config(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut meta = Metadata::new("cdf");
    meta.push("source", &source);
    meta.push("scheme", scheme);
    meta.push("k", args.k);
    meta.push_list("seeds", &args.seeds);

    let text = if specs.len() == 1 {
        let cdf = &cdfs[0];
        let ks = cdf.ks_distance();
        meta.push("ks", fmt_sig(ks));
        let meta = meta.finish(args.output.format.name());
        let grid = default_grid();
        let pointwise = cdf.pointwise_error(&grid);
        match args.output.format {
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = pointwise
                    .iter()
                    .map(|r| {
                        vec![
                            fmt_sig(r.t),
                            fmt_sig(r.ecdf),
                            fmt_sig(r.phi),
                            fmt_sig(r.diff),
                        ]
                    })
                    .collect();
                csv_document(&meta, "t,ecdf,phi,diff", &rows)
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = pointwise
                    .iter()
                    .map(|r| {
                        json!({
                            "t": jnum(r.t),
                            "ecdf": jnum(r.ecdf),
                            "phi": jnum(r.phi),
                            "diff": jnum(r.diff),
                        })
                    })
                    .collect();
                json_document(
                    &meta,
                    vec![("ks", jnum(ks)), ("rows", Value::Array(rows))],
                )
            }
        }
    } else {
        let meta = meta.finish(args.output.format.name());
        match args.output.format {
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = seeds
                    .iter()
                    .zip(&cdfs)
                    .map(|(seed, cdf)| vec![seed.to_string(), fmt_sig(cdf.ks_distance())])
                    .collect();
                csv_document(&meta, "seed,ks", &rows)
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = seeds
                    .iter()
                    .zip(&cdfs)
                    .map(|(seed, cdf)| json!({"seed": seed, "ks": jnum(cdf.ks_distance())}))
                    .collect();
                json_document(&meta, vec![("ks_by_seed", Value::Array(rows))])
            }
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_oracle(args: OracleArgs) -> Result<Outcome, CliFailure> {
    require(
        (1..=moments::MAX_BRUTE_BLOCK).contains(&args.n_max),
        "--n-max must be in 1..=20 (enumeration limit)",
    )?;
    require(
        args.m_max <= moments::MAX_MOMENT,
        "--m-max must be <= 16",
    )?;

    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    let mut first_mismatch: Option<(u64, u32)> = None;
    for n in 1..=args.n_max {
        for m in 0..=args.m_max {
            let exact =
                exact_rademacher_moment(n, m).map_err(|e| CliFailure::config(e.to_string()))?;
            let brute =
                brute_force_moment(n, m).map_err(|e| CliFailure::config(e.to_string()))?;
            let equal = exact == brute;
            if !equal && first_mismatch.is_none() {
                first_mismatch = Some((n, m));
            }
            rows.push(vec![
                n.to_string(),
                m.to_string(),
                exact.to_string(),
                brute.to_string(),
                equal.to_string(),
            ]);
            json_rows.push(json!({
                "n": n,
                "m": m,
                "exact": exact.to_string(),
                "brute": brute.to_string(),
                "equal": equal,
            }));
        }
    }

    let mut meta = Metadata::new("oracle");
    meta.push("n_max", args.n_max);
    meta.push("m_max", args.m_max);
    let meta = meta.finish(args.output.format.name());

    let text = match args.output.format {
        OutputFormat::Csv => csv_document(&meta, "n,m,exact,brute,equal", &rows),
        OutputFormat::Json => json_document(&meta, vec![("rows", Value::Array(json_rows))]),
    };
    match first_mismatch {
        None => Ok(Outcome::ok(text)),
        Some((n, m)) => Ok(Outcome {
            text,
            code: EXIT_ORACLE_MISMATCH,
            note: Some(format!("oracle mismatch at n={n}, m={m}")),
        }),
    }
}

fn cmd_bounds(args: BoundsArgs) -> Result<Outcome, CliFailure> {
    require(
        (1..=60).contains(&args.level),
        "--level must be in 1..=60",
    )?;
    require((1..=60).contains(&args.lmax), "--lmax must be in 1..=60")?;
    let spec = if args.sigma2_table.is_empty() {
        require(args.sigma2 >= 0.0, "--sigma2 must be >= 0")?;
        VarianceSpec::Constant {
            sigma2: args.sigma2,
        }
    } else {
        require(
            args.sigma2_table.iter().all(|&v| v >= 0.0),
            "--sigma2-table entries must be >= 0",
        )?;
        VarianceSpec::Table {
            sigma2s: args.sigma2_table.clone(),
        }
    };

    let plan = build_test_plan(&spec, args.level, args.lmax)
        .map_err(|e| CliFailure::config(e.to_string()))?;

    let mut meta = Metadata::new("bounds");
    if args.sigma2_table.is_empty() {
        meta.push("sigma2", args.sigma2);
    } else {
        meta.push_list("sigma2_table", &args.sigma2_table);
    }
    meta.push("level", args.level);
    meta.push("lmax", args.lmax);
    meta.push("truncation", fmt_sig(plan.truncation));
    let meta = meta.finish(args.output.format.name());

    let text = match args.output.format {
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = plan
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.l.to_string(),
                        fmt_sig(r.eps),
                        r.m.to_string(),
                        fmt_sig(r.bound),
                        fmt_sig(r.threshold),
                    ]
                })
                .collect();
            csv_document(&meta, "l,eps,M,bound,threshold", &rows)
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = plan
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "l": r.l,
                        "eps": jnum(r.eps),
                        "M": r.m,
                        "bound": jnum(r.bound),
                        "threshold": jnum(r.threshold),
                    })
                })
                .collect();
            json_document(
                &meta,
                vec![
                    ("rows", Value::Array(rows)),
                    ("truncation", jnum(plan.truncation)),
                ],
            )
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_asclt(args: AscltArgs) -> Result<Outcome, CliFailure> {
    if args.study {
        return cmd_asclt_study(args);
    }
    let source = parse_source(args.source.as_deref().unwrap_or_default())?;
    let weights = parse_weights(&args.weights)?;
    require(args.n >= 2, "--n must be >= 2")?;
    require(!args.x.is_empty(), "--x needs at least one threshold")?;
    require(
        args.x.iter().all(|v| v.is_finite()),
        "--x thresholds must be finite",
    )?;
    let (seeds, specs) = resolve_specs(&source, &args.seeds)?;

    let runs: Vec<Vec<Estimate>> = specs
        .par_iter()
        .map(|spec| -> Result<Vec<Estimate>, CliFailure> {
            let mut stream = open_stream(spec)?;
            Ok(asclt_estimate(&mut stream, args.n, &args.x, weights)?)
        })
        .collect::<Result<_, _>>()?;

    let mut meta = Metadata::new("asclt");
    meta.push("source", &source);
    meta.push("n", args.n);
    meta.push_list("x", &args.x);
    meta.push_list("seeds", &args.seeds);
    meta.push("weights", weights);
    let meta = meta.finish(args.output.format.name());

    let sweep = specs.len() > 1;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut json_rows: Vec<Value> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        for est in run {
            let target = phi(est.x);
            let diff = est.value - target;
            let mut row = Vec::new();
            let mut obj = Map::new();
            if sweep {
                row.push(seeds[i].to_string());
                obj.insert("seed".into(), json!(seeds[i]));
            }
            row.extend([
                fmt_sig(est.x),
                fmt_sig(est.value),
                fmt_sig(target),
                fmt_sig(diff),
            ]);
            obj.insert("x".into(), jnum(est.x));
            obj.insert("estimate".into(), jnum(est.value));
            obj.insert("phi".into(), jnum(target));
            obj.insert("diff".into(), jnum(diff));
            rows.push(row);
            json_rows.push(Value::Object(obj));
        }
    }
    if sweep {
        for (xi, &x) in args.x.iter().enumerate() {
            let mean =
                runs.iter().map(|run| run[xi].value).sum::<f64>() / runs.len() as f64;
            let target = phi(x);
            rows.push(vec![
                "mean".to_string(),
                fmt_sig(x),
                fmt_sig(mean),
                fmt_sig(target),
                fmt_sig(mean - target),
            ]);
            json_rows.push(json!({
                "seed": "mean",
                "x": jnum(x),
                "estimate": jnum(mean),
                "phi": jnum(target),
                "diff": jnum(mean - target),
            }));
        }
    }

    let header = if sweep {
        "seed,x,estimate,phi,diff"
    } else {
        "x,estimate,phi,diff"
    };
    let text = match args.output.format {
        OutputFormat::Csv => csv_document(&meta, header, &rows),
        OutputFormat::Json => json_document(&meta, vec![("rows", Value::Array(json_rows))]),
    };
    Ok(Outcome::ok(text))
}

fn cmd_asclt_study(args: AscltArgs) -> Result<Outcome, CliFailure> {
    let function = parse_function(&args.function)?;
    require(
        !args.seeds.is_empty(),
        "--study needs an explicit --seeds sweep (at least 100 seeds)",
    )?;
    let rows = variance_study(&args.seeds, &args.ns, &function)?;

    let mut meta = Metadata::new("asclt-study");
    meta.push_list("seeds", &args.seeds);
    meta.push_list("ns", &args.ns);
    meta.push("function", function.id());
    let meta = meta.finish(args.output.format.name());

    let text = match args.output.format {
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        fmt_sig(r.mean_tn2),
                        fmt_sig(r.bound),
                        u8::from(r.flagged).to_string(),
                    ]
                })
                .collect();
            csv_document(&meta, "n,mean_tn2,bound,flag", &rows)
        }
        OutputFormat::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "n": r.n,
                        "mean_tn2": jnum(r.mean_tn2),
                        "bound": jnum(r.bound),
                        "flag": r.flagged,
                    })
                })
                .collect();
            json_document(&meta, vec![("rows", Value::Array(rows))])
        }
    };
    Ok(Outcome::ok(text))
}

fn cmd_report(args: ReportArgs) -> Result<Outcome, CliFailure> {
    let source = parse_source(&args.source)?;
    let scheme = parse_scheme(&args.scheme)?;
    require(args.k >= 1, "--k must be >= 1")?;
    require(args.n >= 2, "--n must be >= 2")?;
    require(!args.x.is_empty(), "--x needs at least one threshold")?;
    require(
        args.x.iter().all(|v| v.is_finite()),
        "--x thresholds must be finite",
    )?;

    // one sampling pass feeds both the moment and the CDF check
    let mut stream = open_stream(&source)?;
    let mut table = MomentTable::new(4);
    let mut collector = SampleCollector::default();
    sample_run(
        &mut stream,
        scheme,
        args.k,
        &mut [&mut table, &mut collector],
    )?;
    let cdf = EmpiricalCdf::from_samples(collector.values)
        .map_err(|e| CliFailure::config(e.to_string()))?;
    let ks = cdf.ks_distance();

    // the log-average consumes its own prefix of the same source
    let mut stream = open_stream(&source)?;
    let estimates = asclt_estimate(&mut stream, args.n, &args.x, WeightSeq::HarmonicOverLog)?;

    let m = |order: u32| table.empirical_moment(order).expect("k >= 1");
    let target2 = moment_target(scheme, 2)?;
    let target4 = moment_target(scheme, 4)?;
    let m2_pass = !moments::exceeds_tolerance(m(2), target2, args.tol_m2);
    let m4_pass = !moments::exceeds_tolerance(m(4), target4, args.tol_m4);
    let ks_pass = ks <= args.tol_ks;
    let asclt_pass = estimates
        .iter()
        .all(|e| !moments::exceeds_tolerance(e.value, phi(e.x), args.tol_asclt));
    let verdict = m2_pass && m4_pass && ks_pass && asclt_pass;

    let mut meta = Metadata::new("report");
    meta.push("source", &source);
    meta.push("scheme", scheme);
    meta.push("k", args.k);
    meta.push("n", args.n);
    meta.push_list("x", &args.x);
    meta.push("tol_m2", args.tol_m2);
    meta.push("tol_m4", args.tol_m4);
    meta.push("tol_ks", args.tol_ks);
    meta.push("tol_asclt", args.tol_asclt);
    let meta = meta.finish("json");

    let moments_obj = json!({
        "m1": jnum(m(1)),
        "m2": jnum(m(2)),
        "m3": jnum(m(3)),
        "m4": jnum(m(4)),
        "m2_target": jnum(target2),
        "m4_target": jnum(target4),
        "m2_pass": m2_pass,
        "m4_pass": m4_pass,
    });
    let ks_obj = json!({
        "value": jnum(ks),
        "tol": jnum(args.tol_ks),
        "pass": ks_pass,
    });
    let asclt_obj = json!({
        "x": estimates.iter().map(|e| jnum(e.x)).collect::<Vec<_>>(),
        "estimate": estimates.iter().map(|e| jnum(e.value)).collect::<Vec<_>>(),
        "phi": estimates.iter().map(|e| jnum(phi(e.x))).collect::<Vec<_>>(),
        "pass": asclt_pass,
    });
    let text = json_document(
        &meta,
        vec![
            ("moments", moments_obj),
            ("ks", ks_obj),
            ("asclt", asclt_obj),
            ("verdict", json!(if verdict { "pass" } else { "fail" })),
        ],
    );
    Ok(Outcome {
        text,
        code: if verdict { EXIT_OK } else { EXIT_TOLERANCE },
        note: (!verdict).then(|| "tolerance failure: source flagged as non-normal".to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_formatting_is_stable() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(2.98), "2.98000000000e0");
        assert_eq!(fmt_sig(0.5), "5.00000000000e-1");
        assert_eq!(fmt_sig(-1.0 / 3.0), "-3.33333333333e-1");
    }

    #[test]
    fn round_sig_trims_low_digits() {
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(12345.678901234567), 12345.6789012);
    }

    #[test]
    fn function_parsing() {
        assert_eq!(parse_function("clip").unwrap().id(), "clip");
        assert_eq!(parse_function("step:0.5").unwrap().id(), "step:0.5");
        assert!(parse_function("tanh").is_err());
        assert!(parse_function("step:x").is_err());
    }

    #[test]
    fn seed_sweep_requires_prng() {
        let constant: SourceSpec = "constant:1".parse().unwrap();
        assert!(resolve_specs(&constant, &[1, 2]).is_err());
        let prng: SourceSpec = "prng:seed=0".parse().unwrap();
        let (seeds, specs) = resolve_specs(&prng, &[4, 3]).unwrap();
        assert_eq!(seeds, vec![3, 4]); // sweeps run in ascending seed order
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].to_string(), "prng:seed=3");
    }
}
