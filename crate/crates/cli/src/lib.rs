//! Configuration, dispatch and output for the `stratowave` binary.
//!
//! A run is described by a [`RunConfig`] (JSON on disk, overridable from
//! flags). [`run`] executes it and returns the CSV table and a JSON summary;
//! the binary decides where they go.

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt;

use stratowave::chaos::{self, ChaosOptions};
use stratowave::feynman_kac::{self, FkConfig};
use stratowave::picard::{self, GridSpec};
use stratowave::suite::{self, CompareParams, SuiteLevel};
use stratowave::{Dim, Error as CoreError, EstimatorResult, Execution, SpectralMeasure, Vec2};

/// Version tag written as the first CSV line.
pub const CSV_SCHEMA: &str = "#schema=1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Verify,
    Noise,
    Picard,
    Fk,
    Chaos,
    Compare,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Verify => "verify",
            Command::Noise => "noise",
            Command::Picard => "picard",
            Command::Fk => "fk",
            Command::Chaos => "chaos",
            Command::Compare => "compare",
        };
        f.write_str(s)
    }
}

/// Space-time grid fields of the Picard solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_t: usize,
    pub n_x: usize,
    pub n_phi: usize,
    pub n_theta: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_t: 32,
            n_x: 65,
            n_phi: 8,
            n_theta: 16,
        }
    }
}

/// Everything a run depends on. Thread count is deliberately absent: it
/// never changes results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub measure: SpectralMeasure,
    pub eps: f64,
    pub dim: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub n_paths: usize,
    pub n_realizations: usize,
    pub n_iters: usize,
    pub n_max: usize,
    pub max_jumps: usize,
    /// Spectral modes per noise realization for continuous measures.
    pub n_freq: usize,
    pub grid: GridConfig,
    pub seed: u64,
    /// `chaos` only: emit the term census up to this order instead of moments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub census: Option<usize>,
    /// `verify` only: skip the cross-method reconciliation.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub quick: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Compare,
            measure: SpectralMeasure::atom_fixture(),
            eps: 0.0,
            dim: 1,
            t: 1.0,
            x: vec![0.0],
            n_paths: 100_000,
            n_realizations: 1000,
            n_iters: picard::DEFAULT_ITERS,
            n_max: 8,
            max_jumps: 40,
            n_freq: 256,
            grid: GridConfig::default(),
            seed: 0,
            census: None,
            quick: false,
            out_path: None,
        }
    }
}

/// Invalid configuration, with the offending line of the config text when
/// one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure in {module} ({location}): {source}")]
    Numerical {
        module: &'static str,
        location: String,
        source: CoreError,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } | CliError::Io(_) => 3,
        }
    }
}

fn numerical(module: &'static str, location: impl Into<String>) -> impl FnOnce(CoreError) -> CliError {
    let location = location.into();
    move |source| CliError::Numerical {
        module,
        location,
        source,
    }
}

/// First line of `text` mentioning `"field"`.
fn line_of(text: Option<&str>, field: &str) -> Option<usize> {
    let key = format!("\"{field}\"");
    text?.lines().position(|l| l.contains(&key)).map(|i| i + 1)
}

impl RunConfig {
    /// Parses and validates JSON config text.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        cfg.validate_against(Some(text))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_against(None)
    }

    /// Checks every field; `text` is only used to locate the offending line.
    pub fn validate_against(&self, text: Option<&str>) -> Result<(), ConfigError> {
        let fail = |field: &str, message: String| ConfigError {
            line: line_of(text, field),
            message: format!("{field}: {message}"),
        };
        if let Err(e) = self.measure.validate() {
            return Err(fail("measure", e.to_string()));
        }
        let dim = Dim::new(self.dim).map_err(|e| fail("dim", e.to_string()))?;
        if self.measure.dim() != dim {
            return Err(fail(
                "dim",
                format!("{} does not match the measure dimension {}", self.dim, self.measure.dim()),
            ));
        }
        if self.x.len() != self.dim || self.x.iter().any(|v| !v.is_finite()) {
            return Err(fail("x", format!("need {} finite coordinates", self.dim)));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(fail("t", format!("must be positive, got {}", self.t)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(fail("eps", format!("must be non-negative, got {}", self.eps)));
        }
        let counts = [
            ("n_paths", self.n_paths),
            ("n_realizations", self.n_realizations),
            ("n_iters", self.n_iters),
            ("n_max", self.n_max),
            ("max_jumps", self.max_jumps),
            ("n_freq", self.n_freq),
            ("n_t", self.grid.n_t),
            ("n_x", self.grid.n_x),
            ("n_phi", self.grid.n_phi),
            ("n_theta", self.grid.n_theta),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(fail(field, "must be positive".into()));
            }
        }
        let needs_sampling = matches!(self.command, Command::Fk | Command::Compare);
        if needs_sampling && self.n_paths < 2 {
            return Err(fail("n_paths", "must be at least 2".into()));
        }
        if self.command == Command::Compare && self.n_realizations < 2 {
            return Err(fail("n_realizations", "must be at least 2".into()));
        }
        if matches!(self.command, Command::Chaos | Command::Compare) && self.census.is_none() && self.n_max % 2 == 1 {
            return Err(fail("n_max", format!("must be even, got {}", self.n_max)));
        }
        if matches!(self.command, Command::Picard | Command::Compare) {
            if let Err(e) = self.grid_spec(dim).validate() {
                return Err(fail("grid", e.to_string()));
            }
        }
        if let Some(n) = self.census {
            if n == 0 || n > stratowave::combinatorics::MAX_ENUMERATION {
                return Err(fail(
                    "census",
                    format!("must lie in 1..={}", stratowave::combinatorics::MAX_ENUMERATION),
                ));
            }
        }
        Ok(())
    }

    fn point(&self) -> Vec2 {
        [self.x[0], self.x.get(1).copied().unwrap_or(0.0)]
    }

    fn grid_spec(&self, dim: Dim) -> GridSpec {
        GridSpec {
            n_phi: self.grid.n_phi,
            n_theta: self.grid.n_theta,
            ..GridSpec::new(dim, self.t, self.point(), self.grid.n_t, self.grid.n_x)
        }
    }

    /// SHA-256 of the canonical JSON, ignoring where output goes.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out_path: None,
            ..self.clone()
        };
        let digest = Sha256::digest(serde_json::to_vec(&canonical).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn compare_params(&self) -> CompareParams {
        CompareParams {
            t: self.t,
            x: self.point(),
            eps: self.eps,
            n_paths: self.n_paths,
            max_jumps: self.max_jumps,
            n_realizations: self.n_realizations,
            n_iters: self.n_iters,
            n_max: self.n_max,
            n_t: self.grid.n_t,
            n_x: self.grid.n_x,
            n_freq: self.n_freq,
            seed: self.seed,
            exec: Execution::Parallel,
        }
    }
}

/// Builds a measure from `fixture`, `zero`, `riesz:ALPHA`,
/// `gaussian:MASS:BANDWIDTH` or inline JSON.
pub fn parse_measure(spec: &str, dim: usize) -> Result<SpectralMeasure, ConfigError> {
    let bad = |message: String| ConfigError { line: None, message };
    let d = Dim::new(dim).map_err(|e| bad(e.to_string()))?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("measure: {s:?}: {e}")));
    let parts: Vec<&str> = spec.split(':').collect();
    let m = match parts.as_slice() {
        ["fixture"] => SpectralMeasure::symmetric_atoms(d, &[([std::f64::consts::PI, 0.0], 1.0)]),
        ["zero"] => Ok(SpectralMeasure::zero(d)),
        ["riesz", a] => SpectralMeasure::riesz(num(a)?, d),
        ["gaussian", m, b] => SpectralMeasure::gaussian(d, num(m)?, num(b)?),
        _ if spec.trim_start().starts_with('{') => {
            return serde_json::from_str(spec).map_err(|e| bad(format!("measure: {e}")));
        }
        _ => return Err(bad(format!("unknown measure {spec:?}"))),
    };
    m.map_err(|e| bad(format!("measure: {e}")))
}

/// CSV table plus JSON summary of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub csv: String,
    pub summary: serde_json::Value,
    /// Non-zero when a verification check failed.
    pub failed_checks: usize,
}

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(columns: &[&str]) -> Table {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns).expect("in-memory write");
        Table { writer }
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn finish(self, cfg: &RunConfig) -> String {
        let body = String::from_utf8(self.writer.into_inner().expect("in-memory flush")).expect("utf-8");
        format!(
            "{CSV_SCHEMA} command={} seed={} config={}\n{body}",
            cfg.command,
            cfg.seed,
            cfg.hash()
        )
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Executes `cfg` on a pool of `threads` workers (all cores when `None`).
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n.max(1));
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
        pool.install(|| dispatch(cfg))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        dispatch(cfg)
    }
}

fn dispatch(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    log::info!("running {} with seed {}", cfg.command, cfg.seed);
    let mut out = match cfg.command {
        Command::Verify => run_verify(cfg),
        Command::Noise => run_noise(cfg),
        Command::Picard => run_picard(cfg),
        Command::Fk => run_fk(cfg),
        Command::Chaos => run_chaos(cfg),
        Command::Compare => run_compare(cfg),
    }?;
    if let serde_json::Value::Object(map) = &mut out.summary {
        map.insert("command".into(), json!(cfg.command.to_string()));
        map.insert("seed".into(), json!(cfg.seed));
        map.insert("config_hash".into(), json!(cfg.hash()));
        map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        map.insert("git_describe".into(), json!(git_describe()));
        map.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    }
    Ok(out)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn run_verify(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let level = if cfg.quick { SuiteLevel::Quick } else { SuiteLevel::Full };
    let outcomes = suite::run_suite(level, cfg.seed, Execution::Parallel);
    let mut table = Table::new(&["id", "check", "passed", "seconds", "detail"]);
    for o in &outcomes {
        log::info!("{o}");
        table.row([o.id.to_string(), o.name.clone(), o.passed.to_string(), format!("{:.3}", o.seconds), o.detail.clone()]);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({ "checks": outcomes, "failed": failed }),
        failed_checks: failed,
    })
}

fn sample_noise(cfg: &RunConfig) -> Result<stratowave::NoiseSample, CliError> {
    cfg.measure
        .sample_noise(cfg.eps, cfg.n_freq, cfg.seed)
        .map_err(numerical("noise_model", format!("sample_noise(eps = {})", cfg.eps)))
}

fn run_noise(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let noise = sample_noise(cfg)?;
    let dim = cfg.measure.dim();
    let spec = cfg.grid_spec(dim);
    let mut table = Table::new(if dim == Dim::One { &["x0", "value"] } else { &["x0", "x1", "value"] });
    for k in 0..spec.points_per_slice() {
        let p = spec.point(k);
        let v = noise.eval(p);
        if dim == Dim::One {
            table.row([f(p[0]), f(v)]);
        } else {
            table.row([f(p[0]), f(p[1]), f(v)]);
        }
    }
    let variance = cfg.measure.mollified_variance(cfg.eps).ok();
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({ "n_modes": noise.n_modes(), "mollified_variance": variance }),
        failed_checks: 0,
    })
}

fn run_picard(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let noise = sample_noise(cfg)?;
    let dim = cfg.measure.dim();
    let spec = cfg.grid_spec(dim);
    let iterates = picard::picard_run(&noise, &spec, cfg.n_iters).map_err(numerical("picard_solver", "picard_run"))?;
    let apex = picard::apex_with_error(&noise, &spec, cfg.n_iters).map_err(numerical("picard_solver", "apex_with_error"))?;
    let last = iterates.last().expect("iterates");
    let mut table = Table::new(if dim == Dim::One { &["t", "x0", "value"] } else { &["t", "x0", "x1", "value"] });
    for i in 0..=spec.n_t {
        for k in 0..spec.points_per_slice() {
            let p = spec.point(k);
            let v = last.get(i, k);
            if dim == Dim::One {
                table.row([f(spec.time(i)), f(p[0]), f(v)]);
            } else {
                table.row([f(spec.time(i)), f(p[0]), f(p[1]), f(v)]);
            }
        }
    }
    let apex_iterates: Vec<f64> = iterates.iter().map(|g| g.apex()).collect();
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({ "apex": apex.value, "grid_error": apex.grid_error, "apex_by_iterate": apex_iterates }),
        failed_checks: 0,
    })
}

const ESTIMATOR_COLUMNS: [&str; 10] = [
    "estimator",
    "t",
    "x0",
    "x1",
    "mean",
    "stderr",
    "n_samples",
    "max_jumps",
    "truncated_fraction",
    "seed",
];

fn estimator_row(table: &mut Table, cfg: &RunConfig, name: &str, r: &EstimatorResult) {
    let p = cfg.point();
    table.row([
        name.to_string(),
        f(cfg.t),
        f(p[0]),
        f(p[1]),
        f(r.mean),
        f(r.stderr),
        r.n_samples.to_string(),
        r.truncation_max_jumps.to_string(),
        f(r.truncated_fraction),
        r.seed.to_string(),
    ]);
}

fn run_fk(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let p = cfg.point();
    let base = FkConfig::new(cfg.n_paths, cfg.max_jumps, cfg.seed);
    let noise = sample_noise(cfg)?;
    let loc = |op: &str| format!("{op} at t = {}, x = {:?}", cfg.t, cfg.x);
    let realization = feynman_kac::fk_realization(&noise, cfg.t, p, &FkConfig { seed: stratowave::exec::derive_seed(cfg.seed, 1), ..base })
        .map_err(numerical("feynman_kac", loc("fk_realization")))?;
    let mean = feynman_kac::fk_mean(&cfg.measure, cfg.eps, cfg.t, p, &FkConfig { seed: stratowave::exec::derive_seed(cfg.seed, 2), ..base })
        .map_err(numerical("feynman_kac", loc("fk_mean")))?;
    let second = feynman_kac::fk_second_moment(&cfg.measure, cfg.eps, cfg.t, p, &FkConfig { seed: stratowave::exec::derive_seed(cfg.seed, 3), ..base })
        .map_err(numerical("feynman_kac", loc("fk_second_moment")))?;
    let mut table = Table::new(&ESTIMATOR_COLUMNS);
    estimator_row(&mut table, cfg, "fk_realization", &realization);
    estimator_row(&mut table, cfg, "fk_mean", &mean);
    estimator_row(&mut table, cfg, "fk_second_moment", &second);
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({ "realization": realization, "mean": mean, "second_moment": second }),
        failed_checks: 0,
    })
}

fn run_chaos(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    if let Some(n_top) = cfg.census {
        let mut table = Table::new(&["n", "k", "chaos_level", "term_count", "label"]);
        let mut rows = Vec::new();
        for n in 1..=n_top {
            for r in chaos::decomposition_census(n).map_err(numerical("chaos_engine", format!("census n = {n}")))? {
                table.row([r.n.to_string(), r.k.to_string(), r.chaos_level.to_string(), r.term_count.to_string(), r.label.clone()]);
                rows.push(r);
            }
        }
        return Ok(RunOutput {
            csv: table.finish(cfg),
            summary: json!({ "census": rows }),
            failed_checks: 0,
        });
    }
    let opts = ChaosOptions {
        seed: cfg.seed,
        n_samples: cfg.n_paths,
        ..ChaosOptions::default()
    };
    let series = chaos::stratonovich_mean_series(cfg.t, &cfg.measure, cfg.eps, cfg.n_max, &opts)
        .map_err(numerical("chaos_engine", format!("stratonovich_mean_series(n_max = {})", cfg.n_max)))?;
    let skorohod = chaos::skorohod_second_moment(cfg.t, cfg.point(), &cfg.measure, cfg.eps, cfg.n_max, &opts)
        .map_err(numerical("chaos_engine", format!("skorohod_second_moment(n_max = {})", cfg.n_max)))?;
    let mut table = Table::new(&["quantity", "n", "value", "stderr"]);
    for (n, e) in &series.terms {
        table.row(["stratonovich_mean_term".to_string(), n.to_string(), f(e.value), f(e.stderr)]);
    }
    table.row(["stratonovich_mean".to_string(), cfg.n_max.to_string(), f(series.value), f(series.stderr)]);
    for (i, e) in skorohod.terms.iter().enumerate() {
        table.row(["skorohod_term".to_string(), (i + 1).to_string(), f(e.value), f(e.stderr)]);
    }
    table.row(["skorohod_second_moment".to_string(), cfg.n_max.to_string(), f(skorohod.value), f(skorohod.stderr)]);
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({
            "stratonovich_mean": series.value,
            "skorohod_second_moment": skorohod.value,
            "skorohod_tail_ratio": skorohod.tail_ratio,
        }),
        failed_checks: 0,
    })
}

fn run_compare(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let rec = suite::reconcile(&cfg.measure, &cfg.compare_params())
        .map_err(numerical("compare", format!("reconcile at t = {}, x = {:?}", cfg.t, cfg.x)))?;
    let mut table = Table::new(&["quantity", "method", "mean", "stderr", "versus", "abs_delta_over_sigma"]);
    for e in &rec.estimates {
        for g in rec.gaps.iter().filter(|g| g.quantity == e.quantity && (g.a == e.method || g.b == e.method)) {
            let other = if g.a == e.method { &g.b } else { &g.a };
            table.row([e.quantity.clone(), e.method.clone(), f(e.mean), f(e.stderr), other.clone(), f(g.ratio)]);
        }
    }
    Ok(RunOutput {
        csv: table.finish(cfg),
        summary: json!({ "reconciliation": rec, "worst_ratio": rec.worst_ratio() }),
        failed_checks: 0,
    })
}
