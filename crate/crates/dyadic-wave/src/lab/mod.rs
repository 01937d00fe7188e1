//! Experiment harness: fits, configuration, registry, and reports.

pub mod fit;
mod registry;
#[cfg(test)]
mod tests;

pub use fit::{linear_fit, loglog_fit, LogLogFit};
pub use registry::{experiment_names, experiments, ExperimentInfo};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable that overrides the thread count.
pub const THREADS_ENV: &str = "DYADIC_WAVE_THREADS";

/// One experiment run as read from a JSON file. `params` and `tolerances`
/// are checked against the experiment's own schema; missing keys take the
/// experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub params: Value,
    pub tolerances: Value,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn with_params(mut self, params: Value) -> Self {
        self.params = params;
        self
    }

    pub fn with_tolerances(mut self, tolerances: Value) -> Self {
        self.tolerances = tolerances;
        self
    }

    /// SHA-256 of the canonical JSON of everything that affects the numbers
    /// (name, seed, params, tolerances).
    pub fn hash(&self) -> String {
        let key = serde_json::json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "params": self.params,
            "tolerances": self.tolerances,
        });
        let bytes = serde_json::to_vec(&key).expect("json values serialize");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A CSV cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // shortest round-trip form, so equal numbers give equal bytes
            Cell::Num(v) => format!("{v:e}"),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Raw measurements with a fixed column order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl NamedFit {
    pub fn from_loglog(name: &str, f: &LogLogFit) -> Self {
        Self { name: name.into(), slope: f.slope, intercept: f.intercept, r2: f.r2, window: f.window, points: f.points }
    }

    pub fn from_decay(name: &str, f: &crate::waveprop::DecayFit) -> Self {
        Self {
            name: name.into(),
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r2,
            window: f.window,
            points: f.abscissa.len(),
        }
    }
}

/// Where a tolerance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceSource {
    /// The experiment's built-in default.
    Default,
    /// Set in the `tolerances` block to something other than the default.
    Config,
}

/// One pass/fail comparison: `lower <= value <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Key of the tolerance in the `tolerances` block.
    pub tolerance: String,
    pub source: ToleranceSource,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>, tolerance: &str, source: ToleranceSource) -> Self {
        let pass = !value.is_nan() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self { name: name.into(), value, lower, upper, tolerance: tolerance.into(), source, pass }
    }

    pub fn describe(&self) -> String {
        let bound = match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("in [{l:.4}, {u:.4}]"),
            (Some(l), None) => format!(">= {l:.4e}"),
            (None, Some(u)) => format!("<= {u:.4e}"),
            (None, None) => "unbounded".into(),
        };
        format!("{} = {:.4e} {} ({} tolerance '{}')", self.name, self.value, bound, match self.source {
            ToleranceSource::Default => "default",
            ToleranceSource::Config => "configured",
        }, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    /// The config with every default filled in; rerunning it reproduces the table.
    pub config: ExperimentConfig,
    pub threads: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub measurements_file: Option<String>,
    pub columns: Vec<String>,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Experiment-specific extras (full result structs).
    pub details: Value,
    pub provenance: Provenance,
    #[serde(skip)]
    pub table: Table,
}

/// What one experiment hands back to the harness.
pub(crate) struct Outcome {
    pub table: Table,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
    pub details: Value,
}

/// Checks the config against the experiment's schema and returns it with
/// all defaults filled in.
pub fn validate_config(config: &ExperimentConfig) -> Result<ExperimentConfig> {
    let (params, tolerances) = registry::resolve(&config.experiment, &config.params, &config.tolerances)?;
    if config.threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    Ok(ExperimentConfig { params, tolerances, ..config.clone() })
}

/// Runs the named experiment and, when `out_dir` is set, writes
/// `<name>.csv` and `<name>.json` there. Nothing is written on error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    let resolved = validate_config(config)?;
    let started = Instant::now();
    let go = || registry::execute(&resolved);
    let (outcome, threads) = match resolved.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            (pool.install(go)?, n)
        }
        None => (go()?, rayon::current_num_threads()),
    };
    let name = resolved.experiment.clone();
    let measurements_file = resolved.out_dir.as_ref().map(|_| format!("{name}.csv"));
    let report = Report {
        experiment: name.clone(),
        config_hash: resolved.hash(),
        seed: resolved.seed,
        measurements_file,
        columns: outcome.table.columns.clone(),
        pass: outcome.checks.iter().all(|c| c.pass),
        fits: outcome.fits,
        checks: outcome.checks,
        details: outcome.details,
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: resolved.clone(),
            threads,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
        table: outcome.table,
    };
    if let Some(dir) = &resolved.out_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.csv", report.experiment)), report.table.to_csv())?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{}.json", report.experiment)), json)?;
    Ok(())
}

/// `DYADIC_WAVE_THREADS` if set and valid, else `flag`.
pub fn thread_override(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        Err(_) => Ok(flag),
    }
}
