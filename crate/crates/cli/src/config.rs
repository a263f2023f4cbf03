//! Run configuration: a TOML document with `[problem]`, `[oracle]`,
//! `[solver]` and `[sweep]` sections. `--set key=value` flags are merged
//! into the parsed table before it is deserialized.

use std::path::{Path, PathBuf};

use salm::benchmarks::GeneratorSpec;
use salm::solvers::{Algorithm, ScaledSchedule};
use salm::{LkConvention, OracleKind};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

pub const OUTPUT_DIR_ENV: &str = "SALM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "salm-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
    #[serde(default)]
    pub record_potential: bool,
    #[serde(default)]
    pub early_stop: Option<f64>,
    /// Batch `B` of the post-processing step; skipped when absent.
    #[serde(default)]
    pub postprocess_batch: Option<usize>,
    pub problem: ProblemSource,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Alg1
}
fn default_iterations() -> usize {
    1000
}
fn default_stride() -> usize {
    1
}

/// A generator with its parameters, or a serialized problem document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    File { path: PathBuf },
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSection {
    #[serde(flatten)]
    pub kind: OracleKind,
    /// Defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Constants from the complexity analysis.
    #[default]
    Theory,
    /// `T^{-1/2}` (`alg1`, `alg2`) or `T^{-1/3}` (`alg3`) steps with
    /// tuned constants.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_sigma_bar")]
    pub sigma_bar: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub lk_convention: LkConvention,
    #[serde(default)]
    pub literal_lambda: bool,
    pub c_tau: Option<f64>,
    pub c_eta: Option<f64>,
    pub c_beta: Option<f64>,
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub m_y: Option<f64>,
    /// Radius `r` of the safeguard rule; needed for `alg2` when `m_y`
    /// is not given.
    pub my_radius: Option<f64>,
    #[serde(default = "default_my_samples")]
    pub my_samples: usize,
}

fn default_rho() -> f64 {
    5.0
}
fn default_sigma_bar() -> f64 {
    1.0
}
fn default_my_samples() -> usize {
    200
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            rho: default_rho(),
            sigma_bar: default_sigma_bar(),
            schedule: ScheduleKind::default(),
            lk_convention: LkConvention::default(),
            literal_lambda: false,
            c_tau: None,
            c_eta: None,
            c_beta: None,
            tau: None,
            eta: None,
            beta: None,
            alpha: None,
            m_y: None,
            my_radius: None,
            my_samples: default_my_samples(),
        }
    }
}

impl SolverSection {
    pub fn schedule_for(&self, alg: Algorithm) -> ScaledSchedule {
        let base = ScaledSchedule::for_algorithm(alg);
        ScaledSchedule {
            c_tau: self.c_tau.unwrap_or(base.c_tau),
            c_eta: self.c_eta.unwrap_or(base.c_eta),
            c_beta: self.c_beta.unwrap_or(base.c_beta),
            exponent: base.exponent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub iterations: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Worker threads; all cores when absent.
    pub jobs: Option<usize>,
}

/// Parses a `key=value` flag. The value is read as a TOML literal, falling
/// back to a bare string.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key=value, got {s:?}")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("empty key in {s:?}")));
    }
    let raw = v.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets a dotted key such as `solver.rho`, creating tables on the way.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for part in parts {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn load_table(path: Option<&Path>) -> Result<Table, CliError> {
    match path {
        None => Ok(Table::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Reads the file (if any), applies the overrides in order and validates.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = load_table(path)?;
    for o in overrides {
        let (k, v) = parse_assignment(o)?;
        set_dotted(&mut table, &k, v)?;
    }
    from_table(table, path.and_then(Path::parent))
}

pub fn from_table(table: Table, base: Option<&Path>) -> Result<RunConfig, CliError> {
    if !table.contains_key("problem") {
        return Err(CliError::Config("missing [problem] section".into()));
    }
    let mut cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    // Relative instance paths are taken from the config file's directory.
    if let (ProblemSource::File { path }, Some(base)) = (&mut cfg.problem, base) {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trace_stride == 0 {
            return Err(CliError::Config("trace_stride must be positive".into()));
        }
        if let Some(eps) = self.early_stop {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(CliError::Config(format!("early_stop must be positive, got {eps}")));
            }
        }
        if self.postprocess_batch == Some(0) {
            return Err(CliError::Config("postprocess_batch must be positive".into()));
        }
        let s = &self.solver;
        for (name, v) in [("rho", Some(s.rho)), ("sigma_bar", Some(s.sigma_bar)), ("m_y", s.m_y), ("my_radius", s.my_radius)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("solver.{name} must be positive, got {v}")));
                }
            }
        }
        if self.sweep.jobs == Some(0) {
            return Err(CliError::Config("sweep.jobs must be positive".into()));
        }
        Ok(())
    }

    /// `--output` flag or `SALM_OUTPUT_DIR` first, then the file, then the
    /// default. Clap folds the environment variable into the flag.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
