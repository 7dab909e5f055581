//! Experiment matrix: (scale, algorithm, seed) cells, their summary rows
//! and per-(scale, algorithm) means.
//!
//! The summary CSV layout is fixed:
//!
//! ```text
//! algo,seed,n_workloads,n_instances,makespan,mean_exec_time,total_cost,cost_per_workload,objective_z,valid
//! ```
//!
//! Cell rows come first, ordered by scale, then by the position of the
//! algorithm in the config, then by seed. Aggregate rows follow in the same
//! scale/algorithm order with `mean` in the seed column. Floats carry six
//! significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines;
use crate::edbrs;
use crate::gen::{self, GenSpec, Scenario};
use crate::model::{MetricsReport, Schedule};
use crate::optimal::{self, OracleCaps, SolveError};
use crate::sim;

pub const SUMMARY_HEADER: &str =
    "algo,seed,n_workloads,n_instances,makespan,mean_exec_time,total_cost,cost_per_workload,objective_z,valid";

pub const DETAIL_HEADER: &str =
    "algo,seed,n_workloads,n_instances,workload_id,first_start,completion,flow_time,lateness";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Edbrs,
    Fcfs,
    Minmin,
    Maxmin,
    Optimal,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Edbrs => "edbrs",
            Algorithm::Fcfs => "fcfs",
            Algorithm::Minmin => "minmin",
            Algorithm::Maxmin => "maxmin",
            Algorithm::Optimal => "optimal",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        [
            Algorithm::Edbrs,
            Algorithm::Fcfs,
            Algorithm::Minmin,
            Algorithm::Maxmin,
            Algorithm::Optimal,
        ]
        .into_iter()
        .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Either generator settings or the path of a scenario JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(PathBuf),
    Spec(GenSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub n_workloads: usize,
    pub n_instances: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Also emit one row per workload (CSV: `<path>.detail.csv`).
    #[serde(default)]
    pub detail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gen: ScenarioSource,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Overrides the generator sizes; empty keeps the ones in `gen`.
    #[serde(default)]
    pub scales: Vec<Scale>,
    /// Delivery-date window for EDBRS batches; defaults to the ATU length.
    #[serde(default)]
    pub batch_window: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn effective_seeds(&self) -> Vec<u64> {
        match (&self.gen, self.seeds.is_empty()) {
            (ScenarioSource::Spec(s), true) => vec![s.seed],
            (ScenarioSource::Path(_), true) => vec![0],
            _ => self.seeds.clone(),
        }
    }

    fn effective_scales(&self) -> Vec<Option<Scale>> {
        match &self.gen {
            ScenarioSource::Spec(_) if !self.scales.is_empty() => {
                self.scales.iter().copied().map(Some).collect()
            }
            _ => vec![None],
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required".into());
        }
        if let Some(w) = self.batch_window {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("batch_window must be > 0 (got {w})"));
            }
        }
        if let ScenarioSource::Spec(spec) = &self.gen {
            for scale in self.effective_scales() {
                let mut s = spec.clone();
                if let Some(sc) = scale {
                    s.n_workloads = sc.n_workloads;
                    s.n_instances = sc.n_instances;
                }
                s.validate()
                    .map_err(|e| ExperimentError::Config(e.to_string()))?;
                let caps = OracleCaps::default();
                if self.algorithms.contains(&Algorithm::Optimal)
                    && (s.n_workloads > caps.max_workloads || s.n_instances > caps.max_instances)
                {
                    return bad(format!(
                        "optimal is limited to {} workloads and {} instances (scale {}x{})",
                        caps.max_workloads, caps.max_instances, s.n_workloads, s.n_instances
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Why a cell produced no metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellFailure {
    Invalid,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algo: Algorithm,
    pub seed: u64,
    pub n_workloads: usize,
    pub n_instances: usize,
    pub metrics: Option<MetricsReport>,
    pub failure: Option<CellFailure>,
    pub diagnostic: Option<String>,
}

impl CellResult {
    pub fn valid(&self) -> bool {
        self.metrics.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algo: Algorithm,
    pub n_workloads: usize,
    pub n_instances: usize,
    pub cells: usize,
    pub makespan: f64,
    pub mean_exec_time: f64,
    pub total_cost: f64,
    pub cost_per_workload: f64,
    pub objective_z: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

/// Runs one algorithm on one scenario and checks the result.
pub fn run_algorithm(
    scenario: &Scenario,
    algo: Algorithm,
    batch_window: Option<f64>,
) -> Result<(Schedule, MetricsReport), (CellFailure, String)> {
    let Scenario {
        config,
        fleet,
        workloads,
    } = scenario;
    let invalid = |e: &dyn std::fmt::Display| (CellFailure::Invalid, e.to_string());
    let (schedule, bow) = match algo {
        Algorithm::Edbrs => {
            let sorted = edbrs::sort_workloads(workloads.workloads()).map_err(|e| invalid(&e))?;
            let window = batch_window.unwrap_or(config.atu_length());
            let mut batches = edbrs::partition_batches(&sorted, window).map_err(|e| invalid(&e))?;
            (
                edbrs::dispatch(&mut batches, fleet, config).map_err(|e| invalid(&e))?,
                workloads.clone(),
            )
        }
        Algorithm::Fcfs => (
            baselines::fcfs_schedule(workloads, fleet, config).map_err(|e| invalid(&e))?,
            workloads.clone(),
        ),
        Algorithm::Minmin => (
            baselines::min_min_schedule(workloads, fleet, config).map_err(|e| invalid(&e))?,
            workloads.clone(),
        ),
        Algorithm::Maxmin => (
            baselines::max_min_schedule(workloads, fleet, config).map_err(|e| invalid(&e))?,
            workloads.clone(),
        ),
        Algorithm::Optimal => {
            // bag-of-workloads view: operation lists and eligibility are ignored
            let bow = crate::model::BagOfWorkloads::new(
                workloads.workloads().iter().map(|w| w.to_bow()).collect(),
            )
            .map_err(|e| invalid(&e))?;
            let solved = optimal::solve_general(&bow, config).map_err(|e| match e {
                SolveError::Infeasible(_) => (CellFailure::Infeasible, e.to_string()),
                other => invalid(&other),
            })?;
            let full = config.full_fleet();
            if full != *fleet {
                return Err(invalid(
                    &"optimal needs the scenario fleet to cover every lease slot",
                ));
            }
            let schedule = Schedule::from_assignment(&solved.best, &bow, config)
                .ok_or_else(|| invalid(&"assignment refers to unknown workloads"))?;
            (schedule, bow)
        }
    };
    let violations = sim::validate_schedule(&schedule, &bow, fleet, config);
    if let Some(v) = violations.first() {
        return Err((
            CellFailure::Invalid,
            format!(
                "{} violation(s), first: {}",
                violations.len(),
                v.description
            ),
        ));
    }
    let metrics = sim::compute_metrics(&schedule, &bow, fleet, config).map_err(|e| invalid(&e))?;
    Ok((schedule, metrics))
}

fn load_scenario(path: &Path) -> Result<Scenario, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let s: Scenario = serde_json::from_str(&text)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
    s.check()
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

/// Runs every cell of the matrix. Cells are independent and run in parallel;
/// the report order does not depend on completion order.
pub fn run(config: &ExperimentConfig) -> Result<Report, ExperimentError> {
    config.validate()?;
    let seeds = config.effective_seeds();
    let scales = config.effective_scales();
    let file_scenario = match &config.gen {
        ScenarioSource::Path(p) => Some(load_scenario(p)?),
        ScenarioSource::Spec(_) => None,
    };

    let mut jobs = Vec::new();
    for (si, scale) in scales.iter().enumerate() {
        for (ai, &algo) in config.algorithms.iter().enumerate() {
            for &seed in &seeds {
                jobs.push((si, ai, *scale, algo, seed));
            }
        }
    }

    let mut cells: Vec<((usize, usize, u64), CellResult)> = jobs
        .into_par_iter()
        .map(|(si, ai, scale, algo, seed)| {
            let scenario = match (&config.gen, &file_scenario) {
                (_, Some(s)) => Ok(s.clone()),
                (ScenarioSource::Spec(spec), None) => {
                    let mut spec = spec.clone();
                    spec.seed = seed;
                    if let Some(sc) = scale {
                        spec.n_workloads = sc.n_workloads;
                        spec.n_instances = sc.n_instances;
                    }
                    gen::generate(&spec).map_err(|e| e.to_string())
                }
                _ => unreachable!("path sources are loaded up front"),
            };
            let (n_workloads, n_instances) = match &scenario {
                Ok(s) => (s.workloads.len(), s.fleet.len()),
                Err(_) => scale.map_or((0, 0), |s| (s.n_workloads, s.n_instances)),
            };
            let outcome = scenario
                .map_err(|e| (CellFailure::Invalid, e))
                .and_then(|s| run_algorithm(&s, algo, config.batch_window));
            let (metrics, failure, diagnostic) = match outcome {
                Ok((_, m)) => (Some(m), None, None),
                Err((f, d)) => (None, Some(f), Some(d)),
            };
            (
                (si, ai, seed),
                CellResult {
                    algo,
                    seed,
                    n_workloads,
                    n_instances,
                    metrics,
                    failure,
                    diagnostic,
                },
            )
        })
        .collect();
    cells.sort_by_key(|(k, _)| *k);

    let mut aggregates = Vec::new();
    for si in 0..scales.len() {
        for ai in 0..config.algorithms.len() {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|((s, a, _), _)| *s == si && *a == ai)
                .map(|(_, c)| c)
                .collect();
            let ok: Vec<&MetricsReport> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let mean = |f: fn(&MetricsReport) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                }
            };
            let first = group[0];
            aggregates.push(Aggregate {
                algo: config.algorithms[ai],
                n_workloads: first.n_workloads,
                n_instances: first.n_instances,
                cells: ok.len(),
                makespan: mean(|m| m.makespan),
                mean_exec_time: mean(|m| m.mean_exec_time),
                total_cost: mean(|m| m.total_cost),
                cost_per_workload: mean(|m| m.cost_per_workload),
                objective_z: mean(|m| m.objective_z),
                valid: ok.len() == group.len(),
            });
        }
    }
    Ok(Report {
        cells: cells.into_iter().map(|(_, c)| c).collect(),
        aggregates,
    })
}

/// Six significant digits, plain decimal notation, `.` separator.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let sci = format!("{:.5e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp >= 5 {
        format!("{digits}{}", "0".repeat((exp - 5) as usize))
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    let body = body.trim_end_matches('.').to_string();
    if x < 0.0 {
        format!("-{body}")
    } else {
        body
    }
}

fn metric_fields(m: Option<&MetricsReport>) -> [f64; 5] {
    match m {
        Some(m) => [
            m.makespan,
            m.mean_exec_time,
            m.total_cost,
            m.cost_per_workload,
            m.objective_z,
        ],
        None => [f64::NAN; 5],
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SUMMARY_HEADER);
        out.push('\n');
        for c in &self.cells {
            let f = metric_fields(c.metrics.as_ref());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.algo.name(),
                c.seed,
                c.n_workloads,
                c.n_instances,
                fmt_sig6(f[0]),
                fmt_sig6(f[1]),
                fmt_sig6(f[2]),
                fmt_sig6(f[3]),
                fmt_sig6(f[4]),
                c.valid()
            );
        }
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},mean,{},{},{},{},{},{},{},{}",
                a.algo.name(),
                a.n_workloads,
                a.n_instances,
                fmt_sig6(a.makespan),
                fmt_sig6(a.mean_exec_time),
                fmt_sig6(a.total_cost),
                fmt_sig6(a.cost_per_workload),
                fmt_sig6(a.objective_z),
                a.valid
            );
        }
        out
    }

    pub fn detail_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(DETAIL_HEADER);
        out.push('\n');
        for c in &self.cells {
            let Some(m) = &c.metrics else { continue };
            for w in &m.per_workload {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    c.algo.name(),
                    c.seed,
                    c.n_workloads,
                    c.n_instances,
                    w.workload_id.0,
                    fmt_sig6(w.first_start),
                    fmt_sig6(w.completion),
                    fmt_sig6(w.flow_time),
                    fmt_sig6(w.lateness)
                );
            }
        }
        out
    }

    /// Summary rows and aggregates as JSON (per-instance and per-workload
    /// detail included only when `detail` is set).
    pub fn to_json(&self, detail: bool) -> String {
        let mut report = self.clone();
        if !detail {
            for c in &mut report.cells {
                if let Some(m) = &mut c.metrics {
                    m.per_instance.clear();
                    m.per_workload.clear();
                }
            }
        }
        serde_json::to_string_pretty(&report).expect("report serializes")
    }

    pub fn has_failure(&self, kind: CellFailure) -> bool {
        self.cells.iter().any(|c| c.failure == Some(kind))
    }

    pub fn aggregate(
        &self,
        algo: Algorithm,
        n_workloads: usize,
        n_instances: usize,
    ) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.algo == algo && a.n_workloads == n_workloads && a.n_instances == n_instances
        })
    }
}
