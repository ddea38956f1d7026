//! Run orchestration: configuration, execution, acceptance checks, sweeps and
//! re-evaluation of stored runs.
//!
//! A run directory holds `flow.csv`, `diagnostics.csv`, `structure.csv`,
//! `rescaled_<i>.csv`, `report.json` and `manifest.json`. Exit statuses are
//! 0 (all enabled checks pass), 1 (acceptance failure), 2 (configuration
//! error) and 3 (runtime error).

pub mod checks;
pub mod config;
pub mod output;

pub use checks::{all_passed, analyze, evaluate_checks, run_suites, Analysis, CheckMap, CheckOutcome, CheckStatus, SuiteResults};
pub use config::{parse_config, CheckConfig, ConfigError, RunConfig};

use crate::flow::{estimate_blowup_time, run_scenario, FlowRun, Scenario, StopReason};
use crate::singularity::{BlowupSequence, Classification, SplittingReport, TypeReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Smallest heat-residual convergence order a sweep accepts.
pub const ORDER_THRESHOLD: f64 = 1.9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            HarnessError::Config(_) | HarnessError::Invalid(_) => ExitStatus::ConfigError,
            HarnessError::Io { .. } => ExitStatus::RuntimeError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Pass,
    AcceptanceFailure,
    ConfigError,
    RuntimeError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::AcceptanceFailure => 1,
            ExitStatus::ConfigError => 2,
            ExitStatus::RuntimeError => 3,
        }
    }

    fn worst(self, other: ExitStatus) -> ExitStatus {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(parse_config(&text)?)
}

/// Values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn apply_overrides(mut config: RunConfig, ov: &Overrides) -> RunConfig {
    if let Some(d) = &ov.output_dir {
        config.output_dir = d.clone();
    }
    if let Some(s) = ov.seed {
        config.seed = s;
    }
    config
}

/// Written last into every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub config: RunConfig,
    pub stop_reason: Option<StopReason>,
    pub t_predicted: Option<f64>,
    pub t_observed: Option<f64>,
    pub classification: Option<Classification>,
    pub plateau_value: Option<f64>,
    pub checks: CheckMap,
    pub passed: bool,
    pub exit_status: ExitStatus,
    pub exit_code: i32,
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub files: Vec<String>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub stop_reason: StopReason,
    pub t_predicted: f64,
    pub t_observed: Option<f64>,
    pub type_report: TypeReport,
    pub sequence: Option<BlowupSequence>,
    pub splitting: Option<SplittingReport>,
    pub analysis_error: Option<String>,
    pub suites: SuiteResults,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::io(path, e.into()))?;
    bytes.push(b'\n');
    output::write_atomic(path, &bytes).map_err(|e| HarnessError::io(path, e))
}

fn clear_rescaled(dir: &Path) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("rescaled_") && name.ends_with(".csv") {
            std::fs::remove_file(entry.path()).map_err(|e| HarnessError::io(&entry.path(), e))?;
        }
    }
    Ok(())
}

/// Everything derived from a finished run.
struct Evaluated {
    analysis: Analysis,
    suites: SuiteResults,
    checks: CheckMap,
}

fn evaluate(config: &RunConfig, run: &FlowRun) -> Evaluated {
    let analysis = analyze(run, &config.analysis);
    let suites = run_suites(config);
    let checks = evaluate_checks(config, run, &analysis, &suites);
    Evaluated {
        analysis,
        suites,
        checks,
    }
}

fn execute_inner(config: &RunConfig) -> Result<(RunManifest, Option<FlowRun>), HarnessError> {
    let clock = Instant::now();
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        code_version: CODE_VERSION.to_string(),
        config: config.clone(),
        stop_reason: None,
        t_predicted: None,
        t_observed: None,
        classification: None,
        plateau_value: None,
        checks: CheckMap::new(),
        passed: false,
        exit_status: ExitStatus::RuntimeError,
        exit_code: ExitStatus::RuntimeError.code(),
        error: None,
        wall_seconds: 0.0,
        files: Vec::new(),
    };
    let run = match run_scenario(&config.scenario, &config.solver, &config.recording) {
        Ok(run) => run,
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.wall_seconds = clock.elapsed().as_secs_f64();
            manifest.files.push("manifest.json".into());
            write_json(&dir.join("manifest.json"), &manifest)?;
            return Ok((manifest, None));
        }
    };
    let mut files = Vec::new();
    let mut emit = |name: &str, r: std::io::Result<()>| -> Result<(), HarnessError> {
        r.map_err(|e| HarnessError::io(&dir.join(name), e))?;
        files.push(name.to_string());
        Ok(())
    };
    emit("flow.csv", output::write_flow_csv(&dir.join("flow.csv"), &run.steps))?;
    emit("diagnostics.csv", output::write_diagnostics_csv(&dir.join("diagnostics.csv"), &run.nodes))?;
    emit("structure.csv", output::write_structure_csv(&dir.join("structure.csv"), &run.structure))?;

    let ev = evaluate(config, &run);
    clear_rescaled(dir)?;
    if let Some(rs) = &ev.analysis.rescaled {
        for (i, pick) in rs.picks.iter().enumerate() {
            let name = format!("rescaled_{i}.csv");
            emit(&name, output::write_rescaled_csv(&dir.join(&name), pick))?;
        }
    }
    let report = RunReport {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scenario: run.scenario,
        stop_reason: run.stop_reason,
        t_predicted: run.t_predicted,
        t_observed: run.t_observed,
        type_report: ev.analysis.type_report.clone(),
        sequence: ev.analysis.sequence.clone(),
        splitting: ev.analysis.splitting.clone(),
        analysis_error: ev.analysis.error.clone(),
        suites: ev.suites.clone(),
    };
    write_json(&dir.join("report.json"), &report)?;
    files.push("report.json".into());
    files.push("manifest.json".into());

    let passed = all_passed(&ev.checks);
    let status = if run.stop_reason.is_graceful_error() {
        manifest.error = Some(format!("solver stopped: {:?}", run.stop_reason));
        ExitStatus::RuntimeError
    } else if passed {
        ExitStatus::Pass
    } else {
        ExitStatus::AcceptanceFailure
    };
    manifest.stop_reason = Some(run.stop_reason);
    manifest.t_predicted = Some(run.t_predicted);
    manifest.t_observed = run.t_observed;
    manifest.classification = Some(ev.analysis.type_report.classification);
    manifest.plateau_value = finite(ev.analysis.type_report.plateau_value);
    manifest.checks = ev.checks;
    manifest.passed = passed;
    manifest.exit_status = status;
    manifest.exit_code = status.code();
    manifest.wall_seconds = clock.elapsed().as_secs_f64();
    manifest.files = files;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok((manifest, Some(run)))
}

/// Runs a configuration and writes its run directory. Compute errors are
/// recorded in the manifest; only I/O failures are returned as errors.
pub fn execute(config: &RunConfig) -> Result<RunManifest, HarnessError> {
    execute_inner(config).map(|(m, _)| m)
}

/// The parts of a stored manifest needed to re-evaluate a run.
#[derive(Debug, Clone, Deserialize)]
struct StoredManifest {
    schema_version: u32,
    config: RunConfig,
    stop_reason: Option<StopReason>,
    t_predicted: Option<f64>,
    wall_seconds: f64,
    checks: CheckMap,
}

/// Result of re-evaluating a stored run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub run_dir: PathBuf,
    pub checks: CheckMap,
    pub passed: bool,
    /// Check statuses agree with the stored manifest.
    pub matches_manifest: bool,
    pub exit_status: ExitStatus,
}

/// Rebuilds a run from its CSVs and manifest and re-evaluates every check.
pub fn check_run_dir(dir: &Path) -> Result<CheckReport, HarnessError> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let stored: StoredManifest = serde_json::from_str(&text).map_err(|e| HarnessError::io(&path, e.into()))?;
    if stored.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(HarnessError::Invalid(format!(
            "{}: unsupported manifest schema {}",
            path.display(),
            stored.schema_version
        )));
    }
    let (Some(stop_reason), Some(t_predicted)) = (stored.stop_reason, stored.t_predicted) else {
        return Err(HarnessError::Invalid(format!(
            "{}: the run did not complete, nothing to check",
            dir.display()
        )));
    };
    let flow = dir.join("flow.csv");
    let steps = output::read_flow_csv(&flow).map_err(|e| HarnessError::io(&flow, e))?;
    let structure_path = dir.join("structure.csv");
    let structure = if structure_path.exists() {
        output::read_structure_csv(&structure_path).map_err(|e| HarnessError::io(&structure_path, e))?
    } else {
        Vec::new()
    };
    let run = FlowRun {
        scenario: stored.config.scenario,
        t_observed: estimate_blowup_time(&steps, t_predicted),
        initial_grad_sq: steps.first().map_or(0.0, |s| s.max_grad_sq),
        steps,
        nodes: Vec::new(),
        structure,
        states: Vec::new(),
        final_state: None,
        t_predicted,
        stop_reason,
        wall_seconds: stored.wall_seconds,
    };
    let ev = evaluate(&stored.config, &run);
    let matches_manifest = ev.checks.len() == stored.checks.len()
        && ev
            .checks
            .iter()
            .all(|(k, v)| stored.checks.get(k).is_some_and(|s| s.status == v.status));
    let passed = all_passed(&ev.checks);
    Ok(CheckReport {
        run_dir: dir.to_path_buf(),
        checks: ev.checks,
        passed,
        matches_manifest,
        exit_status: if passed {
            ExitStatus::Pass
        } else {
            ExitStatus::AcceptanceFailure
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub grid_points: Option<usize>,
    pub spacing: Option<f64>,
    pub probe_time: Option<f64>,
    /// Heat residual at the step landing on `probe_time`.
    pub probe_heat_residual: Option<f64>,
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub members: Vec<SweepMember>,
    /// Slope of `log(residual)` against `log(Δρ)` over the members.
    pub convergence_order: Option<f64>,
    pub order_threshold: f64,
    pub exit_status: ExitStatus,
    pub exit_code: i32,
}

fn probe_residual(run: &FlowRun, probe: f64) -> Option<f64> {
    run.steps
        .iter()
        .find(|s| (s.t - probe).abs() <= 1e-12 * probe.abs().max(1.0))
        .map(|s| s.heat_residual)
        .filter(|r| r.is_finite())
}

/// Runs the member configurations on at most `workers` threads and writes
/// `sweep_summary.json` into `summary_dir`.
pub fn sweep(configs: &[(PathBuf, RunConfig)], workers: usize, summary_dir: &Path) -> Result<SweepSummary, HarnessError> {
    if configs.is_empty() {
        return Err(HarnessError::Invalid("sweep has no member configurations".into()));
    }
    let mut dirs: Vec<&PathBuf> = configs.iter().map(|(_, c)| &c.output_dir).collect();
    dirs.sort();
    if let Some(w) = dirs.windows(2).find(|w| w[0] == w[1]) {
        return Err(HarnessError::Invalid(format!(
            "two sweep members write to {}",
            w[0].display()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let members: Vec<SweepMember> = pool.install(|| {
        configs
            .par_iter()
            .map(|(path, cfg)| {
                let (grid_points, spacing) = match &cfg.scenario {
                    Scenario::Hirzebruch(p) => (Some(p.grid_points), Some(p.spacing())),
                    Scenario::Product(_) => (None, None),
                };
                let mut member = SweepMember {
                    config_path: path.clone(),
                    output_dir: cfg.output_dir.clone(),
                    grid_points,
                    spacing,
                    probe_time: cfg.solver.probe_time,
                    probe_heat_residual: None,
                    exit_code: ExitStatus::RuntimeError.code(),
                    error: None,
                };
                match execute_inner(cfg) {
                    Ok((manifest, run)) => {
                        member.exit_code = manifest.exit_code;
                        member.error = manifest.error;
                        if let (Some(run), Some(p)) = (run, cfg.solver.probe_time) {
                            member.probe_heat_residual = probe_residual(&run, p);
                        }
                    }
                    Err(e) => member.error = Some(e.to_string()),
                }
                member
            })
            .collect()
    });
    let points: Vec<(f64, f64)> = members
        .iter()
        .filter_map(|m| match (m.spacing, m.probe_heat_residual) {
            (Some(h), Some(r)) if r > 0.0 => Some((h.ln(), r.ln())),
            _ => None,
        })
        .collect();
    let convergence_order = if points.len() >= 2 {
        crate::flow::linear_fit(&points).map(|l| l.0)
    } else {
        None
    };
    let mut status = ExitStatus::Pass;
    for m in &members {
        let s = match m.exit_code {
            0 => ExitStatus::Pass,
            1 => ExitStatus::AcceptanceFailure,
            2 => ExitStatus::ConfigError,
            _ => ExitStatus::RuntimeError,
        };
        status = status.worst(s);
    }
    if let Some(order) = convergence_order {
        if order < ORDER_THRESHOLD {
            status = status.worst(ExitStatus::AcceptanceFailure);
        }
    }
    let summary = SweepSummary {
        schema_version: MANIFEST_SCHEMA_VERSION,
        members,
        convergence_order,
        order_threshold: ORDER_THRESHOLD,
        exit_status: status,
        exit_code: status.code(),
    };
    std::fs::create_dir_all(summary_dir).map_err(|e| HarnessError::io(summary_dir, e))?;
    write_json(&summary_dir.join("sweep_summary.json"), &summary)?;
    Ok(summary)
}
