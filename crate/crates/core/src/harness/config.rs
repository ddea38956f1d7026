//! Strict TOML run configuration.
//!
//! ```toml
//! scenario = "hirzebruch"          # or "product"
//! output_dir = "runs/hirzebruch"   # default: runs/<scenario>
//! seed = 0                         # seeds the randomized oracle suites
//!
//! [params]      # product: n, f0, c0, r_h
//!               # hirzebruch: n, k, r_h, a0, b0, half_width, grid_points, skew
//! [solver]      # SolverOptions
//! [recording]   # stride, tracked_nodes, structure_checks, keep_states
//! [analysis]    # AnalysisOptions
//! [checks]      # disabled, suite_samples, max_wall_seconds, ...
//! ```
//!
//! Defaults: `n = 1`, `r_h = n(n + 1)` (Fubini–Study), hirzebruch
//! `k = 1, a0 = 1, b0 = 2, half_width = 20, grid_points = 512, skew = 0`.
//! Product runs require `f0` and `c0`.

use super::checks::CHECK_NAMES;
use crate::flow::{fubini_study_scalar, HirzebruchParams, ProductParams, ProfileShape, Recording, Scenario, SolverOptions};
use crate::singularity::AnalysisOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{key}`: {message}{}", suggestion_text(.suggestion))]
    Validation {
        key: String,
        message: String,
        suggestion: Option<String>,
    },
}

fn suggestion_text(s: &Option<String>) -> String {
    s.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default()
}

impl ConfigError {
    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Validation {
            key: key.into(),
            message: message.into(),
            suggestion: None,
        }
    }
}

/// Acceptance-check settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Names of checks to skip.
    pub disabled: Vec<String>,
    /// Random points per chart-level oracle suite.
    pub suite_samples: usize,
    /// Wall-clock budget; defaults to 5 s (product) or 60 s (hirzebruch).
    pub max_wall_seconds: Option<f64>,
    /// Bound on the per-step heat-equation residual.
    pub heat_residual_max: f64,
    /// Bound on the tail log-slope deviation.
    pub tail_slope_max: f64,
    /// `C₂` in the gradient bound `‖∇f‖² ≤ ‖∇f₀‖² e^{C₂ t}`.
    pub gradient_rate: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            disabled: Vec::new(),
            suite_samples: 20,
            max_wall_seconds: None,
            heat_residual_max: 5e-2,
            tail_slope_max: 1e-2,
            gradient_rate: 0.0,
        }
    }
}

impl CheckConfig {
    pub fn enabled(&self, name: &str) -> bool {
        !self.disabled.iter().any(|d| d == name)
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub solver: SolverOptions,
    pub recording: Recording,
    pub analysis: AnalysisOptions,
    pub checks: CheckConfig,
}

impl RunConfig {
    pub fn scenario_name(&self) -> &'static str {
        match self.scenario {
            Scenario::Product(_) => "product",
            Scenario::Hirzebruch(_) => "hirzebruch",
        }
    }

    pub fn max_wall_seconds(&self) -> f64 {
        self.checks.max_wall_seconds.unwrap_or(match self.scenario {
            Scenario::Product(_) => 5.0,
            Scenario::Hirzebruch(_) => 60.0,
        })
    }
}

const TOP_KEYS: &[&str] = &["scenario", "output_dir", "seed", "params", "solver", "recording", "analysis", "checks"];
const PRODUCT_KEYS: &[&str] = &["n", "f0", "c0", "r_h"];
const HIRZEBRUCH_KEYS: &[&str] = &["n", "k", "r_h", "a0", "b0", "half_width", "grid_points", "skew"];
pub(crate) const SOLVER_KEYS: &[&str] = &[
    "dt_factor",
    "approach_fraction",
    "stop_margin",
    "v_floor",
    "max_steps",
    "max_halvings",
    "newton_tol",
    "newton_max_iter",
    "probe_time",
    "end_time",
    "window_threshold",
];
pub(crate) const RECORDING_KEYS: &[&str] = &["stride", "tracked_nodes", "structure_checks", "keep_states"];
pub(crate) const ANALYSIS_KEYS: &[&str] = &[
    "mode",
    "growth",
    "min_picks",
    "window_cap",
    "bounded_factor",
    "flat_slope",
    "diverging_slope",
    "mixed_tolerance",
    "fiber_tolerance",
];
pub(crate) const CHECK_KEYS: &[&str] = &[
    "disabled",
    "suite_samples",
    "max_wall_seconds",
    "heat_residual_max",
    "tail_slope_max",
    "gradient_rate",
];

/// Closest candidate by Jaro–Winkler similarity, if reasonably close.
fn suggest(word: &str, candidates: &[&str]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::jaro_winkler(word, c), *c))
        .filter(|(score, _)| *score >= 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

fn check_keys(table: &toml::Table, prefix: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::Validation {
                key: format!("{prefix}{key}"),
                message: "unknown key".into(),
                suggestion: suggest(key, allowed),
            });
        }
    }
    Ok(())
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|c| *c != '\n').count() + 1;
    (line, column)
}

fn section(root: &toml::Table, name: &str, allowed: &[&str]) -> Result<toml::Table, ConfigError> {
    match root.get(name) {
        None => Ok(toml::Table::new()),
        Some(toml::Value::Table(t)) => {
            check_keys(t, &format!("{name}."), allowed)?;
            Ok(t.clone())
        }
        Some(_) => Err(ConfigError::invalid(name, "expected a table")),
    }
}

fn decode<T: DeserializeOwned>(table: toml::Table, name: &str) -> Result<T, ConfigError> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::invalid(name, e.message().to_string()))
}

fn get_f64(t: &toml::Table, prefix: &str, key: &str) -> Result<Option<f64>, ConfigError> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Float(x)) => Ok(Some(*x)),
        Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
        Some(_) => Err(ConfigError::invalid(format!("{prefix}{key}"), "expected a number")),
    }
}

fn get_uint(t: &toml::Table, prefix: &str, key: &str) -> Result<Option<u64>, ConfigError> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
        Some(_) => Err(ConfigError::invalid(
            format!("{prefix}{key}"),
            "expected a non-negative integer",
        )),
    }
}

fn product_params(t: &toml::Table) -> Result<ProductParams, ConfigError> {
    let n = get_uint(t, "params.", "n")?.unwrap_or(1) as usize;
    let required = |key: &str| {
        get_f64(t, "params.", key)?.ok_or_else(|| ConfigError::invalid(format!("params.{key}"), "required for product runs"))
    };
    let p = ProductParams {
        n,
        f0: required("f0")?,
        c0: required("c0")?,
        r_h: get_f64(t, "params.", "r_h")?.unwrap_or(fubini_study_scalar(n.max(1))),
    };
    if n < 1 {
        return Err(ConfigError::invalid("params.n", "must be at least 1"));
    }
    if !(p.f0 > 0.0) {
        return Err(ConfigError::invalid("params.f0", "must be positive"));
    }
    if !(p.c0 > 0.0) {
        return Err(ConfigError::invalid("params.c0", "must be positive"));
    }
    Ok(p)
}

fn hirzebruch_params(t: &toml::Table) -> Result<HirzebruchParams, ConfigError> {
    let d = HirzebruchParams::default();
    let n = get_uint(t, "params.", "n")?.unwrap_or(d.n as u64) as usize;
    let k = get_uint(t, "params.", "k")?.unwrap_or(d.k as u64);
    let skew = get_f64(t, "params.", "skew")?.unwrap_or(0.0);
    let p = HirzebruchParams {
        n,
        k: u32::try_from(k).map_err(|_| ConfigError::invalid("params.k", "too large"))?,
        r_h: get_f64(t, "params.", "r_h")?.unwrap_or(fubini_study_scalar(n.max(1))),
        a0: get_f64(t, "params.", "a0")?.unwrap_or(d.a0),
        b0: get_f64(t, "params.", "b0")?.unwrap_or(d.b0),
        half_width: get_f64(t, "params.", "half_width")?.unwrap_or(d.half_width),
        grid_points: get_uint(t, "params.", "grid_points")?.unwrap_or(d.grid_points as u64) as usize,
        shape: if skew == 0.0 {
            ProfileShape::Tanh
        } else {
            ProfileShape::Skewed(skew)
        },
    };
    if !(p.a0 < p.b0) {
        return Err(ConfigError::invalid(
            "params.b0",
            format!("must exceed a0 (a0 = {}, b0 = {})", p.a0, p.b0),
        ));
    }
    p.validate().map_err(|e| ConfigError::invalid("params", e.to_string()))?;
    Ok(p)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: toml::Table = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    check_keys(&root, "", TOP_KEYS)?;
    let scenario_name = match root.get("scenario") {
        Some(toml::Value::String(s)) => s.as_str(),
        Some(_) => return Err(ConfigError::invalid("scenario", "expected a string")),
        None => return Err(ConfigError::invalid("scenario", "required (\"product\" or \"hirzebruch\")")),
    };
    let scenario = match scenario_name {
        "product" => Scenario::Product(product_params(&section(&root, "params", PRODUCT_KEYS)?)?),
        "hirzebruch" => Scenario::Hirzebruch(hirzebruch_params(&section(&root, "params", HIRZEBRUCH_KEYS)?)?),
        other => {
            return Err(ConfigError::Validation {
                key: "scenario".into(),
                message: format!("unknown scenario `{other}`"),
                suggestion: suggest(other, &["product", "hirzebruch"]),
            })
        }
    };
    let output_dir = match root.get("output_dir") {
        None => PathBuf::from("runs").join(scenario_name),
        Some(toml::Value::String(s)) => PathBuf::from(s),
        Some(_) => return Err(ConfigError::invalid("output_dir", "expected a string")),
    };
    let seed = get_uint(&root, "", "seed")?.unwrap_or(0);

    let solver: SolverOptions = decode(section(&root, "solver", SOLVER_KEYS)?, "solver")?;
    solver.validate().map_err(|e| ConfigError::invalid("solver", e.to_string()))?;
    let recording: Recording = decode(section(&root, "recording", RECORDING_KEYS)?, "recording")?;
    if recording.stride == 0 {
        return Err(ConfigError::invalid("recording.stride", "must be positive"));
    }
    if let Scenario::Hirzebruch(p) = &scenario {
        if let Some(j) = recording.tracked_nodes.iter().find(|&&j| j < 2 || j + 2 >= p.grid_points) {
            return Err(ConfigError::invalid(
                "recording.tracked_nodes",
                format!("node {j} is outside 2..{}", p.grid_points - 2),
            ));
        }
    }
    let analysis: AnalysisOptions = decode(section(&root, "analysis", ANALYSIS_KEYS)?, "analysis")?;
    analysis.validate().map_err(|e| ConfigError::invalid("analysis", e.to_string()))?;
    let checks: CheckConfig = decode(section(&root, "checks", CHECK_KEYS)?, "checks")?;
    for name in &checks.disabled {
        if !CHECK_NAMES.contains(&name.as_str()) {
            return Err(ConfigError::Validation {
                key: "checks.disabled".into(),
                message: format!("unknown check `{name}`"),
                suggestion: suggest(name, CHECK_NAMES),
            });
        }
    }
    if checks.suite_samples == 0 {
        return Err(ConfigError::invalid("checks.suite_samples", "must be positive"));
    }
    Ok(RunConfig {
        scenario,
        output_dir,
        seed,
        solver,
        recording,
        analysis,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_product_config_fills_defaults() {
        let c = parse_config("scenario = \"product\"\n[params]\nf0 = 3\nc0 = 1\n").unwrap();
        assert_eq!(
            c.scenario,
            Scenario::Product(ProductParams {
                n: 1,
                f0: 3.0,
                c0: 1.0,
                r_h: 2.0
            })
        );
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.analysis, AnalysisOptions::default());
        assert_eq!(c.output_dir, PathBuf::from("runs/product"));
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn misspelled_key_gets_a_suggestion() {
        let err = parse_config("scenario = \"hirzebruch\"\n[params]\ngird_points = 256\n").unwrap_err();
        match err {
            ConfigError::Validation { key, suggestion, .. } => {
                assert_eq!(key, "params.gird_points");
                assert_eq!(suggestion.as_deref(), Some("grid_points"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_endpoints_are_rejected() {
        let err = parse_config("scenario = \"hirzebruch\"\n[params]\na0 = 2.0\nb0 = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "params.b0"), "{err}");
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_config("scenario = \"product\"\n[params]\nf0 = = 3\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn key_lists_match_the_serde_schemas() {
        let probe = |keys: &[&str], f: &dyn Fn(toml::Table) -> bool| {
            for key in keys {
                let mut t = toml::Table::new();
                let value = match *key {
                    "tracked_nodes" | "disabled" => toml::Value::Array(vec![]),
                    "structure_checks" | "keep_states" => toml::Value::Boolean(true),
                    "mode" => toml::Value::String("typeI_max_curvature".into()),
                    "max_steps" | "max_halvings" | "newton_max_iter" | "stride" | "min_picks" | "suite_samples" => {
                        toml::Value::Integer(3)
                    }
                    _ => toml::Value::Float(0.5),
                };
                t.insert(key.to_string(), value);
                assert!(f(t), "key {key} rejected");
            }
        };
        probe(SOLVER_KEYS, &|t| decode::<SolverOptions>(t, "s").is_ok());
        probe(RECORDING_KEYS, &|t| decode::<Recording>(t, "r").is_ok());
        probe(ANALYSIS_KEYS, &|t| decode::<AnalysisOptions>(t, "a").is_ok());
        probe(CHECK_KEYS, &|t| decode::<CheckConfig>(t, "c").is_ok());
    }

    #[test]
    fn unknown_check_names_are_rejected() {
        let err = parse_config("scenario = \"product\"\n[params]\nf0 = 3\nc0 = 1\n[checks]\ndisabled = [\"runtim\"]\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Validation { suggestion: Some(ref s), .. } if s == "runtime"));
    }
}
