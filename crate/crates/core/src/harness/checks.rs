//! Acceptance checks evaluated on a finished (or reloaded) run.

use super::config::RunConfig;
use crate::flow::{linear_fit, product_closed_form, FlowRun, Scenario, StopReason};
use crate::singularity::{
    classify_type, pick_blowup_sequence, rescale_series, splitting_report, AnalysisOptions, BlowupSequence,
    Classification, RescaledSeries, SplittingReport, TypeReport,
};
use crate::suite::{a_identity_suite, block_identity_suite, einstein_suite, BlockSuiteReport, EinsteinReport};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const CHECK_NAMES: &[&str] = &[
    "closed_form",
    "t_observed",
    "plateau",
    "type_i",
    "runtime",
    "fiber_width_slope",
    "max_f_drift",
    "min_f_floor",
    "gradient_bound",
    "heat_residual",
    "tail_slopes",
    "structure",
    "rescaling_laws",
    "fiber_round",
    "block_identities",
    "a_identity",
    "einstein_detector",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub status: CheckStatus,
    /// The measured quantity, when there is a finite one.
    pub value: Option<f64>,
    /// Human-readable acceptance bound.
    pub bound: String,
}

impl CheckOutcome {
    fn new(pass: bool, value: f64, bound: impl Into<String>) -> Self {
        Self {
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            value: value.is_finite().then_some(value),
            bound: bound.into(),
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Self {
            status: CheckStatus::Skipped,
            value: None,
            bound: reason.into(),
        }
    }
}

pub type CheckMap = BTreeMap<String, CheckOutcome>;

/// True when no enabled check failed.
pub fn all_passed(checks: &CheckMap) -> bool {
    checks.values().all(|c| c.status != CheckStatus::Fail)
}

/// Blow-up analysis of a run; picking errors are recorded, not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub type_report: TypeReport,
    pub sequence: Option<BlowupSequence>,
    pub rescaled: Option<RescaledSeries>,
    pub splitting: Option<SplittingReport>,
    pub error: Option<String>,
}

pub fn analyze(run: &FlowRun, opts: &AnalysisOptions) -> Analysis {
    let type_report = classify_type(run, opts);
    let picked = pick_blowup_sequence(run, opts).and_then(|seq| {
        let rs = rescale_series(run, &seq, opts)?;
        Ok((seq, rs))
    });
    match picked {
        Ok((seq, rs)) => Analysis {
            type_report,
            splitting: Some(splitting_report(&rs, run, opts)),
            sequence: Some(seq),
            rescaled: Some(rs),
            error: None,
        },
        Err(e) => Analysis {
            type_report,
            sequence: None,
            rescaled: None,
            splitting: None,
            error: Some(e.to_string()),
        },
    }
}

/// Results of the seeded chart-level oracle suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResults {
    pub blocks: Option<BlockSuiteReport>,
    pub a_identity: Option<f64>,
    pub einstein: Option<EinsteinReport>,
    pub error: Option<String>,
}

pub fn run_suites(config: &RunConfig) -> SuiteResults {
    let count = config.checks.suite_samples;
    let seed = config.seed;
    let n = config.scenario.n().max(2);
    let mut out = SuiteResults {
        blocks: None,
        a_identity: None,
        einstein: None,
        error: None,
    };
    match block_identity_suite(count, seed) {
        Ok(r) => out.blocks = Some(r),
        Err(e) => out_error(&mut out.error, e),
    }
    match a_identity_suite(5 * count, seed) {
        Ok(r) => out.a_identity = Some(r),
        Err(e) => out_error(&mut out.error, e),
    }
    match einstein_suite(n, 0.3, count, seed) {
        Ok(r) => out.einstein = Some(r),
        Err(e) => out_error(&mut out.error, e),
    }
    out
}

fn out_error(slot: &mut Option<String>, e: crate::chart::GeometryError) {
    slot.get_or_insert_with(String::new).push_str(&format!("{e}; "));
}

/// Evaluates every enabled check.
pub fn evaluate_checks(config: &RunConfig, run: &FlowRun, analysis: &Analysis, suites: &SuiteResults) -> CheckMap {
    let mut map = CheckMap::new();
    let mut put = |name: &str, outcome: CheckOutcome| {
        let outcome = if config.checks.enabled(name) {
            outcome
        } else {
            CheckOutcome::skipped("disabled")
        };
        map.insert(name.to_string(), outcome);
    };
    let steps = &run.steps;
    let reached = matches!(run.stop_reason, StopReason::ReachedMargin | StopReason::FiberCollapsed);
    let not_applicable = || CheckOutcome::skipped("not applicable to this scenario");

    // Closed form (product only).
    match &run.scenario {
        Scenario::Product(p) => {
            let mut worst: f64 = 0.0;
            for s in steps {
                match product_closed_form(p, s.t) {
                    Ok((f, c, _)) => worst = worst.max((s.max_f - f).abs()).max((s.fiber_scale - c).abs()),
                    Err(_) => worst = f64::INFINITY,
                }
            }
            put("closed_form", CheckOutcome::new(worst <= 1e-6, worst, "<= 1e-6"));
        }
        Scenario::Hirzebruch(_) => put("closed_form", not_applicable()),
    }

    // Blow-up time.
    let outcome = match (run.t_observed, reached) {
        (_, false) => CheckOutcome::skipped("run stopped before the singular time"),
        (None, true) => CheckOutcome::new(false, f64::NAN, "T_observed must exist"),
        (Some(t_obs), true) => match run.scenario {
            Scenario::Product(_) => {
                let err = (t_obs - run.t_predicted).abs();
                CheckOutcome::new(err <= 1e-3, t_obs, format!("|T_observed - {}| <= 1e-3", run.t_predicted))
            }
            Scenario::Hirzebruch(_) => {
                let ratio = t_obs / run.t_predicted;
                CheckOutcome::new((0.98..=1.02).contains(&ratio), ratio, "T_observed/T_predicted in [0.98, 1.02]")
            }
        },
    };
    put("t_observed", outcome);

    let tr = &analysis.type_report;
    match (&run.scenario, reached) {
        (_, false) => put("plateau", CheckOutcome::skipped("run stopped before the singular time")),
        (Scenario::Product(_), true) => {
            let err = (tr.plateau_value / 2.0 - 1.0).abs();
            put(
                "plateau",
                CheckOutcome::new(err <= 0.05, tr.plateau_value, "(T-t)max|Rm| within 5% of 2"),
            );
        }
        (Scenario::Hirzebruch(_), true) => put("plateau", not_applicable()),
    }
    put(
        "type_i",
        if reached {
            CheckOutcome::new(
                tr.classification == Classification::TypeI,
                tr.plateau_value,
                "classification TypeI",
            )
        } else {
            CheckOutcome::skipped("run stopped before the singular time")
        },
    );
    let budget = config.max_wall_seconds();
    put(
        "runtime",
        CheckOutcome::new(run.wall_seconds <= budget, run.wall_seconds, format!("<= {budget} s")),
    );

    match &run.scenario {
        Scenario::Hirzebruch(p) => {
            let k = p.kf();
            let widths: Vec<(f64, f64)> = steps.iter().map(|s| (s.t, s.upper - s.lower)).collect();
            let slope = linear_fit(&widths).map_or(f64::NAN, |l| l.0);
            put(
                "fiber_width_slope",
                CheckOutcome::new(
                    (slope / (-2.0 * k) - 1.0).abs() <= 0.02,
                    slope,
                    format!("{} +- 2%", -2.0 * k),
                ),
            );

            let rate = p.r_h / p.n as f64;
            let max0 = steps.first().map_or(f64::NAN, |s| s.max_f);
            let mut drift: f64 = f64::NEG_INFINITY;
            let mut monotone = true;
            for w in steps.windows(2) {
                monotone &= w[1].max_f <= w[0].max_f + 1e-12;
            }
            for s in steps {
                drift = drift.max(s.max_f - (max0 - rate * s.t));
            }
            put(
                "max_f_drift",
                CheckOutcome::new(
                    monotone && drift <= 1e-9,
                    drift,
                    "max f non-increasing and <= max f(0) - (R/n) t",
                ),
            );

            let a_end = k * p.a0 + p.lower_rate() * run.t_predicted;
            let floor = (k * p.a0).min(a_end);
            let min_f = steps.iter().map(|s| s.min_f).fold(f64::INFINITY, f64::min);
            put(
                "min_f_floor",
                CheckOutcome::new(
                    floor > 0.0 && min_f >= floor * (1.0 - 1e-9),
                    min_f,
                    format!(">= {floor}"),
                ),
            );

            let g0 = run.initial_grad_sq;
            let c2 = config.checks.gradient_rate;
            let excess = steps
                .iter()
                .map(|s| s.max_grad_sq / (g0 * (c2 * s.t).exp()))
                .fold(0.0, f64::max);
            put(
                "gradient_bound",
                CheckOutcome::new(excess <= 1.0 + 1e-9, excess, format!("|grad f|^2 <= |grad f0|^2 exp({c2} t)")),
            );

            let heat = steps
                .iter()
                .map(|s| s.heat_residual)
                .filter(|r| r.is_finite())
                .fold(0.0, f64::max);
            let hb = config.checks.heat_residual_max;
            put("heat_residual", CheckOutcome::new(heat <= hb, heat, format!("<= {hb}")));

            let tail = steps.iter().map(|s| s.tail_slope_error).fold(0.0, f64::max);
            let tb = config.checks.tail_slope_max;
            put("tail_slopes", CheckOutcome::new(tail <= tb, tail, format!("<= {tb}")));

            if run.structure.is_empty() {
                put("structure", CheckOutcome::skipped("no structure checks recorded"));
            } else {
                let fold = |f: fn(&crate::flow::StructureCheck) -> f64| run.structure.iter().map(f).fold(0.0, f64::max);
                let drift = fold(|c| c.ratio_drift);
                let compat = fold(|c| c.compatibility);
                let mixed = fold(|c| c.mixed_relative);
                let rm = fold(|c| c.rm_relative_error);
                put(
                    "structure",
                    CheckOutcome::new(
                        drift <= 1e-4 && compat <= 1e-8 && mixed <= 1e-3 && rm <= 1e-3,
                        drift.max(mixed).max(rm),
                        "ratio drift <= 1e-4, compatibility <= 1e-8, mixed and |Rm| errors <= 1e-3",
                    ),
                );
            }
        }
        Scenario::Product(_) => {
            for name in [
                "fiber_width_slope",
                "max_f_drift",
                "min_f_floor",
                "gradient_bound",
                "heat_residual",
                "tail_slopes",
                "structure",
            ] {
                put(name, not_applicable());
            }
        }
    }

    match &analysis.splitting {
        Some(sr) if reached => {
            let in_band = |e: Option<f64>, zero: bool| zero || e.is_some_and(|e| (e + 1.0).abs() <= 0.1);
            let a_ok = in_band(sr.a_exponent, sr.a_max == 0.0);
            let h_ok = in_band(sr.horizontal_exponent, sr.horizontal_last == 0.0);
            put(
                "rescaling_laws",
                CheckOutcome::new(
                    a_ok && h_ok,
                    sr.a_exponent.unwrap_or(f64::NAN),
                    "A and horizontal decay exponents -1 +- 0.1",
                ),
            );
            put(
                "fiber_round",
                CheckOutcome::new(
                    sr.fiber_round,
                    sr.fiber_ratios.last().copied().unwrap_or(f64::NAN),
                    "K_V area / 4 pi -> 1",
                ),
            );
        }
        _ => {
            let why = analysis
                .error
                .clone()
                .unwrap_or_else(|| "run stopped before the singular time".into());
            let fail = reached;
            for name in ["rescaling_laws", "fiber_round"] {
                put(
                    name,
                    if fail {
                        CheckOutcome::new(false, f64::NAN, why.clone())
                    } else {
                        CheckOutcome::skipped(why.clone())
                    },
                );
            }
        }
    }

    match &suites.blocks {
        Some(b) => put(
            "block_identities",
            CheckOutcome::new(
                b.ricci <= 1e-4 && b.compatibility <= 1e-8 && b.totally_geodesic <= 1e-8 && b.mixed <= 1e-3,
                b.ricci,
                "Ricci <= 1e-4, compatibility and totally-geodesic <= 1e-8, mixed <= 1e-3",
            ),
        ),
        None => put("block_identities", CheckOutcome::new(false, f64::NAN, "suite failed")),
    }
    match suites.a_identity {
        Some(e) => put("a_identity", CheckOutcome::new(e <= 1e-8, e, "<= 1e-8")),
        None => put("a_identity", CheckOutcome::new(false, f64::NAN, "suite failed")),
    }
    match &suites.einstein {
        Some(r) => put(
            "einstein_detector",
            CheckOutcome::new(
                r.fubini_study_max <= 1e-10 && r.perturbed_min >= 1e-3,
                r.perturbed_min,
                "Fubini-Study <= 1e-10, perturbed >= 1e-3",
            ),
        ),
        None => put("einstein_detector", CheckOutcome::new(false, f64::NAN, "suite failed")),
    }
    map
}
