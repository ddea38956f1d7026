//! Blow-up analysis of a recorded flow: point picking, parabolic rescaling
//! `gᵢ(t) = Kᵢ·g(tᵢ + t/Kᵢ)`, type classification and the splitting report.
//!
//! Everything here is post-processing of a [`FlowRun`]; rescaled quantities
//! are obtained from the recorded ones by their scaling laws, never by
//! re-simulation. Under `g ↦ K g` sectional curvatures, `|Rm|`, `‖A‖²` and
//! `‖∇ log f‖²` scale by `1/K`, areas by `K`, and times by `K`.

use crate::flow::{linear_fit, FlowRun, StepRecord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of the remaining time covered by a forward window.
pub const ALPHA_FRACTION: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("only {found} qualifying picks, need at least {needed}")]
    TooFewSamples { found: usize, needed: usize },
    #[error("window of pick {pick} spans [{lo}, {hi}], outside the run [{start}, {end}]")]
    WindowOutOfRange {
        pick: usize,
        lo: f64,
        hi: f64,
        start: f64,
        end: f64,
    },
    #[error("invalid analysis options: {0}")]
    Options(String),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

/// How blow-up points are picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BlowupMode {
    /// `Kᵢ = max_x |Rm|(x, tᵢ)` along a sequence of times.
    #[default]
    #[serde(rename = "typeI_max_curvature")]
    TypeIMaxCurvature,
    /// `(xᵢ, tᵢ)` maximizes `(Tᵢ − t)|Rm|(x, t)` over space-time up to `Tᵢ`.
    #[serde(rename = "typeII_supremum")]
    TypeIISupremum,
}

/// Thresholds for picking, rescaling and classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub mode: BlowupMode,
    /// Successive picks grow `Kᵢ` (type I) or shrink `T − Tᵢ` (type II) by this factor.
    pub growth: f64,
    pub min_picks: usize,
    /// Upper bound on the rescaled window lengths `αᵢ`, `βᵢ`.
    pub window_cap: f64,
    /// Tail values must stay below this multiple of their median.
    pub bounded_factor: f64,
    /// Largest log-log trend still counted as non-increasing.
    pub flat_slope: f64,
    /// Smallest log-log trend counted as diverging.
    pub diverging_slope: f64,
    /// Largest relative mixed curvature still counted as vanishing.
    pub mixed_tolerance: f64,
    /// Largest `|K_V·area/4π − 1|` accepted as a round fiber.
    pub fiber_tolerance: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            mode: BlowupMode::TypeIMaxCurvature,
            growth: 1.25,
            min_picks: 3,
            window_cap: 100.0,
            bounded_factor: 1.5,
            flat_slope: 0.05,
            diverging_slope: 0.1,
            mixed_tolerance: 1e-3,
            fiber_tolerance: 0.02,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AnalysisError::Options(m.to_string()));
        if !(self.growth > 1.0) {
            return bad("growth must exceed 1");
        }
        if self.min_picks < 2 {
            return bad("min_picks must be at least 2");
        }
        if !(self.window_cap > 0.0) {
            return bad("window_cap must be positive");
        }
        if !(self.bounded_factor > 1.0) {
            return bad("bounded_factor must exceed 1");
        }
        if !(self.flat_slope >= 0.0 && self.diverging_slope > self.flat_slope) {
            return bad("need 0 <= flat_slope < diverging_slope");
        }
        if !(self.mixed_tolerance > 0.0 && self.fiber_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// One picked blow-up point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub step: usize,
    pub t: f64,
    pub node: usize,
    pub rho: f64,
    /// `Kᵢ = |Rm|(xᵢ, tᵢ)`.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSequence {
    pub mode: BlowupMode,
    /// Blow-up time the picks approach.
    pub t_reference: f64,
    pub picks: Vec<Pick>,
}

/// `T_observed`, falling back to `T_predicted`.
pub fn reference_time(run: &FlowRun) -> f64 {
    run.t_observed.filter(|t| t.is_finite()).unwrap_or(run.t_predicted)
}

fn usable(s: &StepRecord) -> bool {
    let k = s.max_rm();
    k.is_finite() && k > 0.0
}

fn pick_of(s: &StepRecord) -> Pick {
    Pick {
        step: s.step,
        t: s.t,
        node: s.argmax_node,
        rho: s.argmax_rho,
        curvature: s.max_rm(),
    }
}

/// Picks blow-up points from the recorded steps.
///
/// A step qualifies if its forward window `tᵢ + 0.9(T − tᵢ)` ends inside the
/// run, so that every pick can be rescaled.
pub fn pick_blowup_sequence(run: &FlowRun, opts: &AnalysisOptions) -> Result<BlowupSequence> {
    opts.validate()?;
    let t_ref = reference_time(run);
    let t_end = run.steps.last().map_or(0.0, |s| s.t);
    let qualifies = |s: &StepRecord| {
        usable(s) && s.t < t_ref && s.t + ALPHA_FRACTION * (t_ref - s.t) <= t_end
    };
    let mut picks: Vec<Pick> = Vec::new();
    match opts.mode {
        BlowupMode::TypeIMaxCurvature => {
            for s in run.steps.iter().filter(|s| qualifies(s)) {
                let next = picks.last().map_or(0.0, |p| p.curvature * opts.growth);
                if s.max_rm() >= next {
                    picks.push(pick_of(s));
                }
            }
        }
        BlowupMode::TypeIISupremum => {
            let t0 = run.steps.first().map_or(0.0, |s| s.t);
            let mut gap = t_ref - t0;
            loop {
                gap /= opts.growth;
                let horizon = t_ref - gap;
                if horizon > t_end {
                    break;
                }
                let best = run
                    .steps
                    .iter()
                    .filter(|s| s.t < horizon && qualifies(s))
                    .max_by(|a, b| {
                        ((horizon - a.t) * a.max_rm()).total_cmp(&((horizon - b.t) * b.max_rm()))
                    });
                if let Some(s) = best {
                    if picks.last().is_none_or(|p| s.max_rm() > p.curvature) {
                        picks.push(pick_of(s));
                    }
                }
            }
        }
    }
    if picks.len() < opts.min_picks {
        return Err(AnalysisError::TooFewSamples {
            found: picks.len(),
            needed: opts.min_picks,
        });
    }
    Ok(BlowupSequence {
        mode: opts.mode,
        t_reference: t_ref,
        picks,
    })
}

/// Rescaled diagnostics of one recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledRow {
    pub step: usize,
    /// Rescaled time `Kᵢ(t − tᵢ)`.
    pub s: f64,
    pub rm_norm: f64,
    pub a_norm_sq: f64,
    pub grad_ln_f_norm_sq: f64,
    pub vertical_sectional: f64,
    pub horizontal_sectional_max: f64,
    pub mixed_sectional: f64,
    pub fiber_area: f64,
}

impl RescaledRow {
    pub fn new(s: &StepRecord, pick: &Pick) -> Self {
        let k = pick.curvature;
        let d = &s.at_max;
        Self {
            step: s.step,
            s: k * (s.t - pick.t),
            rm_norm: d.rm_norm / k,
            a_norm_sq: d.a_norm_sq / k,
            grad_ln_f_norm_sq: d.grad_ln_f_norm_sq / k,
            vertical_sectional: d.vertical_sectional / k,
            horizontal_sectional_max: s.horizontal_sectional_max / k,
            mixed_sectional: d.mixed_sectional / k,
            fiber_area: s.fiber_area * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledPick {
    pub pick: Pick,
    /// Backward window length in rescaled time.
    pub beta: f64,
    /// Forward window length in rescaled time.
    pub alpha: f64,
    /// Row at the pick itself.
    pub at_pick: RescaledRow,
    /// Rows of every recorded step inside `[−β, α]`.
    pub rows: Vec<RescaledRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledSeries {
    pub t_reference: f64,
    pub picks: Vec<RescaledPick>,
}

/// Applies the parabolic rescaling of each pick to the recorded steps.
pub fn rescale_series(run: &FlowRun, seq: &BlowupSequence, opts: &AnalysisOptions) -> Result<RescaledSeries> {
    let (start, end) = match (run.steps.first(), run.steps.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => {
            return Err(AnalysisError::TooFewSamples {
                found: 0,
                needed: opts.min_picks,
            })
        }
    };
    let mut picks = Vec::with_capacity(seq.picks.len());
    for (i, pick) in seq.picks.iter().enumerate() {
        let k = pick.curvature;
        let beta = (pick.t * k).min(opts.window_cap);
        let alpha = ((seq.t_reference - pick.t) * k * ALPHA_FRACTION).min(opts.window_cap);
        let (lo, hi) = (pick.t - beta / k, pick.t + alpha / k);
        let slack = 1e-12 * end.abs().max(1.0);
        let source = run.steps.iter().find(|s| s.step == pick.step);
        let Some(source) = source.filter(|_| lo >= start - slack && hi <= end + slack) else {
            return Err(AnalysisError::WindowOutOfRange {
                pick: i,
                lo,
                hi,
                start,
                end,
            });
        };
        let rows = run
            .steps
            .iter()
            .filter(|s| s.t >= lo - slack && s.t <= hi + slack && usable(s))
            .map(|s| RescaledRow::new(s, pick))
            .collect();
        picks.push(RescaledPick {
            pick: *pick,
            beta,
            alpha,
            at_pick: RescaledRow::new(source, pick),
            rows,
        });
    }
    Ok(RescaledSeries {
        t_reference: seq.t_reference,
        picks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    TypeI,
    TypeII,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    /// `(t, (T − t)·max|Rm|)` for every usable step before `T`.
    pub sup_series: Vec<(f64, f64)>,
    pub classification: Classification,
    /// Median of the series over the last decade of `T − t`.
    pub plateau_value: f64,
    /// Largest tail value over the median.
    pub tail_ratio: f64,
    /// Slope of `log((T − t)|Rm|)` against `log(1/(T − t))` over the tail.
    pub trend_slope: f64,
    pub tail_len: usize,
}

/// Median of a non-empty slice.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Classifies a `(t, |Rm|)` series against the blow-up time `t_ref`.
///
/// The tail is the last decade of `T − t`. It is type I when bounded by
/// `bounded_factor` times its median and its log-log trend is at most
/// `flat_slope`; type II when the trend is at least `diverging_slope`, or it is
/// unbounded with a rising trend.
pub fn classify_series(series: &[(f64, f64)], t_ref: f64, opts: &AnalysisOptions) -> TypeReport {
    let sup_series: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, rm)| *t < t_ref && rm.is_finite() && *rm > 0.0)
        .map(|&(t, rm)| (t, (t_ref - t) * rm))
        .collect();
    let inconclusive = |sup_series: Vec<(f64, f64)>| TypeReport {
        sup_series,
        classification: Classification::Inconclusive,
        plateau_value: f64::NAN,
        tail_ratio: f64::NAN,
        trend_slope: f64::NAN,
        tail_len: 0,
    };
    let Some(&(t_last, _)) = sup_series.last() else {
        return inconclusive(sup_series);
    };
    let gap = t_ref - t_last;
    let tail: Vec<(f64, f64)> = sup_series
        .iter()
        .cloned()
        .filter(|(t, _)| t_ref - t <= 10.0 * gap)
        .collect();
    if tail.len() < 3 {
        return inconclusive(sup_series);
    }
    let values: Vec<f64> = tail.iter().map(|p| p.1).collect();
    let plateau = median(&values);
    let tail_ratio = values.iter().cloned().fold(0.0, f64::max) / plateau;
    let logs: Vec<(f64, f64)> = tail.iter().map(|(t, v)| (-(t_ref - t).ln(), v.ln())).collect();
    let trend = linear_fit(&logs).map_or(f64::NAN, |l| l.0);
    let bounded = tail_ratio <= opts.bounded_factor;
    let classification = if bounded && trend <= opts.flat_slope {
        Classification::TypeI
    } else if trend >= opts.diverging_slope || (!bounded && trend > opts.flat_slope) {
        Classification::TypeII
    } else {
        Classification::Inconclusive
    };
    TypeReport {
        sup_series,
        classification,
        plateau_value: plateau,
        tail_ratio,
        trend_slope: trend,
        tail_len: tail.len(),
    }
}

/// Type classification of a run from `(T − t)·max|Rm|`.
pub fn classify_type(run: &FlowRun, opts: &AnalysisOptions) -> TypeReport {
    let series: Vec<(f64, f64)> = run.steps.iter().map(|s| (s.t, s.max_rm())).collect();
    match run.t_observed.filter(|t| t.is_finite()) {
        Some(t_ref) => classify_series(&series, t_ref, opts),
        None => TypeReport {
            sup_series: Vec::new(),
            classification: Classification::Inconclusive,
            plateau_value: f64::NAN,
            tail_ratio: f64::NAN,
            trend_slope: f64::NAN,
            tail_len: 0,
        },
    }
}

/// Measurable precursors of the splitting of the blow-up limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    /// `(Kᵢ, rescaled ‖A‖²)` at the picks.
    pub a_series: Vec<(f64, f64)>,
    /// Log-log slope of rescaled `‖A‖²` against `Kᵢ`; `None` when `A ≡ 0`.
    pub a_exponent: Option<f64>,
    pub a_max: f64,
    /// `(Kᵢ, rescaled max |κ_H|)` at the picks.
    pub horizontal_series: Vec<(f64, f64)>,
    pub horizontal_exponent: Option<f64>,
    /// Rescaled horizontal curvature at the last pick.
    pub horizontal_last: f64,
    /// Largest relative mixed curvature over the run's structure checks.
    pub mixed_max: f64,
    /// `K_V·area/4π` at each pick; 1 for a round sphere.
    pub fiber_ratios: Vec<f64>,
    pub a_decays: bool,
    pub horizontal_flattens: bool,
    pub mixed_vanishes: bool,
    pub fiber_round: bool,
    /// All four precursors hold.
    pub splits: bool,
}

/// Log-log slope over the last decade of `Kᵢ` (all points if that leaves
/// fewer than three).
fn log_slope(series: &[(f64, f64)]) -> Option<f64> {
    let k_max = series.iter().map(|p| p.0).fold(0.0, f64::max);
    let in_decade = series.iter().filter(|p| p.0 >= 0.1 * k_max).count();
    let k_min = if in_decade >= 3 { 0.1 * k_max } else { 0.0 };
    let logs: Vec<(f64, f64)> = series
        .iter()
        .filter(|(k, y)| *k >= k_min && *k > 0.0 && *y > 0.0)
        .map(|(k, y)| (k.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    linear_fit(&logs).map(|l| l.0)
}

/// Builds the splitting report from the rescaled picks.
///
/// The limit splits off a flat factor when rescaled `‖A‖²` and horizontal
/// curvature decay with `Kᵢ` (exponent at most `−1 + 0.1`, or identically
/// zero), the mixed curvature vanishes, and the fiber is a round sphere.
pub fn splitting_report(rs: &RescaledSeries, run: &FlowRun, opts: &AnalysisOptions) -> SplittingReport {
    let a_series: Vec<(f64, f64)> = rs
        .picks
        .iter()
        .map(|p| (p.pick.curvature, p.at_pick.a_norm_sq))
        .collect();
    let horizontal_series: Vec<(f64, f64)> = rs
        .picks
        .iter()
        .map(|p| (p.pick.curvature, p.at_pick.horizontal_sectional_max.abs()))
        .collect();
    let a_max = a_series.iter().map(|p| p.1).fold(0.0, f64::max);
    let a_exponent = if a_max == 0.0 { None } else { log_slope(&a_series) };
    let h_all_zero = horizontal_series.iter().all(|p| p.1 == 0.0);
    let horizontal_exponent = if h_all_zero { None } else { log_slope(&horizontal_series) };
    let horizontal_last = horizontal_series.last().map_or(f64::NAN, |p| p.1);
    let mixed_max = run
        .structure
        .iter()
        .map(|c| c.mixed_relative)
        .fold(0.0, f64::max);
    let fiber_ratios: Vec<f64> = rs
        .picks
        .iter()
        .map(|p| p.at_pick.vertical_sectional * p.at_pick.fiber_area / (4.0 * std::f64::consts::PI))
        .collect();
    let decays = |e: Option<f64>, zero: bool| zero || e.is_some_and(|e| e <= -0.9);
    let a_decays = decays(a_exponent, a_max == 0.0);
    let horizontal_flattens = decays(horizontal_exponent, h_all_zero);
    let mixed_vanishes = mixed_max <= opts.mixed_tolerance;
    let fiber_round = fiber_ratios
        .last()
        .is_some_and(|r| (r - 1.0).abs() <= opts.fiber_tolerance);
    SplittingReport {
        a_series,
        a_exponent,
        a_max,
        horizontal_series,
        horizontal_exponent,
        horizontal_last,
        mixed_max,
        fiber_ratios,
        a_decays,
        horizontal_flattens,
        mixed_vanishes,
        fiber_round,
        splits: a_decays && horizontal_flattens && mixed_vanishes && fiber_round,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_separates_power_laws() {
        let opts = AnalysisOptions::default();
        let t_ref = 0.5;
        let series = |alpha: f64| -> Vec<(f64, f64)> {
            (0..400)
                .map(|i| {
                    let t = t_ref - 0.5 * 0.98f64.powi(i);
                    (t, (t_ref - t).powf(-alpha))
                })
                .collect()
        };
        assert_eq!(classify_series(&series(1.0), t_ref, &opts).classification, Classification::TypeI);
        for alpha in [1.2, 1.3, 1.5] {
            let r = classify_series(&series(alpha), t_ref, &opts);
            assert_eq!(r.classification, Classification::TypeII, "alpha {alpha}: {r:?}");
        }
        let r = classify_series(&series(1.0), t_ref, &opts);
        assert!((r.plateau_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_series_is_inconclusive() {
        let r = classify_series(&[], 1.0, &AnalysisOptions::default());
        assert_eq!(r.classification, Classification::Inconclusive);
    }

    #[test]
    fn options_are_validated() {
        let bad = AnalysisOptions {
            growth: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(AnalysisOptions::default().validate().is_ok());
    }
}
