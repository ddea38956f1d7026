//! Kähler–Ricci flow under Calabi symmetry.
//!
//! On the total space of a line bundle of degree `k` over ℂPⁿ (with the zero
//! and infinity sections glued in), a Calabi-symmetric metric is determined by
//! the profile `f = F(ρ)` with `ρ = log|ξ|² + k log(1 + |z|²)`. The flow reduces
//! to
//!
//! ```text
//! ∂_t f = k (f_ρρ / f_ρ + n f_ρ / f) − R^h/n
//! ```
//!
//! with endpoint values `ka(t)`, `kb(t)` moving at `k − R^h/n` and `−k − R^h/n`.
//! The fiber width `kb − ka` therefore closes at rate `2k`.
//!
//! The product mode `ℂPⁿ × ℂP¹` has spatially constant `f` and a round fiber
//! whose scale shrinks at rate 2.

pub mod oracle;
pub mod profile;
mod solver;

use crate::chart::samplers::LogisticProfile;
use crate::oneill::{rm_norm_from_blocks, CurvatureDiagnostics};
use serde::{Deserialize, Serialize};
use solver::{sdirk_step, strictly_increasing, NewtonOptions, ProfileSystem};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inconsistent solver configuration: {0}")]
    Config(String),
    #[error("initial profile rejected: {0}")]
    BadProfile(String),
    #[error("step rejected at t = {t} after {halvings} halvings (dt = {dt:e})")]
    StepRejected { t: f64, dt: f64, halvings: usize },
    #[error("profile lost monotonicity at t = {t}")]
    MonotonicityLost { t: f64 },
    #[error("time {t} is past the singular time {singular}")]
    PastSingularTime { t: f64, singular: f64 },
    #[error("base class collapses no later than the fiber (base coefficient {base_at_t:.4} at T = {t:.4})")]
    WrongRegime { t: f64, base_at_t: f64 },
    #[error("fiber class does not shrink (rate {rate})")]
    NoFiberCollapse { rate: f64 },
}

pub type Result<T> = std::result::Result<T, FlowError>;

/// Scalar curvature of the Fubini–Study base, `Ric = (n + 1)·ω_FS`.
pub fn fubini_study_scalar(n: usize) -> f64 {
    (n * (n + 1)) as f64
}

/// Initial profile selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    /// `f = ka + (kb − ka)(1 + tanh(ρ/2))/2`, the profile of a product-like
    /// round fiber.
    #[default]
    Tanh,
    /// Logistic profile with a cubic skew of the given strength.
    Skewed(f64),
}

impl ProfileShape {
    pub fn skew(&self) -> f64 {
        match self {
            ProfileShape::Tanh => 0.0,
            ProfileShape::Skewed(s) => *s,
        }
    }
}

/// Parameters of a Calabi-symmetric flow on a Hirzebruch-type total space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HirzebruchParams {
    pub n: usize,
    pub k: u32,
    pub r_h: f64,
    pub a0: f64,
    pub b0: f64,
    pub half_width: f64,
    pub grid_points: usize,
    pub shape: ProfileShape,
}

impl Default for HirzebruchParams {
    fn default() -> Self {
        Self {
            n: 1,
            k: 1,
            r_h: 2.0,
            a0: 1.0,
            b0: 2.0,
            half_width: 20.0,
            grid_points: 512,
            shape: ProfileShape::Tanh,
        }
    }
}

impl HirzebruchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FlowError::InvalidParams(m));
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.a0 > 0.0 && self.a0 < self.b0) {
            return bad(format!("need 0 < a0 < b0, got a0 = {}, b0 = {}", self.a0, self.b0));
        }
        if !(self.half_width > 0.0) {
            return bad(format!("half_width must be positive, got {}", self.half_width));
        }
        if self.grid_points < 64 {
            return bad(format!("grid_points must be at least 64, got {}", self.grid_points));
        }
        if !self.r_h.is_finite() {
            return bad("r_h must be finite".into());
        }
        let skew = self.shape.skew();
        if !(skew > -2.0 && skew < 1.0) {
            return bad(format!("skew must lie in (-2, 1), got {skew}"));
        }
        Ok(())
    }

    pub fn kf(&self) -> f64 {
        self.k as f64
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.grid_points - 1) as f64
    }

    pub fn rho(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn lower_rate(&self) -> f64 {
        self.kf() - self.r_h / self.n as f64
    }

    pub fn upper_rate(&self) -> f64 {
        -self.kf() - self.r_h / self.n as f64
    }

    pub fn cohomology(&self) -> CohomologyClass {
        let k = self.kf();
        CohomologyClass {
            base_coeff: k * self.a0,
            fiber_coeff: k * (self.b0 - self.a0),
            c1_base_rate: self.lower_rate(),
            c1_fiber_rate: -2.0 * k,
        }
    }

    fn system(&self) -> ProfileSystem {
        let k = self.kf();
        ProfileSystem {
            n: self.n as f64,
            k,
            spacing: self.spacing(),
            lower0: k * self.a0,
            width0: k * (self.b0 - self.a0),
            lower_rate: self.lower_rate(),
            width_rate: -2.0 * k,
        }
    }
}

/// Discretized profile at one time. `w` is the normalized profile
/// `(f − ka)/(kb − ka)`, pinned to 0 and 1 at the grid ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
    pub spacing: f64,
    pub half_width: f64,
    pub w: Vec<f64>,
}

impl FlowState {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn endpoints(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn rho(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing
    }

    pub fn f_profile(&self) -> Vec<f64> {
        self.w.iter().map(|w| self.lower + self.width() * w).collect()
    }

    /// `v = f_ρ/k` at interior nodes (central differences); the ends repeat
    /// their neighbours.
    pub fn v_profile(&self, k: f64) -> Vec<f64> {
        let n = self.w.len();
        let mut v = vec![0.0; n];
        for j in 1..n - 1 {
            v[j] = self.width() * (self.w[j + 1] - self.w[j - 1]) / (2.0 * self.spacing) / k;
        }
        v[0] = v[1];
        v[n - 1] = v[n - 2];
        v
    }
}

pub fn init_hirzebruch_profile(params: &HirzebruchParams) -> Result<FlowState> {
    params.validate()?;
    let k = params.kf();
    let profile = LogisticProfile {
        lower: 0.0,
        upper: 1.0,
        center: 0.0,
        skew: params.shape.skew(),
    };
    let n = params.grid_points;
    let mut w: Vec<f64> = (0..n).map(|j| profile.unit_jet(params.rho(j))[0]).collect();
    let tail = w[0].max(1.0 - w[n - 1]);
    if tail > 1e-6 {
        return Err(FlowError::BadProfile(format!(
            "profile is {tail:e} away from its endpoint at the grid edge; increase half_width"
        )));
    }
    w[0] = 0.0;
    w[n - 1] = 1.0;
    if !strictly_increasing(&w) {
        return Err(FlowError::BadProfile("initial profile is not strictly increasing".into()));
    }
    Ok(FlowState {
        t: 0.0,
        lower: k * params.a0,
        upper: k * params.b0,
        spacing: params.spacing(),
        half_width: params.half_width,
        w,
    })
}

/// Numerical controls for the flow solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Largest step is `dt_factor · Δρ`.
    pub dt_factor: f64,
    /// Steps are at most this fraction of the remaining time to `T_predicted`.
    pub approach_fraction: f64,
    /// Stop once `T_predicted − t` falls below this.
    pub stop_margin: f64,
    /// Stop once `max v` falls below this.
    pub v_floor: f64,
    pub max_steps: usize,
    pub max_halvings: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// A time the stepper lands on exactly (used for convergence sweeps).
    pub probe_time: Option<f64>,
    /// Stop at this time instead of near the singularity.
    pub end_time: Option<f64>,
    /// Curvature diagnostics use nodes with `w_ρ` at least this.
    pub window_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dt_factor: 0.25,
            approach_fraction: 0.02,
            stop_margin: 1e-3,
            v_floor: 1e-6,
            max_steps: 200_000,
            max_halvings: 30,
            newton_tol: 1e-10,
            newton_max_iter: 40,
            probe_time: None,
            end_time: None,
            window_threshold: 1e-4,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FlowError::Config(m.to_string()));
        if !(self.dt_factor > 0.0) {
            return bad("dt_factor must be positive");
        }
        if !(self.approach_fraction > 0.0 && self.approach_fraction < 1.0) {
            return bad("approach_fraction must lie in (0, 1)");
        }
        if !(self.stop_margin > 0.0) {
            return bad("stop_margin must be positive");
        }
        if !(self.v_floor >= 0.0) {
            return bad("v_floor must be non-negative");
        }
        if self.max_steps == 0 || self.newton_max_iter == 0 {
            return bad("max_steps and newton_max_iter must be positive");
        }
        if !(self.window_threshold > 0.0 && self.window_threshold < 0.25) {
            return bad("window_threshold must lie in (0, 0.25)");
        }
        if let (Some(p), Some(e)) = (self.probe_time, self.end_time) {
            if p >= e {
                return bad("probe_time must precede end_time");
            }
        }
        Ok(())
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
        }
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `T_predicted − t` fell below the stop margin.
    ReachedMargin,
    /// `max v` fell below the floor.
    FiberCollapsed,
    /// The configured end time was reached.
    EndTime,
    MaxSteps,
    StepRejected,
    MonotonicityLost,
}

impl StopReason {
    pub fn is_graceful_error(&self) -> bool {
        matches!(self, StopReason::StepRejected | StopReason::MonotonicityLost)
    }
}

/// Per-step monitors and the curvature summary at the point of largest `|Rm|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fiber scale: the round-fiber coefficient `c`, or `(kb − ka)/k`.
    pub fiber_scale: f64,
    pub min_f: f64,
    pub max_f: f64,
    pub max_grad_sq: f64,
    /// `max |∂_t f − k(f_ρρ/f_ρ + n f_ρ/f) + R^h/n|` over `|ρ| ≤ L/2`; NaN when
    /// unavailable (first and last steps).
    pub heat_residual: f64,
    /// Deviation of the tail log-slopes `f_ρρ/f_ρ` from `±1`.
    pub tail_slope_error: f64,
    pub argmax_node: usize,
    pub argmax_rho: f64,
    pub at_max: CurvatureDiagnostics,
    pub horizontal_sectional_max: f64,
    pub vertical_sectional_max: f64,
    pub fiber_area: f64,
    pub newton_iterations: usize,
}

impl StepRecord {
    pub fn max_rm(&self) -> f64 {
        self.at_max.rm_norm
    }
}

/// Curvature diagnostics at one tracked node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub step: usize,
    pub t: f64,
    pub node: usize,
    pub rho: f64,
    pub f: f64,
    pub v: f64,
    pub diag: CurvatureDiagnostics,
}

/// Chart-level cross-check on a reconstructed two-dimensional chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub step: usize,
    pub t: f64,
    pub rho: f64,
    /// `max |R_iξ̄/R_ξξ̄ − g_iξ̄/g_ξξ̄| / |g_iξ̄/g_ξξ̄|`.
    pub ratio_drift: f64,
    pub compatibility: f64,
    /// Mixed curvature components relative to `|Rm|`.
    pub mixed_relative: f64,
    /// `||Rm|_closed − |Rm|_fd| / |Rm|_fd`.
    pub rm_relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductParams {
    pub n: usize,
    pub f0: f64,
    pub c0: f64,
    pub r_h: f64,
}

impl ProductParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(FlowError::InvalidParams("n must be at least 1".into()));
        }
        if !(self.f0 > 0.0 && self.c0 > 0.0) {
            return Err(FlowError::InvalidParams("f0 and c0 must be positive".into()));
        }
        Ok(())
    }

    pub fn cohomology(&self) -> CohomologyClass {
        CohomologyClass {
            base_coeff: self.f0,
            fiber_coeff: self.c0,
            c1_base_rate: -self.r_h / self.n as f64,
            c1_fiber_rate: -2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Scenario {
    Product(ProductParams),
    Hirzebruch(HirzebruchParams),
}

impl Scenario {
    pub fn cohomology(&self) -> CohomologyClass {
        match self {
            Scenario::Product(p) => p.cohomology(),
            Scenario::Hirzebruch(p) => p.cohomology(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Scenario::Product(p) => p.n,
            Scenario::Hirzebruch(p) => p.n,
        }
    }
}

/// Recording controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recording {
    /// Node diagnostics and structure checks are taken every `stride` steps
    /// (and at the last step).
    pub stride: usize,
    /// Grid nodes whose diagnostics are recorded; empty means every 16th node
    /// inside the diagnostics window.
    pub tracked_nodes: Vec<usize>,
    /// Run the chart-level structure checks at recorded steps.
    pub structure_checks: bool,
    /// Keep every recorded profile in the run.
    pub keep_states: bool,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            stride: 20,
            tracked_nodes: Vec::new(),
            structure_checks: true,
            keep_states: false,
        }
    }
}

/// A complete flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRun {
    pub scenario: Scenario,
    pub steps: Vec<StepRecord>,
    pub nodes: Vec<NodeRecord>,
    pub structure: Vec<StructureCheck>,
    pub states: Vec<FlowState>,
    pub final_state: Option<FlowState>,
    pub t_predicted: f64,
    pub t_observed: Option<f64>,
    pub stop_reason: StopReason,
    /// `‖∇f‖²` at the initial time, for the gradient bound.
    pub initial_grad_sq: f64,
    pub wall_seconds: f64,
}

/// Cohomology data of the evolving class `[ω(t)] = [ω₀] + t·c₁(K)` split into
/// base and fiber coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohomologyClass {
    pub base_coeff: f64,
    pub fiber_coeff: f64,
    pub c1_base_rate: f64,
    pub c1_fiber_rate: f64,
}

/// Maximal existence time and the limiting class (fiber coefficient zero).
pub fn predict_max_time(cls: &CohomologyClass) -> Result<(f64, CohomologyClass)> {
    if !(cls.fiber_coeff > 0.0) || !(cls.base_coeff > 0.0) {
        return Err(FlowError::InvalidParams("class coefficients must be positive".into()));
    }
    if !(cls.c1_fiber_rate < 0.0) {
        return Err(FlowError::NoFiberCollapse {
            rate: cls.c1_fiber_rate,
        });
    }
    let t = cls.fiber_coeff / cls.c1_fiber_rate.abs();
    let base = cls.base_coeff + cls.c1_base_rate * t;
    if !(base > 0.0) {
        return Err(FlowError::WrongRegime { t, base_at_t: base });
    }
    Ok((
        t,
        CohomologyClass {
            base_coeff: base,
            fiber_coeff: 0.0,
            ..*cls
        },
    ))
}

/// Closed-form product flow: `(f, c, K_fiber)` with `f = f₀ − (R^h/n)t`,
/// `c = c₀ − 2t`, `K_fiber = 2/c`.
pub fn product_closed_form(p: &ProductParams, t: f64) -> Result<(f64, f64, f64)> {
    let f = p.f0 - p.r_h / p.n as f64 * t;
    let c = p.c0 - 2.0 * t;
    if !(f > 0.0) || !(c > 0.0) {
        return Err(FlowError::PastSingularTime {
            t,
            singular: (p.c0 / 2.0).min(if p.r_h > 0.0 {
                p.f0 * p.n as f64 / p.r_h
            } else {
                f64::INFINITY
            }),
        });
    }
    Ok((f, c, 2.0 / c))
}

/// Curvature diagnostics from the profile jet `(f, f_ρ, f_ρρ, f_ρρρ)`.
pub fn reduced_diagnostics(n: usize, k: f64, r_h: f64, jet: [f64; 4]) -> CurvatureDiagnostics {
    let [f, f1, f2, f3] = jet;
    let slope = f2 / f1;
    log_slope_diagnostics(n, k, r_h, f, f1, slope, f3 / f1 - slope * slope)
}

/// Curvature diagnostics from `f`, `f_ρ` and the first two derivatives of
/// `log f_ρ`. Far in the tails this form keeps its relative accuracy when the
/// derivatives come from finite differences.
pub fn log_slope_diagnostics(
    n: usize,
    k: f64,
    r_h: f64,
    f: f64,
    f1: f64,
    log_slope: f64,
    log_curvature: f64,
) -> CurvatureDiagnostics {
    let nf = n as f64;
    let grad_sq = 2.0 * k * f1 / (f * f);
    let vertical = -k * log_curvature / f1;
    let horizontal = 2.0 * r_h / (nf * (nf + 1.0)) / f - grad_sq;
    let mixed = k / (2.0 * f) * (f1 / f - log_slope);
    CurvatureDiagnostics {
        a_norm_sq: 2.0 * nf * grad_sq,
        grad_ln_f_norm_sq: grad_sq,
        vertical_sectional: vertical,
        horizontal_sectional: horizontal,
        mixed_sectional: mixed,
        dominant_scalar: 2.0 * vertical,
        rm_norm: rm_norm_from_blocks(n, vertical, horizontal, 4.0 * nf * mixed * mixed),
    }
}

/// Product-mode diagnostics: round fiber of scale `c` over `f·ω_FS`.
pub fn product_diagnostics(n: usize, r_h: f64, f: f64, c: f64) -> CurvatureDiagnostics {
    let nf = n as f64;
    let vertical = 2.0 / c;
    let horizontal = 2.0 * r_h / (nf * (nf + 1.0)) / f;
    CurvatureDiagnostics {
        a_norm_sq: 0.0,
        grad_ln_f_norm_sq: 0.0,
        vertical_sectional: vertical,
        horizontal_sectional: horizontal,
        mixed_sectional: 0.0,
        dominant_scalar: 2.0 * vertical,
        rm_norm: rm_norm_from_blocks(n, vertical, horizontal, 0.0),
    }
}

/// Extrapolates the blow-up time from the last decade of `1/max|Rm|`, which
/// is asymptotically linear in `t` for a type I singularity.
pub fn estimate_blowup_time(steps: &[StepRecord], t_reference: f64) -> Option<f64> {
    let last = steps.last()?;
    let gap = (t_reference - last.t).max(0.0);
    let tail: Vec<(f64, f64)> = steps
        .iter()
        .filter(|s| t_reference - s.t <= 10.0 * gap.max(1e-12) && s.max_rm() > 0.0)
        .map(|s| (s.t, 1.0 / s.max_rm()))
        .collect();
    if tail.len() < 3 {
        return None;
    }
    let (slope, intercept) = linear_fit(&tail)?;
    if !(slope < 0.0) {
        return None;
    }
    Some(-intercept / slope)
}

/// Least-squares line `y = slope·x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let m = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Integrates the product flow, an ODE, with the same step control as the
/// profile solver.
pub fn run_product(params: &ProductParams, opts: &SolverOptions, rec: &Recording) -> Result<FlowRun> {
    params.validate()?;
    opts.validate()?;
    let clock = Instant::now();
    let (t_pred, _) = predict_max_time(&params.cohomology())?;
    let n = params.n;
    let rate_f = -params.r_h / n as f64;
    let mut t = 0.0;
    let (mut f, mut c) = (params.f0, params.c0);
    let record = |step: usize, t: f64, dt: f64, f: f64, c: f64| {
        let diag = product_diagnostics(n, params.r_h, f, c);
        StepRecord {
            step,
            t,
            dt,
            lower: f,
            upper: f,
            fiber_scale: c,
            min_f: f,
            max_f: f,
            max_grad_sq: 0.0,
            heat_residual: 0.0,
            tail_slope_error: 0.0,
            argmax_node: 0,
            argmax_rho: 0.0,
            at_max: diag,
            horizontal_sectional_max: diag.horizontal_sectional.abs(),
            vertical_sectional_max: diag.vertical_sectional,
            fiber_area: 2.0 * std::f64::consts::PI * c,
            newton_iterations: 0,
        }
    };
    let mut steps = vec![record(0, 0.0, 0.0, f, c)];
    let mut nodes = Vec::new();
    let stride = rec.stride.max(1);
    let dt_max = opts.dt_factor * 0.1;
    let stop = loop {
        if t_pred - t < opts.stop_margin {
            break StopReason::ReachedMargin;
        }
        if let Some(end) = opts.end_time {
            if t >= end - 1e-14 {
                break StopReason::EndTime;
            }
        }
        if steps.len() > opts.max_steps {
            break StopReason::MaxSteps;
        }
        let mut dt = dt_max.min(opts.approach_fraction * (t_pred - t));
        for target in [opts.probe_time, opts.end_time].into_iter().flatten() {
            if t < target && t + dt > target {
                dt = target - t;
            }
        }
        // SDIRK2 on a linear ODE with constant right-hand side is exact up to
        // rounding; both stages are written out for uniformity.
        let g = solver::GAMMA;
        let k1 = (rate_f, -2.0);
        let k2 = (rate_f, -2.0);
        f += dt * ((1.0 - g) * k1.0 + g * k2.0);
        c += dt * ((1.0 - g) * k1.1 + g * k2.1);
        t += dt;
        let r = record(steps.len(), t, dt, f, c);
        if steps.len() % stride == 0 {
            nodes.push(NodeRecord {
                step: r.step,
                t,
                node: 0,
                rho: 0.0,
                f,
                v: c,
                diag: r.at_max,
            });
        }
        steps.push(r);
    };
    let t_observed = estimate_blowup_time(&steps, t_pred);
    Ok(FlowRun {
        scenario: Scenario::Product(*params),
        steps,
        nodes,
        structure: Vec::new(),
        states: Vec::new(),
        final_state: None,
        t_predicted: t_pred,
        t_observed,
        stop_reason: stop,
        initial_grad_sq: 0.0,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Advances a state by `dt`, halving internally on Newton failure or loss of
/// monotonicity.
pub fn step_flow(
    params: &HirzebruchParams,
    state: &FlowState,
    dt: f64,
    opts: &SolverOptions,
) -> Result<FlowState> {
    let sys = params.system();
    let target = state.t + dt;
    let mut cur = state.clone();
    let mut h = dt;
    let mut halvings = 0;
    while cur.t < target - 1e-15 * target.abs().max(1.0) {
        let step = h.min(target - cur.t);
        match sdirk_step(&sys, cur.t, step, &cur.w, opts.newton()) {
            Some((w, _)) => {
                cur.t += step;
                let (a, width) = sys.endpoints(cur.t);
                cur.lower = a;
                cur.upper = a + width;
                cur.w = w;
            }
            None => {
                halvings += 1;
                if halvings > opts.max_halvings {
                    return Err(FlowError::StepRejected {
                        t: cur.t,
                        dt: h,
                        halvings,
                    });
                }
                h *= 0.5;
            }
        }
    }
    Ok(cur)
}

/// Diagnostics at node `j` of a state, if the node lies inside the window
/// `w_ρ ≥ window_threshold`.
///
/// Derivatives of `log f_ρ` are taken as differences of `log(w_{j+1} − w_{j−1})`
/// so that exponential tails are resolved to uniform relative accuracy.
pub fn node_diagnostics(
    params: &HirzebruchParams,
    state: &FlowState,
    j: usize,
    window_threshold: f64,
) -> Option<CurvatureDiagnostics> {
    let n = state.w.len();
    if j < 2 || j + 2 >= n {
        return None;
    }
    let h = state.spacing;
    let w = &state.w;
    let diff = |i: usize| w[i + 1] - w[i - 1];
    let (dm, d0, dp) = (diff(j - 1), diff(j), diff(j + 1));
    if !(dm > 0.0 && dp > 0.0) || d0 / (2.0 * h) < window_threshold {
        return None;
    }
    let (lm, l0, lp) = (dm.ln(), d0.ln(), dp.ln());
    let width = state.width();
    let f = state.lower + width * w[j];
    Some(log_slope_diagnostics(
        params.n,
        params.kf(),
        params.r_h,
        f,
        width * d0 / (2.0 * h),
        (lp - lm) / (2.0 * h),
        (lp - 2.0 * l0 + lm) / (h * h),
    ))
}

/// Heat-equation residual at the middle of three consecutive states, using
/// fourth-order spatial stencils and the quadratic time interpolant.
pub fn heat_residual(params: &HirzebruchParams, prev: &FlowState, mid: &FlowState, next: &FlowState) -> f64 {
    let h1 = mid.t - prev.t;
    let h2 = next.t - mid.t;
    let (c0, c1, c2) = (
        -h2 / (h1 * (h1 + h2)),
        (h2 - h1) / (h1 * h2),
        h1 / (h2 * (h1 + h2)),
    );
    let fp = prev.f_profile();
    let fm = mid.f_profile();
    let fnx = next.f_profile();
    let h = mid.spacing;
    let k = params.kf();
    let nn = params.n as f64;
    let mut worst: f64 = 0.0;
    for j in 2..fm.len() - 2 {
        if mid.rho(j).abs() > 0.5 * mid.half_width {
            continue;
        }
        let dt_f = c0 * fp[j] + c1 * fm[j] + c2 * fnx[j];
        let d1 = (-fm[j + 2] + 8.0 * fm[j + 1] - 8.0 * fm[j - 1] + fm[j - 2]) / (12.0 * h);
        let d2 = (-fm[j + 2] + 16.0 * fm[j + 1] - 30.0 * fm[j] + 16.0 * fm[j - 1] - fm[j - 2])
            / (12.0 * h * h);
        let rhs = k * (d2 / d1 + nn * d1 / fm[j]) - params.r_h / nn;
        worst = worst.max((dt_f - rhs).abs());
    }
    worst
}

struct StepSummary {
    max_grad_sq: f64,
    tail_slope_error: f64,
    argmax: usize,
    at_max: CurvatureDiagnostics,
    horizontal_max: f64,
    vertical_max: f64,
}

fn summarize(params: &HirzebruchParams, state: &FlowState, threshold: f64) -> StepSummary {
    let n = state.w.len();
    let h = state.spacing;
    let width = state.width();
    let k = params.kf();
    let mut max_grad_sq: f64 = 0.0;
    for j in 1..n - 1 {
        let w1 = (state.w[j + 1] - state.w[j - 1]) / (2.0 * h);
        max_grad_sq = max_grad_sq.max(2.0 * k * width * w1);
    }
    // Tails must decay like e^{±ρ} for the endpoint rates to hold.
    let expected = 1.0;
    let slope = |j: usize| {
        let w1 = (state.w[j + 1] - state.w[j - 1]) / (2.0 * h);
        let w2 = (state.w[j + 1] - 2.0 * state.w[j] + state.w[j - 1]) / (h * h);
        w2 / w1
    };
    let tail_slope_error = (slope(2) - expected).abs().max((slope(n - 3) + expected).abs());

    let mut best: Option<(usize, CurvatureDiagnostics)> = None;
    let mut horizontal_max: f64 = 0.0;
    let mut vertical_max = f64::NEG_INFINITY;
    for j in 2..n - 2 {
        if let Some(d) = node_diagnostics(params, state, j, threshold) {
            horizontal_max = horizontal_max.max(d.horizontal_sectional.abs());
            vertical_max = vertical_max.max(d.vertical_sectional);
            if best.is_none_or(|(_, b)| d.rm_norm > b.rm_norm) {
                best = Some((j, d));
            }
        }
    }
    let (argmax, at_max) = best.unwrap_or((n / 2, reduced_diagnostics(params.n, k, params.r_h, [f64::NAN; 4])));
    StepSummary {
        max_grad_sq,
        tail_slope_error,
        argmax,
        at_max,
        horizontal_max,
        vertical_max,
    }
}

fn make_record(
    params: &HirzebruchParams,
    state: &FlowState,
    step: usize,
    dt: f64,
    threshold: f64,
    newton_iterations: usize,
) -> StepRecord {
    let s = summarize(params, state, threshold);
    let k = params.kf();
    StepRecord {
        step,
        t: state.t,
        dt,
        lower: state.lower,
        upper: state.upper,
        fiber_scale: state.width() / k,
        min_f: state.lower + state.width() * state.w.iter().cloned().fold(f64::INFINITY, f64::min),
        max_f: state.lower + state.width() * state.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_grad_sq: s.max_grad_sq,
        heat_residual: f64::NAN,
        tail_slope_error: s.tail_slope_error,
        argmax_node: s.argmax,
        argmax_rho: state.rho(s.argmax),
        at_max: s.at_max,
        horizontal_sectional_max: s.horizontal_max,
        vertical_sectional_max: s.vertical_max,
        fiber_area: 2.0 * std::f64::consts::PI * state.width() / k,
        newton_iterations,
    }
}

fn tracked_nodes(params: &HirzebruchParams, state: &FlowState, rec: &Recording, threshold: f64) -> Vec<usize> {
    if !rec.tracked_nodes.is_empty() {
        return rec
            .tracked_nodes
            .iter()
            .cloned()
            .filter(|&j| j < params.grid_points)
            .collect();
    }
    (2..params.grid_points - 2)
        .step_by(16)
        .filter(|&j| node_diagnostics(params, state, j, threshold).is_some())
        .collect()
}

/// Runs the Calabi-symmetric flow until the stop criterion.
pub fn run_flow(params: &HirzebruchParams, opts: &SolverOptions, rec: &Recording) -> Result<FlowRun> {
    opts.validate()?;
    let clock = Instant::now();
    let mut state = init_hirzebruch_profile(params)?;
    let (t_pred, _) = predict_max_time(&params.cohomology())?;
    if let Some(p) = opts.probe_time {
        if p <= 0.0 || p >= t_pred - opts.stop_margin {
            return Err(FlowError::Config(format!(
                "probe_time {p} must lie in (0, T_predicted − stop_margin)"
            )));
        }
    }
    let sys = params.system();
    let k = params.kf();
    let threshold = opts.window_threshold;
    let dt_max = opts.dt_factor * params.spacing();
    let stride = rec.stride.max(1);
    let tracked = tracked_nodes(params, &state, rec, threshold);

    let mut steps = vec![make_record(params, &state, 0, 0.0, threshold, 0)];
    let initial_grad_sq = steps[0].max_grad_sq;
    let mut nodes = Vec::new();
    let mut structure = Vec::new();
    let mut states = Vec::new();
    let record_extras = |state: &FlowState, step: usize, nodes: &mut Vec<NodeRecord>, structure: &mut Vec<StructureCheck>, states: &mut Vec<FlowState>| {
        for &j in &tracked {
            if let Some(diag) = node_diagnostics(params, state, j, threshold) {
                let f = state.lower + state.width() * state.w[j];
                let v = state.width() * (state.w[j + 1] - state.w[j - 1]) / (2.0 * state.spacing) / k;
                nodes.push(NodeRecord {
                    step,
                    t: state.t,
                    node: j,
                    rho: state.rho(j),
                    f,
                    v,
                    diag,
                });
            }
        }
        if rec.structure_checks {
            if let Some(c) = profile::structure_check(params, state, step) {
                structure.push(c);
            }
        }
        if rec.keep_states {
            states.push(state.clone());
        }
    };
    record_extras(&state, 0, &mut nodes, &mut structure, &mut states);

    let mut prev: Option<FlowState> = None;
    let mut dt_cap = dt_max;
    let mut halvings = 0usize;
    let stop = loop {
        if t_pred - state.t < opts.stop_margin {
            break StopReason::ReachedMargin;
        }
        let max_v = state.width() / k * state.w.windows(3).map(|p| (p[2] - p[0]) / (2.0 * state.spacing)).fold(0.0, f64::max);
        if max_v < opts.v_floor {
            break StopReason::FiberCollapsed;
        }
        if let Some(end) = opts.end_time {
            if state.t >= end - 1e-14 {
                break StopReason::EndTime;
            }
        }
        if steps.len() > opts.max_steps {
            break StopReason::MaxSteps;
        }
        let mut dt = dt_cap.min(dt_max).min(opts.approach_fraction * (t_pred - state.t));
        for target in [opts.probe_time, opts.end_time].into_iter().flatten() {
            if state.t < target && state.t + dt > target {
                dt = target - state.t;
            }
        }
        let Some((w, iters)) = sdirk_step(&sys, state.t, dt, &state.w, opts.newton()) else {
            halvings += 1;
            if halvings > opts.max_halvings {
                break StopReason::StepRejected;
            }
            dt_cap = 0.5 * dt;
            continue;
        };
        halvings = 0;
        dt_cap = (2.0 * dt).min(dt_max);
        let t_new = state.t + dt;
        let (a, width) = sys.endpoints(t_new);
        let next = FlowState {
            t: t_new,
            lower: a,
            upper: a + width,
            w,
            ..state.clone()
        };
        if !strictly_increasing(&next.w) {
            break StopReason::MonotonicityLost;
        }
        let step_index = steps.len();
        if let Some(p) = &prev {
            let last = steps.len() - 1;
            steps[last].heat_residual = heat_residual(params, p, &state, &next);
        }
        steps.push(make_record(params, &next, step_index, dt, threshold, iters));
        prev = Some(std::mem::replace(&mut state, next));
        if step_index % stride == 0 {
            record_extras(&state, step_index, &mut nodes, &mut structure, &mut states);
        }
    };
    let last_index = steps.len() - 1;
    if last_index % stride != 0 {
        record_extras(&state, last_index, &mut nodes, &mut structure, &mut states);
    }
    let t_observed = estimate_blowup_time(&steps, t_pred);
    Ok(FlowRun {
        scenario: Scenario::Hirzebruch(*params),
        steps,
        nodes,
        structure,
        states,
        final_state: Some(state),
        t_predicted: t_pred,
        t_observed,
        stop_reason: stop,
        initial_grad_sq,
        wall_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Runs whichever scenario is given.
pub fn run_scenario(scenario: &Scenario, opts: &SolverOptions, rec: &Recording) -> Result<FlowRun> {
    match scenario {
        Scenario::Product(p) => run_product(p, opts, rec),
        Scenario::Hirzebruch(p) => run_flow(p, opts, rec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tanh_profile_midpoint_and_edges() {
        let p = HirzebruchParams::default();
        let s = init_hirzebruch_profile(&p).unwrap();
        let f = s.f_profile();
        // Even grid: the two central nodes straddle ρ = 0 symmetrically.
        let mid = 0.5 * (f[255] + f[256]);
        assert_relative_eq!(mid, 1.5, epsilon = 1e-12);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[511], 2.0);
        assert!(s.v_profile(1.0).iter().all(|v| *v > 0.0));
    }

    #[test]
    fn short_grid_is_rejected() {
        let p = HirzebruchParams {
            half_width: 5.0,
            ..Default::default()
        };
        assert!(matches!(init_hirzebruch_profile(&p), Err(FlowError::BadProfile(_))));
        let p = HirzebruchParams {
            a0: 2.0,
            b0: 1.0,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(FlowError::InvalidParams(_))));
    }

    #[test]
    fn product_closed_form_examples() {
        let p = ProductParams {
            n: 1,
            f0: 3.0,
            c0: 1.0,
            r_h: 2.0,
        };
        assert_eq!(product_closed_form(&p, 0.0).unwrap(), (3.0, 1.0, 2.0));
        let (f, c, _) = product_closed_form(&p, 0.25).unwrap();
        assert_relative_eq!(f, 2.5);
        assert_relative_eq!(c, 0.5);
        assert!(matches!(product_closed_form(&p, 0.5), Err(FlowError::PastSingularTime { .. })));
        let q = ProductParams { c0: 2.0, ..p };
        assert_relative_eq!(product_closed_form(&q, 0.5).unwrap().0, 2.0);
    }

    #[test]
    fn max_time_prediction() {
        let cls = CohomologyClass {
            base_coeff: 3.0,
            fiber_coeff: 1.0,
            c1_base_rate: -2.0,
            c1_fiber_rate: -2.0,
        };
        let (t, lim) = predict_max_time(&cls).unwrap();
        assert_relative_eq!(t, 0.5);
        assert_relative_eq!(lim.base_coeff, 2.0);
        assert_eq!(lim.fiber_coeff, 0.0);
        let swapped = CohomologyClass {
            base_coeff: 1.0,
            fiber_coeff: 3.0,
            ..cls
        };
        assert!(matches!(predict_max_time(&swapped), Err(FlowError::WrongRegime { .. })));
        let hz = HirzebruchParams::default().cohomology();
        assert_relative_eq!(predict_max_time(&hz).unwrap().0, 0.5);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (s, c) = linear_fit(&pts).unwrap();
        assert_relative_eq!(s, -0.5, epsilon = 1e-14);
        assert_relative_eq!(c, 2.0, epsilon = 1e-14);
    }
}
