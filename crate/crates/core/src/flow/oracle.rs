//! Free-endpoint solver used to measure the endpoint rates independently of
//! the endpoint ODEs built into [`super::run_flow`].
//!
//! It evolves `p = log f_ρ`, for which the flow reads
//!
//! ```text
//! ∂_t p = k e^{−p} p_ρρ + n k (p_ρ/f − e^p/f²)
//! ```
//!
//! with the free condition `p_ρρ = 0` at both grid ends. The lower endpoint
//! moves by the flow evaluated at the pole, `k·p_ρ − R^h/n`, with `p_ρ` read
//! off the evolving data; the upper endpoint is whatever the integral of `e^p`
//! (plus exponential tail completions) makes it.

use super::solver::solve_tridiagonal;
use super::{linear_fit, FlowError, HirzebruchParams, Result};
use crate::chart::samplers::{LogisticProfile, RadialProfile};

/// Endpoint rates fitted over a short run.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointRates {
    pub lower_rate: f64,
    pub upper_rate: f64,
    pub width_rate: f64,
    /// `(t, ka, kb)` samples.
    pub samples: Vec<(f64, f64, f64)>,
}

struct LogSlopeState {
    p: Vec<f64>,
    lower: f64,
}

fn reconstruct(p: &[f64], lower: f64, h: f64) -> (Vec<f64>, f64) {
    let n = p.len();
    let lam_lo = (p[1] - p[0]) / h;
    let lam_hi = (p[n - 1] - p[n - 2]) / h;
    let mut f = vec![0.0; n];
    f[0] = lower + p[0].exp() / lam_lo;
    for j in 1..n {
        f[j] = f[j - 1] + 0.5 * h * (p[j].exp() + p[j - 1].exp());
    }
    let upper = f[n - 1] + p[n - 1].exp() / lam_hi.abs();
    (f, upper)
}

fn implicit_euler(
    state: &LogSlopeState,
    f: &[f64],
    dt: f64,
    h: f64,
    n_base: f64,
    k: f64,
) -> Option<Vec<f64>> {
    let len = state.p.len();
    let nk = n_base * k;
    let mut p = state.p.clone();
    for _ in 0..50 {
        let mut g = vec![0.0; len];
        let (mut sub, mut diag, mut sup) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for j in 0..len {
            let e = p[j].exp();
            let fj = f[j];
            let (rhs, dm, d0, dp) = if j == 0 {
                let d1 = (p[1] - p[0]) / h;
                (
                    nk * (d1 / fj - e / (fj * fj)),
                    0.0,
                    -nk / (h * fj) - nk * e / (fj * fj),
                    nk / (h * fj),
                )
            } else if j == len - 1 {
                let d1 = (p[j] - p[j - 1]) / h;
                (
                    nk * (d1 / fj - e / (fj * fj)),
                    -nk / (h * fj),
                    nk / (h * fj) - nk * e / (fj * fj),
                    0.0,
                )
            } else {
                let lap = (p[j + 1] - 2.0 * p[j] + p[j - 1]) / (h * h);
                let d1 = (p[j + 1] - p[j - 1]) / (2.0 * h);
                let diff = k / e;
                (
                    diff * lap + nk * (d1 / fj - e / (fj * fj)),
                    diff / (h * h) - nk / (2.0 * h * fj),
                    -diff * lap - 2.0 * diff / (h * h) - nk * e / (fj * fj),
                    diff / (h * h) + nk / (2.0 * h * fj),
                )
            };
            g[j] = -(p[j] - state.p[j] - dt * rhs);
            sub[j] = -dt * dm;
            diag[j] = 1.0 - dt * d0;
            sup[j] = -dt * dp;
        }
        if !solve_tridiagonal(&sub, &diag, &sup, &mut g) {
            return None;
        }
        let mut worst: f64 = 0.0;
        for j in 0..len {
            p[j] += g[j];
            worst = worst.max(g[j].abs());
        }
        if worst < 1e-12 {
            return Some(p);
        }
    }
    None
}

/// Integrates the free-endpoint formulation up to `t_end` with implicit Euler
/// steps of size `dt`, and fits linear rates to the endpoint histories.
pub fn free_endpoint_rates(params: &HirzebruchParams, t_end: f64, dt: f64) -> Result<EndpointRates> {
    params.validate()?;
    if !(dt > 0.0 && t_end > dt) {
        return Err(FlowError::Config("need 0 < dt < t_end".into()));
    }
    let k = params.kf();
    let h = params.spacing();
    let width0 = k * (params.b0 - params.a0);
    let profile = LogisticProfile {
        lower: 0.0,
        upper: width0,
        center: 0.0,
        skew: params.shape.skew(),
    };
    let mut state = LogSlopeState {
        p: (0..params.grid_points)
            .map(|j| profile.jet(params.rho(j))[1].ln())
            .collect(),
        lower: k * params.a0,
    };
    let r_over_n = params.r_h / params.n as f64;
    let mut t = 0.0;
    let mut samples = Vec::new();
    loop {
        let (f, upper) = reconstruct(&state.p, state.lower, h);
        samples.push((t, state.lower, upper));
        if t >= t_end - 1e-12 {
            break;
        }
        let step = dt.min(t_end - t);
        let p = implicit_euler(&state, &f, step, h, params.n as f64, k).ok_or(FlowError::StepRejected {
            t,
            dt: step,
            halvings: 0,
        })?;
        let lam_lo = (p[1] - p[0]) / h;
        state.lower += step * (k * lam_lo - r_over_n);
        state.p = p;
        t += step;
    }
    let lower: Vec<_> = samples.iter().map(|s| (s.0, s.1)).collect();
    let upper: Vec<_> = samples.iter().map(|s| (s.0, s.2)).collect();
    let width: Vec<_> = samples.iter().map(|s| (s.0, s.2 - s.1)).collect();
    let fit = |pts: &[(f64, f64)]| linear_fit(pts).map(|l| l.0).unwrap_or(f64::NAN);
    Ok(EndpointRates {
        lower_rate: fit(&lower),
        upper_rate: fit(&upper),
        width_rate: fit(&width),
        samples,
    })
}
