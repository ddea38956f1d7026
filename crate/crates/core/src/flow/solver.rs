//! Implicit time stepping for the normalized profile equation.
//!
//! The unknown is `w = (f − A)/W ∈ [0, 1]` on a uniform ρ-grid with `w = 0`
//! and `w = 1` at the ends, where `A(t)` and `A(t) + W(t)` are the endpoint
//! values of `f`. It obeys
//!
//! ```text
//! ∂_t w = (k/W)(w_ρρ/w_ρ − 1 + 2w) + n k w_ρ / (A + W w)
//! ```
//!
//! whose diffusivity `k/(W w_ρ)` grows exponentially in the tails, so steps are
//! taken with the L-stable two-stage SDIRK method and a Newton iteration on the
//! tridiagonal Jacobian.

pub(crate) const GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Solves a tridiagonal system in place (Thomas algorithm). `sub[i]` couples
/// row `i` to `i − 1`, `sup[i]` couples row `i` to `i + 1`.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> bool {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return false;
    }
    c[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..m {
        denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return false;
        }
        c[i] = if i + 1 < m { sup[i] / denom } else { 0.0 };
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
    }
    for i in (0..m - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs.iter().all(|x| x.is_finite())
}

/// Semi-discrete normalized profile equation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ProfileSystem {
    pub n: f64,
    pub k: f64,
    pub spacing: f64,
    pub lower0: f64,
    pub width0: f64,
    pub lower_rate: f64,
    pub width_rate: f64,
}

impl ProfileSystem {
    pub fn endpoints(&self, t: f64) -> (f64, f64) {
        (
            self.lower0 + self.lower_rate * t,
            self.width0 + self.width_rate * t,
        )
    }

    /// Right-hand side on interior nodes of the full profile `w`.
    /// Returns `false` if the profile is not strictly increasing.
    pub fn rhs(&self, t: f64, w: &[f64], out: &mut [f64]) -> bool {
        let (a, width) = self.endpoints(t);
        let h = self.spacing;
        let ka = self.k / width;
        for j in 1..w.len() - 1 {
            let d1 = (w[j + 1] - w[j - 1]) / (2.0 * h);
            if !(d1 > 0.0) {
                return false;
            }
            let d2 = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (h * h);
            let f = a + width * w[j];
            out[j - 1] = ka * (d2 / d1 - 1.0 + 2.0 * w[j]) + self.n * self.k * d1 / f;
        }
        true
    }

    /// Tridiagonal Jacobian of [`Self::rhs`] with respect to the interior nodes.
    pub fn jacobian(&self, t: f64, w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (a, width) = self.endpoints(t);
        let h = self.spacing;
        let ka = self.k / width;
        let nk = self.n * self.k;
        let m = w.len() - 2;
        let (mut sub, mut diag, mut sup) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for j in 1..w.len() - 1 {
            let d1 = (w[j + 1] - w[j - 1]) / (2.0 * h);
            let d2 = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (h * h);
            let f = a + width * w[j];
            let ratio_d = |dd2: f64, dd1: f64| (dd2 * d1 - d2 * dd1) / (d1 * d1);
            let i = j - 1;
            sub[i] = ka * ratio_d(1.0 / (h * h), -0.5 / h) + nk * (-0.5 / h) / f;
            sup[i] = ka * ratio_d(1.0 / (h * h), 0.5 / h) + nk * (0.5 / h) / f;
            diag[i] = ka * (ratio_d(-2.0 / (h * h), 0.0) + 2.0) - nk * d1 * width / (f * f);
        }
        (sub, diag, sup)
    }
}

pub(crate) fn strictly_increasing(w: &[f64]) -> bool {
    w.windows(2).all(|p| p[1] > p[0])
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

/// Solves `Y − base − c·F(τ, Y) = 0` for the interior of `Y`; the boundary
/// values of `guess` are kept.
fn newton_stage(
    sys: &ProfileSystem,
    tau: f64,
    c: f64,
    base: &[f64],
    guess: &[f64],
    opts: NewtonOptions,
) -> Option<(Vec<f64>, usize)> {
    let len = guess.len();
    let m = len - 2;
    let mut y = guess.to_vec();
    let mut f = vec![0.0; m];
    for it in 1..=opts.max_iter {
        if !sys.rhs(tau, &y, &mut f) {
            return None;
        }
        let mut delta: Vec<f64> = (0..m).map(|i| -(y[i + 1] - base[i] - c * f[i])).collect();
        let (sub, diag, sup) = sys.jacobian(tau, &y);
        let sub: Vec<f64> = sub.iter().map(|x| -c * x).collect();
        let sup: Vec<f64> = sup.iter().map(|x| -c * x).collect();
        let diag: Vec<f64> = diag.iter().map(|x| 1.0 - c * x).collect();
        if !solve_tridiagonal(&sub, &diag, &sup, &mut delta) {
            return None;
        }
        let mut lambda = 1.0;
        let mut trial = y.clone();
        loop {
            for i in 0..m {
                trial[i + 1] = y[i + 1] + lambda * delta[i];
            }
            if strictly_increasing(&trial) {
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return None;
            }
        }
        let converged = (0..m).all(|i| {
            let wj = trial[i + 1];
            let scale = opts.tol * wj.min(1.0 - wj).max(0.0) + 4.0 * f64::EPSILON * wj.abs();
            (lambda * delta[i]).abs() <= scale
        });
        y = trial;
        if converged && lambda == 1.0 {
            return Some((y, it));
        }
    }
    None
}

/// One SDIRK2 step of size `dt` from `(t, w)`; returns the new profile and the
/// total Newton iteration count.
pub(crate) fn sdirk_step(
    sys: &ProfileSystem,
    t: f64,
    dt: f64,
    w: &[f64],
    opts: NewtonOptions,
) -> Option<(Vec<f64>, usize)> {
    let c = GAMMA * dt;
    let interior = &w[1..w.len() - 1];
    let (y1, it1) = newton_stage(sys, t + c, c, interior, w, opts)?;
    // Stage derivative recovered from the implicit relation, avoiding a second
    // evaluation of the stiff right-hand side.
    let base2: Vec<f64> = (0..interior.len())
        .map(|i| {
            let k1 = (y1[i + 1] - interior[i]) / c;
            interior[i] + dt * (1.0 - GAMMA) * k1
        })
        .collect();
    let (y2, it2) = newton_stage(sys, t + dt, c, &base2, &y1, opts)?;
    Some((y2, it1 + it2))
}
