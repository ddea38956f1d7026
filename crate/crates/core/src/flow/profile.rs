//! Local reconstruction of a smooth profile from grid data, and chart-level
//! cross-checks of a flow state on the reconstructed Calabi chart.

use super::{FlowState, HirzebruchParams, StructureCheck};
use crate::chart::samplers::{CalabiSampler, RadialProfile};
use crate::chart::{
    check_kahler_compatibility, fd_ricci_oracle, max_modulus, ChartSampler, C64, DEFAULT_FD_STEP,
};
use crate::curvature::fd_riemann;
use crate::oneill::{curvature_diagnostics, mixed_curvature_residuals, FramePoint};
use nalgebra::{DMatrix, DVector};

const HALF_STENCIL: usize = 3;

/// Degree-6 interpolant of `f = lower + width·w` through seven grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialProfile {
    pub lower: f64,
    pub width: f64,
    pub center: f64,
    pub spacing: f64,
    /// Coefficients of `w` in powers of `(ρ − center)/spacing`.
    pub coeffs: Vec<f64>,
}

impl PolynomialProfile {
    /// Fits around node `j`, which is moved inward if the stencil would leave
    /// the grid.
    pub fn fit(state: &FlowState, j: usize) -> Self {
        let n = state.w.len();
        let j = j.clamp(HALF_STENCIL, n - 1 - HALF_STENCIL);
        let m = 2 * HALF_STENCIL + 1;
        let vander = DMatrix::from_fn(m, m, |r, c| (r as f64 - HALF_STENCIL as f64).powi(c as i32));
        let rhs = DVector::from_fn(m, |r, _| state.w[j + r - HALF_STENCIL]);
        let coeffs = vander
            .lu()
            .solve(&rhs)
            .expect("Vandermonde matrix on distinct nodes is invertible");
        Self {
            lower: state.lower,
            width: state.width(),
            center: state.rho(j),
            spacing: state.spacing,
            coeffs: coeffs.iter().cloned().collect(),
        }
    }
}

impl RadialProfile for PolynomialProfile {
    fn jet(&self, rho: f64) -> [f64; 4] {
        let u = (rho - self.center) / self.spacing;
        let mut d = [0.0; 4];
        for (p, &c) in self.coeffs.iter().enumerate() {
            let mut fall = 1.0;
            for (order, slot) in d.iter_mut().enumerate() {
                if order > p {
                    break;
                }
                *slot += c * fall * u.powi((p - order) as i32);
                fall *= (p - order) as f64;
            }
        }
        let mut scale = 1.0;
        for (order, slot) in d.iter_mut().enumerate() {
            *slot *= self.width / scale;
            if order == 0 {
                *slot += self.lower;
            }
            scale *= self.spacing;
        }
        d
    }
}

/// Reconstructs a chart around the profile midpoint and compares the block
/// formulas with finite-difference curvature.
pub fn structure_check(params: &HirzebruchParams, state: &FlowState, step: usize) -> Option<StructureCheck> {
    let j = state
        .w
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .map(|(j, _)| j)?;
    let profile = PolynomialProfile::fit(state, j);
    let rho = profile.center;
    let sampler = CalabiSampler::new(params.n, params.kf(), profile);
    let z: Vec<C64> = (0..params.n)
        .map(|i| C64::new(0.25 - 0.1 * i as f64, 0.1 + 0.05 * i as f64))
        .collect();
    let point = sampler.point_at_rho(z, rho, 0.3);
    let blocks = sampler.blocks(&point).ok()?;
    let compatibility = max_modulus(&check_kahler_compatibility(&blocks));

    let ricci = fd_ricci_oracle(&sampler, &point, DEFAULT_FD_STEP).ok()?;
    let mut ratio_drift: f64 = 0.0;
    for i in 0..params.n {
        let s = blocks.s[i];
        let r = ricci.mixed[i] / ricci.fiber;
        ratio_drift = ratio_drift.max((r - s).norm() / s.norm());
    }

    let riem = fd_riemann(&sampler, &point.to_real(), DEFAULT_FD_STEP).ok()?;
    let fp = FramePoint::new(blocks).ok()?;
    let rm_fd = riem.norm_sq().sqrt();
    let mixed = mixed_curvature_residuals(&fp.frames, &riem).max();
    let closed = curvature_diagnostics(&fp).ok()?;
    Some(StructureCheck {
        step,
        t: state.t,
        rho,
        ratio_drift,
        compatibility,
        mixed_relative: mixed / rm_fd,
        rm_relative_error: (closed.rm_norm - rm_fd).abs() / rm_fd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::init_hirzebruch_profile;
    use crate::chart::samplers::LogisticProfile;

    #[test]
    fn interpolant_reproduces_smooth_profile() {
        let params = HirzebruchParams::default();
        let state = init_hirzebruch_profile(&params).unwrap();
        let exact = LogisticProfile::new(1.0, 2.0);
        let poly = PolynomialProfile::fit(&state, 260);
        let rho = poly.center + 0.3 * poly.spacing;
        let a = poly.jet(rho);
        let b = exact.jet(rho);
        for d in 0..4 {
            assert!((a[d] - b[d]).abs() < 1e-6, "order {d}: {} vs {}", a[d], b[d]);
        }
    }

    #[test]
    fn initial_state_passes_structure_checks() {
        let params = HirzebruchParams::default();
        let state = init_hirzebruch_profile(&params).unwrap();
        let c = structure_check(&params, &state, 0).unwrap();
        assert!(c.compatibility <= 1e-8);
        assert!(c.ratio_drift < 1e-4, "{c:?}");
        assert!(c.mixed_relative < 1e-4, "{c:?}");
        assert!(c.rm_relative_error < 1e-4, "{c:?}");
    }
}
