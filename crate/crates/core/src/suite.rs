//! Seeded randomized oracle suites: closed-form chart and curvature identities
//! checked against finite differences at random points of Calabi-ansatz charts.

use crate::chart::samplers::{conformal_fubini_study, CalabiSampler, LogisticProfile};
use crate::chart::{
    check_base_einstein, check_kahler_compatibility, check_totally_geodesic, fd_ricci_oracle, max_modulus,
    ricci_blocks, ricci_relative_error, BaseMetric, ChartPoint, ChartSampler, GeometryError, C64,
    DEFAULT_FD_STEP,
};
use crate::curvature::fd_riemann;
use crate::oneill::{a_norm_sq, mixed_curvature_residuals, FramePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A random Calabi chart and a point on it.
#[derive(Debug, Clone)]
pub struct RandomChart {
    pub sampler: CalabiSampler<LogisticProfile>,
    pub point: ChartPoint,
}

/// Draws a chart with `n` base dimensions, `k ∈ {1, 2, 3}`, a skewed logistic
/// profile and a point with `|ρ − center| < 1.5`.
pub fn random_chart<R: Rng>(rng: &mut R, n: usize) -> RandomChart {
    let lower = rng.gen_range(0.5..2.0);
    let profile = LogisticProfile {
        lower,
        upper: lower + rng.gen_range(0.5..3.0),
        center: rng.gen_range(-0.5..0.5),
        skew: rng.gen_range(-0.5..0.5),
    };
    let sampler = CalabiSampler::new(n, rng.gen_range(1..=3) as f64, profile);
    let z: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
        .collect();
    let rho = profile.center + rng.gen_range(-1.5..1.5);
    let point = sampler.point_at_rho(z, rho, rng.gen_range(0.0..std::f64::consts::TAU));
    RandomChart { sampler, point }
}

/// Worst residuals of the block identities over the sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSuiteReport {
    pub samples: usize,
    /// Relative error of the block Ricci form against `−∂∂̄ log det g`.
    pub ricci: f64,
    pub compatibility: f64,
    pub totally_geodesic: f64,
    /// Mixed curvature components that must vanish.
    pub mixed: f64,
}

/// Block Ricci, compatibility, totally-geodesic and mixed-curvature checks at
/// `count` random points, cycling `n` through 1, 2, 3.
pub fn block_identity_suite(count: usize, seed: u64) -> Result<BlockSuiteReport, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = BlockSuiteReport {
        samples: count,
        ricci: 0.0,
        compatibility: 0.0,
        totally_geodesic: 0.0,
        mixed: 0.0,
    };
    for i in 0..count {
        let RandomChart { sampler, point } = random_chart(&mut rng, 1 + i % 3);
        let blocks = sampler.blocks(&point)?;
        let closed = ricci_blocks(&blocks)?;
        let oracle = fd_ricci_oracle(&sampler, &point, DEFAULT_FD_STEP)?;
        report.ricci = report.ricci.max(ricci_relative_error(&closed, &oracle));
        report.compatibility = report
            .compatibility
            .max(max_modulus(&check_kahler_compatibility(&blocks)));
        report.totally_geodesic = report.totally_geodesic.max(check_totally_geodesic(&blocks));
        let riem = fd_riemann(&sampler, &point.to_real(), DEFAULT_FD_STEP)?;
        let fp = FramePoint::new(blocks)?;
        report.mixed = report.mixed.max(mixed_curvature_residuals(&fp.frames, &riem).max());
    }
    Ok(report)
}

/// Worst relative deviation of the frame-expanded `‖A‖²` from `2n‖∇ log f‖²`
/// over `count` random frame points, cycling `n` through 1, 2, 3.
pub fn a_identity_suite(count: usize, seed: u64) -> Result<f64, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let n = 1 + i % 3;
        let RandomChart { sampler, point } = random_chart(&mut rng, n);
        let fp = FramePoint::new(sampler.blocks(&point)?)?;
        let expected = 2.0 * n as f64 * fp.grad_ln_f_norm_sq();
        worst = worst.max((a_norm_sq(&fp) - expected).abs() / expected);
    }
    Ok(worst)
}

/// Einstein residuals of the Fubini–Study base and of a conformal perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EinsteinReport {
    pub samples: usize,
    /// Largest residual over Fubini–Study points.
    pub fubini_study_max: f64,
    /// Smallest residual over perturbed points.
    pub perturbed_min: f64,
}

/// Runs the Einstein detector on `ℂPⁿ` at random points. The perturbation is
/// `(1 + ε Re z¹)·ω_FS`; in complex dimension one every metric is Einstein, so
/// `n` must be at least 2 for the perturbed residual to be meaningful.
pub fn einstein_suite(n: usize, eps: f64, count: usize, seed: u64) -> Result<EinsteinReport, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EinsteinReport {
        samples: count,
        fubini_study_max: 0.0,
        perturbed_min: f64::INFINITY,
    };
    for _ in 0..count {
        let z: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let fs = BaseMetric::fubini_study(&z);
        report.fubini_study_max = report.fubini_study_max.max(max_modulus(&check_base_einstein(&fs)));
        let perturbed = conformal_fubini_study(&z, eps, DEFAULT_FD_STEP)?;
        report.perturbed_min = report.perturbed_min.min(max_modulus(&check_base_einstein(&perturbed)));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_are_deterministic_per_seed() {
        assert_eq!(a_identity_suite(6, 3).unwrap(), a_identity_suite(6, 3).unwrap());
        let a = block_identity_suite(3, 11).unwrap();
        let b = block_identity_suite(3, 11).unwrap();
        assert_eq!(a, b);
    }
}
