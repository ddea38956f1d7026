//! Concrete metric fields: flat space, Fubini–Study products, Calabi-ansatz
//! metrics on `O(−k)`-type line bundles over ℂPⁿ, and deliberately broken
//! perturbations used to exercise the structure detectors.

use super::{
    assemble_block_metric, fubini_study_matrix, BaseMetric, ChartBox, ChartMetricBlocks,
    ChartPoint, ChartSampler, GeometryError, MetricField, Result, C64,
};
use nalgebra::{DMatrix, DVector};

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn symmetric_box(dim: usize, half: f64) -> ChartBox {
    ChartBox {
        lo: vec![-half; 2 * dim],
        hi: vec![half; 2 * dim],
    }
}

/// Euclidean `ℂⁿ × ℂ`: `h = I`, `f = 1`, `s = 0`, `g_ξξ̄ = 1`.
#[derive(Debug, Clone, Copy)]
pub struct FlatSampler {
    pub n: usize,
}

impl MetricField for FlatSampler {
    fn complex_dim(&self) -> usize {
        self.n + 1
    }
    fn domain(&self) -> ChartBox {
        symmetric_box(self.n + 1, 1e6)
    }
    fn metric(&self, _coords: &[C64]) -> Result<DMatrix<C64>> {
        Ok(DMatrix::identity(self.n + 1, self.n + 1))
    }
}

impl ChartSampler for FlatSampler {
    fn blocks(&self, _p: &ChartPoint) -> Result<ChartMetricBlocks> {
        let n = self.n;
        Ok(ChartMetricBlocks {
            base: BaseMetric::flat(n),
            f: 1.0,
            df: DVector::zeros(n + 1),
            f_xi_xi: zero(),
            f_xi_xibar: 0.0,
            s: DVector::zeros(n),
            ds_bar_dxi: DVector::zeros(n),
            ds_bar_dz: DMatrix::zeros(n, n),
            g_xx: 1.0,
            dg_xx_dxi: zero(),
            g_xx_xi_xibar: 0.0,
        })
    }
}

/// Product `(base_scale·ω_FS on ℂPⁿ) × (fiber_scale·ω_FS on ℂP¹)`.
#[derive(Debug, Clone, Copy)]
pub struct ProductSampler {
    pub n: usize,
    pub base_scale: f64,
    pub fiber_scale: f64,
}

impl MetricField for ProductSampler {
    fn complex_dim(&self) -> usize {
        self.n + 1
    }
    fn domain(&self) -> ChartBox {
        symmetric_box(self.n + 1, 1e3)
    }
    fn metric(&self, coords: &[C64]) -> Result<DMatrix<C64>> {
        let (z, xi) = coords.split_at(self.n);
        assemble_block_metric(&self.blocks(&ChartPoint::new(z.to_vec(), xi[0]))?)
    }
}

impl ChartSampler for ProductSampler {
    fn blocks(&self, p: &ChartPoint) -> Result<ChartMetricBlocks> {
        let n = self.n;
        let a = 1.0 + p.xi.norm_sqr();
        let c = self.fiber_scale;
        Ok(ChartMetricBlocks {
            base: BaseMetric::fubini_study(&p.z),
            f: self.base_scale,
            df: DVector::zeros(n + 1),
            f_xi_xi: zero(),
            f_xi_xibar: 0.0,
            s: DVector::zeros(n),
            ds_bar_dxi: DVector::zeros(n),
            ds_bar_dz: DMatrix::zeros(n, n),
            g_xx: c / (a * a),
            dg_xx_dxi: p.xi.conj() * (-2.0 * c / (a * a * a)),
            g_xx_xi_xibar: -2.0 * c * (1.0 - 2.0 * p.xi.norm_sqr()) / a.powi(4),
        })
    }
}

/// A strictly increasing radial profile `F(ρ)` with three derivatives.
pub trait RadialProfile: Sync {
    /// `[F, F′, F″, F‴]` at `ρ`.
    fn jet(&self, rho: f64) -> [f64; 4];
}

/// Logistic profile running from `lower` to `upper`, optionally skewed:
/// `F = lower + (upper − lower)·(σ + ε σ(1−σ)(2σ−1))` with `σ = σ(ρ − center)`.
///
/// Monotone for `−2 < ε < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticProfile {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub skew: f64,
}

impl LogisticProfile {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            center: 0.0,
            skew: 0.0,
        }
    }

    /// Normalized profile `w ∈ (0, 1)` and its first three ρ-derivatives.
    pub fn unit_jet(&self, rho: f64) -> [f64; 4] {
        let x = rho - self.center;
        // Stable logistic on both tails.
        let s = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        };
        let q = s * (1.0 - s);
        let s1 = q;
        let s2 = q * (1.0 - 2.0 * s);
        let s3 = q * (1.0 - 6.0 * s + 6.0 * s * s);
        let e = self.skew;
        let p0 = s + e * (-2.0 * s * s * s + 3.0 * s * s - s);
        let p1 = 1.0 + e * (-6.0 * s * s + 6.0 * s - 1.0);
        let p2 = e * (6.0 - 12.0 * s);
        let p3 = -12.0 * e;
        [
            p0,
            p1 * s1,
            p2 * s1 * s1 + p1 * s2,
            p3 * s1 * s1 * s1 + 3.0 * p2 * s1 * s2 + p1 * s3,
        ]
    }
}

impl RadialProfile for LogisticProfile {
    fn jet(&self, rho: f64) -> [f64; 4] {
        let u = self.unit_jet(rho);
        let w = self.upper - self.lower;
        [self.lower + w * u[0], w * u[1], w * u[2], w * u[3]]
    }
}

/// Calabi-ansatz metric on the total space of a line bundle over ℂPⁿ with
/// `ρ = log|ξ|² + k log(1 + |z|²)` and `f = F(ρ)`.
///
/// Blocks: `h = ω_FS`, `s_i = kξ z̄_i/(1+|z|²)`, `g_ξξ̄ = F′(ρ)/(k|ξ|²)`.
#[derive(Debug, Clone)]
pub struct CalabiSampler<P> {
    pub n: usize,
    pub k: f64,
    pub profile: P,
}

impl<P: RadialProfile> CalabiSampler<P> {
    pub fn new(n: usize, k: f64, profile: P) -> Self {
        Self { n, k, profile }
    }

    pub fn rho(&self, p: &ChartPoint) -> f64 {
        let r2: f64 = p.z.iter().map(|c| c.norm_sqr()).sum();
        p.xi.norm_sqr().ln() + self.k * (1.0 + r2).ln()
    }

    /// A chart point lying on the level set `ρ = rho`, with the given base
    /// coordinates and fiber phase.
    pub fn point_at_rho(&self, z: Vec<C64>, rho: f64, phase: f64) -> ChartPoint {
        let r2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let modulus = (0.5 * (rho - self.k * (1.0 + r2).ln())).exp();
        ChartPoint::new(z, C64::from_polar(modulus, phase))
    }
}

impl<P: RadialProfile> MetricField for CalabiSampler<P> {
    fn complex_dim(&self) -> usize {
        self.n + 1
    }
    fn domain(&self) -> ChartBox {
        symmetric_box(self.n + 1, 1e3)
    }
    fn metric(&self, coords: &[C64]) -> Result<DMatrix<C64>> {
        let (z, xi) = coords.split_at(self.n);
        assemble_block_metric(&self.blocks(&ChartPoint::new(z.to_vec(), xi[0]))?)
    }
}

impl<P: RadialProfile> ChartSampler for CalabiSampler<P> {
    fn blocks(&self, p: &ChartPoint) -> Result<ChartMetricBlocks> {
        let n = self.n;
        let k = self.k;
        if p.z.len() != n {
            return Err(GeometryError::DimensionMismatch {
                what: "z",
                got: p.z.len(),
                expected: n,
            });
        }
        let xi = p.xi;
        let m2 = xi.norm_sqr();
        if !(m2 > 0.0) {
            return Err(GeometryError::Degenerate {
                what: "|xi|^2",
                value: m2,
            });
        }
        let r2: f64 = p.z.iter().map(|c| c.norm_sqr()).sum();
        let a = 1.0 + r2;
        let rho = m2.ln() + k * a.ln();
        let [f, f1, f2, f3] = self.profile.jet(rho);
        let phi: Vec<C64> = p.z.iter().map(|z| z.conj() / a).collect();
        let base = BaseMetric::fubini_study(&p.z);

        let mut df = DVector::from_fn(n + 1, |i, _| if i < n { phi[i] * (k * f1) } else { zero() });
        df[n] = xi.inv() * f1;

        let (v, v1, v2) = (f1 / k, f2 / k, f3 / k);
        let ds_bar_dz = base.h.map(|hij| hij * xi.conj() * k);
        Ok(ChartMetricBlocks {
            f,
            df,
            f_xi_xi: (xi * xi).inv() * (f2 - f1),
            f_xi_xibar: f2 / m2,
            s: DVector::from_fn(n, |i, _| xi * phi[i] * k),
            ds_bar_dxi: DVector::zeros(n),
            ds_bar_dz,
            g_xx: v / m2,
            dg_xx_dxi: (xi * m2).inv() * (v1 - v),
            g_xx_xi_xibar: (v2 - 2.0 * v1 + v) / (m2 * m2),
            base,
        })
    }
}

/// A metric field plus a smooth Hermitian perturbation coupling the first base
/// direction to the fiber: `δg_1ξ̄ = ε·z¹·ξ̄`. The result is no longer a
/// Kähler submersion metric.
#[derive(Debug, Clone)]
pub struct CoupledPerturbation<M> {
    pub inner: M,
    pub eps: f64,
}

impl<M: MetricField> MetricField for CoupledPerturbation<M> {
    fn complex_dim(&self) -> usize {
        self.inner.complex_dim()
    }
    fn domain(&self) -> ChartBox {
        self.inner.domain()
    }
    fn metric(&self, coords: &[C64]) -> Result<DMatrix<C64>> {
        let mut g = self.inner.metric(coords)?;
        let m = g.nrows() - 1;
        let bump = coords[0] * coords[m].conj() * self.eps;
        g[(0, m)] += bump;
        g[(m, 0)] += bump.conj();
        g[(0, 0)] += C64::new(self.eps * coords[m].im * coords[0].re, 0.0);
        if g.clone().cholesky().is_none() {
            return Err(GeometryError::NonPositiveDefinite);
        }
        Ok(g)
    }
}

/// Fubini–Study metric on ℂPⁿ viewed as a metric field in its own right
/// (used to sample base sectional curvatures independently of any total space).
#[derive(Debug, Clone, Copy)]
pub struct FubiniStudyField {
    pub n: usize,
}

impl MetricField for FubiniStudyField {
    fn complex_dim(&self) -> usize {
        self.n
    }
    fn domain(&self) -> ChartBox {
        symmetric_box(self.n, 1e3)
    }
    fn metric(&self, coords: &[C64]) -> Result<DMatrix<C64>> {
        Ok(fubini_study_matrix(coords))
    }
}

/// Conformally rescaled Fubini–Study metric `(1 + ε Re z¹)·ω_FS`, which is not
/// Kähler–Einstein for `ε ≠ 0`.
pub fn conformal_fubini_study(z: &[C64], eps: f64, step: f64) -> Result<BaseMetric> {
    BaseMetric::from_field(
        |w: &[C64]| fubini_study_matrix(w).scale(1.0 + eps * w[0].re),
        z,
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{
        check_kahler_compatibility, check_totally_geodesic, fd_ricci_oracle, max_modulus,
        ricci_blocks, ricci_relative_error, DEFAULT_FD_STEP,
    };
    use approx::assert_relative_eq;

    fn fd<F: Fn(f64) -> f64>(g: F, x: f64) -> f64 {
        let h = 1e-4;
        (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn logistic_jet_matches_finite_differences() {
        for skew in [0.0, 0.4, -0.7] {
            let p = LogisticProfile {
                lower: 1.0,
                upper: 3.0,
                center: 0.3,
                skew,
            };
            for rho in [-3.0, -0.5, 0.0, 1.2, 4.0] {
                let j = p.jet(rho);
                for d in 0..3 {
                    let num = fd(|r| p.jet(r)[d], rho);
                    assert_relative_eq!(num, j[d + 1], epsilon = 1e-9, max_relative = 1e-7);
                }
                assert!(j[1] > 0.0);
            }
        }
    }

    #[test]
    fn calabi_blocks_match_metric_derivatives() {
        let s = CalabiSampler::new(1, 1.0, LogisticProfile::new(1.0, 3.0));
        let p = ChartPoint::new(vec![C64::new(0.3, -0.1)], C64::new(0.7, 0.4));
        let b = s.blocks(&p).unwrap();
        // d/dRe(ξ) and d/dIm(ξ) combine to the holomorphic derivative.
        let g_at = |dx: f64, dy: f64| {
            s.blocks(&ChartPoint::new(p.z.clone(), p.xi + C64::new(dx, dy)))
                .unwrap()
                .g_xx
        };
        let dgx = fd(|t| g_at(t, 0.0), 0.0);
        let dgy = fd(|t| g_at(0.0, t), 0.0);
        let holo = C64::new(0.5 * dgx, -0.5 * dgy);
        assert_relative_eq!(holo.re, b.dg_xx_dxi.re, max_relative = 1e-7);
        assert_relative_eq!(holo.im, b.dg_xx_dxi.im, max_relative = 1e-7);
        assert!(max_modulus(&check_kahler_compatibility(&b)) < 1e-14);
        assert_eq!(check_totally_geodesic(&b), 0.0);
    }

    #[test]
    fn product_ricci_matches_oracle() {
        let s = ProductSampler {
            n: 2,
            base_scale: 3.0,
            fiber_scale: 1.0,
        };
        let p = ChartPoint::new(vec![C64::new(0.2, 0.1), C64::new(-0.3, 0.05)], C64::new(0.4, -0.2));
        let exact = ricci_blocks(&s.blocks(&p).unwrap()).unwrap();
        let oracle = fd_ricci_oracle(&s, &p, DEFAULT_FD_STEP).unwrap();
        assert!(ricci_relative_error(&exact, &oracle) < 1e-5);
        // Round fiber: Ric = 2·ω_FS on ℂP¹, independent of the scale.
        let a = 1.0 + p.xi.norm_sqr();
        assert_relative_eq!(exact.fiber, 2.0 / (a * a), max_relative = 1e-12);
    }

    #[test]
    fn perturbed_fubini_study_is_not_einstein() {
        // In one complex dimension every metric satisfies Ric = R·h.
        let z = [C64::new(0.2, 0.1), C64::new(-0.1, 0.3)];
        let pert = conformal_fubini_study(&z, 0.1, DEFAULT_FD_STEP).unwrap();
        assert!(max_modulus(&crate::chart::check_base_einstein(&pert)) > 1e-3);
        let exact = conformal_fubini_study(&z, 0.0, DEFAULT_FD_STEP).unwrap();
        assert!(max_modulus(&crate::chart::check_base_einstein(&exact)) < 1e-6);
    }
}
