//! Block-form algebra of a horizontally homothetic conformal submersion metric
//! in local submersion coordinates `(z¹, …, zⁿ, ξ)`.
//!
//! A Kähler metric whose projection to the base is conformal with dilation `f`
//! has the Hermitian block form
//!
//! ```text
//!        ┌                              ┐
//!  g  =  │ f·h_ij̄ + s_i s̄_j g_ξξ̄   s_i g_ξξ̄ │
//!        │ s̄_j g_ξξ̄              g_ξξ̄     │
//!        └                              ┘
//! ```
//!
//! where `h` is the base metric and `s_i = g_iξ̄ / g_ξξ̄`. Everything in this
//! module works pointwise on a [`ChartMetricBlocks`] record. Samplers that
//! produce such records over a coordinate box live in [`samplers`]; the
//! finite-difference Ricci oracle lives here as well so that the block formulas
//! can be cross-checked against `−∂∂̄ log det g`.
//!
//! Laplacians are complex Laplacians `g^{AB̄}∂_A∂_B̄` (no factor 2).

pub mod samplers;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Values of `f` or `g_ξξ̄` at or below this are rejected rather than clamped.
pub const DEGENERACY_FLOOR: f64 = 1e-14;
/// Residual threshold for identities that hold exactly for analytic constructions.
pub const STRUCTURE_TOL: f64 = 1e-8;
/// Residual threshold for comparisons against finite-difference oracles.
pub const FD_TOL: f64 = 1e-4;
/// Default finite-difference step in chart coordinate units.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("assembled metric is not positive definite")]
    NonPositiveDefinite,
    #[error("base metric is numerically singular")]
    SingularBase,
    #[error("{what} = {value:e} is at or below the degeneracy floor")]
    Degenerate { what: &'static str, value: f64 },
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("submersion structure violated: {what} residual {residual:.3e} exceeds {tolerance:.1e}")]
    StructureViolation {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },
    #[error("finite-difference stencil leaves the chart box along coordinate {coordinate}")]
    DomainEdge { coordinate: usize },
    #[error("vector is not horizontal: vertical component {residual:.3e}")]
    NotHorizontal { residual: f64 },
    #[error("plane is degenerate: the two vectors are (numerically) parallel")]
    DegeneratePlane,
    #[error("matrix is not Hermitian: max deviation {deviation:.3e}")]
    NotHermitian { deviation: f64 },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Largest entrywise deviation `|M − M*|`.
pub fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn is_positive_definite(m: &DMatrix<C64>) -> bool {
    m.clone().cholesky().is_some()
}

/// Base Kähler metric sampled at one point of the base chart.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMetric {
    pub h: DMatrix<C64>,
    pub ricci: DMatrix<C64>,
    /// `R^h = tr(h⁻¹ Ric^h)`.
    pub scalar: f64,
}

impl BaseMetric {
    /// Builds a base record; the scalar curvature is the trace `h^{ij̄} R_ij̄`.
    pub fn new(h: DMatrix<C64>, ricci: DMatrix<C64>) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(GeometryError::DimensionMismatch {
                what: "h columns",
                got: h.ncols(),
                expected: n,
            });
        }
        if ricci.nrows() != n || ricci.ncols() != n {
            return Err(GeometryError::DimensionMismatch {
                what: "ricci",
                got: ricci.nrows(),
                expected: n,
            });
        }
        let scale = h.iter().fold(1.0_f64, |a, z| a.max(z.norm()));
        let dev = hermitian_deviation(&h);
        if dev > 1e-12 * scale {
            return Err(GeometryError::NotHermitian { deviation: dev });
        }
        if !is_positive_definite(&h) {
            return Err(GeometryError::SingularBase);
        }
        let h_inv = h.clone().try_inverse().ok_or(GeometryError::SingularBase)?;
        let scalar = (&h_inv * &ricci).trace().re;
        Ok(Self { h, ricci, scalar })
    }

    /// Fubini–Study metric `i∂∂̄ log(1 + |z|²)` on ℂPⁿ, normalized so that
    /// `Ric = (n + 1)·h` and `R^h = n(n + 1)`.
    pub fn fubini_study(z: &[C64]) -> Self {
        let n = z.len();
        let h = fubini_study_matrix(z);
        let ricci = h.scale((n + 1) as f64);
        Self {
            h,
            ricci,
            scalar: (n * (n + 1)) as f64,
        }
    }

    pub fn flat(n: usize) -> Self {
        Self {
            h: DMatrix::identity(n, n),
            ricci: DMatrix::zeros(n, n),
            scalar: 0.0,
        }
    }

    /// Base data from an arbitrary Hermitian metric field on the base chart,
    /// with the Ricci form `−∂∂̄ log det h` taken by central differences.
    pub fn from_field<F>(field: F, z: &[C64], step: f64) -> Result<Self>
    where
        F: Fn(&[C64]) -> DMatrix<C64>,
    {
        let h = field(z);
        let log_det = |x: &[f64]| -> f64 {
            let pts = complex_from_real(x);
            log_det_hermitian(&field(&pts))
        };
        let hess = complex_hessian(&log_det, &real_from_complex(z), step);
        Self::new(h, -hess)
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Contravariant base metric `h^{ij̄}`, defined by `h^{ij̄} h_kj̄ = δ^i_k`.
    pub fn inverse(&self) -> Result<DMatrix<C64>> {
        let inv = self.h.clone().try_inverse().ok_or(GeometryError::SingularBase)?;
        Ok(inv.transpose())
    }
}

pub fn fubini_study_matrix(z: &[C64]) -> DMatrix<C64> {
    let n = z.len();
    let r2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let a = 1.0 + r2;
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 / a } else { 0.0 };
        C64::new(delta, 0.0) - z[i].conj() * z[j] / (a * a)
    })
}

/// Pointwise block data of a submersion metric.
///
/// Derivatives are holomorphic (`∂_A`) derivatives; since `f` and `g_ξξ̄` are
/// real, their antiholomorphic derivatives are the conjugates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartMetricBlocks {
    pub base: BaseMetric,
    /// Dilation `f > 0`.
    pub f: f64,
    /// `(∂_{z¹} f, …, ∂_{zⁿ} f, ∂_ξ f)`.
    pub df: DVector<C64>,
    /// `∂_ξ∂_ξ f`.
    pub f_xi_xi: C64,
    /// `∂_ξ∂_ξ̄ f`.
    pub f_xi_xibar: f64,
    /// `s_i = g_iξ̄ / g_ξξ̄`.
    pub s: DVector<C64>,
    /// `∂_ξ s̄_j`.
    pub ds_bar_dxi: DVector<C64>,
    /// Entry `(i, j)` is `∂_{zⁱ} s̄_j`.
    pub ds_bar_dz: DMatrix<C64>,
    /// `g_ξξ̄ > 0`.
    pub g_xx: f64,
    /// `∂_ξ g_ξξ̄`.
    pub dg_xx_dxi: C64,
    /// `∂_ξ∂_ξ̄ g_ξξ̄`.
    pub g_xx_xi_xibar: f64,
}

impl ChartMetricBlocks {
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn df_dxi(&self) -> C64 {
        self.df[self.dim()]
    }

    /// Checks shapes and the degeneracy floor on `f` and `g_ξξ̄`.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let checks = [
            ("df", self.df.len(), n + 1),
            ("s", self.s.len(), n),
            ("ds_bar_dxi", self.ds_bar_dxi.len(), n),
            ("ds_bar_dz rows", self.ds_bar_dz.nrows(), n),
            ("ds_bar_dz cols", self.ds_bar_dz.ncols(), n),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(GeometryError::DimensionMismatch {
                    what,
                    got,
                    expected,
                });
            }
        }
        if !(self.f > DEGENERACY_FLOOR) {
            return Err(GeometryError::Degenerate {
                what: "f",
                value: self.f,
            });
        }
        if !(self.g_xx > DEGENERACY_FLOOR) {
            return Err(GeometryError::Degenerate {
                what: "g_xixibar",
                value: self.g_xx,
            });
        }
        Ok(())
    }

    /// Horizontal part of `df`: `∂_{zⁱ} f − s_i ∂_ξ f`, which vanishes exactly
    /// when the raised gradient has no base components.
    pub fn horizontal_gradient(&self) -> DVector<C64> {
        let n = self.dim();
        let fx = self.df_dxi();
        DVector::from_fn(n, |i, _| self.df[i] - self.s[i] * fx)
    }

    /// Base components `g^{iB̄} ∂_B̄ f` of the raised gradient.
    pub fn raised_gradient_base(&self) -> Result<DVector<C64>> {
        let h_inv = self.base.inverse()?;
        let horiz = self.horizontal_gradient().map(|c| c.conj());
        Ok((h_inv * horiz).unscale(self.f))
    }
}

/// Assembles the `(n+1)×(n+1)` Hermitian matrix `g_AB̄`.
pub fn assemble_block_metric(blocks: &ChartMetricBlocks) -> Result<DMatrix<C64>> {
    blocks.validate()?;
    let n = blocks.dim();
    let g = blocks.g_xx;
    let s = &blocks.s;
    let h = &blocks.base.h;
    let m = DMatrix::from_fn(n + 1, n + 1, |a, b| match (a < n, b < n) {
        (true, true) => h[(a, b)] * blocks.f + s[a] * s[b].conj() * g,
        (true, false) => s[a] * g,
        (false, true) => s[b].conj() * g,
        (false, false) => C64::new(g, 0.0),
    });
    if !is_positive_definite(&m) {
        return Err(GeometryError::NonPositiveDefinite);
    }
    Ok(m)
}

/// Blocks of the matrix inverse `G⁻¹` of the assembled metric.
///
/// `G·G⁻¹ = I`. The contravariant components `g^{AB̄}` (with `g^{AB̄} g_CB̄ = δ`)
/// are the entries of `(G⁻¹)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseBlocks {
    /// `(1/f)·h⁻¹`.
    pub base: DMatrix<C64>,
    /// `−(1/f)·h⁻¹ s`.
    pub mixed: DVector<C64>,
    /// `1/g_ξξ̄ + (1/f)·s* h⁻¹ s`.
    pub fiber: f64,
}

impl InverseBlocks {
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let n = self.base.nrows();
        DMatrix::from_fn(n + 1, n + 1, |a, b| match (a < n, b < n) {
            (true, true) => self.base[(a, b)],
            (true, false) => self.mixed[a],
            (false, true) => self.mixed[b].conj(),
            (false, false) => C64::new(self.fiber, 0.0),
        })
    }
}

pub fn invert_block_metric(blocks: &ChartMetricBlocks) -> Result<InverseBlocks> {
    blocks.validate()?;
    let h_inv = blocks
        .base
        .h
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularBase)?;
    let inv_f = 1.0 / blocks.f;
    let hs = &h_inv * &blocks.s;
    let quad = blocks.s.dotc(&hs).re;
    Ok(InverseBlocks {
        base: h_inv.scale(inv_f),
        mixed: hs.scale(-inv_f),
        fiber: 1.0 / blocks.g_xx + inv_f * quad,
    })
}

/// `Γ^i_ξξ = (1/f)·h^{ij̄}·g_ξξ̄·∂_ξ s̄_j`.
pub fn fiber_christoffel(blocks: &ChartMetricBlocks) -> Result<DVector<C64>> {
    blocks.validate()?;
    let h_up = blocks.base.inverse()?;
    Ok((h_up * &blocks.ds_bar_dxi).scale(blocks.g_xx / blocks.f))
}

/// `max_j |∂_ξ s̄_j|`; zero iff the fibers are totally geodesic.
pub fn check_totally_geodesic(blocks: &ChartMetricBlocks) -> f64 {
    blocks
        .ds_bar_dxi
        .iter()
        .fold(0.0_f64, |acc, c| acc.max(c.norm()))
}

/// `h_ij̄ ∂_ξ f − (∂_{zⁱ} s̄_j) g_ξξ̄`, which vanishes for Kähler chart data.
pub fn check_kahler_compatibility(blocks: &ChartMetricBlocks) -> DMatrix<C64> {
    let fx = blocks.df_dxi();
    let h = &blocks.base.h;
    DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| {
        h[(i, j)] * fx - blocks.ds_bar_dz[(i, j)] * blocks.g_xx
    })
}

/// `(R^h/n)·h − Ric^h`; zero iff the base is Kähler–Einstein.
pub fn check_base_einstein(base: &BaseMetric) -> DMatrix<C64> {
    let n = base.dim() as f64;
    base.h.scale(base.scalar / n) - &base.ricci
}

/// Largest entry modulus of a complex matrix.
pub fn max_modulus(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, c| acc.max(c.norm()))
}

/// Complex Laplacian of a dilation with vertical gradient:
/// `Δf = (1/g_ξξ̄)·((n/f)|∂_ξ f|² + ∂_ξ∂_ξ̄ f)`.
pub fn dilation_laplacian(blocks: &ChartMetricBlocks) -> f64 {
    let n = blocks.dim() as f64;
    let fx = blocks.df_dxi();
    (n / blocks.f * fx.norm_sqr() + blocks.f_xi_xibar) / blocks.g_xx
}

/// Ricci form in block layout, matching the metric's block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct RicciBlocks {
    pub base: DMatrix<C64>,
    pub mixed: DVector<C64>,
    pub fiber: f64,
}

impl RicciBlocks {
    pub fn to_matrix(&self) -> DMatrix<C64> {
        let n = self.base.nrows();
        DMatrix::from_fn(n + 1, n + 1, |a, b| match (a < n, b < n) {
            (true, true) => self.base[(a, b)],
            (true, false) => self.mixed[a],
            (false, true) => self.mixed[b].conj(),
            (false, false) => C64::new(self.fiber, 0.0),
        })
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let n = m.nrows() - 1;
        Self {
            base: m.view((0, 0), (n, n)).into_owned(),
            mixed: DVector::from_fn(n, |i, _| m[(i, n)]),
            fiber: m[(n, n)].re,
        }
    }
}

/// Structured Ricci form of a submersion metric with vertical `∇f` and
/// totally geodesic fibers:
///
/// * `R_ξξ̄ = −∂_ξ∂_ξ̄ (log g_ξξ̄ + n log f)`
/// * `R_iξ̄ = s_i R_ξξ̄`
/// * `R_ij̄ = (−Δf + R^h/n) h_ij̄ + s_i s̄_j R_ξξ̄`
pub fn ricci_blocks(blocks: &ChartMetricBlocks) -> Result<RicciBlocks> {
    blocks.validate()?;
    let n = blocks.dim();
    let df_scale = 1.0 + blocks.df.iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    let horiz = blocks
        .horizontal_gradient()
        .iter()
        .fold(0.0_f64, |a, c| a.max(c.norm()));
    if horiz > STRUCTURE_TOL * df_scale {
        return Err(GeometryError::StructureViolation {
            what: "horizontal gradient of f",
            residual: horiz,
            tolerance: STRUCTURE_TOL,
        });
    }
    let tg = check_totally_geodesic(blocks);
    if tg > STRUCTURE_TOL {
        return Err(GeometryError::StructureViolation {
            what: "fiber second fundamental form",
            residual: tg,
            tolerance: STRUCTURE_TOL,
        });
    }

    let g = blocks.g_xx;
    let f = blocks.f;
    let fx = blocks.df_dxi();
    let ddlog_g = blocks.g_xx_xi_xibar / g - blocks.dg_xx_dxi.norm_sqr() / (g * g);
    let ddlog_f = blocks.f_xi_xibar / f - fx.norm_sqr() / (f * f);
    let fiber = -(ddlog_g + n as f64 * ddlog_f);

    let coeff = -dilation_laplacian(blocks) + blocks.base.scalar / n as f64;
    let s = &blocks.s;
    let base = DMatrix::from_fn(n, n, |i, j| {
        blocks.base.h[(i, j)] * coeff + s[i] * s[j].conj() * fiber
    });
    Ok(RicciBlocks {
        base,
        mixed: s.scale(fiber),
        fiber,
    })
}

/// A point of the chart `(z¹, …, zⁿ, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub z: Vec<C64>,
    pub xi: C64,
}

impl ChartPoint {
    pub fn new(z: Vec<C64>, xi: C64) -> Self {
        Self { z, xi }
    }

    pub fn complex_dim(&self) -> usize {
        self.z.len() + 1
    }

    pub fn coords(&self) -> Vec<C64> {
        let mut c = self.z.clone();
        c.push(self.xi);
        c
    }

    /// Real coordinates, interleaved as `(Re z¹, Im z¹, …, Re ξ, Im ξ)`.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = real_from_complex(&self.z);
        out.push(self.xi.re);
        out.push(self.xi.im);
        out
    }

    pub fn from_real(x: &[f64]) -> Self {
        let mut c = complex_from_real(x);
        let xi = c.pop().expect("chart point needs at least the fiber coordinate");
        Self { z: c, xi }
    }
}

pub fn real_from_complex(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn complex_from_real(x: &[f64]) -> Vec<C64> {
    x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Axis-aligned box in real chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn contains_stencil(&self, x: &[f64], margin: f64) -> Result<()> {
        for (i, &xi) in x.iter().enumerate() {
            if xi - margin < self.lo[i] || xi + margin > self.hi[i] {
                return Err(GeometryError::DomainEdge { coordinate: i });
            }
        }
        Ok(())
    }
}

/// A Hermitian metric field on a chart box.
pub trait MetricField: Sync {
    /// Complex dimension of the total space.
    fn complex_dim(&self) -> usize;
    fn domain(&self) -> ChartBox;
    /// Metric `g_AB̄` at complex coordinates `(z¹, …, zⁿ, ξ)`.
    fn metric(&self, coords: &[C64]) -> Result<DMatrix<C64>>;
}

/// A metric field that can also report its submersion block data.
pub trait ChartSampler: MetricField {
    fn blocks(&self, p: &ChartPoint) -> Result<ChartMetricBlocks>;
}

pub fn log_det_hermitian(m: &DMatrix<C64>) -> f64 {
    match m.clone().cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>(),
        None => m.determinant().re.ln(),
    }
}

/// Central-difference complex Hessian `∂_A∂_B̄ F` of a real function of
/// interleaved real coordinates.
pub fn complex_hessian(func: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> DMatrix<C64> {
    let dim = x.len();
    let m = dim / 2;
    let real = real_hessian(func, x, step);
    DMatrix::from_fn(m, m, |a, b| {
        let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
        C64::new(
            0.25 * (real[(xa, xb)] + real[(ya, yb)]),
            0.25 * (real[(xa, yb)] - real[(ya, xb)]),
        )
    })
}

/// Second-order central-difference Hessian of a real function.
pub fn real_hessian(func: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> DMatrix<f64> {
    let dim = x.len();
    let mut pt = x.to_vec();
    let f0 = func(x);
    let mut hess = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        pt[a] = x[a] + step;
        let fp = func(&pt);
        pt[a] = x[a] - step;
        let fm = func(&pt);
        pt[a] = x[a];
        hess[(a, a)] = (fp - 2.0 * f0 + fm) / (step * step);
        for b in (a + 1)..dim {
            let mut corner = |sa: f64, sb: f64| {
                pt[a] = x[a] + sa * step;
                pt[b] = x[b] + sb * step;
                let v = func(&pt);
                pt[a] = x[a];
                pt[b] = x[b];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                + corner(-1.0, -1.0))
                / (4.0 * step * step);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    hess
}

/// Ricci form `R_AB̄ = −∂_A∂_B̄ log det g` by central differences.
pub fn fd_ricci_oracle<M: MetricField + ?Sized>(
    field: &M,
    point: &ChartPoint,
    step: f64,
) -> Result<RicciBlocks> {
    let x = point.to_real();
    field.domain().contains_stencil(&x, step)?;
    // Evaluate once up front so errors surface before the stencil sweep.
    field.metric(&point.coords())?;
    let log_det = |y: &[f64]| -> f64 {
        match field.metric(&complex_from_real(y)) {
            Ok(m) => log_det_hermitian(&m),
            Err(_) => f64::NAN,
        }
    };
    let hess = complex_hessian(&log_det, &x, step);
    if hess.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(GeometryError::NonPositiveDefinite);
    }
    Ok(RicciBlocks::from_matrix(&(-hess)))
}

/// Relative Frobenius distance between two Ricci block records, scaled by the
/// larger of the two norms (or 1 when both are tiny).
pub fn ricci_relative_error(a: &RicciBlocks, b: &RicciBlocks) -> f64 {
    let ma = a.to_matrix();
    let mb = b.to_matrix();
    let scale = ma.norm().max(mb.norm()).max(1e-12);
    (ma - mb).norm() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn simple_blocks(f: f64, s1: f64, g: f64) -> ChartMetricBlocks {
        ChartMetricBlocks {
            base: BaseMetric::flat(1),
            f,
            df: DVector::from_vec(vec![c(0.0), c(0.0)]),
            f_xi_xi: c(0.0),
            f_xi_xibar: 0.0,
            s: DVector::from_vec(vec![c(s1)]),
            ds_bar_dxi: DVector::from_vec(vec![c(0.0)]),
            ds_bar_dz: DMatrix::from_element(1, 1, c(0.0)),
            g_xx: g,
            dg_xx_dxi: c(0.0),
            g_xx_xi_xibar: 0.0,
        }
    }

    #[test]
    fn assemble_direct_substitution() {
        let m = assemble_block_metric(&simple_blocks(2.0, 0.5, 3.0)).unwrap();
        assert_relative_eq!(m[(0, 0)].re, 2.75);
        assert_relative_eq!(m[(0, 1)].re, 1.5);
        assert_relative_eq!(m[(1, 0)].re, 1.5);
        assert_relative_eq!(m[(1, 1)].re, 3.0);
        let id = assemble_block_metric(&simple_blocks(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(id, DMatrix::identity(2, 2));
    }

    #[test]
    fn inverse_matches_two_by_two_inversion() {
        let inv = invert_block_metric(&simple_blocks(2.0, 0.5, 3.0)).unwrap();
        assert_relative_eq!(inv.base[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(inv.mixed[0].re, -0.25, epsilon = 1e-15);
        assert_relative_eq!(inv.fiber, 11.0 / 24.0, epsilon = 1e-15);
        let id = invert_block_metric(&simple_blocks(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(id.to_matrix(), DMatrix::identity(2, 2));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let err = assemble_block_metric(&simple_blocks(1e-15, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, GeometryError::Degenerate { what: "f", .. }));
        let err = invert_block_metric(&simple_blocks(1.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::Degenerate { what: "g_xixibar", .. }));
    }

    #[test]
    fn singular_base_is_reported() {
        let mut b = simple_blocks(1.0, 0.0, 1.0);
        b.base.h = DMatrix::from_element(1, 1, c(0.0));
        assert_eq!(invert_block_metric(&b).unwrap_err(), GeometryError::SingularBase);
        assert!(BaseMetric::new(DMatrix::from_element(1, 1, c(0.0)), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn christoffel_and_geodesic_readoff() {
        let mut b = simple_blocks(2.0, 0.0, 3.0);
        assert_eq!(fiber_christoffel(&b).unwrap()[0], c(0.0));
        assert_eq!(check_totally_geodesic(&b), 0.0);
        b.ds_bar_dxi[0] = c(0.4);
        assert_relative_eq!(fiber_christoffel(&b).unwrap()[0].re, 0.6, epsilon = 1e-15);
        assert_relative_eq!(check_totally_geodesic(&b), 0.4);
    }

    #[test]
    fn constant_data_is_kahler_compatible() {
        let b = simple_blocks(2.0, 0.5, 3.0);
        assert_eq!(max_modulus(&check_kahler_compatibility(&b)), 0.0);
    }

    #[test]
    fn flat_metric_has_zero_ricci_blocks() {
        let r = ricci_blocks(&simple_blocks(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(max_modulus(&r.to_matrix()), 0.0);
    }

    #[test]
    fn ricci_blocks_rejects_broken_structure() {
        let mut b = simple_blocks(1.0, 0.0, 1.0);
        b.ds_bar_dxi[0] = c(1e-3);
        assert!(matches!(
            ricci_blocks(&b),
            Err(GeometryError::StructureViolation { .. })
        ));
        let mut b = simple_blocks(1.0, 0.0, 1.0);
        b.df[0] = c(0.1);
        assert!(matches!(
            ricci_blocks(&b),
            Err(GeometryError::StructureViolation { .. })
        ));
    }

    #[test]
    fn einstein_residuals() {
        let fs = BaseMetric::fubini_study(&[C64::new(0.3, -0.2)]);
        assert_eq!(fs.scalar, 2.0);
        assert!(max_modulus(&check_base_einstein(&fs)) < 1e-15);
        assert_eq!(max_modulus(&check_base_einstein(&BaseMetric::flat(2))), 0.0);
    }

    #[test]
    fn real_coordinates_round_trip() {
        let p = ChartPoint::new(vec![C64::new(0.1, 0.2)], C64::new(-0.3, 0.4));
        assert_eq!(p.to_real(), vec![0.1, 0.2, -0.3, 0.4]);
        assert_eq!(ChartPoint::from_real(&p.to_real()), p);
    }
}
