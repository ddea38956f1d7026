//! O'Neill tensors and curvature splitting for horizontally homothetic
//! conformal submersions with totally geodesic fibers.
//!
//! With `ω(X, Y) = g(X, JY)` the integrability tensor on horizontal vectors is
//!
//! ```text
//! A_X Y = ½ (ω(X, Y) J∇log f − g(X, Y) ∇log f)
//! ```
//!
//! so `A_X(JX) = −½ J∇log f` for unit `X`, and `|A|² = 2n |∇log f|²`.
//! Horizontal sectional curvatures satisfy
//! `κ_M = κ_B/f − 3|A_X Y|² − ¼|∇log f|²` for orthonormal `X, Y`.

use crate::chart::{
    assemble_block_metric, check_totally_geodesic, ChartMetricBlocks, GeometryError, MetricField,
    Result, C64, STRUCTURE_TOL,
};
use crate::curvature::{complex_structure, fd_riemann, real_differential, real_metric, RiemannTensor};
use nalgebra::{DMatrix, DVector};

/// Tolerance for the horizontality of input vectors, relative to their length.
pub const HORIZONTAL_TOL: f64 = 1e-9;

/// Orthonormal vertical and horizontal frames at one point.
///
/// The vertical plane is spanned by the real fiber coordinate directions; the
/// horizontal frame is Gram–Schmidt on the base coordinate directions after
/// removing their vertical parts.
#[derive(Debug, Clone)]
pub struct Frames {
    /// Complex dimension of the base.
    pub n: usize,
    pub metric: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub vertical: [DVector<f64>; 2],
    pub horizontal: Vec<DVector<f64>>,
}

impl Frames {
    pub fn from_hermitian(herm: &DMatrix<C64>) -> Result<Self> {
        let m = herm.nrows();
        let n = m - 1;
        let metric = real_metric(herm);
        let dim = 2 * m;
        let e = |i: usize| DVector::from_fn(dim, |r, _| if r == i { 1.0 } else { 0.0 });
        let ip = |x: &DVector<f64>, y: &DVector<f64>| (x.transpose() * &metric * y)[(0, 0)];

        let v1 = {
            let x = e(2 * n);
            let len = ip(&x, &x).sqrt();
            x / len
        };
        let v2 = {
            let x = e(2 * n + 1);
            let x = &x - &v1 * ip(&x, &v1);
            let len = ip(&x, &x).sqrt();
            x / len
        };
        let mut horizontal: Vec<DVector<f64>> = Vec::with_capacity(2 * n);
        for a in 0..2 * n {
            let mut x = e(a);
            for v in [&v1, &v2] {
                x -= v * ip(&e(a), v);
            }
            for h in &horizontal {
                let c = ip(&x, h);
                x -= h * c;
            }
            let len = ip(&x, &x).sqrt();
            if !(len > 1e-12) {
                return Err(GeometryError::NonPositiveDefinite);
            }
            horizontal.push(x / len);
        }
        let j = complex_structure(m);
        let frames = Self {
            n,
            metric,
            j,
            vertical: [v1, v2],
            horizontal,
        };
        let jv = &frames.j * &frames.vertical[0];
        let leak = frames.horizontal_part(&jv).norm();
        if leak > 1e-9 {
            return Err(GeometryError::StructureViolation {
                what: "J-invariance of the vertical plane",
                residual: leak,
                tolerance: 1e-9,
            });
        }
        Ok(frames)
    }

    pub fn real_dim(&self) -> usize {
        self.metric.nrows()
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.metric * y)[(0, 0)]
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.inner(x, x).max(0.0).sqrt()
    }

    /// `ω(X, Y) = g(X, JY)`.
    pub fn omega(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.inner(x, &(&self.j * y))
    }

    pub fn vertical_part(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for v in &self.vertical {
            out += v * self.inner(x, v);
        }
        out
    }

    pub fn horizontal_part(&self, x: &DVector<f64>) -> DVector<f64> {
        x - self.vertical_part(x)
    }

    fn require_horizontal(&self, x: &DVector<f64>) -> Result<()> {
        let scale = self.norm(x).max(f64::MIN_POSITIVE);
        let leak = self.norm(&self.vertical_part(x)) / scale;
        if leak > HORIZONTAL_TOL {
            return Err(GeometryError::NotHorizontal { residual: leak });
        }
        Ok(())
    }

    /// Orthonormalizes a pair spanning a plane.
    pub fn orthonormal_pair(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let nx = self.norm(x);
        let ny = self.norm(y);
        if !(nx > 0.0) || !(ny > 0.0) {
            return Err(GeometryError::DegeneratePlane);
        }
        let ex = x / nx;
        let yp = y - &ex * self.inner(y, &ex);
        let nyp = self.norm(&yp);
        if nyp < 1e-8 * ny {
            return Err(GeometryError::DegeneratePlane);
        }
        Ok((ex, yp / nyp))
    }
}

/// Frames plus the dilation data needed by the closed-form O'Neill tensors.
#[derive(Debug, Clone)]
pub struct FramePoint {
    pub frames: Frames,
    pub blocks: ChartMetricBlocks,
    /// Riemannian gradient of `log f` in real coordinates.
    pub grad_ln_f: DVector<f64>,
}

impl FramePoint {
    pub fn new(blocks: ChartMetricBlocks) -> Result<Self> {
        let herm = assemble_block_metric(&blocks)?;
        let frames = Frames::from_hermitian(&herm)?;
        let tg = check_totally_geodesic(&blocks);
        if tg > STRUCTURE_TOL {
            return Err(GeometryError::StructureViolation {
                what: "fiber second fundamental form",
                residual: tg,
                tolerance: STRUCTURE_TOL,
            });
        }
        let dlog = real_differential(&blocks.df.unscale(blocks.f));
        let ginv = frames
            .metric
            .clone()
            .try_inverse()
            .ok_or(GeometryError::NonPositiveDefinite)?;
        let grad_ln_f = ginv * dlog;
        let scale = frames.norm(&grad_ln_f).max(1.0);
        let leak = frames.norm(&frames.horizontal_part(&grad_ln_f)) / scale;
        if leak > STRUCTURE_TOL {
            return Err(GeometryError::StructureViolation {
                what: "horizontal gradient of f",
                residual: leak,
                tolerance: STRUCTURE_TOL,
            });
        }
        Ok(Self {
            frames,
            blocks,
            grad_ln_f,
        })
    }

    pub fn n(&self) -> usize {
        self.frames.n
    }

    pub fn grad_ln_f_norm_sq(&self) -> f64 {
        self.frames.inner(&self.grad_ln_f, &self.grad_ln_f)
    }
}

/// `A_X Y` for horizontal `X, Y`.
pub fn a_tensor(fp: &FramePoint, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let fr = &fp.frames;
    fr.require_horizontal(x)?;
    fr.require_horizontal(y)?;
    let jg = &fr.j * &fp.grad_ln_f;
    Ok((jg * fr.omega(x, y) - &fp.grad_ln_f * fr.inner(x, y)) * 0.5)
}

/// `A_X V = −Σ_j g(V, A_X X_j) X_j` for horizontal `X` and vertical `V`.
pub fn a_tensor_vertical(fp: &FramePoint, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let fr = &fp.frames;
    let mut out = DVector::zeros(fr.real_dim());
    for xj in &fr.horizontal {
        let axj = a_tensor(fp, x, xj)?;
        out -= xj * fr.inner(v, &axj);
    }
    Ok(out)
}

/// `|A|² = Σ_{i,j} |A_{X_i} X_j|² + Σ_{i,k} |A_{X_i} V_k|²` over orthonormal frames;
/// the two sums are equal.
pub fn a_norm_sq(fp: &FramePoint) -> f64 {
    let fr = &fp.frames;
    let mut total = 0.0;
    for xi in &fr.horizontal {
        for xj in &fr.horizontal {
            let a = a_tensor(fp, xi, xj).expect("frame vectors are horizontal");
            total += fr.inner(&a, &a);
        }
    }
    2.0 * total
}

/// Sectional curvature of a horizontal plane of the projected base metric.
pub fn projected_base_sectional<M: MetricField + ?Sized>(
    base: &M,
    z: &[C64],
    x: &DVector<f64>,
    y: &DVector<f64>,
    step: f64,
) -> Result<f64> {
    let n2 = 2 * base.complex_dim();
    let px = DVector::from_fn(n2, |i, _| x[i]);
    let py = DVector::from_fn(n2, |i, _| y[i]);
    let riem = fd_riemann(base, &crate::chart::real_from_complex(z), step)?;
    riem.sectional(&px, &py)
}

/// `κ_B/f − κ_M − 3|A_X Y|² − ¼|∇log f|²` for the horizontal plane spanned by
/// `x, y`; vanishes on conformal submersion metrics with vertical `∇f`.
pub fn sectional_residual(
    fp: &FramePoint,
    riem: &RiemannTensor,
    x: &DVector<f64>,
    y: &DVector<f64>,
    kappa_base: f64,
) -> Result<f64> {
    let fr = &fp.frames;
    fr.require_horizontal(x)?;
    fr.require_horizontal(y)?;
    let (ex, ey) = fr.orthonormal_pair(x, y)?;
    let kappa_m = riem.sectional(&ex, &ey)?;
    let a = a_tensor(fp, &ex, &ey)?;
    Ok(kappa_base / fp.blocks.f - kappa_m - 3.0 * fr.inner(&a, &a) - 0.25 * fp.grad_ln_f_norm_sq())
}

/// Largest mixed curvature components in orthonormal frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedResiduals {
    /// `max |R(V₁, V₂, V₃, X)|`.
    pub three_vertical: f64,
    /// `max |R(X₁, X₂, X₃, V)|`.
    pub three_horizontal: f64,
}

impl MixedResiduals {
    pub fn max(&self) -> f64 {
        self.three_vertical.max(self.three_horizontal)
    }
}

pub fn mixed_curvature_residuals(frames: &Frames, riem: &RiemannTensor) -> MixedResiduals {
    let mut three_vertical: f64 = 0.0;
    for a in &frames.vertical {
        for b in &frames.vertical {
            for c in &frames.vertical {
                for x in &frames.horizontal {
                    three_vertical = three_vertical.max(riem.eval(a, b, c, x).abs());
                }
            }
        }
    }
    let mut three_horizontal: f64 = 0.0;
    for a in &frames.horizontal {
        for b in &frames.horizontal {
            for c in &frames.horizontal {
                for v in &frames.vertical {
                    three_horizontal = three_horizontal.max(riem.eval(a, b, c, v).abs());
                }
            }
        }
    }
    MixedResiduals {
        three_vertical,
        three_horizontal,
    }
}

/// `Hess(log f)(V, V)` for a vertical real vector `V`, using `Γ^i_ξξ = 0`.
pub fn hessian_ln_f_vertical(fp: &FramePoint, v: &DVector<f64>) -> f64 {
    let b = &fp.blocks;
    let n = fp.n();
    let a = C64::new(v[2 * n], v[2 * n + 1]);
    let f = b.f;
    let fx = b.df_dxi();
    let l_x = fx / f;
    let l_xx = b.f_xi_xi / f - fx * fx / (f * f);
    let l_xxbar = b.f_xi_xibar / f - fx.norm_sqr() / (f * f);
    // Γ^ξ_ξξ = ∂_ξ log g_ξξ̄ when Γ^i_ξξ = 0.
    let h_xx = l_xx - b.dg_xx_dxi / b.g_xx * l_x;
    2.0 * (a * a * h_xx).re + 2.0 * a.norm_sqr() * l_xxbar
}

/// `K(V_i, X_j) = −½(Hess log f(V, V) + g(∇log f, V)²) + |A_X V|²` on the
/// orthonormal frames; rows are vertical, columns horizontal.
pub fn vertical_horizontal_curvature(fp: &FramePoint) -> Result<DMatrix<f64>> {
    let fr = &fp.frames;
    let mut out = DMatrix::zeros(2, fr.horizontal.len());
    for (i, v) in fr.vertical.iter().enumerate() {
        let hess = hessian_ln_f_vertical(fp, v);
        let dv = fr.inner(&fp.grad_ln_f, v);
        for (j, x) in fr.horizontal.iter().enumerate() {
            let axv = a_tensor_vertical(fp, x, v)?;
            out[(i, j)] = -0.5 * (hess + dv * dv) + fr.inner(&axv, &axv);
        }
    }
    Ok(out)
}

/// Holomorphic sectional curvature of a base with constant holomorphic
/// sectional curvature, `2R^h/(n(n+1))`.
pub fn base_holomorphic_sectional(blocks: &ChartMetricBlocks) -> f64 {
    let n = blocks.dim() as f64;
    2.0 * blocks.base.scalar / (n * (n + 1.0))
}

/// Curvature summary at one point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurvatureDiagnostics {
    pub a_norm_sq: f64,
    pub grad_ln_f_norm_sq: f64,
    /// Gauss curvature of the fiber.
    pub vertical_sectional: f64,
    /// Sectional curvature of horizontal holomorphic planes.
    pub horizontal_sectional: f64,
    /// Mean of `K(V, X)` over the frames.
    pub mixed_sectional: f64,
    /// Twice the fiber curvature, the fiber's contribution to scalar curvature.
    pub dominant_scalar: f64,
    /// `|Rm|`.
    pub rm_norm: f64,
}

/// `|Rm|` from the three curvature blocks of a Calabi-type metric over a base
/// of constant holomorphic sectional curvature.
pub fn rm_norm_from_blocks(n: usize, vertical: f64, horizontal: f64, mixed_sq_sum: f64) -> f64 {
    let nf = n as f64;
    (4.0 * vertical * vertical + 2.0 * nf * (nf + 1.0) * horizontal * horizontal + 16.0 * mixed_sq_sum)
        .sqrt()
}

/// Closed-form curvature diagnostics at a frame point. The `|Rm|` estimate
/// assumes a base of constant holomorphic sectional curvature.
pub fn curvature_diagnostics(fp: &FramePoint) -> Result<CurvatureDiagnostics> {
    let b = &fp.blocks;
    let n = fp.n();
    let g = b.g_xx;
    let ddlog_g = b.g_xx_xi_xibar / g - b.dg_xx_dxi.norm_sqr() / (g * g);
    let vertical = -ddlog_g / g;
    let grad_sq = fp.grad_ln_f_norm_sq();
    let horizontal = base_holomorphic_sectional(b) / b.f - grad_sq;
    let vh = vertical_horizontal_curvature(fp)?;
    let mixed_sq_sum: f64 = vh.iter().map(|k| k * k).sum();
    Ok(CurvatureDiagnostics {
        a_norm_sq: a_norm_sq(fp),
        grad_ln_f_norm_sq: grad_sq,
        vertical_sectional: vertical,
        horizontal_sectional: horizontal,
        mixed_sectional: vh.mean(),
        dominant_scalar: 2.0 * vertical,
        rm_norm: rm_norm_from_blocks(n, vertical, horizontal, mixed_sq_sum),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::samplers::{CalabiSampler, FlatSampler, LogisticProfile, ProductSampler};
    use crate::chart::{ChartPoint, ChartSampler};
    use approx::assert_relative_eq;

    fn calabi_point() -> FramePoint {
        let s = CalabiSampler::new(1, 1.0, LogisticProfile::new(1.0, 3.0));
        let p = s.point_at_rho(vec![C64::new(0.3, 0.1)], 0.4, 0.7);
        FramePoint::new(s.blocks(&p).unwrap()).unwrap()
    }

    #[test]
    fn frames_are_orthonormal() {
        let fp = calabi_point();
        let fr = &fp.frames;
        let all: Vec<_> = fr.vertical.iter().chain(fr.horizontal.iter()).collect();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((fr.inner(a, b) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_dilation_has_vanishing_a() {
        let s = ProductSampler {
            n: 2,
            base_scale: 2.0,
            fiber_scale: 1.0,
        };
        let p = ChartPoint::new(vec![C64::new(0.1, 0.2), C64::new(0.0, -0.3)], C64::new(0.5, 0.1));
        let fp = FramePoint::new(s.blocks(&p).unwrap()).unwrap();
        assert_eq!(a_norm_sq(&fp), 0.0);
        let flat = FlatSampler { n: 1 };
        let fp = FramePoint::new(flat.blocks(&ChartPoint::new(vec![C64::new(0.0, 0.0)], C64::new(1.0, 0.0))).unwrap()).unwrap();
        assert_eq!(a_norm_sq(&fp), 0.0);
    }

    #[test]
    fn a_on_complex_line_is_minus_half_j_gradient() {
        let fp = calabi_point();
        let x = fp.frames.horizontal[0].clone();
        let jx = &fp.frames.j * &x;
        let a = a_tensor(&fp, &x, &jx).unwrap();
        let expect = (&fp.frames.j * &fp.grad_ln_f) * -0.5;
        assert!((a - expect).norm() < 1e-12);
    }

    #[test]
    fn vertical_input_is_rejected() {
        let fp = calabi_point();
        let v = fp.frames.vertical[0].clone();
        let x = fp.frames.horizontal[0].clone();
        assert!(matches!(a_tensor(&fp, &v, &x), Err(GeometryError::NotHorizontal { .. })));
    }

    #[test]
    fn a_norm_identity_on_calabi_point() {
        let fp = calabi_point();
        assert_relative_eq!(a_norm_sq(&fp), 2.0 * fp.grad_ln_f_norm_sq(), max_relative = 1e-12);
    }
}
