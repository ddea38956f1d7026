//! Real Riemannian tensors of a Hermitian metric field, by finite differences.
//!
//! Real coordinates are interleaved `(x¹, y¹, …, x^m, y^m)` with `c^a = x^a + i y^a`.
//! The Riemannian metric of `g_AB̄` is `2 Re(g_AB̄ dz^A dz̄^B)` and the complex
//! structure sends `∂_x ↦ ∂_y`, `∂_y ↦ −∂_x`.
//!
//! Sign convention: `R(X, Y, X, Y) > 0` on round spheres, so the sectional
//! curvature of a plane is `R(X, Y, X, Y) / |X ∧ Y|²`.

use crate::chart::{complex_from_real, GeometryError, MetricField, Result, C64};
use nalgebra::{DMatrix, DVector};

pub fn real_metric(herm: &DMatrix<C64>) -> DMatrix<f64> {
    let m = herm.nrows();
    let mut g = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        for b in 0..m {
            let (re, im) = (herm[(a, b)].re, herm[(a, b)].im);
            g[(2 * a, 2 * b)] = 2.0 * re;
            g[(2 * a, 2 * b + 1)] = 2.0 * im;
            g[(2 * a + 1, 2 * b)] = -2.0 * im;
            g[(2 * a + 1, 2 * b + 1)] = 2.0 * re;
        }
    }
    g
}

/// Matrix of the complex structure acting on real tangent vectors.
pub fn complex_structure(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        j[(2 * a + 1, 2 * a)] = 1.0;
        j[(2 * a, 2 * a + 1)] = -1.0;
    }
    j
}

/// Real differential of a real function from its holomorphic derivatives:
/// `∂_x F = 2 Re ∂F`, `∂_y F = −2 Im ∂F`.
pub fn real_differential(holo: &DVector<C64>) -> DVector<f64> {
    DVector::from_fn(2 * holo.len(), |i, _| {
        let c = holo[i / 2];
        if i % 2 == 0 {
            2.0 * c.re
        } else {
            -2.0 * c.im
        }
    })
}

/// Fully covariant Riemann tensor at a point.
#[derive(Debug, Clone)]
pub struct RiemannTensor {
    pub dim: usize,
    pub metric: DMatrix<f64>,
    comps: Vec<f64>,
}

impl RiemannTensor {
    fn idx(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.dim + b) * self.dim + c) * self.dim + d
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.comps[self.idx(a, b, c, d)]
    }

    /// `R(X, Y, Z, W)`.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = self.dim;
        let mut total = 0.0;
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                let xy = x[a] * y[b];
                if xy == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let xyz = xy * z[c];
                    if xyz == 0.0 {
                        continue;
                    }
                    let base = self.idx(a, b, c, 0);
                    let mut acc = 0.0;
                    for d in 0..n {
                        acc += self.comps[base + d] * w[d];
                    }
                    total += xyz * acc;
                }
            }
        }
        total
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.metric * y)[(0, 0)]
    }

    /// Sectional curvature of the plane spanned by `x` and `y`.
    pub fn sectional(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        let area = self.inner(x, x) * self.inner(y, y) - self.inner(x, y).powi(2);
        let scale = self.inner(x, x) * self.inner(y, y);
        if !(area > 1e-12 * scale) {
            return Err(GeometryError::DegeneratePlane);
        }
        Ok(self.eval(x, y, x, y) / area)
    }

    /// `|Rm|² = R_abcd R^abcd`.
    pub fn norm_sq(&self) -> f64 {
        let n = self.dim;
        let gi = self
            .metric
            .clone()
            .try_inverse()
            .expect("metric of a Riemann tensor is invertible");
        // Raise one index at a time.
        let mut t = self.comps.clone();
        for slot in 0..4 {
            let mut out = vec![0.0; t.len()];
            for (flat, o) in out.iter_mut().enumerate() {
                let mut ix = [
                    flat / (n * n * n),
                    (flat / (n * n)) % n,
                    (flat / n) % n,
                    flat % n,
                ];
                let target = ix[slot];
                let mut acc = 0.0;
                for e in 0..n {
                    ix[slot] = e;
                    let src = ((ix[0] * n + ix[1]) * n + ix[2]) * n + ix[3];
                    acc += gi[(target, e)] * t[src];
                }
                *o = acc;
            }
            t = out;
        }
        t.iter().zip(self.comps.iter()).map(|(a, b)| a * b).sum()
    }

    /// Scalar curvature `g^{ac} g^{bd} R_abcd`.
    pub fn scalar(&self) -> f64 {
        let n = self.dim;
        let gi = self.metric.clone().try_inverse().expect("invertible metric");
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        s += gi[(a, c)] * gi[(b, d)] * self.get(a, b, c, d);
                    }
                }
            }
        }
        s
    }
}

/// Metric value and its first and second coordinate derivatives.
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[c]` is `∂_c g`.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[c][d]` is `∂_c ∂_d g`.
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

pub fn real_metric_at<M: MetricField + ?Sized>(field: &M, x: &[f64]) -> Result<DMatrix<f64>> {
    Ok(real_metric(&field.metric(&complex_from_real(x))?))
}

/// Central-difference jet of the real metric.
pub fn metric_jet<M: MetricField + ?Sized>(field: &M, x: &[f64], step: f64) -> Result<MetricJet> {
    field.domain().contains_stencil(x, step)?;
    let dim = x.len();
    let g = real_metric_at(field, x)?;
    let mut pt = x.to_vec();
    let mut plus = Vec::with_capacity(dim);
    let mut minus = Vec::with_capacity(dim);
    for c in 0..dim {
        pt[c] = x[c] + step;
        plus.push(real_metric_at(field, &pt)?);
        pt[c] = x[c] - step;
        minus.push(real_metric_at(field, &pt)?);
        pt[c] = x[c];
    }
    let dg: Vec<_> = (0..dim)
        .map(|c| (&plus[c] - &minus[c]) / (2.0 * step))
        .collect();
    let mut ddg = vec![vec![DMatrix::zeros(dim, dim); dim]; dim];
    for c in 0..dim {
        ddg[c][c] = (&plus[c] - &g * 2.0 + &minus[c]) / (step * step);
        for d in (c + 1)..dim {
            let mut corner = |sc: f64, sd: f64| -> Result<DMatrix<f64>> {
                pt[c] = x[c] + sc * step;
                pt[d] = x[d] + sd * step;
                let v = real_metric_at(field, &pt);
                pt[c] = x[c];
                pt[d] = x[d];
                v
            };
            let m = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                + corner(-1.0, -1.0)?)
                / (4.0 * step * step);
            ddg[d][c] = m.clone();
            ddg[c][d] = m;
        }
    }
    Ok(MetricJet { g, dg, ddg })
}

/// Christoffel symbols of the second kind, `gamma[e][a][b] = Γ^e_ab`.
pub fn christoffel(jet: &MetricJet) -> Vec<Vec<Vec<f64>>> {
    let dim = jet.g.nrows();
    let gi = jet.g.clone().try_inverse().expect("invertible metric");
    let first = |c: usize, a: usize, b: usize| {
        0.5 * (jet.dg[b][(c, a)] + jet.dg[a][(c, b)] - jet.dg[c][(a, b)])
    };
    let mut out = vec![vec![vec![0.0; dim]; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            let lowered: Vec<f64> = (0..dim).map(|c| first(c, a, b)).collect();
            for e in 0..dim {
                out[e][a][b] = (0..dim).map(|c| gi[(e, c)] * lowered[c]).sum();
            }
        }
    }
    out
}

pub fn fd_christoffel<M: MetricField + ?Sized>(
    field: &M,
    x: &[f64],
    step: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    Ok(christoffel(&metric_jet(field, x, step)?))
}

/// Riemann tensor of a metric field at real coordinates `x`.
pub fn fd_riemann<M: MetricField + ?Sized>(field: &M, x: &[f64], step: f64) -> Result<RiemannTensor> {
    let jet = metric_jet(field, x, step)?;
    let dim = x.len();
    let gam = christoffel(&jet);
    let g = &jet.g;
    let mut comps = vec![0.0; dim.pow(4)];
    // Γ-products contracted with the metric: P[b][c][a][d] = g_ef Γ^e_bc Γ^f_ad.
    let lowered: Vec<Vec<Vec<f64>>> = (0..dim)
        .map(|f| {
            (0..dim)
                .map(|a| (0..dim).map(|d| (0..dim).map(|e| g[(f, e)] * gam[e][a][d]).sum()).collect())
                .collect()
        })
        .collect();
    let prod = |b: usize, c: usize, a: usize, d: usize| -> f64 {
        (0..dim).map(|f| gam[f][b][c] * lowered[f][a][d]).sum()
    };
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                for d in 0..dim {
                    let second = 0.5
                        * (jet.ddg[b][c][(a, d)] + jet.ddg[a][d][(b, c)]
                            - jet.ddg[b][d][(a, c)]
                            - jet.ddg[a][c][(b, d)]);
                    comps[((a * dim + b) * dim + c) * dim + d] =
                        second + prod(b, c, a, d) - prod(b, d, a, c);
                }
            }
        }
    }
    Ok(RiemannTensor {
        dim,
        metric: jet.g,
        comps,
    })
}
