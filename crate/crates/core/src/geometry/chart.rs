use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::GeomError;
use crate::expr::Expression;
use crate::{Coords, Matrix, Vector};

/// How directional finite differences treat the boundary face `{x1 = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdPolicy {
    /// One-sided stencils when the central stencil would cross the boundary.
    Auto,
    /// Always central; callers use this when the fields involved extend
    /// smoothly across the face (closed-form expressions do).
    Central,
}

/// A tangent vector anchored at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Coords,
    pub components: Vector,
}

impl TangentVector {
    pub fn new(base: Coords, components: Vector) -> Self {
        assert_eq!(base.len(), components.len(), "tangent vector length mismatch");
        TangentVector { base, components }
    }
}

/// The metric, either as expressions of the coordinates or as a closure
/// (induced and pulled-back metrics).
#[derive(Clone)]
pub enum MetricField {
    Exprs(Arc<Vec<Expression>>),
    Numeric(Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>),
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricField::Exprs(_) => f.write_str("MetricField::Exprs"),
            MetricField::Numeric(_) => f.write_str("MetricField::Numeric"),
        }
    }
}

/// Coordinate chart with a Riemannian metric.
#[derive(Debug, Clone)]
pub struct MetricChart {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    half_space: bool,
    metric: MetricField,
    const_metric: Option<Matrix>,
    fd_step: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

impl MetricChart {
    /// Chart from the upper triangle of an expression matrix. Rows are
    /// `g_{i,i..}`, so row `i` has `dim - i` entries; the lower triangle is
    /// mirrored, which keeps the stored matrix exactly symmetric.
    pub fn from_upper_exprs(
        dim: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        half_space: bool,
        upper: Vec<Vec<Expression>>,
        fd_step: f64,
    ) -> Result<Self, GeomError> {
        if !(2..=8).contains(&dim) {
            return Err(GeomError::BadDimension(dim));
        }
        for axis in 0..dim {
            if lo[axis] >= hi[axis] {
                return Err(GeomError::BadBox {
                    axis,
                    lo: lo[axis],
                    hi: hi[axis],
                });
            }
        }
        if upper.len() != dim {
            return Err(GeomError::BadMetricShape {
                dim,
                got: upper.len(),
            });
        }
        let mut entries = vec![Expression::constant(0.0); dim * dim];
        for (i, row) in upper.iter().enumerate() {
            if row.len() != dim - i {
                return Err(GeomError::BadMetricShape { dim, got: row.len() });
            }
            for (k, e) in row.iter().enumerate() {
                let j = i + k;
                entries[i * dim + j] = e.clone();
                entries[j * dim + i] = e.clone();
            }
        }
        let all_const = entries.iter().all(|e| e.is_constant());
        let mut chart = MetricChart {
            dim,
            lo,
            hi,
            half_space,
            metric: MetricField::Exprs(Arc::new(entries)),
            const_metric: None,
            fd_step,
        };
        if all_const {
            let origin = vec![0.0; dim];
            chart.const_metric = Some(chart.eval_metric(&origin)?);
        }
        Ok(chart)
    }

    /// Euclidean metric on a box.
    pub fn euclidean(
        dim: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        half_space: bool,
        fd_step: f64,
    ) -> Result<Self, GeomError> {
        let mut upper = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut row = vec![Expression::constant(1.0)];
            row.extend(std::iter::repeat_with(|| Expression::constant(0.0)).take(dim - i - 1));
            upper.push(row);
        }
        Self::from_upper_exprs(dim, lo, hi, half_space, upper, fd_step)
    }

    /// Conformal metric `factor * delta_ij`.
    pub fn conformal(
        dim: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        half_space: bool,
        factor: Expression,
        fd_step: f64,
    ) -> Result<Self, GeomError> {
        let mut upper = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut row = vec![factor.clone()];
            row.extend(std::iter::repeat_with(|| Expression::constant(0.0)).take(dim - i - 1));
            upper.push(row);
        }
        Self::from_upper_exprs(dim, lo, hi, half_space, upper, fd_step)
    }

    /// Chart whose metric is computed by a closure (induced and Fermi
    /// metrics). The closure must return a symmetric positive-definite
    /// matrix wherever it is evaluated.
    pub fn numeric(
        dim: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        half_space: bool,
        metric: Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>,
        fd_step: f64,
    ) -> Result<Self, GeomError> {
        if !(2..=8).contains(&dim) {
            return Err(GeomError::BadDimension(dim));
        }
        Ok(MetricChart {
            dim,
            lo,
            hi,
            half_space,
            metric: MetricField::Numeric(metric),
            const_metric: None,
            fd_step,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn half_space(&self) -> bool {
        self.half_space
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_flat_constant(&self) -> bool {
        self.const_metric.is_some()
    }

    /// True if `x` lies in the box (and in `x1 >= 0` when half-space).
    pub fn contains(&self, x: &[f64]) -> bool {
        let tol = 1e-12;
        if x.len() != self.dim {
            return false;
        }
        if self.half_space && x[0] < -tol {
            return false;
        }
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] - tol && v <= self.hi[i] + tol)
    }

    pub fn check_in_domain(&self, x: &[f64]) -> Result<(), GeomError> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeomError::OutsideDomain(x.to_vec()))
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<(), GeomError> {
        if v.len() == self.dim {
            Ok(())
        } else {
            Err(GeomError::BadVectorLength {
                dim: self.dim,
                got: v.len(),
            })
        }
    }

    fn eval_metric(&self, x: &[f64]) -> Result<Matrix, GeomError> {
        match &self.metric {
            MetricField::Exprs(entries) => {
                let mut g = DMatrix::zeros(self.dim, self.dim);
                for i in 0..self.dim {
                    for j in i..self.dim {
                        let v = entries[i * self.dim + j].eval(x)?;
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
                Ok(g)
            }
            MetricField::Numeric(f) => Ok(f(x)),
        }
    }

    /// Metric matrix at `x`. Expressions are evaluated without a domain
    /// check so finite-difference stencils may poke past the box edge.
    pub fn metric_at(&self, x: &[f64]) -> Result<Matrix, GeomError> {
        self.check_len(x)?;
        if let Some(g) = &self.const_metric {
            return Ok(g.clone());
        }
        self.eval_metric(x)
    }

    fn cholesky_at(&self, x: &[f64]) -> Result<Cholesky<f64, nalgebra::Dyn>, GeomError> {
        let g = self.metric_at(x)?;
        Cholesky::new(g).ok_or_else(|| GeomError::NotPositiveDefinite(x.to_vec()))
    }

    /// Inverse metric at `x` (errors when the metric fails to be positive
    /// definite there).
    pub fn metric_inv(&self, x: &[f64]) -> Result<Matrix, GeomError> {
        Ok(self.cholesky_at(x)?.inverse())
    }

    pub fn inner(&self, x: &[f64], u: &Vector, v: &Vector) -> Result<f64, GeomError> {
        let g = self.metric_at(x)?;
        Ok((u.transpose() * g * v)[(0, 0)])
    }

    pub fn norm(&self, x: &[f64], u: &Vector) -> Result<f64, GeomError> {
        Ok(self.inner(x, u, u)?.max(0.0).sqrt())
    }

    /// Raise a covector: `v^i = g^{ij} w_j`.
    pub fn raise(&self, x: &[f64], covector: &Vector) -> Result<Vector, GeomError> {
        Ok(self.cholesky_at(x)?.solve(covector))
    }

    /// Inward g-unit normal of the boundary face `{x1 = 0}` at `x`.
    pub fn boundary_normal(&self, x: &[f64]) -> Result<TangentVector, GeomError> {
        if !self.half_space {
            return Err(GeomError::NoBoundary);
        }
        let mut covec = DVector::zeros(self.dim);
        covec[0] = 1.0;
        let raised = self.raise(x, &covec)?;
        let n = self.norm(x, &raised)?;
        Ok(TangentVector::new(
            DVector::from_column_slice(x),
            raised / n,
        ))
    }

    /// Partial derivative of the metric along coordinate `k`, one-sided
    /// within `fd_step` of the boundary face.
    pub fn metric_deriv(&self, x: &[f64], k: usize) -> Result<Matrix, GeomError> {
        if self.const_metric.is_some() {
            return Ok(DMatrix::zeros(self.dim, self.dim));
        }
        let h = self.fd_step;
        let mut xp = x.to_vec();
        if self.half_space && k == 0 && x[0] < h {
            // forward second-order stencil
            let g0 = self.eval_metric(x)?;
            xp[k] = x[k] + h;
            let g1 = self.eval_metric(&xp)?;
            xp[k] = x[k] + 2.0 * h;
            let g2 = self.eval_metric(&xp)?;
            Ok((g0 * -3.0 + g1 * 4.0 - g2) / (2.0 * h))
        } else {
            xp[k] = x[k] + h;
            let gp = self.eval_metric(&xp)?;
            xp[k] = x[k] - h;
            let gm = self.eval_metric(&xp)?;
            Ok((gp - gm) / (2.0 * h))
        }
    }

    /// Christoffel symbols of the Levi-Civita connection,
    /// `Gamma^k_{ij} = 1/2 g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij})`,
    /// returned as one matrix per upper index. Exactly symmetric in `(i, j)`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<Matrix>, GeomError> {
        self.check_len(x)?;
        if self.const_metric.is_some() {
            return Ok(vec![DMatrix::zeros(self.dim, self.dim); self.dim]);
        }
        let dim = self.dim;
        let ginv = self.metric_inv(x)?;
        let mut dg = Vec::with_capacity(dim);
        for k in 0..dim {
            dg.push(self.metric_deriv(x, k)?);
        }
        let mut gamma = vec![DMatrix::zeros(dim, dim); dim];
        for i in 0..dim {
            for j in i..dim {
                // first-kind symbol as a covector over l
                for k in 0..dim {
                    let mut sum = 0.0;
                    for l in 0..dim {
                        let first = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                        sum += ginv[(k, l)] * first;
                    }
                    gamma[k][(i, j)] = sum;
                    gamma[k][(j, i)] = sum;
                }
            }
        }
        Ok(gamma)
    }

    /// Directional derivative of a vector-valued map along `dir` with step
    /// `h`, honoring the boundary policy.
    pub fn directional_deriv<F>(
        &self,
        x: &[f64],
        dir: &Vector,
        h: f64,
        policy: FdPolicy,
        mut field: F,
    ) -> Result<Vector, GeomError>
    where
        F: FnMut(&[f64]) -> Result<Vector, GeomError>,
    {
        let shift = |t: f64| -> Vec<f64> {
            x.iter()
                .enumerate()
                .map(|(i, &v)| v + t * dir[i])
                .collect()
        };
        let one_sided = matches!(policy, FdPolicy::Auto)
            && self.half_space
            && dir[0] != 0.0
            && x[0] - h * dir[0].abs() < 0.0;
        if one_sided {
            let s = if dir[0] >= 0.0 { 1.0 } else { -1.0 };
            let f0 = field(x)?;
            let f1 = field(&shift(s * h))?;
            let f2 = field(&shift(2.0 * s * h))?;
            Ok((f0 * -3.0 + f1 * 4.0 - f2) * (s / (2.0 * h)))
        } else {
            let fp = field(&shift(h))?;
            let fm = field(&shift(-h))?;
            Ok((fp - fm) / (2.0 * h))
        }
    }

    /// Scalar directional derivative with the same boundary handling.
    pub fn directional_deriv_scalar<F>(
        &self,
        x: &[f64],
        dir: &Vector,
        h: f64,
        policy: FdPolicy,
        mut field: F,
    ) -> Result<f64, GeomError>
    where
        F: FnMut(&[f64]) -> Result<f64, GeomError>,
    {
        let v = self.directional_deriv(x, dir, h, policy, |y| {
            Ok(DVector::from_element(1, field(y)?))
        })?;
        Ok(v[0])
    }

    /// Covariant derivative of a vector field:
    /// `(nabla_u X)^k = u(X^k) + Gamma^k_{ij} u^i X^j`.
    pub fn covariant_derivative<F>(
        &self,
        x: &[f64],
        u: &Vector,
        h: f64,
        policy: FdPolicy,
        mut field: F,
    ) -> Result<Vector, GeomError>
    where
        F: FnMut(&[f64]) -> Result<Vector, GeomError>,
    {
        let du = self.directional_deriv(x, u, h, policy, &mut field)?;
        let xv = field(x)?;
        let gamma = self.christoffel(x)?;
        let mut out = du;
        for k in 0..self.dim {
            out[k] += (u.transpose() * &gamma[k] * &xv)[(0, 0)];
        }
        Ok(out)
    }

    /// Covariant derivative with the spec's `TangentVector` calling
    /// convention and the chart's default field step.
    pub fn covariant_derivative_at<F>(
        &self,
        u: &TangentVector,
        mut field: F,
    ) -> Result<Vector, GeomError>
    where
        F: FnMut(&[f64]) -> Result<Vector, GeomError>,
    {
        let x: Vec<f64> = u.base.iter().copied().collect();
        self.covariant_derivative(
            &x,
            &u.components,
            self.field_step(),
            FdPolicy::Auto,
            &mut field,
        )
    }

    /// Step used to differentiate smooth vector fields (normals, test
    /// fields). Larger than `fd_step` so nested differences stay quiet.
    pub fn field_step(&self) -> f64 {
        10.0 * self.fd_step
    }

    /// Gram-Schmidt with respect to `g(x)`; spans of prefixes are
    /// preserved in order.
    pub fn orthonormalize(&self, x: &[f64], vectors: &[Vector]) -> Result<Vec<Vector>, GeomError> {
        let g = self.metric_at(x)?;
        let mut out: Vec<Vector> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut w = v.clone();
            for e in &out {
                let proj = (e.transpose() * &g * &w)[(0, 0)];
                w -= e * proj;
            }
            let n = (w.transpose() * &g * &w)[(0, 0)].max(0.0).sqrt();
            if n < 1e-10 {
                return Err(GeomError::RankDeficient { pivot: n });
            }
            out.push(w / n);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;

    fn polar_plane() -> MetricChart {
        // diag(1, x1^2) on r in [0.5, 4], theta in [-4, 4]
        let upper = vec![
            vec![
                Expression::parse("1", 2).unwrap(),
                Expression::parse("0", 2).unwrap(),
            ],
            vec![Expression::parse("x1^2", 2).unwrap()],
        ];
        MetricChart::from_upper_exprs(2, vec![0.5, -4.0], vec![4.0, 4.0], false, upper, 1e-5)
            .unwrap()
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        let chart = MetricChart::euclidean(3, vec![-1.0; 3], vec![1.0; 3], false, 1e-5).unwrap();
        let gamma = chart.christoffel(&[0.3, -0.2, 0.5]).unwrap();
        for m in &gamma {
            assert!(m.amax() == 0.0);
        }
    }

    #[test]
    fn polar_christoffel_matches_closed_form() {
        // Gamma^1_22 = -x1, Gamma^2_12 = 1/x1
        let chart = polar_plane();
        let gamma = chart.christoffel(&[2.0, 1.0]).unwrap();
        assert!((gamma[0][(1, 1)] + 2.0).abs() < 1e-6);
        assert!((gamma[1][(0, 1)] - 0.5).abs() < 1e-6);
        // exact (i,j) symmetry by construction
        for m in &gamma {
            assert_eq!(m[(0, 1)], m[(1, 0)]);
        }
    }

    #[test]
    fn covariant_derivative_flat_cases() {
        let chart = MetricChart::euclidean(3, vec![-1.0; 3], vec![1.0; 3], false, 1e-5).unwrap();
        let x = [0.2, 0.1, -0.3];
        let u = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        // constant field
        let d = chart
            .covariant_derivative(&x, &u, 1e-4, FdPolicy::Auto, |_| {
                Ok(DVector::from_column_slice(&[1.0, 2.0, 3.0]))
            })
            .unwrap();
        assert!(d.amax() < 1e-12);
        // position field: derivative along e2 is e2
        let d = chart
            .covariant_derivative(&x, &u, 1e-4, FdPolicy::Auto, |y| {
                Ok(DVector::from_column_slice(y))
            })
            .unwrap();
        assert!((d - u).amax() < 1e-10);
    }

    #[test]
    fn covariant_derivative_polar_oracle() {
        // X = d_theta along the circle x1 = 1: nabla_{d_theta} d_theta = -x1 d_r
        let chart = polar_plane();
        let x = [1.0, 0.7];
        let u = DVector::from_column_slice(&[0.0, 1.0]);
        let d = chart
            .covariant_derivative(&x, &u, 1e-4, FdPolicy::Auto, |_| {
                Ok(DVector::from_column_slice(&[0.0, 1.0]))
            })
            .unwrap();
        assert!((d[0] + 1.0).abs() < 1e-5);
        assert!(d[1].abs() < 1e-5);
    }

    #[test]
    fn metric_compatibility_converges() {
        // |u<v,w> - <nabla_u v, w> - <v, nabla_u w>| shrinks at order >= 1
        let factor = Expression::parse("1 + 0.1*x2^2 + 0.05*x1*x3", 3).unwrap();
        let residual_at = |h: f64| -> f64 {
            let chart = MetricChart::conformal(
                3,
                vec![-1.0; 3],
                vec![1.0; 3],
                false,
                factor.clone(),
                h,
            )
            .unwrap();
            let x = [0.25, -0.3, 0.4];
            let vf = |y: &[f64]| {
                Ok(DVector::from_column_slice(&[
                    y[1] * y[1] + 0.3,
                    y[0] - 0.2 * y[2],
                    1.0 + 0.1 * y[0] * y[1],
                ]))
            };
            let wf = |y: &[f64]| {
                Ok(DVector::from_column_slice(&[
                    0.5 - y[2],
                    y[0] * y[0],
                    0.2 + y[1],
                ]))
            };
            let u = DVector::from_column_slice(&[0.6, -0.3, 0.8]);
            let fh = 10.0 * h;
            let lhs = chart
                .directional_deriv_scalar(&x, &u, fh, FdPolicy::Central, |y| {
                    let g = chart.metric_at(y)?;
                    Ok((vf(y).unwrap().transpose() * g * wf(y).unwrap())[(0, 0)])
                })
                .unwrap();
            let dv = chart
                .covariant_derivative(&x, &u, fh, FdPolicy::Central, vf)
                .unwrap();
            let dw = chart
                .covariant_derivative(&x, &u, fh, FdPolicy::Central, wf)
                .unwrap();
            let v0 = vf(&x).unwrap();
            let w0 = wf(&x).unwrap();
            (lhs - chart.inner(&x, &dv, &w0).unwrap() - chart.inner(&x, &v0, &dw).unwrap()).abs()
        };
        let r1 = residual_at(4e-4);
        let r2 = residual_at(2e-4);
        assert!(r1 < 5e-4, "residual {r1} too large");
        assert!(r1 / r2 > 1.9, "expected order >= 1, got ratio {}", r1 / r2);
    }

    #[test]
    fn orthonormalize_flat_standard_basis() {
        let chart = MetricChart::euclidean(3, vec![-1.0; 3], vec![1.0; 3], false, 1e-5).unwrap();
        let basis: Vec<Vector> = (0..3)
            .map(|i| {
                let mut v = DVector::zeros(3);
                v[i] = 1.0;
                v
            })
            .collect();
        let out = chart.orthonormalize(&[0.0; 3], &basis).unwrap();
        for (a, b) in out.iter().zip(&basis) {
            assert!((a - b).amax() < 1e-14);
        }
    }

    #[test]
    fn orthonormalize_properties() {
        let factor = Expression::parse("1 + 0.2*x1^2", 3).unwrap();
        let chart =
            MetricChart::conformal(3, vec![-1.0; 3], vec![1.0; 3], false, factor, 1e-5).unwrap();
        let x = [0.4, 0.1, -0.2];
        let vs = vec![
            DVector::from_column_slice(&[1.0, 0.5, 0.0]),
            DVector::from_column_slice(&[0.3, 1.0, 0.2]),
            DVector::from_column_slice(&[0.0, 0.4, 1.0]),
        ];
        let out = chart.orthonormalize(&x, &vs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((chart.inner(&x, &out[i], &out[j]).unwrap() - want).abs() < 1e-12);
            }
        }
        // span of the first k outputs equals span of the first k inputs
        let proj = |set: &[Vector], v: &Vector| -> Vector {
            let mut r = v.clone();
            let on = chart.orthonormalize(&x, set).unwrap();
            for e in &on {
                let c = chart.inner(&x, e, v).unwrap();
                r -= e * c;
            }
            r
        };
        for k in 1..=3 {
            for v in out.iter().take(k) {
                assert!(proj(&vs[..k], v).amax() < 1e-10);
            }
        }
        // rank deficiency is caught
        let bad = vec![
            DVector::from_column_slice(&[1.0, 0.0, 0.0]),
            DVector::from_column_slice(&[1.0, 1e-13, 0.0]),
        ];
        assert!(matches!(
            chart.orthonormalize(&x, &bad),
            Err(GeomError::RankDeficient { .. })
        ));
    }

    #[test]
    fn boundary_stencils_are_one_sided() {
        // metric depends on x1; derivative at x1 = 0 must not sample x1 < 0
        let factor = Expression::parse("1 + x1 + x1^2", 2).unwrap();
        let chart =
            MetricChart::conformal(2, vec![0.0, -1.0], vec![1.0, 1.0], true, factor, 1e-5).unwrap();
        let d = chart.metric_deriv(&[0.0, 0.3], 0).unwrap();
        assert!((d[(0, 0)] - 1.0).abs() < 1e-8);
    }
}
