//! Graph hypersurfaces over half-balls, their second fundamental forms, and
//! proper sub-domains `N = {x1 >= 0} ∩ {x_h >= f}` with the orthogonality
//! and strong m-convexity tests.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::expr::{Expression, ExprError};
use crate::geometry::{FdPolicy, GeomError, MetricChart, TangentVector};
use crate::{Coords, Matrix, Vector};

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("base point {0:?} lies outside the half-ball of radius {1}")]
    OutsideHalfBall(Vec<f64>, f64),
    #[error("graph point {0:?} leaves the chart domain")]
    GraphLeavesChart(Vec<f64>),
    #[error("shape operator asymmetry {0:.3e} above 1e-3; finite differences unreliable here")]
    Asymmetric(f64),
    #[error("orientation must be +1 or -1, got {0}")]
    BadOrientation(f64),
    #[error("height index {0} out of range for dimension {1}")]
    BadHeightIndex(usize, usize),
    #[error("corner sample set is empty")]
    EmptyCorner,
    #[error("corner sample {0:?} misses S ∩ T by {1:.3e}")]
    CornerOffSet(Vec<f64>, f64),
    #[error("sub-domain is empty: the graph clears the chart box")]
    EmptyDomain,
    #[error("m = {m} outside 1..={n}")]
    BadM { m: usize, n: usize },
    #[error("proper sub-domains require the half-space chart")]
    NoBoundary,
}

/// Hypersurface given as the graph `x_h = f(base coords)` over a half-ball.
///
/// `f`'s variables refer to the base coordinates in ascending chart order
/// (all coordinates except the height one). `orientation = +1` points the
/// unit normal towards `{x_h >= f}`.
#[derive(Debug, Clone)]
pub struct GraphHypersurface {
    chart: Arc<MetricChart>,
    height_idx: usize,
    f: Expression,
    r0: f64,
    orientation: f64,
}

impl GraphHypersurface {
    pub fn new(
        chart: Arc<MetricChart>,
        height_idx: usize,
        f: Expression,
        r0: f64,
        orientation: f64,
    ) -> Result<Self, SurfaceError> {
        if orientation != 1.0 && orientation != -1.0 {
            return Err(SurfaceError::BadOrientation(orientation));
        }
        if height_idx >= chart.dim() {
            return Err(SurfaceError::BadHeightIndex(height_idx, chart.dim()));
        }
        Ok(GraphHypersurface {
            chart,
            height_idx,
            f,
            r0,
            orientation,
        })
    }

    pub fn chart(&self) -> &Arc<MetricChart> {
        &self.chart
    }

    pub fn height_index(&self) -> usize {
        self.height_idx
    }

    pub fn f(&self) -> &Expression {
        &self.f
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn base_dim(&self) -> usize {
        self.chart.dim() - 1
    }

    /// True when the base coordinates include the chart's boundary
    /// coordinate `x1` (so the half-ball carries the `x1 >= 0` constraint).
    pub fn base_has_boundary_coord(&self) -> bool {
        self.chart.half_space() && self.height_idx != 0
    }

    /// Base coordinates of a chart point (drop the height coordinate).
    pub fn base_of(&self, x: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.base_dim());
        for (i, &v) in x.iter().enumerate() {
            if i != self.height_idx {
                y.push(v);
            }
        }
        y
    }

    pub fn in_half_ball(&self, y: &[f64]) -> bool {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 >= self.r0 * self.r0 {
            return false;
        }
        if self.base_has_boundary_coord() && y[0] < -1e-12 {
            return false;
        }
        true
    }

    pub fn check_half_ball(&self, y: &[f64]) -> Result<(), SurfaceError> {
        if self.in_half_ball(y) {
            Ok(())
        } else {
            Err(SurfaceError::OutsideHalfBall(y.to_vec(), self.r0))
        }
    }

    pub fn f_eval(&self, y: &[f64]) -> Result<f64, SurfaceError> {
        Ok(self.f.eval(y)?)
    }

    /// Step for the high-order gradient of `f`. Deliberately large and
    /// decoupled from `fd_step`: the normal field built from this gradient
    /// gets differentiated again, and a small step here would push the
    /// gradient's roundoff through that second derivative.
    pub fn normal_grad_step(&self) -> f64 {
        (self.r0 / 20.0).min(1e-2)
    }

    /// Fourth-order gradient of `f`. Central stencils wherever `f`
    /// evaluates (closed-form expressions extend smoothly past the corner);
    /// one-sided only where the expression genuinely stops being defined.
    pub fn f_grad(&self, y: &[f64]) -> Result<Vec<f64>, SurfaceError> {
        let h = self.normal_grad_step();
        let mut out = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            out.push(grad_component(&self.f, y, i, h)?);
        }
        Ok(out)
    }

    pub fn f_grad_step(
        &self,
        y: &[f64],
        h: f64,
        policy: FdPolicy,
    ) -> Result<Vec<f64>, SurfaceError> {
        let mut out = Vec::with_capacity(y.len());
        let mut shifted = y.to_vec();
        for i in 0..y.len() {
            let one_sided = matches!(policy, FdPolicy::Auto)
                && i == 0
                && self.base_has_boundary_coord()
                && y[0] < h;
            let d = if one_sided {
                let f0 = self.f.eval(y)?;
                shifted[i] = y[i] + h;
                let f1 = self.f.eval(&shifted)?;
                shifted[i] = y[i] + 2.0 * h;
                let f2 = self.f.eval(&shifted)?;
                shifted[i] = y[i];
                (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
            } else {
                shifted[i] = y[i] + h;
                let fp = self.f.eval(&shifted)?;
                shifted[i] = y[i] - h;
                let fm = self.f.eval(&shifted)?;
                shifted[i] = y[i];
                (fp - fm) / (2.0 * h)
            };
            out.push(d);
        }
        Ok(out)
    }

    /// Chart point of the graph at base `y`, height `f(y) + offset`.
    pub fn embed_offset(&self, y: &[f64], offset: f64) -> Result<Coords, SurfaceError> {
        let h = self.f_eval(y)? + offset;
        let dim = self.chart.dim();
        let mut x = DVector::zeros(dim);
        let mut k = 0;
        for i in 0..dim {
            if i == self.height_idx {
                x[i] = h;
            } else {
                x[i] = y[k];
                k += 1;
            }
        }
        Ok(x)
    }

    pub fn embed(&self, y: &[f64]) -> Result<Coords, SurfaceError> {
        self.embed_offset(y, 0.0)
    }

    /// Coordinate tangent basis `t_i = e_{base_i} + (df/dy_i) e_h` at base `y`.
    pub fn tangent_basis(&self, y: &[f64]) -> Result<Vec<Vector>, SurfaceError> {
        let grad = self.f_grad(y)?;
        let dim = self.chart.dim();
        let mut out = Vec::with_capacity(self.base_dim());
        let mut k = 0;
        for i in 0..dim {
            if i == self.height_idx {
                continue;
            }
            let mut t = DVector::zeros(dim);
            t[i] = 1.0;
            t[self.height_idx] = grad[k];
            out.push(t);
            k += 1;
        }
        Ok(out)
    }

    /// The defining covector `dF = dx_h - sum_i (df/dy_i) dy^i` at a point
    /// with base coordinates `y`.
    fn conormal_covector(&self, y: &[f64]) -> Result<Vector, SurfaceError> {
        let grad = self.f_grad(y)?;
        let dim = self.chart.dim();
        let mut w = DVector::zeros(dim);
        w[self.height_idx] = 1.0;
        let mut k = 0;
        for i in 0..dim {
            if i != self.height_idx {
                w[i] = -grad[k];
                k += 1;
            }
        }
        Ok(w)
    }

    /// g-unit normal at an arbitrary chart point `x` (used on translated
    /// leaves: the graph structure comes from `base(x)`, the metric from `x`).
    pub fn unit_normal_at(&self, x: &[f64]) -> Result<TangentVector, SurfaceError> {
        let y = self.base_of(x);
        let covec = self.conormal_covector(&y)?;
        let raised = self.chart.raise(x, &covec)?;
        let n = self.chart.norm(x, &raised)?;
        Ok(TangentVector::new(
            DVector::from_column_slice(x),
            raised * (self.orientation / n),
        ))
    }

    /// g-unit normal of the graph at base `y`, oriented per `orientation`.
    pub fn unit_normal(&self, y: &[f64]) -> Result<TangentVector, SurfaceError> {
        self.check_half_ball(y)?;
        let x = self.embed(y)?;
        self.unit_normal_at(x.as_slice())
    }

    /// Shape operator `A(u) = -nabla_u nu` as a matrix in a g-orthonormal
    /// tangent frame, symmetrized with the asymmetry recorded.
    pub fn shape_operator(&self, y: &[f64]) -> Result<ShapeOperator, SurfaceError> {
        self.check_half_ball(y)?;
        let x = self.embed(y)?;
        let raw_basis = self.tangent_basis(y)?;
        let frame = self.chart.orthonormalize(x.as_slice(), &raw_basis)?;
        let n = self.base_dim();
        let g = self.chart.metric_at(x.as_slice())?;
        let step = self.chart.field_step();

        let mut a = DMatrix::zeros(n, n);
        for (i, e) in frame.iter().enumerate() {
            // walk the graph along the base-coordinate representation of e
            let w: Vec<f64> = self.base_of(e.as_slice());
            let dnu = self.chart.covariant_derivative(
                x.as_slice(),
                e,
                step,
                FdPolicy::Auto,
                |xq| {
                    let yq: Vec<f64> = {
                        let mut yy = y.to_vec();
                        // move in base coordinates proportionally to w
                        let tau = base_parameter(xq, x.as_slice(), &w, self.height_idx);
                        for (k, wk) in w.iter().enumerate() {
                            yy[k] = y[k] + tau * wk;
                        }
                        yy
                    };
                    let xe = self
                        .embed(&yq)
                        .map_err(|_| GeomError::OutsideDomain(yq.clone()))?;
                    let nu = self
                        .unit_normal_at(xe.as_slice())
                        .map_err(|_| GeomError::OutsideDomain(yq.clone()))?;
                    Ok(nu.components)
                },
            )?;
            for (j, ej) in frame.iter().enumerate() {
                a[(i, j)] = -(dnu.transpose() * &g * ej)[(0, 0)];
            }
        }
        let asymmetry = (&a - a.transpose()).amax();
        if asymmetry > 1e-3 {
            return Err(SurfaceError::Asymmetric(asymmetry));
        }
        let sym = (&a + a.transpose()) * 0.5;
        Ok(ShapeOperator {
            matrix: sym,
            asymmetry,
            frame,
            point: x,
        })
    }

    /// Principal curvatures, ascending.
    pub fn principal_curvatures(&self, y: &[f64]) -> Result<Vec<f64>, SurfaceError> {
        let shape = self.shape_operator(y)?;
        let mut eig: Vec<f64> = SymmetricEigen::new(shape.matrix)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(eig)
    }

    /// Strong m-convexity verdict at base `y`.
    pub fn strong_m_convexity(
        &self,
        y: &[f64],
        m: usize,
        tau_conv: f64,
    ) -> Result<ConvexityReport, SurfaceError> {
        let n = self.base_dim();
        if m < 1 || m > n {
            return Err(SurfaceError::BadM { m, n });
        }
        let kappas = self.principal_curvatures(y)?;
        let margin = kappas.iter().take(m).sum();
        Ok(ConvexityReport {
            point: self.embed(y)?,
            kappas,
            m,
            margin,
            verdict: margin > tau_conv,
        })
    }
}

fn eval_shifted(f: &Expression, y: &[f64], i: usize, t: f64) -> Result<f64, ExprError> {
    let mut ys = y.to_vec();
    ys[i] += t;
    f.eval(&ys)
}

fn grad_component(f: &Expression, y: &[f64], i: usize, h: f64) -> Result<f64, SurfaceError> {
    let central = || -> Result<f64, ExprError> {
        let m2 = eval_shifted(f, y, i, -2.0 * h)?;
        let m1 = eval_shifted(f, y, i, -h)?;
        let p1 = eval_shifted(f, y, i, h)?;
        let p2 = eval_shifted(f, y, i, 2.0 * h)?;
        Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
    };
    let side = |s: f64| -> Result<f64, ExprError> {
        let f0 = eval_shifted(f, y, i, 0.0)?;
        let f1 = eval_shifted(f, y, i, s * h)?;
        let f2 = eval_shifted(f, y, i, 2.0 * s * h)?;
        let f3 = eval_shifted(f, y, i, 3.0 * s * h)?;
        let f4 = eval_shifted(f, y, i, 4.0 * s * h)?;
        Ok(s * (-25.0 * f0 + 48.0 * f1 - 36.0 * f2 + 16.0 * f3 - 3.0 * f4) / (12.0 * h))
    };
    Ok(central()
        .or_else(|_| side(1.0))
        .or_else(|_| side(-1.0))?)
}

// Recover the curve parameter tau from a stencil point: the FD stencil moves
// x -> x + tau * e, and e's base components are w.
fn base_parameter(xq: &[f64], x0: &[f64], w: &[f64], height_idx: usize) -> f64 {
    let mut best = 0.0;
    let mut best_w = 0.0;
    let mut k = 0;
    for i in 0..xq.len() {
        if i == height_idx {
            continue;
        }
        if w[k].abs() > best_w {
            best_w = w[k].abs();
            best = (xq[i] - x0[i]) / w[k];
        }
        k += 1;
    }
    best
}

#[derive(Debug, Clone)]
pub struct ShapeOperator {
    /// Symmetrized matrix in the orthonormal tangent frame.
    pub matrix: Matrix,
    /// Max entry of `|A - A^T|` before symmetrization.
    pub asymmetry: f64,
    pub frame: Vec<Vector>,
    pub point: Coords,
}

#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub point: Coords,
    /// Principal curvatures, ascending.
    pub kappas: Vec<f64>,
    pub m: usize,
    /// `kappa_1 + ... + kappa_m`, exactly the prefix sum of `kappas`.
    pub margin: f64,
    pub verdict: bool,
}

/// Proper sub-domain `N` with boundary `S ∪ T`: `S` the graph hypersurface,
/// `T` the chart's boundary face `{x1 = 0}`.
#[derive(Debug, Clone)]
pub struct ProperSubdomain {
    chart: Arc<MetricChart>,
    surface: GraphHypersurface,
    m: usize,
    corner: Vec<Coords>,
}

impl ProperSubdomain {
    /// `corner` must sample `S ∩ T = {x1 = 0, x_h = f}`; `sample_corner`
    /// builds such a set.
    pub fn new(
        surface: GraphHypersurface,
        m: usize,
        corner: Vec<Coords>,
    ) -> Result<Self, SurfaceError> {
        let chart = surface.chart().clone();
        if !chart.half_space() {
            return Err(SurfaceError::NoBoundary);
        }
        let n = surface.base_dim();
        if m < 1 || m > n {
            return Err(SurfaceError::BadM { m, n });
        }
        if corner.is_empty() {
            return Err(SurfaceError::EmptyCorner);
        }
        for x in &corner {
            let y = surface.base_of(x.as_slice());
            let miss = x[0].abs().max((x[surface.height_index()] - surface.f_eval(&y)?).abs());
            if miss > 1e-10 {
                return Err(SurfaceError::CornerOffSet(
                    x.iter().copied().collect(),
                    miss,
                ));
            }
        }
        // N nonempty: the box must leave room above the graph at the corner
        let y0 = surface.base_of(corner[0].as_slice());
        let f0 = surface.f_eval(&y0)?;
        if f0 >= chart.hi()[surface.height_index()] {
            return Err(SurfaceError::EmptyDomain);
        }
        Ok(ProperSubdomain {
            chart,
            surface,
            m,
            corner,
        })
    }

    pub fn chart(&self) -> &Arc<MetricChart> {
        &self.chart
    }

    pub fn surface(&self) -> &GraphHypersurface {
        &self.surface
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn corner(&self) -> &[Coords] {
        &self.corner
    }

    /// Max `|<nu_S, nu_T>_g|` over the corner samples.
    pub fn check_orthogonality(&self, tau_orth: f64) -> Result<OrthogonalityReport, SurfaceError> {
        let mut worst = 0.0_f64;
        let mut worst_point = self.corner[0].clone();
        for x in &self.corner {
            let nu_s = self
                .surface
                .unit_normal(&self.surface.base_of(x.as_slice()))?;
            let nu_t = self.chart.boundary_normal(x.as_slice())?;
            let r = self
                .chart
                .inner(x.as_slice(), &nu_s.components, &nu_t.components)?
                .abs();
            if r > worst {
                worst = r;
                worst_point = x.clone();
            }
        }
        Ok(OrthogonalityReport {
            residual: worst,
            worst_point,
            pass: worst < tau_orth,
        })
    }

    /// Closed-set membership: `x1 >= 0` and `x_h >= f(base)`.
    pub fn contains(&self, x: &[f64]) -> Result<bool, SurfaceError> {
        Ok(x[0] >= 0.0 && x[self.surface.height_index()] >= self.surface.f_eval(&self.surface.base_of(x))?)
    }
}

#[derive(Debug, Clone)]
pub struct OrthogonalityReport {
    pub residual: f64,
    pub worst_point: Coords,
    pub pass: bool,
}

/// Deterministic corner samples: base points with `y1 = 0` and the remaining
/// coordinates drawn inside a ball of the given radius.
pub fn sample_corner(
    surface: &GraphHypersurface,
    count: usize,
    radius: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<Coords>, SurfaceError> {
    let n = surface.base_dim();
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count && k < count * 50 {
        k += 1;
        let mut y = vec![0.0; n];
        let mut r2 = 0.0;
        for yi in y.iter_mut().skip(1) {
            *yi = crate::rng::uniform(rng, -radius, radius);
            r2 += *yi * *yi;
        }
        if r2 > radius * radius || !surface.in_half_ball(&y) {
            continue;
        }
        let mut x = surface.embed(&y)?;
        x[0] = 0.0; // exact corner
        out.push(x);
    }
    if out.is_empty() {
        return Err(SurfaceError::EmptyCorner);
    }
    Ok(out)
}
