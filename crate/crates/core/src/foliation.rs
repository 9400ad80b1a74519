//! Orthogonal double foliations near a boundary point.
//!
//! The leaves `S_s` are the translated graphs `x_h = f + s`. The transverse
//! family `T_t` is the union of integral curves of the unit normal field
//! through the intrinsic parallel sets of `S ∩ {x1 = 0}` inside `S`, so the
//! two families meet at right angles leaf by leaf.
//!
//! The leaf function `s` is closed form. The transverse parameter `t` is
//! computed by flowing a query point along the normal field onto the base
//! surface and then solving a small shooting problem for the in-surface
//! geodesic from the corner. Every internal iteration runs a fixed number
//! of steps, which keeps `t` smooth in the query point and makes nested
//! finite differences of it behave.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::{FdPolicy, GeomError, MetricChart, TangentVector};
use crate::surfaces::{GraphHypersurface, SurfaceError};
use crate::{Coords, Vector};

const FLOW_STEPS: usize = 16;
const SHOOT_STEPS: usize = 8;
const NEWTON_ITERS: usize = 5;

#[derive(Debug, Error)]
pub enum FoliationError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("base surface must be a graph over coordinates containing the boundary coordinate")]
    NeedsBoundaryGraph,
    #[error("foliation bases are oriented with +1 (normal pointing to increasing s)")]
    OrientationUnsupported,
    #[error("base surface does not meet the boundary orthogonally: residual {residual:.3e}")]
    NotOrthogonal { residual: f64 },
    #[error("leaf s = {s} leaves the chart near {point:?}")]
    LeafExitsChart { s: f64, point: Vec<f64> },
    #[error("normal integral curve exits the chart near {point:?}")]
    IntegralCurveExits { point: Vec<f64> },
    #[error("point {0:?} lies outside the foliated neighborhood")]
    OutsideFoliation(Vec<f64>),
    #[error("gradient of the leaf function is not parallel to the normal: residual {residual:.3e}")]
    PsiResidual { residual: f64 },
    #[error("transverse shooting solve did not converge (residual {residual:.3e})")]
    TLeafDiverged { residual: f64 },
    #[error("tangent space of S_s ∩ T_t has the wrong dimension at {0:?}")]
    RankCollapse(Vec<f64>),
}

/// g-orthonormal frame adapted to the double foliation: `e1` tangent to the
/// leaf and normal to `S_s ∩ T_t` inside it, `e2..e_n` spanning the
/// intersection, `e_{n+1}` the leaf normal.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    pub point: Coords,
    /// `vectors[0] = e1, ..., vectors[n] = e_{n+1} = nu`.
    pub vectors: Vec<Vector>,
}

impl AdaptedFrame {
    /// 1-based frame vector access matching the usual index convention.
    pub fn e(&self, i: usize) -> &Vector {
        &self.vectors[i - 1]
    }

    pub fn nu(&self) -> &Vector {
        self.vectors.last().unwrap()
    }
}

/// `psi` together with the residual `|grad s - psi nu|_g` that certifies the
/// gradient is normal to the leaves.
#[derive(Debug, Clone, Copy)]
pub struct PsiSample {
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct OrthogonalFoliation {
    chart: Arc<MetricChart>,
    base: GraphHypersurface,
    delta: f64,
    induced: Arc<MetricChart>,
}

impl OrthogonalFoliation {
    /// Build the double foliation around `base`. Fails when the base does
    /// not meet the boundary orthogonally (within `tau_orth`) or when the
    /// `delta`-neighborhood leaks out of the chart.
    pub fn new(
        base: GraphHypersurface,
        delta: f64,
        tau_orth: f64,
    ) -> Result<Self, FoliationError> {
        if !base.base_has_boundary_coord() {
            return Err(FoliationError::NeedsBoundaryGraph);
        }
        if base.orientation() != 1.0 {
            return Err(FoliationError::OrientationUnsupported);
        }
        let chart = base.chart().clone();
        let induced = induced_chart(&base)?;
        let fol = OrthogonalFoliation {
            chart,
            base,
            delta,
            induced,
        };
        fol.validate(tau_orth)?;
        Ok(fol)
    }

    pub fn base(&self) -> &GraphHypersurface {
        &self.base
    }

    pub fn chart(&self) -> &Arc<MetricChart> {
        &self.chart
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Step for finite differences of the transverse fields (`t`, `e1`).
    /// These stack two derivative levels on top of an iterative solve, so
    /// the step is much larger than `fd_step`; it still scales linearly
    /// with it so convergence studies see the order.
    pub fn leaf_step(&self) -> f64 {
        (1000.0 * self.chart.fd_step()).min(self.delta / 4.0)
    }

    fn validate(&self, tau_orth: f64) -> Result<(), FoliationError> {
        let n = self.base.base_dim();
        let probe_r = (4.0 * self.delta).min(0.5 * self.base.r0());
        // corner orthogonality probes
        let mut probes = vec![vec![0.0; n]];
        for k in 1..n {
            for sgn in [-1.0, 1.0] {
                let mut y = vec![0.0; n];
                y[k] = sgn * probe_r;
                probes.push(y);
            }
        }
        for y in &probes {
            if !self.base.in_half_ball(y) {
                continue;
            }
            let x = self.base.embed(y)?;
            let nu = self.base.unit_normal_at(x.as_slice())?;
            let bn = self.chart.boundary_normal(x.as_slice())?;
            let r = self
                .chart
                .inner(x.as_slice(), &nu.components, &bn.components)?
                .abs();
            if r > tau_orth {
                return Err(FoliationError::NotOrthogonal { residual: r });
            }
        }
        // leaves stay inside the chart box
        for s in [-self.delta, self.delta] {
            for y in &probes {
                if !self.base.in_half_ball(y) {
                    continue;
                }
                let x = self.base.embed_offset(y, s)?;
                if !self.chart.contains(x.as_slice()) {
                    return Err(FoliationError::LeafExitsChart {
                        s,
                        point: x.iter().copied().collect(),
                    });
                }
            }
        }
        // normal integral curves of length delta stay inside
        for y in probes.iter().take(3) {
            if !self.base.in_half_ball(y) {
                continue;
            }
            let x = self.base.embed_offset(y, self.delta * 0.9)?;
            let q0 = self.flow_to_base(x.as_slice())?;
            if !self.chart.contains(q0.as_slice()) {
                return Err(FoliationError::IntegralCurveExits {
                    point: q0.iter().copied().collect(),
                });
            }
        }
        Ok(())
    }

    /// Leaf coordinate without any region check; defined wherever `f` is.
    pub fn s_raw(&self, x: &[f64]) -> Result<f64, FoliationError> {
        let y = self.base.base_of(x);
        Ok(x[self.base.height_index()] - self.base.f_eval(&y)?)
    }

    pub fn in_neighborhood(&self, x: &[f64]) -> bool {
        match self.s_raw(x) {
            Ok(s) => s.abs() <= self.delta && self.base.in_half_ball(&self.base.base_of(x)),
            Err(_) => false,
        }
    }

    fn check_region(&self, x: &[f64]) -> Result<(), FoliationError> {
        if self.in_neighborhood(x) {
            Ok(())
        } else {
            Err(FoliationError::OutsideFoliation(x.to_vec()))
        }
    }

    /// The leaf function `s`: `q` lies on `S_{leaf_s(q)}`.
    pub fn leaf_s(&self, q: &[f64]) -> Result<f64, FoliationError> {
        self.check_region(q)?;
        self.s_raw(q)
    }

    /// Unit normal of the leaf through `x`, pointing towards increasing `s`.
    /// Extends smoothly past the boundary face; no region check.
    pub fn normal_field(&self, x: &[f64]) -> Result<TangentVector, FoliationError> {
        Ok(self.base.unit_normal_at(x)?)
    }

    // ds as a covector by finite differences of the scalar field s_raw.
    fn ds_fd(&self, x: &[f64]) -> Result<Vector, FoliationError> {
        let h = self.chart.fd_step();
        let dim = self.chart.dim();
        let mut ds = DVector::zeros(dim);
        let mut xs = x.to_vec();
        for k in 0..dim {
            let one_sided = self.chart.half_space() && k == 0 && x[0] < h;
            ds[k] = if one_sided {
                let f0 = self.s_raw(x)?;
                xs[k] = x[k] + h;
                let f1 = self.s_raw(&xs)?;
                xs[k] = x[k] + 2.0 * h;
                let f2 = self.s_raw(&xs)?;
                xs[k] = x[k];
                (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
            } else {
                xs[k] = x[k] + h;
                let fp = self.s_raw(&xs)?;
                xs[k] = x[k] - h;
                let fm = self.s_raw(&xs)?;
                xs[k] = x[k];
                (fp - fm) / (2.0 * h)
            };
        }
        Ok(ds)
    }

    /// `psi = <grad s, nu>` with the parallelism residual attached.
    pub fn psi(&self, q: &[f64]) -> Result<PsiSample, FoliationError> {
        self.check_region(q)?;
        let ds = self.ds_fd(q)?;
        let grad = self.chart.raise(q, &ds)?;
        let nu = self.normal_field(q)?.components;
        let value = ds.dot(&nu);
        let diff = &grad - &nu * value;
        let residual = self.chart.norm(q, &diff)?;
        if residual > 1e-3 {
            return Err(FoliationError::PsiResidual { residual });
        }
        Ok(PsiSample { value, residual })
    }

    /// Flow `x` along its normal integral curve until it reaches the leaf
    /// `S_{s_target}`, using the leaf coordinate itself as the integration
    /// parameter (no event detection, fixed step count, smooth in `x`).
    pub fn flow_to_leaf(&self, x: &[f64], s_target: f64) -> Result<Coords, FoliationError> {
        let s0 = self.s_raw(x)?;
        let mut q = DVector::from_column_slice(x);
        if s0 == s_target {
            return Ok(q);
        }
        let h_idx = self.base.height_index();
        let dim = self.chart.dim();
        let rhs = |q: &DVector<f64>| -> Result<Vector, FoliationError> {
            let y = self.base.base_of(q.as_slice());
            let grad_f = self.base.f_grad(&y)?;
            let mut ds = DVector::zeros(dim);
            ds[h_idx] = 1.0;
            let mut k = 0;
            for i in 0..dim {
                if i != h_idx {
                    ds[i] = -grad_f[k];
                    k += 1;
                }
            }
            let grad = self.chart.raise(q.as_slice(), &ds)?;
            let norm2 = ds.dot(&grad);
            Ok(grad / norm2)
        };
        let dt = (s_target - s0) / FLOW_STEPS as f64;
        for _ in 0..FLOW_STEPS {
            let k1 = rhs(&q)?;
            let k2 = rhs(&(&q + &k1 * (dt / 2.0)))?;
            let k3 = rhs(&(&q + &k2 * (dt / 2.0)))?;
            let k4 = rhs(&(&q + &k3 * dt))?;
            q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        Ok(q)
    }

    fn flow_to_base(&self, x: &[f64]) -> Result<Coords, FoliationError> {
        self.flow_to_leaf(x, 0.0)
    }

    // In-surface geodesic from the corner point (0, c) with unit inward
    // conormal, integrated for arc length t in the induced metric.
    fn shoot(&self, c: &[f64], t: f64) -> Result<Vec<f64>, FoliationError> {
        let n = self.base.base_dim();
        let mut y0 = vec![0.0; n];
        y0[1..].copy_from_slice(c);
        let mut e1_cov = DVector::zeros(n);
        e1_cov[0] = 1.0;
        let w = self.induced.raise(&y0, &e1_cov)?;
        let wn = self.induced.norm(&y0, &w)?;
        let v0 = w / wn;
        if t == 0.0 {
            return Ok(y0);
        }
        let path = self.induced.geodesic_unclamped(&y0, &v0, t, SHOOT_STEPS)?;
        Ok(path.endpoint().position.as_slice().to_vec())
    }

    /// Transverse coordinate without a region check: arc length of the
    /// in-surface geodesic from the corner to the foot of the normal
    /// integral curve through `x`.
    pub fn t_raw(&self, x: &[f64]) -> Result<f64, FoliationError> {
        let q0 = self.flow_to_base(x)?;
        let y0 = self.base.base_of(q0.as_slice());
        let n = self.base.base_dim();

        // unknowns z = (t, c_2..c_n)
        let mut z = DVector::zeros(n);
        z[0] = y0[0];
        for k in 1..n {
            z[k] = y0[k];
        }
        let target = DVector::from_column_slice(&y0);
        let eval = |z: &DVector<f64>| -> Result<DVector<f64>, FoliationError> {
            let shot = self.shoot(&z.as_slice()[1..], z[0])?;
            Ok(DVector::from_column_slice(&shot))
        };
        let fd = 1e-6;
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_ITERS {
            let fz = eval(&z)?;
            let r = &fz - &target;
            residual = r.amax();
            if residual < 1e-13 {
                break;
            }
            let mut jac = DMatrix::zeros(n, n);
            for col in 0..n {
                let mut zp = z.clone();
                zp[col] += fd;
                let fp = eval(&zp)?;
                jac.set_column(col, &((fp - &fz) / fd));
            }
            let delta = jac
                .lu()
                .solve(&r)
                .ok_or(FoliationError::TLeafDiverged { residual })?;
            z -= delta;
        }
        if residual > 1e-8 {
            return Err(FoliationError::TLeafDiverged { residual });
        }
        Ok(z[0])
    }

    /// `t` such that `q` lies on `T_t`.
    pub fn t_leaf(&self, q: &[f64]) -> Result<f64, FoliationError> {
        self.check_region(q)?;
        self.t_raw(q)
    }

    // grad t by central differences of t_raw with the leaf step.
    fn grad_t(&self, x: &[f64]) -> Result<Vector, FoliationError> {
        let h = self.leaf_step();
        let dim = self.chart.dim();
        let mut dt = DVector::zeros(dim);
        let mut xs = x.to_vec();
        for k in 0..dim {
            xs[k] = x[k] + h;
            let tp = self.t_raw(&xs)?;
            xs[k] = x[k] - h;
            let tm = self.t_raw(&xs)?;
            xs[k] = x[k];
            dt[k] = (tp - tm) / (2.0 * h);
        }
        self.chart.raise(x, &dt).map_err(Into::into)
    }

    /// Unit normal of the transverse leaves: the g-normalized projection of
    /// `grad t` onto the tangent space of the leaf through `x`.
    pub fn e1_field(&self, x: &[f64]) -> Result<Vector, FoliationError> {
        let grad = self.grad_t(x)?;
        let nu = self.normal_field(x)?.components;
        let along = self.chart.inner(x, &grad, &nu)?;
        let mut e1 = grad - nu * along;
        let norm = self.chart.norm(x, &e1)?;
        if norm < 1e-10 {
            return Err(FoliationError::RankCollapse(x.to_vec()));
        }
        e1 /= norm;
        Ok(e1)
    }

    /// Orthogonality of the two families at `q`: `grad t` has no component
    /// along the normal field (relative residual).
    pub fn t_orthogonality_residual(&self, q: &[f64]) -> Result<f64, FoliationError> {
        self.check_region(q)?;
        let grad = self.grad_t(q)?;
        let nu = self.normal_field(q)?.components;
        let along = self.chart.inner(q, &grad, &nu)?;
        let total = self.chart.norm(q, &grad)?;
        Ok((along / total).abs())
    }

    /// Residual of the tangency `<nu, nu_boundary> = 0` at a boundary point.
    pub fn boundary_tangency_residual(&self, x: &[f64]) -> Result<f64, FoliationError> {
        let nu = self.normal_field(x)?.components;
        let bn = self.chart.boundary_normal(x)?.components;
        Ok(self.chart.inner(x, &nu, &bn)?.abs())
    }

    /// Adapted orthonormal frame at `q`.
    pub fn adapted_frame(&self, q: &[f64]) -> Result<AdaptedFrame, FoliationError> {
        self.check_region(q)?;
        let nu = self.normal_field(q)?.components;
        let e1 = self.e1_field(q)?;
        let n = self.base.base_dim();
        let y = self.base.base_of(q);
        let tangents = self.base.tangent_basis(&y)?;

        let g = self.chart.metric_at(q)?;
        let mut frame: Vec<Vector> = vec![e1];
        for t in &tangents {
            if frame.len() == n {
                break;
            }
            let mut w = t.clone();
            let wn = (nu.transpose() * &g * &w)[(0, 0)];
            w -= &nu * wn;
            for e in &frame {
                let c = (e.transpose() * &g * &w)[(0, 0)];
                w -= e * c;
            }
            let norm = (w.transpose() * &g * &w)[(0, 0)].max(0.0).sqrt();
            if norm < 1e-8 {
                continue;
            }
            frame.push(w / norm);
        }
        if frame.len() != n {
            return Err(FoliationError::RankCollapse(q.to_vec()));
        }
        frame.push(nu);
        Ok(AdaptedFrame {
            point: DVector::from_column_slice(q),
            vectors: frame,
        })
    }

    /// Second fundamental form of the leaf `S_s` through `x`:
    /// `A(u, v) = <-nabla_u nu, v>`.
    pub fn shape_bilinear(&self, x: &[f64], u: &Vector, v: &Vector) -> Result<f64, FoliationError> {
        let dnu = self.chart.covariant_derivative(
            x,
            u,
            self.chart.field_step(),
            FdPolicy::Auto,
            |y| {
                self.normal_field(y)
                    .map(|t| t.components)
                    .map_err(|_| GeomError::OutsideDomain(y.to_vec()))
            },
        )?;
        Ok(-self.chart.inner(x, &dnu, v)?)
    }

    /// Second fundamental form of the transverse leaf `T_t` through `x`
    /// (unit normal `e1`): `A(u, v) = <-nabla_u e1, v>`, with `e1`
    /// differentiated as a field.
    pub fn a_tt_bilinear(&self, x: &[f64], u: &Vector, v: &Vector) -> Result<f64, FoliationError> {
        let de1 = self.chart.covariant_derivative(
            x,
            u,
            self.leaf_step(),
            FdPolicy::Central,
            |y| {
                self.e1_field(y)
                    .map_err(|_| GeomError::OutsideDomain(y.to_vec()))
            },
        )?;
        Ok(-self.chart.inner(x, &de1, v)?)
    }

    /// The adapted-frame identity residual
    /// `|<A^{S_s} e1, e_i> + <A^{T_t} e_i, e_{n+1}>|` for `2 <= i <= n`.
    pub fn frame_identity_residual(&self, q: &[f64], i: usize) -> Result<f64, FoliationError> {
        let frame = self.adapted_frame(q)?;
        let n = self.base.base_dim();
        assert!((2..=n).contains(&i), "frame index i out of 2..=n");
        let e1 = frame.e(1).clone();
        let ei = frame.e(i).clone();
        let nu = frame.nu().clone();
        let lhs = self.shape_bilinear(q, &e1, &ei)?;
        let rhs = self.a_tt_bilinear(q, &ei, &nu)?;
        Ok((lhs + rhs).abs())
    }
}

/// Sampling region inside the foliated neighborhood: base coordinates in a
/// half-ball of the given radius around the corner, leaf offsets in
/// `[s_min, s_max]`.
#[derive(Debug, Clone, Copy)]
pub struct LeafRegion {
    pub radius: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl OrthogonalFoliation {
    /// Seeded sample points on leaves within `region`.
    pub fn sample_region(
        &self,
        region: &LeafRegion,
        count: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vec<Coords>, FoliationError> {
        let n = self.base.base_dim();
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 200 * count.max(1) {
            attempts += 1;
            let mut y = vec![0.0; n];
            y[0] = crate::rng::uniform(rng, 0.0, region.radius);
            for yk in y.iter_mut().skip(1) {
                *yk = crate::rng::uniform(rng, -region.radius, region.radius);
            }
            if y.iter().map(|v| v * v).sum::<f64>() > region.radius * region.radius {
                continue;
            }
            let s = crate::rng::uniform(rng, region.s_min, region.s_max);
            let q = self.base.embed_offset(&y, s)?;
            if self.in_neighborhood(q.as_slice()) {
                out.push(q);
            }
        }
        if out.len() < count {
            return Err(FoliationError::OutsideFoliation(vec![region.radius]));
        }
        Ok(out)
    }

    /// Seeded samples on the boundary face `{x1 = 0}` within the foliation.
    pub fn sample_boundary(
        &self,
        region: &LeafRegion,
        count: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Vec<Coords>, FoliationError> {
        let n = self.base.base_dim();
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count && attempts < 200 * count.max(1) {
            attempts += 1;
            let mut y = vec![0.0; n];
            for yk in y.iter_mut().skip(1) {
                *yk = crate::rng::uniform(rng, -region.radius, region.radius);
            }
            if y.iter().map(|v| v * v).sum::<f64>() > region.radius * region.radius {
                continue;
            }
            let s = crate::rng::uniform(rng, region.s_min, region.s_max);
            let q = self.base.embed_offset(&y, s)?;
            if self.in_neighborhood(q.as_slice()) {
                out.push(q);
            }
        }
        if out.len() < count {
            return Err(FoliationError::OutsideFoliation(vec![region.radius]));
        }
        Ok(out)
    }
}

/// The induced metric on the base surface in base coordinates:
/// `h(y) = J^T g(embed(y)) J` with `J` the graph tangents. Used for the
/// in-surface geodesics of the transverse construction. The chart carries
/// no half-space flag: the expressions extend smoothly across the corner
/// and the shooting solve needs that smoothness.
fn induced_chart(base: &GraphHypersurface) -> Result<Arc<MetricChart>, FoliationError> {
    let n = base.base_dim();
    let chart = base.chart().clone();
    let dim = chart.dim();
    let h_idx = base.height_index();
    let r0 = base.r0();
    let lo = vec![-r0; n];
    let hi = vec![r0; n];
    let base_cl = base.clone();
    let metric = Arc::new(move |y: &[f64]| {
        // Stencils must stay inside the evaluable region of f; the shooting
        // solve's residual check catches escapes.
        let fallback = DMatrix::identity(n, n);
        let Ok(grad) = base_cl.f_grad(y) else {
            return fallback;
        };
        let Ok(x) = base_cl.embed(y) else {
            return fallback;
        };
        let Ok(g) = chart.metric_at(x.as_slice()) else {
            return fallback;
        };
        let mut jac = DMatrix::zeros(dim, n);
        let mut k = 0;
        for i in 0..dim {
            if i == h_idx {
                continue;
            }
            jac[(i, k)] = 1.0;
            jac[(h_idx, k)] = grad[k];
            k += 1;
        }
        jac.transpose() * g * jac
    });
    Ok(Arc::new(MetricChart::numeric(
        n,
        lo,
        hi,
        false,
        metric,
        base.chart().fd_step(),
    )?))
}
