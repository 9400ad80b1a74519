//! Barrier surfaces, the cutoff test field, the Q-form and its trace bounds.
//!
//! The barrier `S'` is the graph of the second-order jet of `f` at the
//! corner with a third-order defect `-eps x1^3/6` in the boundary-normal
//! direction. It touches `N` from outside at the corner, meets the boundary
//! face orthogonally, and inherits the strong convexity of `S`, which is
//! what makes every m-trace of the Q-form strictly negative for small eps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Ast, BinOp, Expression};
use crate::foliation::{AdaptedFrame, FoliationError, LeafRegion, OrthogonalFoliation};
use crate::geometry::{FdPolicy, GeomError, TangentVector};
use crate::surfaces::{GraphHypersurface, ProperSubdomain, SurfaceError};
use crate::{fd, Coords, Matrix, Vector};

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Foliation(#[from] FoliationError),
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("cutoff is defined for s >= 0, got {0}")]
    NegativeS(f64),
    #[error("touching violated: f - u = {value:.3e} at {point:?}")]
    TouchingViolated { value: f64, point: Vec<f64> },
    #[error("assembled Q-form disagrees with the direct finite difference by {diff:.3e}")]
    QFormMismatch { diff: f64 },
    #[error("m = {m} outside 1..={size}")]
    BadM { m: usize, size: usize },
    #[error("psi dropped to {psi:.3} at {point:?}; shrink the sampling region")]
    PsiTooSmall { psi: f64, point: Vec<f64> },
    #[error("eps = {eps} out of the admissible range (need eps < {limit:.4})")]
    EpsOutOfRange { eps: f64, limit: f64 },
}

/// The cutoff profile `phi(s) = exp(1/(s - eps))` on `[0, eps)`, zero from
/// `eps` on. Satisfies `phi' <= -phi / eps^2` on the support.
#[derive(Debug, Clone, Copy)]
pub struct CutoffProfile {
    eps: f64,
}

impl CutoffProfile {
    pub fn new(eps: f64) -> Result<Self, BarrierError> {
        if eps <= 0.0 {
            return Err(BarrierError::BadEps(eps));
        }
        Ok(CutoffProfile { eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn phi(&self, s: f64) -> Result<f64, BarrierError> {
        if s < 0.0 {
            return Err(BarrierError::NegativeS(s));
        }
        Ok(self.phi_ext(s))
    }

    pub fn phi_prime(&self, s: f64) -> Result<f64, BarrierError> {
        if s < 0.0 {
            return Err(BarrierError::NegativeS(s));
        }
        Ok(self.phi_prime_ext(s))
    }

    // The same formula below s = 0: the natural smooth extension used by
    // the test field so its derivatives exist across the barrier surface.
    pub(crate) fn phi_ext(&self, s: f64) -> f64 {
        if s >= self.eps {
            0.0
        } else {
            (1.0 / (s - self.eps)).exp()
        }
    }

    pub(crate) fn phi_prime_ext(&self, s: f64) -> f64 {
        if s >= self.eps {
            0.0
        } else {
            let d = s - self.eps;
            -self.phi_ext(s) / (d * d)
        }
    }
}

/// Barrier hypersurface data: the jet coefficients of the scenario surface
/// at the corner point and the graph realizing
/// `u = a2 x1^2/2 + y' H y'/2 + (a3 - eps) x1^3/6`.
///
/// The mixed `x1`-tangential second derivatives vanish identically when the
/// surface meets the boundary orthogonally; they are measured and reported
/// but not built into `u`, which keeps `du/dx1 = 0` on `{x1 = 0}` exact.
#[derive(Debug, Clone)]
pub struct BarrierSurface {
    pub a2: f64,
    pub a3: f64,
    /// Tangential Hessian block of `f` at the corner (base indices >= 2).
    pub tangential_hessian: Matrix,
    pub eps: f64,
    pub surface: GraphHypersurface,
}

#[derive(Debug, Clone)]
pub struct TouchingReport {
    /// Smallest sampled `f - u` and where it occurs (base coordinates).
    pub min_value: f64,
    pub min_location: Vec<f64>,
    /// Largest base radius at which `f - u < 1e-10`; touching is strict
    /// when this stays within 1e-3 of the corner.
    pub equality_radius: f64,
    pub strict: bool,
    /// Measured `max_j |d2 f / dx1 dx_j (0)|` (vanishes under orthogonality).
    pub mixed_hessian_abs: f64,
    pub grid_points: usize,
}

/// Build the barrier for the sub-domain's surface. Errors out with a witness
/// point if `f - u` dips below `-1e-8` anywhere on the sampling grid of the
/// half-ball of radius `r0/2`.
pub fn build_barrier(
    domain: &ProperSubdomain,
    eps: f64,
) -> Result<(BarrierSurface, TouchingReport), BarrierError> {
    if eps <= 0.0 {
        return Err(BarrierError::BadEps(eps));
    }
    let s = domain.surface();
    let n = s.base_dim();
    let r0 = s.r0();
    let h = (0.01 * r0).max(1e-3);
    let origin = vec![0.0; n];

    // one-sided jets in the boundary-normal direction
    let line = |t: f64| -> f64 {
        let mut y = origin.clone();
        y[0] = t;
        s.f_eval(&y).unwrap_or(f64::NAN)
    };
    let a2 = fd::forward_second_5pt(line, 0.0, h);
    let a3 = fd::forward_third_5pt(line, 0.0, h);

    // tangential Hessian (central stencils; no boundary constraint there)
    let tdim = n - 1;
    let mut hess = DMatrix::zeros(tdim, tdim);
    for j in 1..n {
        for k in j..n {
            let v = if j == k {
                let axis = |t: f64| {
                    let mut y = origin.clone();
                    y[j] = t;
                    s.f_eval(&y).unwrap_or(f64::NAN)
                };
                // fourth-order central second derivative
                (-axis(-2.0 * h) + 16.0 * axis(-h) - 30.0 * axis(0.0) + 16.0 * axis(h)
                    - axis(2.0 * h))
                    / (12.0 * h * h)
            } else {
                let corner = |tj: f64, tk: f64| {
                    let mut y = origin.clone();
                    y[j] = tj;
                    y[k] = tk;
                    s.f_eval(&y).unwrap_or(f64::NAN)
                };
                (corner(h, h) - corner(h, -h) - corner(-h, h) + corner(-h, -h)) / (4.0 * h * h)
            };
            hess[(j - 1, k - 1)] = v;
            hess[(k - 1, j - 1)] = v;
        }
    }

    // mixed x1-tangential derivatives, recorded only
    let mut mixed_abs = 0.0_f64;
    for j in 1..n {
        let corner = |t1: f64, tj: f64| {
            let mut y = origin.clone();
            y[0] = t1;
            y[j] = tj;
            s.f_eval(&y).unwrap_or(f64::NAN)
        };
        let v = (corner(h, h) - corner(h, -h) - corner(-h, h) + corner(-h, -h)) / (4.0 * h * h);
        mixed_abs = mixed_abs.max(v.abs());
    }

    let u_expr = barrier_expression(a2, a3, eps, &hess, n);
    let surface = GraphHypersurface::new(
        s.chart().clone(),
        s.height_index(),
        u_expr,
        r0,
        s.orientation(),
    )?;

    // touching grid over the half-ball of radius r0/2
    let half = r0 / 2.0;
    let (m1, mk) = if n <= 2 { (33usize, 65usize) } else { (21, 41) };
    let mut counts = vec![mk; n];
    counts[0] = m1;
    let mut idx = vec![0usize; n];
    let mut min_value = f64::INFINITY;
    let mut min_location = origin.clone();
    let mut equality_radius = 0.0_f64;
    let mut grid_points = 0usize;
    'grid: loop {
        let mut y = vec![0.0; n];
        for d in 0..n {
            y[d] = if d == 0 {
                half * idx[d] as f64 / (counts[d] - 1) as f64
            } else {
                -half + 2.0 * half * idx[d] as f64 / (counts[d] - 1) as f64
            };
        }
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 <= half * half {
            grid_points += 1;
            let diff = s.f_eval(&y)? - surface.f_eval(&y)?;
            if diff < min_value {
                min_value = diff;
                min_location = y.clone();
            }
            if diff < -1e-8 {
                return Err(BarrierError::TouchingViolated {
                    value: diff,
                    point: y,
                });
            }
            if diff < 1e-10 {
                equality_radius = equality_radius.max(r2.sqrt());
            }
        }
        for d in (0..n).rev() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                continue 'grid;
            }
            idx[d] = 0;
        }
        break;
    }

    let report = TouchingReport {
        min_value,
        min_location,
        equality_radius,
        strict: equality_radius <= 1e-3,
        mixed_hessian_abs: mixed_abs,
        grid_points,
    };
    Ok((
        BarrierSurface {
            a2,
            a3,
            tangential_hessian: hess,
            eps,
            surface,
        },
        report,
    ))
}

// u = 0.5 a2 x1^2 + 0.5 y' H y' + ((a3 - eps)/6) x1^3 as an expression over
// the base coordinates.
fn barrier_expression(a2: f64, a3: f64, eps: f64, hess: &Matrix, n: usize) -> Expression {
    let var = |i: usize| Box::new(Ast::Var(i));
    let con = |c: f64| Box::new(Ast::Const(c));
    let mul = |a: Box<Ast>, b: Box<Ast>| Box::new(Ast::Bin(BinOp::Mul, a, b));
    let pow = |a: Box<Ast>, k: f64| Box::new(Ast::Bin(BinOp::Pow, a, con(k)));

    let mut terms: Vec<Box<Ast>> = Vec::new();
    if a2 != 0.0 {
        terms.push(mul(con(0.5 * a2), pow(var(0), 2.0)));
    }
    for j in 1..n {
        for k in j..n {
            let c = if j == k {
                0.5 * hess[(j - 1, k - 1)]
            } else {
                hess[(j - 1, k - 1)]
            };
            if c != 0.0 {
                terms.push(mul(con(c), mul(var(j), var(k))));
            }
        }
    }
    let cubic = (a3 - eps) / 6.0;
    if cubic != 0.0 {
        terms.push(mul(con(cubic), pow(var(0), 3.0)));
    }

    let ast = terms
        .into_iter()
        .reduce(|a, b| Box::new(Ast::Bin(BinOp::Add, a, b)))
        .map(|b| *b)
        .unwrap_or(Ast::Const(0.0));
    Expression::from_ast(ast, n)
}

/// The tangential test field `X(q) = phi(s(q)) nu(q)` of the barrier
/// foliation. Zero wherever `s >= eps`; inside the cutoff support the point
/// must lie in the foliated neighborhood.
pub fn test_field(
    fol: &OrthogonalFoliation,
    cutoff: &CutoffProfile,
    q: &[f64],
) -> Result<TangentVector, BarrierError> {
    let s = fol.s_raw(q)?;
    let dim = fol.chart().dim();
    if s >= cutoff.eps() {
        return Ok(TangentVector::new(
            DVector::from_column_slice(q),
            DVector::zeros(dim),
        ));
    }
    if !fol.in_neighborhood(q) {
        return Err(BarrierError::Foliation(FoliationError::OutsideFoliation(
            q.to_vec(),
        )));
    }
    let nu = fol.normal_field(q)?;
    let phi = cutoff.phi_ext(s);
    Ok(TangentVector::new(nu.base, nu.components * phi))
}

// X as a raw field for finite differencing (smooth extension, no checks).
pub(crate) fn test_field_raw(
    fol: &OrthogonalFoliation,
    cutoff: &CutoffProfile,
    x: &[f64],
) -> Result<Vector, FoliationError> {
    let s = fol.s_raw(x)?;
    if s >= cutoff.eps() {
        return Ok(DVector::zeros(fol.chart().dim()));
    }
    let nu = fol.normal_field(x)?;
    Ok(nu.components * cutoff.phi_ext(s))
}

/// The bilinear form `Q(u, v) = <nabla_u X, v>` at a point, assembled from
/// its ingredients in the adapted frame and cross-validated against the
/// direct finite-difference evaluation.
#[derive(Debug, Clone)]
pub struct QForm {
    pub point: Coords,
    pub frame: AdaptedFrame,
    /// Assembled matrix; rows are indexed by the first argument of `Q`.
    pub matrix: Matrix,
    /// Direct finite-difference evaluation of `<nabla_{e_a} X, e_b>`.
    pub direct: Matrix,
    pub max_entry_diff: f64,
    pub phi: f64,
    pub phi_prime: f64,
    pub psi: f64,
    /// Shape operator of the barrier leaf in the frame basis (n x n).
    pub shape_sprime: Matrix,
}

pub fn q_form(
    fol: &OrthogonalFoliation,
    cutoff: &CutoffProfile,
    q: &[f64],
) -> Result<QForm, BarrierError> {
    let chart = fol.chart().clone();
    let dim = chart.dim();
    let n = dim - 1;
    let frame = fol.adapted_frame(q)?;
    let s = fol.s_raw(q)?;
    let phi = cutoff.phi_ext(s);
    let phi_prime = cutoff.phi_prime_ext(s);
    let psi = fol.psi(q)?.value;

    // leaf shape operator entries in the adapted frame
    let mut a_sprime = DMatrix::zeros(n, n);
    for a in 1..=n {
        for b in 1..=n {
            a_sprime[(a - 1, b - 1)] = fol.shape_bilinear(q, frame.e(a), frame.e(b))?;
        }
    }

    // d_nu nu and the transverse couplings <e1, nabla_{e_j} nu>
    let nu_field = |y: &[f64]| {
        fol.normal_field(y)
            .map(|t| t.components)
            .map_err(|_| GeomError::OutsideDomain(y.to_vec()))
    };
    let step = chart.field_step();
    let dnu_nu = chart.covariant_derivative(q, frame.nu(), step, FdPolicy::Auto, nu_field)?;
    let mut att_coupling = vec![0.0; n + 1]; // index j in 2..=n used
    for j in 2..=n {
        let dnu_j = chart.covariant_derivative(q, frame.e(j), step, FdPolicy::Auto, nu_field)?;
        att_coupling[j] = chart.inner(q, frame.e(1), &dnu_j)?;
    }
    let att_nn = chart.inner(q, &dnu_nu, frame.e(1))?;

    let mut m = DMatrix::zeros(dim, dim);
    for a in 1..=n {
        for b in 1..=n {
            m[(a - 1, b - 1)] = -phi * a_sprime[(a - 1, b - 1)];
        }
    }
    for j in 2..=n {
        // the first row and column carry the transverse couplings
        m[(0, j - 1)] = phi * att_coupling[j];
        m[(j - 1, 0)] = phi * att_coupling[j];
    }
    m[(dim - 1, 0)] = phi * att_nn;
    for j in 2..=n {
        m[(dim - 1, j - 1)] = phi * chart.inner(q, &dnu_nu, frame.e(j))?;
    }
    m[(dim - 1, dim - 1)] = phi_prime * psi;

    // direct oracle
    let mut direct = DMatrix::zeros(dim, dim);
    for a in 1..=dim {
        let dx = chart.covariant_derivative(q, frame.e(a), step, FdPolicy::Auto, |y| {
            test_field_raw(fol, cutoff, y).map_err(|_| GeomError::OutsideDomain(y.to_vec()))
        })?;
        for b in 1..=dim {
            direct[(a - 1, b - 1)] = chart.inner(q, &dx, frame.e(b))?;
        }
    }

    let max_entry_diff = (&m - &direct).amax();
    if max_entry_diff > 5e-3 {
        return Err(BarrierError::QFormMismatch {
            diff: max_entry_diff,
        });
    }

    Ok(QForm {
        point: DVector::from_column_slice(q),
        frame,
        matrix: m,
        direct,
        max_entry_diff,
        phi,
        phi_prime,
        psi,
        shape_sprime: a_sprime,
    })
}

/// Extreme values of `tr_P Q` over m-dimensional subspaces `P`: the trace
/// depends only on the symmetric part, and its extrema are the sums of the
/// m smallest / m largest eigenvalues.
pub fn extreme_trace_m(q: &Matrix, m: usize) -> Result<(f64, f64), BarrierError> {
    let size = q.nrows();
    if m < 1 || m > size {
        return Err(BarrierError::BadM { m, size });
    }
    let sym = (q + q.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min: f64 = eig.iter().take(m).sum();
    let max: f64 = eig.iter().rev().take(m).sum();
    Ok((min, max))
}

/// Curvature scale of the foliation over a sampling region: the max of the
/// spectral norms of both second fundamental forms and of the normal
/// acceleration couplings. Verifies `psi >= 1/2` on the way.
#[derive(Debug, Clone)]
pub struct KEstimate {
    pub k: f64,
    pub k_sprime: f64,
    pub k_tt: f64,
    pub k_accel: f64,
    pub psi_min: f64,
    pub samples: usize,
}

pub fn estimate_k(
    fol: &OrthogonalFoliation,
    region: &LeafRegion,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<KEstimate, BarrierError> {
    let chart = fol.chart().clone();
    let dim = chart.dim();
    let n = dim - 1;
    let points = fol.sample_region(region, count, rng)?;
    let mut k_sprime = 0.0_f64;
    let mut k_tt = 0.0_f64;
    let mut k_accel = 0.0_f64;
    let mut psi_min = f64::INFINITY;

    for q in &points {
        let x = q.as_slice();
        let psi = fol.psi(x)?.value;
        if psi < 0.5 {
            return Err(BarrierError::PsiTooSmall {
                psi,
                point: x.to_vec(),
            });
        }
        psi_min = psi_min.min(psi);
        let frame = fol.adapted_frame(x)?;

        let mut a_s = DMatrix::zeros(n, n);
        for a in 1..=n {
            for b in 1..=n {
                a_s[(a - 1, b - 1)] = fol.shape_bilinear(x, frame.e(a), frame.e(b))?;
            }
        }
        k_sprime = k_sprime.max(spectral_norm(&a_s));

        // A^{T_t} in the basis (e_2..e_n, nu) via one derivative of the
        // e1 field per direction
        let mut basis: Vec<Vector> = (2..=n).map(|j| frame.e(j).clone()).collect();
        basis.push(frame.nu().clone());
        let mut a_t = DMatrix::zeros(n, n);
        for (row, u) in basis.iter().enumerate() {
            let de1 =
                chart.covariant_derivative(x, u, fol.leaf_step(), FdPolicy::Central, |y| {
                    fol.e1_field(y)
                        .map_err(|_| GeomError::OutsideDomain(y.to_vec()))
                })?;
            for (col, v) in basis.iter().enumerate() {
                a_t[(row, col)] = -chart.inner(x, &de1, v)?;
            }
        }
        k_tt = k_tt.max(spectral_norm(&a_t));

        let nu_field = |y: &[f64]| {
            fol.normal_field(y)
                .map(|t| t.components)
                .map_err(|_| GeomError::OutsideDomain(y.to_vec()))
        };
        let dnu_nu = chart.covariant_derivative(
            x,
            frame.nu(),
            chart.field_step(),
            FdPolicy::Auto,
            nu_field,
        )?;
        let mut accel2 = 0.0;
        for j in 2..=n {
            let c = chart.inner(x, &dnu_nu, frame.e(j))?;
            accel2 += c * c;
        }
        k_accel = k_accel.max(accel2.sqrt());
    }

    Ok(KEstimate {
        k: k_sprime.max(k_tt).max(k_accel),
        k_sprime,
        k_tt,
        k_accel,
        psi_min,
        samples: points.len(),
    })
}

fn spectral_norm(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()))
}

/// The calculus profile
/// `F(theta) = (K - eps^-2/2) sin^2 theta + sqrt(n) K |sin theta cos theta|`.
#[derive(Debug, Clone, Copy)]
pub struct Lemma34Profile {
    pub k: f64,
    pub n: usize,
    pub eps: f64,
}

impl Lemma34Profile {
    /// Evaluate `F`; the argument is folded across `pi/2` (the profile is
    /// exactly symmetric), which makes `F(0)` and `F(pi)` exact zeros.
    pub fn eval(&self, theta: f64) -> f64 {
        let t = if theta > std::f64::consts::FRAC_PI_2 {
            std::f64::consts::PI - theta
        } else {
            theta
        };
        let a = self.k - 0.5 / (self.eps * self.eps);
        let (sin, cos) = t.sin_cos();
        a * sin * sin + (self.n as f64).sqrt() * self.k * (sin * cos).abs()
    }
}

/// Closed-form maximum of the calculus profile over `[0, pi]` via the
/// interior critical angle `tan(2 theta0) = sqrt(n) K / (eps^-2/2 - K)`.
/// Requires `eps < 1/sqrt(2K)` for positive `K`; returns `(0, 0)` for `K = 0`.
pub fn lemma34_max(k: f64, n: usize, eps: f64) -> Result<(f64, f64), BarrierError> {
    if eps <= 0.0 {
        return Err(BarrierError::BadEps(eps));
    }
    if k == 0.0 {
        return Ok((0.0, 0.0));
    }
    let limit = 1.0 / (2.0 * k).sqrt();
    if eps >= limit {
        return Err(BarrierError::EpsOutOfRange { eps, limit });
    }
    let b = 0.5 / (eps * eps) - k;
    let theta0 = 0.5 * ((n as f64).sqrt() * k / b).atan();
    let profile = Lemma34Profile { k, n, eps };
    Ok((theta0, profile.eval(theta0)))
}

/// Grid scan of the calculus profile with golden-section refinement inside
/// the bracketing cell. Independent of the critical-angle formula; used to
/// cross-check `lemma34_max`.
pub fn lemma34_grid_max(p: &Lemma34Profile, step: f64) -> f64 {
    let mut best_i = 0usize;
    let mut best = f64::NEG_INFINITY;
    let count = (std::f64::consts::PI / step) as usize + 1;
    for i in 0..=count {
        let th = (i as f64 * step).min(std::f64::consts::PI);
        let v = p.eval(th);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = (best_i.saturating_sub(1)) as f64 * step;
    let mut hi = ((best_i + 1) as f64 * step).min(std::f64::consts::PI);
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - gr * (hi - lo);
        let b = lo + gr * (hi - lo);
        if p.eval(a) < p.eval(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    p.eval(0.5 * (lo + hi)).max(best)
}

/// Outcome of the trace verification over a sampled region.
#[derive(Debug, Clone)]
pub struct Lemma33Report {
    pub m: usize,
    pub eps: f64,
    pub samples: usize,
    pub worst_trace: f64,
    pub worst_point: Vec<f64>,
    /// Largest assembled-vs-direct Q-form mismatch over the samples.
    pub max_qform_mismatch: f64,
    /// All sampled maxima strictly negative.
    pub verdict: bool,
    /// Decomposition at the worst point mirroring the analytic estimate:
    /// `tr_P Q <= -phi tr_{P'} A^{S'} + phi F*`.
    pub bound: Option<TraceBound>,
    pub eps_admissible: Option<bool>,
    /// Names of precondition checks that did not hold; the verdict is still
    /// the trace statement, these explain why it may fail.
    pub precondition_failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TraceBound {
    pub phi: f64,
    /// `-phi * (sum of the m smallest eigenvalues of A^{S'})`.
    pub convexity_term: f64,
    /// `phi * max(F*, 0)`.
    pub profile_term: f64,
    pub total: f64,
}

/// Verify that every m-trace of the Q-form is strictly negative over a
/// sampled region of the cutoff support.
pub fn verify_lemma33(
    fol: &OrthogonalFoliation,
    cutoff: &CutoffProfile,
    m: usize,
    region: &LeafRegion,
    count: usize,
    rng: &mut ChaCha8Rng,
    k_estimate: Option<&KEstimate>,
    precondition_failures: Vec<String>,
) -> Result<Lemma33Report, BarrierError> {
    let eps = cutoff.eps();
    // clip the sampling region to the cutoff support
    let support = LeafRegion {
        radius: region.radius,
        s_min: region.s_min.max(0.0),
        s_max: region.s_max.min(0.9 * eps),
    };
    let points = fol.sample_region(&support, count, rng)?;

    let mut worst_trace = f64::NEG_INFINITY;
    let mut worst_point = Vec::new();
    let mut worst_q: Option<QForm> = None;
    let mut max_mismatch = 0.0_f64;
    for q in &points {
        let qf = q_form(fol, cutoff, q.as_slice())?;
        max_mismatch = max_mismatch.max(qf.max_entry_diff);
        let (_, max) = extreme_trace_m(&qf.matrix, m)?;
        if max > worst_trace {
            worst_trace = max;
            worst_point = q.as_slice().to_vec();
            worst_q = Some(qf);
        }
    }

    let n = fol.chart().dim() - 1;
    let bound = match (&worst_q, k_estimate) {
        (Some(qf), Some(ke)) => {
            let (min_conv, _) = extreme_trace_m(&qf.shape_sprime, m.min(n))?;
            let f_star = lemma34_max(ke.k, n, eps)
                .map(|(_, f)| f)
                .unwrap_or(f64::INFINITY);
            let convexity_term = -qf.phi * min_conv;
            let profile_term = qf.phi * f_star.max(0.0);
            Some(TraceBound {
                phi: qf.phi,
                convexity_term,
                profile_term,
                total: convexity_term + profile_term,
            })
        }
        _ => None,
    };
    let eps_admissible = k_estimate.map(|ke| ke.k == 0.0 || eps < 1.0 / (2.0 * ke.k).sqrt());

    Ok(Lemma33Report {
        m,
        eps,
        samples: points.len(),
        worst_trace,
        worst_point,
        max_qform_mismatch: max_mismatch,
        verdict: worst_trace < 0.0,
        bound,
        eps_admissible,
        precondition_failures,
    })
}
