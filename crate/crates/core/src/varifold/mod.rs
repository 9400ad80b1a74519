//! Discrete rectifiable varifolds and their first variation.
//!
//! A varifold here is a finite list of weighted simplices (segments or
//! triangles) in a metric chart. The first variation of area along a vector
//! field is evaluated by fixed-order simplex quadrature of the tangential
//! divergence, with an order-2 vs order-4 Richardson disagreement attached
//! as an error estimate. Per-simplex contributions are combined by pairwise
//! summation in index order, so results are bit-stable across thread counts.

pub mod quadrature;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::barrier::{
    build_barrier, estimate_k, test_field_raw, verify_lemma33, BarrierError, CutoffProfile,
    KEstimate, Lemma33Report,
};
use crate::foliation::{FoliationError, LeafRegion, OrthogonalFoliation};
use crate::geometry::{GeomError, MetricChart};
use crate::rng::{stream_rng, Stream};
use crate::surfaces::{ProperSubdomain, SurfaceError};
use crate::{fd, Coords, Matrix, Vector};

use quadrature::{reference_volume, rule, QuadOrder};

#[derive(Debug, Error)]
pub enum VarifoldError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Foliation(#[from] FoliationError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("varifold dimension m = {0} unsupported; segments (1) and triangles (2) only")]
    UnsupportedDimension(usize),
    #[error("multiplicity {0} is negative")]
    NegativeMultiplicity(f64),
    #[error("simplex {index} is degenerate (volume {volume:.3e})")]
    DegenerateSimplex { index: usize, volume: f64 },
    #[error("simplex {index} has {got} vertices, expected {want}")]
    BadVertexCount {
        index: usize,
        got: usize,
        want: usize,
    },
    #[error("vertex {0:?} lies outside the chart domain")]
    OutsideChart(Vec<f64>),
    #[error("point {0:?} is not inside the simplex")]
    OutsideSimplex(Vec<f64>),
    #[error("field is not tangential: residual {residual:.3e}")]
    NotTangential { residual: f64 },
    #[error("precondition `{check}` failed: {detail}")]
    Precondition { check: String, detail: String },
}

#[derive(Debug, Clone)]
pub struct Simplex {
    pub vertices: Vec<Coords>,
    pub multiplicity: f64,
}

/// Weighted simplicial m-varifold supported in a chart.
#[derive(Debug, Clone)]
pub struct DiscreteVarifold {
    m: usize,
    simplices: Vec<Simplex>,
    chart: Arc<MetricChart>,
}

/// A vector field given by its coordinate components.
pub type Field<'a> = &'a (dyn Fn(&[f64]) -> Result<Vector, GeomError> + Sync);

impl DiscreteVarifold {
    pub fn new(
        chart: Arc<MetricChart>,
        m: usize,
        simplices: Vec<Simplex>,
    ) -> Result<Self, VarifoldError> {
        if !(1..=2).contains(&m) {
            return Err(VarifoldError::UnsupportedDimension(m));
        }
        for (index, s) in simplices.iter().enumerate() {
            if s.vertices.len() != m + 1 {
                return Err(VarifoldError::BadVertexCount {
                    index,
                    got: s.vertices.len(),
                    want: m + 1,
                });
            }
            if s.multiplicity < 0.0 {
                return Err(VarifoldError::NegativeMultiplicity(s.multiplicity));
            }
            for v in &s.vertices {
                if !chart.contains(v.as_slice()) {
                    return Err(VarifoldError::OutsideChart(v.as_slice().to_vec()));
                }
            }
            let vol = euclidean_volume(s);
            if vol <= 1e-12 {
                return Err(VarifoldError::DegenerateSimplex { index, volume: vol });
            }
        }
        Ok(DiscreteVarifold {
            m,
            simplices,
            chart,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn chart(&self) -> &Arc<MetricChart> {
        &self.chart
    }

    /// Same varifold with every multiplicity scaled.
    pub fn scaled(&self, factor: f64) -> Result<Self, VarifoldError> {
        let simplices = self
            .simplices
            .iter()
            .map(|s| Simplex {
                vertices: s.vertices.clone(),
                multiplicity: s.multiplicity * factor,
            })
            .collect();
        DiscreteVarifold::new(self.chart.clone(), self.m, simplices)
    }

    /// Disjoint union (concatenation of the simplex lists).
    pub fn union(&self, other: &DiscreteVarifold) -> Result<Self, VarifoldError> {
        let mut simplices = self.simplices.clone();
        simplices.extend(other.simplices.iter().cloned());
        DiscreteVarifold::new(self.chart.clone(), self.m, simplices)
    }

    /// Total g-mass (order-4 quadrature of the area element).
    pub fn mass(&self) -> Result<f64, VarifoldError> {
        let nodes = self.quad_nodes(QuadOrder::Four)?;
        let per: Vec<f64> = nodes.iter().map(|n| n.weight).collect();
        Ok(fd::pairwise_sum(&per))
    }

    fn quad_nodes(&self, order: QuadOrder) -> Result<Vec<QuadNode>, VarifoldError> {
        let rule = rule(self.m, order).ok_or(VarifoldError::UnsupportedDimension(self.m))?;
        let vol = reference_volume(self.m);
        let mut out = Vec::with_capacity(self.simplices.len() * rule.len());
        for (sid, s) in self.simplices.iter().enumerate() {
            let dim = self.chart.dim();
            let mut edges = DMatrix::zeros(dim, self.m);
            for k in 0..self.m {
                edges.set_column(k, &(&s.vertices[k + 1] - &s.vertices[0]));
            }
            for (node, w) in rule.nodes.iter().zip(&rule.weights) {
                let mut x = s.vertices[0].clone();
                for (k, l) in node.iter().enumerate() {
                    x += edges.column(k) * *l;
                }
                let g = self.chart.metric_at(x.as_slice())?;
                let gram = edges.transpose() * &g * &edges;
                let area = gram.determinant().max(0.0).sqrt();
                let frame = self
                    .chart
                    .orthonormalize(x.as_slice(), &edge_columns(&edges))?;
                let gamma = self.chart.christoffel(x.as_slice())?;
                out.push(QuadNode {
                    simplex: sid,
                    x,
                    frame,
                    g,
                    gamma,
                    weight: s.multiplicity * w * vol * area,
                });
            }
        }
        Ok(out)
    }
}

fn edge_columns(edges: &Matrix) -> Vec<Vector> {
    (0..edges.ncols())
        .map(|k| edges.column(k).into_owned())
        .collect()
}

fn euclidean_volume(s: &Simplex) -> f64 {
    let m = s.vertices.len() - 1;
    let dim = s.vertices[0].len();
    let mut edges = DMatrix::zeros(dim, m);
    for k in 0..m {
        edges.set_column(k, &(&s.vertices[k + 1] - &s.vertices[0]));
    }
    let gram = edges.transpose() * &edges;
    gram.determinant().max(0.0).sqrt() * reference_volume(m)
}

/// Precomputed quadrature node: position, g-orthonormal tangent frame,
/// metric, Christoffel symbols and the full quadrature weight.
struct QuadNode {
    simplex: usize,
    x: Coords,
    frame: Vec<Vector>,
    g: Matrix,
    gamma: Vec<Matrix>,
    weight: f64,
}

impl QuadNode {
    // sum_i <nabla_{e_i} X, e_i> with the cached connection.
    fn divergence(&self, chart: &MetricChart, field: Field<'_>) -> Result<f64, VarifoldError> {
        let h = chart.field_step();
        let x = self.x.as_slice();
        let x0 = field(x)?;
        let dim = chart.dim();
        let mut div = 0.0;
        for u in &self.frame {
            let one_sided = chart.half_space() && u[0] != 0.0 && x[0] - h * u[0].abs() < 0.0;
            let du = if one_sided {
                let sgn = if u[0] >= 0.0 { 1.0 } else { -1.0 };
                let x1 = field(&shift(x, u, sgn * h))?;
                let x2 = field(&shift(x, u, 2.0 * sgn * h))?;
                (&x0 * -3.0 + x1 * 4.0 - x2) * (sgn / (2.0 * h))
            } else {
                let xp = field(&shift(x, u, h))?;
                let xm = field(&shift(x, u, -h))?;
                (xp - xm) / (2.0 * h)
            };
            let mut cov = du;
            for k in 0..dim {
                cov[k] += (u.transpose() * &self.gamma[k] * &x0)[(0, 0)];
            }
            div += (cov.transpose() * &self.g * u)[(0, 0)];
        }
        Ok(div)
    }
}

fn shift(x: &[f64], dir: &Vector, t: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| v + t * dir[i])
        .collect()
}

/// g-orthonormal tangent frame of a simplex at an interior point `x`.
pub fn tangent_plane(
    chart: &MetricChart,
    simplex: &Simplex,
    x: &[f64],
) -> Result<Vec<Vector>, VarifoldError> {
    let m = simplex.vertices.len() - 1;
    let dim = chart.dim();
    let mut edges = DMatrix::zeros(dim, m);
    for k in 0..m {
        edges.set_column(k, &(&simplex.vertices[k + 1] - &simplex.vertices[0]));
    }
    // barycentric check in the affine coordinates of the simplex
    let rhs = DVector::from_column_slice(x) - &simplex.vertices[0];
    let gram = edges.transpose() * &edges;
    let lam = gram
        .clone()
        .lu()
        .solve(&(edges.transpose() * &rhs))
        .ok_or_else(|| VarifoldError::DegenerateSimplex {
            index: 0,
            volume: 0.0,
        })?;
    let residual = (&edges * &lam - &rhs).amax();
    let inside = lam.iter().all(|&l| l >= -1e-9) && lam.iter().sum::<f64>() <= 1.0 + 1e-9;
    if residual > 1e-8 || !inside {
        return Err(VarifoldError::OutsideSimplex(x.to_vec()));
    }
    Ok(chart.orthonormalize(x, &edge_columns(&edges))?)
}

/// `sum_i <nabla_{e_i} X, e_i>_g` over an orthonormal frame of a plane.
pub fn divergence_on_plane(
    chart: &MetricChart,
    field: Field<'_>,
    x: &[f64],
    frame: &[Vector],
) -> Result<f64, VarifoldError> {
    let g = chart.metric_at(x)?;
    let gamma = chart.christoffel(x)?;
    let node = QuadNode {
        simplex: 0,
        x: DVector::from_column_slice(x),
        frame: frame.to_vec(),
        g,
        gamma,
        weight: 0.0,
    };
    node.divergence(chart, field)
}

/// First variation of area along a field, with a Richardson error estimate
/// from the order-2 vs order-4 quadrature disagreement.
#[derive(Debug, Clone)]
pub struct VariationReport {
    pub total: f64,
    /// Per-simplex contributions; their pairwise sum is exactly `total`.
    pub contributions: Vec<f64>,
    pub order: u32,
    pub richardson_abs: f64,
    pub richardson_rel: f64,
    /// Order-2 and order-4 agree to 10% relative.
    pub reliable: bool,
    pub mass: f64,
}

pub fn first_variation(
    v: &DiscreteVarifold,
    field: Field<'_>,
) -> Result<VariationReport, VarifoldError> {
    let nodes4 = v.quad_nodes(QuadOrder::Four)?;
    let nodes2 = v.quad_nodes(QuadOrder::Two)?;
    let total4 = integrate_nodes(v, &nodes4, field)?;
    let total2 = integrate_nodes(v, &nodes2, field)?;
    let total = fd::pairwise_sum(&total4);
    let coarse = fd::pairwise_sum(&total2);
    let richardson_abs = (total - coarse).abs();
    let scale = total.abs().max(1e-30);
    let richardson_rel = richardson_abs / scale;
    let mass: Vec<f64> = nodes4.iter().map(|n| n.weight).collect();
    Ok(VariationReport {
        total,
        contributions: total4,
        order: 4,
        richardson_abs,
        richardson_rel,
        reliable: richardson_rel <= 0.1 || richardson_abs <= 1e-12,
        mass: fd::pairwise_sum(&mass),
    })
}

// per-simplex contributions, evaluated in parallel, reduced in index order
fn integrate_nodes(
    v: &DiscreteVarifold,
    nodes: &[QuadNode],
    field: Field<'_>,
) -> Result<Vec<f64>, VarifoldError> {
    let values: Vec<Result<f64, VarifoldError>> = nodes
        .par_iter()
        .map(|n| Ok(n.weight * n.divergence(&v.chart, field)?))
        .collect();
    let mut per_simplex = vec![Vec::<f64>::new(); v.simplices.len()];
    for (node, val) in nodes.iter().zip(values) {
        per_simplex[node.simplex].push(val?);
    }
    Ok(per_simplex
        .iter()
        .map(|vals| fd::pairwise_sum(vals))
        .collect())
}

/// Max `|<X, nu_boundary>_g|` over boundary samples.
pub fn is_tangential(
    chart: &MetricChart,
    field: Field<'_>,
    samples: &[Coords],
) -> Result<f64, VarifoldError> {
    let mut worst = 0.0_f64;
    for x in samples {
        let bn = chart.boundary_normal(x.as_slice())?;
        let xv = field(x.as_slice())?;
        worst = worst.max(chart.inner(x.as_slice(), &xv, &bn.components)?.abs());
    }
    Ok(worst)
}

/// Boxed field, used for collections of test fields.
pub type BoxedField = Box<dyn Fn(&[f64]) -> Result<Vector, GeomError> + Sync + Send>;

/// Max of `|delta V(X)| / (mass * ||X||_C1)` over tangential test fields.
/// The C1 norm is sampled at the quadrature nodes.
pub fn stationarity_residual(
    v: &DiscreteVarifold,
    fields: &[BoxedField],
    boundary_samples: &[Coords],
    tau_orth: f64,
) -> Result<f64, VarifoldError> {
    if v.simplices.is_empty() || fields.is_empty() {
        return Ok(0.0);
    }
    // node geometry (frames, connection) is field-independent; build once
    let nodes = v.quad_nodes(QuadOrder::Four)?;
    let mass_terms: Vec<f64> = nodes.iter().map(|n| n.weight).collect();
    let mass = fd::pairwise_sum(&mass_terms);
    let chart = v.chart.clone();
    let mut worst = 0.0_f64;
    for f in fields {
        let field: Field<'_> = &**f;
        let t = is_tangential(&chart, field, boundary_samples)?;
        if t > tau_orth {
            return Err(VarifoldError::NotTangential { residual: t });
        }
        let total = fd::pairwise_sum(&integrate_nodes(v, &nodes, field)?);
        // sampled C1 norm over a subsample of nodes
        let stride = (nodes.len() / 200).max(1);
        let mut c1 = 0.0_f64;
        for n in nodes.iter().step_by(stride) {
            let x = n.x.as_slice();
            let xv = field(x)?;
            let mut norm = chart.norm(x, &xv)?;
            let h = chart.field_step();
            for k in 0..chart.dim() {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                let d = (field(&xp)? - field(&xm)?) / (2.0 * h);
                norm += chart.norm(x, &d)?;
            }
            c1 = c1.max(norm);
        }
        worst = worst.max(total.abs() / (mass * c1.max(1e-30)));
    }
    Ok(worst)
}

/// Touching test varifold for `m = 1`: a segment through the corner point
/// along the corner direction, lifted onto the scenario surface (so its
/// support lies in `N` and contains the corner).
pub fn touching_segment(
    domain: &ProperSubdomain,
    p: &[f64],
    extent: f64,
    subdiv: usize,
) -> Result<DiscreteVarifold, VarifoldError> {
    let s = domain.surface();
    let chart = s.chart().clone();
    let h_idx = s.height_index();
    // corner direction: the first base coordinate after the boundary one
    let dir = corner_direction(&chart, h_idx)?;
    let mut points = Vec::with_capacity(2 * subdiv + 1);
    for i in 0..=(2 * subdiv) {
        let t = extent * (i as f64 / subdiv as f64 - 1.0);
        let mut x: Coords = DVector::from_column_slice(p) + &dir * t;
        if x[0] < 0.0 {
            x[0] = 0.0;
        }
        let y = s.base_of(x.as_slice());
        let lift = s.f_eval(&y)?;
        if x[h_idx] < lift {
            x[h_idx] = lift;
        }
        points.push(x);
    }
    let simplices = points
        .windows(2)
        .map(|w| Simplex {
            vertices: vec![w[0].clone(), w[1].clone()],
            multiplicity: 1.0,
        })
        .collect();
    DiscreteVarifold::new(chart, 1, simplices)
}

/// Touching test varifold for `m = 2`: a coordinate half-disk at the corner
/// (clipped to `x1 >= 0`), lifted onto the scenario surface.
pub fn touching_disk(
    domain: &ProperSubdomain,
    p: &[f64],
    radius: f64,
    subdiv: usize,
) -> Result<DiscreteVarifold, VarifoldError> {
    let s = domain.surface();
    let chart = s.chart().clone();
    let h_idx = s.height_index();
    let dim = chart.dim();
    let mut u = DVector::zeros(dim);
    u[0] = 1.0; // boundary-normal direction, kept nonnegative
    let v = corner_direction(&chart, h_idx)?;

    let lift_point = |a: f64, b: f64| -> Result<Coords, VarifoldError> {
        let mut x: Coords = DVector::from_column_slice(p) + &u * a + &v * b;
        let y = s.base_of(x.as_slice());
        let f = s.f_eval(&y)?;
        if x[h_idx] < f {
            x[h_idx] = f;
        }
        Ok(x)
    };

    // polar mesh of the half-disk {a >= 0}
    let rings = subdiv.max(2);
    let sectors = 2 * rings;
    let mut simplices = Vec::new();
    let vertex = |i: usize, j: usize| -> (f64, f64) {
        let r = radius * i as f64 / rings as f64;
        let th =
            -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * j as f64 / sectors as f64;
        (r * th.cos(), r * th.sin())
    };
    for j in 0..sectors {
        // fan at the center
        let (a1, b1) = vertex(1, j);
        let (a2, b2) = vertex(1, j + 1);
        simplices.push(Simplex {
            vertices: vec![
                lift_point(0.0, 0.0)?,
                lift_point(a1, b1)?,
                lift_point(a2, b2)?,
            ],
            multiplicity: 1.0,
        });
    }
    for i in 1..rings {
        for j in 0..sectors {
            let (a00, b00) = vertex(i, j);
            let (a01, b01) = vertex(i, j + 1);
            let (a10, b10) = vertex(i + 1, j);
            let (a11, b11) = vertex(i + 1, j + 1);
            simplices.push(Simplex {
                vertices: vec![
                    lift_point(a00, b00)?,
                    lift_point(a10, b10)?,
                    lift_point(a11, b11)?,
                ],
                multiplicity: 1.0,
            });
            simplices.push(Simplex {
                vertices: vec![
                    lift_point(a00, b00)?,
                    lift_point(a11, b11)?,
                    lift_point(a01, b01)?,
                ],
                multiplicity: 1.0,
            });
        }
    }
    DiscreteVarifold::new(chart, 2, simplices)
}

fn corner_direction(chart: &MetricChart, h_idx: usize) -> Result<Vector, VarifoldError> {
    let dim = chart.dim();
    for k in 1..dim {
        if k != h_idx {
            let mut v = DVector::zeros(dim);
            v[k] = 1.0;
            return Ok(v);
        }
    }
    Err(VarifoldError::UnsupportedDimension(dim))
}

/// Triangulated disk of the given radius in the plane spanned by `u, v`
/// around `center`, optionally pushed through a pointwise map.
pub fn disk_mesh(
    center: &Coords,
    u: &Vector,
    v: &Vector,
    radius: f64,
    rings: usize,
    sectors: usize,
    map: impl Fn(Coords) -> Coords,
) -> Vec<Simplex> {
    let vertex = |i: usize, j: usize| -> Coords {
        let r = radius * i as f64 / rings as f64;
        let th = 2.0 * std::f64::consts::PI * j as f64 / sectors as f64;
        map(center + u * (r * th.cos()) + v * (r * th.sin()))
    };
    let mut simplices = Vec::new();
    for j in 0..sectors {
        simplices.push(Simplex {
            vertices: vec![vertex(0, 0), vertex(1, j), vertex(1, (j + 1) % sectors)],
            multiplicity: 1.0,
        });
    }
    for i in 1..rings {
        for j in 0..sectors {
            let j1 = (j + 1) % sectors;
            simplices.push(Simplex {
                vertices: vec![vertex(i, j), vertex(i + 1, j), vertex(i + 1, j1)],
                multiplicity: 1.0,
            });
            simplices.push(Simplex {
                vertices: vec![vertex(i, j), vertex(i + 1, j1), vertex(i, j1)],
                multiplicity: 1.0,
            });
        }
    }
    simplices
}

/// Everything the maximum-principle experiment produced for one varifold.
#[derive(Debug, Clone)]
pub struct VariationOutcome {
    pub label: String,
    pub delta_v: f64,
    pub tau_neg: f64,
    pub mass: f64,
    pub richardson_rel: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub m: usize,
    pub eps: f64,
    pub lemma33: Lemma33Report,
    pub k_estimate: KEstimate,
    pub tangency_residual: f64,
    pub results: Vec<VariationOutcome>,
    pub verdict: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentParams {
    pub eps: f64,
    pub m: usize,
    pub delta: f64,
    pub sample_radius: f64,
    pub lemma33_samples: usize,
    pub k_samples: usize,
    pub tau_orth: f64,
    pub tau_conv: f64,
    pub tau_neg_factor: f64,
    pub varifold_extent: f64,
    pub varifold_subdiv: usize,
    pub seed: u64,
}

/// Build the test field of the barrier foliation and verify it strictly
/// decreases the area of touching test varifolds at the corner point.
/// Aborts with the name of the first failing precondition.
pub fn max_principle_experiment(
    domain: &ProperSubdomain,
    p: &[f64],
    params: &ExperimentParams,
    extra_varifolds: &[(String, DiscreteVarifold)],
) -> Result<ExperimentOutcome, VarifoldError> {
    let precondition = |check: &str, detail: String| VarifoldError::Precondition {
        check: check.to_string(),
        detail,
    };

    let orth = domain
        .check_orthogonality(params.tau_orth)
        .map_err(|e| precondition("orthogonality", e.to_string()))?;
    if !orth.pass {
        return Err(precondition(
            "orthogonality",
            format!(
                "residual {:.3e} above {:.1e}",
                orth.residual, params.tau_orth
            ),
        ));
    }

    let y_p = domain.surface().base_of(p);
    let conv = domain
        .surface()
        .strong_m_convexity(&y_p, params.m, params.tau_conv)
        .map_err(|e| precondition("strong_m_convexity", e.to_string()))?;
    if !conv.verdict {
        return Err(precondition(
            "strong_m_convexity",
            format!(
                "margin {:.3e} not above {:.1e}",
                conv.margin, params.tau_conv
            ),
        ));
    }

    let (barrier, _touching) = build_barrier(domain, params.eps)
        .map_err(|e| precondition("barrier_touching", e.to_string()))?;

    let fol = OrthogonalFoliation::new(barrier.surface.clone(), params.delta, params.tau_orth)
        .map_err(|e| precondition("foliation", e.to_string()))?;
    let cutoff = CutoffProfile::new(params.eps)?;

    let region = LeafRegion {
        radius: params.sample_radius,
        s_min: 0.0,
        s_max: (0.9 * params.eps).min(0.9 * params.delta),
    };
    let mut krng = stream_rng(params.seed, Stream::KEstimate);
    let ke = estimate_k(&fol, &region, params.k_samples, &mut krng)
        .map_err(|e| precondition("k_estimate", e.to_string()))?;
    let mut lrng = stream_rng(params.seed, Stream::Lemma33Samples);
    let lemma33 = verify_lemma33(
        &fol,
        &cutoff,
        params.m,
        &region,
        params.lemma33_samples,
        &mut lrng,
        Some(&ke),
        vec![],
    )?;
    if !lemma33.verdict {
        return Err(precondition(
            "lemma33",
            format!("worst trace {:.3e} not negative", lemma33.worst_trace),
        ));
    }

    let fol_ref = &fol;
    let cutoff_ref = &cutoff;
    let field_fn = move |x: &[f64]| -> Result<Vector, GeomError> {
        test_field_raw(fol_ref, cutoff_ref, x).map_err(|_| GeomError::OutsideDomain(x.to_vec()))
    };
    let field: Field<'_> = &field_fn;

    // tangentiality of X on boundary samples inside the support
    let mut brng = stream_rng(params.seed, Stream::BoundarySamples);
    let boundary = fol.sample_boundary(&region, 24, &mut brng)?;
    let tangency_residual = is_tangential(domain.chart(), field, &boundary)?;
    if tangency_residual > params.tau_orth.max(1e-3) {
        return Err(precondition(
            "tangential_field",
            format!("residual {:.3e}", tangency_residual),
        ));
    }

    let mut varifolds: Vec<(String, DiscreteVarifold)> = Vec::new();
    match params.m {
        1 => varifolds.push((
            "touching_segment".into(),
            touching_segment(domain, p, params.varifold_extent, params.varifold_subdiv)?,
        )),
        2 => varifolds.push((
            "touching_disk".into(),
            touching_disk(domain, p, params.varifold_extent, params.varifold_subdiv)?,
        )),
        m => return Err(VarifoldError::UnsupportedDimension(m)),
    }
    varifolds.extend(extra_varifolds.iter().cloned());

    let mut results = Vec::new();
    let mut verdict = true;
    for (label, v) in &varifolds {
        let report = first_variation(v, field)?;
        // sup of phi over the support of the varifold
        let mut sup_phi = 0.0_f64;
        for s in v.simplices() {
            for vert in &s.vertices {
                if let Ok(sv) = fol.s_raw(vert.as_slice()) {
                    sup_phi = sup_phi.max(cutoff.phi_ext(sv));
                }
            }
        }
        let tau_neg = params.tau_neg_factor * report.mass * sup_phi;
        let pass = report.total < -tau_neg;
        verdict &= pass;
        results.push(VariationOutcome {
            label: label.clone(),
            delta_v: report.total,
            tau_neg,
            mass: report.mass,
            richardson_rel: report.richardson_rel,
            pass,
        });
    }

    Ok(ExperimentOutcome {
        m: params.m,
        eps: params.eps,
        lemma33,
        k_estimate: ke,
        tangency_residual,
        results,
        verdict,
    })
}
