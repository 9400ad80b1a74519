//! Riemannian metric charts on half-space boxes.
//!
//! A chart is an axis-aligned box, optionally intersected with the half
//! space `x1 >= 0` whose face `{x1 = 0}` models the ambient boundary. The
//! metric is a symmetric matrix of expressions (or a numeric closure for
//! derived charts such as induced or Fermi metrics). All derivatives of the
//! metric are finite differences with step `fd_step`, switching to one-sided
//! stencils within a step of the boundary face.

mod chart;
mod fermi;
mod geodesic;

pub use chart::{FdPolicy, MetricChart, MetricField, TangentVector, DEFAULT_FD_STEP};
pub use fermi::{fermi_chart, FermiChart};
pub use geodesic::{GeodesicExit, GeodesicPath, GeodesicSample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("chart dimension {0} outside supported range 2..=8")]
    BadDimension(usize),
    #[error("domain box is malformed: lo {lo} >= hi {hi} on axis {axis}")]
    BadBox { axis: usize, lo: f64, hi: f64 },
    #[error("metric expression error: {0}")]
    Expr(#[from] crate::expr::ExprError),
    #[error("metric matrix must be {dim}x{dim}, got row of length {got}")]
    BadMetricShape { dim: usize, got: usize },
    #[error("point {0:?} lies outside the chart domain")]
    OutsideDomain(Vec<f64>),
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("vector length {got} does not match chart dimension {dim}")]
    BadVectorLength { dim: usize, got: usize },
    #[error("geodesic exits the domain immediately at t = 0")]
    ImmediateExit,
    #[error("geodesic speed drifted by {drift:.3e} (relative), integration unreliable")]
    SpeedDrift { drift: f64 },
    #[error("geodesic needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("rank deficiency during orthonormalization: pivot {pivot:.3e} below 1e-10")]
    RankDeficient { pivot: f64 },
    #[error("chart has no boundary face (half-space flag not set)")]
    NoBoundary,
    #[error("point {0:?} does not lie on the reference hypersurface")]
    NotOnSurface(Vec<f64>),
    #[error("focal point detected: normal-exponential Jacobian changes sign along a ray")]
    FocalPoint,
    #[error("coordinate inversion did not converge (residual {residual:.3e})")]
    InversionDiverged { residual: f64 },
}
