//! Desk-scale numerical verification of the geometry behind boundary maximum
//! principles for free-boundary minimal varieties.
//!
//! The crate is organised around the objects the verification needs:
//!
//! * [`expr`] — scalar expressions of coordinates used by scenario files,
//! * [`geometry`] — metric charts on half-space boxes with a numerical
//!   Levi-Civita connection, geodesics and Fermi coordinates,
//! * [`surfaces`] — graph hypersurfaces, shape operators and the
//!   orthogonality / strong convexity tests for proper sub-domains,
//! * [`foliation`] — orthogonal double foliations, leaf functions and
//!   adapted frames,
//! * [`barrier`] — barrier surfaces, cutoff profiles, the Q-form and its
//!   Grassmannian trace bounds,
//! * [`varifold`] — discrete rectifiable varifolds and first variations,
//! * [`scenario`] — the scenario runner producing reports and CSV sweeps.

pub mod expr;
pub mod fd;
pub mod rng;

pub mod geometry;
pub mod surfaces;

pub mod barrier;
pub mod foliation;
pub mod varifold;

pub mod scenario;

pub use geometry::{MetricChart, TangentVector};
pub use surfaces::{GraphHypersurface, ProperSubdomain};

/// Coordinates of a point in a chart.
pub type Coords = nalgebra::DVector<f64>;
/// Components of a vector (same length as the chart dimension).
pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
