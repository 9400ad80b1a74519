//! Scenario files, the check pipeline, reports and parameter sweeps.
//!
//! A scenario is a JSON description of a chart, a surface, a corner point
//! and verification parameters. `run` executes the requested checks in
//! dependency order and produces a machine-readable report; `sweep` varies
//! one parameter and writes a CSV row per value. All sampling derives from
//! the scenario seed, so a fixed seed reproduces reports byte for byte
//! (timing excluded).

mod checks;
mod sweep;

pub use checks::{run_checks, run_to_dir, CheckResult, Report, Verdict, Witness, CHECK_ORDER};
pub use sweep::{sweep, SweepParam};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, Expression};
use crate::geometry::{GeomError, MetricChart, DEFAULT_FD_STEP};
use crate::rng::{stream_rng, uniform, Stream};
use crate::surfaces::{GraphHypersurface, SurfaceError};
use crate::varifold::{DiscreteVarifold, Simplex, VarifoldError};
use crate::Coords;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Varifold(#[from] VarifoldError),
    #[error(transparent)]
    Foliation(#[from] crate::foliation::FoliationError),
    #[error(transparent)]
    Barrier(#[from] crate::barrier::BarrierError),
    #[error("scenario invalid: {0}")]
    Validation(String),
    #[error("unknown check `{0}`; run lists the valid names")]
    UnknownCheck(String),
    #[error("unknown sweep parameter `{0}` (expected epsilon, fd_step or refine)")]
    UnknownParam(String),
    #[error("sweep value list is empty or non-positive")]
    BadSweepValues,
}

fn default_seed() -> u64 {
    1
}
fn default_m() -> Vec<usize> {
    vec![1]
}
fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn default_orientation() -> i8 {
    1
}
fn one() -> f64 {
    1.0
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub chart: ChartSpec,
    pub surface: SurfaceSpec,
    /// Corner point on `S ∩ T` (chart coordinates).
    pub corner: Vec<f64>,
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Foliation half-width; default `0.1 * r0`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Radius of the sampling neighborhood around the corner;
    /// default `0.5 * delta`.
    #[serde(default)]
    pub sample_radius: Option<f64>,
    #[serde(default)]
    pub samples: SampleCounts,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub varifolds: Vec<VarifoldSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartSpec {
    pub dim: usize,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    pub half_space: bool,
    pub metric: MetricSpec,
    #[serde(default)]
    pub fd_step: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    Identity,
    Conformal { factor: String },
    /// Upper triangle rows: row `i` holds `g_{i,i} .. g_{i,dim}`.
    Matrix { upper: Vec<Vec<String>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceSpec {
    /// Expression over the base coordinates in ascending chart order.
    pub f: String,
    pub r0: f64,
    #[serde(default = "default_orientation")]
    pub orientation: i8,
    /// 1-based height coordinate; defaults to the last one.
    #[serde(default)]
    pub height_index: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleCounts {
    pub corner: usize,
    pub boundary: usize,
    pub foliation: usize,
    pub frame_identity: usize,
    pub lemma33: usize,
    pub k_estimate: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            corner: 48,
            boundary: 32,
            foliation: 12,
            frame_identity: 16,
            lemma33: 32,
            k_estimate: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub tau_orth: f64,
    pub tau_conv: f64,
    pub tau_neg_factor: f64,
    /// Tolerance for the boundary checks of the foliation (`psi = 1`,
    /// leaf tangency, gradient parallelism).
    pub tau_psi: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tau_orth: 1e-6,
            tau_conv: 1e-8,
            tau_neg_factor: 1e-8,
            tau_psi: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarifoldSpec {
    /// Generated touching segment at the corner (m = 1).
    Segment { extent: f64, subdiv: usize },
    /// Generated touching half-disk at the corner (m = 2).
    Disk { radius: f64, subdiv: usize },
    /// Explicit simplex list.
    Explicit {
        m: usize,
        simplices: Vec<SimplexSpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexSpec {
    pub vertices: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub multiplicity: f64,
}

/// A validated scenario with parsed expressions and derived defaults.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub chart: Arc<MetricChart>,
    pub surface: GraphHypersurface,
    pub corner: Coords,
    pub delta: f64,
    pub sample_radius: f64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Scenario::build(file)
    }

    pub fn build(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
        let dim = file.chart.dim;
        if file.chart.bounds.len() != dim {
            return Err(ScenarioError::Validation(format!(
                "box has {} axes for dimension {}",
                file.chart.bounds.len(),
                dim
            )));
        }
        let lo: Vec<f64> = file.chart.bounds.iter().map(|b| b[0]).collect();
        let hi: Vec<f64> = file.chart.bounds.iter().map(|b| b[1]).collect();
        let fd_step = file.chart.fd_step.unwrap_or(DEFAULT_FD_STEP);
        if fd_step <= 0.0 {
            return Err(ScenarioError::Validation("fd_step must be positive".into()));
        }

        let chart = match &file.chart.metric {
            MetricSpec::Identity => {
                MetricChart::euclidean(dim, lo, hi, file.chart.half_space, fd_step)?
            }
            MetricSpec::Conformal { factor } => {
                let f = Expression::parse(factor, dim)?;
                MetricChart::conformal(dim, lo, hi, file.chart.half_space, f, fd_step)?
            }
            MetricSpec::Matrix { upper } => {
                let mut rows = Vec::with_capacity(upper.len());
                for row in upper {
                    rows.push(
                        row.iter()
                            .map(|s| Expression::parse(s, dim))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                MetricChart::from_upper_exprs(dim, lo, hi, file.chart.half_space, rows, fd_step)?
            }
        };
        let chart = Arc::new(chart);

        // the metric must be positive definite where we sample
        let mut rng = stream_rng(file.seed, Stream::MetricAudit);
        for _ in 0..32 {
            let x: Vec<f64> = (0..dim)
                .map(|k| uniform(&mut rng, chart.lo()[k].max(-10.0), chart.hi()[k].min(10.0)))
                .collect();
            chart.metric_inv(&x)?;
        }

        let height_index = match file.surface.height_index {
            Some(h) if h >= 1 && h <= dim => h - 1,
            Some(h) => {
                return Err(ScenarioError::Validation(format!(
                    "height_index {h} out of 1..={dim}"
                )))
            }
            None => dim - 1,
        };
        let f = Expression::parse(&file.surface.f, dim - 1)?;
        let surface = GraphHypersurface::new(
            chart.clone(),
            height_index,
            f,
            file.surface.r0,
            file.surface.orientation as f64,
        )?;

        if file.corner.len() != dim {
            return Err(ScenarioError::Validation(format!(
                "corner point has {} coordinates for dimension {}",
                file.corner.len(),
                dim
            )));
        }
        let corner = Coords::from_column_slice(&file.corner);
        let y = surface.base_of(corner.as_slice());
        let miss = corner[0]
            .abs()
            .max((corner[height_index] - surface.f_eval(&y)?).abs());
        if miss > 1e-8 {
            return Err(ScenarioError::Validation(format!(
                "corner point misses S ∩ T by {miss:.3e}"
            )));
        }

        for &m in &file.m {
            if m < 1 || m >= dim {
                return Err(ScenarioError::Validation(format!(
                    "m = {m} out of 1..={}",
                    dim - 1
                )));
            }
        }
        if file.epsilons.is_empty() || file.epsilons.iter().any(|&e| e <= 0.0) {
            return Err(ScenarioError::Validation(
                "epsilons must be nonempty and positive".into(),
            ));
        }

        let delta = file.delta.unwrap_or(0.1 * file.surface.r0);
        let sample_radius = file.sample_radius.unwrap_or(0.5 * delta);
        if delta <= 0.0 || sample_radius <= 0.0 {
            return Err(ScenarioError::Validation(
                "delta and sample_radius must be positive".into(),
            ));
        }

        Ok(Scenario {
            file,
            chart,
            surface,
            corner,
            delta,
            sample_radius,
        })
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    /// Smallest configured eps: the one the trace and variation checks use.
    pub fn main_eps(&self) -> f64 {
        self.file
            .epsilons
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Explicit varifolds of dimension `m` from the scenario file.
    pub fn explicit_varifolds(&self, m: usize) -> Result<Vec<(String, DiscreteVarifold)>, ScenarioError> {
        let mut out = Vec::new();
        for (i, spec) in self.file.varifolds.iter().enumerate() {
            if let VarifoldSpec::Explicit { m: vm, simplices } = spec {
                if *vm != m {
                    continue;
                }
                let simplices = simplices
                    .iter()
                    .map(|s| Simplex {
                        vertices: s
                            .vertices
                            .iter()
                            .map(|v| Coords::from_column_slice(v))
                            .collect(),
                        multiplicity: s.multiplicity,
                    })
                    .collect();
                out.push((
                    format!("explicit_{i}"),
                    DiscreteVarifold::new(self.chart.clone(), m, simplices)?,
                ));
            }
        }
        Ok(out)
    }

    /// Generator parameters for the touching varifold of dimension `m`,
    /// falling back to scale-appropriate defaults.
    pub fn touching_params(&self, m: usize) -> (f64, usize) {
        for spec in &self.file.varifolds {
            match (m, spec) {
                (1, VarifoldSpec::Segment { extent, subdiv }) => return (*extent, *subdiv),
                (2, VarifoldSpec::Disk { radius, subdiv }) => return (*radius, *subdiv),
                _ => {}
            }
        }
        (self.sample_radius.min(0.8 * self.delta), 10)
    }
}

/// Deterministic map from residual labels to values for the report.
pub type Residuals = BTreeMap<String, f64>;
