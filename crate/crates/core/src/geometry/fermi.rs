//! Fermi coordinates relative to a graph hypersurface: the first coordinate
//! is the signed g-distance along normal geodesics, the rest are the base
//! coordinates of the foot point. The pulled-back metric has `g11 = 1` and
//! `g1j = 0` (Gauss lemma); the checks here validate the numerics, not the
//! lemma.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::chart::MetricChart;
use super::GeomError;
use crate::surfaces::GraphHypersurface;
use crate::{Coords, Matrix};

const GEODESIC_STEPS: usize = 24;
const NEWTON_ITERS: usize = 10;

/// A Fermi chart: the pulled-back metric chart plus both coordinate maps.
#[derive(Clone)]
pub struct FermiChart {
    surface: GraphHypersurface,
    radius: f64,
    chart: Arc<MetricChart>,
}

/// Build Fermi coordinates centered at `p` (a point on `h`) valid out to the
/// given radius. Fails when `p` misses the surface or the normal geodesics
/// focus within the radius.
pub fn fermi_chart(
    h: &GraphHypersurface,
    p: &[f64],
    radius: f64,
) -> Result<FermiChart, GeomError> {
    let chart = h.chart();
    let y_p = h.base_of(p);
    let on_surface = h
        .f_eval(&y_p)
        .map(|f| (p[h.height_index()] - f).abs() < 1e-8)
        .unwrap_or(false);
    if !on_surface {
        return Err(GeomError::NotOnSurface(p.to_vec()));
    }

    let dim = chart.dim();
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    lo.push(-radius);
    hi.push(radius);
    for v in &y_p {
        lo.push(v - radius);
        hi.push(v + radius);
    }

    let fermi = FermiChart {
        surface: h.clone(),
        radius,
        // placeholder; replaced below once the pullback closure can capture
        // a finished copy of the maps
        chart: chart.clone(),
    };
    fermi.check_focal(&y_p)?;

    let puller = fermi.clone();
    let metric = Arc::new(move |z: &[f64]| puller.pullback_metric(z));
    let pulled =
        MetricChart::numeric(dim, lo, hi, false, metric, chart.fd_step())?;

    Ok(FermiChart {
        surface: h.clone(),
        radius,
        chart: Arc::new(pulled),
    })
}

impl FermiChart {
    /// The chart in Fermi coordinates `(d, y)` with the pulled-back metric.
    pub fn chart(&self) -> &Arc<MetricChart> {
        &self.chart
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Map Fermi coordinates `(d, y)` to original chart coordinates: shoot
    /// the normal geodesic from the foot point for arc length `d`.
    pub fn from_fermi(&self, z: &[f64]) -> Result<Coords, GeomError> {
        let y = &z[1..];
        let d = z[0];
        let foot = self
            .surface
            .embed(y)
            .map_err(|_| GeomError::OutsideDomain(z.to_vec()))?;
        let nu = self
            .surface
            .unit_normal_at(foot.as_slice())
            .map_err(|_| GeomError::OutsideDomain(z.to_vec()))?;
        if d == 0.0 {
            return Ok(foot);
        }
        let path = self.surface.chart().geodesic_unclamped(
            foot.as_slice(),
            &nu.components,
            d,
            GEODESIC_STEPS,
        )?;
        Ok(path.endpoint().position.clone())
    }

    /// Invert the normal-exponential map at `x` by Newton iteration.
    pub fn to_fermi(&self, x: &[f64]) -> Result<Coords, GeomError> {
        let h = &self.surface;
        let y0 = h.base_of(x);
        let f0 = h
            .f_eval(&y0)
            .map_err(|_| GeomError::OutsideDomain(x.to_vec()))?;
        let dim = h.chart().dim();
        let mut z = DVector::zeros(dim);
        z[0] = (x[h.height_index()] - f0) * h.orientation();
        for (k, v) in y0.iter().enumerate() {
            z[k + 1] = *v;
        }

        let target = DVector::from_column_slice(x);
        let fd = 1e-6;
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_ITERS {
            let fx = self.from_fermi(z.as_slice())?;
            let r = &fx - &target;
            residual = r.amax();
            if residual < 1e-12 {
                break;
            }
            let mut jac = DMatrix::zeros(dim, dim);
            for c in 0..dim {
                let mut zp = z.clone();
                zp[c] += fd;
                let fp = self.from_fermi(zp.as_slice())?;
                jac.set_column(c, &((&fp - &fx) / fd));
            }
            let delta = jac
                .lu()
                .solve(&r)
                .ok_or(GeomError::InversionDiverged { residual })?;
            z -= delta;
        }
        if residual > 1e-8 {
            return Err(GeomError::InversionDiverged { residual });
        }
        Ok(z)
    }

    /// Pulled-back metric `J^T g J` at Fermi coordinates `z`.
    fn pullback_metric(&self, z: &[f64]) -> Matrix {
        let dim = self.surface.chart().dim();
        let fallback = DMatrix::identity(dim, dim);
        let Ok(x) = self.from_fermi(z) else {
            return fallback;
        };
        let Ok(g) = self.surface.chart().metric_at(x.as_slice()) else {
            return fallback;
        };
        let fd = 1e-6;
        let mut jac = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[c] += fd;
            zm[c] -= fd;
            let (Ok(fp), Ok(fm)) = (self.from_fermi(&zp), self.from_fermi(&zm)) else {
                return fallback;
            };
            jac.set_column(c, &((fp - fm) / (2.0 * fd)));
        }
        jac.transpose() * g * jac
    }

    // Focal points show up as a sign change of the normal-exponential
    // Jacobian determinant along a ray.
    fn check_focal(&self, y_p: &[f64]) -> Result<(), GeomError> {
        let n = self.surface.base_dim();
        let mut bases = vec![y_p.to_vec()];
        for k in 0..n {
            for s in [-1.0, 1.0] {
                let mut y = y_p.to_vec();
                y[k] += s * 0.5 * self.radius;
                if self.surface.in_half_ball(&y) {
                    bases.push(y);
                }
            }
        }
        let fd = 1e-6;
        let dim = self.surface.chart().dim();
        for y in &bases {
            let mut prev_sign = 0.0;
            for i in -4..=4 {
                let d = self.radius * i as f64 / 4.0;
                let mut z = vec![d];
                z.extend_from_slice(y);
                let mut jac = DMatrix::zeros(dim, dim);
                let f0 = self.from_fermi(&z)?;
                for c in 0..dim {
                    let mut zp = z.clone();
                    zp[c] += fd;
                    let fp = self.from_fermi(&zp)?;
                    jac.set_column(c, &((fp - &f0) / fd));
                }
                let det = jac.determinant();
                let sign = det.signum();
                if det.abs() < 1e-10 || (prev_sign != 0.0 && sign != prev_sign) {
                    return Err(GeomError::FocalPoint);
                }
                prev_sign = sign;
            }
        }
        Ok(())
    }

    /// Signed distance of `x` to the surface (the first Fermi coordinate).
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64, GeomError> {
        Ok(self.to_fermi(x)?[0])
    }

    #[allow(dead_code)]
    pub(crate) fn surface(&self) -> &GraphHypersurface {
        &self.surface
    }

    /// Gauss-lemma residual at Fermi coordinates `z`: max of `|g11 - 1|`
    /// and `|g1j|` in the pulled-back metric.
    pub fn gauge_residual(&self, z: &[f64]) -> Result<f64, GeomError> {
        let g = self.chart.metric_at(z)?;
        let mut r: f64 = (g[(0, 0)] - 1.0).abs();
        for j in 1..self.chart.dim() {
            r = r.max(g[(0, j)].abs());
        }
        Ok(r)
    }
}

impl std::fmt::Debug for FermiChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FermiChart")
            .field("radius", &self.radius)
            .finish()
    }
}
