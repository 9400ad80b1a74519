use nalgebra::DVector;

use super::chart::MetricChart;
use super::GeomError;
use crate::{Coords, Vector};

#[derive(Debug, Clone)]
pub struct GeodesicSample {
    pub time: f64,
    pub position: Coords,
    pub velocity: Vector,
}

#[derive(Debug, Clone)]
pub struct GeodesicExit {
    pub time: f64,
    pub position: Coords,
}

/// A numerically integrated geodesic. The g-speed is constant along the
/// exact flow; `max_speed_drift` records how far the integrator strayed.
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    pub exit: Option<GeodesicExit>,
    pub initial_speed: f64,
    pub max_speed_drift: f64,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> &GeodesicSample {
        self.samples.last().expect("path has at least one sample")
    }
}

impl MetricChart {
    /// Integrate `x'' + Gamma(x', x') = 0` with classic fourth-order
    /// Runge-Kutta. Integration halts (and records the exit) if the path
    /// leaves the chart domain; a relative g-speed drift above 1e-3 is
    /// treated as blow-up.
    pub fn geodesic(
        &self,
        x0: &[f64],
        v0: &Vector,
        total_time: f64,
        steps: usize,
    ) -> Result<GeodesicPath, GeomError> {
        if steps < 2 {
            return Err(GeomError::TooFewSteps(steps));
        }
        self.check_in_domain(x0)?;
        let mut path = self.integrate_geodesic(x0, v0, total_time, steps, true)?;
        let initial = path.initial_speed;
        if initial > 0.0 && path.max_speed_drift > 1e-3 {
            return Err(GeomError::SpeedDrift {
                drift: path.max_speed_drift,
            });
        }
        // exited before completing a single step: no usable path
        if path.exit.is_some() && path.samples.len() == 1 {
            return Err(GeomError::ImmediateExit);
        }
        path.samples.shrink_to_fit();
        Ok(path)
    }

    /// Same integrator without the domain clamp; used by Fermi charts and
    /// foliation internals whose stencils extend smoothly past the box.
    pub(crate) fn geodesic_unclamped(
        &self,
        x0: &[f64],
        v0: &Vector,
        total_time: f64,
        steps: usize,
    ) -> Result<GeodesicPath, GeomError> {
        self.integrate_geodesic(x0, v0, total_time, steps, false)
    }

    fn integrate_geodesic(
        &self,
        x0: &[f64],
        v0: &Vector,
        total_time: f64,
        steps: usize,
        clamp: bool,
    ) -> Result<GeodesicPath, GeomError> {
        let dim = self.dim();
        let accel = |x: &DVector<f64>, v: &DVector<f64>| -> Result<Vector, GeomError> {
            let gamma = self.christoffel(x.as_slice())?;
            let mut a = DVector::zeros(dim);
            for k in 0..dim {
                a[k] = -(v.transpose() * &gamma[k] * v)[(0, 0)];
            }
            Ok(a)
        };

        let mut x = DVector::from_column_slice(x0);
        let mut v = v0.clone();
        let dt = total_time / steps as f64;
        let initial_speed = self.norm(x0, v0)?;
        let mut max_drift = 0.0_f64;
        let mut samples = vec![GeodesicSample {
            time: 0.0,
            position: x.clone(),
            velocity: v.clone(),
        }];
        let mut exit = None;

        for step in 0..steps {
            let t = step as f64 * dt;
            let k1x = v.clone();
            let k1v = accel(&x, &v)?;
            let k2x = &v + &k1v * (dt / 2.0);
            let k2v = accel(&(&x + &k1x * (dt / 2.0)), &k2x)?;
            let k3x = &v + &k2v * (dt / 2.0);
            let k3v = accel(&(&x + &k2x * (dt / 2.0)), &k3x)?;
            let k4x = &v + &k3v * dt;
            let k4v = accel(&(&x + &k3x * dt), &k4x)?;

            x += (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (dt / 6.0);
            v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);

            if clamp && !self.contains(x.as_slice()) {
                exit = Some(GeodesicExit {
                    time: t + dt,
                    position: x.clone(),
                });
                break;
            }
            if initial_speed > 0.0 {
                let speed = self.norm(x.as_slice(), &v)?;
                max_drift = max_drift.max(((speed - initial_speed) / initial_speed).abs());
            }
            samples.push(GeodesicSample {
                time: t + dt,
                position: x.clone(),
                velocity: v.clone(),
            });
        }

        Ok(GeodesicPath {
            samples,
            exit,
            initial_speed,
            max_speed_drift: max_drift,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;

    #[test]
    fn flat_geodesics_are_straight_lines() {
        let chart =
            MetricChart::euclidean(3, vec![-2.0; 3], vec![2.0; 3], false, 1e-5).unwrap();
        let v0 = DVector::from_column_slice(&[0.3, -0.2, 0.1]);
        let path = chart.geodesic(&[0.0, 0.1, 0.0], &v0, 2.0, 64).unwrap();
        let end = path.endpoint();
        let expected = DVector::from_column_slice(&[0.6, -0.3, 0.2]);
        assert!((&end.position - expected).amax() < 1e-12);
        assert!(path.exit.is_none());
        assert!(path.max_speed_drift < 1e-12);
    }

    #[test]
    fn speed_is_conserved_on_curved_charts() {
        let factor = Expression::parse("1 + 0.1*x2^2", 2).unwrap();
        let chart =
            MetricChart::conformal(2, vec![-3.0; 2], vec![3.0; 2], false, factor, 1e-5).unwrap();
        let v0 = DVector::from_column_slice(&[0.5, 0.4]);
        let path = chart.geodesic(&[0.0, 0.2], &v0, 1.5, 200).unwrap();
        let end = path.endpoint();
        let s0 = chart.norm(&[0.0, 0.2], &v0).unwrap();
        let s1 = chart.norm(end.position.as_slice(), &end.velocity).unwrap();
        assert!(((s1 - s0) / s0).abs() < 1e-8);
    }

    #[test]
    fn conformal_geodesic_self_converges() {
        let factor = Expression::parse("1 + 0.1*x2^2", 2).unwrap();
        let chart =
            MetricChart::conformal(2, vec![-3.0; 2], vec![3.0; 2], false, factor, 1e-5).unwrap();
        let v0 = DVector::from_column_slice(&[0.6, 0.3]);
        let coarse = chart.geodesic(&[0.0, 0.1], &v0, 1.0, 100).unwrap();
        let fine = chart.geodesic(&[0.0, 0.1], &v0, 1.0, 1000).unwrap();
        let d = (&coarse.endpoint().position - &fine.endpoint().position).amax();
        assert!(d < 1e-7, "self-convergence gap {d}");
    }

    #[test]
    fn exits_are_reported() {
        let chart =
            MetricChart::euclidean(2, vec![0.0, -1.0], vec![1.0, 1.0], true, 1e-5).unwrap();
        let v0 = DVector::from_column_slice(&[-1.0, 0.0]);
        let path = chart.geodesic(&[0.5, 0.0], &v0, 2.0, 100).unwrap();
        assert!(path.exit.is_some());
        // starting outside fails immediately
        assert!(matches!(
            chart.geodesic(&[-0.5, 0.0], &v0, 1.0, 10),
            Err(GeomError::OutsideDomain(_))
        ));
        // starting on the boundary face heading out exits at once
        assert!(matches!(
            chart.geodesic(&[0.0, 0.0], &v0, 1.0, 10),
            Err(GeomError::ImmediateExit)
        ));
    }
}
