//! Fermi-coordinate checks: identity on the flat half-space, the metric
//! gauge block, an independent distance oracle, round trips, and focal
//! detection.

use std::sync::Arc;

use nalgebra::DVector;

use fbmp::expr::Expression;
use fbmp::geometry::{fermi_chart, GeomError};
use fbmp::rng::{stream_rng, uniform, Stream};
use fbmp::{Coords, GraphHypersurface, MetricChart, Vector};

fn boundary_graph(chart: &Arc<MetricChart>) -> GraphHypersurface {
    // the boundary face {x1 = 0} as a graph with height index 1
    GraphHypersurface::new(
        chart.clone(),
        0,
        Expression::parse("0", 2).unwrap(),
        1.5,
        1.0,
    )
    .unwrap()
}

#[test]
fn flat_halfspace_fermi_is_the_identity() {
    let chart = Arc::new(
        MetricChart::euclidean(3, vec![0.0, -2.0, -2.0], vec![2.0; 3], true, 1e-5).unwrap(),
    );
    let h = boundary_graph(&chart);
    let fermi = fermi_chart(&h, &[0.0, 0.1, -0.2], 0.5).unwrap();
    for z in [[0.3, 0.2, -0.1], [0.0, 0.0, 0.0], [0.45, -0.3, 0.2]] {
        let x = fermi.from_fermi(&z).unwrap();
        let want = DVector::from_column_slice(&z);
        assert!((&x - &want).amax() < 1e-12, "forward map moved {z:?} to {x}");
        let back = fermi.to_fermi(x.as_slice()).unwrap();
        assert!((&back - &want).amax() < 1e-12);
    }
}

fn curved_setup() -> (Arc<MetricChart>, GraphHypersurface) {
    let factor = Expression::parse("1 + 0.1*x2^2 + 0.05*x1*x3", 3).unwrap();
    let chart = Arc::new(
        MetricChart::conformal(3, vec![-2.0; 3], vec![2.0; 3], false, factor, 1e-5).unwrap(),
    );
    let s = GraphHypersurface::new(
        chart.clone(),
        2,
        Expression::parse("0.1*x1^2 - 0.05*x2^2 + 0.02*x1*x2", 2).unwrap(),
        1.2,
        1.0,
    )
    .unwrap();
    (chart, s)
}

#[test]
fn pulled_back_metric_has_the_gauge_block() {
    let (_, s) = curved_setup();
    let p = s.embed(&[0.0, 0.0]).unwrap();
    let fermi = fermi_chart(&s, p.as_slice(), 0.35).unwrap();
    let mut rng = stream_rng(17, Stream::FermiSamples);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let z = [
            uniform(&mut rng, -0.25, 0.25),
            uniform(&mut rng, -0.25, 0.25),
            uniform(&mut rng, -0.25, 0.25),
        ];
        worst = worst.max(fermi.gauge_residual(&z).unwrap());
    }
    assert!(worst < 1e-4, "gauge residual {worst}");
}

#[test]
fn fermi_round_trip_is_stable() {
    let (_, s) = curved_setup();
    let p = s.embed(&[0.0, 0.0]).unwrap();
    let fermi = fermi_chart(&s, p.as_slice(), 0.35).unwrap();
    let mut rng = stream_rng(23, Stream::FermiSamples);
    for _ in 0..20 {
        let z = DVector::from_column_slice(&[
            uniform(&mut rng, -0.3, 0.3),
            uniform(&mut rng, -0.3, 0.3),
            uniform(&mut rng, -0.3, 0.3),
        ]);
        let x = fermi.from_fermi(z.as_slice()).unwrap();
        let back = fermi.to_fermi(x.as_slice()).unwrap();
        assert!((&back - &z).amax() < 1e-8, "round trip drift {}", (&back - &z).amax());
    }
}

// point-to-point geodesic distance by shooting: solve exp_a(v) = b for v
fn geodesic_distance(chart: &MetricChart, a: &[f64], b: &[f64]) -> f64 {
    let target = DVector::from_column_slice(b);
    let mut v: Vector = &target - DVector::from_column_slice(a);
    for _ in 0..8 {
        let endpoint = |vv: &Vector| -> Coords {
            chart
                .geodesic(a, vv, 1.0, 24)
                .expect("geodesic integrates")
                .endpoint()
                .position
                .clone()
        };
        let fx = endpoint(&v);
        let r = &fx - &target;
        if r.amax() < 1e-12 {
            break;
        }
        let mut jac = nalgebra::DMatrix::zeros(3, 3);
        for c in 0..3 {
            let mut vp = v.clone();
            vp[c] += 1e-6;
            jac.set_column(c, &((endpoint(&vp) - &fx) / 1e-6));
        }
        let delta = jac.lu().solve(&r).expect("jacobian solves");
        v -= delta;
    }
    chart.norm(a, &v).unwrap()
}

#[test]
fn signed_distance_matches_a_projection_descent_oracle() {
    let (chart, s) = curved_setup();
    let p = s.embed(&[0.0, 0.0]).unwrap();
    let fermi = fermi_chart(&s, p.as_slice(), 0.35).unwrap();

    let x_star = fermi.from_fermi(&[0.2, 0.1, -0.05]).unwrap();
    let d_fermi = fermi.signed_distance(x_star.as_slice()).unwrap();

    // independent oracle: minimize the geodesic length from x* to the
    // surface over the foot point, by Newton on the squared distance
    let dist_at = |y: &[f64]| -> f64 {
        let foot = s.embed(y).unwrap();
        geodesic_distance(&chart, foot.as_slice(), x_star.as_slice())
    };
    let mut y = s.base_of(x_star.as_slice());
    let h = 1e-4;
    for _ in 0..12 {
        // gradient and Hessian of dist(y) by central differences
        let mut grad = [0.0_f64; 2];
        let mut hess = nalgebra::Matrix2::zeros();
        let f0 = dist_at(&y);
        for i in 0..2 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let (fp, fm) = (dist_at(&yp), dist_at(&ym));
            grad[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        let mut ypp = y.clone();
        ypp[0] += h;
        ypp[1] += h;
        let mut ypm = y.clone();
        ypm[0] += h;
        ypm[1] -= h;
        let mut ymp = y.clone();
        ymp[0] -= h;
        ymp[1] += h;
        let mut ymm = y.clone();
        ymm[0] -= h;
        ymm[1] -= h;
        let cross =
            (dist_at(&ypp) - dist_at(&ypm) - dist_at(&ymp) + dist_at(&ymm)) / (4.0 * h * h);
        hess[(0, 1)] = cross;
        hess[(1, 0)] = cross;
        let g = nalgebra::Vector2::new(grad[0], grad[1]);
        let Some(step) = hess.lu().solve(&g) else { break };
        y[0] -= step[0];
        y[1] -= step[1];
        if step.amax() < 1e-12 {
            break;
        }
    }
    let d_oracle = dist_at(&y);
    assert!(
        (d_fermi.abs() - d_oracle).abs() < 1e-5,
        "fermi {d_fermi} vs oracle {d_oracle}"
    );
    assert!(d_fermi > 0.0, "point on the positive side");
}

#[test]
fn focal_points_are_detected() {
    // strongly curved bowl: normals focus at distance 1/4 above it
    let chart = Arc::new(
        MetricChart::euclidean(3, vec![-2.0; 3], vec![2.0; 3], false, 1e-5).unwrap(),
    );
    let s = GraphHypersurface::new(
        chart.clone(),
        2,
        Expression::parse("2*x1^2 + 2*x2^2", 2).unwrap(),
        1.0,
        1.0,
    )
    .unwrap();
    let p = s.embed(&[0.0, 0.0]).unwrap();
    assert!(matches!(
        fermi_chart(&s, p.as_slice(), 0.4),
        Err(GeomError::FocalPoint)
    ));
    // a small radius is fine
    assert!(fermi_chart(&s, p.as_slice(), 0.1).is_ok());
    // off-surface anchor points are rejected
    assert!(matches!(
        fermi_chart(&s, &[0.0, 0.0, 0.5], 0.1),
        Err(GeomError::NotOnSurface(_))
    ));
}
