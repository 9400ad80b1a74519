//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line with its key numbers (`cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance below is pinned in code; the bundled scenarios provide
//! the geometry.

mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use common::{ref_eval, CORPUS, CORPUS_POINTS};
use fbmp::barrier::{
    build_barrier, extreme_trace_m, lemma34_grid_max, lemma34_max, test_field, verify_lemma33,
    CutoffProfile, Lemma34Profile,
};
use fbmp::expr::Expression;
use fbmp::foliation::{LeafRegion, OrthogonalFoliation};
use fbmp::rng::{stream_rng, uniform, Stream};
use fbmp::scenario::{run_checks, Scenario};
use fbmp::surfaces::{sample_corner, ProperSubdomain};
use fbmp::varifold::{
    disk_mesh, first_variation, max_principle_experiment, stationarity_residual, BoxedField,
    DiscreteVarifold, ExperimentParams, Simplex,
};
use fbmp::{Coords, MetricChart, Vector};

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    Scenario::load(&path).unwrap()
}

fn pass_line(criterion: &str, detail: String) {
    println!("acceptance {criterion}: PASS — {detail}");
}

// criterion 1: the adapted-frame identity on cap_corner, with first-order
// convergence of the median residual under fd_step halving, in under 30 s.
#[test]
fn criterion_1_frame_identity() {
    let start = Instant::now();
    let base_scenario = scenario("cap_corner.json");
    let seed = base_scenario.seed();

    let residuals_at = |fd: f64| -> Vec<f64> {
        let mut file = base_scenario.file.clone();
        file.chart.fd_step = Some(fd);
        let sc = Scenario::build(file).unwrap();
        let fol = OrthogonalFoliation::new(sc.surface.clone(), sc.delta, 1e-6).unwrap();
        let region = LeafRegion {
            radius: sc.sample_radius,
            s_min: -0.5 * sc.delta,
            s_max: 0.5 * sc.delta,
        };
        let mut rng = stream_rng(seed, Stream::FoliationSamples);
        let points = fol.sample_region(&region, 100, &mut rng).unwrap();
        points
            .par_iter()
            .map(|q| fol.frame_identity_residual(q.as_slice(), 2).unwrap())
            .collect()
    };

    let fd = 1e-5;
    let coarse = residuals_at(fd);
    let fine = residuals_at(fd / 2.0);
    assert_eq!(coarse.len(), 100);
    for (i, r) in coarse.iter().enumerate() {
        assert!(*r < 1e-3, "residual {r} at sample {i} exceeds 1e-3");
    }
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s[s.len() / 2]
    };
    let (m1, m2) = (median(&coarse), median(&fine));
    let ratio = m1 / m2;
    assert!(
        ratio >= 1.7,
        "median residual ratio {ratio} under fd_step halving below 1.7 ({m1} -> {m2})"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "criterion 1 took {elapsed:?}");
    pass_line(
        "1 (frame identity)",
        format!(
            "100 points, median {:.3e} -> {:.3e} (ratio {:.2}), {:.1?}",
            m1, m2, ratio, elapsed
        ),
    );
}

// criterion 2: psi = 1 and grad s parallel to the normal on boundary
// samples, within 1e-6 on the flat control and 1e-3 on the curved caps.
#[test]
fn criterion_2_leaf_gradient() {
    let cases = [
        ("flat_halfspace.json", 1e-6),
        ("cap_corner.json", 1e-3),
        ("conformal_cap.json", 1e-3),
    ];
    let mut summary = Vec::new();
    for (name, tol) in cases {
        let sc = scenario(name);
        let fol = OrthogonalFoliation::new(sc.surface.clone(), sc.delta, sc.file.tolerances.tau_orth)
            .unwrap();
        let region = LeafRegion {
            radius: sc.sample_radius,
            s_min: -0.5 * sc.delta,
            s_max: 0.5 * sc.delta,
        };
        let mut rng = stream_rng(sc.seed(), Stream::BoundarySamples);
        let samples = fol.sample_boundary(&region, 32, &mut rng).unwrap();
        let mut psi_dev = 0.0_f64;
        let mut grad_res = 0.0_f64;
        for q in &samples {
            let p = fol.psi(q.as_slice()).unwrap();
            psi_dev = psi_dev.max((p.value - 1.0).abs());
            grad_res = grad_res.max(p.residual);
        }
        assert!(psi_dev < tol, "{name}: |psi - 1| = {psi_dev} >= {tol}");
        assert!(grad_res < tol, "{name}: |grad s - psi nu| = {grad_res} >= {tol}");
        summary.push(format!("{name} psi {psi_dev:.2e} grad {grad_res:.2e}"));
    }
    pass_line("2 (leaf gradient)", summary.join("; "));
}

// criterion 3: the closed-form profile maximum against a refined grid
// search, strict decrease in eps, and the small-eps limit.
#[test]
fn criterion_3_calculus_profile() {
    let (k, n) = (1.0, 3);
    let mut prev = f64::INFINITY;
    let mut gaps = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let (_, f_star) = lemma34_max(k, n, eps).unwrap();
        let oracle = lemma34_grid_max(&Lemma34Profile { k, n, eps }, 1e-4);
        let gap = (f_star - oracle).abs();
        assert!(gap < 1e-8, "eps {eps}: closed-form vs grid gap {gap}");
        assert!(f_star < prev, "F* not strictly decreasing at eps {eps}");
        prev = f_star;
        gaps.push(gap);
    }
    let (_, f_small) = lemma34_max(k, n, 0.02).unwrap();
    assert!(f_small < 1e-2, "F*(0.02) = {f_small} not below 1e-2");
    pass_line(
        "3 (calculus profile)",
        format!(
            "grid gaps {:.1e}/{:.1e}/{:.1e}, F*(0.02) = {:.3e}",
            gaps[0], gaps[1], gaps[2], f_small
        ),
    );
}

// criterion 4: eigenvalue trace extremization vs Monte-Carlo sampling of
// 1e5 m-planes per matrix, and exactness on diagonal matrices.
#[test]
fn criterion_4_trace_extremization() {
    let size = 6;
    let mut rng = stream_rng(424242, Stream::TraceOracle);
    let mut matrices = Vec::new();
    for _ in 0..20 {
        let q = DMatrix::from_fn(size, size, |_, _| uniform(&mut rng, -0.5, 0.5));
        // per-matrix substream keyed by fresh draws keeps sampling
        // deterministic regardless of evaluation order
        let sub_seed = (uniform(&mut rng, 0.0, 1.0) * 1e9) as u64;
        matrices.push((q, sub_seed));
    }

    let worst_gap = matrices
        .par_iter()
        .map(|(q, sub_seed)| {
            let mut worst = 0.0_f64;
            for m in 1..size {
                let (_, analytic_max) = extreme_trace_m(q, m).unwrap();
                let trace_of = |frame: &[Vector]| -> f64 {
                    frame.iter().map(|v| (v.transpose() * q * v)[(0, 0)]).sum()
                };
                // 1e5 random frames: half Haar-uniform, half drawn as
                // shrinking random perturbations of the best frame so far
                let mut srng = stream_rng(*sub_seed, Stream::TraceOracle);
                let mut best_frame = random_orthonormal_frame(size, m, &mut srng);
                let mut mc = trace_of(&best_frame);
                for _ in 1..50_000 {
                    let frame = random_orthonormal_frame(size, m, &mut srng);
                    let tr = trace_of(&frame);
                    if tr > mc {
                        mc = tr;
                        best_frame = frame;
                    }
                }
                for k in 0..50_000 {
                    let sigma = 0.5 * (2e-4_f64 / 0.5).powf(k as f64 / 50_000.0);
                    let frame = perturbed_frame(&best_frame, sigma, &mut srng);
                    let tr = trace_of(&frame);
                    if tr > mc {
                        mc = tr;
                        best_frame = frame;
                    }
                }
                assert!(
                    analytic_max >= mc - 1e-12,
                    "sampled trace {mc} above the analytic max {analytic_max}"
                );
                let gap = analytic_max - mc;
                assert!(gap < 5e-2, "m={m}: Monte-Carlo gap {gap}");
                worst = worst.max(gap);
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    // exact agreement for diagonal matrices
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&[
        -2.0, -0.5, 0.0, 0.3, 1.1, 4.0,
    ]));
    for m in 1..=6usize {
        let (lo, hi) = extreme_trace_m(&diag, m).unwrap();
        let entries = [-2.0, -0.5, 0.0, 0.3, 1.1, 4.0];
        let want_lo: f64 = entries.iter().take(m).sum();
        let want_hi: f64 = entries.iter().rev().take(m).sum();
        assert!((lo - want_lo).abs() < 1e-10 && (hi - want_hi).abs() < 1e-10);
    }
    pass_line(
        "4 (trace extremization)",
        format!("20 matrices x m in 1..5, worst Monte-Carlo gap {worst_gap:.3e}"),
    );
}

fn gaussian_vector(dim: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vector {
    let mut v = DVector::zeros(dim);
    for k in 0..dim {
        // Box-Muller keeps the frame distribution rotation-invariant
        let u1: f64 = uniform(rng, 1e-12, 1.0);
        let u2: f64 = uniform(rng, 0.0, 1.0);
        v[k] = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
    v
}

fn random_orthonormal_frame(
    dim: usize,
    m: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vector> {
    let mut frame: Vec<Vector> = Vec::with_capacity(m);
    while frame.len() < m {
        let mut v = gaussian_vector(dim, rng);
        for e in &frame {
            let c = e.dot(&v);
            v -= e * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            frame.push(v / n);
        }
    }
    frame
}

fn perturbed_frame(
    base: &[Vector],
    sigma: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vector> {
    let dim = base[0].len();
    let mut frame: Vec<Vector> = Vec::with_capacity(base.len());
    for b in base {
        let mut v = b + gaussian_vector(dim, rng) * sigma;
        for e in &frame {
            let c = e.dot(&v);
            v -= e * c;
        }
        let n = v.norm();
        if n > 1e-8 {
            frame.push(v / n);
        } else {
            return random_orthonormal_frame(dim, base.len(), rng);
        }
    }
    frame
}

// criterion 5: strictly negative m-traces on cap_corner for m in {1, 2} at
// eps = 0.05, the flat control failing at exactly zero, in under 60 s.
#[test]
fn criterion_5_trace_negativity() {
    let start = Instant::now();
    let sc = scenario("cap_corner.json");
    let mut crng = stream_rng(sc.seed(), Stream::CornerSamples);
    let corner = sample_corner(&sc.surface, 16, sc.sample_radius, &mut crng).unwrap();
    let domain = ProperSubdomain::new(sc.surface.clone(), 1, corner).unwrap();
    let eps = 0.05;
    let (barrier, _) = build_barrier(&domain, eps).unwrap();
    let fol = OrthogonalFoliation::new(barrier.surface.clone(), sc.delta, 1e-6).unwrap();
    let cutoff = CutoffProfile::new(eps).unwrap();
    let region = LeafRegion {
        radius: sc.sample_radius,
        s_min: 0.0,
        s_max: 0.9 * eps,
    };
    let mut worsts = Vec::new();
    for m in [1usize, 2] {
        let mut rng = stream_rng(sc.seed(), Stream::Lemma33Samples);
        let report =
            verify_lemma33(&fol, &cutoff, m, &region, 32, &mut rng, None, vec![]).unwrap();
        assert!(
            report.verdict && report.worst_trace < 0.0,
            "m={m}: worst trace {} at {:?}",
            report.worst_trace,
            report.worst_point
        );
        worsts.push(report.worst_trace);
    }

    // flat control: the trace maximum sits exactly at zero
    let flat = scenario("flat_halfspace.json");
    let flat_fol = OrthogonalFoliation::new(flat.surface.clone(), flat.delta, 1e-6).unwrap();
    let flat_region = LeafRegion {
        radius: 0.1,
        s_min: 0.0,
        s_max: 0.9 * eps,
    };
    let mut rng = stream_rng(flat.seed(), Stream::Lemma33Samples);
    let report = verify_lemma33(
        &flat_fol,
        &CutoffProfile::new(eps).unwrap(),
        1,
        &flat_region,
        16,
        &mut rng,
        None,
        vec!["strong_m_convexity".into()],
    )
    .unwrap();
    assert!(!report.verdict, "flat control must fail");
    assert!(
        report.worst_trace.abs() < 1e-9,
        "flat worst trace {} not at zero",
        report.worst_trace
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "criterion 5 took {elapsed:?}");
    pass_line(
        "5 (trace negativity)",
        format!(
            "cap worst traces m1 {:.2e}, m2 {:.2e}; flat max {:.1e}; {:.1?}",
            worsts[0], worsts[1], report.worst_trace, elapsed
        ),
    );
}

// criterion 6: the first-variation mechanism — strictly negative delta V
// for the touching segment and disk, exact zero away from the support.
#[test]
fn criterion_6_first_variation_mechanism() {
    let sc = scenario("cap_corner.json");
    let mut crng = stream_rng(sc.seed(), Stream::CornerSamples);
    let corner = sample_corner(&sc.surface, 16, sc.sample_radius, &mut crng).unwrap();
    let domain = ProperSubdomain::new(sc.surface.clone(), 1, corner).unwrap();
    let eps = 0.05;
    let mut deltas = Vec::new();
    for m in [1usize, 2] {
        let (extent, subdiv) = sc.touching_params(m);
        let params = ExperimentParams {
            eps,
            m,
            delta: sc.delta,
            sample_radius: sc.sample_radius,
            lemma33_samples: 16,
            k_samples: 8,
            tau_orth: 1e-6,
            tau_conv: 1e-8,
            tau_neg_factor: 1e-8,
            varifold_extent: extent,
            varifold_subdiv: subdiv,
            seed: sc.seed(),
        };
        let outcome =
            max_principle_experiment(&domain, sc.corner.as_slice(), &params, &[]).unwrap();
        assert!(outcome.verdict, "m={m}: {:?}", outcome.results);
        let r = &outcome.results[0];
        assert!(
            r.delta_v < -r.tau_neg,
            "m={m}: delta V {} vs tau_neg {}",
            r.delta_v,
            r.tau_neg
        );
        deltas.push(r.delta_v);
    }

    // a varifold outside the support sees exactly zero
    let (barrier, _) = build_barrier(&domain, eps).unwrap();
    let fol = OrthogonalFoliation::new(barrier.surface.clone(), sc.delta, 1e-6).unwrap();
    let cutoff = CutoffProfile::new(eps).unwrap();
    let outside = DiscreteVarifold::new(
        sc.chart.clone(),
        2,
        vec![Simplex {
            vertices: vec![
                DVector::from_column_slice(&[0.2, 0.0, 0.6]),
                DVector::from_column_slice(&[0.3, 0.0, 0.6]),
                DVector::from_column_slice(&[0.2, 0.1, 0.6]),
            ],
            multiplicity: 1.0,
        }],
    )
    .unwrap();
    let field = |x: &[f64]| {
        test_field(&fol, &cutoff, x)
            .map(|t| t.components)
            .map_err(|_| fbmp::geometry::GeomError::OutsideDomain(x.to_vec()))
    };
    let report = first_variation(&outside, &field).unwrap();
    assert_eq!(report.total, 0.0, "outside-support delta V must be exactly zero");
    pass_line(
        "6 (first-variation mechanism)",
        format!(
            "delta V m1 {:.3e}, m2 {:.3e}; outside support exactly 0",
            deltas[0], deltas[1]
        ),
    );
}

// criterion 7: the free-boundary disk in the conformal ball model is
// stationary within 1e-3 against 50 seeded tangential fields; a 10-degree
// tilt is detected above 1e-2.
#[test]
fn criterion_7_stationarity_control() {
    let factor = Expression::parse("4/((x1+1)^2 + x2^2 + x3^2)^2", 3).unwrap();
    let chart = Arc::new(
        MetricChart::conformal(
            3,
            vec![0.0, -1.5, -1.5],
            vec![2.0, 1.5, 1.5],
            true,
            factor,
            1e-5,
        )
        .unwrap(),
    );

    // the half-space model of the unit ball: the equatorial disk through
    // the center maps to the unit hemisphere over the boundary face
    let ball_to_half = |x: Coords| -> Coords {
        let mut shifted = x.clone();
        shifted[0] += 1.0;
        let n2 = shifted.norm_squared();
        let mut z = shifted * (2.0 / n2);
        z[0] -= 1.0;
        z
    };
    // a planar disk whose plane sits at height h = sin(tilt) off the
    // center meets the sphere at (90 - tilt) degrees; h = 0 recovers the
    // free-boundary equatorial disk (any diametral plane is orthogonal)
    let mesh = |tilt: f64| -> DiscreteVarifold {
        let h = tilt.sin();
        let center = DVector::from_column_slice(&[h, 0.0, 0.0]);
        let u = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let v = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let radius = (1.0 - h * h).sqrt();
        let simplices = disk_mesh(&center, &u, &v, radius, 40, 160, ball_to_half);
        DiscreteVarifold::new(chart.clone(), 2, simplices).unwrap()
    };

    // seeded tangential quadratic fields: the first component carries an
    // x1 factor, so <X, nu_boundary> = 0 exactly on the boundary face
    let mut frng = stream_rng(777, Stream::TestFields);
    let mut fields: Vec<BoxedField> = Vec::new();
    for _ in 0..50 {
        let mut coeff = [[0.0; 10]; 3];
        for row in coeff.iter_mut() {
            for c in row.iter_mut() {
                *c = uniform(&mut frng, -1.0, 1.0);
            }
        }
        fields.push(Box::new(move |x: &[f64]| {
            let quad = |c: &[f64; 10]| {
                c[0] + c[1] * x[0]
                    + c[2] * x[1]
                    + c[3] * x[2]
                    + c[4] * x[0] * x[0]
                    + c[5] * x[1] * x[1]
                    + c[6] * x[2] * x[2]
                    + c[7] * x[0] * x[1]
                    + c[8] * x[0] * x[2]
                    + c[9] * x[1] * x[2]
            };
            Ok(DVector::from_column_slice(&[
                x[0] * quad(&coeff[0]),
                quad(&coeff[1]),
                quad(&coeff[2]),
            ]))
        }));
    }
    let boundary: Vec<Coords> = (0..12)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 12.0;
            DVector::from_column_slice(&[0.0, 0.9 * th.cos(), 0.9 * th.sin()])
        })
        .collect();

    let flat_residual = stationarity_residual(&mesh(0.0), &fields, &boundary, 1e-9).unwrap();
    assert!(
        flat_residual < 1e-3,
        "equatorial disk residual {flat_residual}"
    );
    let tilt = 10.0_f64.to_radians();
    let tilted_residual = stationarity_residual(&mesh(tilt), &fields, &boundary, 1e-9).unwrap();
    assert!(
        tilted_residual > 1e-2,
        "tilted disk residual {tilted_residual} not flagged"
    );
    pass_line(
        "7 (stationarity control)",
        format!("equatorial {flat_residual:.3e}, tilted {tilted_residual:.3e}"),
    );
}

// criterion 8: the analytic first-variation oracle and the quadratic flow
// consistency of the flat unit disk under the position field.
#[test]
fn criterion_8_first_variation_oracle() {
    let chart = Arc::new(
        MetricChart::euclidean(3, vec![-2.0; 3], vec![2.0; 3], false, 1e-5).unwrap(),
    );
    let center = DVector::zeros(3);
    let u = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
    let v = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
    let disk = DiscreteVarifold::new(
        chart.clone(),
        2,
        disk_mesh(&center, &u, &v, 1.0, 40, 320, |x| x),
    )
    .unwrap();
    let pos = |y: &[f64]| Ok(DVector::from_column_slice(y));
    let dv = first_variation(&disk, &pos).unwrap();
    let err = (dv.total - 2.0 * std::f64::consts::PI).abs();
    assert!(err < 1e-3, "delta V error {err}");

    // flow consistency: slope of the remainder in t on a log-log grid
    let area0 = disk.mass().unwrap();
    let mut logs = Vec::new();
    for t in [0.02, 0.01, 0.005, 0.0025] {
        let factor = (t as f64).exp(); // exact flow of the position field
        let flowed = {
            let simplices = disk
                .simplices()
                .iter()
                .map(|s| Simplex {
                    vertices: s.vertices.iter().map(|p| p * factor).collect(),
                    multiplicity: s.multiplicity,
                })
                .collect();
            DiscreteVarifold::new(chart.clone(), 2, simplices).unwrap()
        };
        let err = (flowed.mass().unwrap() - area0 - t * dv.total).abs();
        logs.push((t.ln(), err.ln()));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!((1.8..=2.2).contains(&slope), "flow exponent {slope}");
    pass_line(
        "8 (first-variation oracle)",
        format!("delta V error {err:.2e}, flow exponent {slope:.3}"),
    );
}

// criterion 9: byte-identical reports under a fixed seed, and the
// expression corpus round-tripping with bit-exact evaluation.
#[test]
fn criterion_9_determinism() {
    let sc = scenario("conformal_cap.json");
    let a = run_checks(&sc, None).unwrap().canonical_json().unwrap();
    let b = run_checks(&sc, None).unwrap().canonical_json().unwrap();
    assert_eq!(a, b, "reports are not byte-identical");

    for src in CORPUS {
        let e = Expression::parse(src, 3).unwrap();
        let round = Expression::parse(&e.serialize(), 3).unwrap();
        assert_eq!(e.ast(), round.ast(), "round trip changed `{src}`");
        for p in &CORPUS_POINTS {
            assert_eq!(
                e.eval(p).unwrap().to_bits(),
                ref_eval(src, p).to_bits(),
                "`{src}` disagrees with the reference evaluator"
            );
        }
    }
    pass_line(
        "9 (determinism)",
        format!(
            "report bytes identical ({} bytes); 20-expression corpus at 0 ulp",
            a.len()
        ),
    );
}
