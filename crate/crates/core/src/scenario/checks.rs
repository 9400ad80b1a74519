//! The check pipeline: each check produces one result with an explicit
//! verdict; later checks are skipped once a gate fails.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Residuals, Scenario, ScenarioError};
use crate::barrier::{
    build_barrier, estimate_k, lemma34_grid_max, lemma34_max, verify_lemma33, BarrierError,
    CutoffProfile, Lemma34Profile,
};
use crate::foliation::{LeafRegion, OrthogonalFoliation};
use crate::rng::{stream_rng, Stream};
use crate::surfaces::{sample_corner, ProperSubdomain};
use crate::varifold::{max_principle_experiment, ExperimentParams};

pub const CHECK_ORDER: [&str; 7] = [
    "orthogonality",
    "strong_m_convexity",
    "foliation",
    "barrier_touching",
    "lemma33",
    "lemma34",
    "max_principle",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub residuals: Residuals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub version: String,
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    /// Wall-clock duration; excluded from the determinism canon.
    pub timing_ms: u64,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    /// Serialization with the timing zeroed, for byte-comparisons.
    pub fn canonical_json(&self) -> serde_json::Result<String> {
        let mut canon = self.clone();
        canon.timing_ms = 0;
        serde_json::to_string_pretty(&canon)
    }
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    domain: ProperSubdomain,
    barrier_fol: Option<OrthogonalFoliation>,
    k: Option<crate::barrier::KEstimate>,
}

impl Ctx<'_> {
    // The barrier foliation and the curvature scale are shared by several
    // checks; build them on first use so check subsets stay independent.
    fn barrier_foliation(&mut self) -> Result<OrthogonalFoliation, String> {
        if let Some(f) = &self.barrier_fol {
            return Ok(f.clone());
        }
        let sc = self.scenario;
        let (barrier, _) =
            build_barrier(&self.domain, sc.main_eps()).map_err(|e| e.to_string())?;
        let fol =
            OrthogonalFoliation::new(barrier.surface.clone(), sc.delta, sc.file.tolerances.tau_orth)
                .map_err(|e| e.to_string())?;
        self.barrier_fol = Some(fol.clone());
        Ok(fol)
    }

    fn k_estimate(&mut self) -> Result<crate::barrier::KEstimate, String> {
        if let Some(k) = &self.k {
            return Ok(k.clone());
        }
        let sc = self.scenario;
        let fol = self.barrier_foliation()?;
        let eps = sc.main_eps();
        let region = LeafRegion {
            radius: sc.sample_radius,
            s_min: 0.0,
            s_max: (0.9 * eps).min(0.9 * sc.delta),
        };
        let mut krng = stream_rng(sc.seed(), Stream::KEstimate);
        let ke = estimate_k(&fol, &region, sc.file.samples.k_estimate, &mut krng)
            .map_err(|e| e.to_string())?;
        self.k = Some(ke.clone());
        Ok(ke)
    }
}

/// Run the requested checks (all of them when `filter` is `None`) in
/// dependency order. Returns the report; the exit-code mapping belongs to
/// the binary.
pub fn run_checks(
    scenario: &Scenario,
    filter: Option<&[String]>,
) -> Result<Report, ScenarioError> {
    if let Some(names) = filter {
        for n in names {
            if !CHECK_ORDER.contains(&n.as_str()) {
                return Err(ScenarioError::UnknownCheck(n.clone()));
            }
        }
    }
    let requested = |name: &str| -> bool {
        filter.map_or(true, |names| names.iter().any(|n| n == name))
    };

    let start = std::time::Instant::now();
    let mut rng = stream_rng(scenario.seed(), Stream::CornerSamples);
    let corner_samples = sample_corner(
        &scenario.surface,
        scenario.file.samples.corner,
        scenario.sample_radius,
        &mut rng,
    )?;
    let domain = ProperSubdomain::new(
        scenario.surface.clone(),
        *scenario.file.m.iter().min().unwrap_or(&1),
        corner_samples,
    )?;

    let mut ctx = Ctx {
        scenario,
        domain,
        barrier_fol: None,
        k: None,
    };

    let mut checks = Vec::new();
    let mut gate_failed: Option<String> = None;
    for name in CHECK_ORDER {
        if !requested(name) {
            continue;
        }
        if let Some(failed) = &gate_failed {
            checks.push(CheckResult {
                name: name.into(),
                verdict: Verdict::Skipped,
                residuals: Residuals::new(),
                witness: None,
                detail: format!("gated by failed check `{failed}`"),
            });
            continue;
        }
        let result = match name {
            "orthogonality" => check_orthogonality(&mut ctx),
            "strong_m_convexity" => check_convexity(&mut ctx),
            "foliation" => check_foliation(&mut ctx),
            "barrier_touching" => check_barrier(&mut ctx),
            "lemma33" => check_lemma33(&mut ctx),
            "lemma34" => check_lemma34(&mut ctx),
            "max_principle" => check_max_principle(&mut ctx),
            _ => unreachable!(),
        };
        if result.verdict == Verdict::Fail {
            gate_failed = Some(result.name.clone());
        }
        checks.push(result);
    }

    Ok(Report {
        name: scenario.file.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        schema_version: 1,
        seed: scenario.seed(),
        checks,
        timing_ms: start.elapsed().as_millis() as u64,
    })
}

/// Run all checks and write `report.json` into `out_dir` when given.
pub fn run_to_dir(
    scenario: &Scenario,
    filter: Option<&[String]>,
    out_dir: Option<&Path>,
) -> Result<Report, ScenarioError> {
    let report = run_checks(scenario, filter)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&report)?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
    }
    Ok(report)
}

fn fail_from_error(name: &str, err: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name: name.into(),
        verdict: Verdict::Fail,
        residuals: Residuals::new(),
        witness: None,
        detail: format!("{err}"),
    }
}

fn check_orthogonality(ctx: &mut Ctx) -> CheckResult {
    let tau = ctx.scenario.file.tolerances.tau_orth;
    match ctx.domain.check_orthogonality(tau) {
        Ok(rep) => {
            let mut residuals = Residuals::new();
            residuals.insert("corner_residual".into(), rep.residual);
            CheckResult {
                name: "orthogonality".into(),
                verdict: if rep.pass { Verdict::Pass } else { Verdict::Fail },
                residuals,
                witness: (!rep.pass).then(|| Witness {
                    label: "worst corner sample".into(),
                    point: Some(rep.worst_point.as_slice().to_vec()),
                    value: Some(rep.residual),
                }),
                detail: format!(
                    "max |<nu_S, nu_T>| = {:.3e} over {} corner samples (tau {:.1e})",
                    rep.residual,
                    ctx.domain.corner().len(),
                    tau
                ),
            }
        }
        Err(e) => fail_from_error("orthogonality", e),
    }
}

fn check_convexity(ctx: &mut Ctx) -> CheckResult {
    let tau = ctx.scenario.file.tolerances.tau_conv;
    let y = ctx
        .scenario
        .surface
        .base_of(ctx.scenario.corner.as_slice());
    let mut residuals = Residuals::new();
    let mut all = true;
    let mut details = Vec::new();
    for &m in &ctx.scenario.file.m {
        match ctx.scenario.surface.strong_m_convexity(&y, m, tau) {
            Ok(rep) => {
                residuals.insert(format!("margin_m{m}"), rep.margin);
                all &= rep.verdict;
                details.push(format!(
                    "m={m}: margin {:.4e} ({})",
                    rep.margin,
                    if rep.verdict { "pass" } else { "fail" }
                ));
            }
            Err(e) => return fail_from_error("strong_m_convexity", e),
        }
    }
    CheckResult {
        name: "strong_m_convexity".into(),
        verdict: if all { Verdict::Pass } else { Verdict::Fail },
        residuals,
        witness: (!all).then(|| Witness {
            label: "corner point".into(),
            point: Some(ctx.scenario.corner.as_slice().to_vec()),
            value: None,
        }),
        detail: details.join("; "),
    }
}

fn check_foliation(ctx: &mut Ctx) -> CheckResult {
    let sc = ctx.scenario;
    let tol = &sc.file.tolerances;
    let fol = match OrthogonalFoliation::new(sc.surface.clone(), sc.delta, tol.tau_orth) {
        Ok(f) => f,
        Err(e) => return fail_from_error("foliation", e),
    };
    let region = LeafRegion {
        radius: sc.sample_radius,
        s_min: -0.5 * sc.delta,
        s_max: 0.5 * sc.delta,
    };

    let inner = || -> Result<(Residuals, bool, String), Box<dyn std::error::Error>> {
        let mut residuals = Residuals::new();
        // boundary samples: psi = 1, gradient parallelism, leaf tangency
        let mut brng = stream_rng(sc.seed(), Stream::BoundarySamples);
        let boundary = fol.sample_boundary(&region, sc.file.samples.boundary, &mut brng)?;
        let mut psi_dev = 0.0_f64;
        let mut psi_res = 0.0_f64;
        let mut tangency = 0.0_f64;
        for q in &boundary {
            let p = fol.psi(q.as_slice())?;
            psi_dev = psi_dev.max((p.value - 1.0).abs());
            psi_res = psi_res.max(p.residual);
            tangency = tangency.max(fol.boundary_tangency_residual(q.as_slice())?);
        }
        residuals.insert("psi_boundary_deviation".into(), psi_dev);
        residuals.insert("grad_s_residual".into(), psi_res);
        residuals.insert("leaf_boundary_tangency".into(), tangency);

        // interior samples: psi positivity, transverse orthogonality
        let mut frng = stream_rng(sc.seed(), Stream::FoliationSamples);
        let interior = fol.sample_region(&region, sc.file.samples.foliation, &mut frng)?;
        let mut psi_min = f64::INFINITY;
        let mut t_orth = 0.0_f64;
        for q in &interior {
            psi_min = psi_min.min(fol.psi(q.as_slice())?.value);
            t_orth = t_orth.max(fol.t_orthogonality_residual(q.as_slice())?);
        }
        residuals.insert("psi_min".into(), psi_min);
        residuals.insert("t_orthogonality".into(), t_orth);

        // frame identity (only meaningful off the boundary coordinate axis)
        let mut irng = stream_rng(sc.seed(), Stream::FoliationSamples);
        let pts = fol.sample_region(&region, sc.file.samples.frame_identity, &mut irng)?;
        let n = sc.chart.dim() - 1;
        let mut frame_res: Vec<f64> = Vec::new();
        for q in &pts {
            for i in 2..=n {
                frame_res.push(fol.frame_identity_residual(q.as_slice(), i)?);
            }
        }
        frame_res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = frame_res[frame_res.len() / 2];
        let max = *frame_res.last().unwrap();
        residuals.insert("frame_identity_median".into(), median);
        residuals.insert("frame_identity_max".into(), max);

        // largest delta multiple that still builds and stays in the chart
        let mut largest = sc.delta;
        for mult in [1.5, 2.0, 3.0] {
            if OrthogonalFoliation::new(sc.surface.clone(), sc.delta * mult, tol.tau_orth).is_ok()
            {
                largest = sc.delta * mult;
            } else {
                break;
            }
        }
        residuals.insert("largest_passing_delta".into(), largest);

        let pass = psi_dev < tol.tau_psi
            && psi_res < tol.tau_psi
            && tangency < tol.tau_psi
            && t_orth < tol.tau_psi
            && psi_min > 0.0
            && median < 1e-3;
        let detail = format!(
            "psi-1 {:.3e}, grad-s residual {:.3e}, tangency {:.3e}, frame identity median {:.3e} (tau_psi {:.1e})",
            psi_dev, psi_res, tangency, median, tol.tau_psi
        );
        Ok((residuals, pass, detail))
    };

    match inner() {
        Ok((residuals, pass, detail)) => CheckResult {
            name: "foliation".into(),
            verdict: if pass { Verdict::Pass } else { Verdict::Fail },
            residuals,
            witness: None,
            detail,
        },
        Err(e) => fail_from_error("foliation", e.as_ref()),
    }
}

fn check_barrier(ctx: &mut Ctx) -> CheckResult {
    let sc = ctx.scenario;
    let eps = sc.main_eps();
    match build_barrier(&ctx.domain, eps) {
        Ok((barrier, touching)) => {
            let mut residuals = Residuals::new();
            residuals.insert("a2".into(), barrier.a2);
            residuals.insert("a3".into(), barrier.a3);
            residuals.insert("min_f_minus_u".into(), touching.min_value);
            residuals.insert("equality_radius".into(), touching.equality_radius);
            residuals.insert("mixed_hessian".into(), touching.mixed_hessian_abs);
            let fol =
                OrthogonalFoliation::new(barrier.surface.clone(), sc.delta, sc.file.tolerances.tau_orth);
            let detail = format!(
                "eps {:.3}: min(f - u) = {:.3e} at {:?} over {} grid points; strict touching: {}",
                eps, touching.min_value, touching.min_location, touching.grid_points, touching.strict
            );
            match fol {
                Ok(f) => {
                    ctx.barrier_fol = Some(f);
                    CheckResult {
                        name: "barrier_touching".into(),
                        verdict: Verdict::Pass,
                        residuals,
                        witness: None,
                        detail,
                    }
                }
                Err(e) => fail_from_error("barrier_touching", e),
            }
        }
        Err(BarrierError::TouchingViolated { value, point }) => CheckResult {
            name: "barrier_touching".into(),
            verdict: Verdict::Fail,
            residuals: Residuals::new(),
            witness: Some(Witness {
                label: "touching violation".into(),
                point: Some(point),
                value: Some(value),
            }),
            detail: "f - u dips below -1e-8; scenario rejected".into(),
        },
        Err(e) => fail_from_error("barrier_touching", e),
    }
}

fn check_lemma33(ctx: &mut Ctx) -> CheckResult {
    let sc = ctx.scenario;
    let fol = match ctx.barrier_foliation() {
        Ok(f) => f,
        Err(e) => return fail_from_error("lemma33", e),
    };
    let eps = sc.main_eps();
    let cutoff = match CutoffProfile::new(eps) {
        Ok(c) => c,
        Err(e) => return fail_from_error("lemma33", e),
    };
    let region = LeafRegion {
        radius: sc.sample_radius,
        s_min: 0.0,
        s_max: (0.9 * eps).min(0.9 * sc.delta),
    };
    let ke = match ctx.k_estimate() {
        Ok(k) => k,
        Err(e) => return fail_from_error("lemma33", e),
    };
    let mut residuals = Residuals::new();
    residuals.insert("k".into(), ke.k);
    residuals.insert("psi_min".into(), ke.psi_min);
    let mut all = true;
    let mut details = Vec::new();
    for &m in &sc.file.m {
        let mut rng = stream_rng(sc.seed(), Stream::Lemma33Samples);
        match verify_lemma33(
            &fol,
            &cutoff,
            m,
            &region,
            sc.file.samples.lemma33,
            &mut rng,
            Some(&ke),
            vec![],
        ) {
            Ok(rep) => {
                residuals.insert(format!("worst_trace_m{m}"), rep.worst_trace);
                residuals.insert(format!("qform_mismatch_m{m}"), rep.max_qform_mismatch);
                all &= rep.verdict;
                let eps_note = match rep.eps_admissible {
                    Some(false) => " [eps too large for the profile bound]",
                    _ => "",
                };
                details.push(format!(
                    "m={m}: worst trace {:.3e} over {} samples ({}){}",
                    rep.worst_trace,
                    rep.samples,
                    if rep.verdict { "pass" } else { "fail" },
                    eps_note
                ));
            }
            Err(e) => return fail_from_error("lemma33", e),
        }
    }
    CheckResult {
        name: "lemma33".into(),
        verdict: if all { Verdict::Pass } else { Verdict::Fail },
        residuals,
        witness: None,
        detail: details.join("; "),
    }
}

fn check_lemma34(ctx: &mut Ctx) -> CheckResult {
    let sc = ctx.scenario;
    let ke = match ctx.k_estimate() {
        Ok(k) => k,
        Err(e) => return fail_from_error("lemma34", e),
    };
    let n = sc.chart.dim() - 1;
    let mut residuals = Residuals::new();
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut max_gap = 0.0_f64;
    let mut details = Vec::new();
    let mut eps_sorted = sc.file.epsilons.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for eps in eps_sorted {
        match lemma34_max(ke.k, n, eps) {
            Ok((theta, f_star)) => {
                let profile = Lemma34Profile { k: ke.k, n, eps };
                let oracle = lemma34_grid_max(&profile, 1e-4);
                let gap = (f_star - oracle).abs();
                max_gap = max_gap.max(gap);
                monotone &= f_star <= prev + 1e-15;
                prev = f_star;
                residuals.insert(format!("f_star_eps{eps}"), f_star);
                details.push(format!("eps {eps}: theta* {theta:.5}, F* {f_star:.5e}"));
            }
            Err(BarrierError::EpsOutOfRange { limit, .. }) => {
                details.push(format!("eps {eps}: inadmissible (needs < {limit:.4})"));
            }
            Err(e) => return fail_from_error("lemma34", e),
        }
    }
    residuals.insert("grid_oracle_gap".into(), max_gap);
    let pass = monotone && max_gap < 1e-8;
    CheckResult {
        name: "lemma34".into(),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        residuals,
        witness: None,
        detail: format!(
            "K = {:.4}; {}; grid gap {:.2e}; monotone: {}",
            ke.k,
            details.join("; "),
            max_gap,
            monotone
        ),
    }
}

fn check_max_principle(ctx: &mut Ctx) -> CheckResult {
    let sc = ctx.scenario;
    let eps = sc.main_eps();
    let mut residuals = Residuals::new();
    let mut all = true;
    let mut details = Vec::new();
    for &m in &sc.file.m {
        let (extent, subdiv) = sc.touching_params(m);
        let params = ExperimentParams {
            eps,
            m,
            delta: sc.delta,
            sample_radius: sc.sample_radius,
            lemma33_samples: sc.file.samples.lemma33,
            k_samples: sc.file.samples.k_estimate,
            tau_orth: sc.file.tolerances.tau_orth,
            tau_conv: sc.file.tolerances.tau_conv,
            tau_neg_factor: sc.file.tolerances.tau_neg_factor,
            varifold_extent: extent,
            varifold_subdiv: subdiv,
            seed: sc.seed(),
        };
        let extras = match sc.explicit_varifolds(m) {
            Ok(v) => v,
            Err(e) => return fail_from_error("max_principle", e),
        };
        match max_principle_experiment(&ctx.domain, sc.corner.as_slice(), &params, &extras) {
            Ok(outcome) => {
                residuals.insert(format!("tangency_m{m}"), outcome.tangency_residual);
                for r in &outcome.results {
                    residuals.insert(format!("delta_v_m{m}_{}", r.label), r.delta_v);
                    all &= r.pass;
                    details.push(format!(
                        "m={m} {}: delta V {:.3e} (tau_neg {:.1e}, {})",
                        r.label,
                        r.delta_v,
                        r.tau_neg,
                        if r.pass { "pass" } else { "fail" }
                    ));
                }
            }
            Err(e) => return fail_from_error("max_principle", e),
        }
    }
    CheckResult {
        name: "max_principle".into(),
        verdict: if all { Verdict::Pass } else { Verdict::Fail },
        residuals,
        witness: None,
        detail: details.join("; "),
    }
}
