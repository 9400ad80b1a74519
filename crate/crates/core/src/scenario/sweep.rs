//! Parameter sweeps with one CSV row per value.
//!
//! CSV schemas (headers included in the file):
//!   epsilon: `epsilon,k,theta_star,f_star,worst_trace,delta_v,verdict`
//!   fd_step: `fd_step,frame_identity_median,psi_residual_max,grad_s_residual_max`
//!   refine:  `refine,delta_v,richardson_rel,mass`

use std::fmt::Write as _;
use std::path::Path;

use super::{Scenario, ScenarioError};
use crate::barrier::{build_barrier, estimate_k, lemma34_max, verify_lemma33, CutoffProfile};
use crate::foliation::{LeafRegion, OrthogonalFoliation};
use crate::rng::{stream_rng, Stream};
use crate::surfaces::{sample_corner, ProperSubdomain};
use crate::varifold::{max_principle_experiment, ExperimentParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    FdStep,
    Refine,
}

impl std::str::FromStr for SweepParam {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epsilon" => Ok(SweepParam::Epsilon),
            "fd_step" => Ok(SweepParam::FdStep),
            "refine" => Ok(SweepParam::Refine),
            other => Err(ScenarioError::UnknownParam(other.to_string())),
        }
    }
}

/// Run the sweep and write the CSV; returns the CSV text.
pub fn sweep(
    scenario: &Scenario,
    param: SweepParam,
    values: &[f64],
    out_csv: Option<&Path>,
) -> Result<String, ScenarioError> {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0) {
        return Err(ScenarioError::BadSweepValues);
    }
    let csv = match param {
        SweepParam::Epsilon => sweep_epsilon(scenario, values)?,
        SweepParam::FdStep => sweep_fd_step(scenario, values)?,
        SweepParam::Refine => sweep_refine(scenario, values)?,
    };
    if let Some(path) = out_csv {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, &csv)?;
    }
    Ok(csv)
}

fn domain_of(scenario: &Scenario) -> Result<ProperSubdomain, ScenarioError> {
    let mut rng = stream_rng(scenario.seed(), Stream::CornerSamples);
    let corner = sample_corner(
        &scenario.surface,
        scenario.file.samples.corner,
        scenario.sample_radius,
        &mut rng,
    )?;
    Ok(ProperSubdomain::new(
        scenario.surface.clone(),
        *scenario.file.m.iter().min().unwrap_or(&1),
        corner,
    )?)
}

fn sweep_epsilon(scenario: &Scenario, values: &[f64]) -> Result<String, ScenarioError> {
    let sc = scenario;
    let domain = domain_of(sc)?;
    let m = *sc.file.m.iter().min().unwrap_or(&1);
    let n = sc.chart.dim() - 1;
    let mut csv = String::from("epsilon,k,theta_star,f_star,worst_trace,delta_v,verdict\n");
    for &eps in values {
        let (barrier, _) =
            build_barrier(&domain, eps).map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let fol = OrthogonalFoliation::new(barrier.surface.clone(), sc.delta, sc.file.tolerances.tau_orth)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let cutoff =
            CutoffProfile::new(eps).map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let region = LeafRegion {
            radius: sc.sample_radius,
            s_min: 0.0,
            s_max: (0.9 * eps).min(0.9 * sc.delta),
        };
        let mut krng = stream_rng(sc.seed(), Stream::KEstimate);
        let ke = estimate_k(&fol, &region, sc.file.samples.k_estimate, &mut krng)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let (theta, f_star) = match lemma34_max(ke.k, n, eps) {
            Ok(v) => v,
            Err(_) => (f64::NAN, f64::NAN), // eps above the admissible range
        };
        let mut lrng = stream_rng(sc.seed(), Stream::Lemma33Samples);
        let l33 = verify_lemma33(
            &fol,
            &cutoff,
            m,
            &region,
            sc.file.samples.lemma33,
            &mut lrng,
            Some(&ke),
            vec![],
        )
        .map_err(|e| ScenarioError::Validation(e.to_string()))?;
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
        let delta_v = match max_principle_experiment(&domain, sc.corner.as_slice(), &params, &[])
        {
            Ok(outcome) => outcome.results.first().map(|r| r.delta_v).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        };
        let verdict = l33.verdict && delta_v < 0.0;
        writeln!(
            csv,
            "{eps},{},{theta},{f_star},{},{delta_v},{verdict}",
            ke.k, l33.worst_trace
        )
        .expect("string write");
    }
    Ok(csv)
}

fn sweep_fd_step(scenario: &Scenario, values: &[f64]) -> Result<String, ScenarioError> {
    let mut csv =
        String::from("fd_step,frame_identity_median,psi_residual_max,grad_s_residual_max\n");
    for &h in values {
        // rebuild the scenario with the new step
        let mut file = scenario.file.clone();
        file.chart.fd_step = Some(h);
        let sc = Scenario::build(file)?;
        let fol = OrthogonalFoliation::new(sc.surface.clone(), sc.delta, sc.file.tolerances.tau_orth)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let region = LeafRegion {
            radius: sc.sample_radius,
            s_min: -0.5 * sc.delta,
            s_max: 0.5 * sc.delta,
        };
        let mut rng = stream_rng(sc.seed(), Stream::FoliationSamples);
        let pts = fol
            .sample_region(&region, sc.file.samples.frame_identity, &mut rng)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let n = sc.chart.dim() - 1;
        let mut frame_res = Vec::new();
        let mut psi_res = 0.0_f64;
        for q in &pts {
            for i in 2..=n {
                frame_res.push(
                    fol.frame_identity_residual(q.as_slice(), i)
                        .map_err(|e| ScenarioError::Validation(e.to_string()))?,
                );
            }
            psi_res = psi_res.max(
                fol.psi(q.as_slice())
                    .map_err(|e| ScenarioError::Validation(e.to_string()))?
                    .residual,
            );
        }
        frame_res.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = frame_res[frame_res.len() / 2];
        writeln!(csv, "{h},{median},{psi_res},{psi_res}").expect("string write");
    }
    Ok(csv)
}

fn sweep_refine(scenario: &Scenario, values: &[f64]) -> Result<String, ScenarioError> {
    let sc = scenario;
    let domain = domain_of(sc)?;
    let m = *sc.file.m.iter().min().unwrap_or(&1);
    let eps = sc.main_eps();
    let mut csv = String::from("refine,delta_v,richardson_rel,mass\n");
    for &v in values {
        let subdiv = v as usize;
        if subdiv == 0 {
            return Err(ScenarioError::BadSweepValues);
        }
        let (extent, _) = sc.touching_params(m);
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
        let outcome = max_principle_experiment(&domain, sc.corner.as_slice(), &params, &[])
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let r = outcome
            .results
            .first()
            .ok_or_else(|| ScenarioError::Validation("experiment produced no varifold".into()))?;
        writeln!(csv, "{subdiv},{},{},{}", r.delta_v, r.richardson_rel, r.mass)
            .expect("string write");
    }
    Ok(csv)
}
