//! Max-min fairness via one-dimensional bisection.
//!
//! The fairness problem and the power-ratio problem form a dual pair: the
//! fairness optimum is the scaling t at which the minimal worst per-antenna
//! power ratio r*(t·g) equals one, and r*(t) is nondecreasing in t. Each
//! probe therefore solves the ratio problem at the bracket midpoint and
//! moves the side the answer dictates.
//!
//! Probes return stationary (not certified-global) ratios, so a hysteresis
//! band absorbs the resulting wobble in the monotonicity and duality checks,
//! and the best cap-feasible beamformer seen so far is what gets returned.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccp::{ccp_p, CcpConfig, CcpError};
use crate::model::{compute_sinr, BeamformerSet, ProblemInstance};

#[derive(Debug, Error)]
pub enum MmfError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("no probe produced a cap-feasible beamformer ({probes} probes, last error: {last})")]
    AllProbesFailed { probes: usize, last: String },
    #[error("bisection bracket failed to tighten")]
    BracketStalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionConfig {
    /// Relative bracket-width stop: quit once (U − L) ≤ tol_t·L.
    pub tol_t: f64,
    pub max_probes: usize,
    /// Slack band for duality/monotonicity checks against stationary probes.
    pub hysteresis: f64,
    pub inner: CcpConfig,
}

impl BisectionConfig {
    pub fn default_for(num_antennas: usize) -> Self {
        Self {
            tol_t: 4e-3,
            max_probes: 60,
            hysteresis: 1e-2,
            inner: CcpConfig::default_for(num_antennas),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub t: f64,
    /// Achieved worst power ratio r̂(t), or None when the probe's CCP failed.
    pub ratio: Option<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub accepted: bool,
    pub warm_started: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmfReport {
    pub probes: Vec<ProbeRecord>,
    pub t_star: f64,
    pub bracket_low: f64,
    pub bracket_high: f64,
    pub initial_upper_bound: f64,
    /// min_k SINR_k / g_k achieved by the returned beamformer.
    pub min_weighted_sinr: f64,
    pub wall_time_s: f64,
}

/// Theoretical upper bound on t: all available power beamformed at the
/// single best-channel user with no interference.
pub fn upper_bound(instance: &ProblemInstance) -> f64 {
    let p_all = instance.total_power_budget();
    (0..instance.num_users)
        .map(|k| {
            p_all * instance.channels.column(k).norm_squared()
                / (instance.sinr_weight[k] * instance.noise_power[k])
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Weighted SINR floor of a beamformer on this instance.
pub fn min_weighted_sinr(instance: &ProblemInstance, w: &DMatrix<Complex64>) -> f64 {
    (0..instance.num_users)
        .map(|k| compute_sinr(w, instance, k) / instance.sinr_weight[k])
        .fold(f64::INFINITY, f64::min)
}

/// Maximizes the minimum weighted SINR under the per-antenna caps. Returns
/// the best cap-feasible beamformer, the final bracket midpoint t*, and the
/// probe log.
pub fn solve_mmf(
    instance: &ProblemInstance,
    config: &BisectionConfig,
) -> Result<(BeamformerSet, f64, MmfReport), MmfError> {
    instance.validate()?;
    let begin = std::time::Instant::now();
    let mut low = 0.0f64;
    let mut high = upper_bound(instance);
    let initial_upper_bound = high;
    let mut probes: Vec<ProbeRecord> = Vec::new();
    let mut best: Option<(DMatrix<Complex64>, f64)> = None;
    let mut last_error = String::from("none");

    for _ in 0..config.max_probes {
        if low > 0.0 && (high - low) <= config.tol_t * low {
            break;
        }
        let t = 0.5 * (low + high);
        let width_before = high - low;
        // warm-start from the last accepted beamformer when it already
        // meets the scaled targets; ccp_p falls back to a fresh start itself
        let warm = best.as_ref().map(|(w, _)| w);
        let warm_flagged = warm.is_some();
        match ccp_p(instance, t, &config.inner, warm) {
            Ok((beams, ratio, report)) => {
                let accepted = ratio <= 1.0;
                probes.push(ProbeRecord {
                    t,
                    ratio: Some(ratio),
                    outer_iterations: report.inner_iterations.len(),
                    inner_iterations: report.inner_iterations.iter().sum(),
                    accepted,
                    warm_started: warm_flagged
                        && report.start_provenance == crate::ccp::StartProvenance::Provided,
                });
                if accepted {
                    low = t;
                    best = Some((beams.into_matrix(), t));
                } else {
                    high = t;
                }
            }
            Err(CcpError::InitializationFailed { trials }) => {
                // cannot even satisfy the scaled targets: treat as a reject
                last_error = format!("initialization failed after {trials} trials");
                probes.push(ProbeRecord {
                    t,
                    ratio: None,
                    outer_iterations: 0,
                    inner_iterations: 0,
                    accepted: false,
                    warm_started: false,
                });
                high = t;
            }
            Err(e) => {
                last_error = e.to_string();
                probes.push(ProbeRecord {
                    t,
                    ratio: None,
                    outer_iterations: 0,
                    inner_iterations: 0,
                    accepted: false,
                    warm_started: false,
                });
                high = t;
            }
        }
        let width_after = high - low;
        if width_after >= width_before {
            return Err(MmfError::BracketStalled);
        }
    }

    let t_star = 0.5 * (low + high);
    let (beams, _) = best.ok_or(MmfError::AllProbesFailed {
        probes: probes.len(),
        last: last_error,
    })?;
    let report = MmfReport {
        probes,
        t_star,
        bracket_low: low,
        bracket_high: high,
        initial_upper_bound,
        min_weighted_sinr: min_weighted_sinr(instance, &beams),
        wall_time_s: begin.elapsed().as_secs_f64(),
    };
    let set = BeamformerSet::new(beams, instance)?;
    Ok((set, t_star, report))
}
