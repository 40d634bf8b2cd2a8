//! Outer convex-concave drivers and starting-point construction.
//!
//! The SINR constraints are differences of convex quadratics; replacing the
//! concave side with its first-order expansion at the previous iterate gives
//! a convex subproblem per round, solved by one of the inner ADMM engines.
//! The objective sequence is nonincreasing (up to inner-solver slack) and
//! the loop stops once the relative decrease falls under the configured
//! threshold. Convergence is to a stationary point, not a certified global
//! optimum.
//!
//! Starting points come from the closed form `W = H(H^H H)^{-1} A` when the
//! channel matrix has full column rank (each user then sees exactly its
//! target SINR with zero interference), and otherwise from the feasibility
//! ADMM with randomized restarts.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{
    is_infeasibility, solve_consensus_subproblem, solve_feasibility_admm, solve_mmf_subproblem,
    solve_qos_subproblem, AdmmConfig, AdmmError, FactorCache, Parallelism,
};
use crate::model::{
    antenna_power, check_feasibility, compute_sinr, BeamformerSet, FeasibilityReport, ModelError,
    ProblemInstance,
};

#[derive(Debug, Error)]
pub enum CcpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error("no SINR-satisfying starting point after {trials} trials")]
    InitializationFailed { trials: usize },
    #[error("subproblem infeasible at outer iteration {outer} after {restarts} restarts")]
    SubproblemInfeasible { outer: usize, restarts: usize },
    #[error("provided warm start does not satisfy the SINR targets")]
    BadWarmStart,
}

/// How the starting point is obtained when none is provided explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Closed form whenever N ≥ K with a well-conditioned Gram matrix,
    /// feasibility-ADMM search otherwise.
    #[default]
    ClosedFormFirst,
    /// Always search with the feasibility ADMM.
    AdmmSearch,
}

/// Which inner engine solves the convex subproblems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnerEngine {
    /// The tailored splitting (gains + capped copy).
    #[default]
    Direct,
    /// The consensus baseline (one beamformer copy per constraint).
    Consensus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcpConfig {
    /// Outer stop: |p^(t+1) − p^(t)| / p^(t) below this ends the loop.
    pub rel_decrease_tol: f64,
    pub max_outer_iterations: usize,
    pub inner: AdmmConfig,
    pub engine: InnerEngine,
    pub init_strategy: InitStrategy,
    /// Trials for the feasibility search and for subproblem-infeasible restarts.
    pub init_retry_budget: usize,
    pub init_seed: u64,
    /// Iteration cap of one feasibility-ADMM trial.
    pub init_max_iterations: usize,
}

impl CcpConfig {
    pub fn default_for(num_antennas: usize) -> Self {
        Self {
            rel_decrease_tol: 1e-3,
            max_outer_iterations: 30,
            inner: AdmmConfig::qos_default(num_antennas),
            engine: InnerEngine::Direct,
            init_strategy: InitStrategy::ClosedFormFirst,
            init_retry_budget: 10,
            init_seed: 1,
            init_max_iterations: 3000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StartProvenance {
    ClosedForm,
    AdmmSearch { trials: usize, iterations: usize },
    Provided,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcpReport {
    /// Objective value after each outer round (total power for QoS; for the
    /// power-ratio driver the sequence starts with the starting point's own
    /// worst ratio).
    pub objective_sequence: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub inner_converged: Vec<bool>,
    pub feasibility: FeasibilityReport,
    pub start_provenance: StartProvenance,
    pub restarts: usize,
    /// True when the relative-decrease rule fired within the iteration cap.
    pub converged: bool,
    /// True when the loop ended early because an iterate failed to descend
    /// (the previous iterate is then returned).
    pub stopped_on_increase: bool,
    /// Scale applied by the final feasibility polish, when one was needed to
    /// clear sub-tolerance SINR residuals left by the inner solver.
    pub polish_scale: Option<f64>,
    pub wall_time_s: f64,
}

/// Feasibility tolerance used for the report attached to solver output.
const REPORT_TOL: f64 = 1e-6;

/// Closed-form starting point for a full-column-rank channel matrix: the
/// unique minimum-norm W with H^H W = A, where A carries √(γ_k σ_k²) at each
/// user's own group and zeros elsewhere (phases fixed to zero for
/// determinism).
pub fn closed_form_start(instance: &ProblemInstance) -> Option<DMatrix<Complex64>> {
    let (n, k) = (instance.num_antennas, instance.num_users);
    if n < k {
        return None;
    }
    let h = &instance.channels;
    let gram = h.adjoint() * h;
    // condition check guards against nearly dependent channels
    let eigs = gram.symmetric_eigenvalues();
    let max_e = eigs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min_e = eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min_e <= 0.0 || !min_e.is_finite() || max_e / min_e > 1e8 {
        return None;
    }
    let a = start_target_matrix(instance);
    let chol = nalgebra::linalg::Cholesky::new(gram)?;
    Some(h * chol.solve(&a))
}

/// The K×M target-gain matrix of the closed-form start.
pub fn start_target_matrix(instance: &ProblemInstance) -> DMatrix<Complex64> {
    let mut a = DMatrix::<Complex64>::zeros(instance.num_users, instance.num_groups);
    for k in 0..instance.num_users {
        let amp = (instance.sinr_target[k] * instance.noise_power[k]).sqrt();
        a[(k, instance.group_of_user[k])] = Complex64::new(amp, 0.0);
    }
    a
}

/// Random start for one feasibility-ADMM trial: complex Gaussian beams,
/// each scaled so its group's strongest user would meet the target with an
/// M-fold interference margin.
fn random_search_start(instance: &ProblemInstance, seed: u64) -> DMatrix<Complex64> {
    let (n, m) = (instance.num_antennas, instance.num_groups);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DMatrix::from_fn(n, m, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    for g in 0..m {
        let strongest = instance
            .users_of_group(g)
            .max_by(|&a, &b| {
                let na = instance.channels.column(a).norm_squared();
                let nb = instance.channels.column(b).norm_squared();
                na.partial_cmp(&nb).unwrap()
            })
            .expect("validated instances have nonempty groups");
        let gain: Complex64 = instance.channels.column(strongest).dotc(&w.column(g));
        let want = instance.sinr_target[strongest] * instance.noise_power[strongest] * m as f64;
        if gain.norm_sqr() > 1e-24 {
            let s = (want / gain.norm_sqr()).sqrt();
            for v in w.column_mut(g).iter_mut() {
                *v *= Complex64::new(s, 0.0);
            }
        }
    }
    w
}

/// Finds a point satisfying every SINR target (power caps deliberately
/// ignored; CCP restores them from its first round on).
pub fn initialize(
    instance: &ProblemInstance,
    strategy: InitStrategy,
    retry_budget: usize,
    base_seed: u64,
    max_iterations: usize,
    parallelism: Parallelism,
) -> Result<(DMatrix<Complex64>, StartProvenance), CcpError> {
    if strategy == InitStrategy::ClosedFormFirst {
        if let Some(w) = closed_form_start(instance) {
            return Ok((w, StartProvenance::ClosedForm));
        }
    }
    for trial in 0..retry_budget.max(1) {
        let start = random_search_start(instance, base_seed.wrapping_add(trial as u64));
        match solve_feasibility_admm(instance, &start, max_iterations, parallelism) {
            Ok(run) => {
                return Ok((
                    run.beams,
                    StartProvenance::AdmmSearch {
                        trials: trial + 1,
                        iterations: run.iterations,
                    },
                ))
            }
            Err(AdmmError::NoSinrPoint { .. }) => continue,
            Err(e) => {
                if is_infeasibility(&e) {
                    continue;
                }
                return Err(e.into());
            }
        }
    }
    Err(CcpError::InitializationFailed {
        trials: retry_budget.max(1),
    })
}

fn satisfies_sinr(instance: &ProblemInstance, w: &DMatrix<Complex64>) -> bool {
    (0..instance.num_users).all(|k| compute_sinr(w, instance, k) >= instance.sinr_target[k])
}

fn max_power_ratio(instance: &ProblemInstance, w: &DMatrix<Complex64>) -> f64 {
    (0..instance.num_antennas)
        .map(|n| antenna_power(w, n) / instance.antenna_power_cap[n])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// QoS power minimization: CCP outer loop around the selected inner engine.
/// A provided warm start must satisfy the SINR targets; otherwise a start is
/// constructed per the configured strategy.
pub fn ccp_qos(
    instance: &ProblemInstance,
    config: &CcpConfig,
    warm: Option<&DMatrix<Complex64>>,
) -> Result<(BeamformerSet, CcpReport), CcpError> {
    instance.validate()?;
    let begin = std::time::Instant::now();
    let mut restarts = 0usize;

    let (mut current, mut provenance) = match warm {
        Some(w) => {
            if !satisfies_sinr(instance, w) {
                return Err(CcpError::BadWarmStart);
            }
            (w.clone_owned(), StartProvenance::Provided)
        }
        None => initialize(
            instance,
            config.init_strategy,
            config.init_retry_budget,
            config.init_seed,
            config.init_max_iterations,
            config.inner.parallelism,
        )?,
    };

    let cache = match config.engine {
        InnerEngine::Direct => Some(FactorCache::qos(instance, config.inner.rho)),
        InnerEngine::Consensus => None,
    };

    let mut objective_sequence: Vec<f64> = Vec::new();
    let mut inner_iterations = Vec::new();
    let mut inner_converged = Vec::new();
    let mut converged = false;
    let mut stopped_on_increase = false;

    let mut outer = 1;
    while outer <= config.max_outer_iterations {
        let solved = match config.engine {
            InnerEngine::Direct => {
                solve_qos_subproblem(instance, &current, &config.inner, cache.as_ref().unwrap())
                    .map(|run| (run.beams, run.iterations, run.converged))
            }
            InnerEngine::Consensus => solve_consensus_subproblem(instance, &current, &config.inner)
                .map(|run| (run.beams, run.iterations, run.converged)),
        };
        let (beams, iters, inner_ok) = match solved {
            Ok(x) => x,
            Err(e) if is_infeasibility(&e) => {
                // only a bad starting point can cause this; retry fresh seeds
                if outer == 1 && warm.is_none() && restarts < config.init_retry_budget {
                    restarts += 1;
                    let reseeded = config.init_seed.wrapping_add(1000 * restarts as u64);
                    let (w, p) = initialize(
                        instance,
                        InitStrategy::AdmmSearch,
                        config.init_retry_budget,
                        reseeded,
                        config.init_max_iterations,
                        config.inner.parallelism,
                    )?;
                    current = w;
                    provenance = p;
                    continue;
                }
                return Err(CcpError::SubproblemInfeasible { outer, restarts });
            }
            Err(e) => return Err(e.into()),
        };

        let p_new: f64 = beams.iter().map(|c| c.norm_sqr()).sum();
        if let Some(&p_prev) = objective_sequence.last() {
            if p_new > p_prev * (1.0 + 1e-6) {
                // inner tolerance can no longer sustain descent; keep the
                // previous (better) iterate
                stopped_on_increase = true;
                break;
            }
        }
        inner_iterations.push(iters);
        inner_converged.push(inner_ok);
        let rel = objective_sequence
            .last()
            .map(|&p| (p_new - p).abs() / p)
            .unwrap_or(f64::INFINITY);
        objective_sequence.push(p_new);
        current = beams;
        if rel < config.rel_decrease_tol {
            converged = true;
            break;
        }
        outer += 1;
    }

    let polish_scale = polish_to_feasibility(instance, &mut current);
    let feasibility = check_feasibility(&current, instance, REPORT_TOL);
    let report = CcpReport {
        objective_sequence,
        inner_iterations,
        inner_converged,
        feasibility,
        start_provenance: provenance,
        restarts,
        converged,
        stopped_on_increase,
        polish_scale,
        wall_time_s: begin.elapsed().as_secs_f64(),
    };
    Ok((BeamformerSet::new(current, instance)?, report))
}

/// The inner solver leaves the beamformer within its residual tolerance of
/// the capped copy, so achieved SINRs can undershoot targets by a few parts
/// in 1e-6. Growing the beamformer strictly raises every SINR; this finds
/// the minimal scale (at most 1.001) clearing all targets and applies it
/// only when the power caps still hold afterwards.
fn polish_to_feasibility(
    instance: &ProblemInstance,
    beams: &mut DMatrix<Complex64>,
) -> Option<f64> {
    let worst = |w: &DMatrix<Complex64>| -> f64 {
        (0..instance.num_users)
            .map(|k| {
                (instance.sinr_target[k] - compute_sinr(w, instance, k)) / instance.sinr_target[k]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let violation = worst(beams);
    if violation <= 0.0 || violation > 1e-4 {
        return None;
    }
    let max_scale = 1.001f64;
    if worst(&(beams.clone() * Complex64::new(max_scale, 0.0))) > 0.0 {
        return None;
    }
    let f = |s: f64| worst(&(beams.clone() * Complex64::new(s, 0.0)));
    let scale = crate::rootfind::monotone_root(f, 1.0, max_scale, 1e-12)
        .map(|s| (s + 1e-9).min(max_scale))
        .unwrap_or(max_scale);
    let candidate = beams.clone() * Complex64::new(scale, 0.0);
    let report = check_feasibility(&candidate, instance, REPORT_TOL);
    if report.feasible {
        *beams = candidate;
        Some(scale)
    } else {
        None
    }
}

/// One max-min-fairness probe: minimizes the worst per-antenna power ratio
/// subject to SINR targets `t·g`. Returns the beamformer, the achieved
/// ratio, and the outer report.
pub fn ccp_p(
    instance: &ProblemInstance,
    t: f64,
    config: &CcpConfig,
    warm: Option<&DMatrix<Complex64>>,
) -> Result<(BeamformerSet, f64, CcpReport), CcpError> {
    let scaled = instance.with_sinr_targets(
        instance
            .sinr_weight
            .iter()
            .map(|&g| t * g)
            .collect::<Vec<_>>(),
    );
    scaled.validate()?;
    let begin = std::time::Instant::now();

    // a warm start only helps if it already meets the scaled targets
    let (mut current, provenance) = match warm {
        Some(w) if satisfies_sinr(&scaled, w) => (w.clone_owned(), StartProvenance::Provided),
        _ => initialize(
            &scaled,
            config.init_strategy,
            config.init_retry_budget,
            config.init_seed,
            config.init_max_iterations,
            config.inner.parallelism,
        )?,
    };

    let cache = FactorCache::unit(&scaled);
    let mut objective_sequence = vec![max_power_ratio(&scaled, &current)];
    let mut inner_iterations = Vec::new();
    let mut inner_converged = Vec::new();
    let mut converged = false;
    let mut stopped_on_increase = false;

    for _outer in 1..=config.max_outer_iterations {
        let run = solve_mmf_subproblem(&scaled, &current, &config.inner, &cache)?;
        let r_new = max_power_ratio(&scaled, &run.beams);
        let p_prev = *objective_sequence.last().unwrap();
        if r_new > p_prev * (1.0 + 1e-6) {
            stopped_on_increase = true;
            break;
        }
        inner_iterations.push(run.iterations);
        inner_converged.push(run.converged);
        objective_sequence.push(r_new);
        current = run.beams;
        let rel = (r_new - p_prev).abs() / p_prev;
        if rel < config.rel_decrease_tol {
            converged = true;
            break;
        }
    }

    let ratio = max_power_ratio(&scaled, &current);
    let feasibility = check_feasibility(&current, &scaled, REPORT_TOL);
    let report = CcpReport {
        objective_sequence,
        inner_iterations,
        inner_converged,
        feasibility,
        start_provenance: provenance,
        restarts: 0,
        converged,
        stopped_on_increase,
        polish_scale: None,
        wall_time_s: begin.elapsed().as_secs_f64(),
    };
    Ok((BeamformerSet::new(current, &scaled)?, ratio, report))
}
