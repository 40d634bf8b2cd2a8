//! ADMM engine for the convexified QoS subproblem.
//!
//! Splitting: gains Γ = H^H W and a power-capped copy v = W, with the
//! linearized SINR constraints living on Γ and the per-antenna caps on v.
//! One iteration runs K parallel gain projections, N parallel ball
//! projections, M cached Hermitian solves, and the scaled dual updates.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    diff_norm_sq, map_indexed, norm_sq, taylor_gains, w_update, AdmmConfig, AdmmError, AdmmState,
    FactorCache, IterationRecord,
};
use crate::model::ProblemInstance;
use crate::qcqp1::{gamma_update_convex, project_ball, GammaSubproblem, Qcqp1Error};

#[derive(Debug)]
pub struct QosAdmmRun {
    pub beams: DMatrix<Complex64>,
    pub state: AdmmState,
    pub trajectory: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves one convexified QoS subproblem at the given linearization point.
/// Initialization: beams at the linearization point, duals at zero.
///
/// `cache` must be the QoS-form factorization for this instance and
/// `config.rho`; it is shared across CCP rounds.
pub fn solve_qos_subproblem(
    instance: &ProblemInstance,
    linearization: &DMatrix<Complex64>,
    config: &AdmmConfig,
    cache: &FactorCache,
) -> Result<QosAdmmRun, AdmmError> {
    let (n, k, m) = (
        instance.num_antennas,
        instance.num_users,
        instance.num_groups,
    );
    if linearization.nrows() != n || linearization.ncols() != m {
        return Err(AdmmError::DimensionMismatch(format!(
            "linearization is {}x{}, expected {n}x{m}",
            linearization.nrows(),
            linearization.ncols()
        )));
    }
    let start = Instant::now();
    let h = &instance.channels;
    let taus = taylor_gains(instance, linearization);

    let mut beams = linearization.clone_owned();
    let mut gains = DMatrix::<Complex64>::zeros(k, m);
    let mut capped = DMatrix::<Complex64>::zeros(n, m);
    let mut gains_dual = DMatrix::<Complex64>::zeros(k, m);
    let mut capped_dual = DMatrix::<Complex64>::zeros(n, m);
    let mut beam_gains = h.adjoint() * &beams; // G = H^H W, carried across iterations

    let dim = (2 * (k * m + n * m)) as f64;
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
        // gain block: K independent projections onto the linearized constraints
        let rows = map_indexed(k, config.parallelism, |user| {
            let anchor: Vec<Complex64> = (0..m)
                .map(|j| beam_gains[(user, j)] - gains_dual[(user, j)])
                .collect();
            let sub = GammaSubproblem {
                anchor,
                own_group: instance.group_of_user[user],
                target: instance.sinr_target[user],
                noise_power: instance.noise_power[user],
                taylor_inner: taus[user],
            };
            gamma_update_convex(&sub)
        });
        for (user, row) in rows.into_iter().enumerate() {
            let (row, _pi) = row?;
            for (j, g) in row.into_iter().enumerate() {
                gains[(user, j)] = g;
            }
        }

        // copy block: N independent ball projections of W − Z rows
        let capped_rows = map_indexed(n, config.parallelism, |ant| {
            let u: Vec<Complex64> = (0..m)
                .map(|j| beams[(ant, j)] - capped_dual[(ant, j)])
                .collect();
            project_ball(&u, instance.antenna_power_cap[ant].sqrt())
        });
        for (ant, row) in capped_rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                capped[(ant, j)] = v;
            }
        }

        // beamformer block against the cached factorization
        let beams_next = w_update(
            cache,
            h,
            &(&gains + &gains_dual),
            Some(&(&capped + &capped_dual)),
            config.parallelism,
        );
        let beam_gains_next = h.adjoint() * &beams_next;

        // scaled dual ascent
        let mut primal_sq = 0.0;
        for (d, (g, bg)) in gains_dual
            .iter_mut()
            .zip(gains.iter().zip(beam_gains_next.iter()))
        {
            let r = g - bg;
            primal_sq += r.norm_sqr();
            *d += r;
        }
        for (d, (v, w)) in capped_dual
            .iter_mut()
            .zip(capped.iter().zip(beams_next.iter()))
        {
            let r = v - w;
            primal_sq += r.norm_sqr();
            *d += r;
        }

        let dual_sq = diff_norm_sq(&beam_gains_next, &beam_gains)
            + diff_norm_sq(&beams_next, &beams);
        let primal = primal_sq.sqrt();
        let dual = config.rho * dual_sq.sqrt();

        beams = beams_next;
        beam_gains = beam_gains_next;

        let objective = norm_sq(&beams);
        let scale_primal = (norm_sq(&gains) + norm_sq(&capped))
            .sqrt()
            .max((norm_sq(&beam_gains) + norm_sq(&beams)).sqrt());
        let eps_pri = dim.sqrt() * config.eps_abs + config.eps_rel * scale_primal;
        let dual_scale = config.rho * (norm_sq(&gains_dual) + norm_sq(&capped_dual)).sqrt();
        let eps_dual = dim.sqrt() * config.eps_abs + config.eps_rel * dual_scale;

        trajectory.push(IterationRecord {
            iteration: iter,
            objective,
            primal_residual: primal,
            dual_residual: dual,
            wall_time_s: start.elapsed().as_secs_f64(),
        });

        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }

    let state = AdmmState {
        gains,
        capped,
        beams: beams.clone(),
        gains_dual,
        capped_dual,
        ratio_copies: None,
        ratio_dual: None,
        ratio: None,
        iterations,
    };
    Ok(QosAdmmRun {
        beams,
        state,
        trajectory,
        converged,
        iterations,
    })
}

impl QosAdmmRun {
    /// Final objective Σ‖w_m‖².
    pub fn objective(&self) -> f64 {
        norm_sq(&self.beams)
    }
}

/// Convenience check used by drivers: true when the error is a subproblem
/// infeasibility, which calls for a restart rather than a hard failure.
pub fn is_infeasibility(err: &AdmmError) -> bool {
    matches!(err, AdmmError::Subproblem(Qcqp1Error::InfeasibleSubproblem))
}
