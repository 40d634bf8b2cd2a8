//! SINR-only feasibility iteration used to find CCP starting points.
//!
//! Alternates the non-convex per-user gain projection (original DC
//! constraints, quartic dual) with an unpenalized least-squares beamformer
//! fit, stopping as soon as the beamformer itself satisfies every SINR
//! target. The iteration has no penalty parameter and ignores the power
//! caps entirely: the produced point seeds CCP, which restores cap
//! feasibility from its first round on.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{
    map_indexed, w_update, worst_relative_sinr_violation, AdmmError, FactorCache,
    IterationRecord, Parallelism,
};
use crate::model::ProblemInstance;
use crate::qcqp1::{gamma_update_feasibility, GammaSubproblem};

#[derive(Debug)]
pub struct FeasibilityRun {
    pub beams: DMatrix<Complex64>,
    pub iterations: usize,
    /// Objective column records the worst relative SINR violation.
    pub trajectory: Vec<IterationRecord>,
}

/// Runs the feasibility iteration from the given starting beamformer.
/// Returns the first iterate whose SINR targets all hold (violation ≤ 0),
/// or [`AdmmError::NoSinrPoint`] after `max_iterations`.
pub fn solve_feasibility_admm(
    instance: &ProblemInstance,
    initial: &DMatrix<Complex64>,
    max_iterations: usize,
    parallelism: Parallelism,
) -> Result<FeasibilityRun, AdmmError> {
    let (n, k, m) = (
        instance.num_antennas,
        instance.num_users,
        instance.num_groups,
    );
    if initial.nrows() != n || initial.ncols() != m {
        return Err(AdmmError::DimensionMismatch(format!(
            "initial point is {}x{}, expected {n}x{m}",
            initial.nrows(),
            initial.ncols()
        )));
    }
    let start = Instant::now();
    let h = &instance.channels;
    let cache = FactorCache::unit(instance);

    let mut beams = initial.clone_owned();
    let mut gains = DMatrix::<Complex64>::zeros(k, m);
    let mut gains_dual = DMatrix::<Complex64>::zeros(k, m);
    let mut beam_gains = h.adjoint() * &beams;
    let mut trajectory = Vec::new();

    let violation = worst_relative_sinr_violation(instance, &beam_gains);
    if violation <= 0.0 {
        return Ok(FeasibilityRun {
            beams: nudge_interior(beams),
            iterations: 0,
            trajectory,
        });
    }

    for iter in 1..=max_iterations {
        let rows = map_indexed(k, parallelism, |user| {
            let anchor: Vec<Complex64> = (0..m)
                .map(|j| beam_gains[(user, j)] - gains_dual[(user, j)])
                .collect();
            let sub = GammaSubproblem {
                anchor,
                own_group: instance.group_of_user[user],
                target: instance.sinr_target[user],
                noise_power: instance.noise_power[user],
                taylor_inner: Complex64::new(0.0, 0.0),
            };
            gamma_update_feasibility(&sub)
        });
        for (user, row) in rows.into_iter().enumerate() {
            let (row, _pi) = row?;
            for (j, g) in row.into_iter().enumerate() {
                gains[(user, j)] = g;
            }
        }

        beams = w_update(&cache, h, &(&gains + &gains_dual), None, parallelism);
        beam_gains = h.adjoint() * &beams;

        let mut primal_sq = 0.0;
        for (d, (g, bg)) in gains_dual
            .iter_mut()
            .zip(gains.iter().zip(beam_gains.iter()))
        {
            let r = g - bg;
            primal_sq += r.norm_sqr();
            *d += r;
        }

        let violation = worst_relative_sinr_violation(instance, &beam_gains);
        trajectory.push(IterationRecord {
            iteration: iter,
            objective: violation,
            primal_residual: primal_sq.sqrt(),
            dual_residual: 0.0,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if violation <= 0.0 {
            return Ok(FeasibilityRun {
                beams: nudge_interior(beams),
                iterations: iter,
                trajectory,
            });
        }
    }
    Err(AdmmError::NoSinrPoint {
        iterations: max_iterations,
    })
}

/// The iteration often lands exactly on the SINR boundary (the gain
/// projection puts active users on the constraint surface). Growing the
/// beamformer strictly raises every SINR, so a relative bump turns the
/// boundary point into one whose targets survive re-evaluation in any
/// summation order.
fn nudge_interior(beams: DMatrix<Complex64>) -> DMatrix<Complex64> {
    beams * Complex64::new(1.0 + 1e-6, 0.0)
}
