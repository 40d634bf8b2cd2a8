//! ADMM engine for the max-min-fairness power-ratio subproblem.
//!
//! Same splitting as the QoS engine plus a per-antenna copy α_n of the
//! global power-ratio variable r. The objective is r itself, so the
//! beamformer block solves the unit-form system and r has the closed-form
//! average update r = mean(α + μ) − 1/(Nρ).
//!
//! The instance passed in must already carry the scaled targets t·g as its
//! `sinr_target` vector; the engine does not scale anything itself.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{
    diff_norm_sq, map_indexed, norm_sq, taylor_gains, w_update, AdmmConfig, AdmmError, AdmmState,
    FactorCache, IterationRecord,
};
use crate::model::ProblemInstance;
use crate::qcqp1::{gamma_update_convex, v_alpha_update, GammaSubproblem};

#[derive(Debug)]
pub struct MmfAdmmRun {
    pub beams: DMatrix<Complex64>,
    /// Final power-ratio variable r.
    pub ratio: f64,
    pub state: AdmmState,
    pub trajectory: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Closed-form minimizer of r + (ρ/2)·Σ_n (α_n − r + μ_n)².
pub fn ratio_update(ratio_copies: &[f64], ratio_dual: &[f64], rho: f64) -> f64 {
    let n = ratio_copies.len() as f64;
    let sum: f64 = ratio_copies.iter().zip(ratio_dual).map(|(a, m)| a + m).sum();
    sum / n - 1.0 / (n * rho)
}

/// Solves one convexified power-ratio subproblem at the given linearization
/// point. Initialization: beams at the linearization point, duals at zero,
/// r at the point's own worst per-antenna power ratio.
///
/// `cache` must be the unit-form factorization for this instance.
pub fn solve_mmf_subproblem(
    instance: &ProblemInstance,
    linearization: &DMatrix<Complex64>,
    config: &AdmmConfig,
    cache: &FactorCache,
) -> Result<MmfAdmmRun, AdmmError> {
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
    let rho = config.rho;

    let mut beams = linearization.clone_owned();
    let mut gains = DMatrix::<Complex64>::zeros(k, m);
    let mut capped = DMatrix::<Complex64>::zeros(n, m);
    let mut gains_dual = DMatrix::<Complex64>::zeros(k, m);
    let mut capped_dual = DMatrix::<Complex64>::zeros(n, m);
    let mut ratio_copies = DVector::<f64>::zeros(n);
    let mut ratio_dual = DVector::<f64>::zeros(n);
    let mut beam_gains = h.adjoint() * &beams;
    let mut ratio = (0..n)
        .map(|ant| {
            (0..m).map(|j| beams[(ant, j)].norm_sqr()).sum::<f64>()
                / instance.antenna_power_cap[ant]
        })
        .fold(f64::NEG_INFINITY, f64::max);

    let dim = (2 * (k * m + n * m) + n) as f64;
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=config.max_iterations {
        iterations = iter;
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

        // joint (copy, ratio-copy) block: N independent scalar-constrained solves
        let joint = map_indexed(n, config.parallelism, |ant| {
            let u: Vec<Complex64> = (0..m)
                .map(|j| beams[(ant, j)] - capped_dual[(ant, j)])
                .collect();
            v_alpha_update(
                &u,
                ratio - ratio_dual[ant],
                instance.antenna_power_cap[ant],
                rho,
            )
        });
        for (ant, (row, alpha, _pi)) in joint.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                capped[(ant, j)] = v;
            }
            ratio_copies[ant] = alpha;
        }

        let beams_next = w_update(
            cache,
            h,
            &(&gains + &gains_dual),
            Some(&(&capped + &capped_dual)),
            config.parallelism,
        );
        let beam_gains_next = h.adjoint() * &beams_next;
        let ratio_next = ratio_update(ratio_copies.as_slice(), ratio_dual.as_slice(), rho);

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
        for (d, &alpha) in ratio_dual.iter_mut().zip(ratio_copies.iter()) {
            let r = alpha - ratio_next;
            primal_sq += r * r;
            *d += r;
        }

        let dual_sq = diff_norm_sq(&beam_gains_next, &beam_gains)
            + diff_norm_sq(&beams_next, &beams)
            + n as f64 * (ratio_next - ratio) * (ratio_next - ratio);
        let primal = primal_sq.sqrt();
        let dual = rho * dual_sq.sqrt();

        beams = beams_next;
        beam_gains = beam_gains_next;
        ratio = ratio_next;

        let scale_primal = (norm_sq(&gains) + norm_sq(&capped) + ratio_copies.norm_squared())
            .sqrt()
            .max((norm_sq(&beam_gains) + norm_sq(&beams) + n as f64 * ratio * ratio).sqrt());
        let eps_pri = dim.sqrt() * config.eps_abs + config.eps_rel * scale_primal;
        let dual_scale = rho
            * (norm_sq(&gains_dual) + norm_sq(&capped_dual) + ratio_dual.norm_squared()).sqrt();
        let eps_dual = dim.sqrt() * config.eps_abs + config.eps_rel * dual_scale;

        trajectory.push(IterationRecord {
            iteration: iter,
            objective: ratio,
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
        ratio_copies: Some(ratio_copies),
        ratio_dual: Some(ratio_dual),
        ratio: Some(ratio),
        iterations,
    };
    Ok(MmfAdmmRun {
        beams,
        ratio,
        state,
        trajectory,
        converged,
        iterations,
    })
}
