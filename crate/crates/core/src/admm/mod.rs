//! Inner-loop ADMM engines.
//!
//! Four engines share the same skeleton: the convexified QoS subproblem
//! ([`solve_qos_subproblem`]), its max-min-fairness counterpart
//! ([`solve_mmf_subproblem`]), the SINR-only feasibility iteration used to
//! find CCP starting points ([`solve_feasibility_admm`]), and a
//! consensus-ADMM baseline solving the same convex subproblem
//! ([`solve_consensus_subproblem`]).
//!
//! Stopping follows the standard scaled-dual residual rule: the primal
//! residual stacks the splitting constraints, the dual residual is driven by
//! successive beamformer differences, and both are compared against
//! `ε_abs·√dim + ε_rel·scale` thresholds.
//!
//! Each engine owns its state exclusively during a solve. The per-user gain
//! updates and per-antenna projections are independent within an iteration;
//! [`Parallelism::DeterministicParallel`] fans them out over a thread pool
//! while keeping every reduction sequential, so both modes produce identical
//! trajectories.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProblemInstance;
use crate::qcqp1::Qcqp1Error;

mod consensus;
mod feasibility;
mod mmf;
mod qos;

pub use consensus::{solve_consensus_subproblem, ConsensusRun};
pub use feasibility::{solve_feasibility_admm, FeasibilityRun};
pub use mmf::{ratio_update, solve_mmf_subproblem, MmfAdmmRun};
pub use qos::{is_infeasibility, solve_qos_subproblem, QosAdmmRun};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error(transparent)]
    Subproblem(#[from] Qcqp1Error),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no SINR-satisfying point found within {iterations} iterations")]
    NoSinrPoint { iterations: usize },
}

/// How the independent per-user/per-antenna updates are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Rayon fan-out with order-preserving collection; all reductions stay
    /// sequential, so results match the sequential mode bit for bit.
    DeterministicParallel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Penalty parameter ρ.
    pub rho: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iterations: usize,
    pub parallelism: Parallelism,
}

impl AdmmConfig {
    /// Defaults for the tailored splitting: ρ = 2/√N, tolerances 1e-6,
    /// 3000-iteration cap.
    pub fn qos_default(num_antennas: usize) -> Self {
        Self {
            rho: 2.0 / (num_antennas as f64).sqrt(),
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iterations: 3000,
            parallelism: Parallelism::Sequential,
        }
    }

    /// Defaults for the consensus baseline: ρ = 10/√N.
    pub fn consensus_default(num_antennas: usize) -> Self {
        Self {
            rho: 10.0 / (num_antennas as f64).sqrt(),
            ..Self::qos_default(num_antennas)
        }
    }
}

/// Primal, auxiliary, and dual variables of one inner solve, exported for
/// inspection once the engine returns.
#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Per-user received beam gains (K×M), the Γ block.
    pub gains: DMatrix<Complex64>,
    /// Power-capped copy of the beamformer (N×M), the v block.
    pub capped: DMatrix<Complex64>,
    /// Beamforming matrix (N×M).
    pub beams: DMatrix<Complex64>,
    /// Scaled duals of the gain-consistency constraints (K×M).
    pub gains_dual: DMatrix<Complex64>,
    /// Scaled duals of the copy-consistency constraints (N×M).
    pub capped_dual: DMatrix<Complex64>,
    /// MMF only: per-antenna power-ratio copies (α) and their duals (μ).
    pub ratio_copies: Option<DVector<f64>>,
    pub ratio_dual: Option<DVector<f64>>,
    /// MMF only: the global power-ratio variable r.
    pub ratio: Option<f64>,
    pub iterations: usize,
}

/// One trajectory row per ADMM iteration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub wall_time_s: f64,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "iteration,objective,primal_residual,dual_residual,wall_time_s";

pub fn write_trajectory_csv<W: std::io::Write>(
    mut out: W,
    rows: &[IterationRecord],
) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.objective, r.primal_residual, r.dual_residual, r.wall_time_s
        )?;
    }
    Ok(())
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<IterationRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRAJECTORY_CSV_HEADER => {}
        other => return Err(format!("bad trajectory header: {other:?}")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(format!("bad trajectory row: {line}"));
            }
            Ok(IterationRecord {
                iteration: fields[0].parse().map_err(|e| format!("{e}: {line}"))?,
                objective: fields[1].parse().map_err(|e| format!("{e}: {line}"))?,
                primal_residual: fields[2].parse().map_err(|e| format!("{e}: {line}"))?,
                dual_residual: fields[3].parse().map_err(|e| format!("{e}: {line}"))?,
                wall_time_s: fields[4].parse().map_err(|e| format!("{e}: {line}"))?,
            })
        })
        .collect()
}

/// Cached Hermitian factorization of the beamformer-update system matrix,
/// built once per (instance, ρ) and reused by every iteration and every CCP
/// round (the matrix depends on neither the linearization point nor the
/// group index).
pub struct FactorCache {
    matrix: DMatrix<Complex64>,
    chol: nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>,
    /// RHS scale applied by [`w_update`]: ρ for the QoS form, 1 otherwise.
    rhs_scale: f64,
}

impl FactorCache {
    /// QoS form: (2 + ρ)·I + ρ·Σ_k h_k h_k^H, right-hand sides scaled by ρ.
    pub fn qos(instance: &ProblemInstance, rho: f64) -> Self {
        let n = instance.num_antennas;
        let h = &instance.channels;
        let mut m = h * h.adjoint() * Complex64::new(rho, 0.0);
        for i in 0..n {
            m[(i, i)] += Complex64::new(2.0 + rho, 0.0);
        }
        Self::from_matrix(m, rho)
    }

    /// Unit form: I + Σ_k h_k h_k^H, unscaled right-hand sides. Used by the
    /// feasibility iteration and the MMF engine.
    pub fn unit(instance: &ProblemInstance) -> Self {
        let n = instance.num_antennas;
        let h = &instance.channels;
        let mut m = h * h.adjoint();
        for i in 0..n {
            m[(i, i)] += Complex64::new(1.0, 0.0);
        }
        Self::from_matrix(m, 1.0)
    }

    fn from_matrix(matrix: DMatrix<Complex64>, rhs_scale: f64) -> Self {
        let chol = nalgebra::linalg::Cholesky::new(matrix.clone())
            .expect("system matrix is Hermitian positive definite by construction");
        Self {
            matrix,
            chol,
            rhs_scale,
        }
    }

    pub fn system_matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn rhs_scale(&self) -> f64 {
        self.rhs_scale
    }

    pub fn solve(&self, rhs: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        self.chol.solve(rhs)
    }
}

/// Beamformer block update: column `m` of the result solves
/// `A w_m = scale·(H·(Γ+λ)_m + (v+z)_m)` against the cached factorization,
/// where `scale` is ρ for the QoS form and 1 for the unit form. The copy
/// term is optional because the feasibility iteration has no (v, z) block.
pub fn w_update(
    cache: &FactorCache,
    channels: &DMatrix<Complex64>,
    gains_plus_dual: &DMatrix<Complex64>,
    copy_plus_dual: Option<&DMatrix<Complex64>>,
    parallelism: Parallelism,
) -> DMatrix<Complex64> {
    let mut rhs = channels * gains_plus_dual;
    if let Some(c) = copy_plus_dual {
        rhs += c;
    }
    if cache.rhs_scale != 1.0 {
        rhs *= Complex64::new(cache.rhs_scale, 0.0);
    }
    match parallelism {
        Parallelism::Sequential => cache.solve(&rhs),
        Parallelism::DeterministicParallel => {
            use rayon::prelude::*;
            let cols: Vec<DVector<Complex64>> = (0..rhs.ncols())
                .into_par_iter()
                .map(|m| cache.chol.solve(&rhs.column(m).clone_owned()))
                .collect();
            let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
            for (m, col) in cols.iter().enumerate() {
                out.set_column(m, col);
            }
            out
        }
    }
}

/// Frobenius-style squared norm of a complex matrix.
pub(crate) fn norm_sq(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum()
}

pub(crate) fn diff_norm_sq(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Map per-user results either sequentially or on the rayon pool, preserving
/// input order in both cases.
pub(crate) fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(
    count: usize,
    parallelism: Parallelism,
    f: F,
) -> Vec<T> {
    match parallelism {
        Parallelism::Sequential => (0..count).map(f).collect(),
        Parallelism::DeterministicParallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
    }
}

/// Per-user Taylor gains h_k^H w^{(t)}_{m_k} at a linearization point.
pub(crate) fn taylor_gains(
    instance: &ProblemInstance,
    linearization: &DMatrix<Complex64>,
) -> Vec<Complex64> {
    let lin_gains = instance.channels.adjoint() * linearization;
    (0..instance.num_users)
        .map(|k| lin_gains[(k, instance.group_of_user[k])])
        .collect()
}

/// SINR of every user evaluated from a gain matrix G = H^H W.
pub(crate) fn worst_relative_sinr_violation(
    instance: &ProblemInstance,
    gains: &DMatrix<Complex64>,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..instance.num_users {
        let own = instance.group_of_user[k];
        let mut interference = 0.0;
        for m in 0..instance.num_groups {
            if m != own {
                interference += gains[(k, m)].norm_sqr();
            }
        }
        let sinr = gains[(k, own)].norm_sqr() / (interference + instance.noise_power[k]);
        let rel = (instance.sinr_target[k] - sinr) / instance.sinr_target[k];
        worst = worst.max(rel);
    }
    worst
}
