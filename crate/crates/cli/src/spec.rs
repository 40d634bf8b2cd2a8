//! Experiment specification: the sweep grid, physical parameters in dB,
//! solver selection, and output options. Serialized as JSON; every field
//! has a default so minimal specs stay short.

use serde::{Deserialize, Serialize};

pub const EXPERIMENT_FORMAT: &str = "mgbeam-experiment-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Qos,
    Mmf,
    SubproblemBench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    CcpAdmm,
    CcpConsensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ParallelismSpec {
    #[default]
    Sequential,
    DeterministicParallel,
}

impl From<ParallelismSpec> for mgbeam_core::admm::Parallelism {
    fn from(p: ParallelismSpec) -> Self {
        match p {
            ParallelismSpec::Sequential => Self::Sequential,
            ParallelismSpec::DeterministicParallel => Self::DeterministicParallel,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmfOptions {
    #[serde(default = "default_tol_t")]
    pub tol_t: f64,
    #[serde(default = "default_max_probes")]
    pub max_probes: usize,
}

impl Default for MmfOptions {
    fn default() -> Self {
        Self {
            tol_t: default_tol_t(),
            max_probes: default_max_probes(),
        }
    }
}

fn default_tol_t() -> f64 {
    4e-3
}
fn default_max_probes() -> usize {
    60
}
fn default_format() -> String {
    EXPERIMENT_FORMAT.to_string()
}
fn default_noise() -> f64 {
    1.0
}
fn default_sinr_db() -> f64 {
    10.0
}
fn default_cap_dbm() -> f64 {
    40.0
}
fn default_base_seed() -> u64 {
    1
}
fn default_repetitions() -> usize {
    10
}
fn default_eps() -> f64 {
    1e-6
}
fn default_max_inner() -> usize {
    3000
}
fn default_max_outer() -> usize {
    30
}
fn default_rel_decrease() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_format")]
    pub format: String,
    pub mode: Mode,
    /// Grid axes; the sweep runs their cartesian product.
    pub antennas: Vec<usize>,
    pub users: Vec<usize>,
    pub groups: Vec<usize>,
    /// Per-user SINR target (QoS) in dB.
    #[serde(default = "default_sinr_db")]
    pub sinr_target_db: f64,
    /// Noise power in watts (linear).
    #[serde(default = "default_noise")]
    pub noise_power: f64,
    /// Per-antenna cap in dBm.
    #[serde(default = "default_cap_dbm")]
    pub power_cap_dbm: f64,
    /// Channel seeds are base_seed .. base_seed + repetitions.
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub solver: Solver,
    /// Penalty override; None picks 2/√N (direct) or 10/√N (consensus).
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps_abs: f64,
    #[serde(default = "default_eps")]
    pub eps_rel: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner_iterations: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer_iterations: usize,
    #[serde(default = "default_rel_decrease")]
    pub rel_decrease_tol: f64,
    #[serde(default)]
    pub parallelism: ParallelismSpec,
    /// When false, every wall-time written to disk is zeroed, making reruns
    /// byte-identical.
    #[serde(default = "default_true")]
    pub record_timings: bool,
    #[serde(default)]
    pub mmf: MmfOptions,
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("spec parse error: {0}")]
    Parse(String),
    #[error("invalid spec: {0}")]
    Invalid(String),
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.format != EXPERIMENT_FORMAT {
            return Err(SpecError::Invalid(format!(
                "unsupported format '{}', expected '{EXPERIMENT_FORMAT}'",
                self.format
            )));
        }
        if self.antennas.is_empty() || self.users.is_empty() || self.groups.is_empty() {
            return Err(SpecError::Invalid("empty grid axis".into()));
        }
        if self.repetitions == 0 {
            return Err(SpecError::Invalid("repetitions must be positive".into()));
        }
        if self.noise_power <= 0.0 || !self.noise_power.is_finite() {
            return Err(SpecError::Invalid("noise_power must be positive".into()));
        }
        Ok(())
    }

    /// Seeds covered by this spec, in run order.
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repetitions as u64).map(move |i| self.base_seed + i)
    }
}
