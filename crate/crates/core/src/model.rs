//! Problem instances, synthetic channel generation, and feasibility checks.
//!
//! All quantities in this module are linear (watts, linear SINR ratios);
//! dB/dBm conversions belong to the CLI boundary. Types are immutable after
//! construction and safe to share across threads.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("groups do not partition the users: {0}")]
    GroupPartition(String),
    #[error("non-positive parameter: {0}")]
    NonPositiveParameter(String),
    #[error("instance file parse error: {0}")]
    Parse(String),
}

/// One multi-group multicast design problem: channels, group membership,
/// per-user noise powers and SINR targets/weights, per-antenna power caps.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub num_antennas: usize,
    pub num_users: usize,
    pub num_groups: usize,
    /// N×K complex channel matrix; column `k` is user `k`'s channel.
    pub channels: DMatrix<Complex64>,
    /// Group index of each user.
    pub group_of_user: Vec<usize>,
    /// Per-user noise power in watts (σ²).
    pub noise_power: Vec<f64>,
    /// Per-user SINR target, linear (QoS mode).
    pub sinr_target: Vec<f64>,
    /// Per-user SINR weight, linear (MMF mode).
    pub sinr_weight: Vec<f64>,
    /// Per-antenna radiated power cap in watts.
    pub antenna_power_cap: Vec<f64>,
    /// Seed the channels were drawn from, when synthetically generated.
    pub channel_seed: Option<u64>,
}

/// An N×M beamforming matrix; column `m` is the beamformer of group `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    matrix: DMatrix<Complex64>,
}

impl BeamformerSet {
    pub fn new(matrix: DMatrix<Complex64>, instance: &ProblemInstance) -> Result<Self, ModelError> {
        if matrix.nrows() != instance.num_antennas || matrix.ncols() != instance.num_groups {
            return Err(ModelError::InvalidDimensions(format!(
                "beamformer is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                instance.num_antennas,
                instance.num_groups
            )));
        }
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(ModelError::InvalidDimensions(
                "beamformer has non-finite entries".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    /// Total transmit power Σ_m ‖w_m‖².
    pub fn total_power(&self) -> f64 {
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Constraint slack diagnostics for a candidate beamformer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Achieved SINR minus target, linear, per user.
    pub sinr_slack: Vec<f64>,
    /// Cap minus radiated power, watts, per antenna.
    pub antenna_power_slack: Vec<f64>,
    /// max_k (γ_k − SINR_k)/γ_k; negative when all targets are met.
    pub worst_sinr_violation: f64,
    /// max_n (power_n − P_n) in watts; negative when all caps hold.
    pub worst_power_violation: f64,
    pub feasible: bool,
}

impl ProblemInstance {
    /// Validates dimensions, positivity, and that the groups partition the users.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (n, k, m) = (self.num_antennas, self.num_users, self.num_groups);
        if n < 1 || k < 1 || m < 1 {
            return Err(ModelError::InvalidDimensions(
                "N, K, M must all be at least 1".into(),
            ));
        }
        if m > k {
            return Err(ModelError::InvalidDimensions(format!(
                "more groups ({m}) than users ({k})"
            )));
        }
        if self.channels.nrows() != n || self.channels.ncols() != k {
            return Err(ModelError::InvalidDimensions(format!(
                "channel matrix is {}x{}, expected {}x{}",
                self.channels.nrows(),
                self.channels.ncols(),
                n,
                k
            )));
        }
        for (name, v, len) in [
            ("group_of_user", None, self.group_of_user.len()),
            ("noise_power", Some(&self.noise_power), self.noise_power.len()),
            ("sinr_target", Some(&self.sinr_target), self.sinr_target.len()),
            ("sinr_weight", Some(&self.sinr_weight), self.sinr_weight.len()),
        ] {
            if len != k {
                return Err(ModelError::InvalidDimensions(format!(
                    "{name} has length {len}, expected {k}"
                )));
            }
            if let Some(vals) = v {
                if vals.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                    return Err(ModelError::NonPositiveParameter(name.into()));
                }
            }
        }
        if self.antenna_power_cap.len() != n {
            return Err(ModelError::InvalidDimensions(format!(
                "antenna_power_cap has length {}, expected {n}",
                self.antenna_power_cap.len()
            )));
        }
        if self.antenna_power_cap.iter().any(|&p| p <= 0.0 || !p.is_finite()) {
            return Err(ModelError::NonPositiveParameter("antenna_power_cap".into()));
        }
        let mut seen = vec![false; m];
        for (user, &g) in self.group_of_user.iter().enumerate() {
            if g >= m {
                return Err(ModelError::GroupPartition(format!(
                    "user {user} assigned to group {g} out of {m}"
                )));
            }
            seen[g] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(ModelError::GroupPartition(format!("group {g} has no users")));
        }
        Ok(())
    }

    /// Copy with the SINR targets replaced (used for the scaled-target
    /// subproblems of the max-min fairness search).
    pub fn with_sinr_targets(&self, targets: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.sinr_target = targets;
        out
    }

    /// Users of group `m`, in index order.
    pub fn users_of_group(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of_user
            .iter()
            .enumerate()
            .filter_map(move |(k, &g)| (g == m).then_some(k))
    }

    /// Sum of all per-antenna caps.
    pub fn total_power_budget(&self) -> f64 {
        self.antenna_power_cap.iter().sum()
    }
}

/// Draws a synthetic instance: i.i.d. standard complex Gaussian channels
/// (unit total variance per entry), uniform noise power, SINR target, and
/// per-antenna cap. Users are dealt to the `m` groups round-robin, which
/// gives the equal split whenever `k` is divisible by `m`.
///
/// The channel draw is fully determined by `rng_seed`: entries are filled
/// column by column (user by user), antenna index fastest.
pub fn generate_instance(
    num_antennas: usize,
    num_users: usize,
    num_groups: usize,
    sinr_target: f64,
    noise_power: f64,
    power_cap_per_antenna: f64,
    rng_seed: u64,
) -> Result<ProblemInstance, ModelError> {
    if num_antennas < 1 || num_users < 1 || num_groups < 1 || num_groups > num_users {
        return Err(ModelError::InvalidDimensions(format!(
            "N={num_antennas}, K={num_users}, M={num_groups}"
        )));
    }
    let channels = draw_channels(num_antennas, num_users, rng_seed);
    let group_of_user = (0..num_users).map(|k| k % num_groups).collect();
    let instance = ProblemInstance {
        num_antennas,
        num_users,
        num_groups,
        channels,
        group_of_user,
        noise_power: vec![noise_power; num_users],
        sinr_target: vec![sinr_target; num_users],
        sinr_weight: vec![1.0; num_users],
        antenna_power_cap: vec![power_cap_per_antenna; num_antennas],
        channel_seed: Some(rng_seed),
    };
    instance.validate()?;
    Ok(instance)
}

/// N×K matrix of i.i.d. CN(0, 1) entries from a seeded generator.
pub fn draw_channels(num_antennas: usize, num_users: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(num_antennas, num_users, |_, _| {
        // from_fn fills column-major, so the draw order is per user.
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * scale, im * scale)
    })
}

/// Received SINR of user `k` under beamformer `w`:
/// |h_k^H w_{m_k}|² / (Σ_{j≠m_k} |h_k^H w_j|² + σ_k²).
pub fn compute_sinr(w: &DMatrix<Complex64>, instance: &ProblemInstance, user: usize) -> f64 {
    let h_k = instance.channels.column(user);
    let own = instance.group_of_user[user];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for m in 0..instance.num_groups {
        let gain: Complex64 = h_k.dotc(&w.column(m)); // h_k^H w_m
        if m == own {
            signal = gain.norm_sqr();
        } else {
            interference += gain.norm_sqr();
        }
    }
    signal / (interference + instance.noise_power[user])
}

/// Radiated power of antenna `n`: Σ_m |w[n,m]|².
pub fn antenna_power(w: &DMatrix<Complex64>, n: usize) -> f64 {
    w.row(n).iter().map(|c| c.norm_sqr()).sum()
}

/// Evaluates every SINR target and per-antenna cap. SINR violations are
/// relative, (γ_k − SINR_k)/γ_k, so they are scale-free across targets;
/// power violations are absolute watts. `feasible` requires both worst
/// violations to be at most `tol`.
pub fn check_feasibility(
    w: &DMatrix<Complex64>,
    instance: &ProblemInstance,
    tol: f64,
) -> FeasibilityReport {
    let sinr_slack: Vec<f64> = (0..instance.num_users)
        .map(|k| compute_sinr(w, instance, k) - instance.sinr_target[k])
        .collect();
    let worst_sinr_violation = sinr_slack
        .iter()
        .zip(&instance.sinr_target)
        .map(|(&s, &t)| -s / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let antenna_power_slack: Vec<f64> = (0..instance.num_antennas)
        .map(|n| instance.antenna_power_cap[n] - antenna_power(w, n))
        .collect();
    let worst_power_violation = antenna_power_slack
        .iter()
        .map(|&s| -s)
        .fold(f64::NEG_INFINITY, f64::max);
    FeasibilityReport {
        feasible: worst_sinr_violation <= tol && worst_power_violation <= tol,
        sinr_slack,
        antenna_power_slack,
        worst_sinr_violation,
        worst_power_violation,
    }
}

// ---------------------------------------------------------------------------
// Instance file format
// ---------------------------------------------------------------------------

/// Serialized form of [`ProblemInstance`]. Channels are stored either as the
/// generator seed (compact, regenerated on load) or as explicit `(re, im)`
/// pairs in column-major (per-user) order. JSON round-trips `f64` exactly.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct InstanceFile {
    pub format: String,
    pub num_antennas: usize,
    pub num_users: usize,
    pub num_groups: usize,
    pub group_of_user: Vec<usize>,
    pub noise_power: Vec<f64>,
    pub sinr_target: Vec<f64>,
    pub sinr_weight: Vec<f64>,
    pub antenna_power_cap: Vec<f64>,
    pub channels: ChannelSpec,
}

pub const INSTANCE_FORMAT: &str = "mgbeam-instance-v1";

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Regenerate with [`draw_channels`] from this seed.
    Seed { seed: u64 },
    /// Explicit entries, column-major, as `(re, im)`.
    Explicit { entries: Vec<(f64, f64)> },
}

/// Serializes an instance. Uses the seed form when the instance remembers a
/// generator seed and `prefer_seed` is set, otherwise explicit entries.
pub fn instance_to_json(instance: &ProblemInstance, prefer_seed: bool) -> String {
    let channels = match (prefer_seed, instance.channel_seed) {
        (true, Some(seed)) => ChannelSpec::Seed { seed },
        _ => ChannelSpec::Explicit {
            entries: instance.channels.iter().map(|c| (c.re, c.im)).collect(),
        },
    };
    let file = InstanceFile {
        format: INSTANCE_FORMAT.to_string(),
        num_antennas: instance.num_antennas,
        num_users: instance.num_users,
        num_groups: instance.num_groups,
        group_of_user: instance.group_of_user.clone(),
        noise_power: instance.noise_power.clone(),
        sinr_target: instance.sinr_target.clone(),
        sinr_weight: instance.sinr_weight.clone(),
        antenna_power_cap: instance.antenna_power_cap.clone(),
        channels,
    };
    serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
}

pub fn instance_from_json(text: &str) -> Result<ProblemInstance, ModelError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    if file.format != INSTANCE_FORMAT {
        return Err(ModelError::Parse(format!(
            "unsupported format '{}', expected '{INSTANCE_FORMAT}'",
            file.format
        )));
    }
    let (channels, channel_seed) = match file.channels {
        ChannelSpec::Seed { seed } => (
            draw_channels(file.num_antennas, file.num_users, seed),
            Some(seed),
        ),
        ChannelSpec::Explicit { entries } => {
            if entries.len() != file.num_antennas * file.num_users {
                return Err(ModelError::Parse(format!(
                    "expected {} channel entries, found {}",
                    file.num_antennas * file.num_users,
                    entries.len()
                )));
            }
            let data: Vec<Complex64> =
                entries.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            (
                DMatrix::from_vec(file.num_antennas, file.num_users, data),
                None,
            )
        }
    };
    let instance = ProblemInstance {
        num_antennas: file.num_antennas,
        num_users: file.num_users,
        num_groups: file.num_groups,
        channels,
        group_of_user: file.group_of_user,
        noise_power: file.noise_power,
        sinr_target: file.sinr_target,
        sinr_weight: file.sinr_weight,
        antenna_power_cap: file.antenna_power_cap,
        channel_seed,
    };
    instance.validate()?;
    Ok(instance)
}
