//! `mgbeam` — multi-group multicast beamforming experiments.
//!
//! Subcommands: `gen` writes instance files, `qos`/`mmf` run solver sweeps,
//! `bench` compares the two inner engines on one convex subproblem per
//! seed. Sweeps are configured either by flags or by a JSON spec file.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mgbeam_cli::runner::{run_experiment, solve_instance_mmf, solve_instance_qos};
use mgbeam_cli::spec::{ExperimentSpec, MmfOptions, Mode, ParallelismSpec, Solver};
use mgbeam_cli::units::db_to_linear;
use mgbeam_cli::units::dbm_to_watts;
use mgbeam_core::model::{generate_instance, instance_from_json, instance_to_json};

#[derive(Parser)]
#[command(name = "mgbeam", version, about = "Multi-group multicast beamforming solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem-instance file.
    Gen(GenArgs),
    /// QoS power minimization sweep (or single instance with --instance).
    Qos(SweepArgs),
    /// Max-min fairness sweep (or single instance with --instance).
    Mmf(SweepArgs),
    /// Inner-engine convergence benchmark on one subproblem per seed.
    Bench(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output path for the instance JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    antennas: usize,
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    /// Per-user SINR target in dB.
    #[arg(long, default_value_t = 10.0)]
    sinr_db: f64,
    /// Noise power in watts.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Per-antenna power cap in dBm.
    #[arg(long, default_value_t = 40.0)]
    power_cap_dbm: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Store explicit channel entries instead of the generator seed.
    #[arg(long)]
    explicit: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment spec; flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Solve a single saved instance instead of sweeping.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Output directory for runs/ and aggregate.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Antenna counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    antennas: Vec<usize>,
    /// User counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    users: Vec<usize>,
    /// Group counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    groups: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    sinr_db: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 40.0)]
    power_cap_dbm: f64,
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    /// Channel realizations per grid point.
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Inner engine: ccp-admm or ccp-consensus.
    #[arg(long, default_value = "ccp-admm")]
    solver: String,
    /// Penalty override (default 2/√N direct, 10/√N consensus).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_rel: f64,
    #[arg(long, default_value_t = 3000)]
    max_inner_iterations: usize,
    #[arg(long, default_value_t = 30)]
    max_outer_iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    rel_decrease_tol: f64,
    /// Run the independent update blocks on a thread pool.
    #[arg(long)]
    parallel: bool,
    /// Zero all wall-time fields for byte-reproducible outputs.
    #[arg(long)]
    no_timings: bool,
    /// MMF bisection relative tolerance on t.
    #[arg(long, default_value_t = 4e-3)]
    tol_t: f64,
    #[arg(long, default_value_t = 60)]
    max_probes: usize,
}

impl SweepArgs {
    fn to_spec(&self, mode: Mode) -> Result<ExperimentSpec> {
        if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading spec {}", path.display()))?;
            let spec = ExperimentSpec::from_json(&text)?;
            if spec.mode != mode {
                bail!(
                    "spec file has mode {:?} but the subcommand expects {:?}",
                    spec.mode,
                    mode
                );
            }
            return Ok(spec);
        }
        let solver = match self.solver.as_str() {
            "ccp-admm" => Solver::CcpAdmm,
            "ccp-consensus" => Solver::CcpConsensus,
            other => bail!("unknown solver '{other}' (ccp-admm | ccp-consensus)"),
        };
        let spec = ExperimentSpec {
            format: mgbeam_cli::spec::EXPERIMENT_FORMAT.to_string(),
            mode,
            antennas: self.antennas.clone(),
            users: self.users.clone(),
            groups: self.groups.clone(),
            sinr_target_db: self.sinr_db,
            noise_power: self.noise,
            power_cap_dbm: self.power_cap_dbm,
            base_seed: self.base_seed,
            repetitions: self.repetitions,
            solver,
            rho: self.rho,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_inner_iterations: self.max_inner_iterations,
            max_outer_iterations: self.max_outer_iterations,
            rel_decrease_tol: self.rel_decrease_tol,
            parallelism: if self.parallel {
                ParallelismSpec::DeterministicParallel
            } else {
                ParallelismSpec::Sequential
            },
            record_timings: !self.no_timings,
            mmf: MmfOptions {
                tol_t: self.tol_t,
                max_probes: self.max_probes,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn run_sweep(args: &SweepArgs, mode: Mode) -> Result<()> {
    let spec = args.to_spec(mode)?;
    if let Some(path) = &args.instance {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading instance {}", path.display()))?;
        let instance = instance_from_json(&text)?;
        match mode {
            Mode::Qos => {
                let (power, report) = solve_instance_qos(&instance, &spec, spec.base_seed)
                    .map_err(|e| anyhow::anyhow!(e))?;
                println!(
                    "power_w={power} power_dbm={} outer_iterations={} feasible={}",
                    mgbeam_cli::units::watts_to_dbm(power),
                    report.objective_sequence.len(),
                    report.feasibility.feasible
                );
            }
            Mode::Mmf => {
                let (t_star, report) = solve_instance_mmf(&instance, &spec, spec.base_seed)
                    .map_err(|e| anyhow::anyhow!(e))?;
                println!(
                    "t_star={t_star} min_weighted_sinr={} probes={}",
                    report.min_weighted_sinr,
                    report.probes.len()
                );
            }
            Mode::SubproblemBench => bail!("--instance is not supported for bench"),
        }
        return Ok(());
    }
    let outcome = run_experiment(&spec, &args.out)?;
    println!(
        "wrote {} runs under {} ({} failures); aggregate at {}",
        outcome.run_ids.len(),
        args.out.join("runs").display(),
        outcome.failures,
        outcome.aggregate_path.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => {
            let instance = generate_instance(
                args.antennas,
                args.users,
                args.groups,
                db_to_linear(args.sinr_db),
                args.noise,
                dbm_to_watts(args.power_cap_dbm),
                args.seed,
            )?;
            let text = instance_to_json(&instance, !args.explicit);
            if let Some(dir) = args.out.parent() {
                std::fs::create_dir_all(dir).ok();
            }
            std::fs::write(&args.out, text)
                .with_context(|| format!("writing {}", args.out.display()))?;
            println!(
                "wrote instance N={} K={} M={} seed={} to {}",
                args.antennas,
                args.users,
                args.groups,
                args.seed,
                args.out.display()
            );
            Ok(())
        }
        Command::Qos(args) => run_sweep(&args, Mode::Qos),
        Command::Mmf(args) => run_sweep(&args, Mode::Mmf),
        Command::Bench(args) => run_sweep(&args, Mode::SubproblemBench),
    }
}
