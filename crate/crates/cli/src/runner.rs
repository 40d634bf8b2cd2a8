//! Experiment harness: sweeps the spec's grid, writes one directory per run
//! (`runs/<id>/report.json` + `runs/<id>/trajectory.csv`), and an
//! `aggregate.csv` at the output root. Runs execute in a fixed order and
//! every emitted float uses the shortest round-trip formatting, so reruns
//! with `record_timings = false` are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mgbeam_core::admm::{
    solve_consensus_subproblem, solve_qos_subproblem, write_trajectory_csv, AdmmConfig,
    FactorCache, IterationRecord,
};
use mgbeam_core::ccp::{ccp_qos, closed_form_start, initialize, CcpConfig, CcpReport, InnerEngine};
use mgbeam_core::mmf::{solve_mmf, BisectionConfig, MmfReport};
use mgbeam_core::model::{generate_instance, ProblemInstance};

use crate::spec::{ExperimentSpec, Mode, Solver};
use crate::units::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm};

pub const RUN_REPORT_FORMAT: &str = "mgbeam-run-v1";
pub const AGGREGATE_SCHEMA: &str = "mgbeam-aggregate-v1";
pub const OUTER_TRAJECTORY_HEADER: &str =
    "outer_iteration,objective,rel_decrease,inner_iterations,wall_time_s";
pub const PROBE_CSV_HEADER: &str = "probe,t,ratio,accepted,inner_iterations,wall_time_s";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Spec(#[from] crate::spec::SpecError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report parse error: {0}")]
    Parse(String),
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunnerError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-run result document. Mode-specific fields are optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub mode: Mode,
    pub run_id: String,
    pub antennas: usize,
    pub users: usize,
    pub groups: usize,
    pub seed: u64,
    pub success: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub total_power_w: Option<f64>,
    #[serde(default)]
    pub total_power_dbm: Option<f64>,
    #[serde(default)]
    pub outer_iterations: Option<usize>,
    #[serde(default)]
    pub inner_iterations_total: Option<usize>,
    #[serde(default)]
    pub t_star: Option<f64>,
    #[serde(default)]
    pub min_weighted_sinr: Option<f64>,
    #[serde(default)]
    pub min_weighted_sinr_db: Option<f64>,
    #[serde(default)]
    pub probes: Option<usize>,
    /// Bench mode: iterations for the objective to come within 1e-4
    /// relative of the reference optimum (None = never within the cap).
    #[serde(default)]
    pub iterations_to_tol: Option<Option<usize>>,
    #[serde(default)]
    pub reference_objective: Option<f64>,
    pub wall_time_s: f64,
    #[serde(default)]
    pub ccp: Option<CcpReport>,
    #[serde(default)]
    pub mmf: Option<MmfReport>,
    /// Full spec echoed for provenance.
    pub config: ExperimentSpec,
}

impl RunReport {
    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        let report: Self =
            serde_json::from_str(text).map_err(|e| RunnerError::Parse(e.to_string()))?;
        if report.format != RUN_REPORT_FORMAT {
            return Err(RunnerError::Parse(format!(
                "unsupported run report format '{}'",
                report.format
            )));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// One row of the outer (CCP-level) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub outer_iteration: usize,
    pub objective: f64,
    pub rel_decrease: f64,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
}

pub fn write_outer_trajectory_csv(rows: &[OuterRecord]) -> String {
    let mut out = String::from(OUTER_TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.outer_iteration, r.objective, r.rel_decrease, r.inner_iterations, r.wall_time_s
        ));
    }
    out
}

pub fn parse_outer_trajectory_csv(text: &str) -> Result<Vec<OuterRecord>, RunnerError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == OUTER_TRAJECTORY_HEADER => {}
        other => return Err(RunnerError::Parse(format!("bad outer header: {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(RunnerError::Parse(format!("bad outer row: {line}")));
            }
            let num =
                |s: &str| -> Result<f64, RunnerError> { s.parse().map_err(|e| RunnerError::Parse(format!("{e}: {line}"))) };
            Ok(OuterRecord {
                outer_iteration: f[0]
                    .parse()
                    .map_err(|e| RunnerError::Parse(format!("{e}: {line}")))?,
                objective: num(f[1])?,
                rel_decrease: num(f[2])?,
                inner_iterations: f[3]
                    .parse()
                    .map_err(|e| RunnerError::Parse(format!("{e}: {line}")))?,
                wall_time_s: num(f[4])?,
            })
        })
        .collect()
}

/// Bisection probe log as CSV (`trajectory.csv` of MMF runs).
pub fn write_probe_csv(report: &MmfReport) -> String {
    let mut out = String::from(PROBE_CSV_HEADER);
    out.push('\n');
    for (i, p) in report.probes.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            p.t,
            p.ratio.map(|r| r.to_string()).unwrap_or_else(|| "nan".into()),
            p.accepted,
            p.inner_iterations,
            0.0
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub probe: usize,
    pub t: f64,
    pub ratio: f64,
    pub accepted: bool,
    pub inner_iterations: usize,
    pub wall_time_s: f64,
}

pub fn parse_probe_csv(text: &str) -> Result<Vec<ProbeRow>, RunnerError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == PROBE_CSV_HEADER => {}
        other => return Err(RunnerError::Parse(format!("bad probe header: {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(RunnerError::Parse(format!("bad probe row: {line}")));
            }
            let err = |e: String| RunnerError::Parse(format!("{e}: {line}"));
            Ok(ProbeRow {
                probe: f[0].parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                t: f[1].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                ratio: f[2].parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
                accepted: f[3].parse().map_err(|e: std::str::ParseBoolError| err(e.to_string()))?,
                inner_iterations: f[4]
                    .parse()
                    .map_err(|e: std::num::ParseIntError| err(e.to_string()))?,
                wall_time_s: f[5]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| err(e.to_string()))?,
            })
        })
        .collect()
}

fn outer_rows_from_ccp(report: &CcpReport, record_timings: bool) -> Vec<OuterRecord> {
    let mut rows = Vec::new();
    let mut prev: Option<f64> = None;
    // the MMF driver seeds the sequence with the starting ratio, which has
    // no inner solve attached
    let offset = report.objective_sequence.len() - report.inner_iterations.len();
    for (i, &p) in report.objective_sequence.iter().enumerate() {
        let rel = prev.map(|q| (p - q).abs() / q).unwrap_or(f64::NAN);
        rows.push(OuterRecord {
            outer_iteration: i + 1,
            objective: p,
            rel_decrease: if rel.is_nan() { 0.0 } else { rel },
            inner_iterations: if i >= offset {
                report.inner_iterations[i - offset]
            } else {
                0
            },
            wall_time_s: if record_timings && i + 1 == report.objective_sequence.len() {
                report.wall_time_s
            } else {
                0.0
            },
        });
        prev = Some(p);
    }
    rows
}

fn build_ccp_config(spec: &ExperimentSpec, n: usize, seed: u64) -> CcpConfig {
    let engine = match spec.solver {
        Solver::CcpAdmm => InnerEngine::Direct,
        Solver::CcpConsensus => InnerEngine::Consensus,
    };
    let mut inner = match engine {
        InnerEngine::Direct => AdmmConfig::qos_default(n),
        InnerEngine::Consensus => AdmmConfig::consensus_default(n),
    };
    if let Some(rho) = spec.rho {
        inner.rho = rho;
    }
    inner.eps_abs = spec.eps_abs;
    inner.eps_rel = spec.eps_rel;
    inner.max_iterations = spec.max_inner_iterations;
    inner.parallelism = spec.parallelism.into();
    let mut cfg = CcpConfig::default_for(n);
    cfg.inner = inner;
    cfg.engine = engine;
    cfg.rel_decrease_tol = spec.rel_decrease_tol;
    cfg.max_outer_iterations = spec.max_outer_iterations;
    // tie the initialization search to the channel seed for reproducibility
    cfg.init_seed = seed.wrapping_mul(0x9e37_79b9).wrapping_add(1);
    cfg
}

fn instance_for(spec: &ExperimentSpec, n: usize, k: usize, m: usize, seed: u64) -> ProblemInstance {
    generate_instance(
        n,
        k,
        m,
        db_to_linear(spec.sinr_target_db),
        spec.noise_power,
        dbm_to_watts(spec.power_cap_dbm),
        seed,
    )
    .expect("grid dimensions validated before dispatch")
}

fn zero_times(records: &[IterationRecord]) -> Vec<IterationRecord> {
    records
        .iter()
        .map(|r| IterationRecord {
            wall_time_s: 0.0,
            ..r.clone()
        })
        .collect()
}

/// Runs one QoS or MMF solve and produces its report plus trajectory CSV.
fn run_single(
    spec: &ExperimentSpec,
    n: usize,
    k: usize,
    m: usize,
    seed: u64,
    run_id: &str,
) -> (RunReport, String) {
    let instance = instance_for(spec, n, k, m, seed);
    let cfg = build_ccp_config(spec, n, seed);
    let mut report = RunReport {
        format: RUN_REPORT_FORMAT.to_string(),
        mode: spec.mode,
        run_id: run_id.to_string(),
        antennas: n,
        users: k,
        groups: m,
        seed,
        success: false,
        error: None,
        total_power_w: None,
        total_power_dbm: None,
        outer_iterations: None,
        inner_iterations_total: None,
        t_star: None,
        min_weighted_sinr: None,
        min_weighted_sinr_db: None,
        probes: None,
        iterations_to_tol: None,
        reference_objective: None,
        wall_time_s: 0.0,
        ccp: None,
        mmf: None,
        config: spec.clone(),
    };
    match spec.mode {
        Mode::Qos => match ccp_qos(&instance, &cfg, None) {
            Ok((beams, ccp)) => {
                let power = beams.total_power();
                report.success = ccp.feasibility.feasible;
                report.total_power_w = Some(power);
                report.total_power_dbm = Some(watts_to_dbm(power));
                report.outer_iterations = Some(ccp.objective_sequence.len());
                report.inner_iterations_total = Some(ccp.inner_iterations.iter().sum());
                report.wall_time_s = if spec.record_timings { ccp.wall_time_s } else { 0.0 };
                let mut ccp = ccp;
                if !spec.record_timings {
                    ccp.wall_time_s = 0.0;
                }
                let rows = outer_rows_from_ccp(&ccp, spec.record_timings);
                report.ccp = Some(ccp);
                (report, write_outer_trajectory_csv(&rows))
            }
            Err(e) => {
                report.error = Some(e.to_string());
                (report, write_outer_trajectory_csv(&[]))
            }
        },
        Mode::Mmf => {
            let mut bis = BisectionConfig::default_for(n);
            bis.tol_t = spec.mmf.tol_t;
            bis.max_probes = spec.mmf.max_probes;
            bis.inner = cfg;
            match solve_mmf(&instance, &bis) {
                Ok((_beams, t_star, mmf)) => {
                    report.success = true;
                    report.t_star = Some(t_star);
                    report.min_weighted_sinr = Some(mmf.min_weighted_sinr);
                    report.min_weighted_sinr_db = Some(linear_to_db(mmf.min_weighted_sinr));
                    report.probes = Some(mmf.probes.len());
                    report.wall_time_s = if spec.record_timings { mmf.wall_time_s } else { 0.0 };
                    let mut mmf = mmf;
                    if !spec.record_timings {
                        mmf.wall_time_s = 0.0;
                    }
                    let csv = write_probe_csv(&mmf);
                    report.mmf = Some(mmf);
                    (report, csv)
                }
                Err(e) => {
                    report.error = Some(e.to_string());
                    (report, write_outer_trajectory_csv(&[]))
                }
            }
        }
        Mode::SubproblemBench => unreachable!("bench runs dispatch separately"),
    }
}

/// Relative-error target used by the bench mode.
pub const BENCH_TOL: f64 = 1e-4;

pub struct BenchOutcome {
    pub reference_objective: f64,
    pub direct_iterations_to_tol: Option<usize>,
    pub consensus_iterations_to_tol: Option<usize>,
    pub direct_trajectory: Vec<IterationRecord>,
    pub consensus_trajectory: Vec<IterationRecord>,
    pub wall_time_s: f64,
}

/// Solves one convexified subproblem with both engines from the same
/// starting point and measures iterations to come within [`BENCH_TOL`]
/// relative of a high-accuracy reference objective.
pub fn run_inner_bench(
    instance: &ProblemInstance,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<BenchOutcome, String> {
    let n = instance.num_antennas;
    let begin = std::time::Instant::now();
    let ccp_cfg = build_ccp_config(spec, n, seed);
    let (start, _prov) = initialize(
        instance,
        ccp_cfg.init_strategy,
        ccp_cfg.init_retry_budget,
        ccp_cfg.init_seed,
        ccp_cfg.init_max_iterations,
        ccp_cfg.inner.parallelism,
    )
    .map_err(|e| e.to_string())?;

    let mut direct_cfg = AdmmConfig::qos_default(n);
    if let Some(rho) = spec.rho {
        direct_cfg.rho = rho;
    }
    direct_cfg.parallelism = spec.parallelism.into();
    direct_cfg.max_iterations = spec.max_inner_iterations;

    let mut reference_cfg = direct_cfg.clone();
    reference_cfg.eps_abs = 1e-10;
    reference_cfg.eps_rel = 1e-10;
    reference_cfg.max_iterations = 50_000;
    let cache = FactorCache::qos(instance, reference_cfg.rho);
    let reference = solve_qos_subproblem(instance, &start, &reference_cfg, &cache)
        .map_err(|e| e.to_string())?;
    let a_star = reference.objective();

    let direct =
        solve_qos_subproblem(instance, &start, &direct_cfg, &cache).map_err(|e| e.to_string())?;
    let mut consensus_cfg = AdmmConfig::consensus_default(n);
    consensus_cfg.parallelism = spec.parallelism.into();
    consensus_cfg.max_iterations = spec.max_inner_iterations;
    let consensus =
        solve_consensus_subproblem(instance, &start, &consensus_cfg).map_err(|e| e.to_string())?;

    let to_tol = |rows: &[IterationRecord]| {
        rows.iter()
            .find(|r| (r.objective - a_star).abs() / a_star < BENCH_TOL)
            .map(|r| r.iteration)
    };
    Ok(BenchOutcome {
        reference_objective: a_star,
        direct_iterations_to_tol: to_tol(&direct.trajectory),
        consensus_iterations_to_tol: to_tol(&consensus.trajectory),
        direct_trajectory: direct.trajectory,
        consensus_trajectory: consensus.trajectory,
        wall_time_s: begin.elapsed().as_secs_f64(),
    })
}

fn bench_reports(
    spec: &ExperimentSpec,
    n: usize,
    k: usize,
    m: usize,
    seed: u64,
    base_id: &str,
) -> Vec<(String, RunReport, String)> {
    let instance = instance_for(spec, n, k, m, seed);
    let template = |run_id: &str| RunReport {
        format: RUN_REPORT_FORMAT.to_string(),
        mode: spec.mode,
        run_id: run_id.to_string(),
        antennas: n,
        users: k,
        groups: m,
        seed,
        success: false,
        error: None,
        total_power_w: None,
        total_power_dbm: None,
        outer_iterations: None,
        inner_iterations_total: None,
        t_star: None,
        min_weighted_sinr: None,
        min_weighted_sinr_db: None,
        probes: None,
        iterations_to_tol: None,
        reference_objective: None,
        wall_time_s: 0.0,
        ccp: None,
        mmf: None,
        config: spec.clone(),
    };
    match run_inner_bench(&instance, spec, seed) {
        Ok(outcome) => {
            let mut out = Vec::new();
            for (suffix, iters, rows) in [
                (
                    "direct",
                    outcome.direct_iterations_to_tol,
                    &outcome.direct_trajectory,
                ),
                (
                    "consensus",
                    outcome.consensus_iterations_to_tol,
                    &outcome.consensus_trajectory,
                ),
            ] {
                let run_id = format!("{base_id}_{suffix}");
                let mut rep = template(&run_id);
                rep.success = true;
                rep.iterations_to_tol = Some(iters);
                rep.reference_objective = Some(outcome.reference_objective);
                rep.wall_time_s = if spec.record_timings {
                    outcome.wall_time_s
                } else {
                    0.0
                };
                let rows = if spec.record_timings {
                    rows.clone()
                } else {
                    zero_times(rows)
                };
                let mut csv = Vec::new();
                write_trajectory_csv(&mut csv, &rows).expect("vec write cannot fail");
                out.push((run_id, rep, String::from_utf8(csv).unwrap()));
            }
            out
        }
        Err(e) => {
            let run_id = format!("{base_id}_direct");
            let mut rep = template(&run_id);
            rep.error = Some(e);
            vec![(run_id, rep, String::new())]
        }
    }
}

#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub antennas: usize,
    pub users: usize,
    pub groups: usize,
    pub runs: usize,
    pub successes: usize,
    /// Mode-specific value columns, see [`aggregate_header`].
    pub values: Vec<f64>,
}

pub fn aggregate_header(mode: Mode) -> &'static str {
    match mode {
        Mode::Qos => "N,K,M,runs,successes,success_rate,mean_power_dbm,mean_outer_iterations,mean_inner_iterations,mean_wall_time_s",
        Mode::Mmf => "N,K,M,runs,successes,success_rate,mean_t_star,mean_min_sinr_db,mean_probes,mean_wall_time_s",
        Mode::SubproblemBench => "N,K,M,runs,successes,success_rate,mean_iters_direct,mean_iters_consensus,mean_wall_time_s",
    }
}

fn mode_tag(mode: Mode) -> &'static str {
    match mode {
        Mode::Qos => "qos",
        Mode::Mmf => "mmf",
        Mode::SubproblemBench => "subproblem-bench",
    }
}

/// Builds one aggregate row from the per-run reports of a grid point.
/// Value means are over successful runs; mean power averages watts before
/// converting to dBm.
pub fn aggregate_from_reports(
    mode: Mode,
    n: usize,
    k: usize,
    m: usize,
    reports: &[&RunReport],
) -> AggregateRow {
    let runs = reports.len();
    let ok: Vec<&&RunReport> = reports.iter().filter(|r| r.success).collect();
    let successes = ok.len();
    let mean = |f: &dyn Fn(&RunReport) -> f64| -> f64 {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / successes as f64
        }
    };
    let values = match mode {
        Mode::Qos => vec![
            watts_to_dbm(mean(&|r| r.total_power_w.unwrap_or(f64::NAN))),
            mean(&|r| r.outer_iterations.unwrap_or(0) as f64),
            mean(&|r| r.inner_iterations_total.unwrap_or(0) as f64),
            mean(&|r| r.wall_time_s),
        ],
        Mode::Mmf => vec![
            mean(&|r| r.t_star.unwrap_or(f64::NAN)),
            mean(&|r| r.min_weighted_sinr_db.unwrap_or(f64::NAN)),
            mean(&|r| r.probes.unwrap_or(0) as f64),
            mean(&|r| r.wall_time_s),
        ],
        Mode::SubproblemBench => {
            // bench writes two reports per seed; aggregate over the pairs
            let direct: Vec<&&&RunReport> = ok
                .iter()
                .filter(|r| r.run_id.ends_with("_direct"))
                .collect();
            let cons: Vec<&&&RunReport> = ok
                .iter()
                .filter(|r| r.run_id.ends_with("_consensus"))
                .collect();
            let mean_of = |rs: &[&&&RunReport]| -> f64 {
                if rs.is_empty() {
                    return f64::NAN;
                }
                rs.iter()
                    .map(|r| {
                        r.iterations_to_tol
                            .flatten()
                            .map(|i| i as f64)
                            .unwrap_or(f64::NAN)
                    })
                    .sum::<f64>()
                    / rs.len() as f64
            };
            vec![mean_of(&direct), mean_of(&cons), mean(&|r| r.wall_time_s)]
        }
    };
    AggregateRow {
        antennas: n,
        users: k,
        groups: m,
        runs,
        successes,
        values,
    }
}

pub fn write_aggregate_csv(mode: Mode, rows: &[AggregateRow]) -> String {
    let mut out = format!("# {AGGREGATE_SCHEMA} mode={}\n", mode_tag(mode));
    out.push_str(aggregate_header(mode));
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.antennas,
            r.users,
            r.groups,
            r.runs,
            r.successes,
            r.successes as f64 / r.runs as f64
        ));
        for v in &r.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_aggregate_csv(mode: Mode, text: &str) -> Result<Vec<AggregateRow>, RunnerError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.starts_with('#') && l.contains(AGGREGATE_SCHEMA) => {}
        other => return Err(RunnerError::Parse(format!("bad aggregate schema: {other:?}"))),
    }
    match lines.next() {
        Some(h) if h == aggregate_header(mode) => {}
        other => return Err(RunnerError::Parse(format!("bad aggregate header: {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 6 {
                return Err(RunnerError::Parse(format!("bad aggregate row: {line}")));
            }
            let p = |s: &str| -> Result<usize, RunnerError> {
                s.parse().map_err(|e| RunnerError::Parse(format!("{e}: {line}")))
            };
            Ok(AggregateRow {
                antennas: p(f[0])?,
                users: p(f[1])?,
                groups: p(f[2])?,
                runs: p(f[3])?,
                successes: p(f[4])?,
                values: f[6..]
                    .iter()
                    .map(|s| s.parse().map_err(|e| RunnerError::Parse(format!("{e}: {line}"))))
                    .collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

pub struct ExperimentOutcome {
    pub aggregate_path: PathBuf,
    pub run_ids: Vec<String>,
    pub failures: usize,
}

/// Runs the full sweep. Grid order is antennas × users × groups × seeds;
/// infeasible grid points (M > K) are skipped.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentOutcome, RunnerError> {
    spec.validate()?;
    let mut aggregate_rows = Vec::new();
    let mut run_ids = Vec::new();
    let mut failures = 0usize;
    let tag = mode_tag(spec.mode);
    for &n in &spec.antennas {
        for &k in &spec.users {
            for &m in &spec.groups {
                if m > k || n == 0 || k == 0 || m == 0 {
                    continue;
                }
                let mut reports: Vec<RunReport> = Vec::new();
                for seed in spec.seeds() {
                    let base_id = format!("{tag}_N{n}_K{k}_M{m}_seed{seed}");
                    let produced: Vec<(String, RunReport, String)> = match spec.mode {
                        Mode::SubproblemBench => bench_reports(spec, n, k, m, seed, &base_id),
                        _ => {
                            let (rep, csv) = run_single(spec, n, k, m, seed, &base_id);
                            vec![(base_id.clone(), rep, csv)]
                        }
                    };
                    for (run_id, report, trajectory) in produced {
                        let dir = out_dir.join("runs").join(&run_id);
                        write_file(&dir.join("report.json"), &report.to_json())?;
                        write_file(&dir.join("trajectory.csv"), &trajectory)?;
                        if !report.success {
                            failures += 1;
                        }
                        run_ids.push(run_id);
                        reports.push(report);
                    }
                }
                let refs: Vec<&RunReport> = reports.iter().collect();
                aggregate_rows.push(aggregate_from_reports(spec.mode, n, k, m, &refs));
            }
        }
    }
    let aggregate_path = out_dir.join("aggregate.csv");
    write_file(
        &aggregate_path,
        &write_aggregate_csv(spec.mode, &aggregate_rows),
    )?;
    Ok(ExperimentOutcome {
        aggregate_path,
        run_ids,
        failures,
    })
}

/// Recomputes the aggregate from the per-run report files on disk; used to
/// verify that aggregate statistics equal what the reports imply.
pub fn recompute_aggregate(spec: &ExperimentSpec, out_dir: &Path) -> Result<String, RunnerError> {
    let mut rows = Vec::new();
    let tag = mode_tag(spec.mode);
    for &n in &spec.antennas {
        for &k in &spec.users {
            for &m in &spec.groups {
                if m > k || n == 0 || k == 0 || m == 0 {
                    continue;
                }
                let mut reports = Vec::new();
                for seed in spec.seeds() {
                    let base_id = format!("{tag}_N{n}_K{k}_M{m}_seed{seed}");
                    let candidates = match spec.mode {
                        Mode::SubproblemBench => {
                            vec![format!("{base_id}_direct"), format!("{base_id}_consensus")]
                        }
                        _ => vec![base_id],
                    };
                    for id in candidates {
                        let path = out_dir.join("runs").join(&id).join("report.json");
                        if path.exists() {
                            let text = fs::read_to_string(&path).map_err(|source| {
                                RunnerError::Io {
                                    path: path.clone(),
                                    source,
                                }
                            })?;
                            reports.push(RunReport::from_json(&text)?);
                        }
                    }
                }
                let refs: Vec<&RunReport> = reports.iter().collect();
                rows.push(aggregate_from_reports(spec.mode, n, k, m, &refs));
            }
        }
    }
    Ok(write_aggregate_csv(spec.mode, &rows))
}

/// Single-instance QoS solve used by the `--instance` CLI path.
pub fn solve_instance_qos(
    instance: &ProblemInstance,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<(f64, CcpReport), String> {
    let cfg = build_ccp_config(spec, instance.num_antennas, seed);
    ccp_qos(instance, &cfg, None)
        .map(|(beams, rep)| (beams.total_power(), rep))
        .map_err(|e| e.to_string())
}

/// Single-instance MMF solve used by the `--instance` CLI path.
pub fn solve_instance_mmf(
    instance: &ProblemInstance,
    spec: &ExperimentSpec,
    seed: u64,
) -> Result<(f64, MmfReport), String> {
    let mut bis = BisectionConfig::default_for(instance.num_antennas);
    bis.tol_t = spec.mmf.tol_t;
    bis.max_probes = spec.mmf.max_probes;
    bis.inner = build_ccp_config(spec, instance.num_antennas, seed);
    solve_mmf(instance, &bis)
        .map(|(_, t_star, rep)| (t_star, rep))
        .map_err(|e| e.to_string())
}

/// The closed-form start is deterministic, making it the bench anchor; fall
/// back to the search when it does not exist.
pub fn bench_start_exists(instance: &ProblemInstance) -> bool {
    closed_form_start(instance).is_some()
}
