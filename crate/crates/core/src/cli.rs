//! The `mfg` command line: one subcommand per experiment plus `verify`.
//!
//! Values come from `--config` (TOML or JSON) and are then overridden by
//! flags. Every run writes CSV tables and a JSON sidecar into `out_dir`.

use crate::config::{Experiment, ExperimentConfig, MethodChoice, SpeedLawChoice};
use crate::disk::{
    continuation_schedule, fixed_point_solve, radial_oracle, simulate_response, DirectionMeasure, FixedPointReport,
    DEFAULT_N_QUAD,
};
use crate::geometry::{Point, Vec2};
use crate::measure::AtomicFlow;
use crate::network::{self, BraessMethod, BraessNetwork, EDGE_NAMES};
use crate::segment::{self, SegmentCase, SegmentInstance};
use crate::trajectory::{dpp_restart_gap, max_speed_excess, StepperConfig};
use crate::{MfgError, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const WORKERS_ENV: &str = "MFG_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "mfg", version, about = "Equilibria of minimal-time mean field games with congestion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split fraction at one starting point on the segment.
    Segment(RunArgs),
    /// Segment equilibria over a grid of starting points.
    SegmentSweep(RunArgs),
    /// Braess network equilibrium for one shortcut length.
    Braess(RunArgs),
    /// Braess equilibria over a grid of shortcut lengths.
    BraessSweep(RunArgs),
    /// Disk equilibrium from a single start point.
    Disk(RunArgs),
    /// Disk equilibria continued from the centre to a target point.
    DiskContinuation(RunArgs),
    /// Run the invariant checks for one experiment and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML or JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    /// Experiment to check; defaults to the `experiment` field of the config.
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub speed_law: Option<SpeedLawChoice>,
    #[arg(long)]
    pub constant_speed: Option<f64>,
    #[arg(long)]
    pub tol_alpha: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Starting point (segment) or shortcut length (Braess).
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub ells: Option<Vec<f64>>,
    #[arg(long)]
    pub ell_min: Option<f64>,
    #[arg(long)]
    pub ell_max: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub long_edge: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Cross-check every k-th sweep row with the other method.
    #[arg(long)]
    pub method1_every: Option<usize>,
    /// Number of direction atoms.
    #[arg(long = "n", visible_alias = "N")]
    pub n: Option<usize>,
    /// Disk start point `x,y` (a single value means `x,0`).
    #[arg(long, value_delimiter = ',', num_args = 1..=2, allow_negative_numbers = true)]
    pub p: Option<Vec<f64>>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    #[arg(long)]
    pub dump_trajectories: bool,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) -> Result<()> {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = Some(v);
                }
            };
        }
        set!(self.out_dir, c.out_dir);
        set!(self.dt, c.dt);
        set!(self.epsilon, c.kernel.epsilon);
        set!(self.speed_law, c.kernel.speed_law);
        set!(self.constant_speed, c.kernel.constant_speed);
        set!(self.tol_alpha, c.tol_alpha);
        set!(self.zeta, c.zeta);
        set!(self.ell, c.ell);
        set!(self.ells, c.sweep.ells);
        set!(self.ell_min, c.sweep.ell_min);
        set!(self.ell_max, c.sweep.ell_max);
        set!(self.count, c.sweep.count);
        set!(self.long_edge, c.braess.long_edge);
        set!(self.method, c.braess.method);
        set!(self.method1_every, c.braess.method1_every);
        set!(self.n, c.disk.n);
        set!(self.step, c.disk.step);
        set!(self.max_iters, c.disk.max_iters);
        set!(self.snapshot_times, c.disk.snapshot_times);
        if let Some(p) = &self.p {
            c.disk.p = Some(match p.as_slice() {
                [x] => [*x, 0.0],
                [x, y] => [*x, *y],
                _ => return Err(MfgError::InvalidParameter("`--p` takes one or two numbers".into())),
            });
        }
        if self.dump_trajectories {
            c.dump_trajectories = Some(true);
        }
        Ok(())
    }
}

/// Failure of a CLI invocation, with its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags (exit 2).
    Config(String),
    /// Solver error or failed verification (exit 1).
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Run(format!("cannot write {}: {e}", path.display()))
}

/// Load the file (if any), apply flags and resolve defaults.
pub fn resolve_config(
    experiment: Option<Experiment>,
    config: Option<&Path>,
    overrides: &Overrides,
) -> std::result::Result<ExperimentConfig, CliError> {
    let mut c = match config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    overrides.apply(&mut c).map_err(|e| CliError::Config(e.to_string()))?;
    let experiment = experiment
        .or(c.experiment)
        .ok_or_else(|| CliError::Config("no experiment given (use --experiment or the `experiment` field)".into()))?;
    c.resolve(experiment).map_err(|e| CliError::Config(e.to_string()))
}

/// Size the global worker pool from `MFG_WORKERS`, if set.
pub fn init_workers() -> std::result::Result<(), CliError> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize =
            v.parse().map_err(|_| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        // A pool may already exist when called twice in one process; that is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    init_workers()?;
    let (experiment, args) = match cli.command {
        Command::Segment(a) => (Experiment::Segment, a),
        Command::SegmentSweep(a) => (Experiment::SegmentSweep, a),
        Command::Braess(a) => (Experiment::Braess, a),
        Command::BraessSweep(a) => (Experiment::BraessSweep, a),
        Command::Disk(a) => (Experiment::Disk, a),
        Command::DiskContinuation(a) => (Experiment::DiskContinuation, a),
        Command::Verify(v) => {
            let c = resolve_config(v.experiment, v.config.as_deref(), &v.overrides)?;
            return verify(&c);
        }
    };
    let c = resolve_config(Some(experiment), args.config.as_deref(), &args.overrides)?;
    run_experiment(&c)
}

pub fn run_experiment(c: &ExperimentConfig) -> std::result::Result<(), CliError> {
    let out = c.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let start = Instant::now();
    let outcome = match c.experiment() {
        Experiment::Segment => run_segment(c, &out),
        Experiment::SegmentSweep => run_segment_sweep(c, &out),
        Experiment::Braess => run_braess(c, &out),
        Experiment::BraessSweep => run_braess_sweep(c, &out),
        Experiment::Disk => run_disk(c, &out),
        Experiment::DiskContinuation => run_disk_continuation(c, &out),
    };
    let (summary, failure) = match outcome {
        Ok(s) => (s, None),
        Err(RunFailure { summary, message }) => (summary, Some(message)),
    };
    let sidecar = json!({
        "resolved_config": c,
        "residuals": summary.residuals,
        "iters": summary.iters,
        "wall_time_ms": start.elapsed().as_secs_f64() * 1e3,
        "versions": { "mfg-core": env!("CARGO_PKG_VERSION") },
        "details": summary.details,
        "error": failure,
    });
    let path = out.join(format!("{}.json", c.experiment().name()));
    let text = serde_json::to_string_pretty(&sidecar).map_err(run_err)?;
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    match failure {
        Some(m) => Err(CliError::Run(m)),
        None => Ok(()),
    }
}

#[derive(Default)]
struct Summary {
    residuals: Value,
    iters: Value,
    details: Value,
}

struct RunFailure {
    summary: Summary,
    message: String,
}

impl From<MfgError> for RunFailure {
    fn from(e: MfgError) -> Self {
        RunFailure { summary: Summary::default(), message: e.to_string() }
    }
}

impl From<CliError> for RunFailure {
    fn from(e: CliError) -> Self {
        RunFailure { summary: Summary::default(), message: e.to_string() }
    }
}

type RunResult = std::result::Result<Summary, RunFailure>;

/// Fixed-width scientific notation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, text: &str) -> std::result::Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn segment_instance(c: &ExperimentConfig, ell: f64) -> Result<SegmentInstance> {
    SegmentInstance::new(ell, c.model()?, c.dt())
}

pub const SEGMENT_HEADER: &str = "ell,alpha,T_left,T_right,exit_time,case,residual,iters";

fn segment_row(eq: &segment::SegmentEquilibrium) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        num(eq.ell),
        num(eq.alpha),
        num(eq.t_left),
        num(eq.t_right),
        num(eq.exit_time),
        eq.case.as_str(),
        num(eq.residual),
        eq.iters
    )
}

/// `particle_id,t,coords...,u_coords...,exited` for every stored sample.
pub fn trajectory_dump<P: Point>(flow: &AtomicFlow<P>) -> String {
    let names: Vec<String> = match P::DIM {
        1 => vec!["x".into(), "u".into()],
        _ => {
            let axes = ["x", "y", "z"];
            let mut v: Vec<String> = axes[..P::DIM].iter().map(|a| a.to_string()).collect();
            v.extend(axes[..P::DIM].iter().map(|a| format!("u_{a}")));
            v
        }
    };
    let mut s = format!("particle_id,t,{},exited\n", names.join(","));
    for (k, path) in flow.trajectories.iter().enumerate() {
        for (j, (x, u)) in path.states.iter().zip(&path.directions).enumerate() {
            let t = path.time(j);
            let exited = path.exit_time.is_some_and(|e| t >= e);
            let coords: Vec<String> = x.coords().into_iter().chain(u.coords()).map(num).collect();
            let _ = writeln!(s, "{k},{},{},{}", num(t), coords.join(","), u8::from(exited));
        }
    }
    s
}

fn run_segment(c: &ExperimentConfig, out: &Path) -> RunResult {
    let inst = segment_instance(c, c.ell.unwrap_or(0.4))?;
    let eq = segment::solve_alpha(&inst, c.tol_alpha.unwrap_or(segment::DEFAULT_TOL_ALPHA))?;
    write_file(&out.join("segment.csv"), &format!("{SEGMENT_HEADER}\n{}\n", segment_row(&eq)))?;
    if c.dump_trajectories == Some(true) {
        let run = segment::integrate_pair(&inst, eq.alpha)?;
        write_file(&out.join("segment_trajectories.csv"), &trajectory_dump(&run.flow))?;
    }
    Ok(Summary {
        residuals: json!({ "T_right_minus_T_left": eq.t_right - eq.t_left }),
        iters: json!(eq.iters),
        details: json!({ "equilibrium": eq }),
    })
}

fn run_segment_sweep(c: &ExperimentConfig, out: &Path) -> RunResult {
    let grid = c.ell_grid();
    let template = segment_instance(c, 0.5)?;
    let rows = segment::sweep_ell(&grid, &template, c.tol_alpha.unwrap_or(segment::DEFAULT_TOL_ALPHA));
    let mut csv = format!("{SEGMENT_HEADER}\n");
    let mut residuals = Vec::new();
    let mut iters = Vec::new();
    let mut errors = Vec::new();
    for row in &rows {
        match &row.result {
            Ok(eq) => {
                csv.push_str(&segment_row(eq));
                residuals.push(json!(eq.t_right - eq.t_left));
                iters.push(json!(eq.iters));
            }
            Err(e) => {
                let _ = write!(csv, "{},,,,,error,,", num(row.ell));
                residuals.push(Value::Null);
                iters.push(Value::Null);
                errors.push(json!({ "ell": row.ell, "message": e }));
            }
        }
        csv.push('\n');
    }
    write_file(&out.join("segment_sweep.csv"), &csv)?;
    Ok(Summary { residuals: json!(residuals), iters: json!(iters), details: json!({ "row_errors": errors }) })
}

pub const BRAESS_HEADER: &str = "ell,alpha1,alpha2,T1,T2,exit_time,residual_D,residual_B,case,method";

fn braess_row(eq: &network::BraessEquilibrium) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        num(eq.ell),
        num(eq.alpha1),
        num(eq.alpha2),
        num(eq.t1),
        num(eq.t2),
        num(eq.exit_time),
        num(eq.residual_d),
        num(eq.residual_b),
        eq.case_label().replace(',', ";"),
        eq.method.as_str()
    )
}

fn braess_method(c: &ExperimentConfig) -> BraessMethod {
    c.braess.method.unwrap_or(MethodChoice::Method2).into()
}

fn run_braess(c: &ExperimentConfig, out: &Path) -> RunResult {
    let net = BraessNetwork::new(c.braess.long_edge.unwrap_or(network::DEFAULT_LONG_EDGE), c.ell.unwrap_or(0.2))?;
    let model = c.model()?;
    let tol = c.tol_alpha.unwrap_or(network::DEFAULT_TOL);
    let eq = network::solve(&net, &model, c.dt(), tol, braess_method(c))?;
    write_file(&out.join("braess.csv"), &format!("{BRAESS_HEADER}\n{}\n", braess_row(&eq)))?;
    if c.dump_trajectories == Some(true) {
        let run = network::integrate_staged(&net, &model, eq.alpha1, eq.alpha2, c.dt(), true)?;
        let mut s = String::from("particle_id,t,stage,edge,s,weight,speed\n");
        for sample in run.trace.iter().flatten() {
            for (k, (w, v)) in sample.walkers.iter().zip(&sample.speeds).enumerate() {
                let _ = writeln!(
                    s,
                    "{k},{},{},{},{},{},{}",
                    num(sample.t),
                    sample.stage,
                    EDGE_NAMES[w.edge],
                    num(w.s),
                    num(w.weight),
                    num(*v)
                );
            }
        }
        write_file(&out.join("braess_trajectories.csv"), &s)?;
    }
    Ok(Summary {
        residuals: json!({ "residual_D": eq.residual_d, "residual_B": eq.residual_b }),
        iters: json!(eq.iters),
        details: json!({ "equilibrium": eq }),
    })
}

fn run_braess_sweep(c: &ExperimentConfig, out: &Path) -> RunResult {
    let grid = c.ell_grid();
    let model = c.model()?;
    let rows = network::sweep_ell_network(
        &grid,
        c.braess.long_edge.unwrap_or(network::DEFAULT_LONG_EDGE),
        &model,
        c.dt(),
        c.tol_alpha.unwrap_or(network::DEFAULT_TOL),
        braess_method(c),
        c.braess.method1_every,
    );
    let mut csv = format!("{BRAESS_HEADER}\n");
    let mut gaps = String::from("ell,alpha2_method1,alpha2_method2,gap\n");
    let mut residuals = Vec::new();
    let mut iters = Vec::new();
    let mut errors = Vec::new();
    for row in &rows {
        match &row.result {
            Ok(eq) => {
                csv.push_str(&braess_row(eq));
                residuals.push(json!({ "residual_D": eq.residual_d, "residual_B": eq.residual_b }));
                iters.push(json!(eq.iters));
            }
            Err(e) => {
                let _ = write!(csv, "{},,,,,,,,error,{}", num(row.ell), braess_method(c).as_str());
                residuals.push(Value::Null);
                iters.push(Value::Null);
                errors.push(json!({ "ell": row.ell, "message": e }));
            }
        }
        csv.push('\n');
        match &row.method_pair {
            Some(Ok((m1, m2))) => {
                let _ = writeln!(gaps, "{},{},{},{}", num(row.ell), num(*m1), num(*m2), num(m1 - m2));
            }
            Some(Err(e)) => errors.push(json!({ "ell": row.ell, "cross_check": e })),
            None => {}
        }
    }
    write_file(&out.join("braess_sweep.csv"), &csv)?;
    if c.braess.method1_every.is_some() {
        write_file(&out.join("braess_method_gap.csv"), &gaps)?;
    }
    Ok(Summary { residuals: json!(residuals), iters: json!(iters), details: json!({ "row_errors": errors }) })
}

fn density_csv(mu: &DirectionMeasure) -> String {
    let mut s = String::from("theta,mu_density\n");
    for (k, d) in mu.arclength_density().iter().enumerate() {
        let _ = writeln!(s, "{},{}", num(mu.angle(k)), num(*d));
    }
    s
}

fn disk_report_json(r: &FixedPointReport) -> Value {
    json!({
        "p": [r.p.x, r.p.y],
        "converged": r.converged,
        "exit_time": r.exit_time,
        "spread": r.spread,
        "iters": r.iters,
        "spread_history": r.spread_history,
        "contrast": r.mu.contrast(),
        "max_density": r.max_density,
    })
}

fn disk_snapshots(c: &ExperimentConfig, mu: &DirectionMeasure, p: Vec2, out: &Path, stem: &str) -> RunResult {
    let times = c.disk.snapshot_times.clone().unwrap_or_default();
    if times.is_empty() && c.dump_trajectories != Some(true) {
        return Ok(Summary::default());
    }
    let resp = simulate_response(mu, p, &c.model()?, &c.disk_config())?;
    if !times.is_empty() {
        let mut s = String::from("t,particle_id,x,y,weight\n");
        for &t in &times {
            let m = resp.flow.measure_at_clamped(t.min(resp.flow.end_time()))?;
            for (k, (x, w)) in m.iter().enumerate() {
                let _ = writeln!(s, "{},{k},{},{},{}", num(t), num(x.x), num(x.y), num(w));
            }
        }
        write_file(&out.join(format!("{stem}_snapshots.csv")), &s)?;
    }
    if c.dump_trajectories == Some(true) {
        write_file(&out.join(format!("{stem}_trajectories.csv")), &trajectory_dump(&resp.flow))?;
    }
    Ok(Summary::default())
}

fn run_disk(c: &ExperimentConfig, out: &Path) -> RunResult {
    let cfg = c.disk_config();
    let p = c.disk_p();
    let report = fixed_point_solve(p, &c.model()?, &cfg, DirectionMeasure::uniform(cfg.n)?)?;
    write_file(&out.join("disk_density.csv"), &density_csv(&report.mu))?;
    disk_snapshots(c, &report.mu, p, out, "disk")?;
    let summary = Summary {
        residuals: json!({ "spread": report.spread }),
        iters: json!(report.iters),
        details: disk_report_json(&report),
    };
    match report.into_converged() {
        Ok(_) => Ok(summary),
        Err(e) => Err(RunFailure { summary, message: e.to_string() }),
    }
}

fn run_disk_continuation(c: &ExperimentConfig, out: &Path) -> RunResult {
    let cfg = c.disk_config();
    let p = c.disk_p();
    let reports = continuation_schedule(p, c.disk.step.unwrap_or(0.01), &c.model()?, &cfg)?;
    let mut steps = String::from("p_x,p_y,exit_time,iters,spread,contrast\n");
    for r in &reports {
        let _ = writeln!(
            steps,
            "{},{},{},{},{},{}",
            num(r.p.x),
            num(r.p.y),
            num(r.exit_time),
            r.iters,
            num(r.spread),
            num(r.mu.contrast())
        );
    }
    write_file(&out.join("disk_continuation.csv"), &steps)?;
    let last = reports.last().expect("at least the starting point");
    write_file(&out.join("disk_continuation_density.csv"), &density_csv(&last.mu))?;
    disk_snapshots(c, &last.mu, p, out, "disk_continuation")?;
    Ok(Summary {
        residuals: json!(reports.iter().map(|r| r.spread).collect::<Vec<_>>()),
        iters: json!(reports.iter().map(|r| r.iters).collect::<Vec<_>>()),
        details: json!({ "steps": reports.iter().map(disk_report_json).collect::<Vec<_>>() }),
    })
}

/// One line of a verification table.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        Check { name, value, threshold, pass: value <= threshold }
    }
}

/// Invariant checks for the experiment in `c`.
pub fn verification_checks(c: &ExperimentConfig) -> Result<Vec<Check>> {
    let dt = c.dt();
    let tol = c.tol_alpha.unwrap_or(segment::DEFAULT_TOL_ALPHA);
    let model = c.model()?;
    let mut checks = Vec::new();
    match c.experiment() {
        Experiment::Segment | Experiment::SegmentSweep => {
            let ell = c.ell.unwrap_or(0.4);
            let inst = segment_instance(c, ell)?;
            let eq = segment::solve_alpha(&inst, tol)?;
            let mirror = segment::solve_alpha(&inst.with_ell(1.0 - ell)?, tol)?;
            let run = segment::integrate_pair(&inst, eq.alpha)?;
            let condition = match eq.case {
                SegmentCase::Interior => (eq.t_left - eq.t_right).abs(),
                SegmentCase::AllLeft => (eq.t_left - eq.t_right).max(0.0),
                SegmentCase::AllRight => (eq.t_right - eq.t_left).max(0.0),
            };
            checks.push(Check::at_most("equilibrium_time_gap", condition, 1e-3));
            checks.push(Check::at_most("speed_bound_excess", max_speed_excess(&model, &run.flow), 1e-9));
            checks.push(Check::at_most("mirror_symmetry", (eq.alpha + mirror.alpha - 1.0).abs(), 2.0 * tol));
            let stepper = StepperConfig::new(dt, inst.horizon());
            let mut worst: f64 = 0.0;
            for k in 0..2 {
                if run.flow.weights[k] <= 0.0 {
                    continue;
                }
                let exit = run.flow.trajectories[k].exit_time.unwrap_or(0.0);
                for i in 0..10 {
                    let t = exit * i as f64 / 10.0;
                    if run.flow.trajectories[k].state_at(t)?.boundary_depth() <= 0.0 {
                        continue;
                    }
                    worst = worst.max(dpp_restart_gap(&model, &run.flow, k, t, &stepper)?.abs());
                }
            }
            checks.push(Check::at_most("dpp_restart_gap", worst, 10.0 * dt));
        }
        Experiment::Braess | Experiment::BraessSweep => {
            let net = BraessNetwork::new(c.braess.long_edge.unwrap_or(network::DEFAULT_LONG_EDGE), c.ell.unwrap_or(0.2))?;
            let m1 = network::solve_method1(&net, &model, dt, tol)?;
            let m2 = network::solve_method2(&net, &model, dt, tol)?;
            checks.push(Check::at_most("method_gap_alpha2", (m1.alpha2 - m2.alpha2).abs(), 1e-2));
            checks.push(Check::at_most(
                "time_reversal_alpha1",
                (m1.alpha1 - network::symmetric_alpha1(m1.alpha2)).abs(),
                1e-2,
            ));
            let run = network::integrate_staged(&net, &model, m2.alpha1, m2.alpha2, dt, true)?;
            let trace = run.trace.unwrap_or_default();
            checks.push(Check::at_most("speed_bound_excess", network::max_speed_excess(&trace, dt).max(0.0), 1e-9));
            let mass = trace.iter().map(|s| (s.walkers.iter().map(|w| w.weight).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
            checks.push(Check::at_most("stage_mass_defect", mass, 1e-12));
        }
        Experiment::Disk | Experiment::DiskContinuation => {
            let cfg = c.disk_config();
            let p = c.disk_p();
            let report = if c.experiment() == Experiment::Disk {
                fixed_point_solve(p, &model, &cfg, DirectionMeasure::uniform(cfg.n)?)?
            } else {
                continuation_schedule(p, c.disk.step.unwrap_or(0.01), &model, &cfg)?.pop().expect("non-empty schedule")
            };
            checks.push(Check { name: "arrival_spread", value: report.spread, threshold: cfg.zeta, pass: report.spread < cfg.zeta });
            let resp = simulate_response(&report.mu, p, &model, &cfg)?;
            checks.push(Check::at_most("speed_bound_excess", max_speed_excess(&model, &resp.flow).max(0.0), 1e-9));
            if p.y == 0.0 {
                checks.push(Check::at_most("reflection_asymmetry", report.mu.reflection_asymmetry(), 1e-4));
            }
            if p.norm() == 0.0 {
                let radial = radial_oracle(&model, dt, DEFAULT_N_QUAD)?;
                checks.push(Check::at_most("radial_oracle_gap", (report.exit_time - radial.exit_time).abs(), 1e-2));
                checks.push(Check::at_most("uniform_deviation", report.mu.max_uniform_deviation(), 1e-6));
            }
        }
    }
    Ok(checks)
}

fn verify(c: &ExperimentConfig) -> std::result::Result<(), CliError> {
    let checks = verification_checks(c).map_err(run_err)?;
    let mut csv = String::from("check,value,threshold,pass\n");
    for ch in &checks {
        let _ = writeln!(csv, "{},{},{},{}", ch.name, num(ch.value), num(ch.threshold), ch.pass);
        println!("{:<24} {:>12.4e} <= {:<10.3e} {}", ch.name, ch.value, ch.threshold, if ch.pass { "PASS" } else { "FAIL" });
    }
    let out = c.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    write_file(&out.join(format!("verify_{}.csv", c.experiment().name())), &csv)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Run(format!("verification failed: {}", failed.join(", "))))
    }
}
