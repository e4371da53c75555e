//! Subcommands and exit-code handling.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pgld_core::action::{minimize_action, rate_curve, ActionOptions, TargetFunctional};
use pgld_core::constants::ConstantsReport;
use pgld_core::montecarlo::{estimate_tail, girsanov_importance_sampling, ldp_fit, TailEstimate};
use pgld_core::noise::verify_assumptions;
use pgld_core::operators::eigenmodes_a2;
use pgld_core::skeleton::{picard_solve, skeleton_energy_bound, solve_skeleton, ControlPath, PicardOptions};
use pgld_core::stepper::{energy_monitor, simulate, Model, SimOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::output::{
    monitor_rows, sha256_hex, timestamp, write_control_csv, write_rows, OutputSet, RunManifest, Summary,
};
use crate::snapshot::write_snapshot;

#[derive(Debug, Parser)]
#[command(name = "pgld", version, about = "Stochastic planetary geostrophic heat model: simulation and large deviations")]
struct Cli {
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true, env = "PGLD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One noisy trajectory with monitors, snapshots and an energy audit.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        eps: Option<f64>,
    },
    /// Controlled noiseless trajectory and its a-priori bound.
    Skeleton {
        #[command(flatten)]
        common: Common,
    },
    /// Minimum-action control reaching the configured target.
    Action {
        #[command(flatten)]
        common: Common,
        /// Overrides `experiment.delta`.
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
    },
    /// Tail probabilities over the eps list and the log-slope fit.
    Mc {
        #[command(flatten)]
        common: Common,
        /// Replaces the eps list with a single value.
        #[arg(long, allow_negative_numbers = true)]
        eps: Option<f64>,
        /// Overrides `experiment.n_paths`.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides `experiment.delta`.
        #[arg(long, allow_negative_numbers = true)]
        delta: Option<f64>,
    },
    /// Measured constants, noise assumptions and energy audits; exit 0 iff all pass.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Lowest eigenmodes of the vertical-Robin heat operator.
    Modes {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Skeleton { .. } => "skeleton",
            Command::Action { .. } => "action",
            Command::Mc { .. } => "mc",
            Command::Audit { .. } => "audit",
            Command::Modes { .. } => "modes",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Skeleton { common }
            | Command::Action { common, .. }
            | Command::Mc { common, .. }
            | Command::Audit { common }
            | Command::Modes { common, .. } => common,
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be positive");
            return 1;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("pgld {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns its manifest.
fn execute(cmd: &Command) -> Result<RunManifest> {
    let started = timestamp();
    let common = cmd.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    match cmd {
        Command::Simulate { eps: Some(e), .. } => cfg.eps = *e,
        Command::Action { delta: Some(d), .. } => cfg.experiment.delta = *d,
        Command::Mc { eps, paths, delta, .. } => {
            if let Some(e) = eps {
                cfg.experiment.eps_list = vec![*e];
            }
            if let Some(n) = paths {
                cfg.experiment.n_paths = *n;
            }
            if let Some(d) = delta {
                cfg.experiment.delta = *d;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let digest = sha256_hex(cfg.to_toml()?.as_bytes());
    let inputs = cfg.input_files();
    let model = cfg.build_model()?;
    let mut out = OutputSet::new(&common.out)?;
    // Outputs are written even when the verdict fails, so the manifest always exists.
    let verdict = match cmd {
        Command::Simulate { .. } => run_simulate(&cfg, &model, &mut out),
        Command::Skeleton { .. } => run_skeleton(&cfg, &model, &mut out),
        Command::Action { .. } => run_action(&cfg, &model, &mut out),
        Command::Mc { .. } => run_mc(&cfg, &model, &mut out),
        Command::Audit { .. } => run_audit(&cfg, &model, &mut out),
        Command::Modes { count, .. } => run_modes(&cfg, *count, &mut out),
    }?;
    let manifest = out.finish(cmd.name(), digest, cfg.master_seed, &inputs, started)?;
    verdict.map(|_| manifest)
}

/// Inner result: `Err` carries a failed verdict after outputs were written.
type Verdict = std::result::Result<(), HarnessError>;

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn default_control(cfg: &RunConfig, model: &Model) -> Result<ControlPath> {
    Ok(cfg
        .control()?
        .unwrap_or_else(|| ControlPath::zero(model.t_final, cfg.experiment.intervals, &model.noise.q)))
}

fn write_csv<T: Serialize>(out: &mut OutputSet, rel: &str, rows: &[T]) -> Result<()> {
    let p = out.path(rel)?;
    write_rows(&p, rows)
}

fn run_simulate(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<Verdict> {
    let control = cfg.control()?;
    let opts = SimOptions { snapshot_stride: cfg.experiment.snapshot_stride };
    let traj = simulate(model, cfg.eps, control.as_ref(), cfg.master_seed, 0, opts)?;
    write_csv(out, "monitors.csv", &monitor_rows(&traj))?;
    for s in &traj.snapshots {
        let p = out.path(&format!("snapshots/theta_{:06}.bin", s.step))?;
        write_snapshot(&s.theta, &p)?;
    }
    let audit = energy_monitor(&traj, &model.forcing, &model.params)?;
    let mut summary = Summary::new();
    summary.insert("eps".into(), json!(cfg.eps));
    summary.insert("steps".into(), json!(traj.monitors.len()));
    summary.insert("final_l2sq".into(), finite(traj.final_theta().l2_sq()));
    summary.insert("energy_audit_pass".into(), json!(audit.pass));
    summary.insert("energy_audit_max_slack".into(), finite(audit.max_slack));
    summary.insert("energy_audit_first_violation".into(), json!(audit.first_violation));
    out.write_json("summary.json", &summary)?;
    Ok(Ok(()))
}

fn run_skeleton(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<Verdict> {
    let chi = default_control(cfg, model)?;
    let traj = solve_skeleton(model, &chi)?;
    write_csv(out, "monitors.csv", &monitor_rows(&traj))?;
    write_control_csv(&out.path("control.csv")?, &chi)?;
    write_snapshot(traj.final_theta(), &out.path("snapshots/final.bin")?)?;
    let bound = skeleton_energy_bound(&traj, model)?;
    let mut summary = Summary::new();
    summary.insert("control_energy".into(), json!(chi.energy()));
    summary.insert("bound_pass".into(), json!(bound.pass));
    summary.insert("bound_max_slack".into(), finite(bound.max_slack));
    if cfg.experiment.picard {
        let mut opts = PicardOptions::default();
        if let Some(w) = cfg.experiment.picard_window {
            opts.window = w;
        }
        let p = picard_solve(model, &chi, opts)?;
        write_csv(out, "windows.csv", &p.windows)?;
        summary.insert("picard_sup_distance".into(), finite(p.trajectory.sup_distance(&traj)?));
        summary.insert("picard_windows".into(), json!(p.windows.len()));
    }
    out.write_json("summary.json", &summary)?;
    Ok(Ok(()))
}

fn target(cfg: &RunConfig, model: &Model, delta: f64) -> Result<TargetFunctional> {
    let t = TargetFunctional::new(model, cfg.experiment.target, delta)?;
    Ok(match cfg.experiment.direction_mode {
        Some(m) => t.with_direction(&model.noise.carriers.modes[m])?,
        None => t,
    })
}

fn action_options(cfg: &RunConfig) -> ActionOptions {
    let e = &cfg.experiment;
    ActionOptions {
        intervals: e.intervals,
        rho0: e.rho0,
        stages: e.stages,
        max_iter: e.max_iter,
        ..Default::default()
    }
}

fn run_action(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<Verdict> {
    let t = target(cfg, model, cfg.experiment.delta)?;
    let res = minimize_action(model, &t, action_options(cfg), None)?;
    write_control_csv(&out.path("control.csv")?, &res.chi_star)?;
    write_csv(out, "trace.csv", &res.trace)?;
    let mut summary = Summary::new();
    summary.insert("delta".into(), json!(cfg.experiment.delta));
    summary.insert("action".into(), finite(res.action));
    summary.insert("penalty_residual".into(), finite(res.penalty_residual));
    summary.insert("feasible".into(), json!(res.feasible));
    summary.insert("converged".into(), json!(res.converged));
    summary.insert("gradient".into(), json!(res.gradient));
    if !cfg.experiment.deltas.is_empty() {
        let curve = rate_curve(model, &t, &cfg.experiment.deltas, action_options(cfg))?;
        write_csv(out, "rate_curve.csv", &curve)?;
    }
    out.write_json("summary.json", &summary)?;
    if res.feasible {
        Ok(Ok(()))
    } else {
        Ok(Err(HarnessError::AuditFailed(format!(
            "target not reached, residual {:.3e}",
            res.penalty_residual
        ))))
    }
}

fn run_mc(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<Verdict> {
    let ex = &cfg.experiment;
    let t = target(cfg, model, ex.delta)?;
    let mut summary = Summary::new();
    let tilt = if ex.importance {
        let res = minimize_action(model, &t, action_options(cfg), None)?;
        write_control_csv(&out.path("tilt.csv")?, &res.chi_star)?;
        summary.insert("action".into(), finite(res.action));
        summary.insert("action_feasible".into(), json!(res.feasible));
        Some(res)
    } else {
        None
    };
    let mut rows: Vec<TailEstimate> = Vec::with_capacity(ex.eps_list.len());
    for (k, &eps) in ex.eps_list.iter().enumerate() {
        let seed = cfg.master_seed.wrapping_add(k as u64);
        let r = match &tilt {
            Some(res) => girsanov_importance_sampling(model, &t, &res.chi_star, eps, ex.n_paths, seed)?,
            None => estimate_tail(model, eps, &t, ex.n_paths, seed)?,
        };
        rows.push(r);
    }
    write_csv(out, "mc.csv", &rows)?;
    summary.insert("delta".into(), json!(ex.delta));
    summary.insert("paths".into(), json!(ex.n_paths));
    summary.insert("importance".into(), json!(ex.importance));
    if rows.len() >= 2 {
        let i_ref = tilt.as_ref().filter(|r| r.feasible).map(|r| r.action);
        match ldp_fit(&rows, i_ref) {
            Ok(fit) => {
                summary.insert("ldp_slope".into(), finite(fit.slope));
                summary.insert("ldp_slope_se".into(), finite(fit.slope_se));
                summary.insert("ldp_ratio".into(), json!(fit.ratio.filter(|r| r.is_finite())));
                summary.insert("ldp_valid".into(), json!(fit.valid));
            }
            Err(e) => {
                summary.insert("ldp_error".into(), json!(e.to_string()));
            }
        }
    }
    out.write_json("summary.json", &summary)?;
    Ok(Ok(()))
}

fn run_audit(cfg: &RunConfig, model: &Model, out: &mut OutputSet) -> Result<Verdict> {
    let n = cfg.experiment.audit_samples.max(100);
    let seed = cfg.master_seed;
    let constants = ConstantsReport::measure(model.grid, &model.params, n, seed)?;
    let assumptions = verify_assumptions(&model.noise, n, model.t_final, seed)?;
    let quiet = simulate(model, 0.0, None, seed, 0, SimOptions { snapshot_stride: 0 })?;
    let quiet_audit = energy_monitor(&quiet, &model.forcing, &model.params)?;
    let noisy_audit = if cfg.eps > 0.0 {
        let noisy = simulate(model, cfg.eps, None, seed, 0, SimOptions { snapshot_stride: 0 })?;
        Some(energy_monitor(&noisy, &model.forcing, &model.params)?)
    } else {
        None
    };
    let chi = default_control(cfg, model)?;
    let bound = skeleton_energy_bound(&solve_skeleton(model, &chi)?, model)?;

    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
        ok
    };
    let report = json!({
        "constants": constants,
        "poincare_pass": check("poincare", constants.poincare_holds()),
        "noise_assumptions": assumptions,
        "noise_assumptions_pass": check("noise_assumptions", assumptions.pass),
        "deterministic_energy": {
            "pass": check("deterministic_energy", quiet_audit.pass),
            "max_slack": finite(quiet_audit.max_slack),
            "first_violation": quiet_audit.first_violation,
        },
        "noisy_energy": noisy_audit.as_ref().map(|a| json!({
            "eps": cfg.eps,
            "pass": check("noisy_energy", a.pass),
            "max_slack": finite(a.max_slack),
            "first_violation": a.first_violation,
        })),
        "skeleton_bound": {
            "pass": check("skeleton_bound", bound.pass),
            "max_slack": finite(bound.max_slack),
            "first_violation": bound.first_violation,
        },
    });
    out.write_json("audit.json", &report)?;
    if failed.is_empty() {
        Ok(Ok(()))
    } else {
        Ok(Err(HarnessError::AuditFailed(failed.join(", "))))
    }
}

#[derive(Serialize)]
struct ModeRow {
    index: usize,
    cx: usize,
    cy: usize,
    cz: usize,
    eigenvalue: f64,
}

fn run_modes(cfg: &RunConfig, count: usize, out: &mut OutputSet) -> Result<Verdict> {
    let grid = cfg.grid()?;
    let basis = eigenmodes_a2(&grid, &cfg.params, count)?;
    let rows: Vec<ModeRow> = basis
        .indices
        .iter()
        .zip(&basis.eigenvalues)
        .enumerate()
        .map(|(index, (c, &eigenvalue))| ModeRow { index, cx: c[0], cy: c[1], cz: c[2], eigenvalue })
        .collect();
    write_csv(out, "modes.csv", &rows)?;
    for (k, m) in basis.modes.iter().enumerate() {
        write_snapshot(m, &out.path(&format!("modes/mode_{k:03}.bin"))?)?;
    }
    Ok(Ok(()))
}

/// Reads a manifest written by a previous run.
pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let p = dir.join("manifest.json");
    let text = fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))
}
