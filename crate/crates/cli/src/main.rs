//! `handkit` command-line experiments.
//!
//! Every command writes its outputs plus one run manifest. Exit codes: 0 ok,
//! 2 input error, 3 domain error, 4 internal invariant violation.

mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use handkit::actuator::{
    cells_csv, contact_grid, run_step_response, summarize_grid, ContactScene, SimConfig, SpeedProfile, GRID_CONTACT,
    SWEEP_SETPOINTS, SWEEP_SPEEDS,
};
use handkit::bench::{
    default_catalog, force_error_profile, load_catalog, run_trials, summarize_trials, BenchConfig, BenchContext,
    FailureMode, StatsReport, Strategy, TrialRecord,
};
use handkit::calibration::{fit_all, parse_sweep_csv, SHIPPED_SWEEP_CSV};
use handkit::hand_model::{build_sweep_table, LinkageParams, SweepTable};
use handkit::kv::KvMap;
use handkit::planner::{
    solve_width_analytic, solve_width_qp, GraspSolution, GraspSpec, PlannerError, QpSettings, Solver,
};
use handkit::wrench::{build_gws, force_closure, task_wrench_feasible, ContactSet, DEFAULT_DIRECTION_SAMPLES};
use manifest::Manifest;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

/// Resolution of the closure sweep behind the planner.
const TABLE_RESOLUTION: usize = 200;

#[derive(Debug, Error)]
enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("{0}")]
    Domain(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "handkit", version, about = "Characterization, planning and benchmarking for a coupled-linkage hand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit per-finger force models to a calibration sweep.
    Calibrate {
        /// Sweep CSV (`finger,raw_set,gauge_force_n,repeat`); the shipped
        /// reconstructed sweep when omitted.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, env = "HANDKIT_OUT")]
        out: PathBuf,
    },
    /// Actuator sweeps: step response, overshoot or completion timing.
    Characterize {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Key-value config (speeds, setpoints, trials, seed, contact, target,
        /// noise_sigma, latency).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "HANDKIT_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "HANDKIT_TRIALS")]
        trials: Option<usize>,
        #[arg(long, env = "HANDKIT_OUT")]
        out: PathBuf,
    },
    /// Solve a width-to-grasp request.
    Plan {
        /// Object width in mm.
        width: f64,
        /// Fingers in the grasp, thumb included.
        fingers: usize,
        #[arg(value_enum, default_value_t = SolverArg::Analytic)]
        solver: SolverArg,
        /// Linkage parameters as key-value text; defaults otherwise.
        #[arg(long)]
        hand: Option<PathBuf>,
        /// Solution JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo benchmark of the closure strategies.
    Bench {
        /// Key-value config (objects, strategies, trials, seed, ...).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "HANDKIT_SEED")]
        seed: Option<u64>,
        /// Trials per object and strategy.
        #[arg(long, env = "HANDKIT_TRIALS")]
        trials: Option<usize>,
        /// Output directory.
        #[arg(long, env = "HANDKIT_OUT")]
        out: PathBuf,
    },
    /// Force-closure verdict and task-wrench membership for a contact set.
    Wrench {
        /// Contact set JSON.
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIRECTION_SAMPLES)]
        directions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Step,
    Overshoot,
    Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Analytic,
    Qp,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("handkit: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Calibrate { sweep, out } => cmd_calibrate(sweep.as_deref(), &out),
        Command::Characterize { mode, config, seed, trials, out } => {
            cmd_characterize(mode, config.as_deref(), seed, trials, &out)
        }
        Command::Plan { width, fingers, solver, hand, out } => {
            cmd_plan(width, fingers, solver, hand.as_deref(), out.as_deref())
        }
        Command::Bench { config, seed, trials, out } => cmd_bench(config.as_deref(), seed, trials, &out),
        Command::Wrench { contacts, directions, out } => cmd_wrench(&contacts, directions, out.as_deref()),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes the outputs and their manifest next to the first one.
fn emit(mut manifest: Manifest, outputs: &[(PathBuf, String)], manifest_path: &Path) -> Result<(), CliError> {
    for (path, text) in outputs {
        write(path, text)?;
        manifest.add_output(path, text.as_bytes());
    }
    write(manifest_path, &manifest.to_json())
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_calibrate(sweep: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let text = match sweep {
        Some(p) => read(p)?,
        None => SHIPPED_SWEEP_CSV.to_string(),
    };
    let file = parse_sweep_csv(&text).map_err(input)?;
    if file.records.is_empty() {
        return Err(CliError::Input(file.warnings.join("; ")));
    }
    for w in &file.warnings {
        eprintln!("warning: {w}");
    }
    let models = fit_all(&file.records).map_err(input)?;
    let mut summary = String::from("finger      a (N/raw)     b (N)      R²\n");
    for m in &models {
        let _ = writeln!(summary, "{:<10} {:>10.6} {:>9.4} {:>7.4}", m.finger.name(), m.a, m.b, m.r2);
    }
    print!("{summary}");
    let json = serde_json::to_string_pretty(&serde_json::json!({ "models": models })).expect("models serialize") + "\n";
    let mut m = Manifest::new("calibrate", None);
    m.hash_input("sweep", text.as_bytes());
    emit(m, &[(out.to_path_buf(), json)], &sibling_manifest(out))
}

struct CharacterizeConfig {
    speeds: Vec<f64>,
    setpoints: Vec<f64>,
    trials: usize,
    seed: u64,
    contact: f64,
    target: f64,
    sim: SimConfig,
}

impl CharacterizeConfig {
    const KEYS: [&'static str; 8] =
        ["speeds", "setpoints", "trials", "seed", "contact", "target", "noise_sigma", "latency"];

    fn parse(text: &str) -> Result<Self, CliError> {
        let map = KvMap::parse(text).map_err(input)?;
        map.reject_unknown(&Self::KEYS).map_err(input)?;
        let mut cfg = CharacterizeConfig {
            speeds: SWEEP_SPEEDS.to_vec(),
            setpoints: SWEEP_SETPOINTS.to_vec(),
            trials: 20,
            seed: 0,
            contact: GRID_CONTACT,
            target: 500.0,
            sim: SimConfig::default(),
        };
        if let Some(v) = map.read_list("speeds").map_err(input)? {
            cfg.speeds = v;
        }
        if let Some(v) = map.read_list("setpoints").map_err(input)? {
            cfg.setpoints = v;
        }
        if let Some(t) = map.parse_value("trials").map_err(input)? {
            cfg.trials = t;
        }
        if let Some(s) = map.parse_value("seed").map_err(input)? {
            cfg.seed = s;
        }
        map.read_f64("contact", &mut cfg.contact).map_err(input)?;
        map.read_f64("target", &mut cfg.target).map_err(input)?;
        map.read_f64("noise_sigma", &mut cfg.sim.sensor_noise_sigma).map_err(input)?;
        map.read_f64("latency", &mut cfg.sim.latency).map_err(input)?;
        cfg.sim.validate().map_err(input)?;
        if cfg.trials == 0 {
            return Err(CliError::Input("trials must be ≥ 1".into()));
        }
        Ok(cfg)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn cmd_characterize(
    mode: Mode,
    config: Option<&Path>,
    seed: Option<u64>,
    trials: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let text = config.map(read).transpose()?.unwrap_or_default();
    let mut cfg = CharacterizeConfig::parse(&text)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.trials = trials.unwrap_or(cfg.trials);
    let csv = match mode {
        Mode::Step => {
            let mut csv = String::from("speed,target,first_motion_s,rise_time_s,settling_time_s,warning\n");
            for &v in &cfg.speeds {
                let r = run_step_response(cfg.target, v, &cfg.sim).map_err(input)?;
                let warning = if r.first_motion.is_none() { "no motion" } else { "" };
                if !warning.is_empty() {
                    eprintln!("warning: speed {v}: {warning}");
                }
                let _ = writeln!(
                    csv,
                    "{v},{},{},{},{},{warning}",
                    cfg.target,
                    opt(r.first_motion),
                    opt(r.rise_time),
                    opt(r.settling_time)
                );
            }
            csv
        }
        Mode::Overshoot | Mode::Timing => {
            let mut profiles: Vec<SpeedProfile> = cfg.speeds.iter().map(|&v| SpeedProfile::Constant(v)).collect();
            profiles.push(SpeedProfile::hybrid(cfg.contact));
            let scene = ContactScene::obstacle(cfg.contact);
            let grid = contact_grid(&profiles, &cfg.setpoints, cfg.trials, &scene, &cfg.sim, cfg.seed)
                .map_err(|e| CliError::Domain(e.to_string()))?;
            let cells = if mode == Mode::Overshoot {
                summarize_grid(&grid, |t| t.delta_f)
            } else {
                summarize_grid(&grid, |t| t.completion_time)
            };
            cells_csv(&cells)
        }
    };
    let mode_name = format!("{mode:?}").to_lowercase();
    let mut m = Manifest::new(&format!("characterize {mode_name}"), Some(cfg.seed));
    m.hash_input("config", text.as_bytes());
    m.hash_input("trials", cfg.trials.to_string().as_bytes());
    emit(m, &[(out.to_path_buf(), csv)], &sibling_manifest(out))
}

fn sweep_table(hand: Option<&Path>) -> Result<(SweepTable, String), CliError> {
    let (params, text) = match hand {
        Some(p) => {
            let text = read(p)?;
            (LinkageParams::from_kv(&text).map_err(input)?, text)
        }
        None => (LinkageParams::default(), String::new()),
    };
    let table = build_sweep_table(&params, TABLE_RESOLUTION).map_err(|e| CliError::Domain(e.to_string()))?;
    Ok((table, text))
}

fn plan_summary(sol: &GraspSolution) -> String {
    format!(
        "solver {}  W {} mm  n {}\ns* = {:.6}\ntheta* = {:.3} deg\nz_span = {:.4} mm\ntip_error = {:.4} mm\niterations = {}\n",
        sol.solver,
        sol.width_mm,
        sol.n_fingers,
        sol.s_star.value(),
        sol.theta_star.to_degrees(),
        sol.z_span,
        sol.tip_error,
        sol.iterations
    )
}

fn cmd_plan(
    width: f64,
    fingers: usize,
    solver: SolverArg,
    hand: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (table, hand_text) = sweep_table(hand)?;
    let spec = GraspSpec::new(width, fingers);
    let result = match solver {
        SolverArg::Analytic => solve_width_analytic(&table, &spec),
        SolverArg::Qp => solve_width_qp(&table, &spec, &QpSettings::default()),
    };
    let sol = result.map_err(|e| match e {
        PlannerError::WidthOutOfRange { width, n, min, max } => CliError::Domain(format!(
            "width {width} mm is outside the reachable range ({min:.1}, {max:.1}) mm for a {n}-finger grasp"
        )),
        PlannerError::FingerCount(_) => input(e),
        other => CliError::Domain(other.to_string()),
    })?;
    let json = serde_json::to_string_pretty(&sol.to_json()).expect("solution serializes") + "\n";
    let solver_name = match sol.solver {
        Solver::Analytic => "analytic",
        Solver::Qp => "qp",
    };
    let mut m = Manifest::new(&format!("plan {width} {fingers} {solver_name}"), None);
    m.hash_input("hand", hand_text.as_bytes());
    match out {
        Some(path) => {
            print!("{}", plan_summary(&sol));
            emit(m, &[(path.to_path_buf(), json)], &sibling_manifest(path))
        }
        None => {
            print!("{json}");
            eprint!("{}", plan_summary(&sol));
            eprint!("{}", m.to_json());
            Ok(())
        }
    }
}

/// Checks that must hold for any report; a failure is exit code 4.
fn check_report(report: &StatsReport, records: &[TrialRecord]) -> Result<(), CliError> {
    for r in records {
        if r.outcome.success != (r.outcome.failure_mode == FailureMode::None) {
            return Err(CliError::Invariant(format!(
                "{} trial {}: success and failure mode disagree",
                r.object, r.trial
            )));
        }
    }
    for s in &report.strategies {
        if !(0.0..=1.0).contains(&s.rate) || s.wilson_low > s.rate || s.rate > s.wilson_high {
            return Err(CliError::Invariant(format!(
                "{}: rate {} outside [{}, {}]",
                s.strategy, s.rate, s.wilson_low, s.wilson_high
            )));
        }
        if s.failures.values().sum::<u64>() != s.n {
            return Err(CliError::Invariant(format!("{}: failure histogram does not sum to n", s.strategy)));
        }
    }
    Ok(())
}

fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(
        "object,category,strategy,trial,adversarial,lateral_offset_mm,orientation_jitter_rad,success,failure_mode,grasp_time_s,displacement_mm,peak_force_n\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.5},{},{},{:.4},{:.4},{:.4}",
            r.object,
            r.category,
            r.strategy,
            r.trial,
            r.config.adversarial,
            r.config.lateral_offset,
            r.config.orientation_jitter,
            r.outcome.success,
            r.outcome.failure_mode.name(),
            r.outcome.grasp_time,
            r.outcome.displacement,
            r.outcome.peak_force
        );
    }
    out
}

/// Bins of the averaged force-error curve.
const PROFILE_BINS: usize = 50;

/// Mean relative force error of successful delicate grasps over
/// normalized time, per strategy.
fn profile_csv(records: &[TrialRecord], strategies: &[Strategy]) -> String {
    let mut out = String::from("strategy,tau,mean_relative_error,n\n");
    for &s in strategies {
        let mut sum = vec![0.0; PROFILE_BINS];
        let mut count = vec![0usize; PROFILE_BINS];
        let delicate = records
            .iter()
            .filter(|r| r.strategy == s && r.outcome.success && r.category == handkit::bench::Category::Delicate);
        for r in delicate {
            let Ok(p) = force_error_profile(&r.outcome.force_trace, r.config.force_target) else { continue };
            for (tau, e) in p.points {
                let b = ((tau * PROFILE_BINS as f64) as usize).min(PROFILE_BINS - 1);
                sum[b] += e;
                count[b] += 1;
            }
        }
        for b in 0..PROFILE_BINS {
            if count[b] > 0 {
                let tau = (b as f64 + 0.5) / PROFILE_BINS as f64;
                let _ = writeln!(out, "{s},{tau:.3},{:.6},{}", sum[b] / count[b] as f64, count[b]);
            }
        }
    }
    out
}

fn cmd_bench(config: Option<&Path>, seed: Option<u64>, trials: Option<usize>, out: &Path) -> Result<(), CliError> {
    let text = config.map(read).transpose()?.unwrap_or_default();
    let mut cfg = BenchConfig::from_kv(&text).map_err(input)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.trials_per_cell = trials.unwrap_or(cfg.trials_per_cell);
    if cfg.trials_per_cell == 0 {
        return Err(CliError::Input("trials must be ≥ 1".into()));
    }
    let (objects, catalog_text) = match &cfg.objects {
        Some(p) => {
            // relative catalog paths resolve against the config file
            let path = match config.and_then(Path::parent) {
                Some(dir) if Path::new(p).is_relative() => dir.join(p),
                _ => PathBuf::from(p),
            };
            (load_catalog(&path).map_err(input)?, read(&path)?)
        }
        None => (default_catalog(), handkit::bench::DEFAULT_CATALOG.to_string()),
    };
    let mut ctx = BenchContext::default_hand().map_err(|e| CliError::Domain(e.to_string()))?;
    ctx.params = cfg.params.clone();
    let records = run_trials(&objects, &cfg.strategies, cfg.trials_per_cell, cfg.seed, &ctx).map_err(|e| match e {
        handkit::bench::BenchError::Catalog(c) => input(c),
        other => CliError::Domain(other.to_string()),
    })?;
    let report = summarize_trials(&records, &objects, &cfg.strategies, cfg.trials_per_cell, cfg.seed)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    check_report(&report, &records)?;

    println!("strategy    k/n      rate   95% CI            time (s)");
    for s in &report.strategies {
        println!(
            "{:<10} {:>3}/{:<3}  {:.3}  [{:.3}, {:.3}]  {:.2} ± {:.2}",
            s.strategy.name(),
            s.k,
            s.n,
            s.rate,
            s.wilson_low,
            s.wilson_high,
            s.mean_time_s,
            s.sd_time_s
        );
    }
    for p in &report.pairwise {
        println!("{} vs {}: p = {:.3e}{}", p.a, p.b, p.p_value, if p.significant { " (significant)" } else { "" });
    }

    let mut m = Manifest::new("bench", Some(cfg.seed));
    m.hash_input("config", text.as_bytes());
    m.hash_input("catalog", catalog_text.as_bytes());
    m.hash_input("trials", cfg.trials_per_cell.to_string().as_bytes());
    let outputs = [
        (out.join("report.json"), report.to_json()),
        (out.join("report.csv"), report.to_csv()),
        (out.join("trials.csv"), trials_csv(&records)),
        (out.join("force_profile.csv"), profile_csv(&records, &cfg.strategies)),
    ];
    emit(m, &outputs, &out.join("manifest.json"))
}

fn cmd_wrench(contacts: &Path, directions: usize, out: Option<&Path>) -> Result<(), CliError> {
    let text = read(contacts)?;
    let set: ContactSet =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", contacts.display())))?;
    let gws = build_gws(&set.contacts, set.m, set.lambda, set.dim).map_err(input)?;
    let verdict = force_closure(&gws, directions).map_err(input)?;
    let membership = set.task_wrench.as_deref().map(|w| task_wrench_feasible(&gws, w)).transpose().map_err(input)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "force_closure": verdict.force_closure,
        "epsilon_lower_bound": verdict.epsilon_lower_bound,
        "direction_samples": verdict.direction_samples,
        "certificate": verdict.reason,
        "task_wrench_feasible": membership.as_ref().map(|m| m.is_feasible()),
        "membership": membership,
    }))
    .expect("verdict serializes")
        + "\n";
    println!(
        "force closure: {}  epsilon ≥ {:.6}{}",
        verdict.force_closure,
        verdict.epsilon_lower_bound,
        membership.as_ref().map_or(String::new(), |m| format!("  task wrench feasible: {}", m.is_feasible()))
    );
    let mut m = Manifest::new("wrench", None);
    m.hash_input("contacts", text.as_bytes());
    m.hash_input("directions", directions.to_string().as_bytes());
    match out {
        Some(path) => emit(m, &[(path.to_path_buf(), json)], &sibling_manifest(path)),
        None => {
            print!("{json}");
            eprint!("{}", m.to_json());
            Ok(())
        }
    }
}
