//! Batch entry points behind the `duelroute` binary.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data errors.

mod plot;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use plot::{moving_average, read_metrics, render_svg, MetricsRow};

use crate::baselines::{exact_evrp, exact_tsp, gap, greedy_rollout, mcts_rollout, EXACT_EVRP_LIMIT, EXACT_TSP_LIMIT};
use crate::env::{format_route, objective, parse_route, validate_route, Env};
use crate::error::{Error, Result};
use crate::instance::{generate_evrp, generate_tsp, load_instance, save_instance, Instance, ObjectiveMode};
use crate::net::{load_nets, PolicyNet, ValueNet};
use crate::planner::{PlannerConfig, Seat};
use crate::trainer::{load_checkpoint, TrainConfig, Trainer, CHECKPOINT_FILE};

/// Environment variable naming the directory that holds run directories.
pub const RUN_ROOT_ENV: &str = "DUELROUTE_RUN_ROOT";

#[derive(Debug, Parser)]
#[command(name = "duelroute", version, about = "Self-play routing: instances, training, evaluation, plots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random instances, one file per seed.
    Gen(GenArgs),
    /// Run two-stage self-play training.
    Train(TrainArgs),
    /// Score a trained policy on a directory of instances.
    Eval(EvalArgs),
    /// Draw training curves from a metrics CSV as SVG.
    Plot(PlotArgs),
    /// Check a route against an instance.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Tsp,
    Evrp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dm,
    Em,
}

impl From<ModeArg> for ObjectiveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dm => ObjectiveMode::Distance,
            ModeArg::Em => ObjectiveMode::Energy,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub problem: ProblemArg,
    /// Cities (TSP) or customers (EVRP).
    #[arg(short = 'n', long)]
    pub size: usize,
    /// Charging stations (EVRP only).
    #[arg(short = 's', long, default_value_t = 4)]
    pub stations: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// First seed; files use `seed..seed + count`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Em)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// TOML training config; optional with `--resume`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from the checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
    /// Defaults to `$DUELROUTE_RUN_ROOT/<config stem>`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Greedy,
    Mcts,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Run directory, `checkpoint.json` or `nets.json`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Greedy)]
    pub mode: EvalMode,
    /// Simulations per move in mcts mode.
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 16)]
    pub m_root: usize,
    /// Value scale of the root transform; the run's own when absent.
    #[arg(long)]
    pub c_scale: Option<f64>,
    /// Sample root candidates with Gumbel noise instead of taking the top m.
    #[arg(long)]
    pub gumbel_noise: bool,
    /// Seeds the per-instance noise generators.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Moving-average window in episodes.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Stage-switch marker; read from the stage column when absent.
    #[arg(long)]
    pub stage_switch: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Route file in trip-per-line text format.
    #[arg(long)]
    pub route: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 1,
        _ => 2,
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => {
            let files = cmd_gen(a)?;
            println!("wrote {} instances to {}", files.len(), a.out.display());
        }
        Command::Train(a) => {
            let rc = RunConfig::resolve(a, std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from))?;
            let summary = cmd_train(&rc, a.resume)?;
            println!(
                "episodes {} to {}, stage {}, best version {}{}",
                summary.next_episode - summary.episodes_run,
                summary.next_episode,
                summary.stage,
                summary.best_version,
                if summary.interrupted { " (stopped early)" } else { "" }
            );
            println!("run directory {}", rc.run_dir.display());
        }
        Command::Eval(a) => {
            let rows = cmd_eval(a)?;
            let text = results_csv(&rows)?;
            match &a.out {
                Some(p) => write(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Plot(a) => {
            cmd_plot(a)?;
            println!("wrote {}", a.out.display());
        }
        Command::Validate(a) => {
            let obj = cmd_validate(a)?;
            println!("feasible, objective {obj}");
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// File name of the instance generated with `seed`.
pub fn instance_file_name(a: &GenArgs, seed: u64) -> String {
    match a.problem {
        ProblemArg::Tsp => format!("tsp-n{}-{seed:06}.json", a.size),
        ProblemArg::Evrp => format!("evrp-c{}-s{}-{}-{seed:06}.json", a.size, a.stations, ObjectiveMode::from(a.mode)),
    }
}

/// Writes `count` instances with seeds `seed..seed + count`.
pub fn cmd_gen(a: &GenArgs) -> Result<Vec<PathBuf>> {
    if a.count == 0 {
        return Err(Error::Usage("--count must be positive".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    (a.seed..a.seed + a.count as u64)
        .map(|seed| {
            let inst: Instance = match a.problem {
                ProblemArg::Tsp => generate_tsp(a.size, seed)?.into(),
                ProblemArg::Evrp => {
                    let mut e = generate_evrp(a.size, a.stations, seed)?;
                    e.objective_mode = a.mode.into();
                    e.into()
                }
            };
            let path = a.out.join(instance_file_name(a, seed));
            save_instance(&inst, &path)?;
            Ok(path)
        })
        .collect()
}

/// Fully resolved training invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    /// `None` resumes with the stored config.
    pub train: Option<TrainConfig>,
}

impl RunConfig {
    /// Config file plus flag overrides. The run directory is `--run-dir`,
    /// else `<root>/<config stem>` with `root` from the environment or `runs`.
    pub fn resolve(a: &TrainArgs, root: Option<PathBuf>) -> Result<Self> {
        let train = match &a.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                let mut cfg = TrainConfig::from_toml(&text)?;
                if let Some(s) = a.seed {
                    cfg.seed = s;
                }
                if let Some(n) = a.episodes {
                    cfg.total_episodes = n;
                }
                if a.stop_after.is_some() {
                    cfg.stop_after = a.stop_after;
                }
                cfg.validate()?;
                Some(cfg)
            }
            None if a.resume => {
                if a.seed.is_some() || a.episodes.is_some() || a.stop_after.is_some() {
                    return Err(Error::Usage("overrides need --config".into()));
                }
                None
            }
            None => return Err(Error::Usage("train needs --config (or --resume)".into())),
        };
        let run_dir = match (&a.run_dir, &a.config) {
            (Some(d), _) => d.clone(),
            (None, Some(path)) => {
                let stem = path
                    .file_stem()
                    .ok_or_else(|| Error::Usage(format!("cannot name a run after {}", path.display())))?;
                root.unwrap_or_else(|| PathBuf::from("runs")).join(stem)
            }
            (None, None) => return Err(Error::Usage("--resume without --config needs --run-dir".into())),
        };
        Ok(Self { run_dir, train })
    }
}

pub fn cmd_train(rc: &RunConfig, resume: bool) -> Result<crate::trainer::TrainSummary> {
    let mut trainer = if resume {
        Trainer::resume(&rc.run_dir, rc.train.clone())?
    } else {
        let cfg = rc.train.clone().ok_or_else(|| Error::Usage("a fresh run needs --config".into()))?;
        Trainer::new(cfg, &rc.run_dir)?
    };
    trainer.run()
}

/// Networks from a run directory, a trainer checkpoint or a saved network
/// pair, with the run's planner settings when the file records them.
pub fn load_policy(path: &Path) -> Result<(PolicyNet, ValueNet, Option<PlannerConfig>)> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(Error::InvalidArgument(format!("no checkpoint at {}", file.display())));
    }
    match load_checkpoint(&file) {
        Ok(state) => Ok((state.learner.policy, state.learner.value, Some(state.config.planner))),
        Err(Error::Contract(_)) => {
            let (p, v) = load_nets(&file, None)?;
            Ok((p, v, None))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub instance: String,
    pub method: EvalMode,
    pub objective: f64,
    pub oracle: Option<f64>,
    pub gap: Option<f64>,
    pub feasible: bool,
    /// Node ids separated by spaces.
    pub route: String,
}

/// Instance files in `dir`, by name.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?.path();
        if p.extension().is_some_and(|x| x == "json") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no instance files in {}", dir.display())));
    }
    Ok(files)
}

/// Exact optimum when the instance is within the oracle's size limit.
pub fn oracle_objective(env: &Env) -> Result<Option<f64>> {
    match env.instance() {
        Instance::Tsp(t) if t.len() <= EXACT_TSP_LIMIT => Ok(Some(exact_tsp(t)?.objective)),
        Instance::Evrp(e) if e.n_customers() <= EXACT_EVRP_LIMIT => Ok(Some(exact_evrp(env)?.objective)),
        _ => Ok(None),
    }
}

/// One row per instance, computed in parallel.
///
/// Mcts mode searches against a shadow opponent that follows the policy
/// greedily. The planner sits second, so matching the greedy tour counts as
/// a loss and only strict improvements win; the root keeps the top-m logits
/// without noise, so results do not depend on `seed` unless noise is asked
/// for. `c_visit` and `c_scale` come from the run's config when available.
pub fn cmd_eval(a: &EvalArgs) -> Result<Vec<EvalRow>> {
    let (policy, value, stored) = load_policy(&a.checkpoint)?;
    let base = stored.unwrap_or_default();
    let planner = PlannerConfig {
        n_simulations: a.budget,
        m_root: a.m_root,
        c_scale: a.c_scale.unwrap_or(base.c_scale),
        gumbel_noise: a.gumbel_noise,
        trace: false,
        ..base
    };
    planner.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let files = instance_files(&a.instances)?;
    files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let env = Env::new(load_instance(path)?)?;
            let sol = match a.mode {
                EvalMode::Greedy => greedy_rollout(&env, &policy)?,
                EvalMode::Mcts => {
                    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(i as u64));
                    mcts_rollout(&env, &policy, &value, &planner, Seat::Second, &mut rng)?
                }
            };
            let oracle = oracle_objective(&env)?;
            let depot = match env.instance() {
                Instance::Tsp(_) => 0,
                Instance::Evrp(e) => e.depot(),
            };
            Ok(EvalRow {
                instance: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                method: a.mode,
                objective: sol.objective,
                gap: oracle.map(|o| gap(sol.objective, o)).transpose()?,
                oracle,
                feasible: validate_route(&env, &sol.route).is_empty(),
                route: format_route(&sol.route, depot).trim_end().replace('\n', " | "),
            })
        })
        .collect()
}

pub fn results_csv(rows: &[EvalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    if a.window == 0 {
        return Err(Error::Usage("--window must be positive".into()));
    }
    let rows = read_metrics(&a.metrics)?;
    let svg = render_svg(&rows, a.window, a.stage_switch)?;
    write(&a.out, &svg)
}

/// Objective of a feasible route; every violation becomes the error.
pub fn cmd_validate(a: &ValidateArgs) -> Result<f64> {
    let env = Env::new(load_instance(&a.instance)?)?;
    let text = fs::read_to_string(&a.route).map_err(|e| Error::io(format!("reading {}", a.route.display()), e))?;
    let route = parse_route(&text)?;
    let violations = validate_route(&env, &route);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Infeasible(lines.join("; ")));
    }
    objective(&env, &route)
}
