//! Scores a trained run greedily and with search on fresh TSP instances.
//!
//! Usage: `cargo run --release --example evaluate_checkpoint [run_dir]`
//! (defaults to the directory written by the `train_tsp` example).

use std::path::PathBuf;

use duelroute::cli::{cmd_eval, cmd_gen, results_csv, EvalArgs, EvalMode, GenArgs, ModeArg, ProblemArg};

fn main() -> duelroute::error::Result<()> {
    let run = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("duelroute-train-tsp"));
    let instances = std::env::temp_dir().join("duelroute-eval-tsp6");
    cmd_gen(&GenArgs {
        problem: ProblemArg::Tsp,
        size: 6,
        stations: 0,
        count: 100,
        seed: 2_000_000,
        mode: ModeArg::Dm,
        out: instances.clone(),
    })?;

    for mode in [EvalMode::Greedy, EvalMode::Mcts] {
        let rows = cmd_eval(&EvalArgs {
            checkpoint: run.clone(),
            instances: instances.clone(),
            mode,
            budget: 20,
            m_root: 8,
            c_scale: None,
            gumbel_noise: false,
            seed: 0,
            out: None,
        })?;
        let mean = |f: fn(&duelroute::cli::EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        println!(
            "{mode:?}: mean objective {:.4}, mean gap {:.2}%, all feasible: {}",
            mean(|r| r.objective),
            mean(|r| r.gap.unwrap_or(f64::NAN)),
            rows.iter().all(|r| r.feasible)
        );
        if mode == EvalMode::Greedy {
            print!("{}", results_csv(&rows[..3])?);
        }
    }
    Ok(())
}
