//! Desk-scale self-play on 6-city TSP, then greedy evaluation against the
//! exact tour length on held-out instances.
//!
//! Usage: `cargo run --release --example train_tsp [episodes] [run_dir]`

use std::path::PathBuf;

use duelroute::baselines::{exact_tsp, gap, greedy_rollout};
use duelroute::net::NetConfig;
use duelroute::planner::PlannerConfig;
use duelroute::trainer::{ProblemConfig, TrainConfig, Trainer};

fn main() -> duelroute::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    let run_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("duelroute-train-tsp"));

    let cfg = TrainConfig {
        total_episodes: episodes,
        stage_switch: episodes / 2,
        arena_set_size: 16,
        arena_interval: 25,
        train_steps_per_episode: 4,
        checkpoint_interval: 100,
        seed: 7,
        record_wall_time: false,
        problem: ProblemConfig::tsp(6),
        planner: PlannerConfig {
            n_simulations: 20,
            m_root: 8,
            c_scale: 0.1,
            ..PlannerConfig::default()
        },
        net: NetConfig {
            embed_dim: 64,
            n_heads: 4,
            n_layers: 2,
            ffn_dim: 128,
            batch_size: 32,
            learning_rate: 1e-3,
        },
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), &run_dir)?;
    let summary = trainer.run()?;
    println!(
        "trained {} episodes in {:.1}s, stage {}, best replaced {} times",
        summary.episodes_run,
        t0.elapsed().as_secs_f64(),
        summary.stage,
        summary.best_version
    );

    let policy = &trainer.state().learner.policy;
    let mut gaps = Vec::new();
    for seed in 1_000_000..1_000_100 {
        let env = cfg.problem.make_env(seed)?;
        let best = exact_tsp(env.tsp().expect("tsp"))?.objective;
        gaps.push(gap(greedy_rollout(&env, policy)?.objective, best)?);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    println!("greedy mean gap to optimum over 100 held-out instances: {mean:.2}%");
    println!("logs in {}", run_dir.display());
    Ok(())
}
