//! A single two-player game in each training stage.

use duelroute::env::{format_route, Env};
use duelroute::instance::{generate_evrp, ObjectiveMode};
use duelroute::net::{NetConfig, PolicyNet, ValueNet};
use duelroute::planner::PlannerConfig;
use duelroute::trainer::{run_episode, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> duelroute::error::Result<()> {
    let mut inst = generate_evrp(6, 2, 21)?;
    inst.objective_mode = ObjectiveMode::Distance;
    let env = Env::new(inst)?;
    let cfg = TrainConfig {
        planner: PlannerConfig {
            n_simulations: 16,
            m_root: 4,
            ..PlannerConfig::default()
        },
        net: NetConfig {
            embed_dim: 16,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 32,
            ..NetConfig::default()
        },
        ..TrainConfig::default()
    };
    let theta = PolicyNet::new(cfg.net.clone(), 1)?;
    let best = PolicyNet::new(cfg.net.clone(), 2)?;
    let value = ValueNet::new(cfg.net.clone(), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    for stage in [1, 2] {
        let r = run_episode(&env, &theta, &best, &value, &cfg, stage, &mut rng)?;
        println!("stage {stage}: learner sits {}, competitor uses theta: {}", if r.learner > 0 { "first" } else { "second" }, r.mu_is_theta);
        for (seat, route) in r.routes.iter().enumerate() {
            println!("  player {} ({:.2} km):", if seat == 0 { "+1" } else { "-1" }, r.objectives[seat]);
            for line in format_route(route, 0).lines() {
                println!("    {line}");
            }
        }
        println!(
            "  z = {:+}, simulations learner {} / competitor {}, {} policy and {} value samples",
            r.z,
            r.learner_sims,
            r.competitor_sims,
            r.policy_samples.len(),
            r.value_samples.len()
        );
    }
    Ok(())
}
