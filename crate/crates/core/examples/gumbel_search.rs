//! One planning step: Gumbel top-m at the root, then sequential halving.

use duelroute::env::Env;
use duelroute::instance::generate_tsp;
use duelroute::net::{NetConfig, PolicyNet, ValueNet};
use duelroute::planner::{plan, sequential_halving_schedule, PlannerConfig, Policy, Seat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> duelroute::error::Result<()> {
    let env = Env::new(generate_tsp(12, 5)?)?;
    let net = NetConfig {
        embed_dim: 32,
        n_heads: 4,
        n_layers: 2,
        ffn_dim: 64,
        ..NetConfig::default()
    };
    let policy = PolicyNet::new(net.clone(), 1)?;
    let value = ValueNet::new(net, 2)?;
    let cfg = PlannerConfig {
        n_simulations: 32,
        m_root: 8,
        trace: true,
        ..PlannerConfig::default()
    };
    println!("schedule for (m = 8, budget = 32): {:?}", sequential_halving_schedule(8, 32));

    let own = env.initial_state();
    let opp = env.initial_state();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = plan(&env, &own, &opp, Seat::First, &policy, &policy, &value, &cfg, &mut rng)?;
    if let Some(trace) = &r.trace {
        print!("{trace}");
    }
    println!(
        "chose city {} after {} simulations ({} value calls); greedy prior picks {}",
        r.action,
        r.simulations,
        r.evaluations,
        policy.greedy(&env, &own)?
    );
    println!("root value {:+.3}", r.root_value);
    let shown: Vec<String> = r.improved_policy.iter().map(|p| format!("{p:.3}")).collect();
    println!("improved policy [{}]", shown.join(", "));
    Ok(())
}
