//! Masked rollouts on one EVRP instance, checked by the route validator.

use duelroute::baselines::nearest_neighbor;
use duelroute::env::{format_route, validate_route, Env};
use duelroute::instance::{generate_evrp, ObjectiveMode};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> duelroute::error::Result<()> {
    let mut inst = generate_evrp(10, 4, 3)?;
    inst.objective_mode = ObjectiveMode::Distance;
    let env = Env::new(inst)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let end = env.rollout(|_, legal| *legal.choose(&mut rng).expect("nonempty"))?;
    println!("random legal moves, {} steps:", end.steps());
    print!("{}", format_route(&end.route, 0));
    println!("distance {:.2} km, signed energy {:.2} kWh", end.cost, end.energy);
    println!("validator: {} violations", validate_route(&env, &end.route).len());

    let nn = nearest_neighbor(&env)?;
    println!("nearest neighbour:");
    print!("{}", format_route(&nn.route, 0));
    println!("distance {:.2} km", nn.objective);

    let state = env.initial_state();
    println!("legal first moves from the depot: {:?}", env.legal_list(&state));
    Ok(())
}
