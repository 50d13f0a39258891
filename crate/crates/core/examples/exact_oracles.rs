//! Exact optima next to nearest-neighbour tours.

use duelroute::baselines::{exact_evrp, exact_tsp, gap, nearest_neighbor};
use duelroute::env::Env;
use duelroute::instance::{generate_evrp, generate_tsp, ObjectiveMode, TspInstance};

fn main() -> duelroute::error::Result<()> {
    let square = TspInstance::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])?;
    println!("unit square tour: {}", exact_tsp(&square)?.objective);

    for seed in 0..3 {
        let inst = generate_tsp(12, seed)?;
        let opt = exact_tsp(&inst)?;
        let nn = nearest_neighbor(&Env::new(inst)?)?;
        println!(
            "tsp12 seed {seed}: optimum {:.4}, nearest neighbour {:.4} ({:+.2}%)",
            opt.objective,
            nn.objective,
            gap(nn.objective, opt.objective)?
        );
    }

    for mode in [ObjectiveMode::Distance, ObjectiveMode::Energy] {
        let mut inst = generate_evrp(6, 2, 11)?;
        inst.objective_mode = mode;
        let env = Env::new(inst)?;
        let opt = exact_evrp(&env)?;
        let nn = nearest_neighbor(&env)?;
        println!(
            "C6-S2 {mode}: optimum {:.3} over {:?} ({} labels, {:.2}s), nearest neighbour {:.3}",
            opt.objective, opt.route, opt.expansions, opt.wall_time, nn.objective
        );
    }
    Ok(())
}
