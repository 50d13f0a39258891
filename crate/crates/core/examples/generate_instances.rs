//! Writes a small instance set to disk and reads it back.
//!
//! Usage: `cargo run --example generate_instances [out_dir]`

use std::path::PathBuf;

use duelroute::cli::{cmd_gen, GenArgs, ModeArg, ProblemArg};
use duelroute::instance::{load_instance, Instance, NodeKind};

fn main() -> duelroute::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("duelroute-instances"));

    let evrp = GenArgs {
        problem: ProblemArg::Evrp,
        size: 10,
        stations: 4,
        count: 8,
        seed: 0,
        mode: ModeArg::Em,
        out: out.join("c10-s4"),
    };
    let tsp = GenArgs {
        problem: ProblemArg::Tsp,
        size: 20,
        stations: 0,
        count: 3,
        seed: 7,
        mode: ModeArg::Dm,
        out: out.join("tsp20"),
    };
    for args in [&evrp, &tsp] {
        let files = cmd_gen(args)?;
        println!("{}: {} files", args.out.display(), files.len());
    }

    let first = load_instance(evrp.out.join("evrp-c10-s4-EM-000000.json"))?;
    if let Instance::Evrp(e) = &first {
        let depot = &e.nodes[e.depot()];
        let demands: Vec<f64> = e.nodes.iter().filter(|n| n.kind == NodeKind::Customer).map(|n| n.demand).collect();
        println!("depot at ({:.1}, {:.1}), {} stations", depot.x, depot.y, e.n_stations());
        println!("customer demands {demands:?}");
        println!(
            "vehicle: L = {} kg, Q = {} kWh, {} km/h, shift {} h",
            e.vehicle.capacity, e.vehicle.battery_capacity, e.speed, e.t_max
        );
    }
    Ok(())
}
