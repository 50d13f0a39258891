//! Battery energy per edge under the traction model: load, slope and
//! regenerative braking.

use duelroute::env::{energy_consumed, mech_power, route_energy};
use duelroute::instance::{EvrpInstance, ObjectiveMode};

fn main() {
    let mut inst = EvrpInstance::from_parts((0.0, 0.0), &[(0.0, 40.0)], &[(30.0, 0.0, 1.0), (30.0, 40.0, 0.5)], ObjectiveMode::Energy);
    let cap = inst.vehicle.capacity;
    println!("flat roads at {} km/h", inst.speed);
    for (i, j) in [(0, 2), (2, 3), (3, 0)] {
        println!(
            "  {i} -> {j}: {:5.1} km, empty {:.3} kWh, full {:.3} kWh",
            inst.dist(i, j),
            energy_consumed(&inst, i, j, 0.0),
            energy_consumed(&inst, i, j, cap)
        );
    }

    // 2% grade between the depot and the first customer, downhill on return
    let n = inst.len();
    let mut slope = vec![vec![0.0; n]; n];
    slope[0][2] = 0.02;
    slope[2][0] = -0.02;
    inst.slope = Some(slope);
    println!("with a 2% climb from the depot to node 2");
    for (i, j) in [(0, 2), (2, 0)] {
        let p = mech_power(&inst, inst.vehicle.unladen_mass + cap, inst.slope_at(i, j));
        println!(
            "  {i} -> {j}: power {:8.1} W, full-load energy {:+.3} kWh",
            p,
            energy_consumed(&inst, i, j, cap)
        );
    }
    println!("route 0 2 0 3 0 signed energy {:.3} kWh", route_energy(&inst, &[0, 2, 0, 3, 0]));
}
