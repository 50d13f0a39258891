//! Traction power and per-edge battery energy for the EVRP vehicle.

use crate::instance::EvrpInstance;

/// Constant-speed driving: no acceleration term.
const ACCELERATION: f64 = 0.0;

/// Average speed in m/s.
#[inline]
pub fn speed_ms(inst: &EvrpInstance) -> f64 {
    inst.speed / 3.6
}

/// Mechanical power in W for a vehicle of total `mass` (kg) on a road of
/// `slope` radians at the instance speed.
///
/// The rolling term is `c_r * cos(slope)` unless the instance asks for the
/// gravity-scaled `c_r * g * cos(slope)`.
pub fn mech_power(inst: &EvrpInstance, mass: f64, slope: f64) -> f64 {
    let veh = &inst.vehicle;
    let v = speed_ms(inst);
    let rolling = if inst.physical_rolling_resistance {
        veh.rolling_resistance * veh.gravity
    } else {
        veh.rolling_resistance
    };
    let aero = 0.5 * veh.drag_coefficient * veh.air_density * veh.frontal_area * v * v;
    (mass * (ACCELERATION + veh.gravity * slope.sin() + rolling * slope.cos()) + aero) * v
}

/// Battery energy in kWh drawn on edge `i -> j` while carrying `load` cargo
/// units. Negative values are regenerated energy.
pub fn energy_consumed(inst: &EvrpInstance, i: usize, j: usize, load: f64) -> f64 {
    let mass = inst.vehicle.unladen_mass + load;
    let power = mech_power(inst, mass, inst.slope_at(i, j));
    let hours = inst.time(i, j);
    let veh = &inst.vehicle;
    // P = 0 takes the discharge branch; both give zero.
    let efficiency = if power >= 0.0 {
        veh.propulsion_efficiency * veh.charging_efficiency
    } else {
        veh.regen_braking_efficiency * veh.discharging_efficiency
    };
    efficiency * power * hours / 1000.0
}

/// Largest energy the edge can cost over all cargo levels in `[0, L]`.
///
/// Energy is monotone in mass within each branch, so the extremes are at the
/// empty and full loads.
pub fn max_edge_energy(inst: &EvrpInstance, i: usize, j: usize) -> f64 {
    energy_consumed(inst, i, j, 0.0).max(energy_consumed(inst, i, j, inst.vehicle.capacity))
}

/// Smallest energy the edge can cost over all cargo levels in `[0, L]`.
pub fn min_edge_energy(inst: &EvrpInstance, i: usize, j: usize) -> f64 {
    energy_consumed(inst, i, j, 0.0).min(energy_consumed(inst, i, j, inst.vehicle.capacity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ObjectiveMode;

    fn line(dx: f64) -> EvrpInstance {
        EvrpInstance::from_parts((0.0, 0.0), &[(50.0, 50.0)], &[(dx, 0.0, 0.5)], ObjectiveMode::Energy)
    }

    #[test]
    fn zero_speed_gives_zero_power() {
        let mut inst = line(10.0);
        inst.speed = 0.0;
        assert_eq!(mech_power(&inst, 4100.0, 0.3), 0.0);
    }

    #[test]
    fn no_resistance_gives_zero_power() {
        let mut inst = line(10.0);
        inst.vehicle.rolling_resistance = 0.0;
        inst.vehicle.drag_coefficient = 0.0;
        assert_eq!(mech_power(&inst, 4100.0, 0.0), 0.0);
    }

    #[test]
    fn flat_power_golden() {
        // 4100 * 0.01 + 0.5 * 0.7 * 1.2 * 3.912 * (60/3.6)^2, times 60/3.6,
        // evaluated by a separate calculator.
        let inst = line(10.0);
        let p = mech_power(&inst, 4100.0, 0.0);
        let expected = 8290.000000000002;
        assert!((p - expected).abs() <= 1e-9 * expected, "{p}");
    }

    #[test]
    fn flat_edge_golden() {
        // 10 km at 60 km/h, empty: 1.18 * 1.11 * 8290 W * (1/6) h / 1000.
        let inst = line(10.0);
        let e = energy_consumed(&inst, 0, 2, 0.0);
        let expected = 1.8097070000000006;
        assert!((e - expected).abs() <= 1e-12 * expected, "{e}");
    }

    #[test]
    fn downhill_regenerates() {
        let mut inst = line(10.0);
        let mut s = vec![vec![0.0; 3]; 3];
        s[0][2] = -0.2;
        s[2][0] = 0.2;
        inst.slope = Some(s);
        assert!(mech_power(&inst, 4100.0, -0.2) < 0.0);
        assert!(energy_consumed(&inst, 0, 2, 0.0) < 0.0);
        assert!(energy_consumed(&inst, 2, 0, 0.0) > 0.0);
        // Round trip still costs energy overall.
        assert!(energy_consumed(&inst, 0, 2, 0.0) + energy_consumed(&inst, 2, 0, 0.0) > 0.0);
    }

    #[test]
    fn zero_length_edge() {
        let inst = line(10.0);
        assert_eq!(energy_consumed(&inst, 2, 2, 1.0), 0.0);
    }

    #[test]
    fn physical_rolling_scales_by_gravity() {
        let mut inst = line(10.0);
        let base = mech_power(&inst, 5000.0, 0.0);
        inst.physical_rolling_resistance = true;
        let phys = mech_power(&inst, 5000.0, 0.0);
        let v = speed_ms(&inst);
        let diff = 5000.0 * 0.01 * (9.81 - 1.0) * v;
        assert!((phys - base - diff).abs() < 1e-6);
    }
}
