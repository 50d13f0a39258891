//! Route objective, the text route format, and an independent feasibility
//! checker that re-simulates a route from scratch.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::energy::energy_consumed;
use super::{Env, FEASIBILITY_TOL};
use crate::error::{Error, Result};
use crate::instance::{EvrpInstance, Instance, NodeKind, ObjectiveMode, TspInstance};

/// The routing constraint a route breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// Every customer (city) is served exactly once.
    CustomerService,
    /// A station is never followed by itself.
    StationSelfLoop,
    /// The route is a connected walk from the depot back to the depot over
    /// valid node ids.
    Continuity,
    /// Trip time, counted from the last depot departure, stays within `t_max`.
    DriverTime,
    /// Remaining cargo stays within `[0, L]`.
    Cargo,
    /// Remaining battery stays within `[0, Q]`.
    Battery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// Index into the route where the violation was detected.
    pub index: usize,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at route[{}]: {}", self.constraint, self.index, self.detail)
    }
}

fn violation(constraint: Constraint, index: usize, detail: impl Into<String>) -> Violation {
    Violation {
        constraint,
        index,
        detail: detail.into(),
    }
}

/// Re-simulates `route` and lists every constraint it breaks. An empty list
/// means the route is feasible.
pub fn validate_route(env: &Env, route: &[usize]) -> Vec<Violation> {
    match env.instance() {
        Instance::Tsp(t) => validate_tsp(t, route),
        Instance::Evrp(e) => validate_evrp(e, route),
    }
}

fn validate_tsp(t: &TspInstance, route: &[usize]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = t.len();
    if route.len() < 2 || route.first() != route.last() {
        out.push(violation(Constraint::Continuity, 0, "tour is not closed"));
        return out;
    }
    if let Some((k, &id)) = route.iter().enumerate().find(|(_, &id)| id >= n) {
        out.push(violation(Constraint::Continuity, k, format!("unknown city {id}")));
        return out;
    }
    let mut seen = vec![0usize; n];
    for &c in &route[..route.len() - 1] {
        seen[c] += 1;
    }
    for (c, &k) in seen.iter().enumerate() {
        if k != 1 {
            out.push(violation(
                Constraint::CustomerService,
                0,
                format!("city {c} visited {k} times"),
            ));
        }
    }
    for (k, w) in route.windows(2).enumerate() {
        if w[0] == w[1] {
            out.push(violation(Constraint::Continuity, k + 1, "repeated consecutive city"));
        }
    }
    out
}

fn validate_evrp(e: &EvrpInstance, route: &[usize]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = e.len();
    let depot = e.depot();
    if route.is_empty() {
        out.push(violation(Constraint::Continuity, 0, "empty route"));
        return out;
    }
    if let Some((k, &id)) = route.iter().enumerate().find(|(_, &id)| id >= n) {
        out.push(violation(Constraint::Continuity, k, format!("unknown node {id}")));
        return out;
    }
    if route[0] != depot {
        out.push(violation(Constraint::Continuity, 0, "route does not start at the depot"));
    }
    if route[route.len() - 1] != depot {
        out.push(violation(
            Constraint::Continuity,
            route.len() - 1,
            "route does not end at the depot",
        ));
    }

    let mut visits = vec![0usize; n];
    let q = e.vehicle.battery_capacity;
    let cap = e.vehicle.capacity;
    let (mut battery, mut clock, mut cargo) = (q, 0.0_f64, cap);
    for (k, w) in route.windows(2).enumerate() {
        let (i, j) = (w[0], w[1]);
        let at = k + 1;
        if i == j {
            let c = if e.kind(j) == NodeKind::Station {
                Constraint::StationSelfLoop
            } else {
                Constraint::Continuity
            };
            out.push(violation(c, at, format!("self-loop at node {j}")));
            continue;
        }
        battery -= energy_consumed(e, i, j, cargo);
        if battery < -FEASIBILITY_TOL {
            out.push(violation(
                Constraint::Battery,
                at,
                format!("battery {battery:.6} kWh on arrival at node {j}"),
            ));
        }
        battery = battery.min(q);
        clock += e.dist(i, j) / e.speed;
        match e.kind(j) {
            NodeKind::Customer => {
                visits[j] += 1;
                clock += e.service_time;
                cargo -= e.nodes[j].demand;
                if cargo < -FEASIBILITY_TOL {
                    out.push(violation(
                        Constraint::Cargo,
                        at,
                        format!("cargo {cargo} after serving node {j}"),
                    ));
                }
            }
            NodeKind::Station => {
                clock += e.recharge_dwell;
                battery = q;
            }
            NodeKind::Depot => {}
        }
        if clock > e.t_max + FEASIBILITY_TOL {
            out.push(violation(
                Constraint::DriverTime,
                at,
                format!("trip time {clock:.6} h exceeds {} h", e.t_max),
            ));
        }
        if j == depot {
            battery = q;
            clock = 0.0;
            cargo = cap;
        }
    }
    for c in e.customers() {
        if visits[c] != 1 {
            out.push(violation(
                Constraint::CustomerService,
                0,
                format!("customer {c} served {} times", visits[c]),
            ));
        }
    }
    out
}

/// Objective of a complete route: tour length (TSP), total distance (DM) or
/// total signed energy with the route's cargo profile (EM).
pub fn objective(env: &Env, route: &[usize]) -> Result<f64> {
    match env.instance() {
        Instance::Tsp(t) => {
            if route.len() < 2 || route.first() != route.last() {
                return Err(Error::InvalidArgument("TSP tour is not closed".into()));
            }
            check_ids(route, t.len())?;
            Ok(route.windows(2).map(|w| t.dist(w[0], w[1])).sum())
        }
        Instance::Evrp(e) => {
            let depot = e.depot();
            if route.len() < 2 || route[0] != depot || route[route.len() - 1] != depot {
                return Err(Error::InvalidArgument("route is not depot-terminated".into()));
            }
            check_ids(route, e.len())?;
            Ok(match e.objective_mode {
                ObjectiveMode::Distance => route.windows(2).map(|w| e.dist(w[0], w[1])).sum(),
                ObjectiveMode::Energy => route_energy(e, route),
            })
        }
    }
}

/// Signed energy along `route`, cargo starting full and resetting at the depot.
pub fn route_energy(e: &EvrpInstance, route: &[usize]) -> f64 {
    let mut cargo = e.vehicle.capacity;
    let mut total = 0.0;
    for w in route.windows(2) {
        total += energy_consumed(e, w[0], w[1], cargo);
        match e.kind(w[1]) {
            NodeKind::Customer => cargo -= e.nodes[w[1]].demand,
            NodeKind::Depot => cargo = e.vehicle.capacity,
            NodeKind::Station => {}
        }
    }
    total
}

fn check_ids(route: &[usize], n: usize) -> Result<()> {
    match route.iter().find(|&&id| id >= n) {
        Some(&id) => Err(Error::NodeOutOfRange { id, len: n }),
        None => Ok(()),
    }
}

/// Splits a route at every visit of `depot` into closed trips.
pub fn trips(route: &[usize], depot: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    for &id in route {
        cur.push(id);
        if id == depot && cur.len() > 1 {
            out.push(std::mem::replace(&mut cur, vec![depot]));
        }
    }
    if cur.len() > 1 {
        out.push(cur);
    }
    out
}

/// One trip per line, node ids separated by single spaces.
pub fn format_route(route: &[usize], depot: usize) -> String {
    let mut s = String::new();
    for trip in trips(route, depot) {
        let line: Vec<String> = trip.iter().map(|id| id.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Inverse of [`format_route`]: consecutive trips share their depot visit.
pub fn parse_route(text: &str) -> Result<Vec<usize>> {
    let mut route: Vec<usize> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| {
                    Error::InvalidArgument(format!("line {}: bad node id {tok:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        if route.last().is_some() && route.last() == ids.first() {
            route.extend_from_slice(&ids[1..]);
        } else {
            route.extend(ids);
        }
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;
    use crate::instance::{generate_evrp, EvrpInstance};

    fn two_customer(mode: ObjectiveMode) -> Env {
        Env::new(EvrpInstance::from_parts(
            (0.0, 0.0),
            &[(0.0, 30.0)],
            &[(10.0, 0.0, 0.5), (20.0, 0.0, 1.0)],
            mode,
        ))
        .unwrap()
    }

    #[test]
    fn round_trip_dm_is_twice_the_distance() {
        let env = two_customer(ObjectiveMode::Distance);
        let v = objective(&env, &[0, 2, 0, 3, 0]).unwrap();
        assert_eq!(v, 2.0 * 10.0 + 2.0 * 20.0);
        assert!(objective(&env, &[0, 2, 3]).is_err());
    }

    #[test]
    fn unit_square_tsp_objective() {
        let env = Env::new(
            TspInstance::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(objective(&env, &[0, 1, 2, 3, 0]).unwrap(), 4.0);
        assert!(validate_route(&env, &[0, 1, 2, 3, 0]).is_empty());
        let bad = validate_route(&env, &[0, 1, 1, 3, 0]);
        assert!(bad.iter().any(|v| v.constraint == Constraint::CustomerService));
    }

    #[test]
    fn feasible_route_has_no_violations() {
        let env = two_customer(ObjectiveMode::Energy);
        assert!(validate_route(&env, &[0, 2, 3, 1, 0]).is_empty());
    }

    #[test]
    fn double_visit_is_flagged() {
        let env = two_customer(ObjectiveMode::Energy);
        let v = validate_route(&env, &[0, 2, 3, 2, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::CustomerService
            && v.detail.contains("customer 2")));
    }

    #[test]
    fn negative_battery_is_flagged() {
        // Battery covers 25 km; the route drives 10 + 10 + 20 km before any
        // recharge.
        let mut inst = EvrpInstance::from_parts(
            (0.0, 0.0),
            &[(0.0, 30.0)],
            &[(10.0, 0.0, 0.5), (20.0, 0.0, 1.0)],
            ObjectiveMode::Energy,
        );
        let per_km = energy_consumed(&inst, 0, 2, 4000.0) / 10.0;
        inst.vehicle.battery_capacity = 25.0 * per_km;
        let env = Env::new(inst).unwrap();
        let v = validate_route(&env, &[0, 2, 3, 0]);
        let hit = v.iter().find(|v| v.constraint == Constraint::Battery).unwrap();
        assert_eq!(hit.index, 3);
    }

    #[test]
    fn structural_problems() {
        let env = two_customer(ObjectiveMode::Energy);
        let v = validate_route(&env, &[2, 3, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::Continuity));
        let v = validate_route(&env, &[0, 1, 1, 2, 3, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::StationSelfLoop));
        let v = validate_route(&env, &[0, 9, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::Continuity));
    }

    #[test]
    fn driver_time_and_cargo() {
        let mut inst = generate_evrp(3, 1, 5).unwrap();
        inst.t_max = 0.01;
        let env = Env::new(inst.clone()).unwrap();
        let v = validate_route(&env, &[0, 2, 3, 4, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::DriverTime));

        inst.t_max = 100.0;
        inst.vehicle.capacity = 1.0;
        for n in &mut inst.nodes[2..] {
            n.demand = 0.75;
        }
        let env = Env::new(inst).unwrap();
        let v = validate_route(&env, &[0, 2, 3, 4, 0]);
        assert!(v.iter().any(|v| v.constraint == Constraint::Cargo));
        assert!(validate_route(&env, &[0, 2, 0, 3, 0, 4, 0]).is_empty());
    }

    #[test]
    fn route_text_round_trip() {
        let route = vec![0, 3, 5, 0, 2, 1, 4, 0];
        let text = format_route(&route, 0);
        assert_eq!(text, "0 3 5 0\n0 2 1 4 0\n");
        assert_eq!(parse_route(&text).unwrap(), route);
        assert!(parse_route("0 x 0").is_err());
    }
}
