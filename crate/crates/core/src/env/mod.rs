//! Deterministic single-player routing MDP shared by TSP and EVRP.
//!
//! A TSP episode starts at city `0`, picks the remaining cities one by one and
//! closes the tour, for exactly `n` steps. An EVRP episode is a sequence of
//! depot-to-depot trips of one vehicle; its length varies with the number of
//! trips and station visits.
//!
//! EVRP legality keeps the vehicle from stranding: a move is allowed only if
//! afterwards there is still a way home within the battery and driver-time
//! limits, using a precomputed table of the fastest full-battery return time
//! from each recharge point.
//!
//! The masking rules in order:
//! - no self-moves;
//! - customers must be unserved, fit the remaining cargo, be reachable on the
//!   current battery and keep a feasible return path;
//! - stations must be reachable, and either keep a feasible return path (once
//!   the trip has served someone) or lead directly to a servable customer (on
//!   an empty trip);
//! - the depot ends a trip only after at least one customer was served on it.
//!
//! Every trip therefore serves at least one customer, and every move adds
//! driving time bounded by `t_max`, so episodes terminate.

mod energy;
mod validate;

use std::fmt;

pub use energy::{energy_consumed, max_edge_energy, mech_power, min_edge_energy, speed_ms};
pub use validate::{
    format_route, objective, parse_route, route_energy, trips, validate_route, Constraint,
    Violation,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{EvrpInstance, Instance, NodeKind, ObjectiveMode, TspInstance};

/// Absolute slack on battery (kWh) and time (h) comparisons.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Why an action is masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskClause {
    OutOfRange,
    SamePosition,
    AlreadyServed,
    Demand,
    Battery,
    Time,
    NoSafeReturn,
    NoOnwardCustomer,
    DepotWithoutService,
    Terminal,
}

impl fmt::Display for MaskClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MaskClause::OutOfRange => "node id out of range",
            MaskClause::SamePosition => "already at this node",
            MaskClause::AlreadyServed => "customer already served (or city visited)",
            MaskClause::Demand => "demand exceeds remaining cargo",
            MaskClause::Battery => "insufficient battery for the move",
            MaskClause::Time => "driver time limit exceeded",
            MaskClause::NoSafeReturn => "no feasible return to a recharge point afterwards",
            MaskClause::NoOnwardCustomer => "station leads to no servable customer",
            MaskClause::DepotWithoutService => "depot return before serving a customer",
            MaskClause::Terminal => "episode already finished",
        };
        f.write_str(s)
    }
}

/// One player's rollout state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub position: usize,
    /// Per node id; customers (EVRP) or cities (TSP) already served.
    pub served: Vec<bool>,
    /// Remaining battery, kWh. Unused for TSP.
    pub battery: f64,
    /// Driver time spent on the current trip, hours.
    pub clock: f64,
    /// Remaining cargo.
    pub load: f64,
    pub route: Vec<usize>,
    /// A customer was served since the last depot visit.
    pub served_in_trip: bool,
    /// Objective accumulated so far.
    pub cost: f64,
    /// Signed energy accumulated so far, kWh.
    pub energy: f64,
    pub done: bool,
}

impl PlayerState {
    pub fn steps(&self) -> usize {
        self.route.len() - 1
    }

    pub fn n_served(&self) -> usize {
        self.served.iter().filter(|&&s| s).count()
    }
}

#[derive(Debug, Clone)]
struct RechargeTable {
    /// Fastest time home from each recharge point starting on a full
    /// battery; infinite for customers and unreachable points.
    home_time: Vec<f64>,
    points: Vec<usize>,
}

/// An instance together with the tables the transition rules need.
#[derive(Debug, Clone)]
pub struct Env {
    instance: Instance,
    recharge: Option<RechargeTable>,
    n_targets: usize,
}

impl Env {
    pub fn new(instance: impl Into<Instance>) -> Result<Self> {
        let instance = instance.into();
        instance.validate()?;
        let (recharge, n_targets) = match &instance {
            Instance::Tsp(t) => (None, t.len()),
            Instance::Evrp(e) => (Some(recharge_table(e)), e.n_customers()),
        };
        Ok(Self {
            instance,
            recharge,
            n_targets,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn evrp(&self) -> Option<&EvrpInstance> {
        match &self.instance {
            Instance::Evrp(e) => Some(e),
            Instance::Tsp(_) => None,
        }
    }

    pub fn tsp(&self) -> Option<&TspInstance> {
        match &self.instance {
            Instance::Tsp(t) => Some(t),
            Instance::Evrp(_) => None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.instance.len()
    }

    /// Number of customers (EVRP) or cities (TSP).
    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    /// Distance used for the per-step objective and features.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.instance {
            Instance::Tsp(t) => t.dist(i, j),
            Instance::Evrp(e) => e.dist(i, j),
        }
    }

    /// Per-edge objective contribution at the given cargo level.
    #[inline]
    pub fn edge_cost(&self, i: usize, j: usize, load: f64) -> f64 {
        match &self.instance {
            Instance::Tsp(t) => t.dist(i, j),
            Instance::Evrp(e) => match e.objective_mode {
                ObjectiveMode::Distance => e.dist(i, j),
                ObjectiveMode::Energy => energy_consumed(e, i, j, load),
            },
        }
    }

    /// Fastest full-battery return time to the depot from `node`.
    pub fn home_time(&self, node: usize) -> f64 {
        self.recharge
            .as_ref()
            .map_or(0.0, |r| r.home_time[node])
    }

    pub fn initial_state(&self) -> PlayerState {
        let n = self.n_nodes();
        let mut served = vec![false; n];
        match &self.instance {
            Instance::Tsp(_) => {
                served[0] = true;
                PlayerState {
                    position: 0,
                    served,
                    battery: 0.0,
                    clock: 0.0,
                    load: 0.0,
                    route: vec![0],
                    served_in_trip: false,
                    cost: 0.0,
                    energy: 0.0,
                    done: false,
                }
            }
            Instance::Evrp(e) => PlayerState {
                position: e.depot(),
                served,
                battery: e.vehicle.battery_capacity,
                clock: 0.0,
                load: e.vehicle.capacity,
                route: vec![e.depot()],
                served_in_trip: false,
                cost: 0.0,
                energy: 0.0,
                done: false,
            },
        }
    }

    fn all_served(&self, state: &PlayerState) -> bool {
        match &self.instance {
            Instance::Tsp(_) => state.served.iter().all(|&s| s),
            Instance::Evrp(e) => e.customers().all(|c| state.served[c]),
        }
    }

    /// Whether `action` is legal in `state`, or the first clause masking it.
    pub fn check_move(&self, state: &PlayerState, action: usize) -> std::result::Result<(), MaskClause> {
        if state.done {
            return Err(MaskClause::Terminal);
        }
        if action >= self.n_nodes() {
            return Err(MaskClause::OutOfRange);
        }
        if action == state.position {
            return Err(MaskClause::SamePosition);
        }
        match &self.instance {
            Instance::Tsp(_) => {
                if self.all_served(state) {
                    if action == 0 {
                        Ok(())
                    } else {
                        Err(MaskClause::AlreadyServed)
                    }
                } else if state.served[action] {
                    Err(MaskClause::AlreadyServed)
                } else {
                    Ok(())
                }
            }
            Instance::Evrp(e) => self.check_evrp(e, state, action),
        }
    }

    fn check_evrp(&self, e: &EvrpInstance, s: &PlayerState, j: usize) -> std::result::Result<(), MaskClause> {
        let i = s.position;
        match e.kind(j) {
            NodeKind::Customer => self.check_customer(e, i, j, s.battery, s.clock, s.load, &s.served),
            NodeKind::Station => {
                let need = energy_consumed(e, i, j, s.load);
                if need > s.battery + FEASIBILITY_TOL {
                    return Err(MaskClause::Battery);
                }
                let clock = s.clock + e.time(i, j) + e.recharge_dwell;
                if clock > e.t_max + FEASIBILITY_TOL {
                    return Err(MaskClause::Time);
                }
                if s.served_in_trip {
                    if clock + self.home_time(j) > e.t_max + FEASIBILITY_TOL {
                        return Err(MaskClause::NoSafeReturn);
                    }
                    Ok(())
                } else {
                    let q = e.vehicle.battery_capacity;
                    let onward = e
                        .customers()
                        .any(|c| self.check_customer(e, j, c, q, clock, s.load, &s.served).is_ok());
                    if onward {
                        Ok(())
                    } else {
                        Err(MaskClause::NoOnwardCustomer)
                    }
                }
            }
            NodeKind::Depot => {
                if !s.served_in_trip && !self.all_served(s) {
                    return Err(MaskClause::DepotWithoutService);
                }
                if energy_consumed(e, i, j, s.load) > s.battery + FEASIBILITY_TOL {
                    return Err(MaskClause::Battery);
                }
                if s.clock + e.time(i, j) > e.t_max + FEASIBILITY_TOL {
                    return Err(MaskClause::Time);
                }
                Ok(())
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn check_customer(
        &self,
        e: &EvrpInstance,
        from: usize,
        c: usize,
        battery: f64,
        clock: f64,
        load: f64,
        served: &[bool],
    ) -> std::result::Result<(), MaskClause> {
        if from == c {
            return Err(MaskClause::SamePosition);
        }
        if served[c] {
            return Err(MaskClause::AlreadyServed);
        }
        let demand = e.nodes[c].demand;
        if demand > load + FEASIBILITY_TOL {
            return Err(MaskClause::Demand);
        }
        let need = energy_consumed(e, from, c, load);
        if need > battery + FEASIBILITY_TOL {
            return Err(MaskClause::Battery);
        }
        let battery = (battery - need).min(e.vehicle.battery_capacity);
        let clock = clock + e.time(from, c) + e.service_time;
        if clock > e.t_max + FEASIBILITY_TOL {
            return Err(MaskClause::Time);
        }
        if self.can_return(e, c, battery, clock, load - demand) {
            Ok(())
        } else {
            Err(MaskClause::NoSafeReturn)
        }
    }

    /// Some recharge point is reachable from `j` with a full-battery path home
    /// after it.
    fn can_return(&self, e: &EvrpInstance, j: usize, battery: f64, clock: f64, load: f64) -> bool {
        let table = self.recharge.as_ref().expect("EVRP env has a recharge table");
        table.points.iter().any(|&r| {
            if r == j {
                return false;
            }
            let dwell = if e.kind(r) == NodeKind::Station {
                e.recharge_dwell
            } else {
                0.0
            };
            energy_consumed(e, j, r, load) <= battery + FEASIBILITY_TOL
                && clock + e.time(j, r) + dwell + table.home_time[r] <= e.t_max + FEASIBILITY_TOL
        })
    }

    /// Boolean mask over node ids.
    pub fn legal_actions(&self, state: &PlayerState) -> Result<Vec<bool>> {
        if state.done {
            return Err(Error::Contract("legal_actions called on a terminal state".into()));
        }
        Ok((0..self.n_nodes())
            .map(|j| self.check_move(state, j).is_ok())
            .collect())
    }

    /// Legal node ids in ascending order; empty for terminal states.
    pub fn legal_list(&self, state: &PlayerState) -> Vec<usize> {
        if state.done {
            return Vec::new();
        }
        (0..self.n_nodes())
            .filter(|&j| self.check_move(state, j).is_ok())
            .collect()
    }

    pub fn step(&self, state: &PlayerState, action: usize) -> Result<PlayerState> {
        self.check_move(state, action)
            .map_err(|clause| Error::IllegalAction {
                action,
                position: state.position,
                clause,
            })?;
        let mut next = state.clone();
        let i = state.position;
        next.position = action;
        next.route.push(action);
        match &self.instance {
            Instance::Tsp(t) => {
                next.cost += t.dist(i, action);
                next.served[action] = true;
                next.done = action == 0;
            }
            Instance::Evrp(e) => {
                let q = e.vehicle.battery_capacity;
                let spent = energy_consumed(e, i, action, state.load);
                next.energy += spent;
                next.cost += match e.objective_mode {
                    ObjectiveMode::Distance => e.dist(i, action),
                    ObjectiveMode::Energy => spent,
                };
                // Regeneration cannot overfill the pack; the mask keeps the
                // lower end above zero up to FEASIBILITY_TOL.
                next.battery = (state.battery - spent).clamp(0.0, q);
                next.clock += e.time(i, action);
                match e.kind(action) {
                    NodeKind::Customer => {
                        next.clock += e.service_time;
                        next.load = (state.load - e.nodes[action].demand).max(0.0);
                        next.served[action] = true;
                        next.served_in_trip = true;
                    }
                    NodeKind::Station => {
                        next.clock += e.recharge_dwell;
                        next.battery = q;
                    }
                    NodeKind::Depot => {
                        next.battery = q;
                        next.load = e.vehicle.capacity;
                        next.clock = 0.0;
                        next.served_in_trip = false;
                        next.done = self.all_served(&next);
                    }
                }
            }
        }
        Ok(next)
    }

    /// Reward of a finished trajectory: the negated objective.
    pub fn reward(&self, state: &PlayerState) -> f64 {
        -state.cost
    }

    /// Generous bound on episode length used to detect runaway rollouts.
    pub fn step_cap(&self) -> usize {
        let n = self.n_nodes();
        match &self.instance {
            Instance::Tsp(_) => n,
            Instance::Evrp(_) => 4 * n * (n + 1) + 16,
        }
    }

    /// Plays `choose` from the initial state to termination.
    pub fn rollout(&self, mut choose: impl FnMut(&PlayerState, &[usize]) -> usize) -> Result<PlayerState> {
        let mut state = self.initial_state();
        let cap = self.step_cap();
        while !state.done {
            let legal = self.legal_list(&state);
            if legal.is_empty() {
                return Err(Error::Deadlock {
                    position: state.position,
                });
            }
            if state.steps() >= cap {
                return Err(Error::Contract(format!("episode exceeded {cap} steps")));
            }
            let a = choose(&state, &legal);
            state = self.step(&state, a)?;
        }
        Ok(state)
    }
}

fn recharge_table(e: &EvrpInstance) -> RechargeTable {
    let n = e.len();
    let q = e.vehicle.battery_capacity;
    let points: Vec<usize> = (0..n).filter(|&i| e.kind(i) != NodeKind::Customer).collect();
    let mut home = vec![f64::INFINITY; n];
    home[e.depot()] = 0.0;
    let mut settled = vec![false; n];
    // Dijkstra towards the depot over recharge points, full battery per hop.
    loop {
        let next = points
            .iter()
            .copied()
            .filter(|&p| !settled[p] && home[p].is_finite())
            .min_by(|&a, &b| home[a].total_cmp(&home[b]).then(a.cmp(&b)));
        let Some(v) = next else { break };
        settled[v] = true;
        for &u in &points {
            if settled[u] || u == v {
                continue;
            }
            // Hop u -> v, then home from v.
            if max_edge_energy(e, u, v) > q + FEASIBILITY_TOL {
                continue;
            }
            let dwell = if e.kind(v) == NodeKind::Station {
                e.recharge_dwell
            } else {
                0.0
            };
            let t = e.time(u, v) + dwell + home[v];
            if t < home[u] {
                home[u] = t;
            }
        }
    }
    RechargeTable {
        home_time: home,
        points,
    }
}

/// Outcome of a two-player game from player 1's seat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome(pub i8);

impl GameOutcome {
    pub fn z(self) -> f64 {
        f64::from(self.0)
    }
}

/// `+1` when player 1's reward is at least player 2's; ties go to player 1.
pub fn game_outcome(r1: f64, r2: f64) -> GameOutcome {
    if r1 >= r2 {
        GameOutcome(1)
    } else {
        GameOutcome(-1)
    }
}

/// Outcome of two finished trajectories.
pub fn outcome_of(env: &Env, first: &PlayerState, second: &PlayerState) -> Result<GameOutcome> {
    if !first.done || !second.done {
        return Err(Error::Contract("game outcome of a non-terminal trajectory".into()));
    }
    Ok(game_outcome(env.reward(first), env.reward(second)))
}
