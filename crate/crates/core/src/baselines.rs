//! Exact oracles and reference heuristics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{min_edge_energy, objective, Env, PlayerState};
use crate::error::{Error, Result};
use crate::instance::{EvrpInstance, Instance, NodeKind, ObjectiveMode, TspInstance};
use crate::net::ValueNet;
use crate::planner::{plan, PlannerConfig, Policy, Seat};

pub const EXACT_TSP_LIMIT: usize = 16;
pub const EXACT_EVRP_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Closed node sequence; EVRP trips are separated by depot visits.
    pub route: Vec<usize>,
    pub objective: f64,
    pub optimal: bool,
    pub expansions: u64,
    /// Seconds.
    pub wall_time: f64,
}

/// Held-Karp over subsets of cities `1..n`, tour starting at city 0.
pub fn exact_tsp(inst: &TspInstance) -> Result<SolveResult> {
    let start = Instant::now();
    let n = inst.len();
    if n > EXACT_TSP_LIMIT {
        return Err(Error::SizeLimit {
            solver: "exact_tsp",
            size: n,
            limit: EXACT_TSP_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::InvalidInstance("need at least two cities".into()));
    }
    let m = n - 1;
    let full = (1usize << m) - 1;
    // dp[mask][j]: shortest path from 0 through `mask` ending at city j + 1.
    let mut dp = vec![f64::INFINITY; (full + 1) * m];
    let mut parent = vec![usize::MAX; (full + 1) * m];
    for j in 0..m {
        dp[(1 << j) * m + j] = inst.dist(0, j + 1);
    }
    let mut expansions = 0u64;
    for mask in 1..=full {
        for j in 0..m {
            let cur = dp[mask * m + j];
            if mask & (1 << j) == 0 || !cur.is_finite() {
                continue;
            }
            expansions += 1;
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let next = mask | (1 << k);
                let cand = cur + inst.dist(j + 1, k + 1);
                if cand < dp[next * m + k] {
                    dp[next * m + k] = cand;
                    parent[next * m + k] = j;
                }
            }
        }
    }
    let mut best = (f64::INFINITY, 0);
    for j in 0..m {
        let total = dp[full * m + j] + inst.dist(j + 1, 0);
        if total < best.0 {
            best = (total, j);
        }
    }
    let mut order = Vec::with_capacity(n + 1);
    let (mut mask, mut j) = (full, best.1);
    loop {
        order.push(j + 1);
        let p = parent[mask * m + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.push(0);
    order.reverse();
    order.push(0);
    Ok(SolveResult {
        objective: inst.tour_length(&order[..n]),
        route: order,
        optimal: true,
        expansions,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy)]
struct Label {
    cost: f64,
    battery: f64,
    clock: f64,
    load: f64,
}

impl Label {
    fn of(s: &PlayerState) -> Self {
        Self {
            cost: s.cost,
            battery: s.battery,
            clock: s.clock,
            load: s.load,
        }
    }

    /// Same cargo, no more cost and time, no less battery. Cargo must match
    /// exactly because it changes both energy use and which moves are legal.
    fn dominates(&self, o: &Label) -> bool {
        self.load == o.load && self.cost <= o.cost && self.battery >= o.battery && self.clock <= o.clock
    }
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    seq: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then on insertion order
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Symmetric, load-independent lower bound on the cost of moving between
/// any two nodes, closed under shortest paths.
fn lower_metric(env: &Env, e: &EvrpInstance) -> Vec<Vec<f64>> {
    let n = e.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[i][j] = match e.objective_mode {
                    ObjectiveMode::Distance => env.dist(i, j),
                    ObjectiveMode::Energy => min_edge_energy(e, i, j).min(min_edge_energy(e, j, i)),
                };
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Prim's MST weight over `nodes` in metric `d`.
fn mst_weight(d: &[Vec<f64>], nodes: &[usize]) -> f64 {
    if nodes.len() < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; nodes.len()];
    let mut best = vec![f64::INFINITY; nodes.len()];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..nodes.len() {
        let (k, _) = best
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_tree[*i])
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("node left");
        in_tree[k] = true;
        total += best[k];
        for i in 0..nodes.len() {
            if !in_tree[i] {
                best[i] = best[i].min(d[nodes[k]][nodes[i]]);
            }
        }
    }
    total
}

fn served_mask(e: &EvrpInstance, s: &PlayerState) -> u32 {
    let first = e.n_stations() + 1;
    e.customers()
        .filter(|&c| s.served[c])
        .fold(0, |m, c| m | (1 << (c - first)))
}

/// Optimal single-vehicle route under the environment's transition rules.
///
/// Best-first branch and bound. States reaching the same node with the same
/// customers served are pruned by label dominance. When every edge cost is
/// nonnegative, the remaining cost is bounded below by the minimum spanning
/// tree over the current node, the unserved customers and the depot; edges
/// with regenerated energy disable the bound and the search runs to
/// exhaustion.
pub fn exact_evrp(env: &Env) -> Result<SolveResult> {
    let start = Instant::now();
    let e = env
        .evrp()
        .ok_or_else(|| Error::InvalidArgument("exact_evrp needs an EVRP instance".into()))?;
    let nc = e.n_customers();
    if nc > EXACT_EVRP_LIMIT {
        return Err(Error::SizeLimit {
            solver: "exact_evrp",
            size: nc,
            limit: EXACT_EVRP_LIMIT,
        });
    }
    let n = e.len();
    let nonnegative = (0..n).all(|i| (0..n).all(|j| i == j || env.edge_cost(i, j, 0.0) >= 0.0 && env.edge_cost(i, j, e.vehicle.capacity) >= 0.0));
    let metric = nonnegative.then(|| lower_metric(env, e));
    let bound = |s: &PlayerState| -> f64 {
        let Some(d) = metric.as_ref() else { return 0.0 };
        let mut nodes = vec![s.position];
        if s.position != e.depot() {
            nodes.push(e.depot());
        }
        nodes.extend(e.customers().filter(|&c| !s.served[c]));
        mst_weight(d, &nodes)
    };

    let mut states: Vec<PlayerState> = Vec::new();
    let mut alive: Vec<bool> = Vec::new();
    let mut labels: HashMap<(usize, u32, bool), Vec<(Label, usize)>> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let root = env.initial_state();
    heap.push(Entry {
        f: bound(&root),
        seq: 0,
    });
    states.push(root);
    alive.push(true);

    let mut best: Option<PlayerState> = None;
    let mut expansions = 0u64;
    while let Some(Entry { f, seq }) = heap.pop() {
        if !alive[seq] {
            continue;
        }
        if let Some(b) = &best {
            if metric.is_some() && f >= b.cost {
                break;
            }
        }
        let s = states[seq].clone();
        if s.done {
            if best.as_ref().is_none_or(|b| s.cost < b.cost) {
                best = Some(s);
            }
            if metric.is_some() {
                break;
            }
            continue;
        }
        expansions += 1;
        let mut moves = env.legal_list(&s);
        moves.sort_by(|&a, &b| env.dist(s.position, a).total_cmp(&env.dist(s.position, b)).then(a.cmp(&b)));
        for a in moves {
            let next = env.step(&s, a)?;
            let key = (next.position, served_mask(e, &next), next.served_in_trip);
            let label = Label::of(&next);
            let bucket = labels.entry(key).or_default();
            if bucket.iter().any(|(l, _)| l.dominates(&label)) {
                continue;
            }
            bucket.retain(|(l, id)| {
                if label.dominates(l) {
                    alive[*id] = false;
                    false
                } else {
                    true
                }
            });
            let id = states.len();
            bucket.push((label, id));
            heap.push(Entry {
                f: next.cost + bound(&next),
                seq: id,
            });
            states.push(next);
            alive.push(true);
        }
    }
    let best = best.ok_or_else(|| Error::Infeasible("no route serves every customer".into()))?;
    Ok(SolveResult {
        objective: objective(env, &best.route)?,
        route: best.route,
        optimal: true,
        expansions,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Nearest legal customer; otherwise the depot; otherwise the legal
/// recharge point with the fastest way home.
pub fn nearest_neighbor(env: &Env) -> Result<SolveResult> {
    let start = Instant::now();
    let mut expansions = 0u64;
    let end = env.rollout(|s, legal| {
        expansions += 1;
        let nearest = |cands: &mut dyn Iterator<Item = usize>| {
            cands.min_by(|&a, &b| env.dist(s.position, a).total_cmp(&env.dist(s.position, b)).then(a.cmp(&b)))
        };
        match env.instance() {
            Instance::Tsp(_) => nearest(&mut legal.iter().copied()).expect("nonempty legal set"),
            Instance::Evrp(e) => {
                if let Some(c) = nearest(&mut legal.iter().copied().filter(|&j| e.kind(j) == NodeKind::Customer)) {
                    return c;
                }
                if legal.contains(&e.depot()) {
                    return e.depot();
                }
                legal
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        let ta = e.time(s.position, a) + env.home_time(a);
                        let tb = e.time(s.position, b) + env.home_time(b);
                        ta.total_cmp(&tb).then(a.cmp(&b))
                    })
                    .expect("nonempty legal set")
            }
        }
    })?;
    Ok(SolveResult {
        objective: objective(env, &end.route)?,
        route: end.route,
        optimal: false,
        expansions,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Argmax-policy rollout without search.
pub fn greedy_rollout<P: Policy<Env>>(env: &Env, policy: &P) -> Result<SolveResult> {
    let start = Instant::now();
    let mut err = None;
    let mut expansions = 0u64;
    let end = env.rollout(|s, legal| {
        expansions += 1;
        match policy.greedy(env, s) {
            Ok(a) => a,
            Err(e) => {
                err.get_or_insert(e);
                legal[0]
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(SolveResult {
        objective: objective(env, &end.route)?,
        route: end.route,
        optimal: false,
        expansions,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Search at every step against a shadow opponent that follows `policy`
/// greedily on its own copy of the instance. `seat` decides whether a tie
/// with the shadow counts as a win.
pub fn mcts_rollout<P, R>(env: &Env, policy: &P, value_fn: &ValueNet, cfg: &PlannerConfig, seat: Seat, rng: &mut R) -> Result<SolveResult>
where
    P: Policy<Env>,
    R: Rng + ?Sized,
{
    let start = Instant::now();
    let mut own = env.initial_state();
    let mut opp = env.initial_state();
    let cap = env.step_cap();
    let mut expansions = 0u64;
    while !own.done {
        if own.steps() >= cap {
            return Err(Error::Contract(format!("episode exceeded {cap} steps")));
        }
        let r = plan(env, &own, &opp, seat, policy, policy, value_fn, cfg, rng)?;
        expansions += r.evaluations as u64;
        if !opp.done {
            let b = policy.greedy(env, &opp)?;
            opp = env.step(&opp, b)?;
        }
        own = env.step(&own, r.action)?;
    }
    Ok(SolveResult {
        objective: objective(env, &own.route)?,
        route: own.route,
        optimal: false,
        expansions,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `100 * (obj - best) / best`.
pub fn gap(obj: f64, best: f64) -> Result<f64> {
    if best == 0.0 || !best.is_finite() || !obj.is_finite() {
        return Err(Error::InvalidArgument(format!("gap of {obj} against {best} is undefined")));
    }
    Ok(100.0 * (obj - best) / best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{energy_consumed, validate_route};
    use crate::instance::{generate_evrp, generate_tsp};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_is_four() {
        let t = TspInstance::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        let r = exact_tsp(&t).unwrap();
        assert_eq!(r.objective, 4.0);
        assert_eq!(r.route.first(), Some(&0));
        assert_eq!(r.route.last(), Some(&0));
    }

    #[test]
    fn triangle_is_its_perimeter() {
        let t = generate_tsp(3, 9).unwrap();
        let p = t.dist(0, 1) + t.dist(1, 2) + t.dist(2, 0);
        assert!((exact_tsp(&t).unwrap().objective - p).abs() < 1e-12);
    }

    #[test]
    fn held_karp_beats_random_tours() {
        let t = generate_tsp(10, 4).unwrap();
        let best = exact_tsp(&t).unwrap().objective;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut order: Vec<usize> = (0..10).collect();
        for _ in 0..10_000 {
            order[1..].shuffle(&mut rng);
            assert!(best <= t.tour_length(&order) + 1e-9);
        }
    }

    #[test]
    fn size_limits() {
        let t = generate_tsp(17, 1).unwrap();
        assert!(matches!(exact_tsp(&t), Err(Error::SizeLimit { .. })));
        let env = Env::new(generate_evrp(9, 2, 1).unwrap()).unwrap();
        assert!(matches!(exact_evrp(&env), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn single_customer_goes_straight_there() {
        let inst = EvrpInstance::from_parts(
            (0.0, 0.0),
            &[(50.0, 50.0)],
            &[(10.0, 0.0, 0.5)],
            ObjectiveMode::Energy,
        );
        let env = Env::new(inst).unwrap();
        let r = exact_evrp(&env).unwrap();
        assert_eq!(r.route, vec![0, 2, 0]);
        assert_eq!(r.objective, objective(&env, &[0, 2, 0]).unwrap());
    }

    #[test]
    fn out_of_range_customer_goes_through_station() {
        // 30 km each way to the customer, a station on the way, and a pack
        // that covers only 40 km.
        let mut inst = EvrpInstance::from_parts(
            (0.0, 0.0),
            &[(15.0, 0.0)],
            &[(30.0, 0.0, 0.5)],
            ObjectiveMode::Distance,
        );
        let per_km = energy_consumed(&inst, 0, 1, inst.vehicle.capacity) / 15.0;
        inst.vehicle.battery_capacity = 40.0 * per_km;
        let env = Env::new(inst).unwrap();
        let r = exact_evrp(&env).unwrap();
        assert!(r.route.contains(&1), "{:?}", r.route);
        assert!(validate_route(&env, &r.route).is_empty());
        assert!((r.objective - 60.0).abs() < 1e-9);
    }

    #[test]
    fn exact_dominates_nearest_neighbor() {
        for seed in 0..12 {
            for mode in [ObjectiveMode::Distance, ObjectiveMode::Energy] {
                let mut inst = generate_evrp(6, 2, seed).unwrap();
                inst.objective_mode = mode;
                let env = Env::new(inst).unwrap();
                let ex = exact_evrp(&env).unwrap();
                let nn = nearest_neighbor(&env).unwrap();
                assert!(validate_route(&env, &ex.route).is_empty());
                assert!(validate_route(&env, &nn.route).is_empty());
                assert!(ex.objective <= nn.objective + 1e-9, "{seed} {mode}");
            }
        }
    }

    #[test]
    fn nearest_neighbor_on_a_line() {
        let inst = EvrpInstance::from_parts(
            (0.0, 0.0),
            &[(0.0, 90.0)],
            &[(30.0, 0.0, 0.25), (10.0, 0.0, 0.25), (20.0, 0.0, 0.25)],
            ObjectiveMode::Distance,
        );
        let env = Env::new(inst).unwrap();
        let r = nearest_neighbor(&env).unwrap();
        assert_eq!(r.route, vec![0, 3, 4, 2, 0]);
    }

    #[test]
    fn gap_values() {
        assert_eq!(gap(5.70, 5.70).unwrap(), 0.0);
        assert!((gap(5.76, 5.70).unwrap() - 1.0526315789473).abs() < 1e-9);
        assert!(gap(1.0, 0.0).is_err());
    }
}
