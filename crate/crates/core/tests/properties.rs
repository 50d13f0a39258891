use duelroute::baselines::{exact_tsp, gap, nearest_neighbor};
use duelroute::env::{format_route, objective, parse_route, validate_route, Env, FEASIBILITY_TOL};
use duelroute::instance::{generate_evrp, generate_tsp, Instance, NodeKind, ObjectiveMode, DEMAND_LEVELS};
use duelroute::net::softmax;
use duelroute::planner::{schedule_total, sequential_halving_schedule};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn evrp_env(customers: usize, stations: usize, seed: u64, energy: bool) -> Env {
    let mut inst = generate_evrp(customers, stations, seed).unwrap();
    inst.objective_mode = if energy { ObjectiveMode::Energy } else { ObjectiveMode::Distance };
    Env::new(inst).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_legal_rollouts_are_validator_clean(
        customers in 1usize..=10,
        stations in 1usize..=4,
        seed in any::<u64>(),
        energy in any::<bool>(),
        walk in any::<u64>(),
    ) {
        let env = evrp_env(customers, stations, seed, energy);
        let mut rng = ChaCha8Rng::seed_from_u64(walk);
        let end = env.rollout(|_, legal| *legal.choose(&mut rng).unwrap()).unwrap();
        prop_assert!(end.done);
        let violations = validate_route(&env, &end.route);
        prop_assert!(violations.is_empty(), "{:?}", violations);
        let recomputed = objective(&env, &end.route).unwrap();
        prop_assert!((recomputed - end.cost).abs() <= 1e-9 * (1.0 + end.cost.abs()));
    }

    #[test]
    fn every_legal_step_keeps_the_state_in_bounds(
        customers in 1usize..=8,
        seed in any::<u64>(),
        walk in any::<u64>(),
    ) {
        let env = evrp_env(customers, 3, seed, true);
        let e = env.evrp().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(walk);
        let mut s = env.initial_state();
        while !s.done {
            let legal = env.legal_list(&s);
            prop_assert!(!legal.is_empty());
            for a in 0..env.n_nodes() {
                prop_assert_eq!(env.check_move(&s, a).is_ok(), legal.contains(&a));
            }
            s = env.step(&s, *legal.choose(&mut rng).unwrap()).unwrap();
            prop_assert!(s.battery >= -FEASIBILITY_TOL && s.battery <= e.vehicle.battery_capacity + FEASIBILITY_TOL);
            prop_assert!(s.clock <= e.t_max + FEASIBILITY_TOL);
            prop_assert!(s.load >= 0.0 && s.load <= e.vehicle.capacity);
        }
    }

    #[test]
    fn instance_text_round_trips(customers in 1usize..=12, stations in 1usize..=5, seed in any::<u64>(), tsp in any::<bool>()) {
        let inst: Instance = if tsp {
            generate_tsp(customers + 2, seed).unwrap().into()
        } else {
            generate_evrp(customers, stations, seed).unwrap().into()
        };
        let text = inst.to_text();
        let back = Instance::from_text(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn route_text_round_trips(customers in 1usize..=10, seed in any::<u64>()) {
        let env = evrp_env(customers, 2, seed, false);
        let route = nearest_neighbor(&env).unwrap().route;
        prop_assert_eq!(parse_route(&format_route(&route, 0)).unwrap(), route);
    }

    #[test]
    fn halving_never_overspends(m in 1usize..=32, budget in 1usize..=400) {
        let sched = sequential_halving_schedule(m, budget);
        prop_assert!(!sched.is_empty());
        prop_assert!(schedule_total(&sched) <= budget);
        for w in sched.windows(2) {
            prop_assert!(w[1].0 <= w[0].0);
        }
    }

    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let p = softmax(&xs);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tsp_optimum_beats_nearest_neighbour(n in 3usize..=9, seed in any::<u64>()) {
        let inst = generate_tsp(n, seed).unwrap();
        let opt = exact_tsp(&inst).unwrap().objective;
        let nn = nearest_neighbor(&Env::new(inst).unwrap()).unwrap().objective;
        prop_assert!(opt <= nn + 1e-12);
        prop_assert!(gap(nn, opt).unwrap() >= -1e-9);
    }
}

#[test]
fn generation_marginals_match_their_ranges() {
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    let mut hist = [0usize; 4];
    for seed in 0..1000 {
        let e = generate_evrp(10, 4, seed).unwrap();
        let depot = &e.nodes[e.depot()];
        assert!((25.0..=75.0).contains(&depot.x) && (25.0..=75.0).contains(&depot.y));
        for n in &e.nodes {
            match n.kind {
                NodeKind::Customer => {
                    sx += n.x;
                    sy += n.y;
                    count += 1;
                    let k = DEMAND_LEVELS.iter().position(|&d| d == n.demand).expect("demand level");
                    hist[k] += 1;
                }
                NodeKind::Station => assert!((0.0..=100.0).contains(&n.x) && (0.0..=100.0).contains(&n.y)),
                NodeKind::Depot => {}
            }
        }
    }
    assert_eq!(count, 10_000);
    let (mx, my) = (sx / count as f64, sy / count as f64);
    assert!((48.0..=52.0).contains(&mx) && (48.0..=52.0).contains(&my), "{mx} {my}");
    for h in hist {
        let f = h as f64 / count as f64;
        assert!((f - 0.25).abs() <= 0.03, "{hist:?}");
    }
    for seed in 0..100 {
        let t = generate_tsp(20, seed).unwrap();
        assert!(t.coords.iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    }
}
