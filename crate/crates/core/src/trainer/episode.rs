use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::env::{game_outcome, Env, PlayerState};
use crate::error::{Error, Result};
use crate::net::{PolicyNet, PolicySample, StateFeatures, ValueNet, ValueSample};
use crate::planner::{plan, Policy, Seat};

/// One finished two-player game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub instance_seed: Option<u64>,
    /// `+1` when the learner sits first, `-1` otherwise.
    pub learner: i8,
    pub stage: u8,
    /// The competitor used the learner's own parameters.
    pub mu_is_theta: bool,
    /// Routes of players `+1` and `-1`.
    pub routes: [Vec<usize>; 2],
    pub objectives: [f64; 2],
    /// Signed energy of each player's route, zero for TSP.
    pub energies: [f64; 2],
    /// Outcome from player `+1`'s seat.
    pub z: f64,
    pub learner_moves: usize,
    pub learner_sims: usize,
    pub competitor_moves: usize,
    pub competitor_sims: usize,
    pub policy_samples: Vec<PolicySample>,
    pub value_samples: Vec<ValueSample>,
}

impl EpisodeRecord {
    fn seat_index(p: i8) -> usize {
        if p > 0 {
            0
        } else {
            1
        }
    }

    pub fn learner_objective(&self) -> f64 {
        self.objectives[Self::seat_index(self.learner)]
    }

    pub fn competitor_objective(&self) -> f64 {
        self.objectives[Self::seat_index(-self.learner)]
    }

    pub fn learner_energy(&self) -> f64 {
        self.energies[Self::seat_index(self.learner)]
    }

    /// Outcome from the learner's seat.
    pub fn learner_z(&self) -> f64 {
        self.z * f64::from(self.learner)
    }
}

/// Plays one game on `env`.
///
/// The learner takes a uniformly random seat. The competitor's parameters
/// `mu` are the learner's own with probability `self_play_prob`, otherwise
/// the historical best. In stage 1 the competitor moves greedily by `mu`; in
/// stage 2 it plans with `mu` against the learner's policy. Both players
/// decide from the same step snapshot. A player who finishes first waits at
/// its terminal state.
pub fn run_episode<R: Rng + ?Sized>(
    env: &Env,
    theta: &PolicyNet,
    best: &PolicyNet,
    value: &ValueNet,
    cfg: &TrainConfig,
    stage: u8,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let learner: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
    let mu_is_theta = rng.random_bool(cfg.self_play_prob);
    let mu = if mu_is_theta { theta } else { best };
    let li = EpisodeRecord::seat_index(learner);
    let seat = |i: usize| if i == 0 { Seat::First } else { Seat::Second };

    let mut traj: [Vec<PlayerState>; 2] = [vec![env.initial_state()], vec![env.initial_state()]];
    let mut policy_samples = Vec::new();
    let mut moves = [0usize; 2];
    let mut sims = [0usize; 2];
    let cap = env.step_cap();

    loop {
        let cur = [traj[0].last().expect("nonempty").clone(), traj[1].last().expect("nonempty").clone()];
        if cur[0].done && cur[1].done {
            break;
        }
        let mut actions = [None, None];
        for i in 0..2 {
            if cur[i].done {
                continue;
            }
            if cur[i].steps() >= cap {
                return Err(Error::Contract(format!("episode exceeded {cap} steps")));
            }
            let own = &cur[i];
            let opp = &cur[1 - i];
            let is_learner = i == li;
            let a = if is_learner || stage >= 2 {
                let (policy, opponent) = if is_learner { (theta, mu) } else { (mu, theta) };
                let r = plan(env, own, opp, seat(i), policy, opponent, value, &cfg.planner, rng)?;
                sims[i] += r.simulations;
                policy_samples.push(PolicySample {
                    features: StateFeatures::new(env, own)?,
                    target: r.improved_policy,
                });
                r.action
            } else {
                Policy::<Env>::greedy(mu, env, own)?
            };
            moves[i] += 1;
            actions[i] = Some(a);
        }
        for i in 0..2 {
            if let Some(a) = actions[i] {
                let next = env.step(&cur[i], a)?;
                traj[i].push(next);
            }
        }
    }

    let [t1, t2] = &traj;
    let (end1, end2) = (t1.last().expect("nonempty"), t2.last().expect("nonempty"));
    let z = game_outcome(env.reward(end1), env.reward(end2)).z();
    let steps = (t1.len() - 1).min(t2.len() - 1);
    let mut value_samples = Vec::with_capacity(2 * steps);
    let feats = |s: &PlayerState| StateFeatures::new(env, s);
    for t in 0..steps {
        value_samples.push(ValueSample {
            own: feats(&t1[t])?,
            opp: feats(&t2[t])?,
            z,
        });
        let partner = if cfg.value_pair_offset {
            &t1[(t + 1).min(t1.len() - 1)]
        } else {
            &t1[t]
        };
        value_samples.push(ValueSample {
            own: feats(&t2[t])?,
            opp: feats(partner)?,
            z: -z,
        });
    }

    let learner_sims = sims[li];
    let competitor_sims = sims[1 - li];
    Ok(EpisodeRecord {
        instance_seed: env.instance().seed(),
        learner,
        stage,
        mu_is_theta,
        objectives: [end1.cost, end2.cost],
        energies: [end1.energy, end2.energy],
        routes: [end1.route.clone(), end2.route.clone()],
        z,
        learner_moves: moves[li],
        learner_sims,
        competitor_moves: moves[1 - li],
        competitor_sims,
        policy_samples,
        value_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::validate_route;
    use crate::instance::{generate_tsp, EvrpInstance, ObjectiveMode};
    use crate::net::NetConfig;
    use crate::planner::PlannerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(p: f64) -> TrainConfig {
        TrainConfig {
            self_play_prob: p,
            planner: PlannerConfig {
                n_simulations: 8,
                m_root: 4,
                ..PlannerConfig::default()
            },
            net: NetConfig {
                embed_dim: 16,
                n_heads: 2,
                n_layers: 1,
                ffn_dim: 16,
                ..NetConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn nets(c: &TrainConfig) -> (PolicyNet, PolicyNet, ValueNet) {
        let theta = PolicyNet::new(c.net.clone(), 1).unwrap();
        let best = PolicyNet::new(c.net.clone(), 2).unwrap();
        let value = ValueNet::new(c.net.clone(), 3).unwrap();
        (theta, best, value)
    }

    #[test]
    fn stage_one_competitor_spends_no_simulations() {
        let c = cfg(0.5);
        let (theta, best, value) = nets(&c);
        let env = Env::new(generate_tsp(6, 0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..4 {
            let r = run_episode(&env, &theta, &best, &value, &c, 1, &mut rng).unwrap();
            assert_eq!(r.competitor_sims, 0);
            assert_eq!(r.competitor_moves, 6);
            assert!(r.learner_sims > 0);
            assert_eq!(r.policy_samples.len(), r.learner_moves);
            for route in &r.routes {
                assert!(validate_route(&env, route).is_empty());
            }
        }
    }

    #[test]
    fn stage_two_both_players_plan() {
        let c = cfg(0.5);
        let (theta, best, value) = nets(&c);
        let env = Env::new(generate_tsp(5, 1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_episode(&env, &theta, &best, &value, &c, 2, &mut rng).unwrap();
        assert!(r.competitor_sims > 0);
        assert_eq!(r.policy_samples.len(), r.learner_moves + r.competitor_moves);
        for s in &r.policy_samples {
            s.check().unwrap();
        }
    }

    #[test]
    fn zero_self_play_always_uses_best() {
        let c = cfg(0.0);
        let (theta, best, value) = nets(&c);
        let env = Env::new(generate_tsp(4, 2).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            assert!(!run_episode(&env, &theta, &best, &value, &c, 1, &mut rng).unwrap().mu_is_theta);
        }
    }

    #[test]
    fn single_customer_is_a_first_seat_win() {
        let c = cfg(0.5);
        let (theta, best, value) = nets(&c);
        // a 2 h shift leaves no time for a station detour
        let mut inst = EvrpInstance::from_parts((50.0, 50.0), &[(0.0, 0.0)], &[(60.0, 60.0, 0.5)], ObjectiveMode::Distance);
        inst.t_max = 2.0;
        let env = Env::new(inst).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = run_episode(&env, &theta, &best, &value, &c, 2, &mut rng).unwrap();
        assert_eq!(r.routes[0], vec![0, 2, 0]);
        assert_eq!(r.routes[1], vec![0, 2, 0]);
        assert_eq!(r.z, 1.0);
    }

    #[test]
    fn value_tuples_carry_opposite_labels() {
        let c = cfg(0.5);
        let (theta, best, value) = nets(&c);
        let env = Env::new(generate_tsp(5, 4).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = run_episode(&env, &theta, &best, &value, &c, 1, &mut rng).unwrap();
        assert_eq!(r.value_samples.len(), 2 * 5);
        for pair in r.value_samples.chunks(2) {
            assert_eq!(pair[0].z, r.z);
            assert_eq!(pair[1].z, -r.z);
            assert!(r.z == 1.0 || r.z == -1.0);
        }
        // offset family pairs player -1 at t with player +1 at t + 1
        let first = &r.value_samples[1];
        assert_eq!(first.opp.nodes.at(r.routes[0][1], 7), 1.0);
    }
}
