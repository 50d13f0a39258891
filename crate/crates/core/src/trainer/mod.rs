//! Two-stage self-play training.
//!
//! Each episode pits the learner against a competitor on a fresh instance.
//! Until `stage_switch` the competitor answers greedily; afterwards both
//! players search. The historical best policy is replaced only when the
//! learner beats it on a fixed arena set.

mod episode;
mod run;

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use episode::{run_episode, EpisodeRecord};
pub use run::{
    fingerprint, load_checkpoint, save_checkpoint, Trainer, TrainerState, TrainSummary, ARENA_FILE, CHECKPOINT_FILE,
    CHECKPOINT_VERSION, CONFIG_FILE, METRICS_FILE, NETS_FILE, SEARCH_FILE,
};

use crate::baselines::greedy_rollout;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::instance::{generate_evrp, generate_tsp, ObjectiveMode};
use crate::net::{NetConfig, PolicyNet};
use crate::planner::PlannerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Tsp,
    Evrp,
}

/// Distribution of training instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Cities (TSP) or customers (EVRP).
    pub size: usize,
    pub stations: usize,
    pub mode: ObjectiveMode,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Evrp,
            size: 10,
            stations: 4,
            mode: ObjectiveMode::Energy,
        }
    }
}

impl ProblemConfig {
    pub fn tsp(size: usize) -> Self {
        Self {
            kind: ProblemKind::Tsp,
            size,
            stations: 0,
            mode: ObjectiveMode::Distance,
        }
    }

    /// Environment for the instance generated from `seed`.
    pub fn make_env(&self, seed: u64) -> Result<Env> {
        match self.kind {
            ProblemKind::Tsp => Env::new(generate_tsp(self.size, seed)?),
            ProblemKind::Evrp => {
                let mut inst = generate_evrp(self.size, self.stations, seed)?;
                inst.objective_mode = self.mode;
                Env::new(inst)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_episodes: usize,
    /// First stage-2 episode.
    pub stage_switch: usize,
    /// Probability that the competitor uses the learner's parameters.
    pub self_play_prob: f64,
    pub arena_set_size: usize,
    pub arena_interval: usize,
    pub policy_buffer_capacity: usize,
    pub value_buffer_capacity: usize,
    pub train_steps_per_episode: usize,
    pub checkpoint_interval: usize,
    pub seed: u64,
    /// Pair player -1 at step t with player +1 at step t + 1 in the second
    /// value-tuple family; otherwise both at step t.
    pub value_pair_offset: bool,
    /// Write elapsed seconds into the metrics; zeros keep logs byte-stable.
    pub record_wall_time: bool,
    /// Stop (with a checkpoint) after this many episodes in total.
    pub stop_after: Option<usize>,
    pub problem: ProblemConfig,
    pub planner: PlannerConfig,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_episodes: 50_000,
            stage_switch: 20_000,
            self_play_prob: 0.5,
            arena_set_size: 32,
            arena_interval: 50,
            policy_buffer_capacity: 200_000,
            value_buffer_capacity: 200_000,
            train_steps_per_episode: 1,
            checkpoint_interval: 100,
            seed: 0,
            value_pair_offset: true,
            record_wall_time: true,
            stop_after: None,
            problem: ProblemConfig::default(),
            planner: PlannerConfig::default(),
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(0.0..1.0).contains(&self.self_play_prob) {
            return bad("self_play_prob must be in [0, 1)");
        }
        if self.stage_switch > self.total_episodes {
            return bad("stage_switch must not exceed total_episodes");
        }
        if self.arena_interval == 0 || self.arena_set_size == 0 {
            return bad("arena_interval and arena_set_size must be positive");
        }
        if self.policy_buffer_capacity == 0 || self.value_buffer_capacity == 0 {
            return bad("buffer capacities must be positive");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be positive");
        }
        if self.problem.size == 0 {
            return bad("problem size must be positive");
        }
        self.planner.validate()?;
        self.net.validate()?;
        // fail early on an impossible instance family
        self.problem.make_env(0).map(|_| ())
    }

    /// Whether `other` describes the same run, ignoring when it stops.
    pub fn same_run(&self, other: &TrainConfig) -> bool {
        let strip = |c: &TrainConfig| TrainConfig {
            stop_after: None,
            total_episodes: 0,
            checkpoint_interval: 0,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }
}

/// Stage of `episode`: 1 before `stage_switch`, 2 from then on.
pub fn stage_gate(episode: usize, cfg: &TrainConfig) -> u8 {
    if episode < cfg.stage_switch {
        1
    } else {
        2
    }
}

/// FIFO buffers of policy and value training samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffers {
    pub policy: VecDeque<crate::net::PolicySample>,
    pub value: VecDeque<crate::net::ValueSample>,
}

impl ReplayBuffers {
    pub fn push(&mut self, record: EpisodeRecord, cfg: &TrainConfig) {
        for s in record.policy_samples {
            if self.policy.len() == cfg.policy_buffer_capacity {
                self.policy.pop_front();
            }
            self.policy.push_back(s);
        }
        for s in record.value_samples {
            if self.value.len() == cfg.value_buffer_capacity {
                self.value.pop_front();
            }
            self.value.push_back(s);
        }
    }

    /// Uniform draws with replacement; empty when a buffer is empty.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> (Vec<&crate::net::PolicySample>, Vec<&crate::net::ValueSample>) {
        if self.policy.is_empty() || self.value.is_empty() {
            return (Vec::new(), Vec::new());
        }
        let p = (0..n).map(|_| &self.policy[rng.random_range(0..self.policy.len())]).collect();
        let v = (0..n).map(|_| &self.value[rng.random_range(0..self.value.len())]).collect();
        (p, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaOutcome {
    /// Sum over arena instances of `reward(theta) - reward(best)`.
    pub sum: f64,
    pub update: bool,
}

/// Greedy rollouts of both policies on every arena instance; update iff the
/// learner's total reward is strictly higher.
pub fn arena_evaluate(theta: &PolicyNet, best: &PolicyNet, arena: &[Env]) -> Result<ArenaOutcome> {
    let diffs: Vec<Result<f64>> = arena
        .par_iter()
        .map(|env| {
            let a = greedy_rollout(env, theta)?.objective;
            let b = greedy_rollout(env, best)?.objective;
            Ok(b - a)
        })
        .collect();
    let mut sum = 0.0;
    for d in diffs {
        sum += d?;
    }
    Ok(ArenaOutcome {
        sum,
        update: sum > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_boundaries() {
        let cfg = TrainConfig {
            stage_switch: 7,
            total_episodes: 10,
            ..TrainConfig::default()
        };
        assert_eq!(stage_gate(6, &cfg), 1);
        assert_eq!(stage_gate(7, &cfg), 2);
        let zero = TrainConfig {
            stage_switch: 0,
            ..cfg
        };
        assert!((0..10).all(|e| stage_gate(e, &zero) == 2));
        let paper = TrainConfig::default();
        assert_eq!(stage_gate(19_999, &paper), 1);
        assert_eq!(stage_gate(20_000, &paper), 2);
        assert_eq!(paper.total_episodes, 50_000);
    }

    #[test]
    fn config_toml_round_trip_and_rejections() {
        let cfg = TrainConfig {
            stop_after: Some(3),
            problem: ProblemConfig::tsp(6),
            ..TrainConfig::default()
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), cfg);
        assert!(TrainConfig::from_toml("bogus_key = 1").is_err());
        let bad = TrainConfig {
            self_play_prob: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let partial = TrainConfig::from_toml("total_episodes = 5\nstage_switch = 2\n[planner]\nn_simulations = 9\n").unwrap();
        assert_eq!(partial.planner.n_simulations, 9);
        assert_eq!(partial.planner.m_root, 16);
    }

    #[test]
    fn arena_ties_keep_and_wins_update() {
        let net = NetConfig {
            embed_dim: 8,
            n_heads: 2,
            n_layers: 1,
            ffn_dim: 8,
            ..NetConfig::default()
        };
        let a = PolicyNet::new(net.clone(), 1).unwrap();
        let arena: Vec<Env> = (0..4).map(|s| ProblemConfig::tsp(6).make_env(s).unwrap()).collect();
        let same = arena_evaluate(&a, &a.clone(), &arena).unwrap();
        assert_eq!(same.sum, 0.0);
        assert!(!same.update);
        let b = PolicyNet::new(net, 2).unwrap();
        let ab = arena_evaluate(&a, &b, &arena).unwrap();
        let ba = arena_evaluate(&b, &a, &arena).unwrap();
        assert_eq!(ab.sum, -ba.sum);
        assert_eq!(ab, arena_evaluate(&a, &b, &arena).unwrap());
        if ab.sum != 0.0 {
            assert!(ab.update != ba.update);
        }
    }

    #[test]
    fn buffers_evict_oldest_first() {
        use crate::net::{PolicySample, StateFeatures};
        let env = ProblemConfig::tsp(4).make_env(0).unwrap();
        let f = StateFeatures::new(&env, &env.initial_state()).unwrap();
        let cfg = TrainConfig {
            policy_buffer_capacity: 3,
            ..TrainConfig::default()
        };
        let mut buf = ReplayBuffers::default();
        let mk = |k: usize| PolicySample {
            features: f.clone(),
            target: (0..4).map(|j| if j == 1 + k % 3 { 1.0 } else { 0.0 }).collect(),
        };
        let rec = |k: usize| EpisodeRecord {
            instance_seed: None,
            learner: 1,
            stage: 1,
            mu_is_theta: false,
            routes: [vec![], vec![]],
            objectives: [0.0; 2],
            energies: [0.0; 2],
            z: 1.0,
            learner_moves: 0,
            learner_sims: 0,
            competitor_moves: 0,
            competitor_sims: 0,
            policy_samples: vec![mk(k)],
            value_samples: vec![],
        };
        for k in 0..5 {
            buf.push(rec(k), &cfg);
        }
        assert_eq!(buf.policy.len(), 3);
        assert_eq!(buf.policy[0], mk(2));
    }
}
