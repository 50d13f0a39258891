//! Gumbel tree search over paired player states.
//!
//! Both players move in parallel, so a tree node is a pair of states at the
//! same depth. Only the planning player branches; the opponent advances one
//! greedy step of its own policy per depth. Values are kept in the planning
//! player's perspective throughout.

mod gumbel;
mod search;

use serde::{Deserialize, Serialize};

pub use gumbel::{completed_q, sample_gumbel_topm, schedule_total, sequential_halving_schedule, sigma};
pub use search::{plan, CandidateTrace, PhaseTrace, PlanResult, Search, SearchTrace};

use crate::env::{game_outcome, Env, PlayerState};
use crate::error::{Error, Result};
use crate::net::{argmax, PolicyNet, StateFeatures, ValueNet};

/// A single-player sequential decision problem scored by a terminal reward.
pub trait Game {
    type State: Clone;

    /// Size of the action id space; actions are `0..num_actions`.
    fn num_actions(&self) -> usize;
    /// Legal actions in increasing id order; empty when terminal.
    fn legal_actions(&self, state: &Self::State) -> Vec<usize>;
    fn apply(&self, state: &Self::State, action: usize) -> Result<Self::State>;
    fn is_terminal(&self, state: &Self::State) -> bool;
    /// Reward of a terminal state; larger is better.
    fn reward(&self, state: &Self::State) -> f64;
    /// Upper bound on episode length.
    fn step_cap(&self) -> usize;
}

/// Action logits over all ids, `-inf` where illegal.
pub trait Policy<G: Game> {
    fn logits(&self, game: &G, state: &G::State) -> Result<Vec<f64>>;

    fn greedy(&self, game: &G, state: &G::State) -> Result<usize> {
        Ok(argmax(&self.logits(game, state)?))
    }
}

/// Expected outcome in `[-1, 1]` for the owner of `own`.
pub trait ValueFn<G: Game> {
    fn value(&self, game: &G, own: &G::State, opp: &G::State) -> Result<f64>;
}

/// Which side of the tie rule the planning player is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Seat {
    /// Wins ties.
    First,
    Second,
}

impl Seat {
    pub fn from_sign(p: i8) -> Seat {
        if p >= 0 {
            Seat::First
        } else {
            Seat::Second
        }
    }

    /// Game outcome `+1`/`-1` from this seat.
    pub fn outcome(self, own_reward: f64, opp_reward: f64) -> f64 {
        match self {
            Seat::First => game_outcome(own_reward, opp_reward).z(),
            Seat::Second => -game_outcome(opp_reward, own_reward).z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_simulations: usize,
    /// Root candidates; clamped to the number of legal actions.
    pub m_root: usize,
    pub c_visit: f64,
    pub c_scale: f64,
    /// Perturb root logits with Gumbel noise; without it the root keeps the
    /// top-m logits and the search is deterministic.
    pub gumbel_noise: bool,
    /// Record a per-phase search trace.
    pub trace: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_simulations: 100,
            m_root: 16,
            c_visit: 50.0,
            c_scale: 1.0,
            gumbel_noise: true,
            trace: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_root == 0 || self.n_simulations < self.m_root {
            return Err(Error::InvalidArgument(format!(
                "need n_simulations >= m_root >= 1, got {} and {}",
                self.n_simulations, self.m_root
            )));
        }
        if !(self.c_visit.is_finite() && self.c_scale.is_finite() && self.c_scale > 0.0) {
            return Err(Error::InvalidArgument("c_visit and c_scale must be finite, c_scale > 0".into()));
        }
        Ok(())
    }
}

impl Game for Env {
    type State = PlayerState;

    fn num_actions(&self) -> usize {
        self.n_nodes()
    }

    fn legal_actions(&self, state: &PlayerState) -> Vec<usize> {
        self.legal_list(state)
    }

    fn apply(&self, state: &PlayerState, action: usize) -> Result<PlayerState> {
        self.step(state, action)
    }

    fn is_terminal(&self, state: &PlayerState) -> bool {
        state.done
    }

    fn reward(&self, state: &PlayerState) -> f64 {
        Env::reward(self, state)
    }

    fn step_cap(&self) -> usize {
        Env::step_cap(self)
    }
}

impl Policy<Env> for PolicyNet {
    fn logits(&self, game: &Env, state: &PlayerState) -> Result<Vec<f64>> {
        PolicyNet::logits(self, &StateFeatures::new(game, state)?)
    }
}

impl ValueFn<Env> for ValueNet {
    fn value(&self, game: &Env, own: &PlayerState, opp: &PlayerState) -> Result<f64> {
        ValueNet::value(
            self,
            &StateFeatures::new(game, own)?,
            &StateFeatures::new(game, opp)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seat_tie_rule() {
        assert_eq!(Seat::First.outcome(-3.0, -3.0), 1.0);
        assert_eq!(Seat::Second.outcome(-3.0, -3.0), -1.0);
        assert_eq!(Seat::Second.outcome(-2.0, -3.0), 1.0);
        assert_eq!(Seat::First.outcome(-4.0, -3.0), -1.0);
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig::default().validate().is_ok());
        let bad = PlannerConfig {
            n_simulations: 4,
            m_root: 8,
            ..PlannerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
