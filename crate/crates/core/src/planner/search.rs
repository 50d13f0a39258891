use std::fmt;

use rand::Rng;

use super::gumbel::{completed_q, desc, sample_gumbel_topm, sequential_halving_schedule, sigma};
use super::{Game, PlannerConfig, Policy, Seat, ValueFn};
use crate::error::{Error, Result};
use crate::net::softmax;

struct Node<S> {
    own: S,
    depth: usize,
    terminal: bool,
    /// Network estimate, or the exact outcome at terminal nodes.
    value: f64,
    logits: Option<Vec<f64>>,
    visits: Vec<u32>,
    value_sums: Vec<f64>,
    children: Vec<Option<usize>>,
}

/// One search tree rooted at a `(own, opponent)` pair.
pub struct Search<'a, G: Game, P, O, V> {
    game: &'a G,
    policy: &'a P,
    opponent: &'a O,
    value_fn: &'a V,
    cfg: &'a PlannerConfig,
    seat: Seat,
    nodes: Vec<Node<G::State>>,
    /// Opponent state after `d` greedy steps; stops growing at terminal.
    opp_line: Vec<G::State>,
    opp_done: bool,
    pub simulations: usize,
    /// Leaf evaluations including the root.
    pub evaluations: usize,
}

impl<'a, G, P, O, V> Search<'a, G, P, O, V>
where
    G: Game,
    P: Policy<G>,
    O: Policy<G>,
    V: ValueFn<G>,
{
    /// Builds the root and evaluates it once.
    pub fn new(
        game: &'a G,
        own: &G::State,
        opp: &G::State,
        seat: Seat,
        policy: &'a P,
        opponent: &'a O,
        value_fn: &'a V,
        cfg: &'a PlannerConfig,
    ) -> Result<Self> {
        if game.is_terminal(own) {
            return Err(Error::Contract("planning from a terminal state".into()));
        }
        let mut s = Self {
            game,
            policy,
            opponent,
            value_fn,
            cfg,
            seat,
            nodes: Vec::new(),
            opp_done: game.is_terminal(opp),
            opp_line: vec![opp.clone()],
            simulations: 0,
            evaluations: 0,
        };
        s.expand(own.clone(), 0)?;
        s.logits(0)?;
        Ok(s)
    }

    fn opp_at(&mut self, depth: usize) -> Result<&G::State> {
        while !self.opp_done && self.opp_line.len() <= depth {
            let last = self.opp_line.last().expect("nonempty");
            let a = self.opponent.greedy(self.game, last)?;
            let next = self.game.apply(last, a)?;
            self.opp_done = self.game.is_terminal(&next);
            self.opp_line.push(next);
            if self.opp_line.len() > self.game.step_cap() + 1 {
                return Err(Error::Contract("opponent rollout exceeded the step cap".into()));
            }
        }
        let i = depth.min(self.opp_line.len() - 1);
        Ok(&self.opp_line[i])
    }

    fn opp_final_reward(&mut self) -> Result<f64> {
        let game = self.game;
        let last = self.opp_at(game.step_cap() + 1)?;
        if !game.is_terminal(last) {
            return Err(Error::Contract("opponent did not terminate".into()));
        }
        Ok(game.reward(last))
    }

    fn expand(&mut self, own: G::State, depth: usize) -> Result<usize> {
        let n = self.game.num_actions();
        let terminal = self.game.is_terminal(&own);
        let value = if terminal {
            let opp_reward = self.opp_final_reward()?;
            self.seat.outcome(self.game.reward(&own), opp_reward)
        } else {
            let opp = self.opp_at(depth)?.clone();
            self.evaluations += 1;
            self.value_fn.value(self.game, &own, &opp)?.clamp(-1.0, 1.0)
        };
        self.nodes.push(Node {
            own,
            depth,
            terminal,
            value,
            logits: None,
            visits: vec![0; n],
            value_sums: vec![0.0; n],
            children: vec![None; n],
        });
        Ok(self.nodes.len() - 1)
    }

    fn logits(&mut self, id: usize) -> Result<&[f64]> {
        if self.nodes[id].logits.is_none() {
            let l = self.policy.logits(self.game, &self.nodes[id].own)?;
            if l.len() != self.game.num_actions() {
                return Err(Error::Dimension(format!(
                    "policy returned {} logits for {} actions",
                    l.len(),
                    self.game.num_actions()
                )));
            }
            self.nodes[id].logits = Some(l);
        }
        Ok(self.nodes[id].logits.as_deref().expect("set above"))
    }

    pub fn root_logits(&self) -> &[f64] {
        self.nodes[0].logits.as_deref().expect("root logits")
    }

    pub fn root_value(&self) -> f64 {
        self.nodes[0].value
    }

    pub fn root_visits(&self) -> &[u32] {
        &self.nodes[0].visits
    }

    /// Completed Q-values of node `id` over all action ids.
    fn completed(&self, id: usize) -> Vec<f64> {
        let node = &self.nodes[id];
        completed_q(&node.visits, &node.value_sums, node.value)
    }

    pub fn root_completed_q(&self) -> Vec<f64> {
        self.completed(0)
    }

    fn max_visits(&self, id: usize) -> u32 {
        self.nodes[id].visits.iter().copied().max().unwrap_or(0)
    }

    /// `logits + sigma(completed Q)` at node `id`.
    fn improved_scores(&self, id: usize) -> Vec<f64> {
        let node = &self.nodes[id];
        let logits = node.logits.as_deref().expect("logits of an interior node");
        let q = self.completed(id);
        let nmax = self.max_visits(id);
        logits
            .iter()
            .zip(&q)
            .map(|(&l, &q)| {
                if l.is_finite() {
                    l + sigma(q, nmax, self.cfg.c_visit, self.cfg.c_scale)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// Improved policy at the root.
    pub fn improved_policy(&self) -> Vec<f64> {
        softmax(&self.improved_scores(0))
    }

    /// Deterministic in-tree choice: argmax of `pi'(a) - N(a) / (1 + sum N)`.
    fn select(&mut self, id: usize) -> Result<usize> {
        self.logits(id)?;
        let pi = softmax(&self.improved_scores(id));
        let node = &self.nodes[id];
        let total: u32 = node.visits.iter().sum();
        let logits = node.logits.as_deref().expect("set above");
        let mut best: Option<(usize, f64)> = None;
        for (a, &l) in logits.iter().enumerate() {
            if !l.is_finite() {
                continue;
            }
            let score = pi[a] - f64::from(node.visits[a]) / (1.0 + f64::from(total));
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((a, score));
            }
        }
        best.map(|b| b.0)
            .ok_or(Error::Contract("interior node without legal actions".into()))
    }

    fn child(&mut self, id: usize, action: usize) -> Result<(usize, bool)> {
        if let Some(c) = self.nodes[id].children[action] {
            return Ok((c, false));
        }
        let next = self.game.apply(&self.nodes[id].own, action)?;
        let depth = self.nodes[id].depth + 1;
        let c = self.expand(next, depth)?;
        self.nodes[id].children[action] = Some(c);
        Ok((c, true))
    }

    /// One playout that starts with `root_action`; returns the backed-up
    /// value.
    pub fn simulate(&mut self, root_action: usize) -> Result<f64> {
        let legal = self.root_logits().get(root_action).is_some_and(|l| l.is_finite());
        if !legal {
            return Err(Error::Contract(format!("root action {root_action} is not legal")));
        }
        let mut path = vec![(0, root_action)];
        let mut cur = 0;
        let mut action = root_action;
        let value = loop {
            let (c, fresh) = self.child(cur, action)?;
            if fresh || self.nodes[c].terminal {
                break self.nodes[c].value;
            }
            cur = c;
            action = self.select(cur)?;
            path.push((cur, action));
        };
        for (id, a) in path {
            self.nodes[id].visits[a] += 1;
            self.nodes[id].value_sums[a] += value;
        }
        self.simulations += 1;
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrace {
    pub action: usize,
    pub gumbel: f64,
    pub logit: f64,
    pub visits: u32,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub sims_per_candidate: usize,
    pub candidates: Vec<CandidateTrace>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTrace {
    pub phases: Vec<PhaseTrace>,
}

impl fmt::Display for SearchTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, phase) in self.phases.iter().enumerate() {
            writeln!(
                f,
                "phase {p}: {} candidates x {} sims",
                phase.candidates.len(),
                phase.sims_per_candidate
            )?;
            for c in &phase.candidates {
                writeln!(
                    f,
                    "  a={:<4} g={:+.4} logit={:+.4} N={:<4} Q={:+.4}",
                    c.action, c.gumbel, c.logit, c.visits, c.q
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub action: usize,
    /// Improved policy over all action ids; zero off the legal set.
    pub improved_policy: Vec<f64>,
    pub root_value: f64,
    pub simulations: usize,
    pub evaluations: usize,
    pub trace: Option<SearchTrace>,
}

/// Chooses an action for the owner of `own` by Gumbel search with
/// sequential halving.
#[allow(clippy::too_many_arguments)]
pub fn plan<G, P, O, V, R>(
    game: &G,
    own: &G::State,
    opp: &G::State,
    seat: Seat,
    policy: &P,
    opponent: &O,
    value_fn: &V,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanResult>
where
    G: Game,
    P: Policy<G>,
    O: Policy<G>,
    V: ValueFn<G>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut search = Search::new(game, own, opp, seat, policy, opponent, value_fn, cfg)?;
    let logits = search.root_logits().to_vec();
    let n_legal = logits.iter().filter(|l| l.is_finite()).count();
    if n_legal == 0 {
        return Err(Error::Contract("no legal action at the root".into()));
    }
    let m = cfg.m_root.min(n_legal);
    let sampled = if cfg.gumbel_noise {
        sample_gumbel_topm(&logits, m, rng)
    } else {
        let mut top: Vec<usize> = (0..logits.len()).filter(|&a| logits[a].is_finite()).collect();
        top.sort_by(|&x, &y| desc(logits[x], logits[y]).then(x.cmp(&y)));
        top.into_iter().take(m).map(|a| (a, 0.0)).collect()
    };
    let mut gumbel = vec![f64::NEG_INFINITY; logits.len()];
    for &(a, g) in &sampled {
        gumbel[a] = g;
    }
    let mut alive: Vec<usize> = sampled.iter().map(|p| p.0).collect();
    let mut trace = cfg.trace.then(SearchTrace::default);

    let rank = |search: &Search<G, P, O, V>, alive: &mut Vec<usize>| {
        let q = search.root_completed_q();
        let nmax = search.root_visits().iter().copied().max().unwrap_or(0);
        let score = |a: usize| gumbel[a] + logits[a] + sigma(q[a], nmax, cfg.c_visit, cfg.c_scale);
        alive.sort_by(|&x, &y| desc(score(x), score(y)).then(x.cmp(&y)));
    };

    for (k, sims) in sequential_halving_schedule(m, cfg.n_simulations) {
        rank(&search, &mut alive);
        alive.truncate(k);
        for &a in &alive {
            for _ in 0..sims {
                search.simulate(a)?;
            }
        }
        if let Some(t) = trace.as_mut() {
            let q = search.root_completed_q();
            t.phases.push(PhaseTrace {
                sims_per_candidate: sims,
                candidates: alive
                    .iter()
                    .map(|&a| CandidateTrace {
                        action: a,
                        gumbel: gumbel[a],
                        logit: logits[a],
                        visits: search.root_visits()[a],
                        q: q[a],
                    })
                    .collect(),
            });
        }
    }
    rank(&search, &mut alive);
    Ok(PlanResult {
        action: alive[0],
        improved_policy: search.improved_policy(),
        root_value: search.root_value(),
        simulations: search.simulations,
        evaluations: search.evaluations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One decision with fixed payoffs; the opponent has a single move.
    struct OneShot {
        payoffs: Vec<f64>,
    }

    #[derive(Clone, Debug, PartialEq)]
    enum St {
        Start,
        Done(f64),
    }

    impl Game for OneShot {
        type State = St;
        fn num_actions(&self) -> usize {
            self.payoffs.len()
        }
        fn legal_actions(&self, s: &St) -> Vec<usize> {
            match s {
                St::Start => (0..self.payoffs.len()).collect(),
                St::Done(_) => vec![],
            }
        }
        fn apply(&self, s: &St, a: usize) -> Result<St> {
            match s {
                St::Start => Ok(St::Done(self.payoffs[a])),
                St::Done(_) => Err(Error::Contract("terminal".into())),
            }
        }
        fn is_terminal(&self, s: &St) -> bool {
            matches!(s, St::Done(_))
        }
        fn reward(&self, s: &St) -> f64 {
            match s {
                St::Done(r) => *r,
                St::Start => 0.0,
            }
        }
        fn step_cap(&self) -> usize {
            1
        }
    }

    struct Flat(Vec<f64>);
    impl Policy<OneShot> for Flat {
        fn logits(&self, g: &OneShot, s: &St) -> Result<Vec<f64>> {
            Ok(match s {
                St::Start => self.0.clone(),
                St::Done(_) => vec![f64::NEG_INFINITY; g.num_actions()],
            })
        }
        fn greedy(&self, _: &OneShot, _: &St) -> Result<usize> {
            Ok(0)
        }
    }

    struct Const(f64);
    impl ValueFn<OneShot> for Const {
        fn value(&self, _: &OneShot, _: &St, _: &St) -> Result<f64> {
            Ok(self.0)
        }
    }

    fn game() -> OneShot {
        // the opponent has already finished with 2.0
        OneShot {
            payoffs: vec![1.0, 3.0, 0.0],
        }
    }

    #[test]
    fn terminal_root_is_an_error() {
        let g = game();
        let cfg = PlannerConfig::default();
        let p = Flat(vec![0.0; 3]);
        let r = Search::new(&g, &St::Done(1.0), &St::Done(2.0), Seat::First, &p, &p, &Const(0.0), &cfg);
        assert!(r.is_err());
    }

    #[test]
    fn one_playout_updates_one_path() {
        let g = game();
        let cfg = PlannerConfig::default();
        let p = Flat(vec![0.0; 3]);
        let mut s = Search::new(&g, &St::Start, &St::Done(2.0), Seat::First, &p, &p, &Const(0.0), &cfg).unwrap();
        let v = s.simulate(1).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(s.root_visits(), &[0, 1, 0]);
        assert_eq!(s.simulations, 1);
        s.simulate(0).unwrap();
        s.simulate(2).unwrap();
        // exact outcomes against the opponent's 2.0
        assert_eq!(s.root_completed_q(), vec![-1.0, 1.0, -1.0]);
    }

    #[test]
    fn completed_q_mixes_visits_and_root_value() {
        let g = game();
        let cfg = PlannerConfig::default();
        let p = Flat(vec![0.0; 3]);
        let mut s = Search::new(&g, &St::Start, &St::Done(2.0), Seat::First, &p, &p, &Const(0.3), &cfg).unwrap();
        s.simulate(1).unwrap();
        assert_eq!(s.root_completed_q(), vec![0.3, 1.0, 0.3]);
        assert_eq!(s.evaluations, 1);
    }

    #[test]
    fn plan_picks_the_winning_action_and_counts_sims() {
        let g = game();
        let prior = Flat(vec![3.0, -3.0, 1.0]);
        for seed in 0..20 {
            let cfg = PlannerConfig {
                n_simulations: 6,
                m_root: 3,
                trace: true,
                ..PlannerConfig::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = plan(&g, &St::Start, &St::Done(2.0), Seat::First, &prior, &prior, &Const(0.0), &cfg, &mut rng).unwrap();
            assert_eq!(r.action, 1);
            let scheduled = crate::planner::schedule_total(&sequential_halving_schedule(3, 6));
            assert_eq!(r.simulations, scheduled);
            assert!(r.evaluations <= cfg.n_simulations + 1);
            assert!((r.improved_policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.trace.unwrap().to_string().contains("phase 1"));
        }
    }

    #[test]
    fn improved_policy_ignores_uniform_logit_shift() {
        let g = game();
        let cfg = PlannerConfig {
            n_simulations: 4,
            m_root: 2,
            ..PlannerConfig::default()
        };
        let a = Flat(vec![0.5, 0.1, -0.2]);
        let b = Flat(vec![5.5, 5.1, 4.8]);
        let ra = plan(&g, &St::Start, &St::Done(2.0), Seat::Second, &a, &a, &Const(0.0), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let rb = plan(&g, &St::Start, &St::Done(2.0), Seat::Second, &b, &b, &Const(0.0), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ra.action, rb.action);
        for (x, y) in ra.improved_policy.iter().zip(&rb.improved_policy) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_root_ignores_the_generator() {
        let g = game();
        let cfg = PlannerConfig {
            n_simulations: 4,
            m_root: 2,
            gumbel_noise: false,
            trace: true,
            ..PlannerConfig::default()
        };
        let p = Flat(vec![0.5, -1.0, 0.2]);
        let runs: Vec<PlanResult> = (0..5)
            .map(|seed| plan(&g, &St::Start, &St::Done(2.0), Seat::First, &p, &p, &Const(0.0), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap())
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
        // the top two logits are 0 and 2; neither wins, so the prior decides
        let first = &runs[0].trace.as_ref().unwrap().phases[0];
        let mut ids: Vec<usize> = first.candidates.iter().map(|c| c.action).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 2]);
        assert_eq!(runs[0].action, 0);
    }

    #[test]
    fn masked_actions_get_zero_improved_mass() {
        let g = game();
        let cfg = PlannerConfig {
            n_simulations: 4,
            m_root: 2,
            ..PlannerConfig::default()
        };
        let p = Flat(vec![0.0, f64::NEG_INFINITY, 0.0]);
        let r = plan(&g, &St::Start, &St::Done(2.0), Seat::First, &p, &p, &Const(0.0), &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(r.improved_policy[1], 0.0);
        assert_ne!(r.action, 1);
    }
}
