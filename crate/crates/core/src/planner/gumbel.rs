//! Root sampling, simulation allocation and value transforms.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Gumbel};

/// Draws i.i.d. standard Gumbel noise for every finite logit and returns the
/// `m` actions with the largest `g + logit`, best first, with their noise.
///
/// `m` is clamped to the number of finite logits. Ties go to the lower id.
pub fn sample_gumbel_topm<R: Rng + ?Sized>(logits: &[f64], m: usize, rng: &mut R) -> Vec<(usize, f64)> {
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let mut scored: Vec<(usize, f64, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .map(|(a, &l)| {
            let g: f64 = gumbel.sample(rng);
            (a, g, g + l)
        })
        .collect();
    scored.sort_by(|x, y| desc(x.2, y.2).then(x.0.cmp(&y.0)));
    scored.truncate(m);
    scored.into_iter().map(|(a, g, _)| (a, g)).collect()
}

/// Descending order with NaN last.
pub(crate) fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

/// Phases of sequential halving as `(candidates, sims_per_candidate)`.
///
/// There are `max(1, ceil(log2 m))` phases; phase `p` keeps `ceil(m / 2^p)`
/// candidates and gives each `max(1, floor(budget / (phases * candidates)))`
/// simulations while budget remains. Whatever is left is split evenly over
/// the final phase's candidates. With `budget < m` a single phase gives one
/// simulation to each of the top `budget` candidates.
pub fn sequential_halving_schedule(m: usize, budget: usize) -> Vec<(usize, usize)> {
    if m == 0 || budget == 0 {
        return Vec::new();
    }
    if budget < m {
        return vec![(budget, 1)];
    }
    let phases = (usize::BITS - (m - 1).leading_zeros()).max(1) as usize;
    let mut plan = Vec::with_capacity(phases);
    let mut used = 0;
    for p in 0..phases {
        let k = m.div_ceil(1 << p);
        let want = (budget / (phases * k)).max(1);
        let sims = want.min((budget - used) / k);
        used += sims * k;
        plan.push((k, sims));
    }
    let last = plan.last_mut().expect("at least one phase");
    last.1 += (budget - used) / last.0;
    plan
}

/// Total simulations a schedule spends.
pub fn schedule_total(schedule: &[(usize, usize)]) -> usize {
    schedule.iter().map(|&(k, s)| k * s).sum()
}

/// `(c_visit + max_visits) * c_scale * q_hat`.
pub fn sigma(q_hat: f64, max_visits: u32, c_visit: f64, c_scale: f64) -> f64 {
    (c_visit + f64::from(max_visits)) * c_scale * q_hat
}

/// Empirical mean value for visited actions and `fallback` for unvisited
/// ones; illegal actions (non-finite logits) get `fallback` too but are never
/// read through a finite softmax.
pub fn completed_q(visits: &[u32], value_sums: &[f64], fallback: f64) -> Vec<f64> {
    visits
        .iter()
        .zip(value_sums)
        .map(|(&n, &w)| {
            if n > 0 {
                (w / f64::from(n)).clamp(-1.0, 1.0)
            } else {
                fallback
            }
        })
        .collect()
}
