//! Random models for tests and benchmarks.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{MdpModel, ModelBuilder};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMdpParams {
    pub n_states: usize,
    pub n_actions: usize,
    /// Largest number of successors per action row.
    pub max_successors: usize,
    /// Chance that a non-goal action is left out entirely.
    pub missing_action: f64,
    pub cost_range: (f64, f64),
    /// When set, action 0 of state `x > 0` puts some mass on `x - 1`, so
    /// every state can reach the goal.
    pub connected: bool,
}

impl RandomMdpParams {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            max_successors: 3,
            missing_action: 0.2,
            cost_range: (0.1, 5.0),
            connected: false,
        }
    }
}

/// A random model whose goal is state 0, absorbing through action 0 at cost 0.
pub fn random_mdp<R: Rng + ?Sized>(params: &RandomMdpParams, rng: &mut R) -> Result<MdpModel> {
    let p = *params;
    if p.n_states < 2 || p.n_actions < 1 || p.max_successors < 1 {
        return Err(Error::InvalidParameter {
            name: "n_states",
            value: p.n_states as f64,
            reason: "need at least 2 states, 1 action and 1 successor",
        });
    }
    let (c_lo, c_hi) = p.cost_range;
    if !(0.0 < c_lo && c_lo <= c_hi) {
        return Err(Error::InvalidParameter {
            name: "cost_range",
            value: c_lo,
            reason: "need 0 < lo <= hi",
        });
    }
    let mut b = ModelBuilder::new(p.n_states, p.n_actions).action(0, 0, 0.0, &[(0, 1.0)]).goal_stay(0, 0);
    for x in 1..p.n_states {
        for u in 0..p.n_actions {
            let forced = p.connected && u == 0;
            if !forced && rng.gen::<f64>() < p.missing_action {
                continue;
            }
            let k = rng.gen_range(1..=p.max_successors.min(p.n_states));
            let mut targets: Vec<usize> = sample(rng, p.n_states, k).into_vec();
            if forced && !targets.contains(&(x - 1)) {
                targets[0] = x - 1;
            }
            let weights: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let outcomes: Vec<(usize, f64)> = targets.iter().zip(&weights).map(|(&t, &w)| (t, w / total)).collect();
            let g = if c_lo == c_hi { c_lo } else { rng.gen_range(c_lo..c_hi) };
            b = b.action(x, u, g, &outcomes);
        }
    }
    b.build()
}
