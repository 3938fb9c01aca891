//! Value Iteration baseline, discounted and undiscounted.
//!
//! Sweeps are Gauss-Seidel (in place) from `v = 0`, so every sweep is
//! entrywise non-decreasing. The goal is absorbing with value 0.
//!
//! Without discounting, states that have no proper policy have infinite
//! value. These are found before sweeping: repeatedly drop states that cannot
//! reach the goal through actions whose outcomes all stay among surviving
//! states. Sweeping alone only finds them by letting values grow past
//! `|X| * max g / tol`, which is kept as a backstop.

use serde::Serialize;

use crate::error::{check_state, Error, Result};
use crate::model::MdpModel;
use crate::policy::{argmin_from_gradient, GradientTable, PolicyTable};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    pub gamma: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            tol: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl ViOptions {
    pub fn discounted(gamma: f64) -> Self {
        Self {
            gamma,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueField {
    pub goal: usize,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ValueField {
    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }
}

/// Runs Value Iteration toward `goal` until the largest change in a sweep
/// drops below `tol` or `max_sweeps` is reached.
pub fn value_iteration(model: &MdpModel, goal: usize, opts: &ViOptions) -> Result<ValueField> {
    let gamma = opts.gamma;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "must lie in (0, 1]",
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: opts.tol,
            reason: "must be positive",
        });
    }
    check_state(goal, model.n_states())?;
    let n = model.n_states();
    let m = model.n_actions();

    let mut usable = vec![false; n * m];
    for x in 0..n {
        for u in model.available_actions(x) {
            usable[x * m + u] = model.cost(x, u).is_some();
        }
    }
    let alive = if gamma == 1.0 {
        proper_states(model, goal, &mut usable)
    } else {
        vec![true; n]
    };

    let max_g = (0..n)
        .flat_map(|x| (0..m).map(move |u| (x, u)))
        .filter(|&(x, u)| usable[x * m + u])
        .filter_map(|(x, u)| model.cost(x, u))
        .fold(0.0, f64::max);
    let divergence = n as f64 * max_g.max(1.0) / opts.tol;

    let mut v: Vec<f64> = alive.iter().map(|&a| if a { 0.0 } else { f64::INFINITY }).collect();
    v[goal] = 0.0;
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        residual = 0.0;
        for x in 0..n {
            if x == goal || !alive[x] || v[x] == f64::INFINITY {
                continue;
            }
            let mut best = f64::INFINITY;
            for u in 0..m {
                if !usable[x * m + u] {
                    continue;
                }
                let g = model.cost(x, u).unwrap_or(f64::INFINITY);
                let expect: f64 = model.row(x, u).iter().map(|(z, p)| p * v[z]).sum();
                let q = g + gamma * expect;
                if q < best {
                    best = q;
                }
            }
            if gamma == 1.0 && best > divergence {
                best = f64::INFINITY;
            }
            let change = if best == v[x] { 0.0 } else { (best - v[x]).abs() };
            if change > residual {
                residual = change;
            }
            v[x] = best;
        }
        sweeps += 1;
        if residual < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(ValueField {
        goal,
        values: v,
        gamma,
        residual,
        iterations: sweeps,
        converged,
    })
}

/// States from which the goal is reached with probability 1 under some
/// policy. Clears `usable` for actions that can leave that set.
fn proper_states(model: &MdpModel, goal: usize, usable: &mut [bool]) -> Vec<bool> {
    let n = model.n_states();
    let m = model.n_actions();
    let mut alive = vec![true; n];
    loop {
        // Backward reachability through usable actions, restricted to `alive`.
        let mut reach = vec![false; n];
        reach[goal] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for x in 0..n {
                if reach[x] || !alive[x] {
                    continue;
                }
                let hit = (0..m).any(|u| {
                    usable[x * m + u] && model.row(x, u).iter().any(|(z, p)| p > 0.0 && reach[z])
                });
                if hit {
                    reach[x] = true;
                    changed = true;
                }
            }
        }
        let mut pruned = false;
        for x in 0..n {
            for u in 0..m {
                let k = x * m + u;
                if usable[k] && model.row(x, u).iter().any(|(z, p)| p > 0.0 && !reach[z]) {
                    usable[k] = false;
                    pruned = true;
                }
            }
        }
        let shrunk = alive != reach;
        alive = reach;
        if !pruned && !shrunk {
            return alive;
        }
    }
}

/// `pi(x) = argmin_u g(x,u) + gamma sum_y v(y) p(y|x,u)`, lowest id on ties.
/// States where every action has infinite expectation are flagged no-progress.
pub fn greedy_policy(model: &MdpModel, v: &ValueField) -> Result<PolicyTable> {
    if v.values.len() != model.n_states() {
        return Err(Error::SpaceMismatch(format!(
            "value field has {} entries for {} states",
            v.values.len(),
            model.n_states()
        )));
    }
    let rows = (0..model.n_states())
        .map(|x| {
            (0..model.n_actions())
                .map(|u| {
                    let row = model.row(x, u);
                    let g = model.cost(x, u)?;
                    if row.is_empty() {
                        return None;
                    }
                    let mut expect = 0.0;
                    for (z, p) in row.iter() {
                        if p > 0.0 {
                            expect += p * v.values[z];
                        }
                    }
                    Some(g + v.gamma * expect)
                })
                .collect()
        })
        .collect();
    Ok(argmin_from_gradient(&GradientTable::from_rows(rows)?))
}

/// Sweep budget guaranteeing convergence of discounted iteration:
/// `ceil(log(tol (1 - gamma) / max g) / log gamma) + margin`.
pub fn discounted_sweep_bound(gamma: f64, tol: f64, max_cost: f64, margin: usize) -> usize {
    assert!(gamma > 0.0 && gamma < 1.0);
    let k = ((tol * (1.0 - gamma) / max_cost).ln() / gamma.ln()).ceil();
    k.max(0.0) as usize + margin
}
