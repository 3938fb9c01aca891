//! Prison and risky-state detection for a fixed goal.
//!
//! The prison `J` of a goal is every state with no path to it, i.e. exactly the
//! states at infinite quasi-distance. Around it sit the weakly risky states
//! (some action may fall into `J`), the risky states (every action may) and
//! the epsilon-risky states (every action falls in with probability above a
//! threshold).

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{check_state, Error, Result};
use crate::model::MdpModel;
use crate::quasimetric::{FieldMode, QuasiDistanceField, WeightedGraph};

pub type StateSet = BTreeSet<usize>;

/// States with a directed path to `goal`, found by breadth-first search on the
/// transposed graph.
pub fn reaching_set(graph: &WeightedGraph, goal: usize) -> Result<StateSet> {
    check_state(goal, graph.vertex_count())?;
    let mut seen = vec![false; graph.vertex_count()];
    let mut queue = VecDeque::from([goal]);
    seen[goal] = true;
    while let Some(v) = queue.pop_front() {
        for (p, _) in graph.reverse().neighbors(v) {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    Ok(seen
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect())
}

/// Complement of the reaching set.
pub fn prison_set(reaching: &StateSet, n_states: usize) -> StateSet {
    (0..n_states).filter(|x| !reaching.contains(x)).collect()
}

/// The three risk tiers around a prison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RiskySets {
    pub weakly_risky: StateSet,
    pub risky: StateSet,
    pub epsilon_risky: StateSet,
}

/// Computes `K'`, `K` and `K_eps`. Only actions with transition entries at a
/// state take part in the "every action" quantifier.
pub fn risky_sets(model: &MdpModel, prison: &StateSet, epsilon: f64) -> Result<RiskySets> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            reason: "must lie in [0, 1)",
        });
    }
    let mut in_prison = vec![false; model.n_states()];
    for &z in prison {
        check_state(z, model.n_states())?;
        in_prison[z] = true;
    }
    // Largest single-successor probability of entering the prison.
    let worst_entry = |x: usize, u: usize| {
        model
            .row(x, u)
            .iter()
            .filter(|&(z, _)| in_prison[z])
            .map(|(_, p)| p)
            .fold(0.0, f64::max)
    };

    let mut sets = RiskySets {
        weakly_risky: StateSet::new(),
        risky: StateSet::new(),
        epsilon_risky: StateSet::new(),
    };
    for x in (0..model.n_states()).filter(|&x| !in_prison[x]) {
        let entries: Vec<f64> = model.available_actions(x).map(|u| worst_entry(x, u)).collect();
        if !entries.iter().any(|&p| p > 0.0) {
            continue;
        }
        sets.weakly_risky.insert(x);
        if entries.iter().all(|&p| p > 0.0) {
            sets.risky.insert(x);
        }
        if entries.iter().all(|&p| p > epsilon) {
            sets.epsilon_risky.insert(x);
        }
    }
    Ok(sets)
}

/// Copy of a to-goal field with `d(x, goal) = omega` for every `x` in
/// `states`. Nothing is re-propagated. `omega = inf` marks them unreachable.
pub fn apply_risk_override(
    d: &QuasiDistanceField,
    states: &StateSet,
    omega: f64,
) -> Result<QuasiDistanceField> {
    if !matches!(d.mode(), FieldMode::ToGoal(_)) {
        return Err(Error::ModeMismatch("risk override needs a to-goal field"));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega",
            value: omega,
            reason: "must be positive or infinite",
        });
    }
    let mut values = d.values().to_vec();
    for &x in states {
        check_state(x, values.len())?;
        values[x] = omega;
    }
    QuasiDistanceField::from_values(d.mode(), d.n_states(), values)
}

/// States with finite value strictly below `k`.
pub fn sublevel_set(d: &QuasiDistanceField, k: f64) -> Result<StateSet> {
    if d.mode() == FieldMode::AllPairs {
        return Err(Error::ModeMismatch("sublevel sets need a single-anchor field"));
    }
    Ok(d.values()
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v.is_finite() && v < k)
        .map(|(i, _)| i)
        .collect())
}

/// Goal-conditioned risk summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub goal: usize,
    pub epsilon: f64,
    pub reaching: StateSet,
    pub prison: StateSet,
    pub weakly_risky: StateSet,
    pub risky: StateSet,
    pub epsilon_risky: StateSet,
}

pub fn risk_report(model: &MdpModel, graph: &WeightedGraph, goal: usize, epsilon: f64) -> Result<RiskReport> {
    let reaching = reaching_set(graph, goal)?;
    let prison = prison_set(&reaching, model.n_states());
    let RiskySets {
        weakly_risky,
        risky,
        epsilon_risky,
    } = risky_sets(model, &prison, epsilon)?;
    Ok(RiskReport {
        goal,
        epsilon,
        reaching,
        prison,
        weakly_risky,
        risky,
        epsilon_risky,
    })
}
