//! Seeded rollouts, Monte Carlo summaries and accessibility volumes.
//!
//! Trial `i` of a run seeded with `s` draws from ChaCha8 stream `2i` of seed
//! `s` for decisions and successors, and stream `2i + 1` for observations.
//! A single rollout is trial 0, so it matches the first Monte Carlo trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{action_distribution, forward_update, observe, Belief, ObservationModel};
use crate::error::{check_state, Error, Result};
use crate::model::MdpModel;
use crate::policy::{decide, sample_index, DecisionMode, PolicyTable};
use crate::quasimetric::{FieldMode, QuasiDistanceField};

/// How the next state is picked from `p(. | x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Successor {
    /// Inverse-CDF draw over the stored row in target order.
    Sample,
    /// The most probable target, lowest id on ties. Removes all dynamics noise.
    MostLikely,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub max_steps: usize,
    pub mode: DecisionMode,
    pub seed: u64,
    pub successor: Successor,
}

impl RolloutOptions {
    pub fn new(max_steps: usize, mode: DecisionMode, seed: u64) -> Self {
        Self {
            max_steps,
            mode,
            seed,
            successor: Successor::Sample,
        }
    }

    pub fn noise_free(mut self) -> Self {
        self.successor = Successor::MostLikely;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub step_costs: Vec<f64>,
    pub reached_goal: bool,
    pub total_cost: f64,
}

impl TrajectoryRecord {
    fn start(state: usize) -> Self {
        Self {
            states: vec![state],
            actions: Vec::new(),
            step_costs: Vec::new(),
            reached_goal: false,
            total_cost: 0.0,
        }
    }

    fn push(&mut self, action: usize, cost: f64, next: usize) {
        self.actions.push(action);
        self.step_costs.push(cost);
        self.total_cost += cost;
        self.states.push(next);
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

pub(crate) fn trial_rng(seed: u64, trial: u64, observation: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial + u64::from(observation));
    rng
}

fn next_state(model: &MdpModel, x: usize, u: usize, successor: Successor, rng: &mut ChaCha8Rng) -> usize {
    let row = model.row(x, u);
    match successor {
        Successor::Sample => {
            let targets: Vec<(usize, f64)> = row.iter().collect();
            let probs: Vec<f64> = targets.iter().map(|e| e.1).collect();
            targets[sample_index(&probs, rng)].0
        }
        Successor::MostLikely => {
            let mut best = (x, f64::NEG_INFINITY);
            for (z, p) in row.iter() {
                if p > best.1 {
                    best = (z, p);
                }
            }
            best.0
        }
    }
}

fn check_inputs(model: &MdpModel, policy: &PolicyTable, start: usize, goal: usize) -> Result<()> {
    check_state(start, model.n_states())?;
    check_state(goal, model.n_states())?;
    if policy.n_states() != model.n_states() || policy.n_actions() != model.n_actions() {
        return Err(Error::SpaceMismatch(format!(
            "policy is {}x{}, model {}x{}",
            policy.n_states(),
            policy.n_actions(),
            model.n_states(),
            model.n_actions()
        )));
    }
    Ok(())
}

/// Runs the policy from `start` until a transition lands on `goal` or
/// `max_steps` actions have been taken. Starting on the goal does not end
/// the run. A chosen action with no transitions at the current state also
/// ends it, unsuccessfully.
pub fn rollout(
    model: &MdpModel,
    policy: &PolicyTable,
    start: usize,
    goal: usize,
    opts: &RolloutOptions,
) -> Result<TrajectoryRecord> {
    check_inputs(model, policy, start, goal)?;
    run_trial(model, policy, start, goal, opts, 0)
}

fn run_trial(
    model: &MdpModel,
    policy: &PolicyTable,
    start: usize,
    goal: usize,
    opts: &RolloutOptions,
    trial: u64,
) -> Result<TrajectoryRecord> {
    let mut rng = trial_rng(opts.seed, trial, false);
    let embedding = model.actions().embedding();
    let mut rec = TrajectoryRecord::start(start);
    let mut x = start;
    for _ in 0..opts.max_steps {
        let u = decide(&policy.row(x), opts.mode, embedding, &mut rng)?.action;
        if model.row(x, u).is_empty() {
            break;
        }
        let next = next_state(model, x, u, opts.successor, &mut rng);
        rec.push(u, model.cost(x, u).unwrap_or(0.0), next);
        x = next;
        if x == goal {
            rec.reached_goal = true;
            break;
        }
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful trials; NaN when there are none.
    pub mean_cost: f64,
    pub std_cost: f64,
    pub mean_steps: f64,
    /// Per-step mean of the state coordinates, `max_steps + 1` rows. Trials
    /// that stop early hold their last state.
    pub mean_trajectory: Option<Vec<Vec<f64>>>,
}

/// Runs `trials` independent rollouts in parallel and aggregates them in
/// trial order, so results do not depend on the thread count.
pub fn monte_carlo(
    model: &MdpModel,
    policy: &PolicyTable,
    start: usize,
    goal: usize,
    trials: usize,
    opts: &RolloutOptions,
    coordinates: Option<&[Vec<f64>]>,
) -> Result<MonteCarloSummary> {
    check_inputs(model, policy, start, goal)?;
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            value: 0.0,
            reason: "need at least one trial",
        });
    }
    if let Some(c) = coordinates {
        if c.len() != model.n_states() {
            return Err(Error::SpaceMismatch("coordinates do not cover every state".into()));
        }
    }
    let records: Vec<TrajectoryRecord> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(model, policy, start, goal, opts, t))
        .collect::<Result<_>>()?;
    Ok(summarize(&records, opts.max_steps, coordinates))
}

pub fn summarize(records: &[TrajectoryRecord], max_steps: usize, coordinates: Option<&[Vec<f64>]>) -> MonteCarloSummary {
    let wins: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.reached_goal).collect();
    let k = wins.len() as f64;
    let mean_cost = wins.iter().map(|r| r.total_cost).sum::<f64>() / k;
    let var = wins.iter().map(|r| (r.total_cost - mean_cost).powi(2)).sum::<f64>() / k;
    let mean_steps = wins.iter().map(|r| r.steps() as f64).sum::<f64>() / k;
    let mean_trajectory = coordinates.map(|c| {
        let dim = c.first().map_or(0, Vec::len);
        let mut acc = vec![vec![0.0; dim]; max_steps + 1];
        for r in records {
            for (t, row) in acc.iter_mut().enumerate() {
                let s = r.states[t.min(r.states.len() - 1)];
                for (a, v) in row.iter_mut().zip(&c[s]) {
                    *a += v;
                }
            }
        }
        let n = records.len() as f64;
        acc.iter_mut().flatten().for_each(|v| *v /= n);
        acc
    });
    MonteCarloSummary {
        trials: records.len(),
        successes: wins.len(),
        success_rate: k / records.len() as f64,
        mean_cost,
        std_cost: var.sqrt(),
        mean_steps,
        mean_trajectory,
    }
}

/// A rollout where the controller only sees observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefTrajectory {
    pub record: TrajectoryRecord,
    /// Symbol emitted by each visited state.
    pub observations: Vec<usize>,
    /// Most probable state of the belief after each observation.
    pub belief_modes: Vec<usize>,
}

/// Like [`rollout`], but each action is drawn from the belief-weighted
/// mixture of policy rows, and the belief is filtered from observations of
/// the hidden state. With identity observations and a point prior at
/// `start` this reproduces [`rollout`] draw for draw.
pub fn belief_rollout(
    model: &MdpModel,
    policy: &PolicyTable,
    obs: &ObservationModel,
    start: usize,
    goal: usize,
    prior: &Belief,
    opts: &RolloutOptions,
) -> Result<BeliefTrajectory> {
    check_inputs(model, policy, start, goal)?;
    if obs.n_states() != model.n_states() || prior.len() != model.n_states() {
        return Err(Error::SpaceMismatch("observation model or prior does not match the model".into()));
    }
    let mut rng = trial_rng(opts.seed, 0, false);
    let mut obs_rng = trial_rng(opts.seed, 0, true);
    let embedding = model.actions().embedding();
    let mut rec = TrajectoryRecord::start(start);
    let mut x = start;
    let mut symbol = sample_index(obs.row(x), &mut obs_rng);
    let mut observations = vec![symbol];
    let mut belief = observe(prior, symbol, obs)?;
    let mut belief_modes = vec![belief.mode()];
    for _ in 0..opts.max_steps {
        let dist = action_distribution(&belief, policy)?;
        let u = decide(&dist, opts.mode, embedding, &mut rng)?.action;
        if model.row(x, u).is_empty() {
            break;
        }
        let next = next_state(model, x, u, opts.successor, &mut rng);
        rec.push(u, model.cost(x, u).unwrap_or(0.0), next);
        x = next;
        symbol = sample_index(obs.row(x), &mut obs_rng);
        observations.push(symbol);
        belief = forward_update(&belief, u, symbol, model, obs)?;
        belief_modes.push(belief.mode());
        if x == goal {
            rec.reached_goal = true;
            break;
        }
    }
    Ok(BeliefTrajectory {
        record: rec,
        observations,
        belief_modes,
    })
}

/// Number of states with finite `d(source, .) <= L` for each threshold `L`.
pub fn accessibility_volume(d: &QuasiDistanceField, thresholds: &[f64]) -> Result<Vec<(f64, usize)>> {
    if !matches!(d.mode(), FieldMode::FromSource(_)) {
        return Err(Error::ModeMismatch("accessibility volume needs a from-source field"));
    }
    let mut finite: Vec<f64> = d.values().iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    Ok(thresholds
        .iter()
        .map(|&l| (l, finite.partition_point(|&v| v <= l)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;
    use crate::policy::{argmin_policy, softmax_policy, probabilistic_gradient};
    use crate::quasimetric::{distance_from_source, distance_to_goal, graph_from_model};

    fn chain() -> MdpModel {
        ModelBuilder::new(4, 1)
            .action(0, 0, 1.0, &[(1, 1.0)])
            .action(1, 0, 2.0, &[(2, 1.0)])
            .action(2, 0, 3.0, &[(3, 1.0)])
            .action(3, 0, 0.0, &[(3, 1.0)])
            .goal_stay(3, 0)
            .build()
            .unwrap()
    }

    #[test]
    fn chain_rollout_visits_each_state_once() {
        let m = chain();
        let d = distance_to_goal(&graph_from_model(&m), 3).unwrap();
        let pi = argmin_policy(&m, &d).unwrap();
        let r = rollout(&m, &pi, 0, 3, &RolloutOptions::new(100, DecisionMode::Max, 0)).unwrap();
        assert_eq!(r.states, vec![0, 1, 2, 3]);
        assert_eq!(r.total_cost, 6.0);
        assert!(r.reached_goal);
        assert_eq!(r.states.len(), r.actions.len() + 1);
    }

    #[test]
    fn deterministic_monte_carlo_has_no_spread() {
        let m = chain();
        let d = distance_to_goal(&graph_from_model(&m), 3).unwrap();
        let pi = argmin_policy(&m, &d).unwrap();
        let coords: Vec<Vec<f64>> = (0..4).map(|s| vec![s as f64]).collect();
        let s = monte_carlo(&m, &pi, 0, 3, 20, &RolloutOptions::new(10, DecisionMode::Random, 5), Some(&coords)).unwrap();
        assert_eq!((s.success_rate, s.std_cost, s.mean_cost), (1.0, 0.0, 6.0));
        let traj = s.mean_trajectory.unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj[10], vec![3.0]);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = ModelBuilder::new(3, 2)
            .action(0, 0, 1.0, &[(0, 0.5), (1, 0.5)])
            .action(0, 1, 1.0, &[(2, 0.1), (0, 0.9)])
            .action(1, 0, 1.0, &[(0, 0.3), (2, 0.7)])
            .action(2, 0, 0.0, &[(2, 1.0)])
            .goal_stay(2, 0)
            .build()
            .unwrap();
        let d = distance_to_goal(&graph_from_model(&m), 2).unwrap();
        let pi = softmax_policy(&probabilistic_gradient(&m, &d).unwrap(), 1.0).unwrap();
        let opts = RolloutOptions::new(50, DecisionMode::Random, 42);
        assert_eq!(rollout(&m, &pi, 0, 2, &opts).unwrap(), rollout(&m, &pi, 0, 2, &opts).unwrap());
        let with_belief = belief_rollout(&m, &pi, &ObservationModel::identity(3), 0, 2, &Belief::uniform(3), &opts).unwrap();
        assert_eq!(with_belief.record, rollout(&m, &pi, 0, 2, &opts).unwrap());
    }

    #[test]
    fn accessibility_counts() {
        let m = chain();
        let d = distance_from_source(&graph_from_model(&m), 0).unwrap();
        let v = accessibility_volume(&d, &[0.0, 1.0, 2.9, 3.0, f64::INFINITY]).unwrap();
        assert_eq!(v.iter().map(|e| e.1).collect::<Vec<_>>(), vec![1, 2, 2, 3, 4]);
        let to_goal = distance_to_goal(&graph_from_model(&m), 3).unwrap();
        assert!(accessibility_volume(&to_goal, &[1.0]).is_err());
    }
}
