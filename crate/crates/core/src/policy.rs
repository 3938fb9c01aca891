//! Policies derived from a potential over states.
//!
//! The probabilistic gradient of a potential `d` toward a goal is
//! `D_u d(x) = g(x,u) + sum_z d(z) p(z|x,u) - d(x)`. Deterministic policies take
//! its argmin; stochastic ones weight actions by `exp(-beta * D_u d(x))`.
//! The potential is normally a quasi-distance field, but a Value Iteration
//! result works the same way (its discount multiplies the expectation).

use std::str::FromStr;

use rand::Rng;

use crate::dp::ValueField;
use crate::error::{Error, Result};
use crate::model::{GoalDistribution, MdpModel, ROW_SUM_TOLERANCE};
use crate::quasimetric::{FieldMode, QuasiDistanceField};

/// Default softmax sharpness for unit-scale costs.
pub const DEFAULT_BETA: f64 = 10.0;

/// Relative slack under which two scores count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub enum Potential<'a> {
    Distance(&'a QuasiDistanceField),
    Value(&'a ValueField),
}

impl Potential<'_> {
    fn values(&self) -> &[f64] {
        match self {
            Potential::Distance(d) => d.values(),
            Potential::Value(v) => &v.values,
        }
    }

    fn discount(&self) -> f64 {
        match self {
            Potential::Distance(_) => 1.0,
            Potential::Value(v) => v.gamma,
        }
    }
}

/// `D_u d(x)` for every pair; `None` where the action does not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<Option<f64>>,
}

impl GradientTable {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> Option<f64> {
        self.values[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[Option<f64>] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Builds a table from raw rows, mainly for tests.
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::SpaceMismatch("ragged gradient rows".into()));
        }
        Ok(Self {
            n_states: rows.len(),
            n_actions,
            values: rows.into_iter().flatten().collect(),
        })
    }
}

/// Gradient of an arbitrary potential. Entries are `+inf` when the potential
/// is infinite at `x` or at any successor with positive probability.
pub fn gradient(model: &MdpModel, potential: Potential<'_>) -> Result<GradientTable> {
    let pot = potential.values();
    if pot.len() != model.n_states() {
        return Err(Error::SpaceMismatch(format!(
            "potential has {} entries for {} states",
            pot.len(),
            model.n_states()
        )));
    }
    let discount = potential.discount();
    let (n, m) = (model.n_states(), model.n_actions());
    let mut values = vec![None; n * m];
    for x in 0..n {
        for u in 0..m {
            let row = model.row(x, u);
            let Some(g) = model.cost(x, u) else { continue };
            if row.is_empty() {
                continue;
            }
            let here = pot[x];
            let mut expect = 0.0;
            for (z, p) in row.iter() {
                if p > 0.0 {
                    expect += p * pot[z];
                }
            }
            let grad = if here.is_infinite() || expect.is_infinite() {
                f64::INFINITY
            } else {
                g + discount * expect - here
            };
            values[x * m + u] = Some(grad);
        }
    }
    Ok(GradientTable {
        n_states: n,
        n_actions: m,
        values,
    })
}

/// Gradient of a to-goal quasi-distance field.
pub fn probabilistic_gradient(model: &MdpModel, d: &QuasiDistanceField) -> Result<GradientTable> {
    if !matches!(d.mode(), FieldMode::ToGoal(_)) {
        return Err(Error::ModeMismatch("gradient needs a to-goal field"));
    }
    gradient(model, Potential::Distance(d))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// Row-major `P(u | x)`; `beta` is `None` for mixtures of differing sharpness.
    Stochastic { beta: Option<f64>, probs: Vec<f64> },
    Deterministic(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    kind: PolicyKind,
    no_progress: Vec<bool>,
}

impl PolicyTable {
    pub fn deterministic(n_actions: usize, actions: Vec<usize>) -> Self {
        let n_states = actions.len();
        Self {
            n_states,
            n_actions,
            kind: PolicyKind::Deterministic(actions),
            no_progress: vec![false; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, PolicyKind::Stochastic { .. })
    }

    pub fn beta(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::Stochastic { beta, .. } => beta,
            PolicyKind::Deterministic(_) => None,
        }
    }

    /// Chosen action of a deterministic policy.
    pub fn action(&self, state: usize) -> Option<usize> {
        match &self.kind {
            PolicyKind::Deterministic(a) => Some(a[state]),
            PolicyKind::Stochastic { .. } => None,
        }
    }

    /// Action distribution at `state`; one-hot for deterministic policies.
    pub fn row(&self, state: usize) -> Vec<f64> {
        match &self.kind {
            PolicyKind::Stochastic { probs, .. } => {
                probs[state * self.n_actions..(state + 1) * self.n_actions].to_vec()
            }
            PolicyKind::Deterministic(a) => {
                let mut r = vec![0.0; self.n_actions];
                r[a[state]] = 1.0;
                r
            }
        }
    }

    /// True where no action makes finite progress toward the goal.
    pub fn no_progress(&self, state: usize) -> bool {
        self.no_progress[state]
    }

    /// Deterministic policy picking the most probable action in each row.
    pub fn most_probable(&self) -> PolicyTable {
        let actions = (0..self.n_states).map(|x| argmax(&self.row(x))).collect();
        PolicyTable {
            n_states: self.n_states,
            n_actions: self.n_actions,
            kind: PolicyKind::Deterministic(actions),
            no_progress: self.no_progress.clone(),
        }
    }
}

/// Gibbs policy `P(u|x) = exp(-beta D_u) / sum exp(-beta D_u')` over the
/// actions that exist at `x`. Infinite gradients get probability exactly 0;
/// a state with no finite gradient gets a uniform row and a no-progress flag.
pub fn softmax_policy(grad: &GradientTable, beta: f64) -> Result<PolicyTable> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            reason: "must be positive",
        });
    }
    let (n, m) = (grad.n_states, grad.n_actions);
    let mut probs = vec![0.0; n * m];
    let mut no_progress = vec![false; n];
    for x in 0..n {
        let row = grad.row(x);
        let out = &mut probs[x * m..(x + 1) * m];
        let min = row
            .iter()
            .flatten()
            .copied()
            .filter(|g| g.is_finite())
            .fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            let mut total = 0.0;
            for (o, g) in out.iter_mut().zip(row) {
                if let Some(g) = g.filter(|g| g.is_finite()) {
                    *o = (-beta * (g - min)).exp();
                    total += *o;
                }
            }
            out.iter_mut().for_each(|o| *o /= total);
        } else {
            no_progress[x] = true;
            let present = row.iter().filter(|g| g.is_some()).count();
            if present == 0 {
                out.fill(1.0 / m as f64);
            } else {
                for (o, g) in out.iter_mut().zip(row) {
                    if g.is_some() {
                        *o = 1.0 / present as f64;
                    }
                }
            }
        }
    }
    Ok(PolicyTable {
        n_states: n,
        n_actions: m,
        kind: PolicyKind::Stochastic {
            beta: Some(beta),
            probs,
        },
        no_progress,
    })
}

/// Deterministic argmin of the gradient, ties going to the lowest action id.
/// States without a finite entry are flagged and get their lowest existing action.
pub fn argmin_from_gradient(grad: &GradientTable) -> PolicyTable {
    let (n, m) = (grad.n_states, grad.n_actions);
    let mut actions = vec![0; n];
    let mut no_progress = vec![false; n];
    for x in 0..n {
        let row = grad.row(x);
        let min = row
            .iter()
            .flatten()
            .copied()
            .filter(|g| g.is_finite())
            .fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            let slack = TIE_TOLERANCE * min.abs().max(1.0);
            actions[x] = row
                .iter()
                .position(|g| matches!(g, Some(g) if *g <= min + slack))
                .unwrap_or(0);
        } else {
            no_progress[x] = true;
            actions[x] = row.iter().position(Option::is_some).unwrap_or(0);
        }
    }
    PolicyTable {
        n_states: n,
        n_actions: m,
        kind: PolicyKind::Deterministic(actions),
        no_progress,
    }
}

/// `pi(x) = argmin_u g(x,u) + sum_z d(z) p(z|x,u) - d(x)`.
pub fn argmin_policy(model: &MdpModel, d: &QuasiDistanceField) -> Result<PolicyTable> {
    Ok(argmin_from_gradient(&probabilistic_gradient(model, d)?))
}

/// Mixes goal-conditioned stochastic policies: `P(u|x) = sum_y P(u|x,y) P(y)`.
pub fn marginalize_goals(policies: &[(PolicyTable, usize)], goals: &GoalDistribution) -> Result<PolicyTable> {
    let Some((first, _)) = policies.first() else {
        return Err(Error::SpaceMismatch("no policies to marginalize".into()));
    };
    let (n, m) = (first.n_states, first.n_actions);
    let mut listed: Vec<usize> = policies.iter().map(|p| p.1).collect();
    let mut expected: Vec<usize> = goals.weights().iter().map(|w| w.0).collect();
    listed.sort_unstable();
    expected.sort_unstable();
    if listed != expected {
        return Err(Error::SpaceMismatch(format!(
            "policies cover goals {listed:?}, distribution covers {expected:?}"
        )));
    }
    let mut probs = vec![0.0; n * m];
    let mut no_progress = vec![true; n];
    let mut beta = first.beta();
    for (policy, goal) in policies {
        if policy.n_states != n || policy.n_actions != m {
            return Err(Error::SpaceMismatch("policy tables differ in size".into()));
        }
        let PolicyKind::Stochastic { probs: p, beta: b } = &policy.kind else {
            return Err(Error::ModeMismatch("marginalization needs stochastic policies"));
        };
        if *b != beta {
            beta = None;
        }
        let w = goals.weight_of(*goal).unwrap_or(0.0);
        for (acc, &pi) in probs.iter_mut().zip(p) {
            *acc += w * pi;
        }
        if w > 0.0 {
            for (flag, &np) in no_progress.iter_mut().zip(&policy.no_progress) {
                *flag &= np;
            }
        }
    }
    Ok(PolicyTable {
        n_states: n,
        n_actions: m,
        kind: PolicyKind::Stochastic { beta, probs },
        no_progress,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMode {
    Random,
    Max,
    Mean,
}

impl FromStr for DecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Parse(format!("unknown decision mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: usize,
    /// Probability-weighted mean embedding (mean mode only).
    pub mean: Option<Vec<f64>>,
}

/// Picks an action from a distribution: a random draw, the most probable
/// action, or the embedded mean together with the nearest embedded action.
pub fn decide<R: Rng + ?Sized>(
    row: &[f64],
    mode: DecisionMode,
    embedding: Option<&[Vec<f64>]>,
    rng: &mut R,
) -> Result<Decision> {
    let sum: f64 = row.iter().sum();
    if row.is_empty() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("action row sums to {sum}")));
    }
    match mode {
        DecisionMode::Random => Ok(Decision {
            action: sample_index(row, rng),
            mean: None,
        }),
        DecisionMode::Max => Ok(Decision {
            action: argmax(row),
            mean: None,
        }),
        DecisionMode::Mean => {
            let emb = embedding.ok_or(Error::MissingEmbedding)?;
            if emb.len() != row.len() {
                return Err(Error::SpaceMismatch("embedding size differs from action count".into()));
            }
            let dim = emb.first().map_or(0, Vec::len);
            let mut mean = vec![0.0; dim];
            for (p, e) in row.iter().zip(emb) {
                for (acc, v) in mean.iter_mut().zip(e) {
                    *acc += p * v;
                }
            }
            let mut action = 0;
            let mut best = f64::INFINITY;
            for (u, e) in emb.iter().enumerate() {
                let d2: f64 = e.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best {
                    best = d2;
                    action = u;
                }
            }
            Ok(Decision {
                action,
                mean: Some(mean),
            })
        }
    }
}

/// Inverse-CDF draw over `weights` in index order.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if r < acc {
            return i;
        }
    }
    last
}

/// Index of the largest entry, lowest index on ties.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}
