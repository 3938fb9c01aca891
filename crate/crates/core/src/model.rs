//! Discrete MDP data model: state and action spaces, a sparse transition
//! kernel `p(y | x, u)` and a cost table `g(x, u)`.
//!
//! Transitions are stored in compressed rows keyed by `(state, action)`; a
//! pair with an empty row is treated as an action that does not exist in that
//! state. Models are immutable once built and may be shared across threads.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::error::{check_state, Error, Result};

/// Row sums must equal 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Discretized probabilities below this value are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    count: usize,
    labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            labels: None,
        }
    }

    pub fn labeled<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        Self {
            count: labels.len(),
            labels: Some(labels),
        }
    }

    /// Attaches labels without checking their count; `validate_model` reports
    /// mismatches.
    pub fn with_labels(mut self, labels: Option<Vec<String>>) -> Self {
        self.labels = labels;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of `state`, or its index when the space is unlabeled.
    pub fn name(&self, state: usize) -> String {
        self.labels
            .as_ref()
            .and_then(|l| l.get(state).cloned())
            .unwrap_or_else(|| state.to_string())
    }

    /// Resolves a label or a decimal index to a state id.
    pub fn resolve(&self, key: &str) -> Result<usize> {
        if let Some(pos) = self
            .labels
            .as_ref()
            .and_then(|l| l.iter().position(|s| s == key))
        {
            return Ok(pos);
        }
        let state: usize = key
            .trim()
            .parse()
            .map_err(|_| Error::UnknownLabel(key.to_string()))?;
        check_state(state, self.count)?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    count: usize,
    embedding: Option<Vec<Vec<f64>>>,
}

impl ActionSpace {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Option<Vec<Vec<f64>>>) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn embedding(&self) -> Option<&[Vec<f64>]> {
        self.embedding.as_deref()
    }
}

/// One `(state, action)` row of the transition kernel.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    targets: &'a [u32],
    probs: &'a [f64],
}

impl<'a> Row<'a> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.targets
            .iter()
            .zip(self.probs)
            .map(|(&t, &p)| (t as usize, p))
    }

    pub fn prob_of(&self, target: usize) -> f64 {
        self.iter()
            .filter(|&(t, _)| t == target)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Sparse kernel in compressed-row layout, rows ordered by `state * |U| + action`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
}

impl TransitionModel {
    /// Builds the kernel from `(from, action, to, p)` entries. Entry order
    /// within a row is preserved. `from` and `action` must be in range; `to`
    /// is checked later by `validate_model`.
    pub fn from_entries(
        n_states: usize,
        n_actions: usize,
        entries: &[(usize, usize, usize, f64)],
    ) -> Result<Self> {
        let n_rows = n_states * n_actions;
        let mut counts = vec![0usize; n_rows + 1];
        for &(x, u, to, _) in entries {
            check_state(x, n_states)?;
            if u >= n_actions {
                return Err(Error::ActionOutOfRange {
                    action: u,
                    count: n_actions,
                });
            }
            if to > u32::MAX as usize {
                return Err(Error::StateOutOfRange {
                    state: to,
                    count: n_states,
                });
            }
            counts[x * n_actions + u + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut targets = vec![0u32; entries.len()];
        let mut probs = vec![0.0; entries.len()];
        for &(x, u, to, p) in entries {
            let slot = &mut cursor[x * n_actions + u];
            targets[*slot] = to as u32;
            probs[*slot] = p;
            *slot += 1;
        }
        Ok(Self {
            n_states,
            n_actions,
            offsets,
            targets,
            probs,
        })
    }

    /// Builds the kernel by asking `fill` for every row in `(state, action)`
    /// order. The closure receives an empty buffer to push `(to, p)` into.
    pub fn from_row_fn<F>(n_states: usize, n_actions: usize, mut fill: F) -> Self
    where
        F: FnMut(usize, usize, &mut Vec<(usize, f64)>),
    {
        let mut offsets = Vec::with_capacity(n_states * n_actions + 1);
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut buf = Vec::new();
        offsets.push(0);
        for x in 0..n_states {
            for u in 0..n_actions {
                buf.clear();
                fill(x, u, &mut buf);
                for &(t, p) in &buf {
                    targets.push(t as u32);
                    probs.push(p);
                }
                offsets.push(targets.len());
            }
        }
        targets.shrink_to_fit();
        probs.shrink_to_fit();
        Self {
            n_states,
            n_actions,
            offsets,
            targets,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_entries(&self) -> usize {
        self.targets.len()
    }

    pub fn row(&self, state: usize, action: usize) -> Row<'_> {
        let k = state * self.n_actions + action;
        let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
        Row {
            targets: &self.targets[lo..hi],
            probs: &self.probs[lo..hi],
        }
    }

    /// All entries as `(from, action, to, p)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        (0..self.n_states).flat_map(move |x| {
            (0..self.n_actions).flat_map(move |u| self.row(x, u).iter().map(move |(t, p)| (x, u, t, p)))
        })
    }
}

/// Dense `(state, action)` cost table; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    n_actions: usize,
    values: Vec<Option<f64>>,
}

impl CostModel {
    pub fn empty(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            values: vec![None; n_states * n_actions],
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize, cost: f64) -> Self {
        Self {
            n_actions,
            values: vec![Some(cost); n_states * n_actions],
        }
    }

    pub fn get(&self, state: usize, action: usize) -> Option<f64> {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, cost: f64) {
        self.values[state * self.n_actions + action] = Some(cost);
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n_actions: self.n_actions,
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    states: StateSpace,
    actions: ActionSpace,
    transitions: TransitionModel,
    costs: CostModel,
    goal_stay: BTreeSet<(usize, usize)>,
}

impl MdpModel {
    /// Assembles a model. Only the table dimensions are checked here; the
    /// remaining invariants are reported by [`validate_model`].
    pub fn new(
        states: StateSpace,
        actions: ActionSpace,
        transitions: TransitionModel,
        costs: CostModel,
        goal_stay: BTreeSet<(usize, usize)>,
    ) -> Result<Self> {
        let (n, m) = (states.count(), actions.count());
        if transitions.n_states() != n || transitions.n_actions() != m {
            return Err(Error::SpaceMismatch(format!(
                "transition table is {}x{}, spaces are {}x{}",
                transitions.n_states(),
                transitions.n_actions(),
                n,
                m
            )));
        }
        if costs.len() != n * m || costs.n_actions != m {
            return Err(Error::SpaceMismatch(format!(
                "cost table has {} entries, expected {}",
                costs.len(),
                n * m
            )));
        }
        Ok(Self {
            states,
            actions,
            transitions,
            costs,
            goal_stay,
        })
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn transitions(&self) -> &TransitionModel {
        &self.transitions
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn goal_stay_pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.goal_stay
    }

    pub fn n_states(&self) -> usize {
        self.states.count()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.count()
    }

    pub fn row(&self, state: usize, action: usize) -> Row<'_> {
        self.transitions.row(state, action)
    }

    pub fn cost(&self, state: usize, action: usize) -> Option<f64> {
        self.costs.get(state, action)
    }

    pub fn is_goal_stay(&self, state: usize, action: usize) -> bool {
        self.goal_stay.contains(&(state, action))
    }

    /// Actions with at least one transition entry at `state`.
    pub fn available_actions(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_actions()).filter(move |&u| !self.row(state, u).is_empty())
    }

    /// Copy with every cost multiplied by `factor`.
    pub fn scale_costs(&self, factor: f64) -> MdpModel {
        MdpModel {
            costs: self.costs.map(|g| g * factor),
            ..self.clone()
        }
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        check_state(state, self.n_states())
    }
}

/// Incremental construction of small hand-written models.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    n_states: usize,
    n_actions: usize,
    labels: Option<Vec<String>>,
    embedding: Option<Vec<Vec<f64>>>,
    entries: Vec<(usize, usize, usize, f64)>,
    costs: Vec<(usize, usize, f64)>,
    goal_stay: BTreeSet<(usize, usize)>,
}

impl ModelBuilder {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            labels: None,
            embedding: None,
            entries: Vec::new(),
            costs: Vec::new(),
            goal_stay: BTreeSet::new(),
        }
    }

    pub fn labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Self {
        self.labels = Some(labels.into_iter().map(Into::into).collect());
        self
    }

    pub fn embedding(mut self, embedding: Vec<Vec<f64>>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn transition(mut self, from: usize, action: usize, to: usize, p: f64) -> Self {
        self.entries.push((from, action, to, p));
        self
    }

    pub fn cost(mut self, state: usize, action: usize, g: f64) -> Self {
        self.costs.push((state, action, g));
        self
    }

    /// Sets the cost and all outcomes of one `(state, action)` pair.
    pub fn action(mut self, state: usize, action: usize, g: f64, outcomes: &[(usize, f64)]) -> Self {
        self.costs.push((state, action, g));
        self.entries
            .extend(outcomes.iter().map(|&(to, p)| (state, action, to, p)));
        self
    }

    pub fn goal_stay(mut self, state: usize, action: usize) -> Self {
        self.goal_stay.insert((state, action));
        self
    }

    pub fn build(self) -> Result<MdpModel> {
        let transitions = TransitionModel::from_entries(self.n_states, self.n_actions, &self.entries)?;
        let mut costs = CostModel::empty(self.n_states, self.n_actions);
        for (x, u, g) in self.costs {
            check_state(x, self.n_states)?;
            if u >= self.n_actions {
                return Err(Error::ActionOutOfRange {
                    action: u,
                    count: self.n_actions,
                });
            }
            costs.set(x, u, g);
        }
        MdpModel::new(
            StateSpace::new(self.n_states).with_labels(self.labels),
            ActionSpace::new(self.n_actions).with_embedding(self.embedding),
            transitions,
            costs,
            self.goal_stay,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    StateCount,
    ActionCount,
    LabelCount,
    LabelUnique,
    EmbeddingCount,
    EmbeddingDimension,
    TargetRange,
    ProbabilityRange,
    DuplicateTarget,
    RowSum,
    MissingCost,
    PositiveCost,
    GoalStayRange,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::StateCount => "state-count",
            Rule::ActionCount => "action-count",
            Rule::LabelCount => "label-count",
            Rule::LabelUnique => "label-unique",
            Rule::EmbeddingCount => "embedding-count",
            Rule::EmbeddingDimension => "embedding-dimension",
            Rule::TargetRange => "target-range",
            Rule::ProbabilityRange => "probability-range",
            Rule::DuplicateTarget => "duplicate-target",
            Rule::RowSum => "row-sum",
            Rule::MissingCost => "missing-cost",
            Rule::PositiveCost => "positive-cost",
            Rule::GoalStayRange => "goal-stay-range",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub detail: String,
}

impl Violation {
    fn new(rule: Rule, state: Option<usize>, action: Option<usize>, detail: impl Into<String>) -> Self {
        Self {
            rule,
            state,
            action,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        match (self.state, self.action) {
            (Some(x), Some(u)) => write!(f, " at (state {x}, action {u})")?,
            (Some(x), None) => write!(f, " at state {x}")?,
            (None, Some(u)) => write!(f, " at action {u}")?,
            (None, None) => {}
        }
        write!(f, ": {}", self.detail)
    }
}

/// Checks every model invariant. An empty list means the model is valid.
pub fn validate_model(model: &MdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, m) = (model.n_states(), model.n_actions());
    if n == 0 {
        out.push(Violation::new(Rule::StateCount, None, None, "state count must be at least 1"));
    }
    if m == 0 {
        out.push(Violation::new(Rule::ActionCount, None, None, "action count must be at least 1"));
    }
    if let Some(labels) = model.states.labels() {
        if labels.len() != n {
            out.push(Violation::new(
                Rule::LabelCount,
                None,
                None,
                format!("{} labels for {} states", labels.len(), n),
            ));
        }
        let mut seen = HashSet::new();
        for (i, l) in labels.iter().enumerate() {
            if !seen.insert(l.as_str()) {
                out.push(Violation::new(Rule::LabelUnique, Some(i), None, format!("duplicate label {l:?}")));
            }
        }
    }
    if let Some(emb) = model.actions.embedding() {
        if emb.len() != m {
            out.push(Violation::new(
                Rule::EmbeddingCount,
                None,
                None,
                format!("{} embedding vectors for {} actions", emb.len(), m),
            ));
        }
        if let Some(first) = emb.first() {
            for (u, v) in emb.iter().enumerate() {
                if v.len() != first.len() {
                    out.push(Violation::new(
                        Rule::EmbeddingDimension,
                        None,
                        Some(u),
                        format!("dimension {} differs from {}", v.len(), first.len()),
                    ));
                }
            }
        }
    }

    let mut seen = HashSet::new();
    for x in 0..n {
        for u in 0..m {
            let row = model.row(x, u);
            if row.is_empty() {
                continue;
            }
            let mut sum = 0.0;
            seen.clear();
            for (to, p) in row.iter() {
                if to >= n {
                    out.push(Violation::new(
                        Rule::TargetRange,
                        Some(x),
                        Some(u),
                        format!("target state {to} out of range"),
                    ));
                }
                if !(p > 0.0 && p <= 1.0) {
                    out.push(Violation::new(
                        Rule::ProbabilityRange,
                        Some(x),
                        Some(u),
                        format!("probability {p} to state {to} outside (0, 1]"),
                    ));
                }
                if !seen.insert(to) {
                    out.push(Violation::new(
                        Rule::DuplicateTarget,
                        Some(x),
                        Some(u),
                        format!("target state {to} listed twice"),
                    ));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || !sum.is_finite() {
                out.push(Violation::new(
                    Rule::RowSum,
                    Some(x),
                    Some(u),
                    format!("probabilities sum to {sum}"),
                ));
            }
            if model.cost(x, u).is_none() {
                out.push(Violation::new(Rule::MissingCost, Some(x), Some(u), "no cost entry"));
            }
        }
    }

    for x in 0..n {
        for u in 0..m {
            let Some(g) = model.cost(x, u) else { continue };
            let ok = if model.is_goal_stay(x, u) {
                g >= 0.0 && g.is_finite()
            } else {
                g > 0.0 && g.is_finite()
            };
            if !ok {
                out.push(Violation::new(
                    Rule::PositiveCost,
                    Some(x),
                    Some(u),
                    format!("cost {g} must be finite and > 0 (>= 0 on goal-stay pairs)"),
                ));
            }
        }
    }

    for &(x, u) in &model.goal_stay {
        if x >= n || u >= m {
            out.push(Violation::new(
                Rule::GoalStayRange,
                Some(x),
                Some(u),
                "goal-stay pair out of range",
            ));
        }
    }
    out
}

/// Returns `Err(InvalidModel)` when [`validate_model`] finds violations.
pub fn ensure_valid(model: &MdpModel) -> Result<()> {
    let violations = validate_model(model);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(violations))
    }
}

/// Rescales costs so that the smallest strictly positive cost is 1.
/// Returns the rescaled model and the multiplier applied.
pub fn normalize_costs(model: &MdpModel) -> Result<(MdpModel, f64)> {
    ensure_valid(model)?;
    let min = model
        .costs
        .values
        .iter()
        .flatten()
        .copied()
        .filter(|&g| g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NoPositiveCosts);
    }
    let scale = 1.0 / min;
    if scale == 1.0 {
        return Ok((model.clone(), 1.0));
    }
    Ok((model.scale_costs(scale), scale))
}

/// A goal given as a probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDistribution {
    weights: Vec<(usize, f64)>,
}

impl GoalDistribution {
    pub fn new(weights: Vec<(usize, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no goals".into()));
        }
        let mut seen = HashSet::new();
        for &(s, w) in &weights {
            if !(w >= 0.0) {
                return Err(Error::InvalidDistribution(format!("negative weight {w} for state {s}")));
            }
            if !seen.insert(s) {
                return Err(Error::InvalidDistribution(format!("state {s} listed twice")));
            }
        }
        let sum: f64 = weights.iter().map(|w| w.1).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn weight_of(&self, state: usize) -> Option<f64> {
        self.weights.iter().find(|w| w.0 == state).map(|w| w.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoalSpec {
    State(usize),
    Distribution(GoalDistribution),
}

impl GoalSpec {
    pub fn as_distribution(&self) -> GoalDistribution {
        match self {
            GoalSpec::State(s) => GoalDistribution {
                weights: vec![(*s, 1.0)],
            },
            GoalSpec::Distribution(d) => d.clone(),
        }
    }
}

/// Drops entries below [`PRUNE_THRESHOLD`] and rescales the rest to sum to 1.
pub fn prune_and_normalize(row: &mut Vec<(usize, f64)>) {
    let total: f64 = row.iter().map(|e| e.1).sum();
    if total <= 0.0 {
        row.clear();
        return;
    }
    row.retain(|e| e.1 / total >= PRUNE_THRESHOLD);
    let kept: f64 = row.iter().map(|e| e.1).sum();
    for e in row.iter_mut() {
        e.1 /= kept;
    }
}
