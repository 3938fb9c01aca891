//! Forward filtering over hidden states and belief-weighted action choice.

use serde::Serialize;

use crate::error::{check_state, Error, Result};
use crate::model::{MdpModel, ROW_SUM_TOLERANCE};
use crate::policy::PolicyTable;

/// `P(o | x)` over a finite alphabet `0..symbols`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationModel {
    symbols: usize,
    rows: Vec<Vec<f64>>,
}

impl ObservationModel {
    pub fn new(symbols: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (x, row) in rows.iter().enumerate() {
            if row.len() != symbols {
                return Err(Error::InvalidDistribution(format!(
                    "observation row {x} has {} entries for {symbols} symbols",
                    row.len()
                )));
            }
            check_distribution(row, &format!("observation row {x}"))?;
        }
        Ok(Self { symbols, rows })
    }

    /// Every state emits its own id.
    pub fn identity(n_states: usize) -> Self {
        let rows = (0..n_states)
            .map(|x| {
                let mut r = vec![0.0; n_states];
                r[x] = 1.0;
                r
            })
            .collect();
        Self {
            symbols: n_states,
            rows,
        }
    }

    /// Reports the true state with probability `accuracy` and any other
    /// state uniformly otherwise.
    pub fn noisy_identity(n_states: usize, accuracy: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) || n_states < 2 {
            return Err(Error::InvalidParameter {
                name: "accuracy",
                value: accuracy,
                reason: "must lie in [0, 1] with at least 2 states",
            });
        }
        let miss = (1.0 - accuracy) / (n_states - 1) as f64;
        let rows = (0..n_states)
            .map(|x| (0..n_states).map(|o| if o == x { accuracy } else { miss }).collect())
            .collect();
        Self::new(n_states, rows)
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn likelihood(&self, state: usize, symbol: usize) -> f64 {
        self.rows[state][symbol]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state]
    }
}

/// Posterior over states.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, "belief")?;
        Ok(Self(probs))
    }

    pub fn uniform(n_states: usize) -> Self {
        Self(vec![1.0 / n_states as f64; n_states])
    }

    pub fn point(n_states: usize, state: usize) -> Result<Self> {
        check_state(state, n_states)?;
        let mut b = vec![0.0; n_states];
        b[state] = 1.0;
        Ok(Self(b))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable state, lowest id on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (x, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = x;
            }
        }
        best
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || v.is_infinite()) {
        return Err(Error::InvalidDistribution(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Multiplies by the likelihood of `symbol` and renormalizes.
pub fn observe(belief: &Belief, symbol: usize, obs: &ObservationModel) -> Result<Belief> {
    if obs.n_states() != belief.len() {
        return Err(Error::SpaceMismatch(format!(
            "observation model covers {} states, belief {}",
            obs.n_states(),
            belief.len()
        )));
    }
    if symbol >= obs.symbols {
        return Err(Error::InconsistentObservation { symbol });
    }
    let mut next: Vec<f64> = belief
        .0
        .iter()
        .enumerate()
        .map(|(x, &b)| b * obs.likelihood(x, symbol))
        .collect();
    normalize(&mut next, symbol)?;
    Ok(Belief(next))
}

/// One filter step: `new(x) ~ P(o|x) sum_y p(x|y,u) old(y)`.
///
/// Mass on a state where `action` has no transitions stays where it is.
pub fn forward_update(
    belief: &Belief,
    action: usize,
    symbol: usize,
    model: &MdpModel,
    obs: &ObservationModel,
) -> Result<Belief> {
    if belief.len() != model.n_states() {
        return Err(Error::SpaceMismatch(format!(
            "belief covers {} states, model {}",
            belief.len(),
            model.n_states()
        )));
    }
    if action >= model.n_actions() {
        return Err(Error::ActionOutOfRange {
            action,
            count: model.n_actions(),
        });
    }
    let mut predicted = vec![0.0; belief.len()];
    for (y, &b) in belief.0.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let row = model.row(y, action);
        if row.is_empty() {
            predicted[y] += b;
        }
        for (x, p) in row.iter() {
            predicted[x] += p * b;
        }
    }
    observe(&Belief(predicted), symbol, obs)
}

fn normalize(v: &mut [f64], symbol: usize) -> Result<()> {
    let z: f64 = v.iter().sum();
    if !(z > 0.0) {
        return Err(Error::InconsistentObservation { symbol });
    }
    v.iter_mut().for_each(|p| *p /= z);
    Ok(())
}

/// `P(u) = sum_x b(x) P(u|x)`. Deterministic policies count as one-hot rows.
pub fn action_distribution(belief: &Belief, policy: &PolicyTable) -> Result<Vec<f64>> {
    if belief.len() != policy.n_states() {
        return Err(Error::SpaceMismatch(format!(
            "belief covers {} states, policy {}",
            belief.len(),
            policy.n_states()
        )));
    }
    let mut out = vec![0.0; policy.n_actions()];
    for (x, &b) in belief.0.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(policy.row(x)) {
            *o += b * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;
    use crate::policy::{softmax_policy, GradientTable};

    fn sticky() -> MdpModel {
        ModelBuilder::new(2, 1)
            .action(0, 0, 1.0, &[(0, 0.8), (1, 0.2)])
            .action(1, 0, 1.0, &[(1, 0.8), (0, 0.2)])
            .build()
            .unwrap()
    }

    #[test]
    fn hand_bayes() {
        let obs = ObservationModel::noisy_identity(2, 0.9).unwrap();
        let b = forward_update(&Belief::uniform(2), 0, 0, &sticky(), &obs).unwrap();
        assert!((b.probs()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn identity_observation_tracks_a_deterministic_chain() {
        let m = ModelBuilder::new(3, 1)
            .action(0, 0, 1.0, &[(1, 1.0)])
            .action(1, 0, 1.0, &[(2, 1.0)])
            .action(2, 0, 1.0, &[(0, 1.0)])
            .build()
            .unwrap();
        let obs = ObservationModel::identity(3);
        let mut b = Belief::point(3, 0).unwrap();
        for t in 1..7 {
            b = forward_update(&b, 0, t % 3, &m, &obs).unwrap();
            assert_eq!(b, Belief::point(3, t % 3).unwrap());
        }
        assert!(matches!(
            forward_update(&b, 0, 2, &m, &obs),
            Err(Error::InconsistentObservation { symbol: 2 })
        ));
    }

    #[test]
    fn flat_likelihood_is_pure_prediction() {
        let obs = ObservationModel::new(1, vec![vec![1.0], vec![1.0]]).unwrap();
        let b = forward_update(&Belief::new(vec![1.0, 0.0]).unwrap(), 0, 0, &sticky(), &obs).unwrap();
        assert!((b.probs()[0] - 0.8).abs() < 1e-15 && (b.probs()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn missing_action_keeps_mass() {
        let m = ModelBuilder::new(2, 2)
            .action(0, 0, 1.0, &[(1, 1.0)])
            .action(1, 1, 1.0, &[(0, 1.0)])
            .build()
            .unwrap();
        let obs = ObservationModel::new(1, vec![vec![1.0], vec![1.0]]).unwrap();
        let b = forward_update(&Belief::new(vec![0.5, 0.5]).unwrap(), 0, 0, &m, &obs).unwrap();
        assert_eq!(b.probs(), &[0.0, 1.0]);
    }

    #[test]
    fn action_marginals() {
        let rows = |r: &[[f64; 2]]| {
            let g = r
                .iter()
                .map(|p| p.iter().map(|&v| Some(-v.ln())).collect())
                .collect();
            softmax_policy(&GradientTable::from_rows(g).unwrap(), 1.0).unwrap()
        };
        let pi = rows(&[[0.8, 0.2], [0.4, 0.6]]);
        let p = action_distribution(&Belief::new(vec![0.3, 0.7]).unwrap(), &pi).unwrap();
        assert!((p[0] - 0.52).abs() < 1e-12 && (p[1] - 0.48).abs() < 1e-12);
        let point = action_distribution(&Belief::point(2, 1).unwrap(), &pi).unwrap();
        assert_eq!(point, pi.row(1));
        let det = PolicyTable::deterministic(2, vec![0, 1]);
        assert_eq!(action_distribution(&Belief::uniform(2), &det).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(ObservationModel::new(2, vec![vec![0.5, 0.4]]).is_err());
        assert!(ObservationModel::new(2, vec![vec![1.0]]).is_err());
        assert!(Belief::new(vec![0.5, -0.1, 0.6]).is_err());
    }
}
