//! Under-actuated pendulum in dimensionless form, `theta'' = u + sin(theta)`,
//! with `theta = 0` upright. The torque bound is below 1, so the pendulum
//! cannot be lifted directly and has to swing up.

use serde::{Deserialize, Serialize};

use crate::domains::grid::{discretize_gaussian, Axis};
use crate::error::{Error, Result};
use crate::model::{ActionSpace, CostModel, MdpModel, StateSpace, TransitionModel, PRUNE_THRESHOLD};
use crate::policy::PolicyTable;
use crate::sim::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub n_theta: usize,
    pub n_thetadot: usize,
    pub n_actions: usize,
    pub u_max: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub dt: f64,
    pub thetadot_range: f64,
}

impl Default for PendulumParams {
    /// 51 x 51 states, 21 torques, sigma 0.2.
    fn default() -> Self {
        Self {
            n_theta: 51,
            n_thetadot: 51,
            n_actions: 21,
            u_max: 0.5,
            sigma_x: 0.2,
            sigma_y: 0.2,
            dt: 0.3,
            thetadot_range: 3.0,
        }
    }
}

impl PendulumParams {
    /// Square `n x n` grid with the other parameters at their defaults.
    pub fn square(n: usize) -> Self {
        Self {
            n_theta: n,
            n_thetadot: n,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_theta", self.n_theta),
            ("n_thetadot", self.n_thetadot),
            ("n_actions", self.n_actions),
        ] {
            if n < 3 || n % 2 == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    value: n as f64,
                    reason: "must be odd and at least 3",
                });
            }
        }
        let positive = [
            ("u_max", self.u_max),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("dt", self.dt),
            ("thetadot_range", self.thetadot_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be positive and finite",
                });
            }
        }
        if self.u_max >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "u_max",
                value: self.u_max,
                reason: "must stay below 1",
            });
        }
        Ok(())
    }
}

/// A built pendulum model with its grids. State `(i, j)` (angle index,
/// velocity index) has id `i * n_thetadot + j`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
    pub theta: Axis,
    pub thetadot: Axis,
    pub torques: Vec<f64>,
    pub model: MdpModel,
}

impl Pendulum {
    pub fn state(&self, i: usize, j: usize) -> usize {
        i * self.params.n_thetadot + j
    }

    pub fn indices(&self, state: usize) -> (usize, usize) {
        (state / self.params.n_thetadot, state % self.params.n_thetadot)
    }

    /// Grid state nearest to a continuous `(theta, thetadot)`.
    pub fn nearest(&self, theta: f64, thetadot: f64) -> usize {
        self.state(self.theta.nearest(theta), self.thetadot.nearest(thetadot))
    }

    /// Upright and at rest.
    pub fn goal(&self) -> usize {
        self.nearest(0.0, 0.0)
    }

    /// Hanging down and at rest. `pi` is not on the grid, so this is the
    /// closest cell.
    pub fn start(&self) -> usize {
        self.nearest(std::f64::consts::PI, 0.0)
    }

    /// Index of the zero torque.
    pub fn zero_torque(&self) -> usize {
        self.params.n_actions / 2
    }

    /// Continuous state after one step of the mean dynamics.
    pub fn step(&self, theta: f64, thetadot: f64, u: f64) -> (f64, f64) {
        let dt = self.params.dt;
        let acc = u + theta.sin();
        let r = self.params.thetadot_range;
        (
            self.theta.wrap(theta + dt * thetadot + 0.5 * dt * dt * acc),
            (thetadot + dt * acc).clamp(-r, r),
        )
    }

    /// Drives the noise-free continuous dynamics from `(theta, thetadot)`,
    /// reading the policy at the nearest grid cell (its most probable action
    /// for stochastic policies). Stops when the nearest cell is the goal,
    /// after at least one step, or after `max_steps`.
    pub fn noise_free_rollout(
        &self,
        policy: &PolicyTable,
        theta: f64,
        thetadot: f64,
        max_steps: usize,
    ) -> Result<PendulumRollout> {
        if policy.n_states() != self.model.n_states() || policy.n_actions() != self.params.n_actions {
            return Err(Error::SpaceMismatch("policy does not match the pendulum grid".into()));
        }
        let greedy = policy.most_probable();
        let goal = self.goal();
        let (mut th, mut om) = (self.theta.wrap(theta), thetadot);
        let mut cell = self.nearest(th, om);
        let mut record = TrajectoryRecord {
            states: vec![cell],
            actions: Vec::new(),
            step_costs: Vec::new(),
            reached_goal: false,
            total_cost: 0.0,
        };
        let mut path = vec![[th, om]];
        for _ in 0..max_steps {
            let u = greedy.action(cell).unwrap_or(self.zero_torque());
            let g = self.model.cost(cell, u).unwrap_or(0.0);
            (th, om) = self.step(th, om, self.torques[u]);
            cell = self.nearest(th, om);
            record.actions.push(u);
            record.step_costs.push(g);
            record.total_cost += g;
            record.states.push(cell);
            path.push([th, om]);
            if cell == goal {
                record.reached_goal = true;
                break;
            }
        }
        Ok(PendulumRollout { record, path })
    }

    /// `[theta, thetadot]` of every state.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        (0..self.model.n_states())
            .map(|s| {
                let (i, j) = self.indices(s);
                vec![self.theta.point(i), self.thetadot.point(j)]
            })
            .collect()
    }
}

/// A continuous-state run: grid cells in `record`, exact states in `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumRollout {
    pub record: TrajectoryRecord,
    pub path: Vec<[f64; 2]>,
}

/// Discrete Gaussian kernel around the semi-implicit step
/// `theta + dt thetadot + dt^2 (u + sin theta) / 2`,
/// `thetadot + dt (u + sin theta)`. Every pair costs 1 except zero torque
/// at the upright rest state, which is the goal-stay pair.
pub fn build_pendulum(params: &PendulumParams) -> Result<Pendulum> {
    params.validate()?;
    let p = *params;
    let theta = Axis::angle(p.n_theta)?;
    let thetadot = Axis::closed(-p.thetadot_range, p.thetadot_range, p.n_thetadot)?;
    let torques = Axis::closed(-p.u_max, p.u_max, p.n_actions)?.points();
    let n = p.n_theta * p.n_thetadot;

    let mut failure = None;
    let transitions = TransitionModel::from_row_fn(n, p.n_actions, |s, a, row| {
        let (i, j) = (s / p.n_thetadot, s % p.n_thetadot);
        let (x, y) = (theta.point(i), thetadot.point(j));
        let acc = torques[a] + x.sin();
        let mu_x = x + p.dt * y + 0.5 * p.dt * p.dt * acc;
        let mu_y = y + p.dt * acc;
        let (gx, gy) = match (
            discretize_gaussian(mu_x, p.sigma_x, &theta),
            discretize_gaussian(mu_y, p.sigma_y, &thetadot),
        ) {
            (Ok(gx), Ok(gy)) => (gx, gy),
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                return;
            }
        };
        product_row(&gx.probs, &gy.probs, row);
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let mut costs = CostModel::uniform(n, p.n_actions, 1.0);
    let goal = p.n_theta / 2 * p.n_thetadot + p.n_thetadot / 2;
    let zero = p.n_actions / 2;
    costs.set(goal, zero, 0.0);
    let model = MdpModel::new(
        StateSpace::new(n),
        ActionSpace::new(p.n_actions).with_embedding(Some(torques.iter().map(|&u| vec![u]).collect())),
        transitions,
        costs,
        [(goal, zero)].into_iter().collect(),
    )?;
    Ok(Pendulum {
        params: p,
        theta,
        thetadot,
        torques,
        model,
    })
}

/// Outer product of two axis distributions flattened row-major, pruned and
/// renormalized.
fn product_row(a: &[f64], b: &[f64], row: &mut Vec<(usize, f64)>) {
    let mut total = 0.0;
    for (i, &pa) in a.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (j, &pb) in b.iter().enumerate() {
            let q = pa * pb;
            if q >= PRUNE_THRESHOLD {
                row.push((i * b.len() + j, q));
                total += q;
            }
        }
    }
    row.iter_mut().for_each(|e| e.1 /= total);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    fn small() -> Pendulum {
        build_pendulum(&PendulumParams::square(11)).unwrap()
    }

    #[test]
    fn small_pendulum_validates() {
        let p = small();
        assert!(validate_model(&p.model).is_empty());
        assert_eq!(p.model.n_states(), 121);
        assert!(p.model.is_goal_stay(p.goal(), p.zero_torque()));
        assert_eq!(p.theta.point(p.indices(p.goal()).0), 0.0);
    }

    #[test]
    fn parameters_are_checked() {
        let mut bad = PendulumParams::square(11);
        bad.u_max = 1.0;
        assert!(build_pendulum(&bad).is_err());
        let mut even = PendulumParams::square(10);
        assert!(build_pendulum(&even).is_err());
        even.n_theta = 11;
        even.n_thetadot = 11;
        even.sigma_x = 0.0;
        assert!(build_pendulum(&even).is_err());
    }

    #[test]
    fn seam_states_keep_all_their_mass() {
        let p = small();
        let last = p.params.n_theta - 1;
        for j in 0..p.params.n_thetadot {
            for s in [p.state(0, j), p.state(last, j)] {
                for u in 0..p.params.n_actions {
                    let total: f64 = p.model.row(s, u).iter().map(|e| e.1).sum();
                    assert!((total - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn resting_upright_stays_upright() {
        let p = small();
        let (th, om) = p.step(0.0, 0.0, 0.0);
        assert_eq!((th, om), (0.0, 0.0));
        let pi = PolicyTable::deterministic(p.params.n_actions, vec![p.zero_torque(); p.model.n_states()]);
        let run = p.noise_free_rollout(&pi, 0.0, 0.0, 5).unwrap();
        assert!(run.record.reached_goal);
        assert_eq!(run.record.steps(), 1);
    }

    #[test]
    fn narrow_noise_at_rest_near_pi_barely_moves() {
        let params = PendulumParams {
            sigma_x: 1e-3,
            sigma_y: 1e-3,
            ..PendulumParams::square(11)
        };
        let p = build_pendulum(&params).unwrap();
        let s = p.start();
        let row = p.model.row(s, p.zero_torque());
        // The hanging cell sits half a cell off pi, so gravity nudges it but
        // not past the neighbouring cells.
        let (i, j) = p.indices(s);
        for (z, _) in row.iter() {
            let (zi, zj) = p.indices(z);
            assert!(zi.abs_diff(i) <= 1 || zi.abs_diff(i) == p.params.n_theta - 1);
            assert!(zj.abs_diff(j) <= 1);
        }
    }
}
