//! Dubins car: constant forward speed, bounded turn rate, noisy pose.

use serde::{Deserialize, Serialize};

use crate::domains::grid::{discretize_gaussian, Axis};
use crate::error::{Error, Result};
use crate::model::{ActionSpace, CostModel, MdpModel, StateSpace, TransitionModel, PRUNE_THRESHOLD};

/// Half-width of the square position range.
pub const EXTENT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsParams {
    pub n_x: usize,
    pub n_y: usize,
    pub n_theta: usize,
    pub n_actions: usize,
    pub u_l: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
    pub dt: f64,
}

impl Default for DubinsParams {
    /// 51^3 poses, 11 turn rates, sigma 0.05, dt 0.25.
    fn default() -> Self {
        Self {
            n_x: 51,
            n_y: 51,
            n_theta: 51,
            n_actions: 11,
            u_l: 1.0,
            sigma_x: 0.05,
            sigma_y: 0.05,
            sigma_theta: 0.05,
            dt: 0.25,
        }
    }
}

impl DubinsParams {
    /// `n` points on every axis, other parameters at their defaults.
    pub fn cube(n: usize) -> Self {
        Self {
            n_x: n,
            n_y: n,
            n_theta: n,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("n_x", self.n_x),
            ("n_y", self.n_y),
            ("n_theta", self.n_theta),
            ("n_actions", self.n_actions),
        ] {
            if n < 3 {
                return Err(Error::InvalidParameter {
                    name,
                    value: n as f64,
                    reason: "must be at least 3",
                });
            }
        }
        if (self.n_x * self.n_y * self.n_theta) as u64 > u32::MAX as u64 {
            return Err(Error::TooLarge {
                states: self.n_x * self.n_y * self.n_theta,
                cap: u32::MAX as usize,
            });
        }
        for (name, v) in [
            ("u_l", self.u_l),
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_theta", self.sigma_theta),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be positive and finite",
                });
            }
        }
        Ok(())
    }
}

/// A built Dubins model. Pose `(i, j, k)` has id `(i * n_y + j) * n_theta + k`.
#[derive(Debug, Clone)]
pub struct Dubins {
    pub params: DubinsParams,
    pub x: Axis,
    pub y: Axis,
    pub theta: Axis,
    pub turn_rates: Vec<f64>,
    pub model: MdpModel,
}

impl Dubins {
    pub fn state(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.params.n_y + j) * self.params.n_theta + k
    }

    pub fn indices(&self, state: usize) -> (usize, usize, usize) {
        let p = &self.params;
        (state / (p.n_y * p.n_theta), state / p.n_theta % p.n_y, state % p.n_theta)
    }

    pub fn nearest(&self, x: f64, y: f64, theta: f64) -> usize {
        self.state(self.x.nearest(x), self.y.nearest(y), self.theta.nearest(theta))
    }

    pub fn origin(&self) -> usize {
        self.nearest(0.0, 0.0, 0.0)
    }

    /// The pose reflected through the x axis, `(x, -y, -theta)`.
    pub fn mirror(&self, state: usize) -> usize {
        let (i, j, k) = self.indices(state);
        let p = &self.params;
        self.state(i, p.n_y - 1 - j, p.n_theta - 1 - k)
    }

    /// `[x, y, theta]` of every pose.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        (0..self.model.n_states())
            .map(|s| {
                let (i, j, k) = self.indices(s);
                vec![self.x.point(i), self.y.point(j), self.theta.point(k)]
            })
            .collect()
    }
}

/// Product of three discrete Gaussians around `x + u_l cos(theta) dt`,
/// `y + u_l sin(theta) dt`, `theta + u dt`. Every pair costs `dt`, so
/// distances are travel times.
pub fn build_dubins(params: &DubinsParams) -> Result<Dubins> {
    params.validate()?;
    let p = *params;
    let x_axis = Axis::closed(-EXTENT, EXTENT, p.n_x)?;
    let y_axis = Axis::closed(-EXTENT, EXTENT, p.n_y)?;
    let theta_axis = Axis::angle(p.n_theta)?;
    let turn_rates = Axis::closed(-1.0, 1.0, p.n_actions)?.points();
    let n = p.n_x * p.n_y * p.n_theta;

    // The x and y kernels only depend on (position, heading), the heading
    // kernel on (heading, action); tabulate them once.
    let mut failure = None;
    let mut kernel = |mu: f64, sigma: f64, axis: &Axis| -> Vec<(usize, f64)> {
        match discretize_gaussian(mu, sigma, axis) {
            Ok(d) => d.support().collect(),
            Err(e) => {
                failure.get_or_insert(e);
                Vec::new()
            }
        }
    };
    let kx: Vec<Vec<(usize, f64)>> = (0..p.n_x * p.n_theta)
        .map(|ik| {
            let (i, k) = (ik / p.n_theta, ik % p.n_theta);
            let mu = x_axis.point(i) + p.u_l * theta_axis.point(k).cos() * p.dt;
            kernel(mu, p.sigma_x, &x_axis)
        })
        .collect();
    let ky: Vec<Vec<(usize, f64)>> = (0..p.n_y * p.n_theta)
        .map(|jk| {
            let (j, k) = (jk / p.n_theta, jk % p.n_theta);
            let mu = y_axis.point(j) + p.u_l * theta_axis.point(k).sin() * p.dt;
            kernel(mu, p.sigma_y, &y_axis)
        })
        .collect();
    let kt: Vec<Vec<(usize, f64)>> = (0..p.n_theta * p.n_actions)
        .map(|ka| {
            let (k, a) = (ka / p.n_actions, ka % p.n_actions);
            let mu = theta_axis.point(k) + turn_rates[a] * p.dt;
            kernel(mu, p.sigma_theta, &theta_axis)
        })
        .collect();
    if let Some(e) = failure {
        return Err(e);
    }

    let transitions = TransitionModel::from_row_fn(n, p.n_actions, |s, a, row| {
        let (i, j, k) = (s / (p.n_y * p.n_theta), s / p.n_theta % p.n_y, s % p.n_theta);
        let mut total = 0.0;
        for &(ti, pi) in &kx[i * p.n_theta + k] {
            for &(tj, pj) in &ky[j * p.n_theta + k] {
                let pij = pi * pj;
                if pij < PRUNE_THRESHOLD {
                    continue;
                }
                for &(tk, pk) in &kt[k * p.n_actions + a] {
                    let q = pij * pk;
                    if q >= PRUNE_THRESHOLD {
                        row.push(((ti * p.n_y + tj) * p.n_theta + tk, q));
                        total += q;
                    }
                }
            }
        }
        row.iter_mut().for_each(|e| e.1 /= total);
    });
    let model = MdpModel::new(
        StateSpace::new(n),
        ActionSpace::new(p.n_actions).with_embedding(Some(turn_rates.iter().map(|&u| vec![u]).collect())),
        transitions,
        CostModel::uniform(n, p.n_actions, p.dt),
        Default::default(),
    )?;
    Ok(Dubins {
        params: p,
        x: x_axis,
        y: y_axis,
        theta: theta_axis,
        turn_rates,
        model,
    })
}
