//! One-dimensional state grids and the discrete Gaussian used by the
//! continuous benchmark domains.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::PRUNE_THRESHOLD;

/// Gaussian tails past this many sigmas are below the prune threshold.
const TAIL_SIGMAS: f64 = 8.0;
/// Periodic images summed on each side.
const PERIODIC_IMAGES: i64 = 3;

/// A grid over one coordinate.
///
/// Closed axes put `n` points on `[lo, hi]` including both ends. Periodic
/// axes split `[lo, hi)` into `n` cells and use the cell centres, so an odd
/// `n` on `[-pi, pi)` has a point at 0 but none at `+-pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    lo: f64,
    hi: f64,
    n: usize,
    periodic: bool,
}

impl Axis {
    pub fn closed(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::checked(lo, hi, n, false)
    }

    pub fn periodic(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::checked(lo, hi, n, true)
    }

    /// `[-pi, pi)` with `n` cells.
    pub fn angle(n: usize) -> Result<Self> {
        Self::periodic(-PI, PI, n)
    }

    fn checked(lo: f64, hi: f64, n: usize, periodic: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter {
                name: "cells",
                value: n as f64,
                reason: "an axis needs at least 2 cells",
            });
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidParameter {
                name: "range",
                value: hi - lo,
                reason: "axis bounds must be finite with lo < hi",
            });
        }
        Ok(Self { lo, hi, n, periodic })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.n as f64
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn point(&self, i: usize) -> f64 {
        if self.periodic {
            self.lo + (i as f64 + 0.5) * self.spacing()
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Maps `v` into `[lo, hi)` on periodic axes; identity otherwise.
    pub fn wrap(&self, v: f64) -> f64 {
        if !self.periodic {
            return v;
        }
        let period = self.hi - self.lo;
        let w = (v - self.lo).rem_euclid(period) + self.lo;
        // rem_euclid can round up to exactly `period`.
        if w >= self.hi {
            self.lo
        } else {
            w
        }
    }

    /// Index of the grid point closest to `v`, clamping on closed axes.
    pub fn nearest(&self, v: f64) -> usize {
        let h = self.spacing();
        if self.periodic {
            let k = ((self.wrap(v) - self.lo) / h - 0.5).round() as i64;
            k.rem_euclid(self.n as i64) as usize
        } else {
            let k = ((v - self.lo) / h).round();
            k.clamp(0.0, (self.n - 1) as f64) as usize
        }
    }
}

/// Output of [`discretize_gaussian`].
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    /// Dense probabilities over the axis points.
    pub probs: Vec<f64>,
    /// Set when the mean sits so far off a closed axis that every in-range
    /// point was pruned and the boundary point took all the mass.
    pub clamped: bool,
}

impl Discretized {
    /// Nonzero entries as `(index, p)` in index order.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate().filter(|e| e.1 > 0.0)
    }
}

/// Normal density `N(mu, sigma)` evaluated at the axis points, pruned at
/// [`PRUNE_THRESHOLD`] and normalized.
///
/// Periodic axes wrap `mu` and sum images within three periods. On closed
/// axes the density at virtual points continuing the lattice past either
/// end is folded onto the boundary point.
pub fn discretize_gaussian(mu: f64, sigma: f64, axis: &Axis) -> Result<Discretized> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
            reason: "must be positive and finite",
        });
    }
    if !mu.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mu",
            value: mu,
            reason: "must be finite",
        });
    }
    let n = axis.n;
    let mut probs = vec![0.0; n];
    let density = |x: f64| {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp()
    };
    let mut inside = vec![false; n];
    if axis.periodic {
        let mu = axis.wrap(mu);
        let period = axis.hi - axis.lo;
        let density = |x: f64| {
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp()
        };
        for (i, p) in probs.iter_mut().enumerate() {
            let x = axis.point(i);
            *p = (-PERIODIC_IMAGES..=PERIODIC_IMAGES)
                .map(|k| density(x + k as f64 * period))
                .sum();
        }
        inside.fill(true);
    } else {
        let h = axis.spacing();
        let last = (n - 1) as i64;
        let lo_k = ((mu - TAIL_SIGMAS * sigma - axis.lo) / h).floor();
        let hi_k = ((mu + TAIL_SIGMAS * sigma - axis.lo) / h).ceil();
        if hi_k < 0.0 || lo_k > last as f64 {
            let i = if hi_k < 0.0 { 0 } else { n - 1 };
            probs[i] = 1.0;
            return Ok(Discretized { probs, clamped: true });
        }
        // Keep the virtual lattice bounded when sigma dwarfs the spacing.
        let span = 4 * n as i64 + 64;
        let (lo_k, hi_k) = ((lo_k as i64).max(-span), (hi_k as i64).min(last + span));
        for k in lo_k..=hi_k {
            let x = axis.lo + k as f64 * h;
            let i = k.clamp(0, last) as usize;
            probs[i] += density(x);
            if (0..=last).contains(&k) {
                inside[i] = true;
            }
        }
    }

    let total: f64 = probs.iter().sum();
    let mut clamped = false;
    if total > 0.0 {
        // Points whose own (unfolded) density survives the prune.
        let own_survives = (0..n).any(|i| inside[i] && density_at(axis, i, mu, sigma) / total >= PRUNE_THRESHOLD);
        for p in probs.iter_mut() {
            *p /= total;
            if *p < PRUNE_THRESHOLD {
                *p = 0.0;
            }
        }
        clamped = !axis.periodic && !own_survives;
    }
    let kept: f64 = probs.iter().sum();
    if kept > 0.0 {
        probs.iter_mut().for_each(|p| *p /= kept);
    } else {
        // Underflow: fall back to the nearest point.
        probs[axis.nearest(mu)] = 1.0;
        clamped = !axis.periodic;
    }
    Ok(Discretized { probs, clamped })
}

fn density_at(axis: &Axis, i: usize, mu: f64, sigma: f64) -> f64 {
    let z = (axis.point(i) - mu) / sigma;
    (-0.5 * z * z).exp()
}
