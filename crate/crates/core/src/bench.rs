//! Wall-clock comparison of the quasimetric pipeline against Value Iteration.

use std::time::Instant;

use serde::Serialize;

use crate::dp::{greedy_policy, value_iteration, ViOptions};
use crate::error::{Error, Result};
use crate::model::MdpModel;
use crate::policy::{probabilistic_gradient, softmax_policy, DEFAULT_BETA};
use crate::quasimetric::{distance_to_goal, graph_from_model};

pub const QUASIMETRIC: &str = "quasimetric";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub size: usize,
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn seconds(&self, method: &str, size: usize, phase: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.size == size && r.phase == phase)
            .map(|r| r.seconds)
    }
}

/// Method label of Value Iteration at discount `gamma`.
pub fn vi_label(gamma: f64) -> String {
    format!("vi-{gamma}")
}

/// Times every phase for each size and reports the median over
/// `repetitions` runs. `build(size)` returns the model and its goal state;
/// building is not timed.
///
/// Quasimetric phases are `graph`, `distance`, `policy` (the softmax policy
/// at the default sharpness) and `total`. Value Iteration phases are
/// `solve`, `policy` (greedy) and `total`.
pub fn benchmark<F>(mut build: F, sizes: &[usize], gammas: &[f64], repetitions: usize) -> Result<BenchResult>
where
    F: FnMut(usize) -> Result<(MdpModel, usize)>,
{
    if repetitions == 0 {
        return Err(Error::InvalidParameter {
            name: "repetitions",
            value: 0.0,
            reason: "need at least one repetition",
        });
    }
    let mut out = BenchResult::default();
    for &size in sizes {
        let (model, goal) = build(size)?;
        let n = model.n_states();
        let mut quasi = vec![Vec::new(); 4];
        let mut vi = vec![vec![Vec::new(); 3]; gammas.len()];
        for _ in 0..repetitions {
            let t0 = Instant::now();
            let graph = graph_from_model(&model);
            let t1 = Instant::now();
            let d = distance_to_goal(&graph, goal)?;
            let t2 = Instant::now();
            let policy = softmax_policy(&probabilistic_gradient(&model, &d)?, DEFAULT_BETA)?;
            let t3 = Instant::now();
            std::hint::black_box(&policy);
            for (slot, dt) in quasi.iter_mut().zip([t1 - t0, t2 - t1, t3 - t2, t3 - t0]) {
                slot.push(dt.as_secs_f64());
            }
            for (times, &gamma) in vi.iter_mut().zip(gammas) {
                let t0 = Instant::now();
                let v = value_iteration(&model, goal, &ViOptions::discounted(gamma))?;
                let t1 = Instant::now();
                let policy = greedy_policy(&model, &v)?;
                let t2 = Instant::now();
                std::hint::black_box(&policy);
                for (slot, dt) in times.iter_mut().zip([t1 - t0, t2 - t1, t2 - t0]) {
                    slot.push(dt.as_secs_f64());
                }
            }
        }
        for (phase, samples) in ["graph", "distance", "policy", "total"].iter().zip(&mut quasi) {
            out.rows.push(BenchRow {
                method: QUASIMETRIC.into(),
                size: n,
                phase: (*phase).into(),
                seconds: median(samples),
            });
        }
        for (times, &gamma) in vi.iter_mut().zip(gammas) {
            for (phase, samples) in ["solve", "policy", "total"].iter().zip(times) {
                out.rows.push(BenchRow {
                    method: vi_label(gamma),
                    size: n,
                    phase: (*phase).into(),
                    seconds: median(samples),
                });
            }
        }
    }
    Ok(out)
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let k = samples.len();
    if k % 2 == 1 {
        samples[k / 2]
    } else {
        0.5 * (samples[k / 2 - 1] + samples[k / 2])
    }
}
