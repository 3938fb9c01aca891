//! Quasi-distance computation.
//!
//! The one-step distance `w(x, y) = min_u g(x,u) / p(y|x,u)` turns the MDP
//! into a weighted directed graph. Distances are then plain shortest-path
//! lengths on that graph: Dijkstra on the transposed graph for a single goal,
//! Dijkstra on the graph itself from a single source, Floyd-Warshall for all
//! pairs. [`Recurrence`] applies `d'(x,y) = min_z d(x,z) + d(z,y)` directly
//! and serves as an independent check of the graph solvers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{check_state, Error, Result};
use crate::model::MdpModel;

/// Default upper bound on the state count accepted by the all-pairs solver.
pub const ALL_PAIRS_CAP: usize = 2000;

/// Entrywise change below which the recurrence is considered converged.
pub const RECURRENCE_TOLERANCE: f64 = 1e-12;

/// Compressed adjacency lists with `f64` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            targets: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.offsets[v], self.offsets[v + 1]);
        self.targets[lo..hi]
            .iter()
            .zip(&self.weights[lo..hi])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Weight of the arc `from -> to`, if present.
    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        let (lo, hi) = (self.offsets[from], self.offsets[from + 1]);
        self.targets[lo..hi]
            .binary_search(&(to as u32))
            .ok()
            .map(|i| self.weights[lo + i])
    }

    fn transposed(&self) -> Adjacency {
        let n = self.vertex_count();
        let mut counts = vec![0usize; n + 1];
        for &t in &self.targets {
            counts[t as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut targets = vec![0u32; self.targets.len()];
        let mut weights = vec![0.0; self.targets.len()];
        // Sources are visited in increasing order, so reversed lists come out sorted.
        for v in 0..n {
            for (t, w) in self.neighbors(v) {
                let slot = &mut cursor[t];
                targets[*slot] = v as u32;
                weights[*slot] = w;
                *slot += 1;
            }
        }
        Adjacency {
            offsets,
            targets,
            weights,
        }
    }
}

/// Sparse one-step distances; an absent pair means `+inf`. Lists are sorted
/// by target and never contain the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepDistance {
    arcs: Adjacency,
}

impl OneStepDistance {
    pub fn empty(n_states: usize) -> Self {
        Self {
            arcs: Adjacency::empty(n_states),
        }
    }

    pub fn n_states(&self) -> usize {
        self.arcs.vertex_count()
    }

    pub fn len(&self) -> usize {
        self.arcs.arc_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.arcs.weight(x, y)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_states()).flat_map(move |x| self.arcs.neighbors(x).map(move |(y, w)| (x, y, w)))
    }
}

/// Computes `w(x, y) = min_u g(x,u) / p(y|x,u)` over actions with positive
/// cost. Zero-cost goal-stay pairs never contribute an arc.
pub fn one_step_distance(model: &MdpModel) -> OneStepDistance {
    let n = model.n_states();
    let mut best = vec![f64::INFINITY; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for x in 0..n {
        for u in 0..model.n_actions() {
            let g = match model.cost(x, u) {
                Some(g) if g > 0.0 => g,
                _ => continue,
            };
            for (y, p) in model.row(x, u).iter() {
                if y == x || p <= 0.0 {
                    continue;
                }
                let w = g / p;
                if best[y] == f64::INFINITY {
                    touched.push(y);
                }
                if w < best[y] {
                    best[y] = w;
                }
            }
        }
        touched.sort_unstable();
        for &y in &touched {
            if best[y].is_finite() {
                targets.push(y as u32);
                weights.push(best[y]);
            }
            best[y] = f64::INFINITY;
        }
        touched.clear();
        offsets.push(targets.len());
    }
    OneStepDistance {
        arcs: Adjacency {
            offsets,
            targets,
            weights,
        },
    }
}

/// Weighted directed graph over the state space with its transpose.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    forward: Adjacency,
    reverse: Adjacency,
}

impl WeightedGraph {
    pub fn vertex_count(&self) -> usize {
        self.forward.vertex_count()
    }

    pub fn arc_count(&self) -> usize {
        self.forward.arc_count()
    }

    pub fn forward(&self) -> &Adjacency {
        &self.forward
    }

    pub fn reverse(&self) -> &Adjacency {
        &self.reverse
    }
}

/// One arc per finite one-step pair, plus the transposed lists.
pub fn build_graph(d1: &OneStepDistance) -> WeightedGraph {
    let forward = d1.arcs.clone();
    let reverse = forward.transposed();
    WeightedGraph { forward, reverse }
}

/// Shorthand for `build_graph(&one_step_distance(model))`.
pub fn graph_from_model(model: &MdpModel) -> WeightedGraph {
    build_graph(&one_step_distance(model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// `values[x] = d(x, goal)`.
    ToGoal(usize),
    /// `values[y] = d(source, y)`.
    FromSource(usize),
    /// Row-major matrix, `values[x * n + y] = d(x, y)`.
    AllPairs,
}

/// Quasi-distances with `f64::INFINITY` as the unreachable marker.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiDistanceField {
    mode: FieldMode,
    n_states: usize,
    values: Vec<f64>,
}

impl QuasiDistanceField {
    /// Wraps precomputed values; used by the risk override and for tests.
    pub fn from_values(mode: FieldMode, n_states: usize, values: Vec<f64>) -> Result<Self> {
        let expected = match mode {
            FieldMode::AllPairs => n_states * n_states,
            _ => n_states,
        };
        if values.len() != expected {
            return Err(Error::SpaceMismatch(format!(
                "{} values for a field needing {}",
                values.len(),
                expected
            )));
        }
        Ok(Self {
            mode,
            n_states,
            values,
        })
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn anchor(&self) -> Option<usize> {
        match self.mode {
            FieldMode::ToGoal(s) | FieldMode::FromSource(s) => Some(s),
            FieldMode::AllPairs => None,
        }
    }

    /// Per-state value of a to-goal or from-source field.
    pub fn value(&self, state: usize) -> f64 {
        debug_assert!(self.mode != FieldMode::AllPairs);
        self.values[state]
    }

    /// `d(x, y)` for an all-pairs field.
    pub fn pair(&self, x: usize, y: usize) -> f64 {
        debug_assert!(self.mode == FieldMode::AllPairs);
        self.values[x * self.n_states + y]
    }

    pub fn is_reachable(&self, state: usize) -> bool {
        self.values[state].is_finite()
    }

    /// Extracts the to-goal column of an all-pairs field.
    pub fn column(&self, goal: usize) -> Result<QuasiDistanceField> {
        if self.mode != FieldMode::AllPairs {
            return Err(Error::ModeMismatch("column extraction needs an all-pairs field"));
        }
        check_state(goal, self.n_states)?;
        let values = (0..self.n_states).map(|x| self.pair(x, goal)).collect();
        Ok(Self {
            mode: FieldMode::ToGoal(goal),
            n_states: self.n_states,
            values,
        })
    }

    /// Extracts the from-source row of an all-pairs field.
    pub fn row(&self, source: usize) -> Result<QuasiDistanceField> {
        if self.mode != FieldMode::AllPairs {
            return Err(Error::ModeMismatch("row extraction needs an all-pairs field"));
        }
        check_state(source, self.n_states)?;
        let n = self.n_states;
        Ok(Self {
            mode: FieldMode::FromSource(source),
            n_states: n,
            values: self.values[source * n..(source + 1) * n].to_vec(),
        })
    }

    /// Largest entrywise difference; `inf` against `inf` counts as equal,
    /// `inf` against a finite value as an infinite difference.
    pub fn max_abs_diff(&self, other: &QuasiDistanceField) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; vertex id breaks ties deterministically.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Binary-heap Dijkstra with lazy deletion, `O((|A| + |V|) log |V|)`.
fn dijkstra(adj: &Adjacency, source: usize) -> Vec<f64> {
    let n = adj.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        vertex: source,
    });
    while let Some(HeapEntry { dist: d, vertex: v }) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for (t, w) in adj.neighbors(v) {
            let cand = d + w;
            if cand < dist[t] {
                dist[t] = cand;
                heap.push(HeapEntry {
                    dist: cand,
                    vertex: t,
                });
            }
        }
    }
    dist
}

/// `d(x, goal)` for every `x`, by Dijkstra from `goal` on the transposed graph.
pub fn distance_to_goal(graph: &WeightedGraph, goal: usize) -> Result<QuasiDistanceField> {
    check_state(goal, graph.vertex_count())?;
    Ok(QuasiDistanceField {
        mode: FieldMode::ToGoal(goal),
        n_states: graph.vertex_count(),
        values: dijkstra(&graph.reverse, goal),
    })
}

/// `d(source, y)` for every `y`, by Dijkstra on the graph itself.
pub fn distance_from_source(graph: &WeightedGraph, source: usize) -> Result<QuasiDistanceField> {
    check_state(source, graph.vertex_count())?;
    Ok(QuasiDistanceField {
        mode: FieldMode::FromSource(source),
        n_states: graph.vertex_count(),
        values: dijkstra(&graph.forward, source),
    })
}

/// Full quasimetric by Floyd-Warshall, refusing graphs above [`ALL_PAIRS_CAP`].
pub fn distance_all_pairs(graph: &WeightedGraph) -> Result<QuasiDistanceField> {
    distance_all_pairs_capped(graph, ALL_PAIRS_CAP)
}

pub fn distance_all_pairs_capped(graph: &WeightedGraph, cap: usize) -> Result<QuasiDistanceField> {
    let n = graph.vertex_count();
    if n > cap {
        return Err(Error::TooLarge { states: n, cap });
    }
    let mut d = vec![f64::INFINITY; n * n];
    for x in 0..n {
        d[x * n + x] = 0.0;
        for (y, w) in graph.forward.neighbors(x) {
            d[x * n + y] = d[x * n + y].min(w);
        }
    }
    for k in 0..n {
        let row_k = d[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            let row_i = &mut d[i * n..(i + 1) * n];
            for (dij, &dkj) in row_i.iter_mut().zip(&row_k) {
                let cand = dik + dkj;
                if cand < *dij {
                    *dij = cand;
                }
            }
        }
    }
    Ok(QuasiDistanceField {
        mode: FieldMode::AllPairs,
        n_states: n,
        values: d,
    })
}

/// Dense iterates of `d^{i+1}(x,y) = min_z d^i(x,z) + d^i(z,y)`, starting
/// from the one-step distance `d^1`.
#[derive(Debug, Clone)]
pub struct Recurrence {
    n: usize,
    current: Vec<f64>,
    applied: usize,
}

impl Recurrence {
    pub fn new(model: &MdpModel) -> Self {
        let n = model.n_states();
        let mut current = vec![f64::INFINITY; n * n];
        for x in 0..n {
            current[x * n + x] = 0.0;
        }
        for (x, y, w) in one_step_distance(model).iter() {
            current[x * n + y] = w;
        }
        Self {
            n,
            current,
            applied: 0,
        }
    }

    /// The current iterate, row-major.
    pub fn current(&self) -> &[f64] {
        &self.current
    }

    /// Number of recurrence applications so far.
    pub fn applied(&self) -> usize {
        self.applied
    }

    /// Applies the recurrence once; returns the largest entrywise change.
    pub fn step(&mut self) -> f64 {
        let n = self.n;
        let old = &self.current;
        let mut next = old.clone();
        for x in 0..n {
            let row_x = &old[x * n..(x + 1) * n];
            let out = &mut next[x * n..(x + 1) * n];
            for (z, &dxz) in row_x.iter().enumerate() {
                if dxz == f64::INFINITY {
                    continue;
                }
                let row_z = &old[z * n..(z + 1) * n];
                for (o, &dzy) in out.iter_mut().zip(row_z) {
                    let cand = dxz + dzy;
                    if cand < *o {
                        *o = cand;
                    }
                }
            }
        }
        let change = max_abs_diff(old, &next);
        self.current = next;
        self.applied += 1;
        change
    }

    pub fn into_field(self) -> QuasiDistanceField {
        QuasiDistanceField {
            mode: FieldMode::AllPairs,
            n_states: self.n,
            values: self.current,
        }
    }
}

/// Result of [`distance_iterative`].
#[derive(Debug, Clone)]
pub struct IterativeSolution {
    pub field: QuasiDistanceField,
    pub iterations: usize,
    /// False when `max_iters` ran out before the fixpoint.
    pub converged: bool,
}

/// All-pairs quasimetric by repeated application of the recurrence until no
/// entry moves by more than [`RECURRENCE_TOLERANCE`].
pub fn distance_iterative(model: &MdpModel, max_iters: usize) -> IterativeSolution {
    let mut rec = Recurrence::new(model);
    let mut converged = false;
    while rec.applied() < max_iters {
        if rec.step() <= RECURRENCE_TOLERANCE {
            converged = true;
            break;
        }
    }
    let iterations = rec.applied();
    IterativeSolution {
        field: rec.into_field(),
        iterations,
        converged,
    }
}

/// Shortest-path tree of a single-anchor field. For a to-goal field entry `x`
/// is the next hop from `x` toward the goal; for a from-source field it is the
/// predecessor of `x` on a path from the source. Among tied candidates the
/// lowest-numbered state wins. Anchor and unreachable states map to `None`.
pub fn shortest_path_tree(graph: &WeightedGraph, field: &QuasiDistanceField) -> Vec<Option<usize>> {
    let (anchor, adj) = match field.mode {
        FieldMode::ToGoal(g) => (g, &graph.forward),
        FieldMode::FromSource(s) => (s, &graph.reverse),
        FieldMode::AllPairs => return vec![None; field.n_states],
    };
    (0..field.n_states)
        .map(|x| {
            let dx = field.values[x];
            if x == anchor || !dx.is_finite() {
                return None;
            }
            let tol = 1e-12 * dx.max(1.0);
            adj.neighbors(x)
                .find(|&(z, w)| (w + field.values[z] - dx).abs() <= tol)
                .map(|(z, _)| z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    fn line(n: usize) -> MdpModel {
        let mut b = ModelBuilder::new(n, 1);
        for x in 0..n - 1 {
            b = b.action(x, 0, 1.0, &[(x + 1, 1.0)]);
        }
        b.action(n - 1, 0, 0.0, &[(n - 1, 1.0)])
            .goal_stay(n - 1, 0)
            .build()
            .unwrap()
    }

    #[test]
    fn deterministic_weight_is_the_cost() {
        let m = ModelBuilder::new(2, 1)
            .action(0, 0, 3.0, &[(1, 1.0)])
            .action(1, 0, 1.0, &[(1, 1.0)])
            .build()
            .unwrap();
        let d1 = one_step_distance(&m);
        assert_eq!(d1.get(0, 1), Some(3.0));
        assert_eq!(d1.get(1, 1), None);
        assert_eq!(d1.len(), 1);
    }

    #[test]
    fn weight_takes_the_best_quotient() {
        // (g=1, p=0.2) gives 5, (g=2, p=0.5) gives 4.
        let m = ModelBuilder::new(2, 2)
            .action(0, 0, 1.0, &[(1, 0.2), (0, 0.8)])
            .action(0, 1, 2.0, &[(1, 0.5), (0, 0.5)])
            .build()
            .unwrap();
        assert_eq!(one_step_distance(&m).get(0, 1), Some(4.0));
    }

    #[test]
    fn zero_cost_pairs_add_no_arcs() {
        let m = ModelBuilder::new(2, 1)
            .action(0, 0, 0.0, &[(1, 0.5), (0, 0.5)])
            .goal_stay(0, 0)
            .build()
            .unwrap();
        assert!(one_step_distance(&m).is_empty());
    }

    #[test]
    fn empty_one_step_gives_arcless_graph() {
        let g = build_graph(&OneStepDistance::empty(4));
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.arc_count(), 0);
    }

    #[test]
    fn example_a_has_six_arcs() {
        // u2 reaches C and D, one arc each; the goal's self-loop adds none.
        let g = graph_from_model(&crate::domains::build_example_a(false).unwrap());
        assert_eq!(g.arc_count(), 6);
        assert_eq!(g.forward().neighbors(0).map(|e| e.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(g.reverse().neighbors(4).count(), 3);
    }

    #[test]
    fn transposed_lists_reverse_every_arc() {
        let m = ModelBuilder::new(3, 2)
            .action(0, 0, 1.0, &[(1, 0.5), (2, 0.5)])
            .action(1, 1, 2.0, &[(2, 1.0)])
            .action(2, 0, 1.0, &[(0, 0.25), (2, 0.75)])
            .build()
            .unwrap();
        let g = graph_from_model(&m);
        let mut fwd: Vec<_> = (0..3)
            .flat_map(|x| g.forward().neighbors(x).map(move |(y, w)| (x, y, w.to_bits())))
            .collect();
        let mut rev: Vec<_> = (0..3)
            .flat_map(|y| g.reverse().neighbors(y).map(move |(x, w)| (x, y, w.to_bits())))
            .collect();
        fwd.sort();
        rev.sort();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn single_state_field_is_zero() {
        let m = ModelBuilder::new(1, 1)
            .action(0, 0, 0.0, &[(0, 1.0)])
            .goal_stay(0, 0)
            .build()
            .unwrap();
        let d = distance_to_goal(&graph_from_model(&m), 0).unwrap();
        assert_eq!(d.values(), &[0.0]);
    }

    #[test]
    fn line_graph_distances() {
        let m = line(4);
        let g = graph_from_model(&m);
        let d = distance_to_goal(&g, 3).unwrap();
        assert_eq!(d.values(), &[3.0, 2.0, 1.0, 0.0]);
        let s = distance_from_source(&g, 0).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(shortest_path_tree(&g, &d), vec![Some(1), Some(2), Some(3), None]);
        assert_eq!(shortest_path_tree(&g, &s), vec![None, Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn recurrence_iterates_never_increase() {
        let m = line(4);
        let mut rec = Recurrence::new(&m);
        let mut prev = rec.current().to_vec();
        for _ in 0..4 {
            rec.step();
            assert!(rec.current().iter().zip(&prev).all(|(a, b)| a <= b));
            prev = rec.current().to_vec();
        }
        let sol = distance_iterative(&m, 10);
        assert!(sol.converged);
        assert_eq!(sol.field.column(3).unwrap().values(), &[3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn recurrence_flags_exhausted_budget() {
        let sol = distance_iterative(&line(9), 1);
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn all_pairs_respects_cap() {
        let g = graph_from_model(&line(5));
        assert!(matches!(
            distance_all_pairs_capped(&g, 4),
            Err(Error::TooLarge { states: 5, cap: 4 })
        ));
        let d = distance_all_pairs(&g).unwrap();
        assert!((0..5).all(|x| d.pair(x, x) == 0.0));
    }

    #[test]
    fn out_of_range_goal_is_rejected() {
        let g = graph_from_model(&line(3));
        assert!(distance_to_goal(&g, 3).is_err());
    }
}
