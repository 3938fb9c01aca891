//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 1 2 5`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quasimetric_core::belief::{forward_update, Belief, ObservationModel};
use quasimetric_core::bench::{benchmark, vi_label, QUASIMETRIC};
use quasimetric_core::domains::{
    build_dubins, build_example_a, build_example_b, build_maze, build_pendulum, random_maze, Dubins, DubinsParams,
    PendulumParams,
};
use quasimetric_core::dp::{greedy_policy, value_iteration, ViOptions};
use quasimetric_core::generate::{random_mdp, RandomMdpParams};
use quasimetric_core::model::{GoalDistribution, MdpModel};
use quasimetric_core::policy::{
    argmin_policy, marginalize_goals, probabilistic_gradient, softmax_policy, DecisionMode, GradientTable,
    DEFAULT_BETA,
};
use quasimetric_core::quasimetric::{
    distance_all_pairs, distance_from_source, distance_iterative, distance_to_goal, graph_from_model, Recurrence,
};
use quasimetric_core::risk::risk_report;
use quasimetric_core::sim::{accessibility_volume, monte_carlo, RolloutOptions, TrajectoryRecord};
use quasimetric_core::Result;

/// Entrywise tolerance for closed-form and table values.
const EXACT_TOL: f64 = 1e-9;
/// Quasi-distance against undiscounted Value Iteration on self-loop models.
const EQUIVALENCE_TOL: f64 = 1e-6;
/// Relative slack when comparing Bellman backups for tie detection.
const TIE_TOL: f64 = 1e-6;
/// Largest fraction of an accessibility volume allowed off its mirror image.
const MIRROR_TOL: f64 = 0.02;
/// Loop closure radius for the mean Dubins trajectory, in state units.
const LOOP_CLOSURE: f64 = 1.5;
/// Belief row normalization drift over chained updates.
const BELIEF_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || (a - b).abs() <= tol
}

fn criterion_1() -> Result<Outcome> {
    const INF: f64 = f64::INFINITY;
    let table = [
        [0.0, 3.0, 4.0, 4.0, 5.0],
        [INF, 0.0, INF, INF, 2.0],
        [INF, INF, 0.0, INF, 2.5],
        [INF, INF, INF, 0.0, 2.5],
        [INF, INF, INF, INF, 0.0],
    ];
    let v_column = [4.5, 2.0, 2.5, 2.5, 0.0];
    let m = build_example_a(false)?;
    let d = distance_all_pairs(&graph_from_model(&m))?;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (x, row) in table.iter().enumerate() {
        for (y, &want) in row.iter().enumerate() {
            let got = d.pair(x, y);
            ok &= close(got, want, EXACT_TOL);
            if want.is_finite() {
                worst = worst.max((got - want).abs());
            }
        }
    }
    let v = value_iteration(&m, 4, &ViOptions::default())?;
    let v_ok = v.converged && v.values.iter().zip(v_column).all(|(&a, b)| close(a, b, EXACT_TOL));
    outcome(
        ok && v_ok,
        format!("max |d - table| = {worst:.1e}, V = {:?}", v.values),
    )
}

fn criterion_2() -> Result<Outcome> {
    let mut ok = true;
    let mut notes = Vec::new();
    for (eps, omega) in [(0.5, 2.0), (0.1, 10.0), (0.9, 100.0)] {
        let m = build_example_b(eps, omega, true)?;
        let d = distance_to_goal(&graph_from_model(&m), 3)?;
        let via_b = 1.0 + 1.0 / (1.0 - eps);
        let want = [via_b.min(omega), 1.0 / (1.0 - eps), f64::INFINITY, 0.0];
        let d_ok = d.values().iter().zip(want).all(|(&a, b)| close(a, b, EXACT_TOL));
        let v = value_iteration(&m, 3, &ViOptions::default())?;
        let v_want = [omega, f64::INFINITY, f64::INFINITY, 0.0];
        let v_ok = v.values.iter().zip(v_want).all(|(&a, b)| close(a, b, EXACT_TOL));
        let quasi_a = argmin_policy(&m, &d)?.action(0);
        let greedy_a = greedy_policy(&m, &v)?.action(0);
        let policy_ok = quasi_a == Some(if via_b < omega { 0 } else { 1 }) && greedy_a == Some(1);
        ok &= d_ok && v_ok && policy_ok;
        notes.push(format!(
            "eps={eps} omega={omega}: d(A,D)={:.4} quasi u{} vi u{}",
            d.value(0),
            quasi_a.map_or(0, |a| a + 1),
            greedy_a.map_or(0, |a| a + 1)
        ));
    }
    outcome(ok, notes.join("; "))
}

/// True when `a` is within tolerance of the best Bellman backup at `x`.
fn optimal_under(m: &MdpModel, values: &[f64], x: usize, a: usize) -> bool {
    let q = |u: usize| -> f64 {
        let Some(g) = m.cost(x, u) else { return f64::INFINITY };
        if m.row(x, u).is_empty() {
            return f64::INFINITY;
        }
        g + m.row(x, u).iter().filter(|e| e.1 > 0.0).map(|(z, p)| p * values[z]).sum::<f64>()
    };
    let best = (0..m.n_actions()).map(q).fold(f64::INFINITY, f64::min);
    q(a) <= best + TIE_TOL * best.abs().max(1.0)
}

fn criterion_3() -> Result<Outcome> {
    let mut worst = 0.0f64;
    let mut disagreements = 0;
    let mut ok = true;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_maze(10, 10, 0.1, 1.0, 0.0, &mut rng)?;
        let m = build_maze(&spec)?;
        let d = distance_to_goal(&graph_from_model(&m), spec.goal)?;
        let v = value_iteration(&m, spec.goal, &ViOptions::default())?;
        ok &= v.converged;
        let quasi = argmin_policy(&m, &d)?;
        let greedy = greedy_policy(&m, &v)?;
        for x in (0..m.n_states()).filter(|&x| d.is_reachable(x)) {
            worst = worst.max((d.value(x) - v.value(x)).abs());
            if x == spec.goal {
                continue;
            }
            let (a, b) = (quasi.action(x).unwrap_or(0), greedy.action(x).unwrap_or(0));
            // Different picks are fine only when both are optimal under both potentials.
            if a != b
                && !(optimal_under(&m, &v.values, x, a)
                    && optimal_under(&m, &v.values, x, b)
                    && optimal_under(&m, d.values(), x, a)
                    && optimal_under(&m, d.values(), x, b))
            {
                disagreements += 1;
            }
        }
    }
    ok &= worst <= EQUIVALENCE_TOL && disagreements == 0;
    outcome(
        ok,
        format!("50 mazes: max |d - V| = {worst:.2e}, non-tie policy disagreements = {disagreements}"),
    )
}

fn criterion_4() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut monotone = true;
    let mut converged = true;
    for i in 0..100 {
        let params = RandomMdpParams::new(5 + i % 26, 1 + i % 5);
        let m = random_mdp(&params, &mut rng)?;
        let g = graph_from_model(&m);
        let fw = distance_all_pairs(&g)?;
        for goal in 0..m.n_states() {
            let dj = distance_to_goal(&g, goal)?;
            worst = worst.max(dj.max_abs_diff(&fw.column(goal)?));
        }
        let it = distance_iterative(&m, 64);
        converged &= it.converged;
        worst = worst.max(it.field.max_abs_diff(&fw));
        let mut rec = Recurrence::new(&m);
        loop {
            let before = rec.current().to_vec();
            let change = rec.step();
            monotone &= rec.current().iter().zip(&before).all(|(a, b)| a <= b);
            if change <= 1e-12 || rec.applied() > 64 {
                break;
            }
        }
    }
    outcome(
        worst <= EXACT_TOL && monotone && converged,
        format!("100 models: max disagreement {worst:.1e}, monotone iterates {monotone}, converged {converged}"),
    )
}

fn criterion_5() -> Result<Outcome> {
    let eps = 0.1;
    let m = build_example_b(eps, 10.0, false)?;
    let v = value_iteration(&m, 3, &ViOptions::default())?;
    let v_ok = v.value(0).is_infinite() && v.value(1).is_infinite() && v.value(3) == 0.0;
    let g = graph_from_model(&m);
    let d = distance_to_goal(&g, 3)?;
    let d_ok = close(d.value(0), 1.0 + 1.0 / (1.0 - eps), EXACT_TOL);
    let r = risk_report(&m, &g, 3, 0.5)?;
    let set = |xs: &[usize]| xs.iter().copied().collect::<std::collections::BTreeSet<_>>();
    let r_ok = r.prison == set(&[2]) && r.weakly_risky == set(&[1]) && r.risky == set(&[1]) && r.epsilon_risky.is_empty();
    outcome(
        v_ok && d_ok && r_ok,
        format!(
            "V = {:?}, d(A,D) = {:.6}, J = {:?}, K' = {:?}, K = {:?}, K_0.5 = {:?}",
            v.values, d.value(0), r.prison, r.weakly_risky, r.risky, r.epsilon_risky
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let p = build_pendulum(&PendulumParams::default())?;
    let (m, goal) = (&p.model, p.goal());
    let run = |policy| p.noise_free_rollout(&policy, PI, 0.0, 500).map(|r| r.record);
    let v1 = value_iteration(m, goal, &ViOptions::default())?;
    let a = run(greedy_policy(m, &v1)?)?;
    let d = distance_to_goal(&graph_from_model(m), goal)?;
    let b = run(argmin_policy(m, &d)?)?;
    let v95 = value_iteration(m, goal, &ViOptions::discounted(0.95))?;
    let c = run(greedy_policy(m, &v95)?)?;
    let (sa, sb, sc) = (a.steps(), b.steps(), c.steps());
    let ok = a.reached_goal
        && b.reached_goal
        && c.reached_goal
        && sa <= sb
        && (sb as f64) <= 1.5 * sa as f64
        && v1.converged;
    let tag = |r: &TrajectoryRecord| if r.reached_goal { "" } else { " (missed)" };
    outcome(
        ok,
        format!(
            "steps: VI(1) {sa}{}, quasi {sb}{}, VI(0.95) {sc}{}",
            tag(&a),
            tag(&b),
            tag(&c)
        ),
    )
}

fn criterion_7() -> Result<Outcome> {
    let gammas = [0.9, 0.95, 0.99];
    let r = benchmark(
        |n| {
            let p = build_pendulum(&PendulumParams::square(n))?;
            let goal = p.goal();
            Ok((p.model, goal))
        },
        &[51],
        &gammas,
        3,
    )?;
    let size = 51 * 51;
    let quasi = r.seconds(QUASIMETRIC, size, "total").unwrap_or(f64::INFINITY);
    let vi: Vec<f64> = gammas
        .iter()
        .map(|&g| r.seconds(&vi_label(g), size, "total").unwrap_or(f64::NAN))
        .collect();
    let ok = quasi < vi[2] && vi.windows(2).all(|w| w[0] <= w[1]);
    outcome(
        ok,
        format!(
            "median seconds: quasimetric {quasi:.3}, VI 0.9 {:.3}, 0.95 {:.3}, 0.99 {:.3}",
            vi[0], vi[1], vi[2]
        ),
    )
}

fn dubins_checks(params: &DubinsParams) -> Result<(bool, String)> {
    let car: Dubins = build_dubins(params)?;
    let m = &car.model;
    let origin = car.origin();
    let g = graph_from_model(m);
    let from = distance_from_source(&g, origin)?;
    let reach = from.values().iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &b| a.max(b));
    let thresholds: Vec<f64> = (0..=40).map(|k| reach * k as f64 / 40.0).collect();
    let volumes = accessibility_volume(&from, &thresholds)?;
    let monotone = volumes.windows(2).all(|w| w[0].1 <= w[1].1);
    let mut worst_asym = 0.0f64;
    for &(l, count) in &volumes {
        let inside = |s: usize| from.value(s) <= l;
        let both = (0..m.n_states()).filter(|&s| inside(s) && inside(car.mirror(s))).count();
        if count > 0 {
            worst_asym = worst_asym.max(1.0 - both as f64 / count as f64);
        }
    }
    let to = distance_to_goal(&g, origin)?;
    let policy = softmax_policy(&probabilistic_gradient(m, &to)?, DEFAULT_BETA)?;
    let coords = car.coordinates();
    let opts = RolloutOptions::new(50, DecisionMode::Random, 0);
    let mc = monte_carlo(m, &policy, origin, origin, 500, &opts, Some(&coords))?;
    let last = mc.mean_trajectory.as_ref().and_then(|t| t.last().cloned()).unwrap_or_default();
    let radius = last[0].hypot(last[1]);
    let ok = monotone && worst_asym <= MIRROR_TOL && radius <= LOOP_CLOSURE;
    Ok((
        ok,
        format!(
            "{}^3: volume monotone {monotone}, max mirror mismatch {:.2}%, mean final position ({:.2}, {:.2}) r={radius:.2}, {} of 500 closed the loop",
            params.n_x,
            100.0 * worst_asym,
            last[0],
            last[1],
            mc.successes
        ),
    ))
}

fn criterion_8() -> Result<Outcome> {
    let t = Instant::now();
    let (smoke_ok, smoke) = dubins_checks(&DubinsParams::cube(21))?;
    let smoke_time = t.elapsed();
    let (full_ok, full) = dubins_checks(&DubinsParams::default())?;
    let smoke_fast = smoke_time < Duration::from_secs(120);
    outcome(
        smoke_ok && full_ok && smoke_fast,
        format!("{smoke} in {:.1}s; {full}", smoke_time.as_secs_f64()),
    )
}

fn criterion_9() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    for i in 0..40 {
        let params = RandomMdpParams {
            connected: i % 2 == 0,
            ..RandomMdpParams::new(8 + i % 23, 1 + i % 5)
        };
        let m = random_mdp(&params, &mut rng)?;
        let g = graph_from_model(&m);
        let d = distance_all_pairs(&g)?;
        let n = m.n_states();
        // Identity and triangle inequality.
        for x in 0..n {
            if d.pair(x, x) != 0.0 {
                failures.push(format!("model {i}: d({x},{x}) != 0"));
            }
            for y in 0..n {
                for z in 0..n {
                    if d.pair(x, z) > d.pair(x, y) + d.pair(y, z) + 1e-9 {
                        failures.push(format!("model {i}: triangle at ({x},{y},{z})"));
                    }
                }
            }
        }
        // No local minimum: some successor is strictly closer.
        let to = distance_to_goal(&g, 0)?;
        for x in 1..n {
            if !to.is_reachable(x) {
                continue;
            }
            let descends = m
                .available_actions(x)
                .any(|u| m.row(x, u).iter().any(|(z, p)| p > 0.0 && to.value(z) < to.value(x)));
            if !descends {
                failures.push(format!("model {i}: local minimum at {x}"));
            }
        }
        // Cost scaling leaves the argmin policy alone.
        let base = argmin_policy(&m, &to)?;
        for c in [0.5, 3.0, 10.0] {
            let scaled = m.scale_costs(c);
            let ds = distance_to_goal(&graph_from_model(&scaled), 0)?;
            let ratio_ok = (0..n).all(|x| close(ds.value(x), c * to.value(x), 1e-9 * c.max(1.0) * to.value(x).max(1.0)));
            if !ratio_ok {
                failures.push(format!("model {i}: distances do not scale by {c}"));
            }
            if argmin_policy(&scaled, &ds)?.kind() != base.kind() {
                failures.push(format!("model {i}: argmin changed under scaling by {c}"));
            }
        }
        // Softmax: rows sum to one, shifting a row changes nothing, large beta is the argmin.
        let grad = probabilistic_gradient(&m, &to)?;
        let soft = softmax_policy(&grad, 2.0)?;
        let shifted = GradientTable::from_rows(
            (0..n)
                .map(|x| grad.row(x).iter().map(|g| g.map(|v| v + 7.0)).collect())
                .collect(),
        )?;
        let soft_shifted = softmax_policy(&shifted, 2.0)?;
        let sharp = softmax_policy(&grad, 1e4)?;
        for x in 0..n {
            let row = soft.row(x);
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                failures.push(format!("model {i}: softmax row {x} not normalized"));
            }
            if row.iter().zip(soft_shifted.row(x)).any(|(a, b)| (a - b).abs() > 1e-12) {
                failures.push(format!("model {i}: softmax not shift invariant at {x}"));
            }
            if !soft.no_progress(x) {
                let a = base.action(x).unwrap_or(0);
                let finite: Vec<f64> = grad.row(x).iter().flatten().copied().filter(|v| v.is_finite()).collect();
                let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
                let gap = finite.iter().copied().filter(|&v| v > min + 1e-9).fold(f64::INFINITY, f64::min) - min;
                // Only meaningful when the runner-up is clearly worse.
                if gap > 1e-2 && sharp.row(x)[a] < 1.0 - 1e-6 {
                    failures.push(format!("model {i}: large beta does not concentrate on argmin at {x}"));
                }
            }
        }
        // Goal marginalization with one goal is the identity.
        let single = marginalize_goals(&[(soft.clone(), 0)], &GoalDistribution::new(vec![(0, 1.0)])?)?;
        if single != soft {
            failures.push(format!("model {i}: single-goal marginalization changed the policy"));
        }
    }
    // Belief stays normalized across 10^4 chained updates.
    let m = random_mdp(
        &RandomMdpParams {
            connected: true,
            ..RandomMdpParams::new(12, 3)
        },
        &mut rng,
    )?;
    let obs = ObservationModel::noisy_identity(12, 0.7)?;
    let mut b = Belief::uniform(12);
    let mut drift = 0.0f64;
    for t in 0..10_000usize {
        let u = t % 3;
        let symbol = (t * 7) % 12;
        b = forward_update(&b, u, symbol, &m, &obs)?;
        drift = drift.max((b.probs().iter().sum::<f64>() - 1.0).abs());
    }
    if drift > BELIEF_TOL {
        failures.push(format!("belief drift {drift:.1e}"));
    }
    let detail = if failures.is_empty() {
        format!("40 seeded models, 10^4 belief updates (drift {drift:.1e})")
    } else {
        format!("{} failures, first: {}", failures.len(), failures[0])
    };
    outcome(failures.is_empty(), detail)
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "Example A distance table", criterion_1, Duration::from_secs(1)),
        (2, "Example B closed forms", criterion_2, Duration::from_secs(1)),
        (3, "self-loop equivalence on random mazes", criterion_3, Duration::from_secs(30)),
        (4, "solver oracle agreement", criterion_4, Duration::from_secs(60)),
        (5, "prison handling", criterion_5, Duration::from_secs(1)),
        (6, "pendulum swing-up ordering", criterion_6, Duration::from_secs(600)),
        (7, "pendulum timing ordering", criterion_7, Duration::from_secs(900)),
        (8, "Dubins accessibility and loop closure", criterion_8, Duration::from_secs(1800)),
        (9, "seeded property suites", criterion_9, Duration::from_secs(60)),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run, budget) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = run();
        let elapsed = t.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
