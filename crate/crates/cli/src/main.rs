use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use quasimetric_core::belief::{Belief, ObservationModel};
use quasimetric_core::bench::benchmark;
use quasimetric_core::domains::{
    build_dubins, build_example_a, build_example_b, build_maze, build_pendulum, random_maze, DubinsParams, MazeSpec,
    PendulumParams,
};
use quasimetric_core::dp::{greedy_policy, value_iteration, ViOptions};
use quasimetric_core::io::{
    load_model, open_input, open_output, read_json, read_observation_model, write_bench_csv, write_distance_csv,
    write_json, write_model, write_policy_csv, write_trajectory_csv, write_value_csv,
};
use quasimetric_core::policy::{
    argmin_from_gradient, gradient, probabilistic_gradient, softmax_policy, DecisionMode, Potential, PolicyTable,
};
use quasimetric_core::quasimetric::{
    distance_all_pairs, distance_from_source, distance_to_goal, graph_from_model, QuasiDistanceField,
};
use quasimetric_core::risk::{apply_risk_override, risk_report, StateSet};
use quasimetric_core::sim::{belief_rollout, monte_carlo, rollout, RolloutOptions};
use quasimetric_core::{Error, MdpModel, Result};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Planning on stochastic shortest-path models through the quasimetric
/// determinization, with Value Iteration as a baseline.
#[derive(Parser)]
#[command(name = "quasimetric", version)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results do
    /// not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance or value fields.
    #[command(subcommand)]
    Solve(Solve),
    /// Policy table as CSV.
    Policy(PolicyCmd),
    /// Prison and risky sets for a goal, as JSON.
    Risk(RiskCmd),
    /// Build a model and write it in the model file format.
    #[command(subcommand)]
    Domain(Domain),
    /// Seeded rollouts: one trajectory as CSV, or a Monte Carlo summary.
    Simulate(SimulateCmd),
    /// Time the quasimetric pipeline against Value Iteration.
    Bench(BenchCmd),
    /// Rollout of a controller that only sees noisy observations.
    BeliefSim(BeliefSimCmd),
}

#[derive(Args)]
struct ModelArg {
    /// Model file, `-` for standard input.
    #[arg(long, default_value = "-")]
    model: String,
}

#[derive(Args)]
struct OutArg {
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Clone)]
struct ViArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = ViOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = ViOptions::default().max_sweeps)]
    max_sweeps: usize,
}

impl ViArgs {
    fn options(&self) -> ViOptions {
        ViOptions {
            gamma: self.gamma,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
        }
    }
}

#[derive(Subcommand)]
enum Solve {
    /// Quasi-distance to `--goal`, or from `--source`.
    Quasi {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, conflicts_with = "source", required_unless_present = "source")]
        goal: Option<String>,
        #[arg(long)]
        source: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Value Iteration values toward `--goal`.
    Vi {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        goal: String,
        #[command(flatten)]
        vi: ViArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Dense quasi-distance matrix, row = from, column = to.
    AllPairs {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Quasi,
    Vi,
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialKind {
    Distance,
    Value,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Max,
    Mean,
}

impl From<Mode> for DecisionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Random => DecisionMode::Random,
            Mode::Max => DecisionMode::Max,
            Mode::Mean => DecisionMode::Mean,
        }
    }
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long)]
    goal: String,
    /// `quasi` follows the gradient of `--potential`; `vi` is greedy on the
    /// Value Iteration Q-values.
    #[arg(long, value_enum, default_value = "quasi")]
    policy: Method,
    #[arg(long, value_enum, default_value = "distance")]
    potential: PotentialKind,
    /// Softmax sharpness. Without it the gradient policy is the argmin.
    #[arg(long)]
    beta: Option<f64>,
    /// Risky states reset to this distance before the policy is derived.
    #[arg(long)]
    omega: Option<f64>,
    /// Entry probability above which a state counts as risky for `--omega`.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[command(flatten)]
    vi: ViArgs,
}

#[derive(Args)]
struct PolicyCmd {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct RiskCmd {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long)]
    goal: String,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Also report the distances after resetting risky states to this value.
    #[arg(long)]
    omega: Option<f64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Subcommand)]
enum Domain {
    /// Probabilistic maze from a JSON spec, or a random one.
    Maze {
        /// MazeSpec JSON file.
        #[arg(long, required_unless_present = "random")]
        spec: Option<String>,
        #[arg(long, conflicts_with = "spec")]
        random: bool,
        #[arg(long, default_value_t = 10)]
        width: usize,
        #[arg(long, default_value_t = 10)]
        height: usize,
        #[arg(long, default_value_t = 0.1)]
        p_lo: f64,
        #[arg(long, default_value_t = 1.0)]
        p_hi: f64,
        #[arg(long, default_value_t = 0.2)]
        solid: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Five-state example with a risky shortcut.
    ExampleA {
        #[arg(long)]
        unit_cost: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Four-state example with a prison state.
    ExampleB {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 10.0)]
        omega: f64,
        /// Leave out the safe fallback action.
        #[arg(long)]
        without_u2: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Under-actuated pendulum swing-up.
    Pendulum {
        #[command(flatten)]
        params: PendulumArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Dubins car on a periodic heading grid.
    Dubins {
        #[command(flatten)]
        params: DubinsArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Clone)]
struct PendulumArgs {
    #[arg(long, default_value_t = PendulumParams::default().n_theta)]
    n_theta: usize,
    #[arg(long, default_value_t = PendulumParams::default().n_thetadot)]
    n_thetadot: usize,
    #[arg(long, default_value_t = PendulumParams::default().n_actions)]
    n_actions: usize,
    #[arg(long, default_value_t = PendulumParams::default().u_max)]
    u_max: f64,
    #[arg(long, default_value_t = PendulumParams::default().sigma_x)]
    sigma_x: f64,
    #[arg(long, default_value_t = PendulumParams::default().sigma_y)]
    sigma_y: f64,
    #[arg(long, default_value_t = PendulumParams::default().dt)]
    dt: f64,
    #[arg(long, default_value_t = PendulumParams::default().thetadot_range)]
    thetadot_range: f64,
}

impl From<&PendulumArgs> for PendulumParams {
    fn from(a: &PendulumArgs) -> Self {
        PendulumParams {
            n_theta: a.n_theta,
            n_thetadot: a.n_thetadot,
            n_actions: a.n_actions,
            u_max: a.u_max,
            sigma_x: a.sigma_x,
            sigma_y: a.sigma_y,
            dt: a.dt,
            thetadot_range: a.thetadot_range,
        }
    }
}

#[derive(Args, Clone)]
struct DubinsArgs {
    #[arg(long, default_value_t = DubinsParams::default().n_x)]
    n_x: usize,
    #[arg(long, default_value_t = DubinsParams::default().n_y)]
    n_y: usize,
    #[arg(long, default_value_t = DubinsParams::default().n_theta)]
    n_theta: usize,
    #[arg(long, default_value_t = DubinsParams::default().n_actions)]
    n_actions: usize,
    #[arg(long, default_value_t = DubinsParams::default().u_l)]
    u_l: f64,
    #[arg(long, default_value_t = DubinsParams::default().sigma_x)]
    sigma_x: f64,
    #[arg(long, default_value_t = DubinsParams::default().sigma_y)]
    sigma_y: f64,
    #[arg(long, default_value_t = DubinsParams::default().sigma_theta)]
    sigma_theta: f64,
    #[arg(long, default_value_t = DubinsParams::default().dt)]
    dt: f64,
}

impl From<&DubinsArgs> for DubinsParams {
    fn from(a: &DubinsArgs) -> Self {
        DubinsParams {
            n_x: a.n_x,
            n_y: a.n_y,
            n_theta: a.n_theta,
            n_actions: a.n_actions,
            u_l: a.u_l,
            sigma_x: a.sigma_x,
            sigma_y: a.sigma_y,
            sigma_theta: a.sigma_theta,
            dt: a.dt,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    start: String,
    #[arg(long, value_enum, default_value = "random")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    /// Always move to the most probable successor.
    #[arg(long)]
    noise_free: bool,
}

impl RunArgs {
    fn options(&self) -> RolloutOptions {
        let opts = RolloutOptions::new(self.max_steps, self.mode.into(), self.seed);
        if self.noise_free {
            opts.noise_free()
        } else {
            opts
        }
    }
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    run: RunArgs,
    /// With more than one trial the output is a JSON summary.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchDomain {
    Pendulum,
    Maze,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, value_enum, default_value = "pendulum")]
    domain: BenchDomain,
    /// Grid side lengths; the state count is the square.
    #[arg(long, value_delimiter = ',', default_value = "11,21,31")]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.99")]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct BeliefSimCmd {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Observation model JSON `{ "symbols": S, "rows": [...] }`.
    #[arg(long, conflicts_with = "accuracy")]
    observations: Option<String>,
    /// Correct-symbol probability of a noisy identity sensor.
    #[arg(long, default_value_t = 1.0)]
    accuracy: f64,
    /// Start from a uniform belief instead of certainty about the start.
    #[arg(long)]
    uniform_prior: bool,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => EXIT_IO,
                _ => EXIT_INVALID,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Solve(s) => solve(s),
        Command::Policy(p) => {
            let model = load_model(&p.model.model)?;
            let policy = build_policy(&model, &p.policy)?;
            write_policy_csv(open_output(p.out.out.as_deref())?, &policy, model.states())
        }
        Command::Risk(r) => risk(r),
        Command::Domain(d) => domain(d),
        Command::Simulate(s) => simulate(s),
        Command::Bench(b) => bench(b),
        Command::BeliefSim(b) => belief_sim(b),
    }
}

fn solve(cmd: Solve) -> Result<()> {
    match cmd {
        Solve::Quasi {
            model,
            goal,
            source,
            out,
        } => {
            let m = load_model(&model.model)?;
            let g = graph_from_model(&m);
            let d = match (goal, source) {
                (Some(goal), _) => distance_to_goal(&g, m.states().resolve(&goal)?)?,
                (None, Some(source)) => distance_from_source(&g, m.states().resolve(&source)?)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            write_distance_csv(open_output(out.out.as_deref())?, &d, m.states())
        }
        Solve::Vi { model, goal, vi, out } => {
            let opts = vi.options();
            check_vi(&opts)?;
            let m = load_model(&model.model)?;
            let v = value_iteration(&m, m.states().resolve(&goal)?, &opts)?;
            if !v.converged {
                eprintln!("warning: no convergence after {} sweeps (residual {:e})", v.iterations, v.residual);
            }
            write_value_csv(open_output(out.out.as_deref())?, &v, m.states())
        }
        Solve::AllPairs { model, out } => {
            let m = load_model(&model.model)?;
            let d = distance_all_pairs(&graph_from_model(&m))?;
            write_distance_csv(open_output(out.out.as_deref())?, &d, m.states())
        }
    }
}

/// Range checks that should fail before any file is read.
fn check_vi(opts: &ViOptions) -> Result<()> {
    if !(opts.gamma > 0.0 && opts.gamma <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: opts.gamma,
            reason: "must lie in (0, 1]",
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: opts.tol,
            reason: "must be positive",
        });
    }
    Ok(())
}

fn build_policy(model: &MdpModel, args: &PolicyArgs) -> Result<PolicyTable> {
    if let Some(beta) = args.beta {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
                reason: "must be positive",
            });
        }
    }
    let goal = model.states().resolve(&args.goal)?;
    let opts = args.vi.options();
    let grad = match (args.policy, args.potential) {
        (Method::Vi, _) => return greedy_policy(model, &value_iteration(model, goal, &opts)?),
        (Method::Quasi, PotentialKind::Distance) => {
            let g = graph_from_model(model);
            let mut d = distance_to_goal(&g, goal)?;
            if let Some(omega) = args.omega {
                d = apply_risk_override(&d, &risk_report(model, &g, goal, args.epsilon)?.epsilon_risky, omega)?;
            }
            probabilistic_gradient(model, &d)?
        }
        (Method::Quasi, PotentialKind::Value) => gradient(model, Potential::Value(&value_iteration(model, goal, &opts)?))?,
    };
    match args.beta {
        Some(beta) => softmax_policy(&grad, beta),
        None => Ok(argmin_from_gradient(&grad)),
    }
}

#[derive(Serialize)]
struct RiskOutput {
    goal: String,
    epsilon: f64,
    reaching: Vec<String>,
    prison: Vec<String>,
    weakly_risky: Vec<String>,
    risky: Vec<String>,
    epsilon_risky: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<f64>,
    /// Distance to the goal after the override, `null` for unreachable.
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<Vec<(String, Option<f64>)>>,
}

fn risk(cmd: RiskCmd) -> Result<()> {
    let m = load_model(&cmd.model.model)?;
    let goal = m.states().resolve(&cmd.goal)?;
    let g = graph_from_model(&m);
    let report = risk_report(&m, &g, goal, cmd.epsilon)?;
    let names = |set: &StateSet| set.iter().map(|&s| m.states().name(s)).collect::<Vec<_>>();
    let distance = match cmd.omega {
        Some(omega) => {
            let d: QuasiDistanceField = apply_risk_override(&distance_to_goal(&g, goal)?, &report.epsilon_risky, omega)?;
            Some(
                (0..m.n_states())
                    .map(|s| (m.states().name(s), Some(d.value(s)).filter(|v| v.is_finite())))
                    .collect(),
            )
        }
        None => None,
    };
    let out = RiskOutput {
        goal: m.states().name(goal),
        epsilon: cmd.epsilon,
        reaching: names(&report.reaching),
        prison: names(&report.prison),
        weakly_risky: names(&report.weakly_risky),
        risky: names(&report.risky),
        epsilon_risky: names(&report.epsilon_risky),
        omega: cmd.omega,
        distance,
    };
    write_json(open_output(cmd.out.out.as_deref())?, &out)
}

fn domain(cmd: Domain) -> Result<()> {
    let (model, out) = match cmd {
        Domain::Maze {
            spec,
            random: _,
            width,
            height,
            p_lo,
            p_hi,
            solid,
            seed,
            out,
        } => {
            let spec: MazeSpec = match spec {
                Some(path) => read_json(open_input(&path)?, "maze spec")?,
                None => random_maze(width, height, p_lo, p_hi, solid, &mut ChaCha8Rng::seed_from_u64(seed))?,
            };
            (build_maze(&spec)?, out)
        }
        Domain::ExampleA { unit_cost, out } => (build_example_a(unit_cost)?, out),
        Domain::ExampleB {
            epsilon,
            omega,
            without_u2,
            out,
        } => (build_example_b(epsilon, omega, !without_u2)?, out),
        Domain::Pendulum { params, out } => (build_pendulum(&(&params).into())?.model, out),
        Domain::Dubins { params, out } => (build_dubins(&(&params).into())?.model, out),
    };
    write_model(&model, open_output(out.out.as_deref())?)
}

fn simulate(cmd: SimulateCmd) -> Result<()> {
    if cmd.trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            value: 0.0,
            reason: "need at least one trial",
        });
    }
    let m = load_model(&cmd.model.model)?;
    let policy = build_policy(&m, &cmd.policy)?;
    let start = m.states().resolve(&cmd.run.start)?;
    let goal = m.states().resolve(&cmd.policy.goal)?;
    let opts = cmd.run.options();
    let out = open_output(cmd.out.out.as_deref())?;
    if cmd.trials == 1 {
        return write_trajectory_csv(out, &rollout(&m, &policy, start, goal, &opts)?);
    }
    write_json(out, &monte_carlo(&m, &policy, start, goal, cmd.trials, &opts, None)?)
}

fn bench(cmd: BenchCmd) -> Result<()> {
    let seed = cmd.seed;
    let result = match cmd.domain {
        BenchDomain::Pendulum => benchmark(
            |n| {
                let p = build_pendulum(&PendulumParams::square(n))?;
                let goal = p.goal();
                Ok((p.model, goal))
            },
            &cmd.sizes,
            &cmd.gammas,
            cmd.repetitions,
        )?,
        BenchDomain::Maze => benchmark(
            |n| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let spec = random_maze(n, n, 0.1, 1.0, 0.2, &mut rng)?;
                Ok((build_maze(&spec)?, spec.goal))
            },
            &cmd.sizes,
            &cmd.gammas,
            cmd.repetitions,
        )?,
    };
    write_bench_csv(open_output(cmd.out.out.as_deref())?, &result)
}

fn belief_sim(cmd: BeliefSimCmd) -> Result<()> {
    let m = load_model(&cmd.model.model)?;
    let obs = match &cmd.observations {
        Some(path) => read_observation_model(open_input(path)?)?,
        None if cmd.accuracy == 1.0 => ObservationModel::identity(m.n_states()),
        None => ObservationModel::noisy_identity(m.n_states(), cmd.accuracy)?,
    };
    let policy = build_policy(&m, &cmd.policy)?;
    let start = m.states().resolve(&cmd.run.start)?;
    let goal = m.states().resolve(&cmd.policy.goal)?;
    let prior = if cmd.uniform_prior {
        Belief::uniform(m.n_states())
    } else {
        Belief::point(m.n_states(), start)?
    };
    let run = belief_rollout(&m, &policy, &obs, start, goal, &prior, &cmd.run.options())?;
    let mut out = open_output(cmd.out.out.as_deref())?;
    write_json(&mut out, &run)?;
    out.flush()?;
    Ok(())
}
