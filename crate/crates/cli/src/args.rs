use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "evaprank",
    version,
    about = "Evaporation-driven mixture flow and stochastic ranking trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Densities and velocity on a (y, t) grid, as CSV.
    Evaluate(EvaluateArgs),
    /// Front y_C(t) of a mixture, or rank trajectory x_C(t) for Pareto rates, as CSV.
    Front(FrontArgs),
    /// Run the move-to-front process; write the event log and tracked trajectories.
    Simulate(SimulateArgs),
    /// Least-squares fit of rank trajectories; prints the result as JSON.
    Fit(FitArgs),
    /// Residual, conservation and generator checks of a solution field, as JSON.
    Verify(VerifyArgs),
    /// Incomplete-gamma identities and the discrete-vs-continuum gap, as JSON.
    ParetoCheck(ParetoArgs),
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// Population size N.
    #[arg(long = "N", value_name = "N")]
    pub n: f64,
    /// Smallest rate a (per hour).
    #[arg(long)]
    pub a: f64,
    /// Pareto exponent b.
    #[arg(long)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Mixture JSON: {"components":[{"f":..,"rho":..},..]}.
    #[arg(long)]
    pub mixture: PathBuf,
    /// Initial profile JSON; uniform u_i(y,0) = ρ_i when omitted.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Positions, comma separated.
    #[arg(long = "y", value_delimiter = ',', required = true, num_args = 1..)]
    pub ys: Vec<f64>,
    /// Times, comma separated.
    #[arg(long = "t", value_delimiter = ',', required = true, num_args = 1..)]
    pub ts: Vec<f64>,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrontArgs {
    /// Mixture JSON; emits t,y_c.
    #[arg(long, conflicts_with_all = ["n", "a", "b"], required_unless_present_all = ["n", "a", "b"])]
    pub mixture: Option<PathBuf>,
    /// Pareto population size; with --a and --b emits t,x_c.
    #[arg(long = "N", value_name = "N", requires_all = ["a", "b"])]
    pub n: Option<f64>,
    #[arg(long, requires_all = ["n", "b"])]
    pub a: Option<f64>,
    #[arg(long, requires_all = ["n", "a"])]
    pub b: Option<f64>,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long)]
    pub dt: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    UniformRandom,
    ByRate,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// File of per-particle rates, one per line (`#` comments allowed).
    #[arg(long, conflicts_with_all = ["n", "a", "b"], required_unless_present_all = ["n", "a", "b"])]
    pub rates: Option<PathBuf>,
    /// Pareto rates f_i = a (N/i)^{1/b}; needs --a and --b.
    #[arg(long = "N", value_name = "N", requires_all = ["a", "b"])]
    pub n: Option<f64>,
    #[arg(long, requires_all = ["n", "b"])]
    pub a: Option<f64>,
    #[arg(long, requires_all = ["n", "a"])]
    pub b: Option<f64>,
    /// Simulated time T.
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replica index; selects the random stream.
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
    #[arg(long, value_enum, default_value_t = OrderArg::UniformRandom)]
    pub order: OrderArg,
    /// Event log CSV (t,particle,old_rank); stdout when no output is given.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Particle ids (0-based) to track, comma separated.
    #[arg(long, value_delimiter = ',', requires = "trajectories")]
    pub track: Vec<usize>,
    /// Sampling interval Δ for tracked particles.
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Tracked trajectories CSV (label,t,rank,jump_t).
    #[arg(long, requires = "track")]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MissingJump {
    /// Reject trajectories without a jump marker.
    Error,
    /// Treat the trajectory's time origin as the jump.
    Zero,
    /// Fit the jump time as an offset.
    Unknown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BRange {
    /// 0 < b < 1
    Below1,
    /// 1 < b < 2
    Between1And2,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV: label,t,rank[,jump_t].
    #[arg(long)]
    pub data: PathBuf,
    /// Fix N instead of fitting it.
    #[arg(long = "fix-N", value_name = "N", conflicts_with = "n_guess")]
    pub fix_n: Option<f64>,
    /// Starting value for a free N.
    #[arg(long = "N-guess", value_name = "N")]
    pub n_guess: Option<f64>,
    #[arg(long)]
    pub a_guess: Option<f64>,
    #[arg(long)]
    pub b_guess: Option<f64>,
    #[arg(long, value_enum, default_value_t = BRange::Below1)]
    pub b_range: BRange,
    /// How to treat trajectories without a jump_t marker.
    #[arg(long, value_enum, default_value_t = MissingJump::Error)]
    pub missing_jump: MissingJump,
    /// Exclude observations with t in [LO, HI]; repeatable.
    #[arg(long, value_name = "LO:HI")]
    pub mask: Vec<String>,
    /// Per-observation weights, one per line, trajectory by trajectory.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Start only from the initial guess.
    #[arg(long)]
    pub single_start: bool,
    #[arg(long, default_value_t = evaprank_core::fit::MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Write residuals (label,t,residual) to this CSV.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub mixture: PathBuf,
    /// Initial profile JSON; uniform when omitted.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Interior y grid size.
    #[arg(long, default_value_t = 39)]
    pub ny: usize,
    /// Times for the residual and conservation checks, comma separated.
    #[arg(long = "t", value_delimiter = ',', default_values_t = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0])]
    pub ts: Vec<f64>,
    /// Absolute quadrature tolerance.
    #[arg(long, default_value_t = 1e-11)]
    pub quad_tol: f64,
    /// Horizon of the generator ODE.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub ode_tol: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
