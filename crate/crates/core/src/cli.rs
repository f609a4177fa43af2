//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 no convergence,
//! 3 failed verification or acceptance check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{
    integrate, sample_simplex, Dynamics, Integrator, Protocol, SimParams, Trajectory,
};
use crate::equilibrium::{
    dual_mass_bound, in_equilibria_set, oracle_solve, EquilibriumReport, SlaterPoint,
};
use crate::error::{config, Error, Result};
use crate::game::GameSpec;
use crate::games;
use crate::io::{self, StateFile};
use crate::lyapunov::{monotonicity_audit, LyapunovAudit};
use crate::state::{DualState, PrimalState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "POPDYN_OUT_DIR";

/// Tolerance used when classifying a simulated endpoint.
pub const REPORT_TOL: f64 = 1e-3;
/// Per-transition slack of the Lyapunov monotonicity audit.
pub const AUDIT_TOL: f64 = 1e-8;
/// Share of audited transitions that must not increase `V`.
pub const AUDIT_FRACTION: f64 = 0.999;
/// `V` at a converged endpoint must not exceed this.
pub const ENDPOINT_LYAPUNOV: f64 = 1e-9;
pub const ORACLE_RESOLUTION: u32 = 200;
pub const ORACLE_REFINE: usize = 2000;
/// Expected RPS endpoint of the reference run.
pub const RPS_TARGET: [f64; 3] = [0.313, 0.044, 0.643];

#[derive(Debug, Parser)]
#[command(
    name = "popdyn",
    version,
    about = "Primal-dual evolutionary dynamics for constrained population games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the primal-dual dynamics and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Check whether a state lies in the equilibria set.
    Verify(VerifyArgs),
    /// Evaluate the dual-mass bound at a Slater point.
    Bound(BoundArgs),
    /// Rerun a reference experiment and check it against its thresholds.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DynamicsArgs {
    /// Revision protocol for both populations (smith, smith-quadratic, saturating).
    #[arg(long, default_value = "smith")]
    pub protocol: String,
    /// Override the dual population's protocol.
    #[arg(long)]
    pub dual_protocol: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Simulated seconds.
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    /// Convergence threshold on the combined field norm.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Consecutive steps below --tol needed to stop.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
    pub integrator: IntegratorArg,
    /// Keep every N-th state in the output.
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

impl From<IntegratorArg> for Integrator {
    fn from(a: IntegratorArg) -> Self {
        match a {
            IntegratorArg::Euler => Integrator::Euler,
            IntegratorArg::Rk4 => Integrator::Rk4,
        }
    }
}

impl DynamicsArgs {
    fn dynamics(&self) -> Result<Dynamics> {
        let primal = Protocol::by_name(&self.protocol)?;
        let dual = match &self.dual_protocol {
            Some(name) => Protocol::by_name(name)?,
            None => primal.clone(),
        };
        Ok(Dynamics::new(primal, dual))
    }

    fn params(&self, seed: u64) -> SimParams {
        SimParams {
            step: self.step,
            horizon: self.horizon,
            integrator: self.integrator.into(),
            convergence_tol: self.tol,
            convergence_window: self.window,
            record_every: self.record_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Builtin name (paper-congestion, paper-rps) or path to a game JSON file.
    #[arg(long)]
    pub game: String,
    #[command(flatten)]
    pub dynamics: DynamicsArgs,
    /// Seed for the random initial state.
    #[arg(long, default_value_t = 0, conflicts_with = "seeds")]
    pub seed: u64,
    /// Batch of seeds, `a..b` (half-open) or `a..=b`, run concurrently.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Initial primal state; drawn uniformly from the simplex when absent.
    #[arg(long)]
    pub x0: Option<String>,
    /// Initial dual state; all dual mass on the null strategy when absent.
    #[arg(long)]
    pub mu0: Option<String>,
    /// Trajectory CSV path; relative paths resolve under $POPDYN_OUT_DIR.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the final (x, mu) as a state JSON file.
    #[arg(long)]
    pub final_state: Option<PathBuf>,
    /// Tolerance of the endpoint equilibrium report.
    #[arg(long, default_value_t = REPORT_TOL)]
    pub report_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub game: String,
    /// JSON file `{"x": [...], "mu": [...]}`.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = REPORT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub game: String,
    /// Strictly positive, strictly feasible primal state.
    #[arg(long)]
    pub x_tilde: String,
    /// Upper bound on the optimal potential; taken from the oracle when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub p_star_upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Congestion,
    Rps,
}

#[derive(Debug, Clone, Args)]
pub struct ReproArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Seed for the random congestion start.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Output directory; defaults to `repro-<experiment>` under $POPDYN_OUT_DIR.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out`, errors to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Repro(a) => cmd_repro(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_root().join(path)
    }
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `a..b` or `a..=b`.
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let parse = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("bad seed '{s}' in '{text}'")))
    };
    let (lo, hi) = if let Some((a, b)) = text.split_once("..=") {
        (
            parse(a)?,
            parse(b)?
                .checked_add(1)
                .ok_or_else(|| Error::Config("seed range overflow".into()))?,
        )
    } else if let Some((a, b)) = text.split_once("..") {
        (parse(a)?, parse(b)?)
    } else {
        return config(format!("seed range '{text}' must look like a..b or a..=b"));
    };
    if lo >= hi {
        return config(format!("seed range '{text}' is empty"));
    }
    Ok((lo..hi).collect())
}

fn with_seed_suffix(path: &Path, seed: u64) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "trajectory".into(), |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}_seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_seed{seed}"),
    };
    path.with_file_name(name)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    seed: u64,
    trajectory: String,
    converged: bool,
    steps: usize,
    final_time: f64,
    primal_field_norm: f64,
    dual_field_norm: f64,
    lyapunov: f64,
    potential: Option<f64>,
    g_max: f64,
    max_repair: f64,
    x: Vec<f64>,
    mu: Vec<f64>,
    report: EquilibriumReport,
}

fn summarize(
    game: &GameSpec,
    traj: &Trajectory,
    seed: u64,
    path: &Path,
    tol: f64,
) -> Result<RunSummary> {
    let d = traj.final_diagnostics();
    Ok(RunSummary {
        seed,
        trajectory: path.display().to_string(),
        converged: traj.converged,
        steps: traj.steps,
        final_time: traj.final_time(),
        primal_field_norm: d.primal_field_norm,
        dual_field_norm: d.dual_field_norm,
        lyapunov: d.lyapunov,
        potential: d.potential,
        g_max: d.g_max(),
        max_repair: traj.max_repair,
        x: traj.final_primal().as_slice().to_vec(),
        mu: traj.final_dual().as_slice().to_vec(),
        report: in_equilibria_set(game, traj.final_primal(), traj.final_dual(), tol)?,
    })
}

fn initial_states(
    game: &GameSpec,
    args: &SimulateArgs,
    seed: u64,
) -> Result<(PrimalState, DualState)> {
    let x0 = match &args.x0 {
        Some(text) => game.primal_state(io::parse_vector(text)?)?,
        None => sample_simplex(game.n(), game.primal_mass(), seed),
    };
    let mu0 = match &args.mu0 {
        Some(text) => game.dual_state(io::parse_vector(text)?)?,
        None => DualState::on_null(game.q(), game.dual_mass())?,
    };
    Ok((x0, mu0))
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let game = io::load_game(&args.game)?;
    let dynamics = args.dynamics.dynamics()?;
    let base = resolve(args.out.as_deref().unwrap_or(Path::new("trajectory.csv")));
    let seeds = match &args.seeds {
        Some(range) => parse_seed_range(range)?,
        None => vec![args.seed],
    };
    let batch = args.seeds.is_some();
    if batch && args.final_state.is_some() {
        return config("--final-state cannot be combined with --seeds");
    }
    if let Some(parent) = base.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }

    let run_one = |seed: u64| -> Result<RunSummary> {
        let (x0, mu0) = initial_states(&game, args, seed)?;
        let traj = integrate(&game, &dynamics, &x0, &mu0, &args.dynamics.params(seed))?;
        let path = if batch {
            with_seed_suffix(&base, seed)
        } else {
            base.clone()
        };
        io::save_trajectory_csv(&path, &game, &traj)?;
        if let Some(fs) = &args.final_state {
            io::write_json(
                &resolve(fs),
                &StateFile::from_states(traj.final_primal(), traj.final_dual()),
            )?;
        }
        summarize(&game, &traj, seed, &path, args.report_tol)
    };
    let summaries = seeds
        .par_iter()
        .map(|s| run_one(*s))
        .collect::<Result<Vec<_>>>()?;
    let all_converged = summaries.iter().all(|s| s.converged);
    if batch {
        print_json(out, &summaries)?;
    } else {
        print_json(out, &summaries[0])?;
    }
    Ok(if all_converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let game = io::load_game(&args.game)?;
    let (x, mu) = io::read_state(&args.state)?.into_states(&game)?;
    let report = in_equilibria_set(&game, &x, &mu, args.tol)?;
    print_json(out, &report)?;
    Ok(if report.in_e() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_bound(args: &BoundArgs, out: &mut dyn Write) -> Result<i32> {
    let game = io::load_game(&args.game)?;
    let slater = SlaterPoint::new(&game, game.primal_state(io::parse_vector(&args.x_tilde)?)?)?;
    let (p_star_upper, source) = match args.p_star_upper {
        Some(p) => (p, "flag"),
        None => (
            oracle_solve(&game, ORACLE_RESOLUTION, ORACLE_REFINE, 0)?.upper_bound(),
            "oracle",
        ),
    };
    let bound = dual_mass_bound(&game, &slater, p_star_upper)?;
    print_json(
        out,
        &json!({
            "bound": bound,
            "p_star_upper": p_star_upper,
            "p_star_source": source,
            "p_x_tilde": game.potential(slater.state())?,
            "slater_margin": slater.margin(),
            "configured_dual_mass": game.dual_mass(),
            "sufficient": game.dual_mass() >= bound,
        }),
    )?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Value,
    pub threshold: Value,
}

impl Check {
    fn new(name: &str, passed: bool, value: impl Serialize, threshold: impl Serialize) -> Self {
        Check {
            name: name.into(),
            passed,
            value: serde_json::to_value(value).unwrap_or(Value::Null),
            threshold: serde_json::to_value(threshold).unwrap_or(Value::Null),
        }
    }
}

/// Everything a reference run produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub game: GameSpec,
    pub trajectory: Trajectory,
    pub audit: LyapunovAudit,
    pub report: EquilibriumReport,
    pub checks: Vec<Check>,
}

impl ReproOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn inf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Runs a reference experiment with Smith dynamics and evaluates its checks.
pub fn run_experiment(
    experiment: Experiment,
    seed: u64,
    params: &SimParams,
) -> Result<ReproOutcome> {
    let dynamics = Dynamics::smith();
    let (game, x0, mu0) = match experiment {
        Experiment::Congestion => {
            let g = games::reference_congestion();
            let x0 = sample_simplex(g.n(), g.primal_mass(), seed);
            let mu0 = DualState::on_null(g.q(), g.dual_mass())?;
            (g, x0, mu0)
        }
        Experiment::Rps => {
            let g = games::reference_rps();
            let x0 = g.primal_state(vec![1.0 / 3.0; 3])?;
            let mu0 = DualState::on_null(g.q(), g.dual_mass())?;
            (g, x0, mu0)
        }
    };
    let trajectory = integrate(&game, &dynamics, &x0, &mu0, params)?;
    let audit = monotonicity_audit(&game, &dynamics, &trajectory, AUDIT_TOL)?;
    let x = trajectory.final_primal().as_slice();
    let report = in_equilibria_set(
        &game,
        trajectory.final_primal(),
        trajectory.final_dual(),
        REPORT_TOL,
    )?;
    let v_end = trajectory.final_diagnostics().lyapunov;

    let mut checks = vec![Check::new(
        "converged",
        trajectory.converged,
        trajectory.final_time(),
        params.horizon,
    )];
    match experiment {
        Experiment::Congestion => {
            let g_max = trajectory.final_diagnostics().g_max();
            checks.push(Check::new("feasible", g_max <= 1e-3, g_max, 1e-3));
            let oracle = oracle_solve(&game, ORACLE_RESOLUTION, ORACLE_REFINE, 0)?;
            let dist = inf_distance(x, &oracle.x);
            checks.push(Check::new("oracle_match", dist <= 1e-2, dist, 1e-2));
            checks.push(Check::new(
                "in_equilibria_set",
                report.in_e(),
                report.verdict,
                REPORT_TOL,
            ));
        }
        Experiment::Rps => {
            let dist = inf_distance(x, &RPS_TARGET);
            checks.push(Check::new("endpoint_match", dist <= 1e-2, dist, 1e-2));
            let load = x[0] * x[0] + x[1] * x[1];
            checks.push(Check::new(
                "constraint_satisfied",
                load <= 0.1 + 1e-6,
                load,
                0.1 + 1e-6,
            ));
            checks.push(Check::new("constraint_active", load >= 0.098, load, 0.098));
        }
    }
    let frac = audit.nonincreasing_fraction();
    checks.push(Check::new(
        "lyapunov_monotone",
        frac >= AUDIT_FRACTION,
        frac,
        AUDIT_FRACTION,
    ));
    checks.push(Check::new(
        "lyapunov_nonnegative",
        audit.nonnegativity_ok,
        audit.values.iter().copied().fold(f64::INFINITY, f64::min),
        0.0,
    ));
    checks.push(Check::new(
        "lyapunov_endpoint",
        v_end <= ENDPOINT_LYAPUNOV,
        v_end,
        ENDPOINT_LYAPUNOV,
    ));

    Ok(ReproOutcome {
        game,
        trajectory,
        audit,
        report,
        checks,
    })
}

fn cmd_repro(args: &ReproArgs, out: &mut dyn Write) -> Result<i32> {
    let name = match args.experiment {
        Experiment::Congestion => "congestion",
        Experiment::Rps => "rps",
    };
    let dir = match &args.out_dir {
        Some(d) => resolve(d),
        None => out_root().join(format!("repro-{name}")),
    };
    std::fs::create_dir_all(&dir)?;
    let params = SimParams {
        step: args.step,
        horizon: args.horizon,
        record_every: args.record_every,
        seed: args.seed,
        ..SimParams::default()
    };
    let outcome = run_experiment(args.experiment, args.seed, &params)?;
    let traj = &outcome.trajectory;

    io::save_trajectory_csv(&dir.join("trajectory.csv"), &outcome.game, traj)?;
    io::write_json(
        &dir.join("audit.json"),
        &json!({
            "transitions": outcome.audit.transitions(),
            "tolerance": AUDIT_TOL,
            "max_increase": outcome.audit.max_increase,
            "violation_steps": outcome.audit.violation_steps,
            "nonincreasing_fraction": outcome.audit.nonincreasing_fraction(),
            "nonnegativity_ok": outcome.audit.nonnegativity_ok,
            "initial_value": outcome.audit.values.first(),
            "final_value": outcome.audit.values.last(),
        }),
    )?;
    io::write_json(&dir.join("report.json"), &outcome.report)?;
    io::write_json(
        &dir.join("final_state.json"),
        &StateFile::from_states(traj.final_primal(), traj.final_dual()),
    )?;

    let summary = json!({
        "experiment": name,
        "seed": args.seed,
        "output_dir": dir.display().to_string(),
        "steps": traj.steps,
        "final_time": traj.final_time(),
        "x": traj.final_primal().as_slice(),
        "passed": outcome.passed(),
        "checks": outcome.checks,
    });
    io::write_json(&dir.join("checks.json"), &summary)?;
    print_json(out, &summary)?;
    if outcome.passed() {
        Ok(EXIT_OK)
    } else {
        eprintln!("failed checks: {}", outcome.failed().join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}
