use std::str::FromStr;

use log::warn;

use super::{fields_at, Dynamics};
use crate::error::{config, Error, Result};
use crate::game::GameSpec;
use crate::lyapunov::lyapunov_at;
use crate::state::{DualState, PrimalState};

/// Mass drift above which the post-step repair kicks in.
const REPAIR_THRESHOLD: f64 = 1e-12;
/// Repairs larger than this are reported through `log::warn!`.
const REPAIR_WARN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => config(format!("unknown integrator '{other}' (euler|rk4)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Step size in simulated seconds.
    pub step: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    /// Threshold on `|dx/dt|_inf + |dmu/dt|_inf`.
    pub convergence_tol: f64,
    /// Consecutive steps below `convergence_tol` required to stop.
    pub convergence_window: usize,
    /// Keep every N-th state (the initial and final states are always kept).
    pub record_every: usize,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            step: 0.01,
            horizon: 200.0,
            integrator: Integrator::Euler,
            convergence_tol: 1e-6,
            convergence_window: 100,
            record_every: 1,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return config(format!("step must be positive, got {}", self.step));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step * (1.0 - 1e-12)) {
            return config(format!(
                "horizon {} must be at least one step",
                self.horizon
            ));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return config("convergence tolerance must be positive");
        }
        if self.convergence_window == 0 || self.record_every == 0 {
            return config("convergence window and record interval must be at least 1");
        }
        Ok(())
    }

    fn total_steps(&self) -> usize {
        (self.horizon / self.step - 1e-9).ceil().max(1.0) as usize
    }
}

/// Per-state diagnostics stored alongside a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// `p(x)`, absent for potential-free games.
    pub potential: Option<f64>,
    /// `g(x)` including the null entry.
    pub constraints: Vec<f64>,
    pub lyapunov: f64,
    pub primal_field_norm: f64,
    pub dual_field_norm: f64,
}

impl StepDiagnostics {
    /// `max_k g_k(x)` over all dual strategies (so never below zero).
    pub fn g_max(&self) -> f64 {
        self.constraints
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub primal: Vec<PrimalState>,
    pub dual: Vec<DualState>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub step: f64,
    /// Integration steps actually taken.
    pub steps: usize,
    pub converged: bool,
    /// Largest single repair (clipped mass plus mass drift) applied.
    pub max_repair: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_primal(&self) -> &PrimalState {
        self.primal
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_dual(&self) -> &DualState {
        self.dual
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_diagnostics(&self) -> &StepDiagnostics {
        self.diagnostics
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory holds the initial state")
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn axpy(base: &[f64], h: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + h * d).collect()
}

/// Clip negatives and rescale to `mass` when the drift exceeds the repair
/// threshold. Returns the size of the repair.
fn repair(v: &mut [f64], mass: f64) -> f64 {
    let mut clipped = 0.0;
    for e in v.iter_mut() {
        if *e < 0.0 {
            clipped -= *e;
            *e = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    let drift = (total - mass).abs();
    if drift > REPAIR_THRESHOLD && total > 0.0 {
        let scale = mass / total;
        v.iter_mut().for_each(|e| *e *= scale);
    }
    clipped + if drift > REPAIR_THRESHOLD { drift } else { 0.0 }
}

fn diagnostics(
    game: &GameSpec,
    dynamics: &Dynamics,
    x: &[f64],
    mu: &[f64],
    dx: &[f64],
    dmu: &[f64],
) -> Result<StepDiagnostics> {
    Ok(StepDiagnostics {
        potential: game.potential_at(x).ok(),
        constraints: game.constraint_values_at(x),
        lyapunov: lyapunov_at(game, dynamics, x, mu)?,
        primal_field_norm: inf_norm(dx),
        dual_field_norm: inf_norm(dmu),
    })
}

/// Fixed-step integration of the coupled primal-dual system.
///
/// Stops at the horizon, or earlier once the combined field norm stays below
/// `convergence_tol` for `convergence_window` consecutive evaluations.
pub fn integrate(
    game: &GameSpec,
    dynamics: &Dynamics,
    x0: &PrimalState,
    mu0: &DualState,
    params: &SimParams,
) -> Result<Trajectory> {
    params.validate()?;
    game.check_primal(x0)?;
    game.check_dual(mu0)?;
    let (m_p, m_d) = (game.primal_mass(), game.dual_mass());
    if (x0.mass() - m_p).abs() > 0.0 || (mu0.mass() - m_d).abs() > 0.0 {
        return config("initial states must carry the game's population masses");
    }

    let h = params.step;
    let total = params.total_steps();
    let mut x = x0.as_slice().to_vec();
    let mut mu = mu0.as_slice().to_vec();

    let mut traj = Trajectory {
        times: Vec::new(),
        primal: Vec::new(),
        dual: Vec::new(),
        diagnostics: Vec::new(),
        step: h,
        steps: 0,
        converged: false,
        max_repair: 0.0,
    };
    let mut below = 0usize;
    let mut last_recorded = usize::MAX;

    let mut k = 0usize;
    loop {
        let (dx, dmu) = fields_at(game, dynamics, &x, &mu);
        if dx.iter().chain(&dmu).any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k,
                time: k as f64 * h,
            });
        }
        let norm = inf_norm(&dx) + inf_norm(&dmu);
        below = if norm < params.convergence_tol {
            below + 1
        } else {
            0
        };
        let done = below >= params.convergence_window || k == total;

        if k.is_multiple_of(params.record_every) || done {
            traj.times.push(k as f64 * h);
            traj.primal.push(PrimalState::from_raw(x.clone(), m_p));
            traj.dual.push(DualState::from_raw(mu.clone(), m_d));
            traj.diagnostics
                .push(diagnostics(game, dynamics, &x, &mu, &dx, &dmu)?);
            last_recorded = k;
        }
        if done {
            traj.converged = below >= params.convergence_window;
            traj.steps = k;
            break;
        }

        let (mut nx, mut nmu) = match params.integrator {
            Integrator::Euler => (axpy(&x, h, &dx), axpy(&mu, h, &dmu)),
            Integrator::Rk4 => {
                let (k2x, k2m) = fields_at(
                    game,
                    dynamics,
                    &axpy(&x, 0.5 * h, &dx),
                    &axpy(&mu, 0.5 * h, &dmu),
                );
                let (k3x, k3m) = fields_at(
                    game,
                    dynamics,
                    &axpy(&x, 0.5 * h, &k2x),
                    &axpy(&mu, 0.5 * h, &k2m),
                );
                let (k4x, k4m) = fields_at(game, dynamics, &axpy(&x, h, &k3x), &axpy(&mu, h, &k3m));
                let comb = |base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
                    (0..base.len())
                        .map(|i| base[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                        .collect()
                };
                (
                    comb(&x, &dx, &k2x, &k3x, &k4x),
                    comb(&mu, &dmu, &k2m, &k3m, &k4m),
                )
            }
        };
        if nx.iter().chain(&nmu).any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: k + 1,
                time: (k + 1) as f64 * h,
            });
        }
        let fix = repair(&mut nx, m_p).max(repair(&mut nmu, m_d));
        if fix > REPAIR_WARN {
            warn!("step {}: simplex repair of size {fix:.3e}", k + 1);
        }
        traj.max_repair = traj.max_repair.max(fix);
        x = nx;
        mu = nmu;
        k += 1;
    }
    debug_assert_eq!(last_recorded, traj.steps);
    Ok(traj)
}
