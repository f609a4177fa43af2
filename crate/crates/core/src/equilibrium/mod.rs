//! Membership tests for the equilibria set, saddle-point and dual-mass
//! checks, and an independent global oracle for the constrained program.

mod oracle;

pub use oracle::{oracle_solve, OracleSolution};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{sample_dual, sample_primal};
use crate::error::{config, Error, Result};
use crate::game::GameSpec;
use crate::state::{DualState, PrimalState};

/// Default Nash tolerance (support threshold and payoff slack).
pub const NASH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashTest {
    pub passed: bool,
    pub residual: f64,
}

/// `max over supported i of (max_j u_j - u_i)`; 0 on an empty support.
fn support_gap(payoff: &[f64], state: &[f64], tol: f64) -> f64 {
    let best = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    payoff
        .iter()
        .zip(state)
        .filter(|(_, s)| **s > tol)
        .map(|(u, _)| best - u)
        .fold(0.0, f64::max)
}

/// Every used primal strategy earns the maximal primal-dual payoff.
pub fn is_primal_nash(
    game: &GameSpec,
    x: &PrimalState,
    mu: &DualState,
    tol: f64,
) -> Result<NashTest> {
    let payoff = game.primal_dual_payoff(x, mu)?;
    let residual = support_gap(&payoff, x.as_slice(), tol);
    Ok(NashTest {
        passed: residual <= tol,
        residual,
    })
}

/// Every used dual strategy sits on a maximal `g_k(x)`.
pub fn is_dual_nash(
    game: &GameSpec,
    mu: &DualState,
    x: &PrimalState,
    tol: f64,
) -> Result<NashTest> {
    game.check_dual(mu)?;
    let g = game.constraint_values(x)?;
    let residual = support_gap(&g, mu.as_slice(), tol);
    Ok(NashTest {
        passed: residual <= tol,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "in_E")]
    InE,
    #[serde(rename = "not_in_E")]
    NotInE,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub primal_nash_residual: f64,
    pub dual_nash_residual: f64,
    /// `max(0, max_k g_k(x))` over the real constraints.
    pub feasibility_residual: f64,
    /// `max mu_k * (-g_k(x))` over constraints with `g_k(x) < -tol`.
    pub complementarity_residual: f64,
    /// Linearized saddle gap: `(m_P max_j f^mu_j - x . f^mu) + (m_D max_k g_k - mu . g)`.
    /// Bounds both sides of the saddle inequality when `L` is concave in `x`.
    pub saddle_violation: f64,
    /// `mu_1..mu_q`, the Lagrange multipliers the dual state encodes.
    pub multipliers: Vec<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl EquilibriumReport {
    pub fn in_e(&self) -> bool {
        self.verdict == Verdict::InE
    }
}

/// Combined report; membership is decided by the two Nash tests alone.
pub fn in_equilibria_set(
    game: &GameSpec,
    x: &PrimalState,
    mu: &DualState,
    tol: f64,
) -> Result<EquilibriumReport> {
    let primal = is_primal_nash(game, x, mu, tol)?;
    let dual = is_dual_nash(game, mu, x, tol)?;
    let payoff = game.primal_dual_payoff(x, mu)?;
    let g = game.constraint_values(x)?;
    let xs = x.as_slice();
    let ms = mu.as_slice();

    let feasibility_residual = g[1..].iter().copied().fold(0.0, f64::max);
    let complementarity_residual = g[1..]
        .iter()
        .zip(&ms[1..])
        .filter(|(gk, _)| **gk < -tol)
        .map(|(gk, m)| m * (-gk))
        .fold(0.0, f64::max);
    let best_payoff = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_g = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let primal_gap = game.primal_mass() * best_payoff - dot(xs, &payoff);
    let dual_gap = game.dual_mass() * best_g - dot(ms, &g);

    Ok(EquilibriumReport {
        primal_nash_residual: primal.residual,
        dual_nash_residual: dual.residual,
        feasibility_residual,
        complementarity_residual,
        saddle_violation: primal_gap.max(0.0) + dual_gap.max(0.0),
        multipliers: ms[1..].to_vec(),
        tolerance: tol,
        verdict: if primal.passed && dual.passed {
            Verdict::InE
        } else {
            Verdict::NotInE
        },
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Strictly positive, strictly feasible primal state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterPoint {
    x: PrimalState,
    margin: f64,
}

impl SlaterPoint {
    pub fn new(game: &GameSpec, x: PrimalState) -> Result<Self> {
        game.check_primal(&x)?;
        if let Some((i, v)) = x.as_slice().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::InvalidState(format!(
                "Slater point needs strictly positive entries; x[{}] = {v}",
                i + 1
            )));
        }
        let g = game.constraint_values(&x)?;
        if let Some((k, v)) = g.iter().enumerate().skip(1).find(|(_, v)| **v >= 0.0) {
            return Err(Error::SlaterViolation {
                index: k,
                value: *v,
            });
        }
        let margin = g[1..].iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        Ok(Self { x, margin })
    }

    pub fn state(&self) -> &PrimalState {
        &self.x
    }

    /// `min_k |g_k(x~)|`; infinite when there are no constraints.
    pub fn margin(&self) -> f64 {
        self.margin
    }
}

/// Smallest dual mass certified by the Slater bound:
/// `(p_star_upper - p(x~)) / min_k |g_k(x~)|`.
pub fn dual_mass_bound(game: &GameSpec, slater: &SlaterPoint, p_star_upper: f64) -> Result<f64> {
    let margin = slater.margin();
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::SlaterViolation {
            index: 0,
            value: margin,
        });
    }
    let p_tilde = game.potential(slater.state())?;
    let numerator = p_star_upper - p_tilde;
    if numerator < 0.0 {
        return config(format!(
            "p* upper bound {p_star_upper} is below p(x~) = {p_tilde}; it cannot bound the optimum"
        ));
    }
    if margin.is_infinite() {
        return Ok(0.0);
    }
    Ok(numerator / margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleCheck {
    /// `max(0, max_x L(x, mu*) - L(x*, mu*))` over the samples.
    pub primal_violation: f64,
    /// `max(0, max_mu L(x*, mu*) - L(x*, mu))` over the samples.
    pub dual_violation: f64,
    pub samples: usize,
}

/// Sampling test of `L(x, mu*) <= L(x*, mu*) <= L(x*, mu)`.
pub fn saddle_check(
    game: &GameSpec,
    x_star: &PrimalState,
    mu_star: &DualState,
    samples: usize,
    seed: u64,
) -> Result<SaddleCheck> {
    let center = game.lagrangian(x_star, mu_star)?;
    if samples == 0 {
        warn!("saddle_check called with zero samples; reporting no violation");
        return Ok(SaddleCheck {
            primal_violation: 0.0,
            dual_violation: 0.0,
            samples,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primal_violation: f64 = 0.0;
    let mut dual_violation: f64 = 0.0;
    for _ in 0..samples {
        let x = sample_primal(&mut rng, game.n(), game.primal_mass());
        let mu = sample_dual(&mut rng, game.q(), game.dual_mass());
        primal_violation = primal_violation.max(game.lagrangian(&x, mu_star)? - center);
        dual_violation = dual_violation.max(center - game.lagrangian(x_star, &mu)?);
    }
    Ok(SaddleCheck {
        primal_violation,
        dual_violation,
        samples,
    })
}
