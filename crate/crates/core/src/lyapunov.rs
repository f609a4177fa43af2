//! Lyapunov function of the primal-dual system and trajectory audits.
//!
//! ```text
//! V(x, mu) = sum_i x_i sum_j P_i^j + sum_k mu_k sum_l Phi_k^l
//! P_i^j    = int_0^{f^mu_j - f^mu_i} rho
//! Phi_k^l  = int_0^{g_l - g_k} phi
//! ```

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{pairwise_field, Dynamics, Protocol, Trajectory};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::state::{DualState, PrimalState};

/// Values below this are still considered nonnegative.
pub const NONNEGATIVITY_SLACK: f64 = 1e-12;

/// Returns `sum_i z_i Gamma_i` and the vector `Gamma_i = sum_j A(u_j - u_i)`
/// with `A` the protocol antiderivative.
fn pairwise_integrals(
    payoff: &[f64],
    state: &[f64],
    protocol: &Protocol,
    population: &str,
) -> Result<(f64, Vec<f64>)> {
    let n = payoff.len();
    let mut gamma = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = protocol
                .antiderivative(payoff[j] - payoff[i])
                .map_err(|e| Error::Numeric(format!("{population} pair ({i}, {j}): {e}")))?;
            gamma[i] += a;
        }
    }
    let total = state.iter().zip(&gamma).map(|(s, g)| s * g).sum();
    Ok((total, gamma))
}

pub(crate) fn lyapunov_at(
    game: &GameSpec,
    dynamics: &Dynamics,
    x: &[f64],
    mu: &[f64],
) -> Result<f64> {
    let payoff = game.primal_dual_payoff_at(x, mu);
    let g = game.constraint_values_at(x);
    let (vp, _) = pairwise_integrals(&payoff, x, &dynamics.primal, "primal")?;
    let (vd, _) = pairwise_integrals(&g, mu, &dynamics.dual, "dual")?;
    Ok(vp + vd)
}

/// `V(x, mu)`; zero exactly on the equilibria set.
pub fn lyapunov_value(
    game: &GameSpec,
    dynamics: &Dynamics,
    x: &PrimalState,
    mu: &DualState,
) -> Result<f64> {
    game.check_primal(x)?;
    game.check_dual(mu)?;
    lyapunov_at(game, dynamics, x.as_slice(), mu.as_slice())
}

/// Terms of `dV/dt` along the continuous flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseTerms {
    /// `Gamma_P . dx/dt`
    pub primal_flow: f64,
    /// `dx/dt' Df^mu dx/dt`
    pub curvature: f64,
    /// `Gamma_Phi . dmu/dt`
    pub dual_flow: f64,
}

impl DecreaseTerms {
    pub fn total(&self) -> f64 {
        self.primal_flow + self.curvature + self.dual_flow
    }
}

/// Analytic time derivative of `V` split into its three terms. The cross
/// terms through `Dg` cancel and are not assembled.
pub fn decrease_decomposition(
    game: &GameSpec,
    dynamics: &Dynamics,
    x: &PrimalState,
    mu: &DualState,
) -> Result<DecreaseTerms> {
    let payoff = game.primal_dual_payoff(x, mu)?;
    let g = game.constraint_values(x)?;
    let dx = pairwise_field(&payoff, x.as_slice(), &dynamics.primal);
    let dmu = pairwise_field(&g, mu.as_slice(), &dynamics.dual);
    let (_, gamma_p) = pairwise_integrals(&payoff, x.as_slice(), &dynamics.primal, "primal")?;
    let (_, gamma_phi) = pairwise_integrals(&g, mu.as_slice(), &dynamics.dual, "dual")?;
    let jac: DMatrix<f64> = game.primal_dual_jacobian(x, mu)?;
    let dxv = DVector::from_column_slice(&dx);
    Ok(DecreaseTerms {
        primal_flow: gamma_p.iter().zip(&dx).map(|(a, b)| a * b).sum(),
        curvature: dxv.dot(&(&jac * &dxv)),
        dual_flow: gamma_phi.iter().zip(&dmu).map(|(a, b)| a * b).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovAudit {
    pub values: Vec<f64>,
    /// Largest `V(t + h) - V(t)` between consecutive recorded states.
    pub max_increase: f64,
    /// Indices `s` where `V(s + 1) - V(s)` exceeded the audit tolerance.
    pub violation_steps: Vec<usize>,
    pub nonnegativity_ok: bool,
}

impl LyapunovAudit {
    pub fn transitions(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Share of transitions that did not increase `V` beyond the tolerance.
    pub fn nonincreasing_fraction(&self) -> f64 {
        let n = self.transitions();
        if n == 0 {
            return 1.0;
        }
        1.0 - self.violation_steps.len() as f64 / n as f64
    }
}

/// Re-evaluates `V` on every recorded state of `trajectory`.
pub fn monotonicity_audit(
    game: &GameSpec,
    dynamics: &Dynamics,
    trajectory: &Trajectory,
    audit_tol: f64,
) -> Result<LyapunovAudit> {
    if trajectory.is_empty() {
        return Err(Error::Config("cannot audit an empty trajectory".into()));
    }
    let values = trajectory
        .primal
        .iter()
        .zip(&trajectory.dual)
        .map(|(x, mu)| lyapunov_value(game, dynamics, x, mu))
        .collect::<Result<Vec<_>>>()?;
    let mut max_increase = if values.len() > 1 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let mut violation_steps = Vec::new();
    for (s, w) in values.windows(2).enumerate() {
        let inc = w[1] - w[0];
        max_increase = max_increase.max(inc);
        if inc > audit_tol {
            violation_steps.push(s);
        }
    }
    let nonnegativity_ok = values.iter().all(|v| *v >= -NONNEGATIVITY_SLACK);
    Ok(LyapunovAudit {
        values,
        max_increase,
        violation_steps,
        nonnegativity_ok,
    })
}
