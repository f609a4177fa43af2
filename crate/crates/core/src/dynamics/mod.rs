//! Mean dynamics of both populations and their fixed-step integration.
//!
//! Both populations follow the same pairwise-comparison form
//!
//! ```text
//! dz_i/dt = sum_j ( z_j * rho(u_i - u_j) - z_i * rho(u_j - u_i) )
//! ```
//!
//! with payoffs `u = f^mu(x, mu)` for the primal population and `u = g(x)`
//! for the dual one.

mod integrate;
mod protocol;

pub use integrate::{integrate, Integrator, SimParams, StepDiagnostics, Trajectory};
pub use protocol::{Dynamics, Protocol, QUADRATURE_TOL};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::game::GameSpec;
use crate::state::{DualState, PrimalState};

/// Pairwise-comparison field for one population.
///
/// Every pair `(a, b)` contributes one net flow that is added to `a` and
/// subtracted from `b`, so the components cancel pairwise and a zero entry
/// never receives a negative contribution.
pub fn pairwise_field(payoff: &[f64], state: &[f64], protocol: &Protocol) -> Vec<f64> {
    let n = payoff.len();
    let mut out = vec![0.0; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let into_a = state[b] * protocol.value(payoff[a] - payoff[b]);
            let into_b = state[a] * protocol.value(payoff[b] - payoff[a]);
            let flow = into_a - into_b;
            out[a] += flow;
            out[b] -= flow;
        }
    }
    out
}

/// `dx/dt` under the primal protocol.
pub fn primal_field(
    game: &GameSpec,
    protocol: &Protocol,
    x: &PrimalState,
    mu: &DualState,
) -> Result<Vec<f64>> {
    let payoff = game.primal_dual_payoff(x, mu)?;
    Ok(pairwise_field(&payoff, x.as_slice(), protocol))
}

/// `dmu/dt` under the dual protocol. Depends on `x` only through `g(x)`.
pub fn dual_field(
    game: &GameSpec,
    protocol: &Protocol,
    x: &PrimalState,
    mu: &DualState,
) -> Result<Vec<f64>> {
    game.check_dual(mu)?;
    let g = game.constraint_values(x)?;
    Ok(pairwise_field(&g, mu.as_slice(), protocol))
}

pub(crate) fn fields_at(
    game: &GameSpec,
    dynamics: &Dynamics,
    x: &[f64],
    mu: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let payoff = game.primal_dual_payoff_at(x, mu);
    let g = game.constraint_values_at(x);
    (
        pairwise_field(&payoff, x, &dynamics.primal),
        pairwise_field(&g, mu, &dynamics.dual),
    )
}

/// Uniform draw from the simplex of total `mass` in `n` coordinates:
/// normalized unit-exponential variates.
pub fn sample_simplex(n: usize, mass: f64, seed: u64) -> PrimalState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_simplex_with(&mut rng, n, mass)
}

pub(crate) fn sample_simplex_with<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    mass: f64,
) -> PrimalState {
    PrimalState::from_raw(simplex_vec(rng, n, mass), mass)
}

/// Same distribution as [`sample_simplex`], as a dual state of `q + 1` entries.
pub fn sample_dual<R: rand::Rng + ?Sized>(rng: &mut R, q: usize, mass: f64) -> DualState {
    DualState::from_raw(simplex_vec(rng, q + 1, mass), mass)
}

/// Uniform primal draw from a caller-owned generator.
pub fn sample_primal<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, mass: f64) -> PrimalState {
    sample_simplex_with(rng, n, mass)
}

fn simplex_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, mass: f64) -> Vec<f64> {
    assert!(n >= 1, "simplex needs at least one coordinate");
    if n == 1 {
        return vec![mass];
    }
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut out: Vec<f64> = draws.iter().map(|d| mass * d / total).collect();
    // push the rounding residue into the largest entry
    let drift = mass - out.iter().sum::<f64>();
    let (imax, _) =
        out.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    out[imax] += drift;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{build_rps, reference_congestion};

    #[test]
    fn rps_fields() {
        let g = build_rps(1.0, 4.0, 0.1).unwrap();
        let smith = Protocol::smith();
        let null = DualState::on_null(1, 4.0).unwrap();
        let bary = g.primal_state(vec![1.0 / 3.0; 3]).unwrap();
        let dx = primal_field(&g, &smith, &bary, &null).unwrap();
        assert!(dx.iter().all(|v| v.abs() < 1e-15));

        let e1 = g.primal_state(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            primal_field(&g, &smith, &e1, &null).unwrap(),
            vec![-2.0, 2.0, 0.0]
        );

        let dmu = dual_field(&g, &smith, &bary, &null).unwrap();
        assert!((dmu[0] + 0.48889).abs() < 5e-6 && (dmu[1] - 0.48889).abs() < 5e-6);
        assert!((dmu[1] - 4.0 * (2.0 / 9.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn dual_at_null_when_feasible_is_still() {
        let g = reference_congestion();
        let x = g.primal_state(vec![0.25; 4]).unwrap();
        let mu = DualState::on_null(8, 122.0).unwrap();
        assert!(dual_field(&g, &Protocol::smith(), &x, &mu)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn no_constraints_means_static_dual() {
        let g = crate::games::build_quadratic_potential(
            nalgebra::DMatrix::identity(3, 3) * -2.0,
            vec![0.4, 0.6, 1.0],
            vec![],
            1.0,
            1.0,
        )
        .unwrap();
        let x = sample_simplex(3, 1.0, 9);
        let mu = DualState::on_null(0, 1.0).unwrap();
        assert_eq!(
            dual_field(&g, &Protocol::smith(), &x, &mu).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn sampler_contract() {
        assert_eq!(sample_simplex(1, 2.5, 0).as_slice(), &[2.5]);
        for seed in 0..50 {
            let x = sample_simplex(5, 3.0, seed);
            assert!(x.as_slice().iter().all(|v| *v >= 0.0));
            assert!((x.as_slice().iter().sum::<f64>() - 3.0).abs() <= 1e-12);
        }
        assert_eq!(sample_simplex(4, 1.0, 7), sample_simplex(4, 1.0, 7));
        assert_ne!(sample_simplex(4, 1.0, 7), sample_simplex(4, 1.0, 8));
    }
}
