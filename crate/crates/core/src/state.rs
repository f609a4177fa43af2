//! Population states living on mass-scaled simplices.

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a population state.
pub const SIMPLEX_TOL: f64 = 1e-9;

fn check_simplex(values: &[f64], mass: f64, what: &str) -> Result<()> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidState(format!(
            "{what} mass must be positive, got {mass}"
        )));
    }
    if values.is_empty() {
        return Err(Error::InvalidState(format!("{what} state is empty")));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidState(format!(
            "{what} entry {i} is {v}; entries must be finite and nonnegative"
        )));
    }
    let total: f64 = values.iter().sum();
    if (total - mass).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidState(format!(
            "{what} entries sum to {total}, expected mass {mass}"
        )));
    }
    Ok(())
}

/// Distribution `x` of the primal population over its `n` strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalState {
    x: Vec<f64>,
    mass: f64,
}

impl PrimalState {
    pub fn new(x: Vec<f64>, mass: f64) -> Result<Self> {
        check_simplex(&x, mass, "primal")?;
        Ok(Self { x, mass })
    }

    /// Wraps a vector the caller already knows to be on the simplex
    /// (integrator output after repair, sampler output).
    pub(crate) fn from_raw(x: Vec<f64>, mass: f64) -> Self {
        debug_assert!(check_simplex(&x, mass, "primal").is_ok());
        Self { x, mass }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }
}

/// Distribution `mu` of the dual population. Index 0 is the null strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    mu: Vec<f64>,
    mass: f64,
}

impl DualState {
    pub fn new(mu: Vec<f64>, mass: f64) -> Result<Self> {
        check_simplex(&mu, mass, "dual")?;
        Ok(Self { mu, mass })
    }

    /// All dual mass on the null strategy: `(m_D, 0, ..., 0)`.
    pub fn on_null(q: usize, mass: f64) -> Result<Self> {
        let mut mu = vec![0.0; q + 1];
        mu[0] = mass;
        Self::new(mu, mass)
    }

    pub(crate) fn from_raw(mu: Vec<f64>, mass: f64) -> Self {
        debug_assert!(check_simplex(&mu, mass, "dual").is_ok());
        Self { mu, mass }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Multipliers of the real constraints, `mu_1..mu_q`.
    pub fn multipliers(&self) -> &[f64] {
        &self.mu[1..]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mu
    }
}
