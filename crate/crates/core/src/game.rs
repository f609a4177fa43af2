//! Game instances and the payoff algebra of the coupled primal-dual game.
//!
//! A [`GameSpec`] bundles the primal fitness rule, the convex inequality
//! constraints `g_k(x) <= 0` (k = 1..q) and the masses of both populations.
//! The dual population has `q + 1` strategies; strategy 0 is the null
//! constraint `g_0 = 0`, which is never stored and is synthesized on
//! evaluation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::sample_simplex_with;
use crate::error::{config, Error, Result};
use crate::state::{DualState, PrimalState};

/// Central finite-difference step used wherever an analytic derivative is
/// cross-checked or unavailable.
pub const FD_STEP: f64 = 1e-6;

/// Slack on eigenvalue signs for convexity/concavity checks.
pub const CURVATURE_TOL: f64 = 1e-10;

/// Threshold below which the tangent-space curvature counts as stable.
pub const STABLE_TOL: f64 = 1e-9;

fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// One convex inequality constraint `g(x) <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    /// `a . x - b <= 0`
    Affine { a: Vec<f64>, b: f64 },
    /// `x' Q x + a . x - c <= 0` with `Q` symmetric positive semidefinite.
    ConvexQuadratic {
        q: DMatrix<f64>,
        a: Vec<f64>,
        c: f64,
    },
}

impl ConstraintSpec {
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        ConstraintSpec::Affine { a, b }
    }

    /// Builds a quadratic constraint, rejecting nonconvex `q`.
    pub fn quadratic(q: DMatrix<f64>, a: Vec<f64>, c: f64) -> Result<Self> {
        let spec = ConstraintSpec::ConvexQuadratic { q, a, c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSpec::Affine { a, .. } => a.len(),
            ConstraintSpec::ConvexQuadratic { a, .. } => a.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ConstraintSpec::Affine { a, b } => {
                if !a.iter().chain(std::iter::once(b)).all(|v| v.is_finite()) {
                    return config("affine constraint has non-finite coefficients");
                }
            }
            ConstraintSpec::ConvexQuadratic { q, a, c } => {
                if q.nrows() != a.len() || q.ncols() != a.len() {
                    return config(format!(
                        "quadratic constraint: Q is {}x{} but a has length {}",
                        q.nrows(),
                        q.ncols(),
                        a.len()
                    ));
                }
                if !q
                    .iter()
                    .chain(a.iter())
                    .chain(std::iter::once(c))
                    .all(|v| v.is_finite())
                {
                    return config("quadratic constraint has non-finite coefficients");
                }
                if !is_symmetric(q) {
                    return config("quadratic constraint: Q must be symmetric");
                }
                let (lo, _) = symmetric_eigen_range(q);
                if lo < -CURVATURE_TOL {
                    return config(format!(
                        "quadratic constraint is not convex: min eigenvalue of Q is {lo}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintSpec::Affine { a, b } => dot(a, x) - b,
            ConstraintSpec::ConvexQuadratic { q, a, c } => {
                let n = x.len();
                let mut quad = 0.0;
                for i in 0..n {
                    let mut row = 0.0;
                    for j in 0..n {
                        row += q[(i, j)] * x[j];
                    }
                    quad += x[i] * row;
                }
                quad + dot(a, x) - c
            }
        }
    }

    /// Writes the analytic gradient into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ConstraintSpec::Affine { a, .. } => out.copy_from_slice(a),
            ConstraintSpec::ConvexQuadratic { q, a, .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut row = 0.0;
                    for (j, xj) in x.iter().enumerate() {
                        row += q[(i, j)] * xj;
                    }
                    *o = 2.0 * row + a[i];
                }
            }
        }
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        match self {
            ConstraintSpec::Affine { a, .. } => DMatrix::zeros(a.len(), a.len()),
            ConstraintSpec::ConvexQuadratic { q, .. } => q * 2.0,
        }
    }
}

/// How the primal fitness vector `f(x)` is computed.
#[derive(Debug, Clone, PartialEq)]
pub enum FitnessRule {
    /// `f = A x`. No potential unless expressed as [`FitnessRule::QuadraticPotential`].
    LinearMatrix { matrix: DMatrix<f64> },
    /// `p = x' H x / 2 + c . x`, `f = H x + c`, `H` symmetric negative semidefinite.
    QuadraticPotential {
        hessian: DMatrix<f64>,
        linear: Vec<f64>,
    },
    /// Linear-cost congestion on a road network: `u = B x` is the road usage,
    /// `p = -sum_k b_k u_k^2 / 2`, `f = -B' diag(b) u`.
    NetworkCongestion {
        incidence: DMatrix<f64>,
        weights: Vec<f64>,
    },
}

impl FitnessRule {
    pub fn dim(&self) -> usize {
        match self {
            FitnessRule::LinearMatrix { matrix } => matrix.ncols(),
            FitnessRule::QuadraticPotential { linear, .. } => linear.len(),
            FitnessRule::NetworkCongestion { incidence, .. } => incidence.ncols(),
        }
    }

    pub fn has_potential(&self) -> bool {
        !matches!(self, FitnessRule::LinearMatrix { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            FitnessRule::LinearMatrix { matrix } => {
                if !matrix.is_square() {
                    return config("linear fitness matrix must be square");
                }
                if !matrix.iter().all(|v| v.is_finite()) {
                    return config("linear fitness matrix has non-finite entries");
                }
            }
            FitnessRule::QuadraticPotential { hessian, linear } => {
                if hessian.nrows() != linear.len() || hessian.ncols() != linear.len() {
                    return config("quadratic potential: H and c dimensions disagree");
                }
                if !hessian.iter().chain(linear.iter()).all(|v| v.is_finite()) {
                    return config("quadratic potential has non-finite coefficients");
                }
                if !is_symmetric(hessian) {
                    return config("quadratic potential: H must be symmetric");
                }
                let (_, hi) = symmetric_eigen_range(hessian);
                if hi > CURVATURE_TOL {
                    return config(format!(
                        "quadratic potential is not concave: max eigenvalue of H is {hi}"
                    ));
                }
            }
            FitnessRule::NetworkCongestion { incidence, weights } => {
                if incidence.nrows() != weights.len() {
                    return config("congestion: one weight per road required");
                }
                if weights.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                    return config("congestion: road weights must be positive");
                }
            }
        }
        Ok(())
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FitnessRule::LinearMatrix { matrix } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|j| matrix[(i, j)] * x[j]).sum();
                }
            }
            FitnessRule::QuadraticPotential { hessian, linear } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|j| hessian[(i, j)] * x[j]).sum::<f64>() + linear[i];
                }
            }
            FitnessRule::NetworkCongestion { incidence, weights } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, b) in weights.iter().enumerate() {
                    let usage: f64 = (0..x.len()).map(|j| incidence[(k, j)] * x[j]).sum();
                    for (i, o) in out.iter_mut().enumerate() {
                        *o -= b * usage * incidence[(k, i)];
                    }
                }
            }
        }
    }

    fn potential(&self, x: &[f64]) -> Option<f64> {
        match self {
            FitnessRule::LinearMatrix { .. } => None,
            FitnessRule::QuadraticPotential { hessian, linear } => {
                let xv = DVector::from_column_slice(x);
                Some(0.5 * xv.dot(&(hessian * &xv)) + dot(linear, x))
            }
            FitnessRule::NetworkCongestion { incidence, weights } => {
                let xv = DVector::from_column_slice(x);
                let usage = incidence * xv;
                Some(
                    -0.5 * weights
                        .iter()
                        .zip(usage.iter())
                        .map(|(b, u)| b * u * u)
                        .sum::<f64>(),
                )
            }
        }
    }

    fn jacobian(&self) -> DMatrix<f64> {
        match self {
            FitnessRule::LinearMatrix { matrix } => matrix.clone(),
            FitnessRule::QuadraticPotential { hessian, .. } => hessian.clone(),
            FitnessRule::NetworkCongestion { incidence, weights } => {
                let b = DMatrix::from_diagonal(&DVector::from_column_slice(weights));
                -(incidence.transpose() * b * incidence)
            }
        }
    }
}

/// A complete constrained population game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    fitness: FitnessRule,
    constraints: Vec<ConstraintSpec>,
    primal_mass: f64,
    dual_mass: f64,
}

impl GameSpec {
    pub fn new(
        fitness: FitnessRule,
        constraints: Vec<ConstraintSpec>,
        primal_mass: f64,
        dual_mass: f64,
    ) -> Result<Self> {
        fitness.validate()?;
        let n = fitness.dim();
        if n < 2 {
            return config(format!("at least 2 strategies required, got {n}"));
        }
        if !(primal_mass.is_finite() && primal_mass > 0.0) {
            return config(format!("primal mass must be positive, got {primal_mass}"));
        }
        if !(dual_mass.is_finite() && dual_mass > 0.0) {
            return config(format!("dual mass must be positive, got {dual_mass}"));
        }
        for (k, c) in constraints.iter().enumerate() {
            if c.dim() != n {
                return config(format!(
                    "constraint {} has dimension {}, game has {n} strategies",
                    k + 1,
                    c.dim()
                ));
            }
            c.validate()?;
        }
        Ok(Self {
            fitness,
            constraints,
            primal_mass,
            dual_mass,
        })
    }

    /// Number of primal strategies.
    pub fn n(&self) -> usize {
        self.fitness.dim()
    }

    /// Number of real constraints (dual strategies minus the null one).
    pub fn q(&self) -> usize {
        self.constraints.len()
    }

    pub fn primal_mass(&self) -> f64 {
        self.primal_mass
    }

    pub fn dual_mass(&self) -> f64 {
        self.dual_mass
    }

    pub fn fitness_rule(&self) -> &FitnessRule {
        &self.fitness
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn has_potential(&self) -> bool {
        self.fitness.has_potential()
    }

    /// Same game with a different dual mass.
    pub fn with_dual_mass(&self, dual_mass: f64) -> Result<Self> {
        Self::new(
            self.fitness.clone(),
            self.constraints.clone(),
            self.primal_mass,
            dual_mass,
        )
    }

    pub fn primal_state(&self, x: Vec<f64>) -> Result<PrimalState> {
        let st = PrimalState::new(x, self.primal_mass)?;
        self.check_primal(&st)?;
        Ok(st)
    }

    pub fn dual_state(&self, mu: Vec<f64>) -> Result<DualState> {
        let st = DualState::new(mu, self.dual_mass)?;
        self.check_dual(&st)?;
        Ok(st)
    }

    pub fn check_primal(&self, x: &PrimalState) -> Result<()> {
        if x.len() != self.n() {
            return config(format!(
                "primal state has length {}, game has n = {}",
                x.len(),
                self.n()
            ));
        }
        Ok(())
    }

    pub fn check_dual(&self, mu: &DualState) -> Result<()> {
        if mu.len() != self.q() + 1 {
            return config(format!(
                "dual state has length {}, game needs q + 1 = {}",
                mu.len(),
                self.q() + 1
            ));
        }
        Ok(())
    }

    pub fn fitness(&self, x: &PrimalState) -> Result<Vec<f64>> {
        self.check_primal(x)?;
        Ok(self.fitness_at(x.as_slice()))
    }

    pub fn potential(&self, x: &PrimalState) -> Result<f64> {
        self.check_primal(x)?;
        self.potential_at(x.as_slice())
    }

    /// `g(x)` over all `q + 1` dual strategies; entry 0 is exactly zero.
    pub fn constraint_values(&self, x: &PrimalState) -> Result<Vec<f64>> {
        self.check_primal(x)?;
        Ok(self.constraint_values_at(x.as_slice()))
    }

    /// `(q + 1) x n` Jacobian of `g`; row 0 is zero.
    pub fn constraint_jacobian(&self, x: &PrimalState) -> Result<DMatrix<f64>> {
        self.check_primal(x)?;
        Ok(self.constraint_jacobian_at(x.as_slice()))
    }

    /// `f^mu_i = f_i - sum_k mu_k dg_k/dx_i`.
    pub fn primal_dual_payoff(&self, x: &PrimalState, mu: &DualState) -> Result<Vec<f64>> {
        self.check_primal(x)?;
        self.check_dual(mu)?;
        Ok(self.primal_dual_payoff_at(x.as_slice(), mu.as_slice()))
    }

    /// `L(x, mu) = p(x) - sum_k mu_k g_k(x)`.
    pub fn lagrangian(&self, x: &PrimalState, mu: &DualState) -> Result<f64> {
        self.check_primal(x)?;
        self.check_dual(mu)?;
        self.lagrangian_at(x.as_slice(), mu.as_slice())
    }

    pub fn fitness_jacobian(&self, x: &PrimalState) -> Result<DMatrix<f64>> {
        self.check_primal(x)?;
        Ok(self.fitness.jacobian())
    }

    /// Jacobian of `f^mu(., mu)`: `Df - sum_k mu_k Hess g_k`.
    pub fn primal_dual_jacobian(&self, x: &PrimalState, mu: &DualState) -> Result<DMatrix<f64>> {
        self.check_primal(x)?;
        self.check_dual(mu)?;
        Ok(self.primal_dual_jacobian_at(mu.as_slice()))
    }

    // Slice-level evaluation anywhere on the nonnegative orthant, without the
    // simplex checks. `x` must have length `n` and `mu` length `q + 1`.

    pub fn fitness_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.fitness.eval_into(x, &mut out);
        out
    }

    pub fn potential_at(&self, x: &[f64]) -> Result<f64> {
        self.fitness
            .potential(x)
            .ok_or_else(|| Error::Unsupported("game has no potential function".into()))
    }

    pub fn constraint_values_at(&self, x: &[f64]) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.constraints.iter().map(|c| c.value(x)))
            .collect()
    }

    pub fn constraint_jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let mut jac = DMatrix::zeros(self.q() + 1, n);
        let mut row = vec![0.0; n];
        for (k, c) in self.constraints.iter().enumerate() {
            c.gradient_into(x, &mut row);
            for (i, v) in row.iter().enumerate() {
                jac[(k + 1, i)] = *v;
            }
        }
        jac
    }

    pub fn primal_dual_payoff_at(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut out = self.fitness_at(x);
        let mut grad = vec![0.0; self.n()];
        for (c, m) in self.constraints.iter().zip(&mu[1..]) {
            c.gradient_into(x, &mut grad);
            for (o, gi) in out.iter_mut().zip(&grad) {
                *o -= m * gi;
            }
        }
        out
    }

    pub fn lagrangian_at(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        let p = self.potential_at(x)?;
        let penalty: f64 = self
            .constraints
            .iter()
            .zip(&mu[1..])
            .map(|(c, m)| m * c.value(x))
            .sum();
        Ok(p - penalty)
    }

    pub fn primal_dual_jacobian_at(&self, mu: &[f64]) -> DMatrix<f64> {
        let mut jac = self.fitness.jacobian();
        for (c, m) in self.constraints.iter().zip(&mu[1..]) {
            if let ConstraintSpec::ConvexQuadratic { .. } = c {
                jac -= c.hessian() * *m;
            }
        }
        jac
    }

    /// Max-norm of `grad p - f` at `samples` random states, using central
    /// differences of the potential.
    pub fn potential_consistency(&self, samples: usize, seed: u64) -> Result<f64> {
        if !self.has_potential() {
            return Err(Error::Unsupported("game has no potential function".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = sample_simplex_with(&mut rng, self.n(), self.primal_mass);
            let grad = finite_difference_gradient(|y| self.potential_at(y).unwrap(), x.as_slice());
            let f = self.fitness_at(x.as_slice());
            for (a, b) in grad.iter().zip(&f) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Tangent-space test of `z' Df(x) z <= 0` over random states and random
    /// unit tangent directions (`sum z = 0`).
    pub fn check_stable_game(&self, samples: usize, seed: u64) -> Result<StabilityVerdict> {
        if samples == 0 {
            return config("check_stable_game needs at least one sample");
        }
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..samples {
            let x = sample_simplex_with(&mut rng, n, self.primal_mass);
            let jac = self.fitness_jacobian(&x)?;
            let z = random_tangent(&mut rng, n);
            let zv = DVector::from_vec(z);
            worst = worst.max(zv.dot(&(&jac * &zv)));
        }
        Ok(StabilityVerdict {
            stable: worst <= STABLE_TOL,
            worst,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// Largest `z' Df z` seen over unit tangent directions.
    pub worst: f64,
}

/// Unit-norm random direction with zero component sum.
pub(crate) fn random_tangent<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let mut z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= mean);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            z.iter_mut().for_each(|v| *v /= norm);
            return z;
        }
    }
}

/// Central-difference gradient with step [`FD_STEP`].
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + FD_STEP;
            let up = f(&y);
            y[i] = x[i] - FD_STEP;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central-difference Jacobian of a vector map (rows = outputs).
pub fn finite_difference_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut y = x.to_vec();
    for j in 0..x.len() {
        y[j] = x[j] + FD_STEP;
        let up = f(&y);
        y[j] = x[j] - FD_STEP;
        let down = f(&y);
        y[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}
