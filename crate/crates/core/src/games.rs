//! Built-in game constructors.

use nalgebra::DMatrix;

use crate::error::{config, Result};
use crate::game::{ConstraintSpec, FitnessRule, GameSpec};

/// CLI names of the built-in instances.
pub const BUILTIN_NAMES: [&str; 2] = ["paper-congestion", "paper-rps"];

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub id: usize,
    /// Congestion weight `b_k > 0`; the road's cost is `b_k * u_k`.
    pub weight: f64,
    /// Maximum usage level.
    pub capacity: f64,
}

/// Roads plus the strategies (paths) built from them. Constraint `k` of the
/// resulting game is the capacity of the `k`-th road in `roads`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    pub roads: Vec<Road>,
    /// Each strategy lists the road ids it traverses.
    pub strategies: Vec<Vec<usize>>,
}

impl RoadNetwork {
    fn validate(&self, primal_mass: f64) -> Result<()> {
        if self.roads.is_empty() || self.strategies.is_empty() {
            return config("network needs at least one road and one strategy");
        }
        for (pos, r) in self.roads.iter().enumerate() {
            if self.roads[..pos].iter().any(|o| o.id == r.id) {
                return config(format!("duplicate road id {}", r.id));
            }
            if !(r.weight.is_finite() && r.weight > 0.0) {
                return config(format!("road {}: weight must be positive", r.id));
            }
            if !(r.capacity > 0.0 && r.capacity <= primal_mass) {
                return config(format!("road {}: capacity must lie in (0, m_P]", r.id));
            }
            if !self.strategies.iter().any(|s| s.contains(&r.id)) {
                return config(format!("road {} is used by no strategy", r.id));
            }
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if let Some(bad) = s.iter().find(|id| !self.roads.iter().any(|r| r.id == **id)) {
                return config(format!("strategy {} references unknown road {bad}", i + 1));
            }
        }
        Ok(())
    }

    /// `roads x strategies` 0/1 matrix: entry `(k, i)` is 1 when strategy `i`
    /// uses road `k`.
    pub fn incidence(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.roads.len(), self.strategies.len(), |k, i| {
            if self.strategies[i].contains(&self.roads[k].id) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Eight roads between A and B with four paths. Roads are listed so that
    /// the capacity constraints come out as `x1, x2, x3, x4, x1+x2, x2+x3,
    /// x3+x4, x2+x3+x4`.
    pub fn reference() -> Self {
        let weight = [15.0, 16.0, 11.0, 13.0, 13.0, 5.0, 17.0, 18.0];
        let capacity = [0.4, 0.6, 0.4, 0.6, 0.4, 0.4, 0.6, 0.9];
        let order = [1, 3, 5, 6, 2, 7, 4, 8];
        let roads = order
            .iter()
            .map(|&id| Road {
                id,
                weight: weight[id - 1],
                capacity: capacity[id - 1],
            })
            .collect();
        let strategies = vec![
            vec![1, 2],
            vec![8, 7, 3, 2],
            vec![8, 7, 5, 4],
            vec![8, 6, 4],
        ];
        RoadNetwork { roads, strategies }
    }
}

/// Congestion game with potential `-sum_k b_k u_k^2 / 2` and one capacity
/// constraint `u_k(x) <= capacity_k` per road.
pub fn build_congestion(
    network: &RoadNetwork,
    primal_mass: f64,
    dual_mass: f64,
) -> Result<GameSpec> {
    network.validate(primal_mass)?;
    let incidence = network.incidence();
    let constraints = network
        .roads
        .iter()
        .enumerate()
        .map(|(k, r)| {
            ConstraintSpec::affine(incidence.row(k).iter().copied().collect(), r.capacity)
        })
        .collect();
    let weights = network.roads.iter().map(|r| r.weight).collect();
    GameSpec::new(
        FitnessRule::NetworkCongestion { incidence, weights },
        constraints,
        primal_mass,
        dual_mass,
    )
}

/// The eight-road instance with `m_P = 1`, `m_D = 122`.
pub fn reference_congestion() -> GameSpec {
    build_congestion(&RoadNetwork::reference(), 1.0, 122.0).expect("built-in network is valid")
}

/// Good rock-paper-scissors with the coupled constraint `x1^2 + x2^2 <= cap`.
pub fn build_rps(primal_mass: f64, dual_mass: f64, cap: f64) -> Result<GameSpec> {
    if !(cap.is_finite() && cap > 0.0) {
        return config(format!("RPS cap must be positive, got {cap}"));
    }
    let a = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 2.0, 2.0, 0.0, -1.0, -1.0, 2.0, 0.0]);
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0]));
    let constraint = ConstraintSpec::quadratic(q, vec![0.0; 3], cap)?;
    GameSpec::new(
        FitnessRule::LinearMatrix { matrix: a },
        vec![constraint],
        primal_mass,
        dual_mass,
    )
}

/// `m_P = 1`, `m_D = 4`, cap 0.1.
pub fn reference_rps() -> GameSpec {
    build_rps(1.0, 4.0, 0.1).expect("built-in RPS is valid")
}

/// `p = x' H x / 2 + c . x`; `H` must be symmetric negative semidefinite.
pub fn build_quadratic_potential(
    hessian: DMatrix<f64>,
    linear: Vec<f64>,
    constraints: Vec<ConstraintSpec>,
    primal_mass: f64,
    dual_mass: f64,
) -> Result<GameSpec> {
    GameSpec::new(
        FitnessRule::QuadraticPotential { hessian, linear },
        constraints,
        primal_mass,
        dual_mass,
    )
}

/// `f = A x` with no potential.
pub fn build_linear(
    matrix: DMatrix<f64>,
    constraints: Vec<ConstraintSpec>,
    primal_mass: f64,
    dual_mass: f64,
) -> Result<GameSpec> {
    GameSpec::new(
        FitnessRule::LinearMatrix { matrix },
        constraints,
        primal_mass,
        dual_mass,
    )
}

pub fn builtin(name: &str) -> Result<GameSpec> {
    match name {
        "paper-congestion" => Ok(reference_congestion()),
        "paper-rps" => Ok(reference_rps()),
        other => config(format!(
            "unknown builtin game '{other}' (known: {})",
            BUILTIN_NAMES.join(", ")
        )),
    }
}
