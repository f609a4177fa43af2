//! Game and state files, trajectory CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{config, Result};
use crate::game::{ConstraintSpec, FitnessRule, GameSpec};
use crate::games::{self, Road, RoadNetwork};
use crate::state::{DualState, PrimalState};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub n: Option<usize>,
    pub q: Option<usize>,
    pub primal_mass: Option<f64>,
    pub dual_mass: Option<f64>,
    pub fitness: FitnessFile,
    #[serde(default)]
    pub constraints: Vec<ConstraintFile>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessFile {
    Linear {
        #[serde(rename = "A")]
        matrix: Vec<Vec<f64>>,
    },
    QuadraticPotential {
        #[serde(rename = "H")]
        hessian: Vec<Vec<f64>>,
        #[serde(default)]
        c: Option<Vec<f64>>,
    },
    Builtin {
        name: String,
    },
    Congestion {
        roads: Vec<RoadFile>,
        strategies: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadFile {
    pub id: usize,
    pub weight: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintFile {
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        a: Vec<f64>,
        c: f64,
    },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return config(format!("{what} must be a nonempty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ConstraintFile {
    fn build(&self) -> Result<ConstraintSpec> {
        match self {
            ConstraintFile::Affine { a, b } => Ok(ConstraintSpec::affine(a.clone(), *b)),
            ConstraintFile::Quadratic { q, a, c } => {
                ConstraintSpec::quadratic(matrix(q, "Q")?, a.clone(), *c)
            }
        }
    }
}

impl GameFile {
    pub fn build(&self) -> Result<GameSpec> {
        let mp = self.primal_mass.unwrap_or(1.0);
        let constraints = self
            .constraints
            .iter()
            .map(ConstraintFile::build)
            .collect::<Result<Vec<_>>>()?;
        let game = match &self.fitness {
            FitnessFile::Linear { matrix: a } => {
                let dm = self.require_dual_mass()?;
                GameSpec::new(
                    FitnessRule::LinearMatrix {
                        matrix: matrix(a, "A")?,
                    },
                    constraints,
                    mp,
                    dm,
                )?
            }
            FitnessFile::QuadraticPotential { hessian, c } => {
                let h = matrix(hessian, "H")?;
                let c = c.clone().unwrap_or_else(|| vec![0.0; h.nrows()]);
                games::build_quadratic_potential(h, c, constraints, mp, self.require_dual_mass()?)?
            }
            FitnessFile::Builtin { name } => {
                if !constraints.is_empty() {
                    return config("builtin games carry their own constraints");
                }
                let base = games::builtin(name)?;
                if let Some(m) = self.primal_mass {
                    if m != base.primal_mass() {
                        return config(format!(
                            "builtin '{name}' has primal mass {}",
                            base.primal_mass()
                        ));
                    }
                }
                match self.dual_mass {
                    Some(m) => base.with_dual_mass(m)?,
                    None => base,
                }
            }
            FitnessFile::Congestion { roads, strategies } => {
                if !constraints.is_empty() {
                    return config("congestion games derive constraints from road capacities");
                }
                let network = RoadNetwork {
                    roads: roads
                        .iter()
                        .map(|r| Road {
                            id: r.id,
                            weight: r.weight,
                            capacity: r.capacity,
                        })
                        .collect(),
                    strategies: strategies.clone(),
                };
                games::build_congestion(&network, mp, self.require_dual_mass()?)?
            }
        };
        if let Some(n) = self.n {
            if n != game.n() {
                return config(format!(
                    "declared n = {n} but the fitness has {} strategies",
                    game.n()
                ));
            }
        }
        if let Some(q) = self.q {
            if q != game.q() {
                return config(format!(
                    "declared q = {q} but the game has {} constraints",
                    game.q()
                ));
            }
        }
        Ok(game)
    }

    fn require_dual_mass(&self) -> Result<f64> {
        self.dual_mass
            .ok_or_else(|| crate::Error::Config("dual_mass is required".into()))
    }
}

pub fn parse_game(json: &str) -> Result<GameSpec> {
    let file: GameFile = serde_json::from_str(json)?;
    file.build()
}

/// A builtin name, or a path to a game JSON file.
pub fn load_game(source: &str) -> Result<GameSpec> {
    if games::BUILTIN_NAMES.contains(&source) {
        return games::builtin(source);
    }
    let path = Path::new(source);
    if !path.exists() {
        return config(format!(
            "'{source}' is neither a builtin game ({}) nor an existing file",
            games::BUILTIN_NAMES.join(", ")
        ));
    }
    parse_game(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
}

impl StateFile {
    pub fn from_states(x: &PrimalState, mu: &DualState) -> Self {
        StateFile {
            x: x.as_slice().to_vec(),
            mu: mu.as_slice().to_vec(),
        }
    }

    pub fn into_states(self, game: &GameSpec) -> Result<(PrimalState, DualState)> {
        if self.x.len() != game.n() || self.mu.len() != game.q() + 1 {
            return config(format!(
                "state has |x| = {}, |mu| = {}; game expects {} and {}",
                self.x.len(),
                self.mu.len(),
                game.n(),
                game.q() + 1
            ));
        }
        Ok((game.primal_state(self.x)?, game.dual_state(self.mu)?))
    }
}

pub fn read_state(path: &Path) -> Result<StateFile> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn csv_header(n: usize, q: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend((0..=q).map(|k| format!("mu_{k}")));
    cols.extend(["V", "p", "g_max", "xdot_norm", "mudot_norm"].map(String::from));
    cols.join(",")
}

/// Writes one row per recorded state; `p` is `NaN` for potential-free games.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    game: &GameSpec,
    traj: &Trajectory,
) -> Result<()> {
    writeln!(out, "{}", csv_header(game.n(), game.q()))?;
    let mut row = String::new();
    for (s, t) in traj.times.iter().enumerate() {
        let d = &traj.diagnostics[s];
        row.clear();
        row.push_str(&t.to_string());
        for v in traj.primal[s]
            .as_slice()
            .iter()
            .chain(traj.dual[s].as_slice())
        {
            row.push(',');
            row.push_str(&v.to_string());
        }
        let p = d.potential.unwrap_or(f64::NAN);
        for v in [
            d.lyapunov,
            p,
            d.g_max(),
            d.primal_field_norm,
            d.dual_field_norm,
        ] {
            row.push(',');
            row.push_str(&v.to_string());
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn save_trajectory_csv(path: &Path, game: &GameSpec, traj: &Trajectory) -> Result<()> {
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, game, traj)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parses `0.2,0.3,0.5`.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| crate::Error::Config(format!("'{t}' is not a number in '{text}'")))
        })
        .collect()
}
