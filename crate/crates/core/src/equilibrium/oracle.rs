//! Derivative-free global solver for `max p(x) s.t. g_k(x) <= 0, x in simplex`
//! at desk scale. It evaluates only `p` and `g`, never the fitness or the
//! dynamics, so it can serve as an independent reference.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config, Error, Result};
use crate::game::{random_tangent, GameSpec};
use crate::state::PrimalState;

/// Largest strategy count the grid phase accepts.
pub const MAX_ORACLE_DIM: usize = 6;
/// Slack on `g_k(x) <= 0` for candidate points.
const FEASIBILITY_SLACK: f64 = 1e-12;
/// Failed proposals tolerated before the search radius is halved.
const PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Largest change of `p` over the final search neighborhood.
    pub gap: f64,
    pub grid_points: u64,
    pub feasible_grid_points: u64,
}

impl OracleSolution {
    /// `value + gap`, usable as a certified-upper-bound stand-in for `p*`.
    pub fn upper_bound(&self) -> f64 {
        self.value + self.gap
    }

    pub fn state(&self, game: &GameSpec) -> Result<PrimalState> {
        game.primal_state(self.x.clone())
    }
}

#[derive(Debug, Clone)]
struct Best {
    value: f64,
    counts: Vec<u32>,
    seen: u64,
    feasible: u64,
}

impl Best {
    fn better(&self, other: &Best) -> bool {
        // higher value wins; ties go to the lexicographically smaller grid index
        self.value > other.value || (self.value == other.value && self.counts < other.counts)
    }

    fn merge(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                let (seen, feasible) = (a.seen + b.seen, a.feasible + b.feasible);
                let mut w = if b.better(&a) { b } else { a };
                w.seen = seen;
                w.feasible = feasible;
                Some(w)
            }
        }
    }
}

fn feasible(game: &GameSpec, x: &[f64]) -> bool {
    x.iter().all(|v| *v >= 0.0)
        && game
            .constraints()
            .iter()
            .all(|c| c.value(x) <= FEASIBILITY_SLACK)
}

/// Exhaustive scan of compositions `counts` with `counts[..fixed]` given.
fn scan(
    game: &GameSpec,
    resolution: u32,
    counts: &mut Vec<u32>,
    remaining: u32,
    acc: &mut Option<Best>,
) {
    let n = game.n();
    let slot = counts.len();
    if slot == n - 1 {
        counts.push(remaining);
        let unit = game.primal_mass() / resolution as f64;
        let x: Vec<f64> = counts.iter().map(|c| *c as f64 * unit).collect();
        let is_feasible = feasible(game, &x);
        let entry = acc.get_or_insert(Best {
            value: f64::NEG_INFINITY,
            counts: Vec::new(),
            seen: 0,
            feasible: 0,
        });
        entry.seen += 1;
        if is_feasible {
            entry.feasible += 1;
            let value = game.potential_at(&x).expect("potential checked by caller");
            let cand = Best {
                value,
                counts: counts.clone(),
                seen: 0,
                feasible: 0,
            };
            if entry.counts.is_empty() || cand.better(entry) {
                entry.value = cand.value;
                entry.counts = cand.counts;
            }
        }
        counts.pop();
        return;
    }
    for c in 0..=remaining {
        counts.push(c);
        scan(game, resolution, counts, remaining - c, acc);
        counts.pop();
    }
}

/// Grid enumeration at `resolution` followed by `refine_iters` steps of
/// feasibility-filtered random local search.
pub fn oracle_solve(
    game: &GameSpec,
    resolution: u32,
    refine_iters: usize,
    seed: u64,
) -> Result<OracleSolution> {
    if !game.has_potential() {
        return Err(Error::Unsupported(
            "oracle needs a potential; use the equilibrium report for potential-free games".into(),
        ));
    }
    let n = game.n();
    if n > MAX_ORACLE_DIM {
        return config(format!(
            "oracle supports at most {MAX_ORACLE_DIM} strategies, game has {n}"
        ));
    }
    if resolution == 0 {
        return config("oracle resolution must be at least 1");
    }

    // Partition by the first coordinate; the reduction is order independent.
    let best = (0..=resolution)
        .into_par_iter()
        .map(|first| {
            let mut acc = None;
            let mut counts = vec![first];
            scan(game, resolution, &mut counts, resolution - first, &mut acc);
            acc.map(|mut b| {
                if b.counts.is_empty() {
                    b.value = f64::NEG_INFINITY;
                }
                b
            })
        })
        .reduce(|| None, Best::merge)
        .expect("grid is nonempty");
    if best.counts.is_empty() {
        return Err(Error::Infeasible(format!(
            "no feasible grid point at resolution {resolution}; try a finer grid"
        )));
    }

    let unit = game.primal_mass() / resolution as f64;
    let mut x: Vec<f64> = best.counts.iter().map(|c| *c as f64 * unit).collect();
    let mut value = best.value;
    let mut radius = unit;
    let mut misses = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = |y: &[f64]| game.potential_at(y).expect("potential checked above");

    for _ in 0..refine_iters {
        let cand: Vec<f64> = if rng.random_bool(0.5) {
            let dir = random_tangent(&mut rng, n);
            x.iter().zip(&dir).map(|(a, d)| a + radius * d).collect()
        } else {
            let i = rng.random_range(0..n);
            let j = (i + rng.random_range(1..n)) % n;
            let shift = radius * rng.random_range(-1.0..1.0);
            let mut y = x.clone();
            y[i] += shift;
            y[j] -= shift;
            y
        };
        if feasible(game, &cand) {
            let v = p(&cand);
            if v > value {
                x = cand;
                value = v;
                misses = 0;
                radius = (radius * 1.5).min(unit);
                continue;
            }
        }
        misses += 1;
        if misses >= PATIENCE {
            radius *= 0.5;
            misses = 0;
        }
    }

    // variation of p over the final neighborhood along every pair direction
    let mut gap: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut y = x.clone();
            let shift = radius.min(y[j]);
            y[i] += shift;
            y[j] -= shift;
            gap = gap.max((p(&y) - value).abs());
        }
    }

    Ok(OracleSolution {
        x,
        value,
        gap,
        grid_points: best.seen,
        feasible_grid_points: best.feasible,
    })
}
