use std::fmt;
use std::sync::Arc;

use crate::error::{config, Error, Result};
use crate::quadrature::adaptive_simpson;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Absolute tolerance used when an antiderivative must be integrated
/// numerically.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Impartial pairwise-comparison revision protocol.
///
/// `value(a)` is the switching incentive for a payoff advantage `a`; it must
/// vanish for `a <= 0` and be strictly positive for `a > 0`. The same function
/// is shared by every target strategy of a population.
#[derive(Clone)]
pub struct Protocol {
    name: String,
    value: ScalarFn,
    antiderivative: Option<ScalarFn>,
}

impl fmt::Debug for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Protocol")
            .field("name", &self.name)
            .field("closed_form", &self.antiderivative.is_some())
            .finish()
    }
}

impl Protocol {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        antiderivative: Option<ScalarFn>,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            antiderivative,
        }
    }

    /// `max(a, 0)`, which yields the Smith dynamics.
    pub fn smith() -> Self {
        Self::new(
            "smith",
            |a: f64| a.max(0.0),
            Some(Arc::new(|a: f64| {
                let p = a.max(0.0);
                0.5 * p * p
            })),
        )
    }

    /// `max(a, 0)^2`.
    pub fn smith_quadratic() -> Self {
        Self::new(
            "smith-quadratic",
            |a: f64| {
                let p = a.max(0.0);
                p * p
            },
            Some(Arc::new(|a: f64| a.max(0.0).powi(3) / 3.0)),
        )
    }

    /// `a+ / (1 + a+)`, a bounded incentive.
    pub fn saturating() -> Self {
        Self::new(
            "saturating",
            |a: f64| {
                let p = a.max(0.0);
                p / (1.0 + p)
            },
            Some(Arc::new(|a: f64| {
                let p = a.max(0.0);
                p - p.ln_1p()
            })),
        )
    }

    /// Every built-in protocol.
    pub fn registered() -> Vec<Protocol> {
        vec![Self::smith(), Self::smith_quadratic(), Self::saturating()]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::registered()
            .into_iter()
            .find(|p| p.name == name)
            .map_or_else(
                || {
                    let known: Vec<_> = Self::registered().into_iter().map(|p| p.name).collect();
                    config(format!(
                        "unknown protocol '{name}' (known: {})",
                        known.join(", ")
                    ))
                },
                Ok,
            )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn value(&self, a: f64) -> f64 {
        (self.value)(a)
    }

    pub fn has_closed_form(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// `int_0^a value(t) dt`, zero for `a <= 0`.
    pub fn antiderivative(&self, a: f64) -> Result<f64> {
        if a <= 0.0 {
            return Ok(0.0);
        }
        match &self.antiderivative {
            Some(f) => Ok(f(a)),
            None => self.antiderivative_by_quadrature(a),
        }
    }

    pub fn antiderivative_by_quadrature(&self, a: f64) -> Result<f64> {
        if a <= 0.0 {
            return Ok(0.0);
        }
        let f = |t: f64| (self.value)(t);
        adaptive_simpson(&f, 0.0, a, QUADRATURE_TOL).map_err(|e| {
            Error::Numeric(format!(
                "protocol '{}': quadrature did not converge on [{}, {}]",
                self.name, e.a, e.b
            ))
        })
    }

    /// Checks the sign conditions on a uniform grid of `points` over
    /// `[lo, hi]`; returns the first offending argument.
    pub fn sign_violation(&self, lo: f64, hi: f64, points: usize) -> Option<f64> {
        grid(lo, hi, points).find(|&a| {
            let v = self.value(a);
            if a > 0.0 {
                v.is_nan() || v <= 0.0
            } else {
                v != 0.0
            }
        })
    }

    /// Largest difference quotient between neighboring grid points.
    pub fn max_difference_quotient(&self, lo: f64, hi: f64, points: usize) -> f64 {
        let pts: Vec<f64> = grid(lo, hi, points).collect();
        pts.windows(2)
            .map(|w| ((self.value(w[1]) - self.value(w[0])) / (w[1] - w[0])).abs())
            .fold(0.0, f64::max)
    }
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points).map(move |i| lo + step * i as f64)
}

/// The protocols of the primal and dual populations.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub primal: Protocol,
    pub dual: Protocol,
}

impl Dynamics {
    pub fn new(primal: Protocol, dual: Protocol) -> Self {
        Self { primal, dual }
    }

    /// Same protocol in both populations.
    pub fn uniform(protocol: Protocol) -> Self {
        Self {
            primal: protocol.clone(),
            dual: protocol,
        }
    }

    pub fn smith() -> Self {
        Self::uniform(Protocol::smith())
    }
}
