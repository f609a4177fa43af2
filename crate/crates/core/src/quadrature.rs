//! Adaptive Simpson quadrature.

const MAX_DEPTH: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureFailure {
    pub a: f64,
    pub b: f64,
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Fails if the recursion depth limit is reached or a non-finite value shows
/// up before the tolerance is met.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureFailure> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureFailure> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(QuadratureFailure { a, b });
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureFailure { a, b });
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}
