//! C ABI over `popdyn`.
//!
//! Games and trajectories are opaque heap handles released with their
//! `*_free` function. Every fallible call returns a [`PopdynStatus`]; on
//! failure `popdyn_last_error_message` describes the error for the calling
//! thread. Output buffers are caller-allocated and their lengths are checked.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use popdyn::dynamics::{dual_field, integrate, primal_field, Integrator, SimParams, Trajectory};
use popdyn::equilibrium::{dual_mass_bound, in_equilibria_set, SlaterPoint};
use popdyn::lyapunov::lyapunov_value;
use popdyn::{games, io, Dynamics, Error, GameSpec, Protocol};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopdynStatus {
    Ok = 0,
    NullPointer = 1,
    BufferTooSmall = 2,
    InvalidUtf8 = 3,
    Config = 4,
    InvalidState = 5,
    Unsupported = 6,
    Diverged = 7,
    Infeasible = 8,
    SlaterViolation = 9,
    Numeric = 10,
    Io = 11,
    IndexOutOfRange = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopdynIntegrator {
    Euler = 0,
    Rk4 = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopdynSimParams {
    pub step: f64,
    pub horizon: f64,
    pub integrator: PopdynIntegrator,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub record_every: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopdynReport {
    pub primal_nash_residual: f64,
    pub dual_nash_residual: f64,
    pub feasibility_residual: f64,
    pub complementarity_residual: f64,
    pub saddle_violation: f64,
    pub in_equilibria_set: bool,
}

/// Opaque game handle.
pub struct PopdynGame(GameSpec);

/// Opaque trajectory handle.
pub struct PopdynTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PopdynStatus {
    match err {
        Error::Config(_) | Error::Json(_) => PopdynStatus::Config,
        Error::Unsupported(_) => PopdynStatus::Unsupported,
        Error::InvalidState(_) => PopdynStatus::InvalidState,
        Error::Diverged { .. } => PopdynStatus::Diverged,
        Error::Infeasible(_) => PopdynStatus::Infeasible,
        Error::SlaterViolation { .. } => PopdynStatus::SlaterViolation,
        Error::Numeric(_) => PopdynStatus::Numeric,
        Error::Io(_) => PopdynStatus::Io,
    }
}

struct Fail(PopdynStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> PopdynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PopdynStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PopdynStatus::Panic
        }
    }
}

unsafe fn game_ref<'a>(game: *const PopdynGame) -> FfiResult<&'a GameSpec> {
    game.as_ref()
        .map(|g| &g.0)
        .ok_or_else(|| Fail(PopdynStatus::NullPointer, "game handle is null".into()))
}

unsafe fn input<'a>(ptr: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if ptr.is_null() {
        return Err(Fail(PopdynStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(
    ptr: *mut f64,
    len: usize,
    needed: usize,
    what: &str,
) -> FfiResult<&'a mut [f64]> {
    if ptr.is_null() {
        return Err(Fail(PopdynStatus::NullPointer, format!("{what} is null")));
    }
    if len < needed {
        return Err(Fail(
            PopdynStatus::BufferTooSmall,
            format!("{what} holds {len} values, {needed} needed"),
        ));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> FfiResult<&'a str> {
    if ptr.is_null() {
        return Err(Fail(PopdynStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Fail(PopdynStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult {
    if out.is_null() {
        return Err(Fail(PopdynStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

/// A null protocol name selects Smith for both populations.
unsafe fn dynamics(protocol: *const c_char) -> FfiResult<Dynamics> {
    if protocol.is_null() {
        return Ok(Dynamics::smith());
    }
    Ok(Dynamics::uniform(Protocol::by_name(text(
        protocol, "protocol",
    )?)?))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn popdyn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn popdyn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds `paper-congestion` or `paper-rps`.
#[no_mangle]
pub unsafe extern "C" fn popdyn_game_builtin(
    name: *const c_char,
    out: *mut *mut PopdynGame,
) -> PopdynStatus {
    guard(|| {
        let game = games::builtin(text(name, "name")?)?;
        write_out(out, Box::into_raw(Box::new(PopdynGame(game))), "out")
    })
}

/// Builds a game from its JSON description.
#[no_mangle]
pub unsafe extern "C" fn popdyn_game_from_json(
    json: *const c_char,
    out: *mut *mut PopdynGame,
) -> PopdynStatus {
    guard(|| {
        let game = io::parse_game(text(json, "json")?)?;
        write_out(out, Box::into_raw(Box::new(PopdynGame(game))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn popdyn_game_free(game: *mut PopdynGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Strategy count `n` and constraint count `q` (the dual state has `q + 1` entries).
#[no_mangle]
pub unsafe extern "C" fn popdyn_game_dims(
    game: *const PopdynGame,
    n: *mut usize,
    q: *mut usize,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        write_out(n, g.n(), "n")?;
        write_out(q, g.q(), "q")
    })
}

#[no_mangle]
pub unsafe extern "C" fn popdyn_game_masses(
    game: *const PopdynGame,
    primal_mass: *mut f64,
    dual_mass: *mut f64,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        write_out(primal_mass, g.primal_mass(), "primal_mass")?;
        write_out(dual_mass, g.dual_mass(), "dual_mass")
    })
}

/// `f(x)` into `out[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn popdyn_game_fitness(
    game: *const PopdynGame,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let x = g.primal_state(input(x, x_len, "x")?.to_vec())?;
        let f = g.fitness(&x)?;
        output(out, out_len, f.len(), "out")?[..f.len()].copy_from_slice(&f);
        Ok(())
    })
}

/// `g(x)` into `out[0..q+1]`; entry 0 is the null constraint.
#[no_mangle]
pub unsafe extern "C" fn popdyn_game_constraint_values(
    game: *const PopdynGame,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let x = g.primal_state(input(x, x_len, "x")?.to_vec())?;
        let v = g.constraint_values(&x)?;
        output(out, out_len, v.len(), "out")?[..v.len()].copy_from_slice(&v);
        Ok(())
    })
}

/// Primal and dual vector fields at `(x, mu)`.
#[no_mangle]
pub unsafe extern "C" fn popdyn_fields(
    game: *const PopdynGame,
    protocol: *const c_char,
    x: *const f64,
    x_len: usize,
    mu: *const f64,
    mu_len: usize,
    xdot: *mut f64,
    xdot_len: usize,
    mudot: *mut f64,
    mudot_len: usize,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let d = dynamics(protocol)?;
        let x = g.primal_state(input(x, x_len, "x")?.to_vec())?;
        let mu = g.dual_state(input(mu, mu_len, "mu")?.to_vec())?;
        let fx = primal_field(g, &d.primal, &x, &mu)?;
        let fm = dual_field(g, &d.dual, &x, &mu)?;
        output(xdot, xdot_len, fx.len(), "xdot")?[..fx.len()].copy_from_slice(&fx);
        output(mudot, mudot_len, fm.len(), "mudot")?[..fm.len()].copy_from_slice(&fm);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn popdyn_lyapunov(
    game: *const PopdynGame,
    protocol: *const c_char,
    x: *const f64,
    x_len: usize,
    mu: *const f64,
    mu_len: usize,
    out: *mut f64,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let d = dynamics(protocol)?;
        let x = g.primal_state(input(x, x_len, "x")?.to_vec())?;
        let mu = g.dual_state(input(mu, mu_len, "mu")?.to_vec())?;
        write_out(out, lyapunov_value(g, &d, &x, &mu)?, "out")
    })
}

#[no_mangle]
pub extern "C" fn popdyn_sim_params_default() -> PopdynSimParams {
    let p = SimParams::default();
    PopdynSimParams {
        step: p.step,
        horizon: p.horizon,
        integrator: PopdynIntegrator::Euler,
        convergence_tol: p.convergence_tol,
        convergence_window: p.convergence_window,
        record_every: p.record_every,
        seed: p.seed,
    }
}

/// Integrates from `(x0, mu0)`. Non-convergence is not an error; query it
/// with `popdyn_trajectory_converged`.
#[no_mangle]
pub unsafe extern "C" fn popdyn_simulate(
    game: *const PopdynGame,
    protocol: *const c_char,
    x0: *const f64,
    x0_len: usize,
    mu0: *const f64,
    mu0_len: usize,
    params: *const PopdynSimParams,
    out: *mut *mut PopdynTrajectory,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let d = dynamics(protocol)?;
        let p = params
            .as_ref()
            .ok_or_else(|| Fail(PopdynStatus::NullPointer, "params is null".into()))?;
        let x0 = g.primal_state(input(x0, x0_len, "x0")?.to_vec())?;
        let mu0 = g.dual_state(input(mu0, mu0_len, "mu0")?.to_vec())?;
        let params = SimParams {
            step: p.step,
            horizon: p.horizon,
            integrator: match p.integrator {
                PopdynIntegrator::Euler => Integrator::Euler,
                PopdynIntegrator::Rk4 => Integrator::Rk4,
            },
            convergence_tol: p.convergence_tol,
            convergence_window: p.convergence_window,
            record_every: p.record_every,
            seed: p.seed,
        };
        let traj = integrate(g, &d, &x0, &mu0, &params)?;
        write_out(out, Box::into_raw(Box::new(PopdynTrajectory(traj))), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn popdyn_trajectory_free(traj: *mut PopdynTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded states; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn popdyn_trajectory_len(traj: *const PopdynTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.len())
}

/// Whether the run met the convergence criterion; false for a null handle.
#[no_mangle]
pub unsafe extern "C" fn popdyn_trajectory_converged(traj: *const PopdynTrajectory) -> bool {
    traj.as_ref().is_some_and(|t| t.0.converged)
}

/// Recorded state `index`: time, `x` and `mu`. Any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn popdyn_trajectory_state(
    traj: *const PopdynTrajectory,
    index: usize,
    t: *mut f64,
    x: *mut f64,
    x_len: usize,
    mu: *mut f64,
    mu_len: usize,
) -> PopdynStatus {
    guard(|| {
        let tr = &traj
            .as_ref()
            .ok_or_else(|| Fail(PopdynStatus::NullPointer, "trajectory is null".into()))?
            .0;
        if index >= tr.len() {
            return Err(Fail(
                PopdynStatus::IndexOutOfRange,
                format!("index {index} >= length {}", tr.len()),
            ));
        }
        if !t.is_null() {
            t.write(tr.times[index]);
        }
        let xs = tr.primal[index].as_slice();
        if !x.is_null() {
            output(x, x_len, xs.len(), "x")?[..xs.len()].copy_from_slice(xs);
        }
        let ms = tr.dual[index].as_slice();
        if !mu.is_null() {
            output(mu, mu_len, ms.len(), "mu")?[..ms.len()].copy_from_slice(ms);
        }
        Ok(())
    })
}

/// Equilibria-set membership of `(x, mu)` at tolerance `tol`.
#[no_mangle]
pub unsafe extern "C" fn popdyn_verify(
    game: *const PopdynGame,
    x: *const f64,
    x_len: usize,
    mu: *const f64,
    mu_len: usize,
    tol: f64,
    out: *mut PopdynReport,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let x = g.primal_state(input(x, x_len, "x")?.to_vec())?;
        let mu = g.dual_state(input(mu, mu_len, "mu")?.to_vec())?;
        let r = in_equilibria_set(g, &x, &mu, tol)?;
        write_out(
            out,
            PopdynReport {
                primal_nash_residual: r.primal_nash_residual,
                dual_nash_residual: r.dual_nash_residual,
                feasibility_residual: r.feasibility_residual,
                complementarity_residual: r.complementarity_residual,
                saddle_violation: r.saddle_violation,
                in_equilibria_set: r.in_e(),
            },
            "out",
        )
    })
}

/// Dual mass certified by the Slater point `x_tilde` and an upper bound on
/// the optimal potential.
#[no_mangle]
pub unsafe extern "C" fn popdyn_dual_mass_bound(
    game: *const PopdynGame,
    x_tilde: *const f64,
    x_len: usize,
    p_star_upper: f64,
    out: *mut f64,
) -> PopdynStatus {
    guard(|| {
        let g = game_ref(game)?;
        let slater = SlaterPoint::new(
            g,
            g.primal_state(input(x_tilde, x_len, "x_tilde")?.to_vec())?,
        )?;
        write_out(out, dual_mass_bound(g, &slater, p_star_upper)?, "out")
    })
}
