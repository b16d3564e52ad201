//! C ABI over the relay-placement solver and the step-by-step advisor.
//!
//! Every fallible call returns an [`RpStatus`]; on failure the message is
//! kept per thread and read back with [`rp_last_error_message`]. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use relay_placement::advisor::{resolve_policy, Action, Advice, PolicyChoice, Session, SessionParams, StepRequest};
use relay_placement::constrained::{solve_constrained, ConstrainedSolution, SolutionKind};
use relay_placement::model::CostParams;
use relay_placement::osla::{solve_unconstrained, SolveResult};
use relay_placement::placement::PlacementSet;
use relay_placement::renewal::eval_cost;
use relay_placement::sim::Direction;
use relay_placement::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Infeasible = 3,
    InvalidSet = 4,
    InvalidStep = 5,
    SessionEnded = 6,
    SolverFailure = 7,
    Panic = 8,
}

impl From<&Error> for RpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => RpStatus::InvalidParameter,
            Error::Infeasible { .. } => RpStatus::Infeasible,
            Error::Structure(_) | Error::NotOnBoundary(_) => RpStatus::InvalidSet,
            Error::InvalidStep(_) => RpStatus::InvalidStep,
            Error::SessionEnded(_) => RpStatus::SessionEnded,
            _ => RpStatus::SolverFailure,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), RpStatus>) -> RpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RpStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RpStatus::Panic
        }
    }
}

fn fail(e: Error) -> RpStatus {
    set_error(e.to_string());
    RpStatus::from(&e)
}

fn null(what: &str) -> RpStatus {
    set_error(format!("`{what}` is null"));
    RpStatus::NullPointer
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Corridor, cost and relay price.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpParams {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub eta: f64,
    pub p_m: f64,
    pub gamma: f64,
}

impl From<RpParams> for SessionParams {
    fn from(r: RpParams) -> Self {
        SessionParams {
            p: r.p,
            q: r.q,
            lambda: r.lambda,
            eta: r.eta,
            p_m: r.p_m,
            gamma: r.gamma,
        }
    }
}

/// Parameters with the default cost (`p_m = 0.1`, `gamma = 0.01`, `eta = 2`).
#[no_mangle]
pub extern "C" fn rp_params_default(p: f64, q: f64, lambda: f64) -> RpParams {
    RpParams {
        p,
        q,
        lambda,
        eta: CostParams::DEFAULT_ETA,
        p_m: CostParams::DEFAULT_P_M,
        gamma: CostParams::DEFAULT_GAMMA,
    }
}

/// Exact evaluation of a placement set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RpEvaluation {
    pub g: f64,
    pub expected_relays: f64,
    pub expected_cost: f64,
    pub end_mass: f64,
    pub continue_mass: f64,
    pub identity_residual: f64,
}

unsafe fn read_params(params: *const RpParams) -> Result<SessionParams, RpStatus> {
    params.as_ref().map(|p| SessionParams::from(*p)).ok_or_else(|| null("params"))
}

unsafe fn read_set(rows: *const u64, len: usize) -> Result<PlacementSet, RpStatus> {
    if rows.is_null() {
        return Err(null("rows"));
    }
    let rows = std::slice::from_raw_parts(rows, len);
    PlacementSet::from_rows(rows.to_vec()).map_err(fail)
}

/// Copies `src` into `out[..cap]` and returns `src.len()`.
unsafe fn copy_rows(src: &[u64], out: *mut u64, cap: usize) -> usize {
    if !out.is_null() {
        let n = src.len().min(cap);
        ptr::copy_nonoverlapping(src.as_ptr(), out, n);
    }
    src.len()
}

/// Optimal unconstrained policy.
pub struct RpSolution {
    inner: SolveResult,
}

/// Solves the relay-priced problem.
///
/// # Safety
/// `params` must point to a valid `RpParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solve(params: *const RpParams, out: *mut *mut RpSolution) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = read_params(params)?.instance().map_err(fail)?;
        let inner = solve_unconstrained(&inst).map_err(fail)?;
        *out = Box::into_raw(Box::new(RpSolution { inner }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`rp_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_free(sol: *mut RpSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// `g*`, or NaN for a null handle.
///
/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_g_star(sol: *const RpSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.inner.g_star)
}

/// # Safety
/// `sol` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_iterations(sol: *const RpSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.inner.iterations)
}

/// # Safety
/// `sol` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_evaluation(sol: *const RpSolution, out: *mut RpEvaluation) -> RpStatus {
    guard(|| {
        let s = sol.as_ref().ok_or_else(|| null("sol"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = to_c(s.inner.evaluation());
        Ok(())
    })
}

/// Writes up to `cap` boundary rows `m*(0), m*(1), ...` into `out` and
/// returns the total row count. Pass a null `out` to query the length.
///
/// # Safety
/// `sol` must be null or a live handle; `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn rp_solution_boundary(sol: *const RpSolution, out: *mut u64, cap: usize) -> usize {
    sol.as_ref().map_or(0, |s| copy_rows(s.inner.optimal_set.rows(), out, cap))
}

fn to_c(e: &relay_placement::renewal::SetEvaluation) -> RpEvaluation {
    RpEvaluation {
        g: e.g,
        expected_relays: e.expected_relays,
        expected_cost: e.expected_cost,
        end_mass: e.end_mass,
        continue_mass: e.continue_mass,
        identity_residual: e.identity_residual,
    }
}

/// Evaluates the set with boundary rows `rows[..len]`.
///
/// # Safety
/// `params` must be valid, `rows` must hold `len` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_evaluate_set(
    params: *const RpParams,
    rows: *const u64,
    len: usize,
    out: *mut RpEvaluation,
) -> RpStatus {
    guard(|| {
        let inst = read_params(params)?.instance().map_err(fail)?;
        let set = read_set(rows, len)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = to_c(&eval_cost(&set, &inst).map_err(fail)?);
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpSolutionKind {
    Pure = 0,
    Mixed = 1,
    UnconstrainedAtZero = 2,
}

/// Relay-budget-constrained policy.
pub struct RpConstrained {
    inner: ConstrainedSolution,
}

/// Solves for the least-cost policy with at most `rho` expected relays;
/// `params.lambda` is ignored.
///
/// # Safety
/// `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solve_constrained(
    params: *const RpParams,
    rho: f64,
    out: *mut *mut RpConstrained,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = read_params(params)?.instance().map_err(fail)?;
        let inner = solve_constrained(&inst, rho).map_err(fail)?;
        *out = Box::into_raw(Box::new(RpConstrained { inner }));
        Ok(())
    })
}

/// # Safety
/// `sol` must come from [`rp_solve_constrained`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_constrained_free(sol: *mut RpConstrained) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Summary of a constrained solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpConstrainedInfo {
    pub kind: RpSolutionKind,
    pub lambda: f64,
    /// Probability of using the over-budget set.
    pub alpha: f64,
    pub achieved_relays: f64,
    pub achieved_cost: f64,
}

/// # Safety
/// `sol` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_constrained_info(sol: *const RpConstrained, out: *mut RpConstrainedInfo) -> RpStatus {
    guard(|| {
        let s = &sol.as_ref().ok_or_else(|| null("sol"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = RpConstrainedInfo {
            kind: match s.kind {
                SolutionKind::Pure => RpSolutionKind::Pure,
                SolutionKind::Mixed => RpSolutionKind::Mixed,
                SolutionKind::UnconstrainedAtZero => RpSolutionKind::UnconstrainedAtZero,
            },
            lambda: s.lambda,
            alpha: s.alpha,
            achieved_relays: s.achieved_relays,
            achieved_cost: s.achieved_cost,
        };
        Ok(())
    })
}

/// Boundary rows of the under-budget set (`over == false`) or the
/// over-budget set; returns 0 when there is no over-budget set.
///
/// # Safety
/// `sol` must be null or a live handle; `out` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn rp_constrained_boundary(
    sol: *const RpConstrained,
    over: bool,
    out: *mut u64,
    cap: usize,
) -> usize {
    let Some(s) = sol.as_ref() else { return 0 };
    let set = if over { s.inner.set_over.as_ref() } else { Some(&s.inner.set_under) };
    set.map_or(0, |set| copy_rows(set.rows(), out, cap))
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpDirection {
    East = 0,
    North = 1,
    /// No move; only valid together with `ended`.
    Stay = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpAdvice {
    Continue = 0,
    Place = 1,
    SourcePlaced = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpOverride {
    Follow = 0,
    Place = 1,
    Skip = 2,
}

/// A live deployment following a fixed placement set.
pub struct RpSession {
    inner: Session,
}

fn new_session(params: SessionParams, choice: PolicyChoice, out: *mut *mut RpSession) -> Result<(), RpStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    let policy = resolve_policy(&params, &choice).map_err(fail)?;
    let inner = Session::new("ffi", params, Arc::new(policy)).map_err(fail)?;
    // SAFETY: checked non-null above; the caller guarantees it is writable
    unsafe { *out = Box::into_raw(Box::new(RpSession { inner })) };
    Ok(())
}

/// Starts a session that follows the optimal set for `params`.
///
/// # Safety
/// `params` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_session_new(params: *const RpParams, out: *mut *mut RpSession) -> RpStatus {
    guard(|| new_session(read_params(params)?, PolicyChoice::Optimal, out))
}

/// Starts a session that follows the set with boundary rows `rows[..len]`.
///
/// # Safety
/// `params` must be valid, `rows` must hold `len` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_session_new_with_set(
    params: *const RpParams,
    rows: *const u64,
    len: usize,
    out: *mut *mut RpSession,
) -> RpStatus {
    guard(|| {
        let params = read_params(params)?;
        let set = read_set(rows, len)?;
        new_session(params, PolicyChoice::Explicit { set }, out)
    })
}

/// # Safety
/// `s` must come from `rp_session_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_session_free(s: *mut RpSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Reports one step of the path. The advice for the reached point is
/// written to `advice`; the hop cost charged by this step (zero unless a
/// relay or the source is placed) to `step_cost`. Either may be null.
///
/// # Safety
/// `s` must be a live handle; `advice` and `step_cost` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rp_session_step(
    s: *mut RpSession,
    direction: RpDirection,
    ended: bool,
    override_action: RpOverride,
    advice: *mut RpAdvice,
    step_cost: *mut f64,
) -> RpStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("session"))?;
        let req = StepRequest {
            direction: match direction {
                RpDirection::East => Some(Direction::East),
                RpDirection::North => Some(Direction::North),
                RpDirection::Stay => None,
            },
            ended,
            override_action: match override_action {
                RpOverride::Follow => None,
                RpOverride::Place => Some(relay_placement::advisor::Override::Place),
                RpOverride::Skip => Some(relay_placement::advisor::Override::Skip),
            },
        };
        let (a, _action, cost): (Advice, Action, f64) = s.inner.apply_step(req).map_err(fail)?;
        if let Some(out) = advice.as_mut() {
            *out = match a {
                Advice::Continue => RpAdvice::Continue,
                Advice::Place => RpAdvice::Place,
                Advice::SourcePlaced => RpAdvice::SourcePlaced,
            };
        }
        if let Some(out) = step_cost.as_mut() {
            *out = cost;
        }
        Ok(())
    })
}

/// Snapshot of a session's counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RpSessionState {
    /// Offset from the last relay.
    pub rel_m: u64,
    pub rel_n: u64,
    pub abs_m: u64,
    pub abs_n: u64,
    pub steps: u64,
    pub relays: u64,
    pub accumulated_cost: f64,
    /// `accumulated_cost + lambda * relays`.
    pub objective: f64,
    pub ended: bool,
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_session_state(s: *const RpSession, out: *mut RpSessionState) -> RpStatus {
    guard(|| {
        let v = s.as_ref().ok_or_else(|| null("session"))?.inner.view();
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = RpSessionState {
            rel_m: v.rel_state.m,
            rel_n: v.rel_state.n,
            abs_m: v.abs_position.m,
            abs_n: v.abs_position.n,
            steps: v.steps,
            relays: v.relays,
            accumulated_cost: v.accumulated_cost,
            objective: v.objective,
            ended: v.ended,
        };
        Ok(())
    })
}
