use std::ffi::CStr;
use std::ptr;

use relay_placement::model::Instance;
use relay_placement::osla::solve_unconstrained;
use relay_placement_ffi::*;

fn params() -> RpParams {
    rp_params_default(0.02, 0.5, 41.0)
}

fn last_error() -> String {
    let p = rp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn solve(params: &RpParams) -> *mut RpSolution {
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { rp_solve(params, &mut sol) }, RpStatus::Ok);
    sol
}

fn boundary(sol: *const RpSolution) -> Vec<u64> {
    let len = unsafe { rp_solution_boundary(sol, ptr::null_mut(), 0) };
    let mut rows = vec![0; len];
    assert_eq!(unsafe { rp_solution_boundary(sol, rows.as_mut_ptr(), len) }, len);
    rows
}

#[test]
fn solve_matches_core() {
    let sol = solve(&params());
    let inst = Instance::power(0.02, 0.5, 41.0, 0.1, 0.01, 2.0).unwrap();
    let core = solve_unconstrained(&inst).unwrap();
    unsafe {
        assert_eq!(rp_solution_g_star(sol), core.g_star);
        assert_eq!(rp_solution_iterations(sol), core.iterations);
        let mut ev = RpEvaluation::default();
        assert_eq!(rp_solution_evaluation(sol, &mut ev), RpStatus::Ok);
        assert_eq!(ev.g, core.evaluation().g);
        assert_eq!(ev.expected_relays, core.evaluation().expected_relays);
    }
    assert_eq!(boundary(sol), core.optimal_set.rows());

    // a short buffer receives a prefix and the full length is still reported
    let mut two = [0u64; 2];
    let len = unsafe { rp_solution_boundary(sol, two.as_mut_ptr(), 2) };
    assert_eq!(len, core.optimal_set.rows().len());
    assert_eq!(two, core.optimal_set.rows()[..2]);
    unsafe { rp_solution_free(sol) };
}

#[test]
fn evaluate_set_round_trips_the_optimum() {
    let sol = solve(&params());
    let rows = boundary(sol);
    let mut ev = RpEvaluation::default();
    let status = unsafe { rp_evaluate_set(&params(), rows.as_ptr(), rows.len(), &mut ev) };
    assert_eq!(status, RpStatus::Ok);
    let g = unsafe { rp_solution_g_star(sol) };
    assert!((ev.g - g).abs() <= 1e-12 * g);
    assert!((ev.end_mass + ev.continue_mass - 1.0).abs() < 1e-10);
    unsafe { rp_solution_free(sol) };
}

#[test]
fn errors_set_status_and_message() {
    let mut bad = params();
    bad.p = 1.5;
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { rp_solve(&bad, &mut sol) }, RpStatus::InvalidParameter);
    assert!(sol.is_null());
    assert!(last_error().contains("`p`"), "{}", last_error());

    assert_eq!(unsafe { rp_solve(ptr::null(), &mut sol) }, RpStatus::NullPointer);
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { rp_solve(&params(), ptr::null_mut()) }, RpStatus::NullPointer);

    // rows must be non-increasing
    let rows = [2u64, 5];
    let mut ev = RpEvaluation::default();
    assert_eq!(
        unsafe { rp_evaluate_set(&params(), rows.as_ptr(), rows.len(), &mut ev) },
        RpStatus::InvalidSet
    );

    let mut c = ptr::null_mut();
    let p = rp_params_default(0.002, 0.5, 0.0);
    assert_eq!(unsafe { rp_solve_constrained(&p, 1e-300, &mut c) }, RpStatus::Infeasible);
    assert!(last_error().contains("infeasible"));

    // success clears the message
    let sol = solve(&params());
    assert!(rp_last_error_message().is_null());
    unsafe { rp_solution_free(sol) };

    // null handles are tolerated by accessors and frees
    unsafe {
        assert!(rp_solution_g_star(ptr::null()).is_nan());
        assert_eq!(rp_solution_boundary(ptr::null(), ptr::null_mut(), 0), 0);
        rp_solution_free(ptr::null_mut());
        rp_session_free(ptr::null_mut());
        rp_constrained_free(ptr::null_mut());
    }
}

#[test]
fn constrained_mixture_meets_budget() {
    let p = rp_params_default(0.5, 1.0, 0.0);
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { rp_solve_constrained(&p, 0.04, &mut c) }, RpStatus::Ok);
    let mut info = RpConstrainedInfo {
        kind: RpSolutionKind::Pure,
        lambda: 0.0,
        alpha: 0.0,
        achieved_relays: 0.0,
        achieved_cost: 0.0,
    };
    assert_eq!(unsafe { rp_constrained_info(c, &mut info) }, RpStatus::Ok);
    assert_eq!(info.kind, RpSolutionKind::Mixed);
    assert!((info.achieved_relays - 0.04).abs() < 1e-12);
    assert!(info.alpha > 0.0 && info.alpha < 1.0);
    let under = unsafe { rp_constrained_boundary(c, false, ptr::null_mut(), 0) };
    let over = unsafe { rp_constrained_boundary(c, true, ptr::null_mut(), 0) };
    assert!(under > 0 && over > 0);
    unsafe { rp_constrained_free(c) };
}

/// Line set `m + n >= 8`.
const LINE: [u64; 8] = [8, 7, 6, 5, 4, 3, 2, 1];

fn session() -> *mut RpSession {
    let mut s = ptr::null_mut();
    let status = unsafe { rp_session_new_with_set(&params(), LINE.as_ptr(), LINE.len(), &mut s) };
    assert_eq!(status, RpStatus::Ok);
    s
}

fn step(s: *mut RpSession, d: RpDirection, ended: bool, o: RpOverride) -> (RpStatus, RpAdvice, f64) {
    let mut advice = RpAdvice::Continue;
    let mut cost = f64::NAN;
    let status = unsafe { rp_session_step(s, d, ended, o, &mut advice, &mut cost) };
    (status, advice, cost)
}

fn state(s: *const RpSession) -> RpSessionState {
    let mut st = RpSessionState::default();
    assert_eq!(unsafe { rp_session_state(s, &mut st) }, RpStatus::Ok);
    st
}

#[test]
fn session_follows_the_set() {
    let s = session();
    for m in 1..=8 {
        let (status, advice, cost) = step(s, RpDirection::East, false, RpOverride::Follow);
        assert_eq!(status, RpStatus::Ok);
        if m < 8 {
            assert_eq!((advice, cost), (RpAdvice::Continue, 0.0));
        } else {
            assert_eq!(advice, RpAdvice::Place);
            assert!((cost - (0.1 + 0.01 * 64.0)).abs() < 1e-12);
        }
    }
    let st = state(s);
    assert_eq!((st.rel_m, st.rel_n, st.abs_m, st.relays), (0, 0, 8, 1));

    let (status, advice, cost) = step(s, RpDirection::North, true, RpOverride::Follow);
    assert_eq!((status, advice), (RpStatus::Ok, RpAdvice::SourcePlaced));
    assert!((cost - 0.11).abs() < 1e-12);
    let st = state(s);
    assert!(st.ended);
    assert!((st.objective - (st.accumulated_cost + 41.0)).abs() < 1e-12);

    let (status, ..) = step(s, RpDirection::East, false, RpOverride::Follow);
    assert_eq!(status, RpStatus::SessionEnded);
    unsafe { rp_session_free(s) };
}

#[test]
fn session_overrides_and_invalid_steps() {
    let s = session();
    let (status, ..) = step(s, RpDirection::Stay, false, RpOverride::Follow);
    assert_eq!(status, RpStatus::InvalidStep);
    let (status, ..) = step(s, RpDirection::Stay, true, RpOverride::Follow);
    assert_eq!(status, RpStatus::InvalidStep);

    let (_, advice, _) = step(s, RpDirection::East, false, RpOverride::Place);
    assert_eq!(advice, RpAdvice::Continue);
    assert_eq!(state(s).relays, 1);
    for _ in 0..8 {
        step(s, RpDirection::East, false, RpOverride::Skip);
    }
    let st = state(s);
    assert_eq!((st.relays, st.rel_m, st.abs_m), (1, 8, 9));
    unsafe { rp_session_free(s) };
}

#[test]
fn optimal_session_uses_solver_boundary() {
    let sol = solve(&params());
    let m0 = boundary(sol)[0];
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rp_session_new(&params(), &mut s) }, RpStatus::Ok);
    for m in 1..=m0 {
        let (_, advice, _) = step(s, RpDirection::East, false, RpOverride::Follow);
        assert_eq!(advice == RpAdvice::Place, m == m0);
    }
    unsafe {
        rp_session_free(s);
        rp_solution_free(sol);
    }
}
