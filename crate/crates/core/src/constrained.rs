//! Relay-budget constrained placement.
//!
//! The expected relay count `E N(λ)` of the optimal relay-priced policy is
//! a non-increasing staircase in `λ`. A budget strictly inside a step is met
//! by randomizing, once per deployment, between the two optimal sets at the
//! step price.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HopCost, Instance};
use crate::osla::{solve_unconstrained, solve_with, SolveOptions};
use crate::placement::{bounding_box, PlacementSet};
use crate::renewal::SetEvaluation;

/// Largest complement (in lattice points) the price search will evaluate.
pub const MAX_SEARCH_POINTS: u64 = 10_000_000;
const LAMBDA_CAP: f64 = 1e12;
const PURE_MATCH: f64 = 1e-12;
/// Relative objective slack under which a probe counts as a tie.
const TIE_SLACK: f64 = 1e-10;
const BREAKPOINT_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub expected_relays: f64,
    /// Hop-cost part of the objective.
    pub expected_cost: f64,
    /// `J_λ(0, 0) = E C + λ E N`.
    pub total_cost: f64,
}

/// Solves the relay-priced problem at every price, in parallel.
pub fn relay_curve<C>(inst: &Instance<C>, lambdas: &[f64]) -> Result<Vec<CurvePoint>>
where
    C: HopCost + Clone,
{
    if lambdas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::param("lambda_grid", "must be sorted ascending"));
    }
    lambdas
        .par_iter()
        .map(|&lambda| {
            let sol = solve_unconstrained(&inst.with_lambda(lambda)?)?;
            let ev = sol.evaluation();
            Ok(CurvePoint {
                lambda,
                expected_relays: ev.expected_relays,
                expected_cost: ev.expected_cost,
                total_cost: sol.g_star,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolutionKind {
    Pure,
    Mixed,
    UnconstrainedAtZero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstrainedSolution {
    pub kind: SolutionKind,
    pub lambda: f64,
    /// Fewer relays than the budget (used with probability `1 - alpha`);
    /// the only set for pure solutions.
    pub set_under: PlacementSet,
    /// More relays than the budget (used with probability `alpha`).
    pub set_over: Option<PlacementSet>,
    pub alpha: f64,
    pub rho_under: f64,
    pub rho_over: f64,
    pub cost_under: f64,
    pub cost_over: f64,
    pub achieved_relays: f64,
    pub achieved_cost: f64,
}

struct Probe {
    lambda: f64,
    g_star: f64,
    set: PlacementSet,
    eval: SetEvaluation,
}

impl Probe {
    /// Relay-priced objective of this probe's set at another price.
    fn objective(&self, lambda: f64) -> f64 {
        self.eval.expected_cost + lambda * self.eval.expected_relays
    }
}

fn probe<C: HopCost + Clone>(inst: &Instance<C>, lambda: f64, warm_start: f64) -> Result<Probe> {
    let opts = SolveOptions {
        warm_start,
        ..Default::default()
    };
    let sol = solve_with(&inst.with_lambda(lambda)?, opts)?;
    let eval = *sol.evaluation();
    Ok(Probe {
        lambda,
        g_star: sol.g_star,
        set: sol.optimal_set,
        eval,
    })
}

fn pure(p: Probe, kind: SolutionKind) -> ConstrainedSolution {
    ConstrainedSolution {
        kind,
        lambda: p.lambda,
        alpha: 0.0,
        rho_under: p.eval.expected_relays,
        rho_over: p.eval.expected_relays,
        cost_under: p.eval.expected_cost,
        cost_over: p.eval.expected_cost,
        achieved_relays: p.eval.expected_relays,
        achieved_cost: p.eval.expected_cost,
        set_under: p.set,
        set_over: None,
    }
}

fn matches(en: f64, rho: f64) -> bool {
    (en - rho).abs() <= PURE_MATCH * rho
}

/// Minimizes `E C` subject to `E N <= rho` (met with equality when the
/// budget binds). The relay price in `inst` is ignored.
///
/// After bracketing the budget between two prices, each step probes the
/// price at which the two bracketing sets have equal objectives. If the
/// optimum there is no better than both, that price is the step and the
/// two sets are the mixing components; otherwise the new optimal set lies
/// strictly between them on the `(E N, E C)` hull and replaces one side.
pub fn solve_constrained<C: HopCost + Clone>(inst: &Instance<C>, rho: f64) -> Result<ConstrainedSolution> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive and finite, got {rho}")));
    }
    let zero = probe(inst, 0.0, 0.0)?;
    let rho_max = zero.eval.expected_relays;
    if rho >= rho_max {
        return Ok(pure(zero, SolutionKind::UnconstrainedAtZero));
    }
    if matches(rho_max, rho) {
        return Ok(pure(zero, SolutionKind::Pure));
    }

    // E N(lo) > rho > E N(hi)
    let mut lo = zero;
    let mut hi_lambda = 1.0;
    let mut best = rho_max;
    let mut hi = loop {
        let (m, n) = bounding_box(inst.p() * hi_lambda, inst.q(), &inst.cost)?;
        if hi_lambda > LAMBDA_CAP || (m + 1).saturating_mul(n + 1) > MAX_SEARCH_POINTS {
            return Err(Error::Infeasible { rho, best });
        }
        let pr = probe(inst, hi_lambda, lo.g_star)?;
        best = best.min(pr.eval.expected_relays);
        if matches(pr.eval.expected_relays, rho) {
            return Ok(pure(pr, SolutionKind::Pure));
        }
        if pr.eval.expected_relays < rho {
            break pr;
        }
        lo = pr;
        hi_lambda *= 2.0;
    };

    for _ in 0..BREAKPOINT_CAP {
        let span = lo.eval.expected_relays - hi.eval.expected_relays;
        let lambda = (hi.eval.expected_cost - lo.eval.expected_cost) / span;
        let lambda = lambda.clamp(lo.lambda, hi.lambda);
        let line = lo.objective(lambda);
        let mid = probe(inst, lambda, hi.g_star)?;
        if mid.g_star >= line - TIE_SLACK * (1.0 + line.abs()) || mid.set == lo.set || mid.set == hi.set {
            let alpha = (rho - hi.eval.expected_relays) / span;
            tracing::debug!(lambda, alpha, "budget falls inside a step");
            let (over, under) = (lo.eval, hi.eval);
            return Ok(ConstrainedSolution {
                kind: SolutionKind::Mixed,
                lambda,
                alpha,
                rho_under: under.expected_relays,
                rho_over: over.expected_relays,
                cost_under: under.expected_cost,
                cost_over: over.expected_cost,
                achieved_relays: (1.0 - alpha) * under.expected_relays + alpha * over.expected_relays,
                achieved_cost: (1.0 - alpha) * under.expected_cost + alpha * over.expected_cost,
                set_under: hi.set,
                set_over: Some(lo.set),
            });
        }
        if matches(mid.eval.expected_relays, rho) {
            return Ok(pure(mid, SolutionKind::Pure));
        }
        if mid.eval.expected_relays > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Inconsistent(format!(
        "no relay-price step found for budget {rho} within {BREAKPOINT_CAP} probes"
    )))
}
