//! One-step-look-ahead fixed-point iteration for the relay-priced problem.
//!
//! Starting from `h = 0`, build the threshold set `P(h)` with threshold
//! `p (λ + h)`, evaluate its renewal cost `g(h)` and repeat with `h = g(h)`.
//! The iteration stops as soon as two consecutive sets coincide: `g`
//! depends on `h` only through `P(h)`, so the last value is an exact
//! fixed point without any floating-point equality test. It also stops
//! when `g(h)` fails to fall below `h`, which only happens once `h` is a
//! fixed point to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HopCost, Instance};
use crate::placement::PlacementSet;
use crate::renewal::{eval_cost, SetEvaluation};

pub const DEFAULT_ITERATION_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Initial `h`; zero unless warm-starting a sweep.
    pub warm_start: f64,
    pub iteration_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            warm_start: 0.0,
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub g_star: f64,
    pub optimal_set: PlacementSet,
    /// `h(0), h(1), ..., h(k)` with `g(h(k)) = h(k)`.
    pub trace: Vec<f64>,
    /// Number of `g` evaluations.
    pub iterations: usize,
    /// Evaluation of `P(h(i))` for every `i < k`; the last one belongs to
    /// the optimal set.
    pub evaluations: Vec<SetEvaluation>,
}

impl SolveResult {
    pub fn evaluation(&self) -> &SetEvaluation {
        self.evaluations.last().expect("at least one evaluation")
    }
}

/// Threshold set `P(h)` for an instance.
pub fn threshold_set<C: HopCost>(inst: &Instance<C>, h: f64) -> Result<PlacementSet> {
    PlacementSet::build(inst.p() * (inst.lambda() + h), inst.q(), &inst.cost)
}

/// `g(h)`: renewal cost of using `P(h)`.
pub fn g_of_h<C: HopCost>(inst: &Instance<C>, h: f64) -> Result<f64> {
    Ok(eval_cost(&threshold_set(inst, h)?, inst)?.g)
}

pub fn solve_unconstrained<C: HopCost>(inst: &Instance<C>) -> Result<SolveResult> {
    solve_with(inst, SolveOptions::default())
}

pub fn solve_with<C: HopCost>(inst: &Instance<C>, opts: SolveOptions) -> Result<SolveResult> {
    let mut h = opts.warm_start;
    let mut set = threshold_set(inst, h)?;
    let mut eval = eval_cost(&set, inst)?;
    let mut trace = vec![h];
    let mut evaluations = vec![eval];

    for _ in 0..opts.iteration_cap {
        // past the first step h strictly decreases until the fixed point;
        // g(h) >= h there means h is already a fixed point in floating
        // point (the sets differ only where the path has negligible mass)
        if trace.len() > 1 && eval.g >= h {
            tracing::debug!(h, g = eval.g, "g(h) = h to rounding; stopping");
            return Ok(SolveResult {
                g_star: h,
                optimal_set: set,
                iterations: trace.len() - 1,
                trace,
                evaluations,
            });
        }
        h = eval.g;
        trace.push(h);
        let next = threshold_set(inst, h)?;
        if next == set {
            tracing::debug!(iterations = trace.len() - 1, g_star = h, "fixed point reached");
            return Ok(SolveResult {
                g_star: h,
                optimal_set: next,
                iterations: trace.len() - 1,
                trace,
                evaluations,
            });
        }
        set = next;
        eval = eval_cost(&set, inst)?;
        evaluations.push(eval);
    }
    Err(Error::IterationCap {
        cap: opts.iteration_cap,
        trace,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridScan {
    /// `(h, g(h))` in increasing `h`.
    pub points: Vec<(f64, f64)>,
    pub argmin: f64,
    pub min: f64,
}

impl GridScan {
    /// Number of sign changes of `g(h) - h` along the grid; an exact zero
    /// counts once.
    pub fn diagonal_crossings(&self) -> usize {
        let mut count = 0;
        let mut prev: Option<bool> = None;
        for &(h, g) in &self.points {
            let diff = g - h;
            if diff == 0.0 {
                count += 1;
                prev = None;
                continue;
            }
            let above = diff > 0.0;
            if prev.is_some_and(|p| p != above) {
                count += 1;
            }
            prev = Some(above);
        }
        count
    }
}

/// Samples `g` on `0, step, 2 step, ..., <= h_max`.
pub fn grid_scan<C: HopCost>(inst: &Instance<C>, h_max: f64, step: f64) -> Result<GridScan> {
    if !(h_max > 0.0) {
        return Err(Error::param("h_max", format!("must be positive, got {h_max}")));
    }
    if !(step > 0.0) {
        return Err(Error::param("step", format!("must be positive, got {step}")));
    }
    let count = (h_max / step).floor() as usize + 1;
    let mut points = Vec::with_capacity(count);
    // consecutive grid points usually share a set
    let mut cached: Option<(PlacementSet, f64)> = None;
    for i in 0..count {
        let h = i as f64 * step;
        let set = threshold_set(inst, h)?;
        let g = match &cached {
            Some((s, g)) if *s == set => *g,
            _ => {
                let g = eval_cost(&set, inst)?.g;
                cached = Some((set, g));
                g
            }
        };
        points.push((h, g));
    }
    let (argmin, min) = points
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, (h, g)| if g < best.1 { (h, g) } else { best });
    Ok(GridScan { points, argmin, min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostParams, PathParams};
    use approx::assert_relative_eq;

    fn inst(p: f64, q: f64, lambda: f64, eta: f64) -> Instance {
        Instance::power(p, q, lambda, 0.1, 0.01, eta).unwrap()
    }

    /// Brute force over 1-D thresholds {m >= k}, independent of the solver.
    fn one_d_brute_force(p: f64, lambda: f64, cost: &CostParams, kmax: u64) -> (u64, f64) {
        let s = 1.0 - p;
        let d = |m: u64| cost.at_distance(m as f64);
        (1..=kmax)
            .map(|k| {
                let mut num = 0.0;
                for m in 1..=k {
                    num += p * s.powi(m as i32 - 1) * d(m);
                }
                let cont = s.powi(k as i32);
                num += cont * (lambda + d(k));
                (k, num / (1.0 - cont))
            })
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
    }

    #[test]
    fn one_dimensional_matches_brute_force() {
        let i = inst(0.5, 1.0, 1.0, 2.0);
        let (k, g) = one_d_brute_force(0.5, 1.0, &i.cost, 200);
        let sol = solve_unconstrained(&i).unwrap();
        assert_relative_eq!(sol.g_star, g, max_relative = 1e-12);
        assert_eq!(sol.optimal_set.rows(), &[k]);
    }

    #[test]
    fn trace_decreases_and_terminates_quickly() {
        let sol = solve_unconstrained(&inst(0.02, 0.5, 41.0, 2.0)).unwrap();
        assert!(sol.iterations <= 10, "{:?}", sol.trace);
        let tail = &sol.trace[1..];
        assert!(tail.windows(2).all(|w| w[1] < w[0]), "{:?}", sol.trace);
        // the last value is an exact fixed point of g
        assert_eq!(g_of_h(&sol_inst(), sol.g_star).unwrap(), sol.g_star);
        assert_eq!(sol.evaluations.len(), sol.iterations);
    }

    fn sol_inst() -> Instance {
        inst(0.02, 0.5, 41.0, 2.0)
    }

    #[test]
    fn warm_start_reaches_same_fixed_point() {
        let i = sol_inst();
        let cold = solve_unconstrained(&i).unwrap();
        let warm = solve_with(&i, SolveOptions { warm_start: cold.g_star * 1.5, ..Default::default() }).unwrap();
        assert_eq!(warm.optimal_set, cold.optimal_set);
        assert_eq!(warm.g_star, cold.g_star);
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let err = solve_with(&sol_inst(), SolveOptions { iteration_cap: 1, ..Default::default() }).unwrap_err();
        match err {
            Error::IterationCap { cap, trace } => {
                assert_eq!(cap, 1);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_scan_brackets_fixed_point() {
        let i = sol_inst();
        let sol = solve_unconstrained(&i).unwrap();
        let scan = grid_scan(&i, 400.0, 0.5).unwrap();
        assert_eq!(scan.diagonal_crossings(), 1);
        assert!(scan.min >= sol.g_star - 1e-9);
        for &(h, g) in &scan.points {
            if h > sol.g_star {
                assert!(g < h, "g({h}) = {g}");
            } else {
                assert!(g >= sol.g_star - 1e-9);
            }
        }
        assert!(grid_scan(&i, 0.0, 1.0).is_err());
        assert!(grid_scan(&i, 1.0, 0.0).is_err());
    }

    #[test]
    fn certain_termination_is_solvable() {
        let i = Instance::new(PathParams::new(1.0, 0.5).unwrap(), CostParams::default(), 1.0).unwrap();
        let sol = solve_unconstrained(&i).unwrap();
        assert_relative_eq!(sol.g_star, 0.11, max_relative = 1e-14);
        assert_eq!(sol.evaluation().expected_relays, 0.0);
    }
}
