//! Constant-distance baseline: place once the distance from the last relay
//! reaches `r_th`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constrained::solve_constrained;
use crate::error::{Error, Result};
use crate::model::{HopCost, Instance};
use crate::osla::solve_unconstrained;
use crate::placement::PlacementSet;
use crate::renewal::{eval_cost, SetEvaluation};

pub const DEFAULT_R_MIN: f64 = 0.5;
pub const DEFAULT_R_STEP: f64 = 0.05;
const R_SEARCH_CAP: f64 = 1e5;

/// Least `m >= 0` with `m^2 >= x`.
fn ceil_sqrt(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let mut m = x.sqrt().ceil() as u64;
    while m > 0 && ((m - 1) * (m - 1)) as f64 >= x {
        m -= 1;
    }
    while ((m * m) as f64) < x {
        m += 1;
    }
    m
}

/// `{(m, n) : m^2 + n^2 >= r_th^2} \ {(0, 0)}`.
pub fn distance_set(r_th: f64) -> Result<PlacementSet> {
    if !(r_th > 0.0 && r_th.is_finite()) {
        return Err(Error::param("r_th", format!("must be positive, got {r_th}")));
    }
    let r2 = r_th * r_th;
    let mut rows: Vec<u64> = (0u64..)
        .map(|n| ceil_sqrt(r2 - (n * n) as f64))
        .take_while(|&m| m > 0)
        .collect();
    if rows.is_empty() {
        rows.push(1);
    }
    rows[0] = rows[0].max(1);
    PlacementSet::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicPoint {
    pub r_th: f64,
    pub g: f64,
    pub expected_relays: f64,
    pub expected_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeuristicFit {
    pub r_th: f64,
    pub evaluation: SetEvaluation,
    /// One point per distinct set along the grid, in grid order.
    pub frontier: Vec<HeuristicPoint>,
}

/// `0.5, 0.55, ..., r_max`, with `r_max` the diagonal of the optimal set's
/// bounding box plus 2.
pub fn default_r_grid<C: HopCost>(inst: &Instance<C>) -> Result<Vec<f64>> {
    let sol = solve_unconstrained(inst)?;
    let (m, n) = sol.optimal_set.extent();
    let r_max = ((m * m + n * n) as f64).sqrt() + 2.0;
    Ok(r_grid(DEFAULT_R_MIN, r_max, DEFAULT_R_STEP))
}

fn r_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

/// Evaluates each threshold once per distinct set.
fn evaluate_grid<C: HopCost>(inst: &Instance<C>, grid: &[f64]) -> Result<Vec<(f64, SetEvaluation)>> {
    let mut distinct: Vec<(f64, PlacementSet)> = Vec::new();
    for &r in grid {
        let set = distance_set(r)?;
        if distinct.last().is_none_or(|(_, s)| *s != set) {
            distinct.push((r, set));
        }
    }
    distinct
        .par_iter()
        .map(|(r, set)| Ok((*r, eval_cost(set, inst)?)))
        .collect()
}

/// Best constant-distance threshold on `r_grid` for the relay-priced
/// objective.
pub fn optimize_threshold<C: HopCost>(inst: &Instance<C>, r_grid: &[f64]) -> Result<HeuristicFit> {
    if r_grid.is_empty() {
        return Err(Error::param("r_grid", "must not be empty"));
    }
    let evals = evaluate_grid(inst, r_grid)?;
    let (r_th, evaluation) = evals
        .iter()
        .copied()
        .reduce(|best, x| if x.1.g < best.1.g { x } else { best })
        .expect("grid is not empty");
    let frontier = evals
        .iter()
        .map(|(r, e)| HeuristicPoint {
            r_th: *r,
            g: e.g,
            expected_relays: e.expected_relays,
            expected_cost: e.expected_cost,
        })
        .collect();
    Ok(HeuristicFit {
        r_th,
        evaluation,
        frontier,
    })
}

/// Lower convex hull of `(E N, E C)` up to the cheapest point; randomizing
/// between adjacent vertices reaches every budget in between.
#[derive(Debug, Clone)]
pub struct MixingFrontier {
    /// Vertices in increasing `E N` (and decreasing `E C`).
    vertices: Vec<(f64, f64)>,
}

impl MixingFrontier {
    pub fn new(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for p in pts {
            if hull.last().is_some_and(|l| l.0 == p.0) {
                continue;
            }
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        // past the cheapest vertex extra relays do not help
        let cheapest = hull
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map_or(0, |(i, _)| i);
        hull.truncate(cheapest + 1);
        Self { vertices: hull }
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Least mixed cost with `E N <= rho`, if the hull reaches that low.
    pub fn cost_at(&self, rho: f64) -> Option<f64> {
        let first = *self.vertices.first()?;
        if rho < first.0 {
            return None;
        }
        let last = *self.vertices.last()?;
        if rho >= last.0 {
            return Some(last.1);
        }
        let k = self.vertices.partition_point(|v| v.0 <= rho);
        let (a, b) = (self.vertices[k - 1], self.vertices[k]);
        let alpha = (rho - a.0) / (b.0 - a.0);
        Some((1.0 - alpha) * a.1 + alpha * b.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rho: f64,
    pub cost_optimal: f64,
    pub cost_heuristic: f64,
}

/// Constrained cost of the optimal policy and of the mixed constant-distance
/// policy at each budget. The relay price in `inst` is ignored.
pub fn compare<C: HopCost + Clone>(inst: &Instance<C>, rho_grid: &[f64]) -> Result<Vec<ComparisonRow>> {
    let Some(rho_min) = rho_grid.iter().copied().reduce(f64::min) else {
        return Ok(Vec::new());
    };
    let zero = inst.with_lambda(0.0)?;

    // grow r until the heuristic uses fewer relays than the smallest budget
    let mut r_max = 4.0;
    while eval_cost(&distance_set(r_max)?, &zero)?.expected_relays >= rho_min {
        r_max *= 2.0;
        if r_max > R_SEARCH_CAP {
            return Err(Error::Infeasible { rho: rho_min, best: f64::NAN });
        }
    }
    let evals = evaluate_grid(&zero, &r_grid(DEFAULT_R_MIN, r_max, DEFAULT_R_STEP))?;
    let frontier = MixingFrontier::new(evals.iter().map(|(_, e)| (e.expected_relays, e.expected_cost)));

    rho_grid
        .par_iter()
        .map(|&rho| {
            let cost_optimal = solve_constrained(inst, rho)?.achieved_cost;
            let cost_heuristic = frontier
                .cost_at(rho)
                .ok_or(Error::Infeasible { rho, best: frontier.vertices()[0].0 })?;
            Ok(ComparisonRow {
                rho,
                cost_optimal,
                cost_heuristic,
            })
        })
        .collect()
}
