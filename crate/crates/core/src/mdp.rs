//! Bellman baseline on a truncated lattice.
//!
//! The infinite-horizon value function is computed by Jacobi value
//! iteration on `[0, M] x [0, N]`; outside the grid the place branch is
//! forced. The grid is grown until it contains the bounding box of the
//! threshold set at the computed value, beyond which placing is optimal, so
//! truncation introduces no bias. Finite-horizon tables are exact: each
//! backward level is computed on a grid one step larger than the next.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HopCost, Instance, LatticePoint};
use crate::osla::{solve_unconstrained, threshold_set};
use crate::placement::{bounding_box, PlacementSet};
use crate::renewal::eval_cost;

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_SWEEP_CAP: usize = 5_000_000;
const GRID_MARGIN: u64 = 2;
const GRID_ROUNDS: usize = 16;
const START_REFINEMENTS: usize = 8;
/// Relative rounding allowance when comparing the two Bellman branches.
const BRANCH_SLACK: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// `J(m, n)` on a rectangular grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueTable {
    m_max: u64,
    n_max: u64,
    values: Vec<f64>,
    pub horizon: Horizon,
    /// Sup-norm change of the last sweep; zero for finite horizons.
    pub residual: f64,
    pub sweeps: usize,
    /// `p`, kept to turn the residual into an error bound.
    p: f64,
}

impl ValueTable {
    /// Largest `m` and `n` on the grid.
    pub fn extent(&self) -> (u64, u64) {
        (self.m_max, self.n_max)
    }

    fn index(&self, m: u64, n: u64) -> usize {
        (n * (self.m_max + 1) + m) as usize
    }

    pub fn get(&self, pt: LatticePoint) -> Option<f64> {
        (pt.m <= self.m_max && pt.n <= self.n_max).then(|| self.values[self.index(pt.m, pt.n)])
    }

    pub fn origin_value(&self) -> f64 {
        self.values[0]
    }

    /// Bound on `|J - J*|` over the grid implied by the last sweep.
    pub fn error_bound(&self) -> f64 {
        match self.horizon {
            Horizon::Finite(_) => 0.0,
            Horizon::Infinite => self.residual * (1.0 - self.p) / self.p,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        let w = self.m_max + 1;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (LatticePoint::new(i as u64 % w, i as u64 / w), v))
    }

    /// First point where `H = J - d` decreases along a lattice direction,
    /// allowing `slack` for rounding.
    pub fn h_monotonicity_violation<C: HopCost>(&self, cost: &C, slack: f64) -> Option<LatticePoint> {
        let h = |m, n| self.values[self.index(m, n)] - cost.at_point(LatticePoint::new(m, n));
        for n in 0..=self.n_max {
            for m in 0..=self.m_max {
                let here = h(m, n);
                let tol = slack * (1.0 + here.abs());
                if m < self.m_max && h(m + 1, n) < here - tol {
                    return Some(LatticePoint::new(m, n));
                }
                if n < self.n_max && h(m, n + 1) < here - tol {
                    return Some(LatticePoint::new(m, n));
                }
            }
        }
        None
    }
}

/// Hop costs on `[0, M+1] x [0, N+1]`, enough for every neighbour lookup.
struct CostGrid {
    width: u64,
    d: Vec<f64>,
}

impl CostGrid {
    fn new<C: HopCost>(cost: &C, m_max: u64, n_max: u64) -> Self {
        let width = m_max + 2;
        let d = (0..=n_max + 1)
            .flat_map(|n| (0..width).map(move |m| (m, n)))
            .map(|(m, n)| cost.at_point(LatticePoint::new(m, n)))
            .collect();
        Self { width, d }
    }

    fn at(&self, m: u64, n: u64) -> f64 {
        self.d[(n * self.width + m) as usize]
    }
}

/// Bellman operator on a fixed grid with the place branch forced outside.
struct Operator<'a> {
    p: f64,
    q: f64,
    lambda: f64,
    m_max: u64,
    n_max: u64,
    d: &'a CostGrid,
}

impl Operator<'_> {
    fn index(&self, m: u64, n: u64) -> usize {
        (n * (self.m_max + 1) + m) as usize
    }

    /// Expected cost after placing: one step from a fresh relay.
    fn restart(&self, j: &[f64]) -> f64 {
        let s = 1.0 - self.p;
        let mut c = self.p * self.d.at(1, 0);
        if self.q > 0.0 {
            c += s * self.q * j[self.index(1, 0)];
        }
        if self.q < 1.0 {
            c += s * (1.0 - self.q) * j[self.index(0, 1)];
        }
        c
    }

    /// `(c_p, c_np)` at `(m, n)` given the current table.
    fn branches(&self, j: &[f64], restart: f64, m: u64, n: u64) -> (f64, f64) {
        let (p, q, s) = (self.p, self.q, 1.0 - self.p);
        let place = self.lambda + self.d.at(m, n) + restart;
        let mut go_on = 0.0;
        if q > 0.0 {
            let d = self.d.at(m + 1, n);
            let next = if m < self.m_max { j[self.index(m + 1, n)] } else { self.lambda + d + restart };
            go_on += q * (s * next + p * d);
        }
        if q < 1.0 {
            let d = self.d.at(m, n + 1);
            let next = if n < self.n_max { j[self.index(m, n + 1)] } else { self.lambda + d + restart };
            go_on += (1.0 - q) * (s * next + p * d);
        }
        (place, go_on)
    }

    fn sweep(&self, cur: &[f64], next: &mut [f64]) -> f64 {
        let restart = self.restart(cur);
        let mut change: f64 = 0.0;
        for n in 0..=self.n_max {
            for m in 0..=self.m_max {
                let (cp, cnp) = self.branches(cur, restart, m, n);
                let i = self.index(m, n);
                next[i] = cp.min(cnp);
                change = change.max((next[i] - cur[i]).abs());
            }
        }
        change
    }
}

/// Grid extent after dropping the unreachable axis of a 1-D corridor.
fn clamp_axes(q: f64, m: u64, n: u64) -> (u64, u64) {
    (if q == 0.0 { 0 } else { m }, if q == 1.0 { 0 } else { n })
}

/// `J_K` on `grid`, exact (no truncation).
pub fn finite_horizon_values<C: HopCost>(k: usize, inst: &Instance<C>, grid: (u64, u64)) -> Result<ValueTable> {
    if k == 0 {
        return Err(Error::param("k", "horizon must be at least 1"));
    }
    let (p, q, lambda) = (inst.p(), inst.q(), inst.lambda());
    let (em, en) = clamp_axes(q, 1, 1);
    let (gm, gn) = clamp_axes(q, grid.0, grid.1);
    // level K - j lives on the grid grown by j along each reachable axis
    let grow = |j: u64| (gm + em * j, gn + en * j);
    let top = (k - 1) as u64;
    let (m_max, n_max) = grow(top);
    let d = CostGrid::new(&inst.cost, m_max, n_max);
    let d1 = d.at(1, 0);

    let mut level = (m_max, n_max);
    let mut values: Vec<f64> = (0..=n_max)
        .flat_map(|n| (0..=m_max).map(move |m| (m, n)))
        .map(|(m, n)| {
            let place = lambda + d.at(m, n) + d1;
            let mut go_on = 0.0;
            if q > 0.0 {
                go_on += q * d.at(m + 1, n);
            }
            if q < 1.0 {
                go_on += (1.0 - q) * d.at(m, n + 1);
            }
            place.min(go_on)
        })
        .collect();

    for j in (0..top).rev() {
        let (m_new, n_new) = grow(j);
        let op = Operator {
            p,
            q,
            lambda,
            m_max: level.0,
            n_max: level.1,
            d: &d,
        };
        let restart = op.restart(&values);
        let mut next = Vec::with_capacity(((m_new + 1) * (n_new + 1)) as usize);
        for n in 0..=n_new {
            for m in 0..=m_new {
                // neighbours stay inside the previous, larger level
                let (cp, cnp) = op.branches(&values, restart, m, n);
                next.push(cp.min(cnp));
            }
        }
        values = next;
        level = (m_new, n_new);
    }
    Ok(ValueTable {
        m_max: level.0,
        n_max: level.1,
        values,
        horizon: Horizon::Finite(k),
        residual: 0.0,
        sweeps: k,
        p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViOptions {
    /// Stop once a sweep changes no value by more than this.
    pub tol: f64,
    pub sweep_cap: usize,
}

impl Default for ViOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            sweep_cap: DEFAULT_SWEEP_CAP,
        }
    }
}

/// Value iteration from `J = 0` on a fixed grid, placing outside it.
pub fn value_iteration_on<C: HopCost>(inst: &Instance<C>, grid: (u64, u64), opts: ViOptions) -> Result<ValueTable> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {}", opts.tol)));
    }
    let q = inst.q();
    let (m_max, n_max) = clamp_axes(q, grid.0.max(1), grid.1.max(1));
    let d = CostGrid::new(&inst.cost, m_max, n_max);
    let op = Operator {
        p: inst.p(),
        q,
        lambda: inst.lambda(),
        m_max,
        n_max,
        d: &d,
    };
    let size = ((m_max + 1) * (n_max + 1)) as usize;
    let mut cur = vec![0.0; size];
    let mut next = vec![0.0; size];
    let mut change = f64::INFINITY;
    for sweep in 1..=opts.sweep_cap {
        change = op.sweep(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        if change < opts.tol {
            return Ok(ValueTable {
                m_max,
                n_max,
                values: cur,
                horizon: Horizon::Infinite,
                residual: change,
                sweeps: sweep,
                p: inst.p(),
            });
        }
    }
    Err(Error::NoConvergence {
        cap: opts.sweep_cap,
        residual: change,
    })
}

pub fn value_iteration<C: HopCost>(inst: &Instance<C>, tol: f64) -> Result<ValueTable> {
    value_iteration_with(inst, ViOptions { tol, ..Default::default() })
}

/// Smallest renewal cost among a few threshold policies: `P(0)`, then the
/// threshold set at the previous policy's cost. Each is the cost of an
/// actual policy and so bounds `J(0, 0)` from above.
fn policy_upper_bound<C: HopCost>(inst: &Instance<C>) -> Result<f64> {
    let mut h = 0.0;
    let mut best = f64::INFINITY;
    for _ in 0..START_REFINEMENTS {
        let g = eval_cost(&threshold_set(inst, h)?, inst)?.g;
        if g >= best {
            break;
        }
        best = g;
        h = g;
    }
    Ok(best)
}

/// Value iteration with the grid grown until it covers the bounding box of
/// the threshold set at the computed `J(0, 0)`.
///
/// The first grid is sized from a policy cost, an upper bound on `J(0, 0)`;
/// its size only affects speed, since the final grid is certified by the
/// table's own value.
pub fn value_iteration_with<C: HopCost>(inst: &Instance<C>, opts: ViOptions) -> Result<ValueTable> {
    let (p, q, lambda) = (inst.p(), inst.q(), inst.lambda());
    let boxed = |h: f64| -> Result<(u64, u64)> {
        let (m, n) = bounding_box(p * (lambda + h), q, &inst.cost)?;
        Ok(clamp_axes(q, m + GRID_MARGIN, n + GRID_MARGIN))
    };
    let mut grid = boxed(policy_upper_bound(inst)?)?;
    for _ in 0..GRID_ROUNDS {
        let table = value_iteration_on(inst, grid, opts)?;
        // forcing placement outside the grid can only raise J, so this
        // box contains the one at the true value
        let needed = boxed(table.origin_value() + table.error_bound())?;
        if needed.0 <= grid.0 && needed.1 <= grid.1 {
            tracing::debug!(?grid, sweeps = table.sweeps, "value iteration converged");
            return Ok(table);
        }
        grid = (grid.0.max(needed.0), grid.1.max(needed.1));
    }
    Err(Error::Truncation(format!("grid kept growing; last extent {grid:?}")))
}

/// `{(m, n) : c_p <= c_np}` read off a converged table.
///
/// Branches closer than the table's error bound (plus rounding) count as
/// ties and place.
pub fn bellman_placement_set<C: HopCost>(v: &ValueTable, inst: &Instance<C>) -> Result<PlacementSet> {
    let q = inst.q();
    let (m_max, n_max) = v.extent();
    let d = CostGrid::new(&inst.cost, m_max, n_max);
    let op = Operator {
        p: inst.p(),
        q,
        lambda: inst.lambda(),
        m_max,
        n_max,
        d: &d,
    };
    let restart = op.restart(&v.values);
    let slack = 4.0 * v.error_bound();
    let place = |m: u64, n: u64| {
        let (cp, cnp) = op.branches(&v.values, restart, m, n);
        cp <= cnp + slack + BRANCH_SLACK * cp.abs().max(cnp.abs())
    };

    if q == 0.0 {
        let mut rows = Vec::new();
        let mut placed = false;
        for n in 0..=n_max {
            let here = place(0, n);
            if placed && !here {
                return Err(Error::Structure(format!("stops placing again at (0, {n})")));
            }
            placed = here;
            if !here {
                rows.push(1);
            }
        }
        if !placed {
            return Err(Error::Truncation(format!("no placement on the North axis up to n = {n_max}")));
        }
        return PlacementSet::from_rows(rows);
    }

    let mut rows: Vec<u64> = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let mut m_star = None;
        for m in 0..=m_max {
            match (place(m, n), m_star) {
                (true, None) => m_star = Some(m),
                (false, Some(first)) => {
                    return Err(Error::Structure(format!(
                        "row {n} places at m = {first} but not at m = {m}"
                    )))
                }
                _ => {}
            }
        }
        let m_star = m_star.ok_or_else(|| Error::Truncation(format!("row {n} never places within m <= {m_max}")))?;
        if let Some(&prev) = rows.last() {
            if m_star > prev {
                return Err(Error::Structure(format!("boundary rises from {prev} to {m_star} at row {n}")));
            }
        }
        rows.push(m_star);
    }
    if q < 1.0 && rows.last().is_some_and(|&m| m > 0) {
        return Err(Error::Truncation(format!("complement reaches the top row n = {n_max}")));
    }
    if q == 1.0 {
        rows.truncate(1);
    }
    PlacementSet::from_rows(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub g_star: f64,
    pub bellman_value: f64,
    pub value_gap: f64,
    /// Allowed value gap: ten times the larger of the tolerance and the
    /// table's error bound.
    pub value_tolerance: f64,
    pub sets_equal: bool,
    /// Rows `n` where the two boundaries disagree.
    pub differing_rows: Vec<u64>,
    pub osla_rows: Vec<u64>,
    pub bellman_rows: Vec<u64>,
    pub passed: bool,
}

/// Runs both solvers and compares sets and values.
pub fn verify_osla_equivalence<C: HopCost>(inst: &Instance<C>, tol: f64) -> Result<EquivalenceReport> {
    let osla = solve_unconstrained(inst)?;
    let table = value_iteration(inst, tol)?;
    let bellman = bellman_placement_set(&table, inst)?;
    let rows = osla.optimal_set.rows().len().max(bellman.rows().len()) as u64;
    let differing_rows: Vec<u64> = (0..rows)
        .filter(|&n| osla.optimal_set.m_star(n) != bellman.m_star(n))
        .collect();
    let value_gap = (table.origin_value() - osla.g_star).abs();
    let value_tolerance = 10.0 * tol.max(table.error_bound());
    let sets_equal = differing_rows.is_empty();
    Ok(EquivalenceReport {
        g_star: osla.g_star,
        bellman_value: table.origin_value(),
        value_gap,
        value_tolerance,
        sets_equal,
        differing_rows,
        osla_rows: osla.optimal_set.rows().to_vec(),
        bellman_rows: bellman.rows().to_vec(),
        passed: sets_equal && value_gap <= value_tolerance,
    })
}
