//! Exact evaluation of an admissible placement set.
//!
//! Admissible means the complement is finite, downward closed and contains
//! the origin, which is exactly what [`PlacementSet`] guarantees. Every
//! monotone path to a complement point then stays in the complement, so
//! hitting probabilities reduce to binomial path counts.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::{HopCost, Instance, LatticePoint, PathParams};
use crate::placement::{PlacementSet, PointClass};

/// Largest `m + n` for which binomials are formed exactly in integers.
const EXACT_BINOMIAL_LIMIT: u64 = 30;

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sums bucketed by `m + n`, totalled in increasing order.
#[derive(Debug, Default)]
struct DiagonalSum {
    buckets: Vec<CompensatedSum>,
}

impl DiagonalSum {
    fn add(&mut self, steps: u64, x: f64) {
        let k = steps as usize;
        if k >= self.buckets.len() {
            self.buckets.resize(k + 1, CompensatedSum::default());
        }
        self.buckets[k].add(x);
    }

    fn total(&self) -> f64 {
        self.buckets.iter().map(CompensatedSum::value).collect::<CompensatedSum>().value()
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        s.extend(iter);
        s
    }
}

fn exact_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc as f64
}

/// `C(n, k) * Π base_i^exp_i`, in log space once `n` is large.
fn weighted_paths(n: u64, k: u64, factors: &[(f64, u64)]) -> f64 {
    if k > n {
        return 0.0;
    }
    // a zero base with a positive exponent kills the term; 0^0 = 1
    if factors.iter().any(|&(b, e)| b == 0.0 && e > 0) {
        return 0.0;
    }
    if n <= EXACT_BINOMIAL_LIMIT {
        let mut v = exact_binomial(n, k);
        for &(b, e) in factors {
            v *= b.powi(e as i32);
        }
        v
    } else {
        let log: f64 = factors
            .iter()
            .filter(|&&(_, e)| e > 0)
            .map(|&(b, e)| e as f64 * b.ln())
            .sum();
        (ln_binomial(n, k) + log).exp()
    }
}

/// Probability that the path reaches `pt` (counted from the last relay)
/// and continues past it: `(1-p)^(m+n) C(m+n, m) q^m (1-q)^n`.
pub fn reaching_prob(pt: LatticePoint, path: &PathParams) -> f64 {
    let (p, q) = (path.p(), path.q());
    weighted_paths(pt.steps(), pt.m, &[(1.0 - p, pt.steps()), (q, pt.m), (1.0 - q, pt.n)])
}

/// Reaching probabilities over a set's complement, recomputed by forward
/// dynamic programming instead of binomials.
#[derive(Debug, Clone)]
pub struct ReachingTable {
    rows: Vec<Vec<f64>>,
}

impl ReachingTable {
    pub fn get(&self, pt: LatticePoint) -> Option<f64> {
        self.rows.get(pt.n as usize)?.get(pt.m as usize).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(n, row)| {
            row.iter()
                .enumerate()
                .map(move |(m, &r)| (LatticePoint::new(m as u64, n as u64), r))
        })
    }
}

pub fn reaching_table(set: &PlacementSet, path: &PathParams) -> ReachingTable {
    let (s, q) = (path.survive(), path.q());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(set.rows().len());
    for (n, &width) in set.rows().iter().enumerate() {
        let mut row = Vec::with_capacity(width as usize);
        for m in 0..width as usize {
            let r = if m == 0 && n == 0 {
                1.0
            } else {
                let from_west = if m > 0 { q * row[m - 1] } else { 0.0 };
                let from_south = match n {
                    0 => 0.0,
                    _ => (1.0 - q) * rows[n - 1].get(m).copied().unwrap_or(0.0),
                };
                s * (from_west + from_south)
            };
            row.push(r);
        }
        rows.push(row);
    }
    ReachingTable { rows }
}

/// `(P(pt, end), P(pt, continue))` for a point already classified against
/// its set.
fn hit_probs_classified(pt: LatticePoint, class: PointClass, path: &PathParams) -> Result<(f64, f64)> {
    if pt.is_origin() {
        return Err(Error::OriginNotEvaluable);
    }
    let (p, q) = (path.p(), path.q());
    let (m, n) = (pt.m, pt.n);
    let s = m + n;
    let (paths_n, paths_k) = match class {
        PointClass::Complement | PointClass::Null => (s, m),
        // only the South neighbour leads here
        PointClass::West => (s - 1, m),
        // only the West neighbour leads here
        PointClass::South => (s - 1, m - 1),
        PointClass::Interior => return Err(Error::NotOnBoundary(pt)),
    };
    let end = weighted_paths(paths_n, paths_k, &[(p, 1), (1.0 - p, s - 1), (q, m), (1.0 - q, n)]);
    let cont = match class {
        PointClass::Complement => 0.0,
        _ => weighted_paths(paths_n, paths_k, &[(1.0 - p, s), (q, m), (1.0 - q, n)]),
    };
    Ok((end, cont))
}

/// Probabilities that a cycle started at a relay ends at `pt`, or reaches
/// `pt` on the boundary and continues (zero off the boundary).
pub fn hit_probs(set: &PlacementSet, pt: LatticePoint, path: &PathParams) -> Result<(f64, f64)> {
    hit_probs_classified(pt, set.classify(pt), path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetEvaluation {
    /// Expected cost-to-go from a renewal point, relay prices included.
    pub g: f64,
    pub expected_relays: f64,
    /// Expected hop-cost sum alone: `g - λ * expected_relays`.
    pub expected_cost: f64,
    pub end_mass: f64,
    pub continue_mass: f64,
    pub identity_residual: f64,
}

impl SetEvaluation {
    /// `end_mass + continue_mass - 1`.
    pub fn normalization_error(&self) -> f64 {
        self.end_mass + self.continue_mass - 1.0
    }

    /// Residual tolerance used throughout: `1e-8 (1 + |g|)`.
    pub fn identity_tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.g.abs())
    }
}

/// Renewal cost of a placement set.
///
/// Arrival probabilities are propagated over the complement by the
/// reaching recurrence; a boundary point collects mass only from its
/// complement neighbours, which reproduces the West/South/Null path counts.
pub fn eval_cost<C: HopCost>(set: &PlacementSet, inst: &Instance<C>) -> Result<SetEvaluation> {
    let path = &inst.path;
    let (p, q) = (path.p(), path.q());
    let lambda = inst.lambda();
    let reach = reaching_table(set, path);
    let r = |m: u64, n: u64| reach.get(LatticePoint::new(m, n)).unwrap_or(0.0);
    let arrival = |m: u64, n: u64| {
        let west = if m > 0 { q * r(m - 1, n) } else { 0.0 };
        let south = if n > 0 { (1.0 - q) * r(m, n - 1) } else { 0.0 };
        west + south
    };

    let mut end_mass = DiagonalSum::default();
    let mut cont_mass = DiagonalSum::default();
    let mut hop_cost = DiagonalSum::default();
    let rows = set.rows();
    for n in 0..=rows.len() {
        let width = rows.get(n).copied().unwrap_or(0);
        let below = if n > 0 { rows[n - 1] } else { 0 };
        let last = below.max(if width > 0 { width + 1 } else { 0 });
        let n = n as u64;
        for m in 0..last {
            if m == 0 && n == 0 {
                continue;
            }
            let pt = LatticePoint::new(m, n);
            let a = arrival(m, n);
            let end = p * a;
            // only boundary points renew
            let cont = if m < width { 0.0 } else { (1.0 - p) * a };
            end_mass.add(pt.steps(), end);
            cont_mass.add(pt.steps(), cont);
            hop_cost.add(pt.steps(), (end + cont) * inst.cost.at_point(pt));
        }
    }
    let continue_mass = cont_mass.total();
    if !(continue_mass < 1.0) {
        return Err(Error::Inconsistent(format!(
            "boundary continuation mass {continue_mass} is not below 1"
        )));
    }
    let stay = 1.0 - continue_mass;
    let hop_cost = hop_cost.total();
    let expected_cost = hop_cost / stay;
    let expected_relays = continue_mass / stay;
    let g = (hop_cost + lambda * continue_mass) / stay;
    let identity_residual = identity_residual(set, g, inst);
    Ok(SetEvaluation {
        g,
        expected_relays,
        expected_cost,
        end_mass: end_mass.total(),
        continue_mass,
        identity_residual,
    })
}

/// `Σ_{P^c} r(m,n) (Δ_q(m,n) - p(λ + g)) + d(0,0) + λ`, which vanishes
/// when `g` is the renewal cost of `set`.
pub fn identity_residual<C: HopCost>(set: &PlacementSet, g: f64, inst: &Instance<C>) -> f64 {
    let (p, q) = (inst.p(), inst.q());
    let level = p * (inst.lambda() + g);
    let mut acc = DiagonalSum::default();
    for (pt, r) in reaching_table(set, &inst.path).iter() {
        acc.add(pt.steps(), r * (inst.cost.weighted_delta(pt, q) - level));
    }
    let mut acc: CompensatedSum = [acc.total()].into_iter().collect();
    acc.add(inst.cost.at_point(LatticePoint::ORIGIN));
    acc.add(inst.lambda());
    acc.value()
}
