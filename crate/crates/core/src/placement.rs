//! Upward-closed placement sets stored as their boundary `m*(n)`.
//!
//! A set is the union over rows `n` of `{(m, n) : m >= m*(n)}` with
//! `m*` non-increasing and eventually zero, so its complement is finite and
//! downward closed. The origin is never a member.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HopCost, LatticePoint};

/// Largest coordinate probed before a threshold is declared unreachable.
const SEARCH_LIMIT: u64 = 1 << 40;

/// Least `x` in `[0, SEARCH_LIMIT]` with `pred(x)`, for monotone `pred`.
fn gallop(pred: impl Fn(u64) -> bool) -> Option<u64> {
    if pred(0) {
        return Some(0);
    }
    let mut hi = 1;
    while !pred(hi) {
        if hi >= SEARCH_LIMIT {
            return None;
        }
        hi *= 2;
    }
    Some(least_in(hi / 2 + 1, hi, pred))
}

/// Least `x` in `[lo, hi]` with `pred(x)`, given `pred(hi)` holds.
fn least_in(mut lo: u64, mut hi: u64, pred: impl Fn(u64) -> bool) -> u64 {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "PlacementRecord", try_from = "PlacementRecord")]
pub struct PlacementSet {
    threshold: Option<f64>,
    rows: Vec<u64>,
    origin_guard: bool,
}

/// Equality is set equality; the threshold that produced a set is ignored.
impl PartialEq for PlacementSet {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
    }
}

impl Eq for PlacementSet {}

impl PlacementSet {
    /// Builds a set directly from its boundary `m*(0), m*(1), ...`.
    ///
    /// Trailing zero rows are dropped. Fails unless the boundary is
    /// non-increasing and excludes the origin.
    pub fn from_rows(rows: impl Into<Vec<u64>>) -> Result<Self> {
        let mut rows = rows.into();
        while rows.last() == Some(&0) {
            rows.pop();
        }
        if rows.first().copied().unwrap_or(0) == 0 {
            return Err(Error::Structure("the origin must not be a member".into()));
        }
        if let Some(w) = rows.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::Structure(format!(
                "boundary increases from row {} to row {}",
                w,
                w + 1
            )));
        }
        Ok(Self {
            threshold: None,
            rows,
            origin_guard: false,
        })
    }

    /// The smallest admissible set: every point except the origin.
    pub fn all_but_origin() -> Self {
        Self {
            threshold: None,
            rows: vec![1],
            origin_guard: true,
        }
    }

    /// Threshold `t = p (λ + h)` this set was built from, if any.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// True when the threshold rule alone would have admitted the origin.
    pub fn origin_guard(&self) -> bool {
        self.origin_guard
    }

    /// `m*(n)` for `n < n_max()`.
    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    /// Least `m` with `(m, n)` in the set.
    pub fn m_star(&self, n: u64) -> u64 {
        usize::try_from(n)
            .ok()
            .and_then(|n| self.rows.get(n).copied())
            .unwrap_or(0)
    }

    /// Least `n` with `m*(n) = 0`; every row from here on starts at `m = 0`.
    pub fn n_max(&self) -> u64 {
        self.rows.len() as u64
    }

    /// Least `n` with `(m, n)` in the set.
    pub fn n_star(&self, m: u64) -> u64 {
        self.rows.iter().take_while(|&&ms| ms > m).count() as u64
    }

    pub fn contains(&self, pt: LatticePoint) -> bool {
        !pt.is_origin() && pt.m >= self.m_star(pt.n)
    }

    pub fn complement_len(&self) -> u64 {
        self.rows.iter().sum()
    }

    /// Points outside the set, row by row.
    pub fn complement(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(n, &ms)| (0..ms).map(move |m| LatticePoint::new(m, n as u64)))
    }

    /// Complement points in order of increasing `m + n`.
    pub fn complement_by_steps(&self) -> Vec<LatticePoint> {
        let mut pts: Vec<_> = self.complement().collect();
        pts.sort_by_key(|p| (p.steps(), p.n));
        pts
    }

    /// `P^c(self) ⊆ P^c(other)`.
    pub fn complement_subset_of(&self, other: &PlacementSet) -> bool {
        self.rows
            .iter()
            .enumerate()
            .all(|(n, &ms)| ms <= other.m_star(n as u64))
    }

    /// Smallest box `[0, M) x [0, N)` holding the complement, as `(M, N)`.
    pub fn extent(&self) -> (u64, u64) {
        (self.m_star(0), self.n_max())
    }

    /// The `m` range of boundary points on row `n`: the leftmost member if
    /// its West neighbour is outside, plus every member whose South
    /// neighbour is outside. Off-lattice neighbours never qualify a point.
    fn boundary_row(&self, n: u64) -> std::ops::Range<u64> {
        let start = self.m_star(n);
        let below = if n == 0 { 0 } else { self.m_star(n - 1) };
        let own = if start >= 1 { start + 1 } else { 0 };
        start..own.max(below).max(start)
    }

    pub fn boundary_partition(&self) -> BoundaryPartition {
        let mut part = BoundaryPartition::default();
        let mut below = 0..0;
        for n in 0..=self.n_max() {
            let row = self.boundary_row(n);
            for m in row.clone() {
                let pt = LatticePoint::new(m, n);
                if m > row.start {
                    part.west.push(pt);
                } else if n > 0 && below.contains(&m) {
                    part.south.push(pt);
                } else {
                    part.null_pts.push(pt);
                }
            }
            below = row;
        }
        part
    }

    /// Classification of a point relative to this set.
    pub fn classify(&self, pt: LatticePoint) -> PointClass {
        if !self.contains(pt) {
            return PointClass::Complement;
        }
        let row = self.boundary_row(pt.n);
        if !row.contains(&pt.m) {
            return PointClass::Interior;
        }
        if pt.m > row.start {
            PointClass::West
        } else if pt.n > 0 && self.boundary_row(pt.n - 1).contains(&pt.m) {
            PointClass::South
        } else {
            PointClass::Null
        }
    }

    /// Builds `{(m, n) : t <= Δ_q(m, n)} \ {(0, 0)}`, comparing with
    /// [`reaches_threshold`].
    ///
    /// For `q = 1` (resp. `q = 0`) only the East (resp. North) axis is
    /// reachable and the set is built along that axis alone.
    pub fn build<C: HopCost + ?Sized>(t: f64, q: f64, cost: &C) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::param("t", format!("threshold must be finite and >= 0, got {t}")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param("q", format!("must lie in [0, 1], got {q}")));
        }
        let member = |m: u64, n: u64| reaches_threshold(cost.weighted_delta(LatticePoint::new(m, n), q), t);

        let rows = if q == 1.0 {
            let m_axis = gallop(|m| member(m, 0)).ok_or(Error::Divergence { threshold: t, axis: "East" })?;
            vec![m_axis]
        } else if q == 0.0 {
            let n_axis = gallop(|n| member(0, n)).ok_or(Error::Divergence { threshold: t, axis: "North" })?;
            vec![1; n_axis as usize]
        } else {
            let n_axis = gallop(|n| member(0, n)).ok_or(Error::Divergence { threshold: t, axis: "North" })?;
            let m_axis = gallop(|m| member(m, 0)).ok_or(Error::Divergence { threshold: t, axis: "East" })?;
            let mut rows = Vec::with_capacity(n_axis as usize);
            let mut prev = m_axis;
            for n in 0..n_axis {
                if !member(prev, n) {
                    return Err(Error::Structure(format!(
                        "increment decreases from row {} to row {n}",
                        n.saturating_sub(1)
                    )));
                }
                prev = least_in(0, prev, |m| member(m, n));
                rows.push(prev);
            }
            rows
        };

        let mut set = Self {
            threshold: Some(t),
            rows,
            origin_guard: false,
        };
        match set.rows.first_mut() {
            Some(first) if *first == 0 => {
                *first = 1;
                set.origin_guard = true;
            }
            None => {
                set.rows.push(1);
                set.origin_guard = true;
            }
            _ => {}
        }
        while set.rows.last() == Some(&0) {
            set.rows.pop();
        }
        Ok(set)
    }
}

/// Relative slack under which an increment counts as tying the threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `t <= delta` with ties resolved towards placing: a threshold that equals
/// a lattice increment up to rounding admits the point.
pub fn reaches_threshold(delta: f64, t: f64) -> bool {
    t <= delta * (1.0 + TIE_TOLERANCE)
}

/// `(M, N)`: least `M` with `Δ_q(M, 0) >= t` and least `N` with
/// `Δ_q(0, N) >= t`. The unreachable axis of a one-dimensional corridor
/// reports zero.
pub fn bounding_box<C: HopCost + ?Sized>(t: f64, q: f64, cost: &C) -> Result<(u64, u64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::param("t", format!("threshold must be finite and >= 0, got {t}")));
    }
    let member = |m: u64, n: u64| reaches_threshold(cost.weighted_delta(LatticePoint::new(m, n), q), t);
    let m_axis = if q == 0.0 {
        0
    } else {
        gallop(|m| member(m, 0)).ok_or(Error::Divergence { threshold: t, axis: "East" })?
    };
    let n_axis = if q == 1.0 {
        0
    } else {
        gallop(|n| member(0, n)).ok_or(Error::Divergence { threshold: t, axis: "North" })?
    };
    Ok((m_axis, n_axis))
}

/// Where a lattice point sits relative to a placement set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Complement,
    /// Boundary point reachable from both sides (or its only side).
    Null,
    /// Boundary point whose West neighbour is also on the boundary.
    West,
    /// Boundary point whose South neighbour is also on the boundary.
    South,
    Interior,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPartition {
    pub west: Vec<LatticePoint>,
    pub south: Vec<LatticePoint>,
    pub null_pts: Vec<LatticePoint>,
}

impl BoundaryPartition {
    pub fn len(&self) -> usize {
        self.west.len() + self.south.len() + self.null_pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, PointClass)> + '_ {
        self.null_pts
            .iter()
            .map(|&p| (p, PointClass::Null))
            .chain(self.west.iter().map(|&p| (p, PointClass::West)))
            .chain(self.south.iter().map(|&p| (p, PointClass::South)))
    }

    pub fn classes(&self) -> HashMap<LatticePoint, PointClass> {
        self.iter().collect()
    }
}

/// Wire form: `{threshold, rows: [[n, m_star], ...], origin_guard}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub threshold: Option<f64>,
    pub rows: Vec<(u64, u64)>,
    #[serde(default)]
    pub origin_guard: bool,
}

impl From<PlacementSet> for PlacementRecord {
    fn from(set: PlacementSet) -> Self {
        PlacementRecord::from(&set)
    }
}

impl From<&PlacementSet> for PlacementRecord {
    fn from(set: &PlacementSet) -> Self {
        PlacementRecord {
            threshold: set.threshold,
            rows: set
                .rows
                .iter()
                .enumerate()
                .map(|(n, &m)| (n as u64, m))
                .collect(),
            origin_guard: set.origin_guard,
        }
    }
}

impl TryFrom<PlacementRecord> for PlacementSet {
    type Error = Error;

    fn try_from(rec: PlacementRecord) -> Result<Self> {
        let mut rows = Vec::with_capacity(rec.rows.len());
        for (i, &(n, m)) in rec.rows.iter().enumerate() {
            if n != i as u64 {
                return Err(Error::Structure(format!(
                    "rows must be listed as n = 0, 1, ...; found n = {n} at position {i}"
                )));
            }
            rows.push(m);
        }
        let mut set = PlacementSet::from_rows(rows)?;
        set.threshold = rec.threshold;
        set.origin_guard = rec.origin_guard;
        Ok(set)
    }
}
