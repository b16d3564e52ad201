//! Path process parameters, hop costs and their lattice increments.
//!
//! The hop cost `d(r)` is pluggable through [`HopCost`]; the power cost
//! `P_m + γ r^η` ([`CostParams`]) is the only shipped implementation.
//! Custom costs go through [`ValidatedCost`], which refuses any cost that
//! fails the lattice checks in [`validate_cost_model`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stochastic corridor: at every step the path ends with probability `p`
/// and moves East with probability `q` (North otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    p: f64,
    q: f64,
}

impl PathParams {
    /// `p = 1` (every path is a single step) is admitted so degenerate
    /// corridors can be simulated; the solvers handle it because nothing
    /// is ever reached and continued.
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param("q", format!("must lie in [0, 1], got {q}")));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Probability that a step neither ends the path nor is skipped: `1 - p`.
    pub fn survive(&self) -> f64 {
        1.0 - self.p
    }

    /// The path only ever moves East (`q = 1`) or only North (`q = 0`).
    pub fn is_one_dimensional(&self) -> bool {
        self.q == 0.0 || self.q == 1.0
    }
}

/// A lattice offset from the last relay: `m` Eastward and `n` Northward steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    pub m: u64,
    pub n: u64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { m: 0, n: 0 };

    pub const fn new(m: u64, n: u64) -> Self {
        Self { m, n }
    }

    pub fn is_origin(&self) -> bool {
        self.m == 0 && self.n == 0
    }

    /// Squared Euclidean norm, exact in floating point for any realistic lattice.
    pub fn norm_sq(&self) -> f64 {
        let (m, n) = (self.m as f64, self.n as f64);
        m * m + n * n
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Number of steps on any monotone path from the origin.
    pub fn steps(&self) -> u64 {
        self.m + self.n
    }

    pub fn east(&self) -> Self {
        Self::new(self.m + 1, self.n)
    }

    pub fn north(&self) -> Self {
        Self::new(self.m, self.n + 1)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.m, self.n)
    }
}

/// Price charged per relay placed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelayPrice(f64);

impl RelayPrice {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("must be a finite non-negative number, got {lambda}"),
            ));
        }
        Ok(Self(lambda))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Lattice increments of the hop cost at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopDeltas {
    /// `d(m+1, n) - d(m, n)`
    pub east: f64,
    /// `d(m, n+1) - d(m, n)`
    pub north: f64,
    /// `q * east + (1 - q) * north`
    pub weighted: f64,
}

/// A one-hop cost `d(r)` between nodes at distance `r`.
pub trait HopCost: Send + Sync {
    /// Cost of a hop of length `r >= 0`.
    fn at_distance(&self, r: f64) -> f64;

    /// Cost of a hop from the last relay to `pt`.
    fn at_point(&self, pt: LatticePoint) -> f64 {
        self.at_distance(pt.norm())
    }

    fn deltas(&self, pt: LatticePoint, q: f64) -> HopDeltas {
        let here = self.at_point(pt);
        let east = self.at_point(pt.east()) - here;
        let north = self.at_point(pt.north()) - here;
        HopDeltas {
            east,
            north,
            weighted: weighted_delta(east, north, q),
        }
    }

    /// Only the `q`-weighted increment; hot path of set construction.
    fn weighted_delta(&self, pt: LatticePoint, q: f64) -> f64 {
        self.deltas(pt, q).weighted
    }
}

fn weighted_delta(east: f64, north: f64, q: f64) -> f64 {
    // Exact zero weights keep the degenerate corridors free of the
    // orthogonal increment, even when it is huge.
    match q {
        q if q == 1.0 => east,
        q if q == 0.0 => north,
        q => q * east + (1.0 - q) * north,
    }
}

/// Power cost `d(r) = P_m + γ r^η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    p_m: f64,
    gamma: f64,
    eta: f64,
}

impl CostParams {
    pub const DEFAULT_P_M: f64 = 0.1;
    pub const DEFAULT_GAMMA: f64 = 0.01;
    pub const DEFAULT_ETA: f64 = 2.0;

    pub fn new(p_m: f64, gamma: f64, eta: f64) -> Result<Self> {
        if !(p_m > 0.0 && p_m.is_finite()) {
            return Err(Error::param("p_m", format!("must be positive, got {p_m}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(
                "gamma",
                format!("must be positive, got {gamma}"),
            ));
        }
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::param("eta", format!("must be >= 1, got {eta}")));
        }
        if eta == 1.0 {
            tracing::warn!(
                "eta = 1: cost increments stay bounded by gamma, so placement thresholds above \
                 gamma are never reached and set construction will fail"
            );
        }
        Ok(Self { p_m, gamma, eta })
    }

    /// The numerical-study defaults with a chosen path-loss exponent.
    pub fn with_eta(eta: f64) -> Result<Self> {
        Self::new(Self::DEFAULT_P_M, Self::DEFAULT_GAMMA, eta)
    }

    pub fn p_m(&self) -> f64 {
        self.p_m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `(r^2)^(eta/2)`, exact for `eta = 2` on integer lattices.
    fn radial(&self, sq: f64) -> f64 {
        if self.eta == 2.0 {
            sq
        } else {
            sq.powf(self.eta / 2.0)
        }
    }

    fn from_norm_sq(&self, sq: f64) -> f64 {
        self.p_m + self.gamma * self.radial(sq)
    }
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            p_m: Self::DEFAULT_P_M,
            gamma: Self::DEFAULT_GAMMA,
            eta: Self::DEFAULT_ETA,
        }
    }
}

impl HopCost for CostParams {
    fn at_distance(&self, r: f64) -> f64 {
        self.p_m + self.gamma * r.powf(self.eta)
    }

    fn at_point(&self, pt: LatticePoint) -> f64 {
        self.from_norm_sq(pt.norm_sq())
    }

    fn deltas(&self, pt: LatticePoint, q: f64) -> HopDeltas {
        let base = self.radial(pt.norm_sq());
        let east = self.gamma * (self.radial(pt.east().norm_sq()) - base);
        let north = self.gamma * (self.radial(pt.north().norm_sq()) - base);
        HopDeltas {
            east,
            north,
            weighted: weighted_delta(east, north, q),
        }
    }
}

impl<C: HopCost + ?Sized> HopCost for &C {
    fn at_distance(&self, r: f64) -> f64 {
        (**self).at_distance(r)
    }
    fn at_point(&self, pt: LatticePoint) -> f64 {
        (**self).at_point(pt)
    }
    fn deltas(&self, pt: LatticePoint, q: f64) -> HopDeltas {
        (**self).deltas(pt, q)
    }
    fn weighted_delta(&self, pt: LatticePoint, q: f64) -> f64 {
        (**self).weighted_delta(pt, q)
    }
}

/// `d(r)`, rejecting negative distances.
pub fn hop_cost<C: HopCost + ?Sized>(r: f64, cost: &C) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("distance must be >= 0, got {r}")));
    }
    Ok(cost.at_distance(r))
}

pub fn hop_cost_point<C: HopCost + ?Sized>(pt: LatticePoint, cost: &C) -> f64 {
    cost.at_point(pt)
}

pub fn hop_deltas<C: HopCost + ?Sized>(pt: LatticePoint, q: f64, cost: &C) -> HopDeltas {
    cost.deltas(pt, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `d(0, 0) > 0`.
    PositiveBase,
    /// Second differences along lattice rows and columns are non-negative.
    LatticeConvexity,
    /// Both increments are non-decreasing in both coordinates.
    MonotoneIncrements,
    /// East increments along the axis grow: `Δ1(extent, 0) > Δ1(0, 0)`.
    DivergingIncrements,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub condition: Condition,
    pub passed: bool,
    /// First lattice point where the check failed.
    pub witness: Option<LatticePoint>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelReport {
    pub extent: u64,
    pub checks: Vec<ConditionCheck>,
}

impl CostModelReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, condition: Condition) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition == condition)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Slack for comparisons between floating-point differences of similar size.
fn slack(a: f64, b: f64) -> f64 {
    1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Checks the structural cost conditions on the grid `[0, extent]^2`.
pub fn validate_cost_model<C: HopCost + ?Sized>(cost: &C, extent: u64) -> Result<CostModelReport> {
    if extent < 2 {
        return Err(Error::param("extent", format!("must be >= 2, got {extent}")));
    }
    let pt = LatticePoint::new;
    let mut checks = Vec::with_capacity(4);

    let base = cost.at_point(LatticePoint::ORIGIN);
    checks.push(ConditionCheck {
        condition: Condition::PositiveBase,
        passed: base > 0.0,
        witness: (base <= 0.0).then_some(LatticePoint::ORIGIN),
        detail: format!("d(0,0) = {base}"),
    });

    let mut convex_fail = None;
    'convex: for n in 0..=extent {
        for m in 1..extent {
            let (prev, here, next) = (
                cost.at_point(pt(m - 1, n)),
                cost.at_point(pt(m, n)),
                cost.at_point(pt(m + 1, n)),
            );
            if (next - here) < (here - prev) - slack(next - here, here - prev) {
                convex_fail = Some((pt(m, n), "row"));
                break 'convex;
            }
            let (prev, next) = (cost.at_point(pt(n, m - 1)), cost.at_point(pt(n, m + 1)));
            let here = cost.at_point(pt(n, m));
            if (next - here) < (here - prev) - slack(next - here, here - prev) {
                convex_fail = Some((pt(n, m), "column"));
                break 'convex;
            }
        }
    }
    checks.push(ConditionCheck {
        condition: Condition::LatticeConvexity,
        passed: convex_fail.is_none(),
        witness: convex_fail.map(|(p, _)| p),
        detail: match convex_fail {
            Some((p, dir)) => format!("negative second difference along {dir} at {p}"),
            None => "second differences non-negative".into(),
        },
    });

    let mut mono_fail = None;
    'mono: for n in 0..extent {
        for m in 0..extent {
            let here = cost.deltas(pt(m, n), 0.5);
            for (label, other) in [("m", cost.deltas(pt(m + 1, n), 0.5)), ("n", cost.deltas(pt(m, n + 1), 0.5))] {
                if other.east < here.east - slack(other.east, here.east) {
                    mono_fail = Some((pt(m, n), format!("Δ1 decreases in {label}")));
                    break 'mono;
                }
                if other.north < here.north - slack(other.north, here.north) {
                    mono_fail = Some((pt(m, n), format!("Δ2 decreases in {label}")));
                    break 'mono;
                }
            }
        }
    }
    checks.push(ConditionCheck {
        condition: Condition::MonotoneIncrements,
        passed: mono_fail.is_none(),
        witness: mono_fail.as_ref().map(|(p, _)| *p),
        detail: mono_fail
            .map(|(p, what)| format!("{what} at {p}"))
            .unwrap_or_else(|| "increments non-decreasing".into()),
    });

    let first = cost.deltas(LatticePoint::ORIGIN, 1.0).east;
    let last = cost.deltas(pt(extent, 0), 1.0).east;
    let diverging = last > first + slack(last, first);
    checks.push(ConditionCheck {
        condition: Condition::DivergingIncrements,
        passed: diverging,
        witness: (!diverging).then_some(pt(extent, 0)),
        detail: format!("Δ1(0,0) = {first}, Δ1({extent},0) = {last}"),
    });

    Ok(CostModelReport { extent, checks })
}

/// A custom hop cost that passed [`validate_cost_model`].
#[derive(Debug, Clone)]
pub struct ValidatedCost<C> {
    inner: C,
    report: CostModelReport,
}

impl<C: HopCost> ValidatedCost<C> {
    pub fn new(inner: C, extent: u64) -> Result<Self> {
        let report = validate_cost_model(&inner, extent)?;
        if let Some(fail) = report.failures().next() {
            return Err(Error::param(
                "cost",
                format!("{:?} failed: {}", fail.condition, fail.detail),
            ));
        }
        Ok(Self { inner, report })
    }

    pub fn report(&self) -> &CostModelReport {
        &self.report
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: HopCost> HopCost for ValidatedCost<C> {
    fn at_distance(&self, r: f64) -> f64 {
        self.inner.at_distance(r)
    }
    fn at_point(&self, pt: LatticePoint) -> f64 {
        self.inner.at_point(pt)
    }
    fn deltas(&self, pt: LatticePoint, q: f64) -> HopDeltas {
        self.inner.deltas(pt, q)
    }
}

/// Everything needed to pose the relay-priced placement problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance<C = CostParams> {
    pub path: PathParams,
    pub cost: C,
    pub lambda: RelayPrice,
}

impl<C: HopCost> Instance<C> {
    pub fn new(path: PathParams, cost: C, lambda: f64) -> Result<Self> {
        Ok(Self {
            path,
            cost,
            lambda: RelayPrice::new(lambda)?,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.get()
    }

    pub fn p(&self) -> f64 {
        self.path.p()
    }

    pub fn q(&self) -> f64 {
        self.path.q()
    }

    /// Same corridor and cost, different relay price.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self>
    where
        C: Clone,
    {
        Instance::new(self.path, self.cost.clone(), lambda)
    }
}

impl Instance<CostParams> {
    /// Convenience constructor for the power cost.
    pub fn power(p: f64, q: f64, lambda: f64, p_m: f64, gamma: f64, eta: f64) -> Result<Self> {
        Instance::new(PathParams::new(p, q)?, CostParams::new(p_m, gamma, eta)?, lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad() -> CostParams {
        CostParams::new(0.1, 0.01, 2.0).unwrap()
    }

    #[test]
    fn hop_cost_values() {
        assert_eq!(hop_cost(0.0, &quad()).unwrap(), 0.1);
        assert_relative_eq!(hop_cost(1.0, &quad()).unwrap(), 0.11, epsilon = 1e-15);
        let cubic = CostParams::new(0.1, 0.01, 3.0).unwrap();
        assert_relative_eq!(hop_cost(2.0, &cubic).unwrap(), 0.18, epsilon = 1e-15);
        assert!(hop_cost(-0.5, &quad()).is_err());
    }

    #[test]
    fn hop_cost_at_points() {
        let c = quad();
        assert_eq!(hop_cost_point(LatticePoint::new(0, 0), &c), 0.1);
        assert_relative_eq!(hop_cost_point(LatticePoint::new(3, 4), &c), 0.35, epsilon = 1e-15);
        assert_relative_eq!(hop_cost_point(LatticePoint::new(1, 1), &c), 0.12, epsilon = 1e-15);
        let cubic = CostParams::new(0.1, 0.01, 3.0).unwrap();
        for (m, n) in [(0, 7), (2, 9), (13, 4)] {
            assert_eq!(
                hop_cost_point(LatticePoint::new(m, n), &cubic),
                hop_cost_point(LatticePoint::new(n, m), &cubic)
            );
        }
    }

    #[test]
    fn deltas_match_closed_forms() {
        let c = quad();
        let d = hop_deltas(LatticePoint::ORIGIN, 0.5, &c);
        assert_relative_eq!(d.east, 0.01, epsilon = 1e-15);
        assert_relative_eq!(d.north, 0.01, epsilon = 1e-15);
        assert_relative_eq!(d.weighted, 0.01, epsilon = 1e-15);

        let d = hop_deltas(LatticePoint::new(2, 0), 1.0, &c);
        assert_relative_eq!(d.weighted, 0.05, epsilon = 1e-15);
        assert_eq!(d.weighted, d.east);

        let cubic = CostParams::new(0.1, 0.01, 3.0).unwrap();
        let a = hop_deltas(LatticePoint::new(5, 3), 0.3, &cubic);
        let b = hop_deltas(LatticePoint::new(3, 5), 0.7, &cubic);
        assert_eq!(a.east, b.north);
    }

    #[test]
    fn generic_deltas_agree_with_specialised() {
        struct Plain(CostParams);
        impl HopCost for Plain {
            fn at_distance(&self, r: f64) -> f64 {
                self.0.at_distance(r)
            }
        }
        let c = CostParams::new(0.1, 0.01, 3.0).unwrap();
        let plain = Plain(c);
        for (m, n) in [(0, 0), (4, 1), (10, 10)] {
            let pt = LatticePoint::new(m, n);
            assert_relative_eq!(plain.deltas(pt, 0.3).weighted, c.deltas(pt, 0.3).weighted, max_relative = 1e-9);
        }
    }

    #[test]
    fn validation_quadratic_and_cubic_pass() {
        assert!(validate_cost_model(&quad(), 50).unwrap().all_passed());
        let cubic = CostParams::new(0.1, 0.01, 3.0).unwrap();
        assert!(validate_cost_model(&cubic, 20).unwrap().all_passed());
    }

    #[test]
    fn validation_linear_fails_divergence() {
        let linear = CostParams::new(0.1, 0.01, 1.0).unwrap();
        let report = validate_cost_model(&linear, 50).unwrap();
        let c3 = report.check(Condition::DivergingIncrements).unwrap();
        assert!(!c3.passed);
        assert_eq!(c3.witness, Some(LatticePoint::new(50, 0)));
        assert!(report.check(Condition::PositiveBase).unwrap().passed);
        assert!(report.check(Condition::LatticeConvexity).unwrap().passed);
    }

    #[test]
    fn validation_rejects_small_extent() {
        assert!(validate_cost_model(&quad(), 1).is_err());
    }

    #[test]
    fn validated_cost_rejects_concave() {
        struct Sqrt;
        impl HopCost for Sqrt {
            fn at_distance(&self, r: f64) -> f64 {
                0.1 + r.sqrt()
            }
        }
        assert!(ValidatedCost::new(Sqrt, 10).is_err());
        assert!(ValidatedCost::new(quad(), 10).is_ok());
    }

    #[test]
    fn parameter_validation() {
        assert!(PathParams::new(0.0, 0.5).is_err());
        assert!(PathParams::new(1.5, 0.5).is_err());
        assert!(PathParams::new(0.5, -0.1).is_err());
        assert!(PathParams::new(1.0, 0.5).is_ok());
        assert!(CostParams::new(0.0, 0.01, 2.0).is_err());
        assert!(CostParams::new(0.1, 0.01, 0.5).is_err());
        assert!(RelayPrice::new(-1.0).is_err());
        assert!(RelayPrice::new(f64::NAN).is_err());
        match PathParams::new(f64::NAN, 0.5) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "p"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn increments_nonnegative_and_monotone(m in 0u64..200, n in 0u64..200, eta in 2.0f64..4.0) {
            let c = CostParams::new(0.1, 0.01, eta).unwrap();
            let here = c.deltas(LatticePoint::new(m, n), 0.5);
            let right = c.deltas(LatticePoint::new(m + 1, n), 0.5);
            let up = c.deltas(LatticePoint::new(m, n + 1), 0.5);
            proptest::prop_assert!(here.east >= 0.0 && here.north >= 0.0);
            let tol = 1e-9 * right.east.abs().max(up.north.abs()).max(1.0);
            proptest::prop_assert!(right.east >= here.east - tol);
            proptest::prop_assert!(up.east >= here.east - tol);
            proptest::prop_assert!(right.north >= here.north - tol);
            proptest::prop_assert!(up.north >= here.north - tol);
            proptest::prop_assert_eq!(c.at_point(LatticePoint::new(m, n)), c.at_point(LatticePoint::new(n, m)));
        }

        #[test]
        fn row_convexity(m in 1u64..300, n in 0u64..300, eta in 1.0f64..4.0) {
            let c = CostParams::new(0.1, 0.01, eta).unwrap();
            let d = |m| c.at_point(LatticePoint::new(m, n));
            let lhs = d(m + 1) - d(m);
            let rhs = d(m) - d(m - 1);
            proptest::prop_assert!(lhs >= rhs - 1e-9 * lhs.abs().max(1.0));
        }
    }
}
