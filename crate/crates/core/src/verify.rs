//! Invariant suite run by `relay-placement verify`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::verify_osla_equivalence;
use crate::model::{CostParams, Instance};
use crate::osla::{g_of_h, grid_scan, solve_unconstrained};

/// Largest allowed `|J(0,0) - g*|` between the two solvers.
pub const VALUE_GAP_LIMIT: f64 = 1e-6;
/// Largest allowed number of fixed-point iterations.
pub const ITERATION_LIMIT: usize = 10;
pub const NORMALIZATION_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub eta: f64,
    pub g_star: f64,
    pub checks: Vec<Check>,
}

impl InstanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Instances `p × q × η × λ` over which the suite is run by default.
pub fn default_matrix() -> Vec<Instance> {
    let mut out = Vec::new();
    for p in [0.5, 0.02, 0.002] {
        for q in [0.0, 0.3, 0.5, 1.0] {
            for eta in [2.0, 3.0] {
                for lambda in [1.0, 41.0] {
                    out.push(Instance::power(p, q, lambda, 0.1, 0.01, eta).expect("valid matrix instance"));
                }
            }
        }
    }
    out
}

/// Prices above `g*` at which `g(h) < h` is checked.
pub fn probe_prices(g_star: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| g_star * (1.0 + 0.1 * k as f64) + 1e-3 * k as f64).collect()
}

pub fn verify_instance(inst: &Instance<CostParams>) -> Result<InstanceReport> {
    let mut checks = Vec::new();
    let sol = solve_unconstrained(inst)?;
    let g_star = sol.g_star;

    let eq = verify_osla_equivalence(inst, 1e-10)?;
    checks.push(Check::new(
        "bellman-equivalence",
        eq.sets_equal && eq.value_gap <= VALUE_GAP_LIMIT,
        format!("sets equal: {}, |J(0,0) - g*| = {:.3e}", eq.sets_equal, eq.value_gap),
    ));

    let tail = &sol.trace[1..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    checks.push(Check::new(
        "fixed-point-trace",
        decreasing && sol.iterations <= ITERATION_LIMIT,
        format!("{} iterations, strictly decreasing: {decreasing}", sol.iterations),
    ));

    let h_max = 2.0 * g_star + 1.0;
    let scan = grid_scan(inst, h_max, h_max / 400.0)?;
    let crossings = scan.diagonal_crossings();
    checks.push(Check::new(
        "single-diagonal-crossing",
        crossings == 1,
        format!("{crossings} crossings on [0, {h_max:.4}]"),
    ));

    let mut above = Vec::new();
    for h in probe_prices(g_star, 20) {
        let g = g_of_h(inst, h)?;
        if g >= h {
            above.push(h);
        }
    }
    checks.push(Check::new(
        "g-below-diagonal",
        above.is_empty(),
        format!("violations at {above:?}"),
    ));

    let worst_identity = sol
        .evaluations
        .iter()
        .map(|ev| ev.identity_residual.abs() / (1.0 + ev.g.abs()))
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "renewal-identity",
        worst_identity <= 1e-8,
        format!("max |residual| / (1 + g) = {worst_identity:.3e}"),
    ));

    let worst_norm = sol
        .evaluations
        .iter()
        .map(|ev| ev.normalization_error().abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "probability-normalization",
        worst_norm <= NORMALIZATION_LIMIT,
        format!("max |end + continue - 1| = {worst_norm:.3e}"),
    ));

    Ok(InstanceReport {
        p: inst.p(),
        q: inst.q(),
        lambda: inst.lambda(),
        eta: inst.cost.eta(),
        g_star,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_small_instance() {
        let r = verify_instance(&Instance::power(0.5, 0.3, 1.0, 0.1, 0.01, 3.0).unwrap()).unwrap();
        assert!(r.passed(), "{r:#?}");
        assert_eq!(r.checks.len(), 6);
    }

    #[test]
    fn matrix_shape() {
        let m = default_matrix();
        assert_eq!(m.len(), 48);
        assert!(probe_prices(10.0, 20).iter().all(|&h| h > 10.0));
    }
}
