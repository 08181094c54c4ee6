//! Empirical order checks against the exact exponential-decay flow.

use std::fmt;

use crate::error::Result;
use crate::field::AnalyticProblem;
use crate::rk::empirical_order;
use crate::tableau::{ButcherTableau, StandardMethod};

pub const DEFAULT_H_LIST: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const SLOPE_TOL: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderCheck {
    pub method: String,
    pub expected_slope: f64,
    pub slope: f64,
    pub pass: bool,
}

impl fmt::Display for OrderCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: slope {:.3} (expected {:.1} ± {SLOPE_TOL})",
            if self.pass { "PASS" } else { "FAIL" },
            self.method,
            self.slope,
            self.expected_slope
        )
    }
}

/// Fits the one-step error slope of `tableau` on `exp_decay(λ=1)` from
/// `θ0 = 1`; a method of declared order `k` should give `k + 1`.
pub fn verify_tableau(tableau: &ButcherTableau, h_list: &[f64]) -> Result<OrderCheck> {
    let problem = AnalyticProblem::exp_decay(1.0)?;
    let slope = empirical_order(tableau, &problem, &[1.0], h_list)?;
    let expected = f64::from(tableau.declared_order()) + 1.0;
    Ok(OrderCheck {
        method: tableau.name().to_string(),
        expected_slope: expected,
        slope,
        pass: (slope - expected).abs() <= SLOPE_TOL,
    })
}

pub fn verify_orders(h_list: &[f64]) -> Result<Vec<OrderCheck>> {
    StandardMethod::ALL
        .iter()
        .map(|m| verify_tableau(&ButcherTableau::standard(*m), h_list))
        .collect()
}
