//! Butcher tableaux for explicit Runge-Kutta methods.
//!
//! A method with `s` stages is described by a strictly lower-triangular
//! `s × s` coefficient matrix `a` and a weight vector `b`. Only explicit
//! methods can be constructed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance used for the algebraic order conditions.
pub const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardMethod {
    Euler,
    Heun,
    Rk3,
    Rk4,
}

impl StandardMethod {
    pub const ALL: [StandardMethod; 4] = [Self::Euler, Self::Heun, Self::Rk3, Self::Rk4];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Heun => "heun",
            Self::Rk3 => "rk3",
            Self::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for StandardMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StandardMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "heun" => Ok(Self::Heun),
            "rk3" => Ok(Self::Rk3),
            "rk4" => Ok(Self::Rk4),
            other => Err(invalid(format!(
                "unknown tableau '{other}' (expected euler, heun, rk3 or rk4)"
            ))),
        }
    }
}

/// Coefficients of an explicit Runge-Kutta method.
///
/// Immutable once built; `a` is stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    a: Vec<f64>,
    b: Vec<f64>,
    stages: usize,
    declared_order: u32,
}

impl ButcherTableau {
    /// Builds a tableau from a row-major coefficient matrix and weights.
    ///
    /// Rejects mismatched shapes, nonzero entries on or above the diagonal
    /// and weights that do not sum to one.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        declared_order: u32,
    ) -> Result<Self> {
        let t = Self::from_raw_parts(name, a, b, declared_order)?;
        let sum: f64 = t.b.iter().sum();
        if (sum - 1.0).abs() > ORDER_TOL {
            return Err(invalid(format!(
                "tableau '{}': weights sum to {sum}, expected 1",
                t.name
            )));
        }
        Ok(t)
    }

    /// Like [`ButcherTableau::new`] but skips the weight-sum check.
    ///
    /// Only shape and explicitness are validated. Exists so order
    /// verification can be exercised against deliberately inconsistent
    /// methods.
    pub fn from_raw_parts(
        name: impl Into<String>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        declared_order: u32,
    ) -> Result<Self> {
        let name = name.into();
        let stages = b.len();
        if stages == 0 {
            return Err(invalid(format!("tableau '{name}' has no stages")));
        }
        if declared_order == 0 {
            return Err(invalid(format!("tableau '{name}': declared order must be positive")));
        }
        if a.len() != stages || a.iter().any(|row| row.len() != stages) {
            return Err(invalid(format!(
                "tableau '{name}': coefficient matrix must be {stages}x{stages}"
            )));
        }
        let mut flat = Vec::with_capacity(stages * stages);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(invalid(format!("tableau '{name}': a[{i}][{j}] is not finite")));
                }
                if j >= i && v != 0.0 {
                    return Err(invalid(format!(
                        "tableau '{name}': a[{i}][{j}] = {v} makes the method implicit"
                    )));
                }
                flat.push(v);
            }
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("tableau '{name}': non-finite weight")));
        }
        Ok(Self {
            name,
            a: flat,
            b,
            stages,
            declared_order,
        })
    }

    pub fn standard(method: StandardMethod) -> Self {
        let (a, b, order): (Vec<Vec<f64>>, Vec<f64>, u32) = match method {
            StandardMethod::Euler => (vec![vec![0.0]], vec![1.0], 1),
            StandardMethod::Heun => (vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5], 2),
            StandardMethod::Rk3 => (
                vec![
                    vec![0.0, 0.0, 0.0],
                    vec![0.5, 0.0, 0.0],
                    vec![-1.0, 2.0, 0.0],
                ],
                vec![1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
                3,
            ),
            StandardMethod::Rk4 => (
                vec![
                    vec![0.0, 0.0, 0.0, 0.0],
                    vec![0.5, 0.0, 0.0, 0.0],
                    vec![0.0, 0.5, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0, 0.0],
                ],
                vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
                4,
            ),
        };
        Self::new(method.as_str(), a, b, order).expect("built-in tableau is valid")
    }

    /// Parses a method name (`euler`, `heun`, `rk3`, `rk4`) into its tableau.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::standard(name.parse()?))
    }

    /// The explicit two-stage second-order family: `b = [1-α, α]`,
    /// `a21 = 1/(2α)`, for `α ∈ (0, 1]`.
    pub fn second_order_family(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!(
                "second-order family requires 0 < alpha <= 1, got {alpha}"
            )));
        }
        let a21 = 1.0 / (2.0 * alpha);
        Self::new(
            format!("rk2(alpha={alpha})"),
            vec![vec![0.0, 0.0], vec![a21, 0.0]],
            vec![1.0 - alpha, alpha],
            2,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn declared_order(&self) -> u32 {
        self.declared_order
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages + j]
    }

    /// Row `i` of the coefficient matrix.
    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.stages..(i + 1) * self.stages]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Checks the order-1 (`Σ b_i = 1`) or order-2 (`Σ b_i a_ij = 1/2`)
    /// condition. Order 2 implies checking order 1 as well.
    pub fn check_order_conditions(&self, order: u32) -> Result<bool> {
        if !(1..=2).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let sum_b: f64 = self.b.iter().sum();
        if (sum_b - 1.0).abs() > ORDER_TOL {
            return Ok(false);
        }
        if order == 1 {
            return Ok(true);
        }
        let mut sum_ba = 0.0;
        for i in 0..self.stages {
            for j in 0..self.stages {
                sum_ba += self.b[i] * self.a(i, j);
            }
        }
        Ok((sum_ba - 0.5).abs() <= ORDER_TOL)
    }

    /// True when every entry on or above the diagonal is zero.
    pub fn is_explicit(&self) -> bool {
        (0..self.stages).all(|i| (i..self.stages).all(|j| self.a(i, j) == 0.0))
    }
}

impl fmt::Display for ButcherTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (s={}, order {})", self.name, self.stages, self.declared_order)
    }
}
