//! Vector fields, gradient oracles and analytic test problems.
//!
//! The gradient flow of a loss `L` is the ODE `θ' = f(θ)` with
//! `f(θ) = -∇L(θ)`. Every optimizer in this crate is driven through a
//! [`GradientOracle`]; [`AnalyticProblem`] supplies oracles with closed-form
//! flows and Hessians for verification.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vecops::{dot, norm};

/// An autonomous vector field `θ ↦ f(θ)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// Evaluates a loss, its gradient and optionally Hessian-vector products.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64]) -> Result<f64>;

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn loss_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((self.loss(theta)?, self.gradient(theta)?))
    }

    fn has_exact_hvp(&self) -> bool {
        false
    }

    /// `H(θ) v` computed analytically.
    fn hvp_exact(&self, _theta: &[f64], _v: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("exact Hessian-vector product"))
    }
}

impl<T: GradientOracle + ?Sized> GradientOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss(&self, theta: &[f64]) -> Result<f64> {
        (**self).loss(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(theta)
    }
    fn loss_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        (**self).loss_and_gradient(theta)
    }
    fn has_exact_hvp(&self) -> bool {
        (**self).has_exact_hvp()
    }
    fn hvp_exact(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        (**self).hvp_exact(theta, v)
    }
}

/// The gradient flow field `f(θ) = -g(θ)` of an oracle.
pub struct GradientFlow<O> {
    oracle: O,
}

pub fn gradient_flow_field<O: GradientOracle>(oracle: O) -> GradientFlow<O> {
    GradientFlow { oracle }
}

impl<O: GradientOracle> VectorField for GradientFlow<O> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.oracle.gradient(theta)?;
        g.iter_mut().for_each(|v| *v = -*v);
        Ok(g)
    }
}

/// Wraps an oracle and counts gradient evaluations.
///
/// `loss` calls are not counted; `loss_and_gradient` counts as one.
pub struct CountingOracle<O> {
    inner: O,
    grad_evals: Cell<u64>,
}

impl<O: GradientOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            grad_evals: Cell::new(0),
        }
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_evals.get()
    }

    pub fn reset(&self) {
        self.grad_evals.set(0);
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    fn bump(&self) {
        self.grad_evals.set(self.grad_evals.get() + 1);
    }
}

impl<O: GradientOracle> GradientOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.inner.loss(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.bump();
        self.inner.gradient(theta)
    }
    fn loss_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.bump();
        self.inner.loss_and_gradient(theta)
    }
    fn has_exact_hvp(&self) -> bool {
        self.inner.has_exact_hvp()
    }
    fn hvp_exact(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.inner.hvp_exact(theta, v)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(invalid(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}

/// Test problems with known gradients and Hessians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticProblem {
    /// `L(θ) = ½ λ ‖θ‖²`; the flow decays as `θ0 e^{-λt}`.
    ExpDecay { lambda: f64, dim: usize },
    /// `L(θ) = ½ θᵀ D θ` with positive diagonal `D`.
    Quadratic { diag: Vec<f64> },
    /// `L(x, y) = (a - x)² + b (y - x²)²`. Stiff for large `b`; no closed-form flow.
    Rosenbrock { a: f64, b: f64 },
}

impl AnalyticProblem {
    pub fn exp_decay(lambda: f64) -> Result<Self> {
        Self::exp_decay_dim(lambda, 1)
    }

    pub fn exp_decay_dim(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("exp_decay needs lambda > 0, got {lambda}")));
        }
        if dim == 0 {
            return Err(invalid("exp_decay needs dim >= 1"));
        }
        Ok(Self::ExpDecay { lambda, dim })
    }

    pub fn quadratic(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid("quadratic needs at least one coordinate"));
        }
        if let Some(d) = diag.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(invalid(format!(
                "quadratic needs a positive-definite diagonal, found entry {d}"
            )));
        }
        Ok(Self::Quadratic { diag })
    }

    pub fn rosenbrock(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(invalid("rosenbrock parameters must be finite"));
        }
        Ok(Self::Rosenbrock { a, b })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::ExpDecay { .. } => "exp_decay",
            Self::Quadratic { .. } => "quadratic",
            Self::Rosenbrock { .. } => "rosenbrock",
        }
    }

    /// Exact solution of the gradient flow started at `theta0` after time `t`.
    pub fn exact_flow_solution(&self, theta0: &[f64], t: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta0.len(), "theta0")?;
        if !(t >= 0.0) {
            return Err(invalid(format!("flow time must be nonnegative, got {t}")));
        }
        match self {
            Self::ExpDecay { lambda, .. } => {
                let decay = (-lambda * t).exp();
                Ok(theta0.iter().map(|x| x * decay).collect())
            }
            Self::Quadratic { diag } => Ok(theta0
                .iter()
                .zip(diag)
                .map(|(x, d)| x * (-d * t).exp())
                .collect()),
            Self::Rosenbrock { .. } => Err(Error::NoClosedForm("rosenbrock")),
        }
    }

    /// Default starting point used by harness runs.
    pub fn default_start(&self) -> Vec<f64> {
        match self {
            Self::Rosenbrock { .. } => vec![-1.2, 1.0],
            _ => vec![1.0; self.dim()],
        }
    }
}

impl GradientOracle for AnalyticProblem {
    fn dim(&self) -> usize {
        match self {
            Self::ExpDecay { dim, .. } => *dim,
            Self::Quadratic { diag } => diag.len(),
            Self::Rosenbrock { .. } => 2,
        }
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len(), "theta")?;
        Ok(match self {
            Self::ExpDecay { lambda, .. } => 0.5 * lambda * dot(theta, theta),
            Self::Quadratic { diag } => {
                0.5 * theta
                    .iter()
                    .zip(diag)
                    .fold(0.0, |acc, (x, d)| acc + d * x * x)
            }
            Self::Rosenbrock { a, b } => {
                let (x, y) = (theta[0], theta[1]);
                (a - x).powi(2) + b * (y - x * x).powi(2)
            }
        })
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len(), "theta")?;
        Ok(match self {
            Self::ExpDecay { lambda, .. } => theta.iter().map(|x| lambda * x).collect(),
            Self::Quadratic { diag } => theta.iter().zip(diag).map(|(x, d)| d * x).collect(),
            Self::Rosenbrock { a, b } => {
                let (x, y) = (theta[0], theta[1]);
                let r = y - x * x;
                vec![-2.0 * (a - x) - 4.0 * b * x * r, 2.0 * b * r]
            }
        })
    }

    fn has_exact_hvp(&self) -> bool {
        true
    }

    fn hvp_exact(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len(), "theta")?;
        check_dim(self.dim(), v.len(), "v")?;
        Ok(match self {
            Self::ExpDecay { lambda, .. } => v.iter().map(|x| lambda * x).collect(),
            Self::Quadratic { diag } => v.iter().zip(diag).map(|(x, d)| d * x).collect(),
            Self::Rosenbrock { b, .. } => {
                let (x, y) = (theta[0], theta[1]);
                let hxx = 2.0 - 4.0 * b * (y - 3.0 * x * x);
                let hxy = -4.0 * b * x;
                let hyy = 2.0 * b;
                vec![hxx * v[0] + hxy * v[1], hxy * v[0] + hyy * v[1]]
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HvpMethod {
    Exact,
    #[default]
    FiniteDiff,
}

impl FromStr for HvpMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            "finite_diff" | "fd" => Ok(Self::FiniteDiff),
            other => Err(invalid(format!("unknown hvp method '{other}'"))),
        }
    }
}

impl fmt::Display for HvpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::FiniteDiff => "finite_diff",
        })
    }
}

/// Default finite-difference step: `1e-4 · (1 + ‖θ‖)`.
pub fn default_fd_step(theta: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(theta))
}

/// Hessian-vector product `H(θ) v`.
///
/// `FiniteDiff` uses a forward difference along the normalized direction,
/// `(g(θ + δ v/‖v‖) - g(θ)) ‖v‖ / δ`, costing two gradient evaluations.
pub fn hvp<O: GradientOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    v: &[f64],
    method: HvpMethod,
    delta: f64,
) -> Result<Vec<f64>> {
    match method {
        HvpMethod::Exact => {
            if !oracle.has_exact_hvp() {
                return Err(Error::Unsupported("exact Hessian-vector product"));
            }
            oracle.hvp_exact(theta, v)
        }
        HvpMethod::FiniteDiff => {
            let g = oracle.gradient(theta)?;
            hvp_finite_diff_from(oracle, theta, v, &g, delta)
        }
    }
}

/// Forward-difference HVP reusing an already computed `g(θ)`; one gradient
/// evaluation.
pub fn hvp_finite_diff_from<O: GradientOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    v: &[f64],
    g_theta: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    check_dim(theta.len(), v.len(), "v")?;
    check_dim(theta.len(), g_theta.len(), "g(theta)")?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {delta}")));
    }
    let vnorm = norm(v);
    if vnorm == 0.0 {
        return Err(invalid("finite-difference HVP needs a nonzero direction"));
    }
    let shifted: Vec<f64> = theta
        .iter()
        .zip(v)
        .map(|(t, vi)| t + delta * (vi / vnorm))
        .collect();
    let g_shift = oracle.gradient(&shifted)?;
    let factor = vnorm / delta;
    Ok(g_shift
        .iter()
        .zip(g_theta)
        .map(|(a, b)| (a - b) * factor)
        .collect())
}

/// Raw local-variation ratio `‖H g‖ / ‖g‖` at `θ`. Returns `None` at a
/// critical point.
pub fn gradient_variation_ratio<O: GradientOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    method: HvpMethod,
    delta: f64,
) -> Result<Option<f64>> {
    let g = oracle.gradient(theta)?;
    let gn = norm(&g);
    if gn == 0.0 {
        return Ok(None);
    }
    let hg = match method {
        HvpMethod::Exact => hvp(oracle, theta, &g, method, delta)?,
        HvpMethod::FiniteDiff => hvp_finite_diff_from(oracle, theta, &g, &g, delta)?,
    };
    Ok(Some(norm(&hg) / gn))
}
