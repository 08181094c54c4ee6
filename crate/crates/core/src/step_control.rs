//! Drift-adjusted step sizes.
//!
//! Both rules look at how fast the gradient turns along the flow, measured
//! by `‖H g‖ / ‖g‖`:
//!
//! * DAL-p:  `h = 2 (‖g‖ / ‖Hg‖)^p`
//! * DALR:   `h = c / (1 + (c/2) (‖Hg‖ / ‖g‖)^p)`, which is capped by `c`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{hvp, hvp_finite_diff_from, GradientOracle, HvpMethod};
use crate::vecops::norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DalConfig {
    pub p: f64,
    /// Cap for DALR.
    pub c: f64,
    pub hvp_method: HvpMethod,
    /// Relative finite-difference scale; the actual step is `delta · (1 + ‖θ‖)`.
    pub delta: f64,
    /// Step returned at a critical point.
    pub fallback_h: f64,
}

impl Default for DalConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            c: 1.0,
            hvp_method: HvpMethod::FiniteDiff,
            delta: 1e-4,
            fallback_h: 0.0,
        }
    }
}

impl DalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(invalid(format!("DAL exponent p must be positive, got {}", self.p)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("DALR cap c must be positive, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("finite-difference scale must be positive, got {}", self.delta)));
        }
        if !(self.fallback_h >= 0.0 && self.fallback_h.is_finite()) {
            return Err(invalid(format!("fallback step must be nonnegative, got {}", self.fallback_h)));
        }
        Ok(())
    }
}

/// A step size together with the quantities it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    pub h: f64,
    /// `‖Hg‖ / ‖g‖`; `None` when the gradient vanished.
    pub ratio: Option<f64>,
    /// Set when `g = 0` and `fallback_h` was returned.
    pub degenerate: bool,
    pub grad_norm: f64,
}

impl StepSize {
    fn fallback(cfg: &DalConfig) -> Self {
        Self {
            h: cfg.fallback_h,
            ratio: None,
            degenerate: true,
            grad_norm: 0.0,
        }
    }
}

pub fn dal_from_ratio(ratio: f64, p: f64) -> Result<f64> {
    if ratio == 0.0 {
        return Err(Error::UnboundedRate);
    }
    Ok(2.0 * (1.0 / ratio).powf(p))
}

pub fn dalr_from_ratio(ratio: f64, c: f64, p: f64) -> f64 {
    c / (1.0 + 0.5 * c * ratio.powf(p))
}

/// `‖H g‖ / ‖g‖` for a given `g = g(θ)`; `None` when `g = 0`.
///
/// Costs one gradient evaluation with finite differences and none with the
/// exact product.
pub fn variation_ratio<O: GradientOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    g: &[f64],
    cfg: &DalConfig,
) -> Result<Option<f64>> {
    let gn = norm(g);
    if gn == 0.0 {
        return Ok(None);
    }
    let hg = match cfg.hvp_method {
        HvpMethod::Exact => hvp(oracle, theta, g, HvpMethod::Exact, cfg.delta)?,
        HvpMethod::FiniteDiff => {
            let delta = cfg.delta * (1.0 + norm(theta));
            hvp_finite_diff_from(oracle, theta, g, g, delta)?
        }
    };
    Ok(Some(norm(&hg) / gn))
}

/// DAL-p step at `θ`.
pub fn dal<O: GradientOracle + ?Sized>(theta: &[f64], oracle: &O, cfg: &DalConfig) -> Result<StepSize> {
    cfg.validate()?;
    let g = oracle.gradient(theta)?;
    dal_with_gradient(theta, &g, oracle, cfg)
}

pub fn dal_with_gradient<O: GradientOracle + ?Sized>(
    theta: &[f64],
    g: &[f64],
    oracle: &O,
    cfg: &DalConfig,
) -> Result<StepSize> {
    match variation_ratio(oracle, theta, g, cfg)? {
        None => Ok(StepSize::fallback(cfg)),
        Some(ratio) => Ok(StepSize {
            h: dal_from_ratio(ratio, cfg.p)?,
            ratio: Some(ratio),
            degenerate: false,
            grad_norm: norm(g),
        }),
    }
}

/// DALR step at `θ`; always in `(0, c]` unless degenerate.
pub fn dalr<O: GradientOracle + ?Sized>(theta: &[f64], oracle: &O, cfg: &DalConfig) -> Result<StepSize> {
    cfg.validate()?;
    let g = oracle.gradient(theta)?;
    dalr_with_gradient(theta, &g, oracle, cfg)
}

/// DALR step reusing an already computed `g(θ)`.
pub fn dalr_with_gradient<O: GradientOracle + ?Sized>(
    theta: &[f64],
    g: &[f64],
    oracle: &O,
    cfg: &DalConfig,
) -> Result<StepSize> {
    match variation_ratio(oracle, theta, g, cfg)? {
        None => Ok(StepSize::fallback(cfg)),
        Some(ratio) => Ok(StepSize {
            h: dalr_from_ratio(ratio, cfg.c, cfg.p),
            ratio: Some(ratio),
            degenerate: false,
            grad_norm: norm(g),
        }),
    }
}
