//! Diagonal preconditioning of the gradient flow.
//!
//! Replacing `θ' = -g(θ)` by `θ' = -A g(θ)` with a symmetric positive
//! definite `A` keeps the critical points and keeps the loss decreasing along
//! exact solutions, at rate `-gᵀ A g`. The preconditioners here are
//! diagonal and built from an AdaGrad accumulator of squared gradients.

use crate::error::{first_non_finite, invalid, Result};
use crate::field::{check_dim, GradientOracle, VectorField};
use crate::vecops::norm_sq;

/// Running sum of squared iterate gradients (the diagonal of `Σ g gᵀ`).
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    g_sq_accum: Vec<f64>,
    step_count: u64,
}

impl AdaGradState {
    pub fn new(dim: usize) -> Self {
        Self {
            g_sq_accum: vec![0.0; dim],
            step_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g_sq_accum.len()
    }

    pub fn accum(&self) -> &[f64] {
        &self.g_sq_accum
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Adds `g ⊙ g` to the accumulator.
    pub fn accumulate(&mut self, g: &[f64]) -> Result<()> {
        check_dim(self.dim(), g.len(), "gradient")?;
        if let Some(i) = first_non_finite(g) {
            return Err(invalid(format!("non-finite gradient component {i}")));
        }
        for (acc, gi) in self.g_sq_accum.iter_mut().zip(g) {
            *acc += gi * gi;
        }
        self.step_count += 1;
        Ok(())
    }

    /// AdaGrad: `scale_i = (ε + accum_i)^{-1/2}`.
    pub fn adagrad_preconditioner(&self, eps: f64) -> Result<DiagonalPreconditioner> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("AdaGrad epsilon must be positive, got {eps}")));
        }
        Ok(DiagonalPreconditioner {
            scale: self
                .g_sq_accum
                .iter()
                .map(|a| 1.0 / (eps + a).sqrt())
                .collect(),
        })
    }

    /// The modified AdaGrad preconditioner `(1 + accum_i)^{-1/2}`.
    pub fn modified_adagrad_preconditioner(&self) -> DiagonalPreconditioner {
        self.adagrad_preconditioner(1.0)
            .expect("epsilon = 1 is always valid")
    }
}

/// A diagonal, strictly positive preconditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalPreconditioner {
    scale: Vec<f64>,
}

impl DiagonalPreconditioner {
    pub fn new(scale: Vec<f64>) -> Result<Self> {
        if let Some(s) = scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(invalid(format!(
                "preconditioner entries must be strictly positive, found {s}"
            )));
        }
        Ok(Self { scale })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
        }
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// `A g`, elementwise.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.scale.iter().zip(g).map(|(s, gi)| s * gi).collect()
    }

    /// `‖g‖²_A = gᵀ A g`.
    pub fn norm_sq(&self, g: &[f64]) -> f64 {
        self.scale
            .iter()
            .zip(g)
            .fold(0.0, |acc, (s, gi)| acc + gi * s * gi)
    }
}

/// The preconditioned flow `f(θ) = -A g(θ)` with `A` held fixed.
pub struct PreconditionedField<'a, O: ?Sized> {
    oracle: &'a O,
    precond: &'a DiagonalPreconditioner,
}

pub fn preconditioned_field<'a, O: GradientOracle + ?Sized>(
    oracle: &'a O,
    precond: &'a DiagonalPreconditioner,
) -> PreconditionedField<'a, O> {
    PreconditionedField { oracle, precond }
}

impl<O: GradientOracle + ?Sized> VectorField for PreconditionedField<'_, O> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn eval(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.precond.dim(), theta.len(), "theta")?;
        let g = self.oracle.gradient(theta)?;
        Ok(self
            .precond
            .scale
            .iter()
            .zip(&g)
            .map(|(s, gi)| -(s * gi))
            .collect())
    }
}

/// `(I + g gᵀ)^α g = (1 + ‖g‖²)^α g`, without forming the matrix.
pub fn metric_power_apply(g: &[f64], alpha: f64) -> Vec<f64> {
    let factor = (1.0 + norm_sq(g)).powf(alpha);
    g.iter().map(|v| factor * v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gradient_flow_field, AnalyticProblem};

    #[test]
    fn accumulate_examples() {
        let mut s = AdaGradState::new(2);
        s.accumulate(&[1.0, 2.0]).unwrap();
        assert_eq!(s.accum(), &[1.0, 4.0]);
        s.accumulate(&[2.0, 0.0]).unwrap();
        assert_eq!(s.accum(), &[5.0, 4.0]);
        s.accumulate(&[0.0, 0.0]).unwrap();
        assert_eq!(s.accum(), &[5.0, 4.0]);
        assert_eq!(s.step_count(), 3);
    }

    #[test]
    fn accumulate_rejects_bad_gradients() {
        let mut s = AdaGradState::new(2);
        assert!(s.accumulate(&[f64::NAN, 0.0]).is_err());
        assert!(s.accumulate(&[1.0]).is_err());
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn adagrad_examples() {
        let s = AdaGradState::new(3);
        assert_eq!(s.adagrad_preconditioner(1.0).unwrap().scale(), &[1.0, 1.0, 1.0]);

        let mut s = AdaGradState::new(1);
        s.accumulate(&[3f64.sqrt()]).unwrap();
        let p = s.adagrad_preconditioner(1.0).unwrap();
        assert!((p.scale()[0] - 0.5).abs() < 1e-15);

        let s = AdaGradState {
            g_sq_accum: vec![5.0, 4.0],
            step_count: 2,
        };
        let p = s.adagrad_preconditioner(1e-8).unwrap();
        assert!((p.scale()[0] - 0.447_213_595).abs() < 1e-8);
        assert!((p.scale()[1] - 0.5).abs() < 1e-8);
        assert!(s.adagrad_preconditioner(0.0).is_err());
        assert!(s.adagrad_preconditioner(-1.0).is_err());
    }

    #[test]
    fn modified_examples() {
        assert_eq!(
            AdaGradState::new(2).modified_adagrad_preconditioner().scale(),
            &[1.0, 1.0]
        );
        let s = AdaGradState {
            g_sq_accum: vec![3.0],
            step_count: 1,
        };
        assert_eq!(s.modified_adagrad_preconditioner().scale(), &[0.5]);
        let s = AdaGradState {
            g_sq_accum: vec![5.0, 4.0],
            step_count: 2,
        };
        let p = s.modified_adagrad_preconditioner();
        assert!((p.scale()[0] - 0.408_248_29).abs() < 1e-8);
        assert!((p.scale()[1] - 0.447_213_595).abs() < 1e-8);
    }

    #[test]
    fn preconditioned_field_examples() {
        let q = AnalyticProblem::quadratic(vec![1.0, 2.0]).unwrap();
        let id = DiagonalPreconditioner::identity(2);
        let theta = [0.3, -1.2];
        assert_eq!(
            preconditioned_field(&q, &id).eval(&theta).unwrap(),
            gradient_flow_field(&q).eval(&theta).unwrap()
        );

        let e = AnalyticProblem::exp_decay(1.0).unwrap();
        let a = DiagonalPreconditioner::new(vec![0.5]).unwrap();
        assert_eq!(preconditioned_field(&e, &a).eval(&[4.0]).unwrap(), vec![-2.0]);

        let a = DiagonalPreconditioner::new(vec![3.0, 0.1]).unwrap();
        let f = preconditioned_field(&q, &a).eval(&[0.0, 0.0]).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn preconditioner_rejects_nonpositive_scale() {
        assert!(DiagonalPreconditioner::new(vec![1.0, 0.0]).is_err());
        assert!(DiagonalPreconditioner::new(vec![-1.0]).is_err());
    }

    #[test]
    fn metric_power_examples() {
        assert_eq!(metric_power_apply(&[0.0, 0.0], 1.7), vec![0.0, 0.0]);
        let g = [1.0, 1.0, 1.0];
        assert_eq!(metric_power_apply(&g, 1.0), vec![4.0, 4.0, 4.0]);
        assert_eq!(metric_power_apply(&g, -0.5), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn modified_equals_adagrad_with_unit_eps_bitwise() {
        let mut s = AdaGradState::new(4);
        s.accumulate(&[0.3, -2.0, 1e-7, 5.5]).unwrap();
        s.accumulate(&[1.1, 0.0, -3.0, 0.25]).unwrap();
        let a = s.adagrad_preconditioner(1.0).unwrap();
        let m = s.modified_adagrad_preconditioner();
        for (x, y) in a.scale().iter().zip(m.scale()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn accumulator_is_monotone_and_scales_nonincreasing(
                grads in vec(vec(-10.0f64..10.0, 5), 1..20)
            ) {
                let mut s = AdaGradState::new(5);
                let mut prev_acc = s.accum().to_vec();
                let mut prev_scale = s.modified_adagrad_preconditioner().scale().to_vec();
                for g in &grads {
                    s.accumulate(g).unwrap();
                    let scale = s.modified_adagrad_preconditioner().scale().to_vec();
                    for k in 0..5 {
                        prop_assert!(s.accum()[k] >= prev_acc[k]);
                        prop_assert!(s.accum()[k] >= 0.0);
                        prop_assert!(scale[k] <= prev_scale[k]);
                    }
                    prev_acc = s.accum().to_vec();
                    prev_scale = scale;
                }
            }

            #[test]
            fn lyapunov_rate_is_negative(
                g in vec(-5.0f64..5.0, 1..8),
                raw_scale in vec(1e-3f64..10.0, 8),
            ) {
                prop_assume!(g.iter().any(|v| *v != 0.0));
                let a = DiagonalPreconditioner::new(raw_scale[..g.len()].to_vec()).unwrap();
                prop_assert!(a.norm_sq(&g) > 0.0);
                let f: Vec<f64> = a.apply(&g).iter().map(|v| -v).collect();
                let rate = crate::vecops::dot(&g, &f);
                prop_assert!(rate < 0.0);
            }
        }
    }
}
