//! Explicit Runge-Kutta steps on gradient flows.
//!
//! Internally every step is written in descent form: given a direction
//! field `d(θ)` (the gradient, or a preconditioned gradient) the stages are
//! `θ_i = θ - h Σ_{j<i} a_ij d(θ_j)` and the update is
//! `θ' = θ - h Σ_i b_i d(θ_i)`. With `d = -f` this is the usual RK scheme
//! for `θ' = f(θ)`, bit for bit.

use crate::error::{first_non_finite, invalid, Error, Result};
use crate::field::{check_dim, AnalyticProblem, GradientOracle, VectorField};
use crate::tableau::ButcherTableau;
use crate::vecops::{norm, sub};

/// Everything produced by one RK step.
#[derive(Debug, Clone, PartialEq)]
pub struct RkStepResult {
    pub theta_next: Vec<f64>,
    /// `g*(θ, h) = Σ b_i d(θ_i)`.
    pub rk_gradient: Vec<f64>,
    pub stage_points: Vec<Vec<f64>>,
    /// Direction evaluated at each stage point (raw gradients for a plain
    /// gradient flow).
    pub stage_gradients: Vec<Vec<f64>>,
    /// Oracle evaluations spent by this step.
    pub grad_evals: u64,
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid(format!("step size must be positive and finite, got {h}")));
    }
    Ok(())
}

/// Runs one explicit RK step in descent form.
///
/// `first`, when given, is used as the direction at stage 1 instead of
/// calling `direction(θ)`; it must equal what `direction(θ)` would return.
pub(crate) fn descent_step<F>(
    tableau: &ButcherTableau,
    theta: &[f64],
    h: f64,
    first: Option<Vec<f64>>,
    mut direction: F,
) -> Result<RkStepResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    check_step(h)?;
    let s = tableau.stages();
    let dim = theta.len();
    let mut stage_points: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut stage_dirs: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut evals = 0u64;
    let mut first = first;

    for i in 0..s {
        let mut point = theta.to_vec();
        let row = tableau.a_row(i);
        if row[..i].iter().any(|&a| a != 0.0) {
            let mut acc = vec![0.0; dim];
            for (j, &a) in row[..i].iter().enumerate() {
                if a != 0.0 {
                    for (acc_k, d_k) in acc.iter_mut().zip(&stage_dirs[j]) {
                        *acc_k += a * d_k;
                    }
                }
            }
            for (p, acc_k) in point.iter_mut().zip(&acc) {
                *p -= h * acc_k;
            }
            if let Some(component) = first_non_finite(&point) {
                return Err(Error::Divergence {
                    stage: Some(i),
                    component,
                });
            }
        }
        let dir = match (i, first.take()) {
            (0, Some(d)) => d,
            _ => {
                evals += 1;
                direction(&point)?
            }
        };
        check_dim(dim, dir.len(), "stage direction")?;
        if let Some(component) = first_non_finite(&dir) {
            return Err(Error::Divergence {
                stage: Some(i),
                component,
            });
        }
        stage_points.push(point);
        stage_dirs.push(dir);
    }

    let mut rk_gradient = vec![0.0; dim];
    for (&b, dir) in tableau.b().iter().zip(&stage_dirs) {
        if b != 0.0 {
            for (g, d) in rk_gradient.iter_mut().zip(dir) {
                *g += b * d;
            }
        }
    }
    let theta_next: Vec<f64> = theta
        .iter()
        .zip(&rk_gradient)
        .map(|(t, g)| t - h * g)
        .collect();
    if let Some(component) = first_non_finite(&theta_next) {
        return Err(Error::Divergence {
            stage: None,
            component,
        });
    }
    Ok(RkStepResult {
        theta_next,
        rk_gradient,
        stage_points,
        stage_gradients: stage_dirs,
        grad_evals: evals,
    })
}

/// Stage points `θ_i = θ + h Σ_{j<i} a_ij f(θ_j)` for a general field.
/// Performs exactly `stages` field evaluations.
pub fn stage_points<V: VectorField + ?Sized>(
    tableau: &ButcherTableau,
    field: &V,
    theta: &[f64],
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    Ok(field_step(tableau, field, theta, h)?.stage_points)
}

/// One RK step on `θ' = f(θ)`. `rk_gradient` and `stage_gradients` hold
/// `-f` values.
pub fn field_step<V: VectorField + ?Sized>(
    tableau: &ButcherTableau,
    field: &V,
    theta: &[f64],
    h: f64,
) -> Result<RkStepResult> {
    check_dim(field.dim(), theta.len(), "theta")?;
    descent_step(tableau, theta, h, None, |p| {
        let mut f = field.eval(p)?;
        f.iter_mut().for_each(|v| *v = -*v);
        Ok(f)
    })
}

/// The RK gradient `g*(θ, h) = Σ b_i g(θ_i)`.
pub fn rk_gradient<O: GradientOracle + ?Sized>(
    tableau: &ButcherTableau,
    oracle: &O,
    theta: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    Ok(rk_step(tableau, oracle, theta, h)?.rk_gradient)
}

/// Vanilla RK update `θ' = θ - h g*(θ, h)`.
pub fn rk_step<O: GradientOracle + ?Sized>(
    tableau: &ButcherTableau,
    oracle: &O,
    theta: &[f64],
    h: f64,
) -> Result<RkStepResult> {
    check_dim(oracle.dim(), theta.len(), "theta")?;
    descent_step(tableau, theta, h, None, |p| oracle.gradient(p))
}

/// Same as [`rk_step`] but reuses a precomputed `g(θ)` for stage 1, saving
/// one gradient evaluation.
pub fn rk_step_with_first<O: GradientOracle + ?Sized>(
    tableau: &ButcherTableau,
    oracle: &O,
    theta: &[f64],
    h: f64,
    g_theta: Vec<f64>,
) -> Result<RkStepResult> {
    check_dim(oracle.dim(), theta.len(), "theta")?;
    descent_step(tableau, theta, h, Some(g_theta), |p| oracle.gradient(p))
}

/// One-step errors `‖θ'(h) - θ(h)‖` against the exact flow, one per `h`.
pub fn one_step_errors(
    tableau: &ButcherTableau,
    problem: &AnalyticProblem,
    theta0: &[f64],
    h_list: &[f64],
) -> Result<Vec<f64>> {
    h_list
        .iter()
        .map(|&h| {
            let step = rk_step(tableau, problem, theta0, h)?;
            let exact = problem.exact_flow_solution(theta0, h)?;
            Ok(norm(&sub(&step.theta_next, &exact)))
        })
        .collect()
}

/// Least-squares slope of `log(one-step error)` against `log(h)`.
///
/// A method of order `k` gives a slope close to `k + 1`.
pub fn empirical_order(
    tableau: &ButcherTableau,
    problem: &AnalyticProblem,
    theta0: &[f64],
    h_list: &[f64],
) -> Result<f64> {
    if h_list.len() < 3 {
        return Err(invalid(format!(
            "empirical order needs at least 3 step sizes, got {}",
            h_list.len()
        )));
    }
    if h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(invalid("step sizes must be positive and finite"));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("step sizes must be strictly decreasing"));
    }
    let errors = one_step_errors(tableau, problem, theta0, h_list)?;
    if let Some((&h, _)) = h_list.iter().zip(&errors).find(|(_, e)| **e == 0.0) {
        return Err(Error::DegenerateFit { h });
    }
    let xs: Vec<f64> = h_list.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gradient_flow_field;
    use crate::tableau::StandardMethod;

    fn tab(m: StandardMethod) -> ButcherTableau {
        ButcherTableau::standard(m)
    }

    fn unit_quadratic() -> AnalyticProblem {
        AnalyticProblem::quadratic(vec![1.0]).unwrap()
    }

    #[test]
    fn stage_points_examples() {
        let q = unit_quadratic();
        let f = gradient_flow_field(&q);
        let euler = stage_points(&tab(StandardMethod::Euler), &f, &[0.7], 0.3).unwrap();
        assert_eq!(euler, vec![vec![0.7]]);
        let heun = stage_points(&tab(StandardMethod::Heun), &f, &[1.0], 0.1).unwrap();
        assert_eq!(heun, vec![vec![1.0], vec![0.9]]);
        let rk4 = stage_points(&tab(StandardMethod::Rk4), &f, &[1.0], 1.0).unwrap();
        assert_eq!(rk4, vec![vec![1.0], vec![0.5], vec![0.75], vec![0.25]]);
    }

    #[test]
    fn rk4_gradient_and_step_on_unit_quadratic() {
        let q = unit_quadratic();
        let r = rk_step(&tab(StandardMethod::Rk4), &q, &[1.0], 1.0).unwrap();
        assert_eq!(
            r.stage_gradients,
            vec![vec![1.0], vec![0.5], vec![0.75], vec![0.25]]
        );
        assert!((r.rk_gradient[0] - 0.625).abs() < 1e-15);
        let taylor = 1.0 - 1.0 + 0.5 - 1.0 / 6.0 + 1.0 / 24.0;
        assert!((r.theta_next[0] - taylor).abs() < 1e-12);
        assert!((r.theta_next[0] - 0.375).abs() < 1e-12);
        assert_eq!(r.grad_evals, 4);
    }

    #[test]
    fn heun_step_on_unit_quadratic() {
        let q = unit_quadratic();
        let r = rk_step(&tab(StandardMethod::Heun), &q, &[1.0], 0.1).unwrap();
        assert!((r.theta_next[0] - 0.905).abs() < 1e-15);
        let err = (r.theta_next[0] - (-0.1f64).exp()).abs();
        assert!(err > 1e-4 && err < 2e-4, "{err}");
    }

    #[test]
    fn euler_gradient_is_raw_gradient() {
        let p = AnalyticProblem::rosenbrock(1.0, 5.0).unwrap();
        let theta = [0.2, 0.9];
        let g = p.gradient(&theta).unwrap();
        for h in [1e-3, 0.1, 2.0] {
            assert_eq!(rk_gradient(&tab(StandardMethod::Euler), &p, &theta, h).unwrap(), g);
        }
    }

    #[test]
    fn critical_point_is_fixed() {
        let q = AnalyticProblem::quadratic(vec![1.0, 3.0]).unwrap();
        for m in StandardMethod::ALL {
            let r = rk_step(&tab(m), &q, &[0.0, 0.0], 0.5).unwrap();
            assert_eq!(r.rk_gradient, vec![0.0, 0.0]);
            assert_eq!(r.theta_next, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn update_is_reconstructed_bitwise() {
        let p = AnalyticProblem::rosenbrock(1.0, 3.0).unwrap();
        let theta = [0.4, -0.1];
        let h = 0.01;
        let r = rk_step(&tab(StandardMethod::Rk3), &p, &theta, h).unwrap();
        for k in 0..2 {
            assert_eq!(r.theta_next[k], theta[k] - h * r.rk_gradient[k]);
        }
        assert_eq!(r.stage_points.len(), 3);
        assert_eq!(r.stage_gradients.len(), 3);
    }

    #[test]
    fn first_gradient_reuse_saves_one_eval() {
        let q = AnalyticProblem::quadratic(vec![2.0, 0.5]).unwrap();
        let theta = [1.0, -1.0];
        let t = tab(StandardMethod::Rk4);
        let full = rk_step(&t, &q, &theta, 0.2).unwrap();
        let reused = rk_step_with_first(&t, &q, &theta, 0.2, q.gradient(&theta).unwrap()).unwrap();
        assert_eq!(full.theta_next, reused.theta_next);
        assert_eq!(reused.grad_evals, 3);
    }

    #[test]
    fn divergence_is_reported_with_stage() {
        let q = AnalyticProblem::quadratic(vec![1e300]).unwrap();
        let err = rk_step(&tab(StandardMethod::Rk4), &q, &[1e10], 1e10).unwrap_err();
        assert!(matches!(err, Error::Divergence { stage: Some(_), .. }), "{err}");
    }

    #[test]
    fn nonpositive_step_rejected() {
        let q = unit_quadratic();
        assert!(rk_step(&tab(StandardMethod::Rk4), &q, &[1.0], 0.0).is_err());
        assert!(rk_step(&tab(StandardMethod::Rk4), &q, &[1.0], -0.1).is_err());
    }

    #[test]
    fn field_and_gradient_forms_agree_bitwise() {
        let p = AnalyticProblem::rosenbrock(1.0, 4.0).unwrap();
        let theta = [-0.3, 0.8];
        for m in StandardMethod::ALL {
            let t = tab(m);
            let a = rk_step(&t, &p, &theta, 0.05).unwrap();
            let b = field_step(&t, &gradient_flow_field(&p), &theta, 0.05).unwrap();
            assert_eq!(a.theta_next, b.theta_next);
        }
    }

    #[test]
    fn empirical_orders_on_exp_decay() {
        let p = AnalyticProblem::exp_decay(1.0).unwrap();
        let hs = [0.2, 0.1, 0.05, 0.025];
        let expect = [(StandardMethod::Euler, 2.0, 0.2), (StandardMethod::Heun, 3.0, 0.2), (StandardMethod::Rk4, 5.0, 0.3)];
        for (m, slope, tol) in expect {
            let got = empirical_order(&tab(m), &p, &[1.0], &hs).unwrap();
            assert!((got - slope).abs() <= tol, "{m}: {got}");
        }
    }

    #[test]
    fn empirical_order_input_checks() {
        let p = AnalyticProblem::exp_decay(1.0).unwrap();
        let t = tab(StandardMethod::Rk4);
        assert!(empirical_order(&t, &p, &[1.0], &[0.2, 0.1]).is_err());
        assert!(empirical_order(&t, &p, &[1.0], &[0.1, 0.2, 0.05]).is_err());
        // From θ0 = 0 every method is exact.
        assert!(matches!(
            empirical_order(&t, &p, &[0.0], &[0.2, 0.1, 0.05]),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn rk_gradient_tends_to_gradient_linearly() {
        let q = AnalyticProblem::quadratic(vec![1.0, 4.0]).unwrap();
        let theta = [1.0, 1.0];
        let g = q.gradient(&theta).unwrap();
        let t = tab(StandardMethod::Rk4);
        let hs = [1e-2, 1e-3, 1e-4];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| norm(&sub(&rk_gradient(&t, &q, &theta, h).unwrap(), &g)))
            .collect();
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let slope = least_squares_slope(&xs, &ys);
        assert!((slope - 1.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn rk4_contracts_monotonically_in_stability_region() {
        for lambda in [0.5, 1.0, 3.0] {
            let p = AnalyticProblem::exp_decay(lambda).unwrap();
            for hl in [0.1, 1.0, 2.0, 2.7] {
                let h = hl / lambda;
                let mut theta = vec![1.0];
                for _ in 0..50 {
                    let next = rk_step(&tab(StandardMethod::Rk4), &p, &theta, h).unwrap().theta_next;
                    assert!(next[0].abs() < theta[0].abs() || next[0] == 0.0);
                    assert!(next[0] >= 0.0);
                    theta = next;
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn steps_are_deterministic(x in -2.0f64..2.0, y in -1.0f64..3.0, h in 1e-4f64..0.05) {
                let p = AnalyticProblem::rosenbrock(1.0, 10.0).unwrap();
                let t = tab(StandardMethod::Rk4);
                let a = rk_step(&t, &p, &[x, y], h).unwrap();
                let b = rk_step(&t, &p, &[x, y], h).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn eval_count_equals_stages(h in 1e-3f64..0.5) {
                let q = AnalyticProblem::quadratic(vec![1.0, 2.0]).unwrap();
                for m in StandardMethod::ALL {
                    let t = tab(m);
                    let c = crate::field::CountingOracle::new(&q);
                    let r = rk_step(&t, &c, &[1.0, -1.0], h).unwrap();
                    prop_assert_eq!(c.grad_evals(), t.stages() as u64);
                    prop_assert_eq!(r.grad_evals, t.stages() as u64);
                }
            }
        }
    }
}
