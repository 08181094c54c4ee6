use std::ffi::{c_void, CStr, CString};
use std::ptr;

use rkopt_ffi::*;

fn last_error() -> String {
    let p = rkopt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe extern "C" fn quad_grad(user: *mut c_void, theta: *const f64, out: *mut f64, dim: usize) -> i32 {
    let d = &*(user as *const Vec<f64>);
    for i in 0..dim {
        *out.add(i) = d[i] * *theta.add(i);
    }
    0
}

unsafe extern "C" fn quad_loss(user: *mut c_void, theta: *const f64, out: *mut f64, dim: usize) -> i32 {
    let d = &*(user as *const Vec<f64>);
    *out = (0..dim).map(|i| 0.5 * d[i] * (*theta.add(i)).powi(2)).sum();
    0
}

unsafe extern "C" fn failing_grad(_: *mut c_void, _: *const f64, _: *mut f64, _: usize) -> i32 {
    7
}

#[test]
fn rk4_step_matches_taylor_value() {
    unsafe {
        let name = CString::new("rk4").unwrap();
        let t = rkopt_tableau_new_standard(name.as_ptr());
        assert!(!t.is_null());
        assert_eq!(rkopt_tableau_stages(t), 4);
        let diag = [1.0];
        let p = rkopt_problem_quadratic(diag.as_ptr(), 1);
        let mut out = [0.0];
        assert_eq!(rkopt_rk_step(t, p, [1.0].as_ptr(), 1, 1.0, out.as_mut_ptr()), RkoptStatus::Ok);
        assert!((out[0] - 0.375).abs() < 1e-12);

        let mut d = vec![1.0];
        let mut cb = [0.0];
        let s = rkopt_rk_step_callback(t, Some(quad_grad), &mut d as *mut _ as *mut c_void, [1.0].as_ptr(), 1, 1.0, cb.as_mut_ptr());
        assert_eq!(s, RkoptStatus::Ok);
        assert_eq!(cb[0].to_bits(), out[0].to_bits());
        rkopt_problem_free(p);
        rkopt_tableau_free(t);
    }
}

#[test]
fn custom_tableau_and_order_check() {
    unsafe {
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [0.5, 0.5];
        let t = rkopt_tableau_new(2, a.as_ptr(), b.as_ptr(), 2);
        assert!(!t.is_null());
        let mut ok = false;
        assert_eq!(rkopt_tableau_check_order(t, 2, &mut ok), RkoptStatus::Ok);
        assert!(ok);
        rkopt_tableau_free(t);

        let bad_b = [0.5, 0.6];
        assert!(rkopt_tableau_new(2, a.as_ptr(), bad_b.as_ptr(), 2).is_null());
        assert!(!last_error().is_empty());

        let name = CString::new("rk9").unwrap();
        assert!(rkopt_tableau_new_standard(name.as_ptr()).is_null());
        assert!(rkopt_tableau_new_standard(ptr::null()).is_null());
    }
}

#[test]
fn optimizer_with_callbacks_decreases_loss() {
    unsafe {
        let spec = CString::new("algorithm=rk_momentum; tableau=rk4; h=0.05; beta=0.9").unwrap();
        let o = rkopt_optimizer_new(spec.as_ptr(), 3);
        assert!(!o.is_null(), "{}", last_error());
        let mut d = vec![1.0, 2.0, 4.0];
        let user = &mut d as *mut _ as *mut c_void;
        let mut theta = [1.0, -1.0, 0.5];
        let mut rep = RkoptStepReport::default();
        let mut losses = Vec::new();
        for _ in 0..50 {
            let s = rkopt_optimizer_step(o, Some(quad_grad), Some(quad_loss), user, theta.as_mut_ptr(), 3, &mut rep);
            assert_eq!(s, RkoptStatus::Ok);
            assert_eq!(rep.grad_evals, 4);
            losses.push(rep.loss);
        }
        assert!(losses[49] < 0.1 * losses[0]);
        rkopt_optimizer_free(o);
    }
}

#[test]
fn callback_failure_is_reported_and_theta_untouched() {
    unsafe {
        let spec = CString::new("algorithm=vanilla_rk\ntableau=heun\nh=0.1").unwrap();
        let o = rkopt_optimizer_new(spec.as_ptr(), 2);
        let mut theta = [1.0, 2.0];
        let s = rkopt_optimizer_step(o, Some(failing_grad), None, ptr::null_mut(), theta.as_mut_ptr(), 2, ptr::null_mut());
        assert_eq!(s, RkoptStatus::Callback);
        assert!(last_error().contains('7'));
        assert_eq!(theta, [1.0, 2.0]);
        assert_eq!(
            rkopt_optimizer_step(o, None, None, ptr::null_mut(), theta.as_mut_ptr(), 2, ptr::null_mut()),
            RkoptStatus::NullPointer
        );
        rkopt_optimizer_free(o);
    }
}

#[test]
fn optimizer_spec_errors() {
    unsafe {
        let spec = CString::new("algorithm=adam; beta=0.9").unwrap();
        assert!(rkopt_optimizer_new(spec.as_ptr(), 2).is_null());
        assert!(last_error().contains("beta"));
        let spec = CString::new("nonsense").unwrap();
        assert!(rkopt_optimizer_new(spec.as_ptr(), 2).is_null());
    }
}

#[test]
fn builtin_problem_step_and_dalr() {
    unsafe {
        let p = rkopt_problem_exp_decay(1.0, 2);
        assert_eq!(rkopt_problem_dim(p), 2);
        let spec = CString::new("algorithm=rk_dalr; tableau=rk4; dal.c=0.5; dal.hvp=finite_diff").unwrap();
        let o = rkopt_optimizer_new(spec.as_ptr(), 2);
        assert!(!o.is_null(), "{}", last_error());
        let mut theta = [1.0, 1.0];
        let mut rep = RkoptStepReport::default();
        assert_eq!(rkopt_optimizer_step_problem(o, p, theta.as_mut_ptr(), 2, &mut rep), RkoptStatus::Ok);
        assert_eq!(rep.grad_evals, 5);
        assert!(rep.lr_effective > 0.0 && rep.lr_effective <= 0.5);

        let mut h = 0.0;
        assert_eq!(rkopt_dalr(p, [1.0, 1.0].as_ptr(), 2, 0.5, 1.0, true, &mut h), RkoptStatus::Ok);
        // ratio = λ = 1: c / (1 + c/2).
        assert!((h - 0.5 / 1.25).abs() < 1e-12);
        let mut l = 0.0;
        assert_eq!(rkopt_problem_loss(p, [1.0, 1.0].as_ptr(), 2, &mut l), RkoptStatus::Ok);
        assert_eq!(l, 1.0);
        rkopt_optimizer_free(o);
        rkopt_problem_free(p);
    }
}

#[test]
fn step_size_rules() {
    assert_eq!(rkopt_dalr_from_ratio(0.0, 0.3, 1.0), 0.3);
    assert!((rkopt_dalr_from_ratio(2.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
    let mut h = 0.0;
    unsafe {
        assert_eq!(rkopt_dal_from_ratio(4.0, 1.0, &mut h), RkoptStatus::Ok);
        assert_eq!(h, 0.5);
        assert_eq!(rkopt_dal_from_ratio(0.0, 1.0, &mut h), RkoptStatus::UnboundedRate);
        assert_eq!(rkopt_dal_from_ratio(1.0, 1.0, ptr::null_mut()), RkoptStatus::NullPointer);
    }
}

#[test]
fn verify_orders_reports_slopes() {
    let mut slopes = [0.0; 4];
    assert_eq!(unsafe { rkopt_verify_orders(slopes.as_mut_ptr()) }, RkoptStatus::Ok);
    for (s, e) in slopes.iter().zip([2.0, 3.0, 4.0, 5.0]) {
        assert!((s - e).abs() <= 0.3, "{s}");
    }
}

#[test]
fn run_config_from_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "dataset = synthetic\nsteps = 20\neval_every = 5\nsynthetic.kind = quadratic\n[optimizer]\nalgorithm = vanilla_rk\ntableau = rk4\nh = 0.1\n",
    )
    .unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let mut s = RkoptRunSummary::default();
    assert_eq!(unsafe { rkopt_run_config(path.as_ptr(), out.as_ptr(), &mut s) }, RkoptStatus::Ok);
    assert_eq!(s.steps_completed, 20);
    assert_eq!(s.grad_evals, 80);
    assert!(s.best_test_acc.is_nan());
    assert!(dir.path().join("out/metrics.csv").exists());

    let missing = CString::new("/nonexistent/run.cfg").unwrap();
    assert_eq!(unsafe { rkopt_run_config(missing.as_ptr(), ptr::null(), &mut s) }, RkoptStatus::Config);
}
