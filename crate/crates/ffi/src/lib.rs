//! C ABI for `rkopt`.
//!
//! Objects are exposed as opaque handles created by `*_new` functions and
//! released by the matching `*_free`. Every fallible call returns an
//! [`RkoptStatus`]; the message of the most recent failure on the calling
//! thread is available from [`rkopt_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::{Cell, RefCell};
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rkopt::field::{AnalyticProblem, GradientOracle, HvpMethod};
use rkopt::harness::verify::{verify_orders, DEFAULT_H_LIST};
use rkopt::harness::RunConfig;
use rkopt::optimizers::{Optimizer, StepReport};
use rkopt::rk::rk_step;
use rkopt::step_control::{dal_from_ratio, dalr, dalr_from_ratio, DalConfig};
use rkopt::tableau::ButcherTableau;
use rkopt::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RkoptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Divergence = 3,
    Config = 4,
    Callback = 5,
    Io = 6,
    VerificationFailed = 7,
    UnboundedRate = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RkoptStatus {
    match e {
        Error::Divergence { .. } => RkoptStatus::Divergence,
        Error::Config(_) => RkoptStatus::Config,
        Error::UnboundedRate => RkoptStatus::UnboundedRate,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => RkoptStatus::Io,
        _ => RkoptStatus::InvalidInput,
    }
}

fn fail(e: Error) -> RkoptStatus {
    set_error(e.to_string());
    status_of(&e)
}

/// Runs `f`, turning panics into [`RkoptStatus::Panic`].
fn guard(f: impl FnOnce() -> RkoptStatus) -> RkoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            RkoptStatus::Panic
        }
    }
}

fn guard_ptr<T>(f: impl FnOnce() -> Result<T, Error>) -> *mut T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Box::into_raw(Box::new(v)),
        Ok(Err(e)) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, Error> {
    if s.is_null() {
        return Err(Error::InvalidInput("null string".into()));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Error::InvalidInput("string is not UTF-8".into()))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Error> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Error::InvalidInput("null array".into()));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

macro_rules! non_null {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument");
            return RkoptStatus::NullPointer;
        }
    };
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rkopt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

// ---------------------------------------------------------------- tableau

/// Opaque Butcher tableau.
pub struct RkoptTableau(ButcherTableau);

/// Built-in method by name: `euler`, `heun`, `rk3`, `rk4`. Null on error.
#[no_mangle]
pub unsafe extern "C" fn rkopt_tableau_new_standard(name: *const c_char) -> *mut RkoptTableau {
    guard_ptr(|| Ok(RkoptTableau(ButcherTableau::by_name(str_arg(name)?)?)))
}

/// Custom explicit tableau; `a` is `stages × stages`, row-major.
#[no_mangle]
pub unsafe extern "C" fn rkopt_tableau_new(
    stages: usize,
    a: *const f64,
    b: *const f64,
    declared_order: u32,
) -> *mut RkoptTableau {
    guard_ptr(|| {
        let a = slice_arg(a, stages * stages)?;
        let b = slice_arg(b, stages)?;
        let rows = a.chunks(stages.max(1)).map(<[f64]>::to_vec).collect();
        Ok(RkoptTableau(ButcherTableau::new("custom", rows, b.to_vec(), declared_order)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rkopt_tableau_free(t: *mut RkoptTableau) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of stages, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn rkopt_tableau_stages(t: *const RkoptTableau) -> usize {
    t.as_ref().map_or(0, |t| t.0.stages())
}

/// Whether the order conditions of `order` (1 or 2) hold.
#[no_mangle]
pub unsafe extern "C" fn rkopt_tableau_check_order(
    t: *const RkoptTableau,
    order: u32,
    out: *mut bool,
) -> RkoptStatus {
    non_null!(t, out);
    guard(|| match (*t).0.check_order_conditions(order) {
        Ok(v) => {
            *out = v;
            RkoptStatus::Ok
        }
        Err(e) => fail(e),
    })
}

// ---------------------------------------------------------------- oracles

/// Writes `∇L(theta)` into `grad_out`; nonzero return signals failure.
pub type RkoptGradientFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, theta: *const f64, grad_out: *mut f64, dim: usize) -> i32>;

/// Writes `L(theta)` into `loss_out`; nonzero return signals failure.
pub type RkoptLossFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, theta: *const f64, loss_out: *mut f64, dim: usize) -> i32>;

struct CallbackOracle {
    grad: unsafe extern "C" fn(*mut c_void, *const f64, *mut f64, usize) -> i32,
    loss: RkoptLossFn,
    user_data: *mut c_void,
    dim: usize,
    failed: Cell<Option<i32>>,
}

impl CallbackOracle {
    fn callback_error(&self, code: i32) -> Error {
        self.failed.set(Some(code));
        Error::InvalidInput(format!("callback returned {code}"))
    }
}

impl GradientOracle for CallbackOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &[f64]) -> Result<f64, Error> {
        let Some(f) = self.loss else {
            return Ok(f64::NAN);
        };
        let mut out = f64::NAN;
        // SAFETY: theta has `dim` entries; the callback contract says it
        // reads exactly that many and writes one value.
        let code = unsafe { f(self.user_data, theta.as_ptr(), &mut out, self.dim) };
        if code != 0 {
            return Err(self.callback_error(code));
        }
        Ok(out)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>, Error> {
        let mut g = vec![0.0; self.dim];
        // SAFETY: both buffers have `dim` entries.
        let code = unsafe { (self.grad)(self.user_data, theta.as_ptr(), g.as_mut_ptr(), self.dim) };
        if code != 0 {
            return Err(self.callback_error(code));
        }
        Ok(g)
    }
}

fn callback_oracle(grad: RkoptGradientFn, loss: RkoptLossFn, user_data: *mut c_void, dim: usize) -> Option<CallbackOracle> {
    grad.map(|grad| CallbackOracle {
        grad,
        loss,
        user_data,
        dim,
        failed: Cell::new(None),
    })
}

fn fail_with_oracle(e: Error, oracle: &CallbackOracle) -> RkoptStatus {
    let s = fail(e);
    if oracle.failed.get().is_some() {
        RkoptStatus::Callback
    } else {
        s
    }
}

/// Opaque built-in test problem.
pub struct RkoptProblem(AnalyticProblem);

/// `L(θ) = ½ Σ d_i θ_i²` with positive `diag`.
#[no_mangle]
pub unsafe extern "C" fn rkopt_problem_quadratic(diag: *const f64, dim: usize) -> *mut RkoptProblem {
    guard_ptr(|| Ok(RkoptProblem(AnalyticProblem::quadratic(slice_arg(diag, dim)?.to_vec())?)))
}

/// `L(θ) = ½ λ ‖θ‖²`.
#[no_mangle]
pub extern "C" fn rkopt_problem_exp_decay(lambda: f64, dim: usize) -> *mut RkoptProblem {
    guard_ptr(|| Ok(RkoptProblem(AnalyticProblem::exp_decay_dim(lambda, dim)?)))
}

/// `L(x, y) = (a - x)² + b (y - x²)²`.
#[no_mangle]
pub extern "C" fn rkopt_problem_rosenbrock(a: f64, b: f64) -> *mut RkoptProblem {
    guard_ptr(|| Ok(RkoptProblem(AnalyticProblem::rosenbrock(a, b)?)))
}

#[no_mangle]
pub unsafe extern "C" fn rkopt_problem_free(p: *mut RkoptProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub unsafe extern "C" fn rkopt_problem_dim(p: *const RkoptProblem) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

#[no_mangle]
pub unsafe extern "C" fn rkopt_problem_loss(
    p: *const RkoptProblem,
    theta: *const f64,
    dim: usize,
    out: *mut f64,
) -> RkoptStatus {
    non_null!(p, theta, out);
    guard(|| match (*p).0.loss(slice_arg(theta, dim).unwrap_or(&[])) {
        Ok(v) => {
            *out = v;
            RkoptStatus::Ok
        }
        Err(e) => fail(e),
    })
}

fn copy_out(src: &[f64], dst: *mut f64) {
    // SAFETY: callers pass `dst` with room for `src.len()` values.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
}

// ---------------------------------------------------------------- RK steps

/// One RK step `θ' = θ - h g*(θ, h)` on a built-in problem.
#[no_mangle]
pub unsafe extern "C" fn rkopt_rk_step(
    t: *const RkoptTableau,
    p: *const RkoptProblem,
    theta: *const f64,
    dim: usize,
    h: f64,
    theta_out: *mut f64,
) -> RkoptStatus {
    non_null!(t, p, theta, theta_out);
    guard(|| {
        let theta = std::slice::from_raw_parts(theta, dim);
        match rk_step(&(*t).0, &(*p).0, theta, h) {
            Ok(r) => {
                copy_out(&r.theta_next, theta_out);
                RkoptStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// One RK step on a gradient supplied by callback.
#[no_mangle]
pub unsafe extern "C" fn rkopt_rk_step_callback(
    t: *const RkoptTableau,
    grad: RkoptGradientFn,
    user_data: *mut c_void,
    theta: *const f64,
    dim: usize,
    h: f64,
    theta_out: *mut f64,
) -> RkoptStatus {
    non_null!(t, theta, theta_out);
    let Some(oracle) = callback_oracle(grad, None, user_data, dim) else {
        set_error("null gradient callback");
        return RkoptStatus::NullPointer;
    };
    guard(|| {
        let theta = std::slice::from_raw_parts(theta, dim);
        match rk_step(&(*t).0, &oracle, theta, h) {
            Ok(r) => {
                copy_out(&r.theta_next, theta_out);
                RkoptStatus::Ok
            }
            Err(e) => fail_with_oracle(e, &oracle),
        }
    })
}

// ---------------------------------------------------------------- step size

/// `c / (1 + (c/2) ratio^p)`.
#[no_mangle]
pub extern "C" fn rkopt_dalr_from_ratio(ratio: f64, c: f64, p: f64) -> f64 {
    dalr_from_ratio(ratio, c, p)
}

/// `2 ratio^{-p}`; fails with `UnboundedRate` when `ratio = 0`.
#[no_mangle]
pub unsafe extern "C" fn rkopt_dal_from_ratio(ratio: f64, p: f64, out: *mut f64) -> RkoptStatus {
    non_null!(out);
    match dal_from_ratio(ratio, p) {
        Ok(h) => {
            *out = h;
            RkoptStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// DALR step size for a built-in problem at `theta`. `exact_hvp` selects
/// the analytic Hessian product instead of a finite difference.
#[no_mangle]
pub unsafe extern "C" fn rkopt_dalr(
    p: *const RkoptProblem,
    theta: *const f64,
    dim: usize,
    c: f64,
    power: f64,
    exact_hvp: bool,
    h_out: *mut f64,
) -> RkoptStatus {
    non_null!(p, theta, h_out);
    guard(|| {
        let cfg = DalConfig {
            p: power,
            c,
            hvp_method: if exact_hvp { HvpMethod::Exact } else { HvpMethod::FiniteDiff },
            ..DalConfig::default()
        };
        if let Err(e) = cfg.validate() {
            return fail(e);
        }
        match dalr(std::slice::from_raw_parts(theta, dim), &(*p).0, &cfg) {
            Ok(s) => {
                *h_out = s.h;
                RkoptStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------- optimizer

/// Opaque optimizer with its state.
pub struct RkoptOptimizer(Optimizer);

/// Telemetry of one optimizer step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RkoptStepReport {
    pub lr_effective: f64,
    pub grad_norm: f64,
    /// NaN when no loss callback was given.
    pub loss: f64,
    pub grad_evals: u64,
    pub degenerate: bool,
}

impl From<StepReport> for RkoptStepReport {
    fn from(r: StepReport) -> Self {
        Self {
            lr_effective: r.lr_effective,
            grad_norm: r.grad_norm,
            loss: r.loss,
            grad_evals: r.grad_evals,
            degenerate: r.degenerate,
        }
    }
}

/// Builds an optimizer from `key=value` pairs separated by `;` or newlines,
/// using the `optimizer.*` keys of run configs without the prefix, e.g.
/// `"algorithm=rk_momentum; tableau=rk4; h=0.05; beta=0.9"`.
#[no_mangle]
pub unsafe extern "C" fn rkopt_optimizer_new(spec: *const c_char, dim: usize) -> *mut RkoptOptimizer {
    guard_ptr(|| {
        let text = str_arg(spec)?;
        let mut cfg = RunConfig::default();
        for part in text.split([';', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{part}'")))?;
            cfg.set(&format!("optimizer.{}", k.trim()), v)?;
        }
        Ok(RkoptOptimizer(Optimizer::new(cfg.optimizer_spec()?, dim)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn rkopt_optimizer_free(o: *mut RkoptOptimizer) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

unsafe fn finish_step(
    res: Result<StepReport, Error>,
    theta: Vec<f64>,
    theta_io: *mut f64,
    report: *mut RkoptStepReport,
) -> Result<(), Error> {
    let r = res?;
    copy_out(&theta, theta_io);
    if !report.is_null() {
        *report = r.into();
    }
    Ok(())
}

/// Advances `theta` (in place) by one step of a callback objective.
/// `loss` may be null; `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn rkopt_optimizer_step(
    o: *mut RkoptOptimizer,
    grad: RkoptGradientFn,
    loss: RkoptLossFn,
    user_data: *mut c_void,
    theta: *mut f64,
    dim: usize,
    report: *mut RkoptStepReport,
) -> RkoptStatus {
    non_null!(o, theta);
    let Some(oracle) = callback_oracle(grad, loss, user_data, dim) else {
        set_error("null gradient callback");
        return RkoptStatus::NullPointer;
    };
    guard(|| {
        let mut th = std::slice::from_raw_parts(theta, dim).to_vec();
        let res = (*o).0.step(&oracle, &mut th);
        match finish_step(res, th, theta, report) {
            Ok(()) => RkoptStatus::Ok,
            Err(e) => fail_with_oracle(e, &oracle),
        }
    })
}

/// Advances `theta` (in place) by one step on a built-in problem.
#[no_mangle]
pub unsafe extern "C" fn rkopt_optimizer_step_problem(
    o: *mut RkoptOptimizer,
    p: *const RkoptProblem,
    theta: *mut f64,
    dim: usize,
    report: *mut RkoptStepReport,
) -> RkoptStatus {
    non_null!(o, p, theta);
    guard(|| {
        let mut th = std::slice::from_raw_parts(theta, dim).to_vec();
        let res = (*o).0.step(&(*p).0, &mut th);
        match finish_step(res, th, theta, report) {
            Ok(()) => RkoptStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

// ---------------------------------------------------------------- harness

/// Fitted slopes of euler, heun, rk3 and rk4 (in that order) on the default
/// step sizes. Returns `VerificationFailed` if any is outside tolerance.
#[no_mangle]
pub unsafe extern "C" fn rkopt_verify_orders(slopes_out: *mut f64) -> RkoptStatus {
    non_null!(slopes_out);
    guard(|| match verify_orders(&DEFAULT_H_LIST) {
        Ok(checks) => {
            let slopes: Vec<f64> = checks.iter().map(|c| c.slope).collect();
            copy_out(&slopes, slopes_out);
            if checks.iter().all(|c| c.pass) {
                RkoptStatus::Ok
            } else {
                let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.to_string()).collect();
                set_error(failed.join("; "));
                RkoptStatus::VerificationFailed
            }
        }
        Err(e) => fail(e),
    })
}

/// Summary of a training run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RkoptRunSummary {
    /// NaN when the workload has no labels.
    pub best_test_acc: f64,
    pub final_train_loss: f64,
    pub steps_completed: u64,
    pub grad_evals: u64,
    pub diverged: bool,
}

/// Runs the config file at `path`; a non-null `out_dir` overrides the
/// configured output directory.
#[no_mangle]
pub unsafe extern "C" fn rkopt_run_config(
    path: *const c_char,
    out_dir: *const c_char,
    summary: *mut RkoptRunSummary,
) -> RkoptStatus {
    non_null!(path, summary);
    guard(|| {
        let result = (|| {
            let mut cfg = RunConfig::from_path(Path::new(str_arg(path)?))?;
            if !out_dir.is_null() {
                cfg.out_dir = str_arg(out_dir)?.into();
            }
            rkopt::harness::run(&cfg)
        })();
        match result {
            Ok(s) => {
                *summary = RkoptRunSummary {
                    best_test_acc: s.best_test_acc.unwrap_or(f64::NAN),
                    final_train_loss: s.final_train_loss,
                    steps_completed: s.steps_completed,
                    grad_evals: s.grad_evals,
                    diverged: s.diverged,
                };
                if s.diverged {
                    set_error(s.divergence.unwrap_or_default());
                    RkoptStatus::Divergence
                } else {
                    RkoptStatus::Ok
                }
            }
            Err(e) => fail(e),
        }
    })
}
