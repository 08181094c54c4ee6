#ifndef RKOPT_H
#define RKOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum RkoptStatus {
  RKOPT_STATUS_OK = 0,
  RKOPT_STATUS_NULL_POINTER = 1,
  RKOPT_STATUS_INVALID_INPUT = 2,
  RKOPT_STATUS_DIVERGENCE = 3,
  RKOPT_STATUS_CONFIG = 4,
  RKOPT_STATUS_CALLBACK = 5,
  RKOPT_STATUS_IO = 6,
  RKOPT_STATUS_VERIFICATION_FAILED = 7,
  RKOPT_STATUS_UNBOUNDED_RATE = 8,
  RKOPT_STATUS_PANIC = 9,
} RkoptStatus;

/**
 * Opaque optimizer with its state.
 */
typedef struct RkoptOptimizer RkoptOptimizer;

/**
 * Opaque built-in test problem.
 */
typedef struct RkoptProblem RkoptProblem;

/**
 * Opaque Butcher tableau.
 */
typedef struct RkoptTableau RkoptTableau;

/**
 * Writes `∇L(theta)` into `grad_out`; nonzero return signals failure.
 */
typedef int32_t (*RkoptGradientFn)(void *user_data,
                                   const double *theta,
                                   double *grad_out,
                                   size_t dim);

/**
 * Writes `L(theta)` into `loss_out`; nonzero return signals failure.
 */
typedef int32_t (*RkoptLossFn)(void *user_data, const double *theta, double *loss_out, size_t dim);

/**
 * Telemetry of one optimizer step.
 */
typedef struct RkoptStepReport {
  double lr_effective;
  double grad_norm;
  /**
   * NaN when no loss callback was given.
   */
  double loss;
  uint64_t grad_evals;
  bool degenerate;
} RkoptStepReport;

/**
 * Summary of a training run.
 */
typedef struct RkoptRunSummary {
  /**
   * NaN when the workload has no labels.
   */
  double best_test_acc;
  double final_train_loss;
  uint64_t steps_completed;
  uint64_t grad_evals;
  bool diverged;
} RkoptRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *rkopt_last_error(void);

/**
 * Built-in method by name: `euler`, `heun`, `rk3`, `rk4`. Null on error.
 */
struct RkoptTableau *rkopt_tableau_new_standard(const char *name);

/**
 * Custom explicit tableau; `a` is `stages × stages`, row-major.
 */
struct RkoptTableau *rkopt_tableau_new(size_t stages,
                                       const double *a,
                                       const double *b,
                                       uint32_t declared_order);

void rkopt_tableau_free(struct RkoptTableau *t);

/**
 * Number of stages, or 0 for a null handle.
 */
size_t rkopt_tableau_stages(const struct RkoptTableau *t);

/**
 * Whether the order conditions of `order` (1 or 2) hold.
 */
enum RkoptStatus rkopt_tableau_check_order(const struct RkoptTableau *t, uint32_t order, bool *out);

/**
 * `L(θ) = ½ Σ d_i θ_i²` with positive `diag`.
 */
struct RkoptProblem *rkopt_problem_quadratic(const double *diag, size_t dim);

/**
 * `L(θ) = ½ λ ‖θ‖²`.
 */
struct RkoptProblem *rkopt_problem_exp_decay(double lambda, size_t dim);

/**
 * `L(x, y) = (a - x)² + b (y - x²)²`.
 */
struct RkoptProblem *rkopt_problem_rosenbrock(double a, double b);

void rkopt_problem_free(struct RkoptProblem *p);

size_t rkopt_problem_dim(const struct RkoptProblem *p);

enum RkoptStatus rkopt_problem_loss(const struct RkoptProblem *p,
                                    const double *theta,
                                    size_t dim,
                                    double *out);

/**
 * One RK step `θ' = θ - h g*(θ, h)` on a built-in problem.
 */
enum RkoptStatus rkopt_rk_step(const struct RkoptTableau *t,
                               const struct RkoptProblem *p,
                               const double *theta,
                               size_t dim,
                               double h,
                               double *theta_out);

/**
 * One RK step on a gradient supplied by callback.
 */
enum RkoptStatus rkopt_rk_step_callback(const struct RkoptTableau *t,
                                        RkoptGradientFn grad,
                                        void *user_data,
                                        const double *theta,
                                        size_t dim,
                                        double h,
                                        double *theta_out);

/**
 * `c / (1 + (c/2) ratio^p)`.
 */
double rkopt_dalr_from_ratio(double ratio, double c, double p);

/**
 * `2 ratio^{-p}`; fails with `UnboundedRate` when `ratio = 0`.
 */
enum RkoptStatus rkopt_dal_from_ratio(double ratio, double p, double *out);

/**
 * DALR step size for a built-in problem at `theta`. `exact_hvp` selects
 * the analytic Hessian product instead of a finite difference.
 */
enum RkoptStatus rkopt_dalr(const struct RkoptProblem *p,
                            const double *theta,
                            size_t dim,
                            double c,
                            double power,
                            bool exact_hvp,
                            double *h_out);

/**
 * Builds an optimizer from `key=value` pairs separated by `;` or newlines,
 * using the `optimizer.*` keys of run configs without the prefix, e.g.
 * `"algorithm=rk_momentum; tableau=rk4; h=0.05; beta=0.9"`.
 */
struct RkoptOptimizer *rkopt_optimizer_new(const char *spec, size_t dim);

void rkopt_optimizer_free(struct RkoptOptimizer *o);

/**
 * Advances `theta` (in place) by one step of a callback objective.
 * `loss` may be null; `report` may be null.
 */
enum RkoptStatus rkopt_optimizer_step(struct RkoptOptimizer *o,
                                      RkoptGradientFn grad,
                                      RkoptLossFn loss,
                                      void *user_data,
                                      double *theta,
                                      size_t dim,
                                      struct RkoptStepReport *report);

/**
 * Advances `theta` (in place) by one step on a built-in problem.
 */
enum RkoptStatus rkopt_optimizer_step_problem(struct RkoptOptimizer *o,
                                              const struct RkoptProblem *p,
                                              double *theta,
                                              size_t dim,
                                              struct RkoptStepReport *report);

/**
 * Fitted slopes of euler, heun, rk3 and rk4 (in that order) on the default
 * step sizes. Returns `VerificationFailed` if any is outside tolerance.
 */
enum RkoptStatus rkopt_verify_orders(double *slopes_out);

/**
 * Runs the config file at `path`; a non-null `out_dir` overrides the
 * configured output directory.
 */
enum RkoptStatus rkopt_run_config(const char *path,
                                  const char *out_dir,
                                  struct RkoptRunSummary *summary);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RKOPT_H */
