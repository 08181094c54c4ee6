//! Seeded training runs with CSV telemetry.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{DatasetKind, RunConfig};
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::data::idx::split_paths;
use crate::data::synthetic::{blobs, BlobSpec};
use crate::data::{load_idx, subset, BatchPlan, BatchStream, DatasetSplit};
use crate::error::{Error, Result};
use crate::field::{AnalyticProblem, CountingOracle, GradientOracle};
use crate::model::{evaluate, init_params, MlpBatchOracle, MlpSpec};
use crate::optimizers::{Optimizer, StepReport};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Highest test accuracy seen; the earliest step wins ties.
    pub best_test_acc: Option<f64>,
    pub best_step: Option<u64>,
    pub best_train_acc: Option<f64>,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub final_train_acc: f64,
    pub final_test_acc: f64,
    pub steps_completed: u64,
    pub grad_evals: u64,
    pub diverged: bool,
    pub divergence: Option<String>,
    pub csv_path: PathBuf,
    /// Every recorded row, as written to the CSV.
    #[serde(skip)]
    pub records: Vec<MetricsRecord>,
    /// Loss on the step's batch at the start of each optimizer step.
    #[serde(skip)]
    pub step_losses: Vec<f64>,
}

/// Training data and model, or an analytic objective.
#[derive(Debug, Clone)]
pub enum Workload {
    Analytic {
        problem: AnalyticProblem,
        start: Vec<f64>,
    },
    Mlp {
        spec: MlpSpec,
        train: DatasetSplit,
        test: DatasetSplit,
        plan: BatchPlan,
    },
}

fn load_split(dir: &Path, train: bool, n: Option<usize>, seed: u64) -> Result<DatasetSplit> {
    let (i, l) = split_paths(dir, train);
    let split = load_idx(&i, &l)?;
    match n {
        Some(n) => subset(&split, n, seed),
        None => Ok(split),
    }
}

impl Workload {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        if cfg.dataset == DatasetKind::Synthetic && cfg.synthetic.is_analytic() {
            let problem = cfg.synthetic.problem()?;
            let start = cfg
                .synthetic
                .start
                .clone()
                .unwrap_or_else(|| problem.default_start());
            return Ok(Self::Analytic { problem, start });
        }
        let spec = cfg.mlp_spec()?;
        let (train, test) = match cfg.dataset {
            DatasetKind::Synthetic => {
                let s = &cfg.synthetic;
                let (tr, te) = blobs(
                    &BlobSpec {
                        classes: s.classes,
                        width: s.width,
                        spread: s.spread,
                    },
                    s.n_train,
                    s.n_test,
                    cfg.data.seed,
                )?;
                let tr = match cfg.data.subset_n {
                    Some(n) => subset(&tr, n, cfg.data.seed)?,
                    None => tr,
                };
                (tr, te)
            }
            _ => {
                let dir = cfg.data_dir();
                (
                    load_split(&dir, true, cfg.data.subset_n, cfg.data.seed)?,
                    load_split(&dir, false, cfg.data.test_subset_n, cfg.data.seed)?,
                )
            }
        };
        let plan = BatchPlan {
            batch_size: cfg.data.batch_size.unwrap_or(train.len()),
            shuffle_seed: cfg.seed,
            drop_last: cfg.data.drop_last,
        };
        Ok(Self::Mlp {
            spec,
            train,
            test,
            plan,
        })
    }

    fn initial_params(&self) -> Result<Vec<f64>> {
        match self {
            Self::Analytic { start, .. } => Ok(start.clone()),
            Self::Mlp { spec, .. } => Ok(init_params(spec)?.data),
        }
    }

    /// `(train_loss, test_loss, train_acc, test_acc)`.
    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64, f64, f64)> {
        match self {
            Self::Analytic { problem, .. } => {
                let l = problem.loss(theta)?;
                Ok((l, l, f64::NAN, f64::NAN))
            }
            Self::Mlp {
                spec, train, test, ..
            } => {
                let (trl, tra) = evaluate(spec, theta, &train.images, &train.labels)?;
                let (tel, tea) = evaluate(spec, theta, &test.images, &test.labels)?;
                Ok((trl, tel, tra, tea))
            }
        }
    }
}

fn counted_step<O: GradientOracle>(
    opt: &mut Optimizer,
    oracle: O,
    theta: &mut Vec<f64>,
) -> (Result<StepReport>, u64) {
    let counter = CountingOracle::new(oracle);
    let r = opt.step(&counter, theta);
    (r, counter.grad_evals())
}

/// Validates `cfg`, trains, and writes the CSV, a config snapshot and a
/// JSON summary into `cfg.out_dir`.
///
/// Divergence does not return an error: the partial CSV is kept and the
/// summary is flagged.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let workload = Workload::from_config(cfg)?;
    run_workload(cfg, &workload)
}

/// Like [`run`] with already loaded data; `cfg.dataset` and data keys are
/// not consulted.
pub fn run_workload(cfg: &RunConfig, workload: &Workload) -> Result<RunSummary> {
    let spec = cfg.optimizer_spec()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join(CONFIG_SNAPSHOT_FILE), cfg.to_kv())?;
    let csv_path = cfg.out_dir.join(METRICS_FILE);
    let mut writer = MetricsWriter::create(&csv_path)?;

    let mut theta = workload.initial_params()?;
    let mut opt = Optimizer::new(spec, theta.len())?;
    let mut stream = match workload {
        Workload::Mlp { plan, train, .. } if !plan.is_full_batch(train.len()) => {
            Some(BatchStream::new(*plan, train.len())?)
        }
        _ => None,
    };

    let clock = Instant::now();
    let mut records = Vec::new();
    let mut step_losses = Vec::with_capacity(cfg.steps as usize);
    let mut grad_evals = 0u64;
    let mut divergence: Option<String> = None;

    let mut record = |step: u64, rep: Option<&StepReport>, evals: u64, theta: &[f64]| -> Result<MetricsRecord> {
        let (train_loss, test_loss, train_acc, test_acc) = workload.evaluate(theta)?;
        let r = MetricsRecord {
            step,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            train_loss,
            test_loss,
            train_acc,
            test_acc,
            lr_effective: rep.map_or(f64::NAN, |r| r.lr_effective),
            grad_norm: rep.map_or(f64::NAN, |r| r.grad_norm),
            grad_evals_cum: evals,
        };
        writer.write(&r)?;
        Ok(r)
    };

    records.push(record(0, None, 0, &theta)?);
    let mut steps_completed = 0;
    for step in 1..=cfg.steps {
        let (result, evals) = match workload {
            Workload::Analytic { problem, .. } => counted_step(&mut opt, problem, &mut theta),
            Workload::Mlp {
                spec, train, ..
            } => match stream.as_mut() {
                None => {
                    let oracle = MlpBatchOracle::new(spec, &train.images, &train.labels)?;
                    counted_step(&mut opt, oracle, &mut theta)
                }
                Some(s) => {
                    let batch = train.select(&s.next_indices());
                    let oracle = MlpBatchOracle::new(spec, &batch.images, &batch.labels)?;
                    counted_step(&mut opt, oracle, &mut theta)
                }
            },
        };
        grad_evals += evals;
        let rep = match result {
            Ok(rep) => rep,
            Err(e @ Error::Divergence { .. }) => {
                divergence = Some(format!("step {step}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        steps_completed = step;
        step_losses.push(rep.loss);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let r = record(step, Some(&rep), grad_evals, &theta)?;
            records.push(r);
            if !r.train_loss.is_finite() {
                divergence = Some(format!("step {step}: non-finite training loss"));
                break;
            }
        }
    }

    let summary = summarize(records, step_losses, steps_completed, grad_evals, divergence, csv_path);
    std::fs::write(
        cfg.out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

/// Highest value with its step, skipping NaN; the earliest step wins ties.
pub fn best_by(records: &[MetricsRecord], key: impl Fn(&MetricsRecord) -> f64) -> Option<(f64, u64)> {
    let mut best: Option<(f64, u64)> = None;
    for r in records {
        let v = key(r);
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, r.step));
        }
    }
    best
}

fn summarize(
    records: Vec<MetricsRecord>,
    step_losses: Vec<f64>,
    steps_completed: u64,
    grad_evals: u64,
    divergence: Option<String>,
    csv_path: PathBuf,
) -> RunSummary {
    let best = best_by(&records, |r| r.test_acc);
    let last = records.last().copied();
    let pick = |f: fn(&MetricsRecord) -> f64| last.as_ref().map_or(f64::NAN, f);
    RunSummary {
        best_test_acc: best.map(|b| b.0),
        best_step: best.map(|b| b.1),
        best_train_acc: best_by(&records, |r| r.train_acc).map(|b| b.0),
        final_train_loss: pick(|r| r.train_loss),
        final_test_loss: pick(|r| r.test_loss),
        final_train_acc: pick(|r| r.train_acc),
        final_test_acc: pick(|r| r.test_acc),
        steps_completed,
        grad_evals,
        diverged: divergence.is_some(),
        divergence,
        csv_path,
        records,
        step_losses,
    }
}
