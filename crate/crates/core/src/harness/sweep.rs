//! Cartesian grid sweeps over configuration keys.
//!
//! Grid files hold one `key = v1, v2, ...` line per axis (use `|` instead of
//! `,` when the values are themselves lists), or a JSON object mapping keys
//! to arrays.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use super::config::{kv_pairs, RunConfig};
use super::run::{run, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const GROUPS_FILE: &str = "sweep_groups.csv";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

fn split_values(v: &str) -> Vec<String> {
    let sep = if v.contains('|') { '|' } else { ',' };
    v.split(sep)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl Grid {
    pub fn parse_kv(text: &str) -> Result<Self> {
        let axes = kv_pairs(text)?
            .into_iter()
            .map(|(k, v)| (k, split_values(&v)))
            .collect();
        Self::checked(axes)
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid grid JSON: {e}")))?;
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Config("grid JSON must be an object".into()))?;
        let text_of = |v: &Value| match v {
            Value::String(s) => s.clone(),
            Value::Array(items) => items
                .iter()
                .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        let axes = obj
            .iter()
            .map(|(k, v)| {
                let vals = match v {
                    Value::Array(items) => items.iter().map(text_of).collect(),
                    other => vec![text_of(other)],
                };
                (k.clone(), vals)
            })
            .collect();
        Self::checked(axes)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{') {
            Self::parse_json(&text)
        } else {
            Self::parse_kv(&text)
        }
    }

    fn checked(axes: Vec<(String, Vec<String>)>) -> Result<Self> {
        for (k, v) in &axes {
            if v.is_empty() {
                return Err(Error::Config(format!("grid axis '{k}' has no values")));
            }
        }
        Ok(Self { axes })
    }

    pub fn has_axis(&self, key: &str) -> bool {
        self.axes.iter().any(|(k, _)| k == key)
    }

    /// Every combination, first axis varying slowest. An empty grid has one
    /// empty point.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Seed of run `index`: the base seed itself for run 0, otherwise an
/// independent stream of a generator seeded with the base.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    if index == 0 {
        return base;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub params: Vec<(String, String)>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub result: std::result::Result<RunSummary, String>,
}

#[derive(Debug, Clone)]
pub struct GroupStats {
    /// Grid values other than the seed.
    pub params: Vec<(String, String)>,
    pub runs: usize,
    pub mean_best_test_acc: f64,
    pub stderr_best_test_acc: f64,
    pub mean_final_train_loss: f64,
    pub stderr_final_train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub groups: Vec<GroupStats>,
}

/// Sample mean and standard error; the error is 0 for a single value and
/// both are NaN for none.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every grid point (in parallel) and writes per-run and per-group
/// CSVs into `base.out_dir`. Failed runs are recorded, not fatal.
pub fn sweep(base: &RunConfig, grid: &Grid) -> Result<SweepResult> {
    let points = grid.points();
    let seeded_by_grid = grid.has_axis("seed");
    let mut configs = Vec::with_capacity(points.len());
    for (index, params) in points.iter().enumerate() {
        let mut cfg = base.clone();
        for (k, v) in params {
            cfg.set(k, v)?;
        }
        if !seeded_by_grid {
            cfg.seed = derive_seed(base.seed, index);
        }
        cfg.out_dir = base.out_dir.join(format!("run-{index:03}"));
        configs.push(cfg);
    }
    std::fs::create_dir_all(&base.out_dir)?;

    let rows: Vec<SweepRow> = configs
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| SweepRow {
            index,
            params: points[index].clone(),
            seed: cfg.seed,
            out_dir: cfg.out_dir.clone(),
            result: run(cfg).map_err(|e| e.to_string()),
        })
        .collect();

    let groups = group_rows(&rows);
    write_rows(&base.out_dir.join(SWEEP_FILE), grid, &rows)?;
    write_groups(&base.out_dir.join(GROUPS_FILE), grid, &groups)?;
    Ok(SweepResult { rows, groups })
}

fn group_rows(rows: &[SweepRow]) -> Vec<GroupStats> {
    let mut groups: BTreeMap<Vec<(String, String)>, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let key: Vec<(String, String)> = r.params.iter().filter(|(k, _)| k != "seed").cloned().collect();
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, Vec::new(), Vec::new())
        });
        entry.0 += 1;
        if let Ok(s) = &r.result {
            entry.1.push(s.best_test_acc.unwrap_or(f64::NAN));
            entry.2.push(s.final_train_loss);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (runs, acc, loss) = &groups[&key];
            let acc: Vec<f64> = acc.iter().copied().filter(|v| !v.is_nan()).collect();
            let (ma, sa) = mean_stderr(&acc);
            let (ml, sl) = mean_stderr(loss);
            GroupStats {
                params: key,
                runs: *runs,
                mean_best_test_acc: ma,
                stderr_best_test_acc: sa,
                mean_final_train_loss: ml,
                stderr_final_train_loss: sl,
            }
        })
        .collect()
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_rows(path: &Path, grid: &Grid, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run".to_string()];
    header.extend(grid.axes.iter().map(|(k, _)| k.clone()).filter(|k| k != "seed"));
    header.extend(
        [
            "seed",
            "best_test_acc",
            "best_step",
            "final_train_loss",
            "final_test_loss",
            "steps_completed",
            "diverged",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.index.to_string()];
        rec.extend(r.params.iter().filter(|(k, _)| k != "seed").map(|(_, v)| v.clone()));
        rec.push(r.seed.to_string());
        match &r.result {
            Ok(s) => rec.extend([
                opt_num(s.best_test_acc),
                s.best_step.map_or_else(String::new, |v| v.to_string()),
                s.final_train_loss.to_string(),
                s.final_test_loss.to_string(),
                s.steps_completed.to_string(),
                s.diverged.to_string(),
                s.divergence.clone().unwrap_or_default(),
            ]),
            Err(e) => rec.extend([
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "0".into(),
                "false".into(),
                e.clone(),
            ]),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_groups(path: &Path, grid: &Grid, groups: &[GroupStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = grid.axes.iter().map(|(k, _)| k.clone()).filter(|k| k != "seed").collect();
    header.extend(
        [
            "runs",
            "mean_best_test_acc",
            "stderr_best_test_acc",
            "mean_final_train_loss",
            "stderr_final_train_loss",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for g in groups {
        let mut rec: Vec<String> = g.params.iter().map(|(_, v)| v.clone()).collect();
        rec.extend([
            g.runs.to_string(),
            g.mean_best_test_acc.to_string(),
            g.stderr_best_test_acc.to_string(),
            g.mean_final_train_loss.to_string(),
            g.stderr_final_train_loss.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
