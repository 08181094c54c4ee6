//! Run configuration.
//!
//! Files are either flat `key = value` lines with optional `[section]`
//! headers that prefix keys (`[optimizer]` then `h = 0.1` sets
//! `optimizer.h`), or a JSON object whose nesting is flattened the same way.
//! Lists are comma separated. `#` starts a comment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::data::idx::split_paths;
use crate::error::{Error, Result};
use crate::field::{AnalyticProblem, HvpMethod};
use crate::model::{Activation, InitScheme, MlpSpec};
use crate::optimizers::{Algorithm, AlgorithmKind, LrSchedule, OptimizerSpec};
use crate::step_control::DalConfig;
use crate::tableau::ButcherTableau;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Synthetic,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::FashionMnist => "fashion_mnist",
            Self::Synthetic => "synthetic",
        }
    }

    pub fn default_dir(self) -> PathBuf {
        PathBuf::from("data").join(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Self::Mnist),
            "fashion_mnist" => Ok(Self::FashionMnist),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(cfg_err(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Quadratic,
    ExpDecay,
    Rosenbrock,
    /// Gaussian blobs classified by the MLP.
    Blobs,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::ExpDecay => "exp_decay",
            Self::Rosenbrock => "rosenbrock",
            Self::Blobs => "blobs",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(Self::Quadratic),
            "exp_decay" => Ok(Self::ExpDecay),
            "rosenbrock" => Ok(Self::Rosenbrock),
            "blobs" => Ok(Self::Blobs),
            other => Err(cfg_err(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub dim: usize,
    pub lambda: f64,
    /// Quadratic diagonal; all ones when absent.
    pub diag: Option<Vec<f64>>,
    pub a: f64,
    pub b: f64,
    pub start: Option<Vec<f64>>,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: u8,
    pub width: usize,
    pub spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Quadratic,
            dim: 2,
            lambda: 1.0,
            diag: None,
            a: 1.0,
            b: 100.0,
            start: None,
            n_train: 512,
            n_test: 512,
            classes: 10,
            width: 784,
            spread: 0.5,
        }
    }
}

impl SyntheticConfig {
    pub fn is_analytic(&self) -> bool {
        self.kind != SyntheticKind::Blobs
    }

    pub fn problem(&self) -> Result<AnalyticProblem> {
        Ok(match self.kind {
            SyntheticKind::Quadratic => {
                AnalyticProblem::quadratic(self.diag.clone().unwrap_or_else(|| vec![1.0; self.dim]))?
            }
            SyntheticKind::ExpDecay => AnalyticProblem::exp_decay_dim(self.lambda, self.dim)?,
            SyntheticKind::Rosenbrock => AnalyticProblem::rosenbrock(self.a, self.b)?,
            SyntheticKind::Blobs => return Err(cfg_err("blobs is not an analytic problem")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    /// Stratified training subset size; `None` keeps the whole split.
    pub subset_n: Option<usize>,
    pub test_subset_n: Option<usize>,
    /// Seed for subsetting, independent of the run seed.
    pub seed: u64,
    /// `None` trains on the full batch.
    pub batch_size: Option<usize>,
    pub drop_last: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            subset_n: None,
            test_subset_n: None,
            seed: 0,
            batch_size: None,
            drop_last: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = MlpSpec::default();
        Self {
            widths: d.layer_widths,
            activation: d.activation,
            init: d.init_scheme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Constant,
    Cosine,
}

/// Optimizer keys as written in the file; turned into an [`OptimizerSpec`]
/// once the whole file is read.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: AlgorithmKind,
    pub tableau: Option<String>,
    pub h: f64,
    pub beta: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub schedule: ScheduleKind,
    pub dal_p: Option<f64>,
    pub dal_c: Option<f64>,
    pub dal_hvp: Option<HvpMethod>,
    pub dal_delta: Option<f64>,
    pub dal_fallback_h: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmKind::VanillaRk,
            tableau: None,
            h: 0.1,
            beta: None,
            beta1: None,
            beta2: None,
            eps: None,
            schedule: ScheduleKind::Constant,
            dal_p: None,
            dal_c: None,
            dal_hvp: None,
            dal_delta: None,
            dal_fallback_h: None,
        }
    }
}

/// `euler`, `heun`, `rk3`, `rk4`, or `rk2:<alpha>` for the two-stage family.
pub fn parse_tableau(s: &str) -> Result<ButcherTableau> {
    match s.strip_prefix("rk2:") {
        Some(alpha) => ButcherTableau::second_order_family(parse_num(alpha)?),
        None => ButcherTableau::by_name(s),
    }
}

impl OptimizerConfig {
    pub fn to_spec(&self, steps: u64) -> Result<OptimizerSpec> {
        use AlgorithmKind as K;
        let k = self.algorithm;
        let forbid = |set: bool, key: &str| -> Result<()> {
            if set {
                Err(cfg_err(format!("optimizer.{key} does not apply to {k}")))
            } else {
                Ok(())
            }
        };
        let dal_set = self.dal_p.is_some()
            || self.dal_c.is_some()
            || self.dal_hvp.is_some()
            || self.dal_delta.is_some()
            || self.dal_fallback_h.is_some();
        forbid(!k.uses_tableau() && self.tableau.is_some(), "tableau")?;
        forbid(
            !matches!(k, K::RkMomentum | K::SgdMomentum) && self.beta.is_some(),
            "beta",
        )?;
        forbid(k != K::Adam && (self.beta1.is_some() || self.beta2.is_some()), "beta1/beta2")?;
        forbid(!matches!(k, K::Adam | K::RkPrecondAdagrad) && self.eps.is_some(), "eps")?;
        forbid(k != K::RkDalr && dal_set, "dal")?;

        let tableau = || parse_tableau(self.tableau.as_deref().unwrap_or("rk4"));
        let algorithm = match k {
            K::VanillaRk => Algorithm::VanillaRk { tableau: tableau()? },
            K::RkPrecondAdagrad => Algorithm::RkPrecondAdagrad {
                tableau: tableau()?,
                eps: self.eps.unwrap_or(1e-8),
            },
            K::RkPrecondModified => Algorithm::RkPrecondModified { tableau: tableau()? },
            K::RkDalr => {
                let d = DalConfig::default();
                Algorithm::RkDalr {
                    tableau: tableau()?,
                    dal: DalConfig {
                        p: self.dal_p.unwrap_or(d.p),
                        c: self.dal_c.unwrap_or(d.c),
                        hvp_method: self.dal_hvp.unwrap_or(d.hvp_method),
                        delta: self.dal_delta.unwrap_or(d.delta),
                        fallback_h: self.dal_fallback_h.unwrap_or(d.fallback_h),
                    },
                }
            }
            K::RkMomentum => Algorithm::RkMomentum {
                tableau: tableau()?,
                beta: self.beta.unwrap_or(0.9),
            },
            K::Adam => {
                let Algorithm::Adam { beta1, beta2, eps } = Algorithm::adam_default() else {
                    unreachable!()
                };
                Algorithm::Adam {
                    beta1: self.beta1.unwrap_or(beta1),
                    beta2: self.beta2.unwrap_or(beta2),
                    eps: self.eps.unwrap_or(eps),
                }
            }
            K::SgdMomentum => Algorithm::SgdMomentum {
                beta: self.beta.unwrap_or(0.9),
            },
        };
        let spec = OptimizerSpec {
            algorithm,
            lr: self.h,
            schedule: match self.schedule {
                ScheduleKind::Constant => LrSchedule::Constant,
                ScheduleKind::Cosine => LrSchedule::Cosine { total_steps: steps },
            },
        };
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub steps: u64,
    pub eval_every: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Synthetic,
            data: DataConfig::default(),
            synthetic: SyntheticConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            steps: 100,
            eval_every: 10,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| cfg_err(format!("cannot parse '{}': {e}", s.trim())))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_num).collect()
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(cfg_err(format!("expected a boolean, got '{other}'"))),
    }
}

/// `all`/`full` map to `None`.
fn parse_opt_count(s: &str) -> Result<Option<usize>> {
    match s.trim() {
        "all" | "full" => Ok(None),
        v => parse_num(v).map(Some),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one dotted key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let wrap = |e: Error| match e {
            Error::Config(m) => cfg_err(format!("{key}: {m}")),
            other => cfg_err(format!("{key}: {other}")),
        };
        self.set_inner(key.trim(), v).map_err(wrap)
    }

    fn set_inner(&mut self, key: &str, v: &str) -> Result<()> {
        let opt = |v: &str| -> Result<Option<f64>> { parse_num(v).map(Some) };
        match key {
            "dataset" => self.dataset = v.parse()?,
            "steps" => self.steps = parse_num(v)?,
            "eval_every" => self.eval_every = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),

            "data.dir" => self.data.dir = Some(PathBuf::from(v)),
            "data.subset_n" => self.data.subset_n = parse_opt_count(v)?,
            "data.test_subset_n" => self.data.test_subset_n = parse_opt_count(v)?,
            "data.seed" => self.data.seed = parse_num(v)?,
            "data.batch_size" => self.data.batch_size = parse_opt_count(v)?,
            "data.drop_last" => self.data.drop_last = parse_bool(v)?,

            "synthetic.kind" => self.synthetic.kind = v.parse()?,
            "synthetic.dim" => self.synthetic.dim = parse_num(v)?,
            "synthetic.lambda" => self.synthetic.lambda = parse_num(v)?,
            "synthetic.diag" => self.synthetic.diag = Some(parse_list(v)?),
            "synthetic.a" => self.synthetic.a = parse_num(v)?,
            "synthetic.b" => self.synthetic.b = parse_num(v)?,
            "synthetic.start" => self.synthetic.start = Some(parse_list(v)?),
            "synthetic.n_train" => self.synthetic.n_train = parse_num(v)?,
            "synthetic.n_test" => self.synthetic.n_test = parse_num(v)?,
            "synthetic.classes" => self.synthetic.classes = parse_num(v)?,
            "synthetic.width" => self.synthetic.width = parse_num(v)?,
            "synthetic.spread" => self.synthetic.spread = parse_num(v)?,

            "model.widths" => self.model.widths = parse_list(v)?,
            "model.activation" => self.model.activation = v.parse()?,
            "model.init" => self.model.init = v.parse()?,

            "optimizer.algorithm" => self.optimizer.algorithm = v.parse()?,
            "optimizer.tableau" => {
                parse_tableau(v)?;
                self.optimizer.tableau = Some(v.to_string());
            }
            "optimizer.h" | "optimizer.lr" => self.optimizer.h = parse_num(v)?,
            "optimizer.beta" => self.optimizer.beta = opt(v)?,
            "optimizer.beta1" => self.optimizer.beta1 = opt(v)?,
            "optimizer.beta2" => self.optimizer.beta2 = opt(v)?,
            "optimizer.eps" => self.optimizer.eps = opt(v)?,
            "optimizer.schedule" => {
                self.optimizer.schedule = match v {
                    "constant" => ScheduleKind::Constant,
                    "cosine" => ScheduleKind::Cosine,
                    other => return Err(cfg_err(format!("unknown schedule '{other}'"))),
                }
            }
            "optimizer.dal.p" => self.optimizer.dal_p = opt(v)?,
            "optimizer.dal.c" => self.optimizer.dal_c = opt(v)?,
            "optimizer.dal.hvp" => self.optimizer.dal_hvp = Some(v.parse()?),
            "optimizer.dal.delta" => self.optimizer.dal_delta = opt(v)?,
            "optimizer.dal.fallback_h" => self.optimizer.dal_fallback_h = opt(v)?,
            other => return Err(cfg_err(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` text on top of the defaults.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in kv_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in flatten_json(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Reads a config file; JSON when the extension is `.json` or the text
    /// starts with `{`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{') {
            Self::parse_json(&text)
        } else {
            Self::parse_kv(&text)
        }
    }

    pub fn mlp_spec(&self) -> Result<MlpSpec> {
        let mut widths = self.model.widths.clone();
        if self.dataset == DatasetKind::Synthetic && !self.synthetic.is_analytic() {
            if let Some(first) = widths.first_mut() {
                *first = self.synthetic.width;
            }
            if let Some(last) = widths.last_mut() {
                *last = usize::from(self.synthetic.classes);
            }
        }
        let spec = MlpSpec {
            layer_widths: widths,
            activation: self.model.activation,
            init_seed: self.seed,
            init_scheme: self.model.init,
        };
        spec.validate().map_err(|e| cfg_err(format!("model: {e}")))?;
        Ok(spec)
    }

    pub fn optimizer_spec(&self) -> Result<OptimizerSpec> {
        self.optimizer.to_spec(self.steps)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.dataset.default_dir())
    }

    pub fn uses_mlp(&self) -> bool {
        self.dataset != DatasetKind::Synthetic || !self.synthetic.is_analytic()
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(cfg_err("steps must be positive"));
        }
        if self.eval_every == 0 {
            return Err(cfg_err("eval_every must be positive"));
        }
        if self.steps < self.eval_every {
            return Err(cfg_err(format!(
                "steps ({}) must be at least eval_every ({})",
                self.steps, self.eval_every
            )));
        }
        self.optimizer_spec()?;
        if self.data.batch_size == Some(0) {
            return Err(cfg_err("data.batch_size must be positive"));
        }
        match self.dataset {
            DatasetKind::Synthetic if self.synthetic.is_analytic() => {
                let p = self.synthetic.problem().map_err(|e| cfg_err(format!("synthetic: {e}")))?;
                if let Some(start) = &self.synthetic.start {
                    use crate::field::GradientOracle;
                    if start.len() != p.dim() {
                        return Err(cfg_err(format!(
                            "synthetic.start has {} entries, problem has dimension {}",
                            start.len(),
                            p.dim()
                        )));
                    }
                }
            }
            DatasetKind::Synthetic => {
                self.mlp_spec()?;
                if self.synthetic.n_train == 0 || self.synthetic.n_test == 0 {
                    return Err(cfg_err("synthetic.n_train and synthetic.n_test must be positive"));
                }
            }
            DatasetKind::Mnist | DatasetKind::FashionMnist => {
                let spec = self.mlp_spec()?;
                if spec.input_width() != 784 || spec.num_classes() != 10 {
                    return Err(cfg_err("MNIST-style data needs model widths 784 ... 10"));
                }
                let dir = self.data_dir();
                for train in [true, false] {
                    let (i, l) = split_paths(&dir, train);
                    for p in [i, l] {
                        if !p.exists() {
                            return Err(cfg_err(format!(
                                "missing data file {} (try `rkopt fetch-data`)",
                                p.display()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let count = |c: Option<usize>| c.map_or("all".to_string(), |n| n.to_string());
        put("dataset", self.dataset.as_str().into());
        put("steps", self.steps.to_string());
        put("eval_every", self.eval_every.to_string());
        put("seed", self.seed.to_string());
        put("out_dir", self.out_dir.display().to_string());
        if let Some(d) = &self.data.dir {
            put("data.dir", d.display().to_string());
        }
        put("data.subset_n", count(self.data.subset_n));
        put("data.test_subset_n", count(self.data.test_subset_n));
        put("data.seed", self.data.seed.to_string());
        put("data.batch_size", count(self.data.batch_size));
        put("data.drop_last", self.data.drop_last.to_string());
        let sy = &self.synthetic;
        put("synthetic.kind", sy.kind.as_str().into());
        put("synthetic.dim", sy.dim.to_string());
        put("synthetic.lambda", sy.lambda.to_string());
        if let Some(d) = &sy.diag {
            put("synthetic.diag", join(d));
        }
        put("synthetic.a", sy.a.to_string());
        put("synthetic.b", sy.b.to_string());
        if let Some(st) = &sy.start {
            put("synthetic.start", join(st));
        }
        put("synthetic.n_train", sy.n_train.to_string());
        put("synthetic.n_test", sy.n_test.to_string());
        put("synthetic.classes", sy.classes.to_string());
        put("synthetic.width", sy.width.to_string());
        put("synthetic.spread", sy.spread.to_string());
        put("model.widths", join(&self.model.widths));
        put("model.activation", self.model.activation.to_string());
        put("model.init", "he_uniform".into());
        let o = &self.optimizer;
        put("optimizer.algorithm", o.algorithm.as_str().into());
        if let Some(t) = &o.tableau {
            put("optimizer.tableau", t.clone());
        }
        put("optimizer.h", o.h.to_string());
        let opts = [
            ("optimizer.beta", o.beta),
            ("optimizer.beta1", o.beta1),
            ("optimizer.beta2", o.beta2),
            ("optimizer.eps", o.eps),
            ("optimizer.dal.p", o.dal_p),
            ("optimizer.dal.c", o.dal_c),
            ("optimizer.dal.delta", o.dal_delta),
            ("optimizer.dal.fallback_h", o.dal_fallback_h),
        ];
        for (k, v) in opts {
            if let Some(v) = v {
                put(k, v.to_string());
            }
        }
        if let Some(m) = o.dal_hvp {
            put("optimizer.dal.hvp", m.to_string());
        }
        put(
            "optimizer.schedule",
            match o.schedule {
                ScheduleKind::Constant => "constant",
                ScheduleKind::Cosine => "cosine",
            }
            .into(),
        );
        s
    }
}

/// `(dotted key, value)` pairs of a `key = value` file, in order.
pub fn kv_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(format!("line {}: unterminated section header", no + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected key = value", no + 1)))?;
        let key = if section.is_empty() {
            k.trim().to_string()
        } else {
            format!("{section}.{}", k.trim())
        };
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn scalar_text(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Null => Ok("all".into()),
        Value::Array(items) => Ok(items
            .iter()
            .map(scalar_text)
            .collect::<Result<Vec<_>>>()?
            .join(",")),
        Value::Object(_) => Err(cfg_err("nested object where a value was expected")),
    }
}

fn flatten_value(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) -> Result<()> {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_value(&key, child, out)?;
            }
            Ok(())
        }
        other => {
            out.push((prefix.to_string(), scalar_text(other)?));
            Ok(())
        }
    }
}

/// Dotted `(key, value)` pairs of a JSON object.
pub fn flatten_json(text: &str) -> Result<Vec<(String, String)>> {
    let v: Value = serde_json::from_str(text).map_err(|e| cfg_err(format!("invalid JSON: {e}")))?;
    if !v.is_object() {
        return Err(cfg_err("JSON config must be an object"));
    }
    let mut out = Vec::new();
    flatten_value("", &v, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let text = "
            # quadratic smoke test
            dataset = synthetic
            steps = 50   # inline comment
            [optimizer]
            algorithm = rk_momentum
            h = 0.05
            beta = 0.95
            [synthetic]
            diag = 1, 2, 3
        ";
        let c = RunConfig::parse_kv(text).unwrap();
        assert_eq!(c.steps, 50);
        assert_eq!(c.optimizer.algorithm, AlgorithmKind::RkMomentum);
        assert_eq!(c.optimizer.h, 0.05);
        assert_eq!(c.synthetic.diag, Some(vec![1.0, 2.0, 3.0]));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_matches_kv() {
        let kv = RunConfig::parse_kv("steps = 20\neval_every = 5\noptimizer.h = 0.2\nmodel.widths = 4,3,2").unwrap();
        let js = RunConfig::parse_json(
            r#"{"steps": 20, "eval_every": 5, "optimizer": {"h": 0.2}, "model": {"widths": [4, 3, 2]}}"#,
        )
        .unwrap();
        assert_eq!(kv, js);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.set("optimizer.algorithm", "rk_dalr").unwrap();
        c.set("optimizer.dal.c", "0.5").unwrap();
        c.set("optimizer.dal.hvp", "exact").unwrap();
        c.set("synthetic.start", "0.5,-1").unwrap();
        c.set("data.batch_size", "16").unwrap();
        let back = RunConfig::parse_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(RunConfig::parse_kv("steps = 0").unwrap().validate(), Err(Error::Config(_))));
        assert!(RunConfig::parse_kv("steps = 5\neval_every = 10").unwrap().validate().is_err());
        assert!(RunConfig::parse_kv("nonsense = 1").is_err());
        assert!(RunConfig::parse_kv("steps = many").is_err());
        assert!(RunConfig::parse_kv("optimizer.tableau = rk5").is_err());
        assert!(RunConfig::parse_kv("no equals sign").is_err());
        // Fields that do not belong to the algorithm.
        let c = RunConfig::parse_kv("optimizer.beta = 0.9").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse_kv("optimizer.algorithm = adam\noptimizer.tableau = rk4").unwrap();
        assert!(c.validate().is_err());
        let c = RunConfig::parse_kv("dataset = mnist\ndata.dir = /nonexistent").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn builds_optimizer_specs() {
        let c = RunConfig::parse_kv("optimizer.algorithm = rk_precond_adagrad\noptimizer.tableau = rk2:0.75\noptimizer.eps = 1").unwrap();
        let s = c.optimizer_spec().unwrap();
        match s.algorithm {
            Algorithm::RkPrecondAdagrad { tableau, eps } => {
                assert_eq!(tableau.stages(), 2);
                assert_eq!(eps, 1.0);
            }
            other => panic!("{other:?}"),
        }
        let c = RunConfig::parse_kv("optimizer.algorithm = adam\noptimizer.h = 0.001\noptimizer.schedule = cosine").unwrap();
        assert_eq!(
            c.optimizer_spec().unwrap().schedule,
            LrSchedule::Cosine { total_steps: 100 }
        );
    }
}
