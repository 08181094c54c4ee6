//! Fully connected classifier with softmax cross-entropy loss.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`out × in`, row-major) followed by the bias (`out`).

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::{Tape, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::field::{check_dim, GradientOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            other => Err(invalid(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Relu => "relu",
            Self::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    #[default]
    HeUniform,
}

impl FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "he_uniform" => Ok(Self::HeUniform),
            other => Err(invalid(format!("unknown init scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    pub init_scheme: InitScheme,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            layer_widths: vec![784, 64, 64, 10],
            activation: Activation::Relu,
            init_seed: 0,
            init_scheme: InitScheme::HeUniform,
        }
    }
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation, init_seed: u64) -> Result<Self> {
        let spec = Self {
            layer_widths,
            activation,
            init_seed,
            init_scheme: InitScheme::HeUniform,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(invalid(format!(
                "an MLP needs input, at least one hidden and an output width; got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        if self.num_classes() > 256 {
            return Err(invalid("at most 256 output classes are supported"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_widths.last().expect("validated widths")
    }

    /// `(rows, cols)` of each weight and bias, in storage order.
    pub fn shape_table(&self) -> Vec<(usize, usize)> {
        self.layer_widths
            .windows(2)
            .flat_map(|w| [(w[1], w[0]), (w[1], 1)])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.shape_table().iter().map(|(r, c)| r * c).sum()
    }
}

/// Flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub data: Vec<f64>,
    pub shape_table: Vec<(usize, usize)>,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Slices of each weight/bias block, in storage order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.shape_table.len());
        let mut off = 0;
        for (r, c) in &self.shape_table {
            out.push(&self.data[off..off + r * c]);
            off += r * c;
        }
        out
    }
}

pub fn init_params(spec: &MlpSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    let mut data = Vec::with_capacity(spec.num_params());
    for w in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        data.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        data.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(ParamVector {
        data,
        shape_table: spec.shape_table(),
    })
}

fn check_batch(spec: &MlpSpec, theta: &[f64], inputs: &[f64], n: usize) -> Result<()> {
    check_dim(spec.num_params(), theta.len(), "parameter vector")?;
    if n == 0 {
        return Err(invalid("empty batch"));
    }
    if inputs.len() != n * spec.input_width() {
        return Err(invalid(format!(
            "batch of {} values is not {n} rows of width {}",
            inputs.len(),
            spec.input_width()
        )));
    }
    Ok(())
}

/// Builds the forward graph; returns the logits node and the parameter leaves.
fn forward(
    tape: &mut Tape,
    spec: &MlpSpec,
    theta: &[f64],
    inputs: &[f64],
    n: usize,
    requires_grad: bool,
) -> Result<(Var, Vec<Var>)> {
    let mut h = tape.leaf(Tensor::new(n, spec.input_width(), inputs.to_vec())?, false);
    let mut leaves = Vec::new();
    let mut off = 0;
    let layers = spec.layer_widths.len() - 1;
    for (l, w) in spec.layer_widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let wt = Tensor::new(fan_out, fan_in, theta[off..off + fan_in * fan_out].to_vec())?;
        off += fan_in * fan_out;
        let bt = Tensor::new(1, fan_out, theta[off..off + fan_out].to_vec())?;
        off += fan_out;
        let wv = tape.leaf(wt, requires_grad);
        let bv = tape.leaf(bt, requires_grad);
        leaves.push(wv);
        leaves.push(bv);
        let z = tape.matmul_t(h, wv)?;
        h = tape.add_bias(z, bv)?;
        if l + 1 < layers {
            h = match spec.activation {
                Activation::Relu => tape.relu(h),
                Activation::Tanh => tape.tanh(h),
            };
        }
    }
    Ok((h, leaves))
}

/// Class scores for each row of `inputs` (`n × classes`).
pub fn logits(spec: &MlpSpec, theta: &[f64], inputs: &[f64], n: usize) -> Result<Tensor> {
    check_batch(spec, theta, inputs, n)?;
    let mut tape = Tape::new();
    let (out, _) = forward(&mut tape, spec, theta, inputs, n, false)?;
    Ok(tape.value(out).clone())
}

/// Mean softmax cross-entropy on the batch.
pub fn loss(spec: &MlpSpec, theta: &[f64], inputs: &[f64], labels: &[u8]) -> Result<f64> {
    check_batch(spec, theta, inputs, labels.len())?;
    let mut tape = Tape::new();
    let (out, _) = forward(&mut tape, spec, theta, inputs, labels.len(), false)?;
    let l = tape.softmax_xent(out, labels)?;
    Ok(tape.value(l).data[0])
}

/// Mean softmax cross-entropy and its gradient.
pub fn loss_and_grad(
    spec: &MlpSpec,
    theta: &[f64],
    inputs: &[f64],
    labels: &[u8],
) -> Result<(f64, ParamVector)> {
    check_batch(spec, theta, inputs, labels.len())?;
    let mut tape = Tape::new();
    let (out, leaves) = forward(&mut tape, spec, theta, inputs, labels.len(), true)?;
    let l = tape.softmax_xent(out, labels)?;
    let loss = tape.value(l).data[0];
    let mut grads = tape.backward(l)?;
    let mut data = Vec::with_capacity(theta.len());
    for v in leaves {
        let g = grads.take(v).expect("parameter leaves require gradients");
        data.extend_from_slice(&g.data);
    }
    Ok((
        loss,
        ParamVector {
            data,
            shape_table: spec.shape_table(),
        },
    ))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(spec: &MlpSpec, theta: &[f64], inputs: &[f64], labels: &[u8]) -> Result<f64> {
    let z = logits(spec, theta, inputs, labels.len())?;
    Ok(accuracy_from_logits(&z, labels))
}

/// Loss and accuracy from one forward pass.
pub fn evaluate(spec: &MlpSpec, theta: &[f64], inputs: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    check_batch(spec, theta, inputs, labels.len())?;
    let mut tape = Tape::new();
    let (out, _) = forward(&mut tape, spec, theta, inputs, labels.len(), false)?;
    let acc = accuracy_from_logits(tape.value(out), labels);
    let l = tape.softmax_xent(out, labels)?;
    Ok((tape.value(l).data[0], acc))
}

pub fn accuracy_from_logits(z: &Tensor, labels: &[u8]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|(r, l)| argmax(z.row(*r)) == usize::from(**l))
        .count();
    correct as f64 / labels.len() as f64
}

/// The MLP loss on one fixed batch as a [`GradientOracle`].
#[derive(Debug, Clone, Copy)]
pub struct MlpBatchOracle<'a> {
    spec: &'a MlpSpec,
    inputs: &'a [f64],
    labels: &'a [u8],
}

impl<'a> MlpBatchOracle<'a> {
    pub fn new(spec: &'a MlpSpec, inputs: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        spec.validate()?;
        if labels.is_empty() || inputs.len() != labels.len() * spec.input_width() {
            return Err(invalid(format!(
                "batch of {} values and {} labels does not fit input width {}",
                inputs.len(),
                labels.len(),
                spec.input_width()
            )));
        }
        Ok(Self {
            spec,
            inputs,
            labels,
        })
    }
}

impl GradientOracle for MlpBatchOracle<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        loss(self.spec, theta, self.inputs, self.labels)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(loss_and_grad(self.spec, theta, self.inputs, self.labels)?.1.data)
    }

    fn loss_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (l, g) = loss_and_grad(self.spec, theta, self.inputs, self.labels)?;
        Ok((l, g.data))
    }
}
