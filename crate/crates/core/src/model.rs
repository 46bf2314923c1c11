//! Multilayer-perceptron classifiers built on the tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::{Layout, ParamVector};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    He,
    Glorot,
}

/// Architecture and initialization of a fully connected classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input dimension, hidden widths, class count.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,
    pub seed: u64,
}

impl ModelSpec {
    pub fn mlp(layer_sizes: Vec<usize>, activation: Activation, init: InitScheme, seed: u64) -> Self {
        Self {
            layer_sizes,
            activation,
            init,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidModel("need at least input and output sizes".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "layer sizes must be positive: {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Segment table: `layer{i}.weight` as `[in, out]` then `layer{i}.bias`.
    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let mut entries = Vec::new();
        for (i, w) in self.layer_sizes.windows(2).enumerate() {
            entries.push((format!("layer{i}.weight"), vec![w[0], w[1]]));
            entries.push((format!("layer{i}.bias"), vec![w[1]]));
        }
        Layout::new(entries)
    }

    pub fn num_params(&self) -> Result<usize> {
        Ok(self.layout()?.total_len())
    }
}

/// Draws initial parameters from the seeded generator. Biases start at zero.
pub fn init_params(spec: &ModelSpec) -> Result<ParamVector> {
    let layout = spec.layout()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = vec![0.0; layout.total_len()];
    for seg in layout.segments().iter().filter(|s| s.shape.len() == 2) {
        let (fan_in, fan_out) = (seg.shape[0] as f64, seg.shape[1] as f64);
        let slot = &mut values[seg.offset..seg.offset + seg.size()];
        match spec.init {
            InitScheme::He => {
                let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                slot.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            }
            InitScheme::Glorot => {
                let bound = (6.0 / (fan_in + fan_out)).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                slot.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
            }
        }
    }
    ParamVector::new(layout, values)
}

fn check_params(spec: &ModelSpec, params: &ParamVector) -> Result<()> {
    let layout = spec.layout()?;
    if params.layout() != &layout {
        return Err(Error::Shape(format!(
            "parameters ({} values) do not match model layout ({} values)",
            params.len(),
            layout.total_len()
        )));
    }
    Ok(())
}

/// Records the network on a fresh tape and returns (tape, logits node).
fn build(spec: &ModelSpec, params: &ParamVector, inputs: &Tensor) -> Result<(Tape, crate::tape::NodeId)> {
    check_params(spec, params)?;
    let (_, d) = inputs.dims2()?;
    if d != spec.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have {d} features, model expects {}",
            spec.input_dim()
        )));
    }
    let mut tape = Tape::new();
    let p = tape.register_params(params)?;
    let mut h = tape.constant(inputs.clone());
    let layers = spec.num_layers();
    for l in 0..layers {
        let z = tape.matmul(h, p[2 * l])?;
        let z = tape.add_bias(z, p[2 * l + 1])?;
        h = if l + 1 < layers {
            match spec.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Relu => tape.relu(z),
            }
        } else {
            z
        };
        if !tape.value(h).all_finite() {
            return Err(Error::divergence(format!("forward (layer {l})")));
        }
    }
    Ok((tape, h))
}

/// Mean cross-entropy over the batch, with the tape that produced it.
pub fn forward(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<(f64, Tape)> {
    let (mut tape, logits) = build(spec, params, &batch.inputs)?;
    let per_row = tape.softmax_cross_entropy(logits, &batch.labels)?;
    let loss = tape.mean(per_row);
    tape.set_output(loss)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::divergence("forward (loss)"));
    }
    Ok((value, tape))
}

pub fn backward(tape: &mut Tape) -> Result<ParamVector> {
    tape.backward()
}

pub fn logits(spec: &ModelSpec, params: &ParamVector, inputs: &Tensor) -> Result<Tensor> {
    let (tape, out) = build(spec, params, inputs)?;
    Ok(tape.value(out).clone())
}

/// Arg-max class per row; ties go to the lowest index.
pub fn predict(spec: &ModelSpec, params: &ParamVector, inputs: &Tensor) -> Result<Vec<usize>> {
    let z = logits(spec, params, inputs)?;
    let c = spec.num_classes();
    Ok(z.data()
        .chunks(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                )
                .0
        })
        .collect())
}

pub fn error_rate(spec: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    let pred = predict(spec, params, &batch.inputs)?;
    let wrong = pred.iter().zip(&batch.labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / batch.len() as f64)
}

/// Mean cross-entropy of a fixed model on a fixed batch, as an [`Objective`].
#[derive(Debug, Clone, Copy)]
pub struct ModelLoss<'a> {
    pub spec: &'a ModelSpec,
    pub batch: &'a Batch,
}

impl<'a> ModelLoss<'a> {
    pub fn new(spec: &'a ModelSpec, batch: &'a Batch) -> Self {
        Self { spec, batch }
    }
}

impl Objective for ModelLoss<'_> {
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        Ok(forward(self.spec, params, self.batch)?.0)
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let (loss, mut tape) = forward(self.spec, params, self.batch)?;
        let g = tape.backward()?;
        if !g.all_finite() {
            return Err(Error::divergence("backward"));
        }
        Ok((loss, g))
    }
}
