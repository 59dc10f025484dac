//! Fully connected ReLU networks written out by hand.
//!
//! A network with widths `(d₀, d₁, …, d_l, d_{l+1})` computes
//! `A_l ∘ φ ∘ A_{l-1} ∘ … ∘ φ ∘ A_0` where each `A_i` is affine and `φ` is the
//! element-wise ReLU. No activation follows the last affine map.

mod checkpoint;
mod construct;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use construct::{affine_to_relu, closed_form_affine_fit, extend_depth_identity};
pub use train::{train, LrSchedule, Optimizer, TrainConfig, TrainReport};

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};

use crate::channel_model::SampleSet;
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Layer widths `(d₀, d₁, …, d_l, d_{l+1})`, input first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid(
                "a network needs at least input and output widths",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("all layer widths must be >= 1"));
        }
        Ok(Self { widths })
    }

    /// `d → width → … → width → d` with `depth` hidden layers.
    pub fn uniform(d: usize, width: usize, depth: usize) -> Result<Self> {
        let mut widths = vec![d];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(d);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// Number of hidden layers `l`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    /// Total hidden neuron count `Σ_{i=1..l} d_i`.
    pub fn hidden_neurons(&self) -> usize {
        self.widths[1..self.widths.len() - 1].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `d_{i+1} × d_i`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Row-wise `A Wᵀ + b`.
    fn apply_rows(&self, a: &Array2<f64>) -> Array2<f64> {
        let mut z = a.dot(&self.weight.t());
        z += &self.bias.view().insert_axis(Axis(0));
        z
    }
}

/// Network parameters `{(W_i, b_i)}`. Gradients use the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs(),
                    got: pair[1].inputs(),
                });
            }
        }
        for layer in &layers {
            if layer.bias.len() != layer.outputs() {
                return Err(Error::DimensionMismatch {
                    expected: layer.outputs(),
                    got: layer.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// All-zero parameters for `spec`.
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .widths()
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn spec(&self) -> MlpSpec {
        let mut widths = vec![self.layers[0].inputs()];
        widths.extend(self.layers.iter().map(Layer::outputs));
        MlpSpec { widths }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn hidden_neurons(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::outputs)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Every weight then bias, layer by layer.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn num_values(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// He initialization: `W ~ N(0, 2/fan_in)`, zero biases.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut params = MlpParams::zeros(spec);
    for layer in &mut params.layers {
        let std = (2.0 / layer.inputs() as f64).sqrt();
        for w in layer.weight.iter_mut() {
            *w = std * rng.gaussian();
        }
    }
    params
}

fn relu_inplace(z: &mut Array2<f64>) {
    z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// `f_θ(x)` for a single input.
pub fn forward(params: &MlpParams, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    let last = params.layers.len() - 1;
    let mut a = x.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = layer.weight.dot(&a) + &layer.bias;
        if i < last {
            z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
        a = z;
    }
    Ok(a)
}

/// `f_θ` applied to every row of `inputs`.
pub fn forward_rows(params: &MlpParams, inputs: &Array2<f64>) -> Result<Array2<f64>> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: inputs.ncols(),
        });
    }
    let last = params.layers.len() - 1;
    let mut a = inputs.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut z = layer.apply_rows(&a);
        if i < last {
            relu_inplace(&mut z);
        }
        a = z;
    }
    Ok(a)
}

/// Mean squared error `(1/|Z|) Σ ‖f_θ(x_m) − h_m‖²`.
pub fn loss(params: &MlpParams, set: &SampleSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let out = forward_rows(params, set.inputs())?;
    check_output_dim(params, set)?;
    let total: f64 = out
        .iter()
        .zip(set.targets().iter())
        .map(|(y, h)| (y - h).powi(2))
        .sum();
    Ok(total / set.len() as f64)
}

fn check_output_dim(params: &MlpParams, set: &SampleSet) -> Result<()> {
    if params.output_dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: params.output_dim(),
        });
    }
    Ok(())
}

/// Empirical loss on `batch` and its exact gradient by reverse-mode
/// differentiation. The ReLU derivative at exactly zero is taken as zero.
pub fn loss_and_gradient(params: &MlpParams, batch: &SampleSet) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if batch.dim() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: batch.dim(),
        });
    }
    check_output_dim(params, batch)?;
    let n = batch.len() as f64;
    let last = params.layers.len() - 1;

    // activations[i] is the input to layer i; pre-activations are kept to
    // build the ReLU masks on the way back.
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut pre: Vec<Array2<f64>> = Vec::with_capacity(last);
    activations.push(batch.inputs().clone());
    let mut out = Array2::zeros((0, 0));
    for (i, layer) in params.layers.iter().enumerate() {
        let z = layer.apply_rows(&activations[i]);
        if i < last {
            let mut a = z.clone();
            relu_inplace(&mut a);
            pre.push(z);
            activations.push(a);
        } else {
            out = z;
        }
    }

    let mut delta = out - batch.targets();
    let loss = delta.iter().map(|v| v * v).sum::<f64>() / n;
    delta *= 2.0 / n;

    let mut grads: Vec<Layer> = Vec::with_capacity(params.layers.len());
    for i in (0..params.layers.len()).rev() {
        let weight = delta.t().dot(&activations[i]);
        let bias = delta.sum_axis(Axis(0));
        if i > 0 {
            let mut back = delta.dot(&params.layers[i].weight);
            Zip::from(&mut back).and(&pre[i - 1]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
        grads.push(Layer { weight, bias });
    }
    grads.reverse();
    Ok((loss, MlpParams { layers: grads }))
}
