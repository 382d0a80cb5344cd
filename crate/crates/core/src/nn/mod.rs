//! Small feed-forward networks with hand-written reverse mode: dense layers,
//! ReLU, sigmoid and batch normalization.
//!
//! Batches are row-major `(batch, features)` matrices. Every trainable tensor
//! is an `Array2`; biases and batch-norm scale/shift are `1 x width`.

mod adam;
mod check;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use check::finite_diff_check;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `(inputs, outputs)`.
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Dense {
    /// Weights and biases uniform in `[-scale, scale]`.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |r: usize, c: usize| {
            Array2::from_shape_simple_fn((r, c), || rng.random_range(-scale..=scale))
        };
        let weight = draw(inputs, outputs);
        let bias = draw(1, outputs);
        Self { weight, bias }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array2::ones((1, width)),
            beta: Array2::zeros((1, width)),
            running_mean: Array2::zeros((1, width)),
            running_var: Array2::ones((1, width)),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Relu,
    Sigmoid,
    BatchNorm(BatchNorm),
}

impl Layer {
    fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::BatchNorm(_) => "batch_norm",
        }
    }
}

#[derive(Clone, Debug)]
enum Cache {
    Dense { input: Array2<f64> },
    Relu { output: Array2<f64> },
    Sigmoid { output: Array2<f64> },
    BatchNorm { normalized: Array2<f64>, inv_std: Array2<f64>, batch_stats: bool },
}

/// Per-parameter gradients, aligned with [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet(pub Vec<Array2<f64>>);

impl GradientSet {
    pub fn zeros_like(params: &[&Array2<f64>]) -> Self {
        Self(params.iter().map(|p| Array2::zeros(p.raw_dim())).collect())
    }

    pub fn concat(sets: Vec<GradientSet>) -> Self {
        Self(sets.into_iter().flat_map(|g| g.0).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub struct Backward {
    pub grads: GradientSet,
    /// Gradient with respect to the network input.
    pub input_grad: Array2<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    mode: Mode,
    input_width: usize,
    #[serde(skip)]
    cache: Option<Vec<Cache>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.mode == other.mode && self.input_width == other.input_width
    }
}

/// Incremental constructor that tracks layer widths.
pub struct NetworkBuilder<'r, R> {
    layers: Vec<Layer>,
    input_width: usize,
    width: usize,
    rng: &'r mut R,
}

impl<'r, R: Rng> NetworkBuilder<'r, R> {
    pub fn new(input_width: usize, rng: &'r mut R) -> Self {
        Self {
            layers: Vec::new(),
            input_width,
            width: input_width,
            rng,
        }
    }

    /// Dense layer initialised uniform in `±1/sqrt(fan_in)`.
    pub fn dense(self, outputs: usize) -> Self {
        let scale = 1.0 / (self.width as f64).sqrt();
        self.dense_scaled(outputs, scale)
    }

    pub fn dense_scaled(mut self, outputs: usize, scale: f64) -> Self {
        let layer = Dense::uniform(self.width, outputs, scale, self.rng);
        self.layers.push(Layer::Dense(layer));
        self.width = outputs;
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn sigmoid(mut self) -> Self {
        self.layers.push(Layer::Sigmoid);
        self
    }

    pub fn batch_norm(mut self) -> Self {
        self.layers.push(Layer::BatchNorm(BatchNorm::new(self.width)));
        self
    }

    pub fn build(self) -> Network {
        Network {
            layers: self.layers,
            mode: Mode::Train,
            input_width: self.input_width,
            cache: None,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Network {
    pub fn from_layers(input_width: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_width;
        for layer in &layers {
            match layer {
                Layer::Dense(d) => {
                    if d.weight.nrows() != width || d.bias.dim() != (1, d.weight.ncols()) {
                        return Err(Error::ShapeMismatch(format!(
                            "dense layer expects {} inputs, previous width is {width}",
                            d.weight.nrows()
                        )));
                    }
                    width = d.weight.ncols();
                }
                Layer::BatchNorm(b) => {
                    if b.gamma.dim() != (1, width) || b.beta.dim() != (1, width) {
                        return Err(Error::ShapeMismatch(format!("batch norm width {width}")));
                    }
                }
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        Ok(Self {
            layers,
            mode: Mode::Train,
            input_width,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.weight.ncols()),
                _ => None,
            })
            .unwrap_or(self.input_width)
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.extend([&d.weight, &d.bias]),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => out.extend([&mut d.weight, &mut d.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_width {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_width
            )));
        }
        Ok(())
    }

    /// Forward pass that records activations for [`Network::backward`] and,
    /// in train mode, updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let out = run(&mut self.layers, self.mode, x.clone(), &mut caches);
        self.cache = Some(caches);
        Ok(out)
    }

    /// Side-effect free evaluation using the current mode's statistics.
    pub fn output(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.output_in(x, self.mode)
    }

    pub fn output_in(&self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(run_ref(&self.layers, mode, x.clone()))
    }

    /// Reverse pass for the most recent [`Network::forward`]: gradients of
    /// `sum(output * upstream)` with respect to every parameter and the input.
    pub fn backward(&mut self, upstream: &Array2<f64>) -> Result<Backward> {
        let caches = self.cache.take().ok_or(Error::NoRecordedForward)?;
        let mut grad = upstream.clone();
        let mut per_layer: Vec<Vec<Array2<f64>>> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(&caches).rev() {
            match (layer, cache) {
                (Layer::Dense(d), Cache::Dense { input }) => {
                    if grad.dim() != (input.nrows(), d.weight.ncols()) {
                        return Err(Error::ShapeMismatch(format!(
                            "upstream gradient {:?} vs layer output ({}, {})",
                            grad.dim(),
                            input.nrows(),
                            d.weight.ncols()
                        )));
                    }
                    let dw = input.t().dot(&grad);
                    let db = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grad = grad.dot(&d.weight.t());
                    per_layer.push(vec![dw, db]);
                }
                (Layer::Relu, Cache::Relu { output }) => {
                    grad.zip_mut_with(output, |g, &y| {
                        if y <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
                (Layer::Sigmoid, Cache::Sigmoid { output }) => {
                    grad.zip_mut_with(output, |g, &y| *g *= y * (1.0 - y));
                }
                (
                    Layer::BatchNorm(b),
                    Cache::BatchNorm {
                        normalized,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let dgamma = (&grad * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dxhat = &grad * &b.gamma;
                    grad = if *batch_stats {
                        let n = grad.nrows() as f64;
                        let sum_dxhat = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                        let sum_dxhat_xhat =
                            (&dxhat * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                        (&dxhat * n - &sum_dxhat - normalized * &sum_dxhat_xhat) * inv_std / n
                    } else {
                        dxhat * inv_std
                    };
                    per_layer.push(vec![dgamma, dbeta]);
                }
                _ => unreachable!("cache recorded by the same layer list"),
            }
        }
        per_layer.reverse();
        Ok(Backward {
            grads: GradientSet(per_layer.into_iter().flatten().collect()),
            input_grad: grad,
        })
    }

    fn same_architecture(&self, other: &Network) -> Result<()> {
        let shapes = |n: &Network| {
            n.layers
                .iter()
                .map(|l| l.kind())
                .collect::<Vec<_>>()
                .join(",")
                + &n.params().iter().map(|p| format!("{:?}", p.dim())).collect::<String>()
        };
        if self.input_width != other.input_width || shapes(self) != shapes(other) {
            return Err(Error::ArchitectureMismatch(format!(
                "[{}] vs [{}]",
                shapes(self),
                shapes(other)
            )));
        }
        Ok(())
    }

    /// `self <- tau * online + (1 - tau) * self` for every parameter and
    /// batch-norm running statistic.
    pub fn soft_update_from(&mut self, online: &Network, tau: f64) -> Result<()> {
        self.same_architecture(online)?;
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
        }
        let blend = |t: &mut Array2<f64>, o: &Array2<f64>| {
            if tau == 1.0 {
                t.assign(o);
            } else if tau > 0.0 {
                t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
            }
        };
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            match (t, o) {
                (Layer::Dense(t), Layer::Dense(o)) => {
                    blend(&mut t.weight, &o.weight);
                    blend(&mut t.bias, &o.bias);
                }
                (Layer::BatchNorm(t), Layer::BatchNorm(o)) => {
                    blend(&mut t.gamma, &o.gamma);
                    blend(&mut t.beta, &o.beta);
                    blend(&mut t.running_mean, &o.running_mean);
                    blend(&mut t.running_var, &o.running_var);
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn run_ref(layers: &[Layer], mode: Mode, x: Array2<f64>) -> Array2<f64> {
    let mut x = x;
    for layer in layers {
        x = apply(layer, mode, x, None).0;
    }
    x
}

fn run(layers: &mut [Layer], mode: Mode, mut x: Array2<f64>, caches: &mut Vec<Cache>) -> Array2<f64> {
    for layer in layers.iter_mut() {
        let (out, batch_moments) = apply(layer, mode, x, Some(caches));
        if let (Some((mean, var)), Layer::BatchNorm(b)) = (batch_moments, layer) {
            let m = b.momentum;
            b.running_mean.zip_mut_with(&mean, |r, &v| *r = (1.0 - m) * *r + m * v);
            b.running_var.zip_mut_with(&var, |r, &v| *r = (1.0 - m) * *r + m * v);
        }
        x = out;
    }
    x
}

type Moments = (Array2<f64>, Array2<f64>);

/// Applies one layer; for batch norm with batch statistics also returns the
/// batch mean and (unbiased) variance for running-statistic updates.
fn apply(
    layer: &Layer,
    mode: Mode,
    x: Array2<f64>,
    caches: Option<&mut Vec<Cache>>,
) -> (Array2<f64>, Option<Moments>) {
    match layer {
        Layer::Dense(d) => {
            let y = x.dot(&d.weight) + &d.bias;
            if let Some(c) = caches {
                c.push(Cache::Dense { input: x });
            }
            (y, None)
        }
        Layer::Relu => {
            let y = x.mapv(|v| v.max(0.0));
            if let Some(c) = caches {
                c.push(Cache::Relu { output: y.clone() });
            }
            (y, None)
        }
        Layer::Sigmoid => {
            let y = x.mapv(sigmoid);
            if let Some(c) = caches {
                c.push(Cache::Sigmoid { output: y.clone() });
            }
            (y, None)
        }
        Layer::BatchNorm(b) => {
            // Singleton batches have no usable batch statistics.
            let batch_stats = mode == Mode::Train && x.nrows() > 1;
            let (mean, var, moments) = if batch_stats {
                let n = x.nrows() as f64;
                let mean = x.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                let centered = &x - &mean;
                let var = (&centered * &centered).sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
                let unbiased = &var * (n / (n - 1.0));
                (mean.clone(), var, Some((mean, unbiased)))
            } else {
                (b.running_mean.clone(), b.running_var.clone(), None)
            };
            let inv_std = var.mapv(|v| 1.0 / (v + b.eps).sqrt());
            let normalized = (&x - &mean) * &inv_std;
            let y = &normalized * &b.gamma + &b.beta;
            if let Some(c) = caches {
                c.push(Cache::BatchNorm {
                    normalized,
                    inv_std,
                    batch_stats,
                });
            }
            (y, moments)
        }
    }
}
