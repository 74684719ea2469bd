use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::orthogonal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Linear => {}
        }
    }

    /// Multiplies `grad` by the activation derivative, expressed through the
    /// activation output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => Zip::from(grad).and(output).for_each(|g, &a| *g *= a * (1.0 - a)),
            Activation::Linear => {}
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "sigmoid" => Some(Activation::Sigmoid),
            "linear" => Some(Activation::Linear),
            _ => None,
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

/// Layer sizes and activations of a dense network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width followed by every layer's width.
    pub sizes: Vec<usize>,
    /// One activation per layer (`sizes.len() - 1` entries).
    pub activations: Vec<Activation>,
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl MlpSpec {
    /// ReLU hidden layers and a final layer with `head` activation.
    pub fn new(input: usize, hidden: &[usize], output: usize, head: Activation) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut activations = vec![Activation::Relu; hidden.len()];
        activations.push(head);
        Self { sizes, activations, hidden_gain: 1.0, output_gain: 1.0 }
    }

    pub fn with_output_gain(mut self, gain: f64) -> Self {
        self.output_gain = gain;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(Error::ShapeMismatch("a network needs at least one hidden layer".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::ShapeMismatch("layer sizes must be positive".into()));
        }
        if self.activations.len() != self.sizes.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.sizes.len() - 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
    version: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.output.nrows()
    }
}

/// Gradients with the same shapes as an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Flattened in the same order as [`Mlp::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Bumped on every parameter mutation so stale caches are detected.
    version: u64,
}

impl Mlp {
    /// Orthogonally initialized network with zero biases.
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let n = spec.activations.len();
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { spec.output_gain } else { spec.hidden_gain };
                Dense {
                    weight: orthogonal(spec.sizes[i + 1], spec.sizes[i], gain, rng),
                    bias: Array1::zeros(spec.sizes[i + 1]),
                    activation: spec.activations[i],
                }
            })
            .collect();
        Ok(Self { layers, version: 0 })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::ShapeMismatch(format!(
                    "layer output {} feeds input {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::ShapeMismatch("bias length differs from layer width".into()));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::outputs).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.ncols()
            )));
        }
        Ok(())
    }

    /// Output only, no cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut x = self.layer_forward(0, input);
        for i in 1..self.layers.len() {
            x = self.layer_forward(i, x.view());
        }
        Ok(x)
    }

    fn layer_forward(&self, i: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let layer = &self.layers[i];
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        layer.activation.apply(&mut z);
        z
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&input)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for i in 0..self.layers.len() {
            let next = self.layer_forward(i, x.view());
            layer_inputs.push(x);
            x = next;
        }
        Ok(ForwardCache { layer_inputs, output: x, version: self.version })
    }

    fn check_cache(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<()> {
        if cache.version != self.version || cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {}, network is at {}",
                cache.version, self.version
            )));
        }
        if output_grad.dim() != cache.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                output_grad.dim(),
                cache.output.dim()
            )));
        }
        Ok(())
    }

    /// Parameter gradients (summed over the batch) and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        self.check_cache(cache, output_grad)?;
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut grad = output_grad.clone();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let out = if i + 1 == n { &cache.output } else { &cache.layer_inputs[i + 1] };
            layer.activation.backprop(out, &mut grad);
            weights.push(grad.t().dot(&cache.layer_inputs[i]).as_standard_layout().into_owned());
            biases.push(grad.sum_axis(Axis(0)));
            grad = grad.dot(&layer.weight);
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGrads { weights, biases }, grad))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn backward_input(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_cache(cache, output_grad)?;
        let n = self.layers.len();
        let mut grad = output_grad.clone();
        for i in (0..n).rev() {
            let out = if i + 1 == n { &cache.output } else { &cache.layer_inputs[i + 1] };
            self.layers[i].activation.backprop(out, &mut grad);
            grad = grad.dot(&self.layers[i].weight);
        }
        Ok(grad)
    }

    /// Weights then bias of each layer, in layer order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch { expected: self.num_params(), found: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap_or_default());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap_or_default());
        }
        self.version += 1;
        Ok(())
    }

    /// Visits every parameter slice with its gradient, in flat order.
    pub(crate) fn for_each_param_mut(&mut self, grads: &MlpGrads, mut f: impl FnMut(&mut [f64], &[f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(
                l.weight.as_slice_mut().expect("standard layout"),
                grads.weights[i].as_slice().expect("standard layout"),
            );
            f(
                l.bias.as_slice_mut().expect("standard layout"),
                grads.biases[i].as_slice().expect("standard layout"),
            );
        }
        self.version += 1;
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.layers.len() != source.layers.len() {
            return Err(Error::ShapeMismatch("soft update between different depths".into()));
        }
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            if t.weight.dim() != s.weight.dim() {
                return Err(Error::ShapeMismatch("soft update between different layer shapes".into()));
            }
            Zip::from(&mut t.weight).and(&s.weight).for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
            Zip::from(&mut t.bias).and(&s.bias).for_each(|t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        self.version += 1;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }
}
