//! Fully connected networks with reverse-mode gradients.
//!
//! Parameters live in one flat vector. Each layer contributes an
//! `in x out` weight block (row `k` holds the weights leaving input `k`)
//! followed by `out` biases; layers are laid out input to output.

use serde::{Deserialize, Serialize};

use super::matrix::{affine_backward, affine_forward, Matrix};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output. ReLU uses
    /// subgradient 0 at exactly 0.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_hidden_activation(mut self, act: Activation) -> Self {
        self.hidden_activation = act;
        self
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        if matches!(self.output_activation, Activation::Relu) {
            return Err(Error::Config("relu is not a supported output activation".into()));
        }
        if matches!(self.hidden_activation, Activation::Identity) && !self.hidden_dims.is_empty() {
            return Err(Error::Config("hidden activation must be relu or tanh".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o)| (i + 1) * o)
            .sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Activations recorded by a forward pass, input first and output last.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("trace always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::dim("parameter vector", spec.param_count(), params.len()));
        }
        ensure_finite("parameter vector", &params)?;
        Ok(Mlp { spec, params })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        Mlp {
            spec,
            params: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let mut params = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layer_shapes() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..=bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Mlp { spec, params }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Single-input forward pass with shape and finiteness checks.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::dim("network input", self.spec.input_dim, input.len()));
        }
        ensure_finite("network input", input)?;
        Ok(self.forward_batch(&Matrix::row_vector(input)).into_vec())
    }

    /// Forward pass over a batch, one sample per row. Panics on a column mismatch.
    pub fn forward_batch(&self, input: &Matrix) -> Matrix {
        self.trace(input.clone()).into_output()
    }

    pub fn trace(&self, input: Matrix) -> Trace {
        assert_eq!(input.cols(), self.spec.input_dim, "network input width");
        let mut activations = Vec::with_capacity(self.spec.hidden_dims.len() + 2);
        activations.push(input);
        let mut offset = 0;
        for (layer, (fan_in, fan_out)) in self.spec.layer_shapes().into_iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            let mut z = affine_forward(activations.last().unwrap(), w, b, fan_out);
            let act = self.spec.activation_of(layer);
            if act != Activation::Identity {
                z.map_inplace(|v| act.apply(v));
            }
            activations.push(z);
        }
        Trace { activations }
    }

    /// Backpropagates `d_output` (loss gradient w.r.t. the trace output),
    /// accumulating into `grad`. Returns the input gradient when requested.
    pub fn backward(
        &self,
        trace: &Trace,
        d_output: &Matrix,
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Matrix> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let shapes = self.spec.layer_shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for &(i, o) in &shapes {
            offsets.push(offset);
            offset += (i + 1) * o;
        }
        let mut delta = d_output.clone();
        for layer in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[layer];
            let act = self.spec.activation_of(layer);
            if act != Activation::Identity {
                let out = &trace.activations[layer + 1];
                for (d, y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= act.derivative_from_output(*y);
                }
            }
            let off = offsets[layer];
            let (dw, db) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            let need_input = layer > 0 || want_input_grad;
            let w = &self.params[off..off + fan_in * fan_out];
            match affine_backward(&trace.activations[layer], &delta, w, dw, db, need_input) {
                Some(d_in) => delta = d_in,
                None => return None,
            }
        }
        Some(delta)
    }

    /// Copies parameters from `other` (same spec).
    pub fn copy_from(&mut self, other: &Mlp) {
        assert_eq!(self.spec, other.spec);
        self.params.copy_from_slice(&other.params);
    }
}

/// Evaluates the network described by `spec` and `params` at one input.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    Mlp::new(spec.clone(), params.to_vec())?.forward(input)
}

/// A scalar loss over a batch of network outputs, returning the loss and
/// its gradient with respect to every output entry.
pub type OutputLoss<'a> = dyn Fn(&Matrix) -> (f64, Matrix) + 'a;

/// Gradient of `loss(network(inputs))` with respect to the parameters.
pub fn mlp_gradient(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &Matrix,
    loss: &OutputLoss<'_>,
) -> Result<Vec<f64>> {
    let net = Mlp::new(spec.clone(), params.to_vec())?;
    if inputs.cols() != spec.input_dim {
        return Err(Error::dim("network input", spec.input_dim, inputs.cols()));
    }
    let trace = net.trace(inputs.clone());
    let (_, d_out) = loss(trace.output());
    if d_out.rows() != inputs.rows() || d_out.cols() != spec.output_dim {
        return Err(Error::dim("loss gradient", spec.output_dim, d_out.cols()));
    }
    let mut grad = vec![0.0; net.params.len()];
    net.backward(&trace, &d_out, &mut grad, false);
    Ok(grad)
}
