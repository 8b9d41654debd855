//! Minimal dense feed-forward engine: affine layers, a fixed activation
//! vocabulary, inverted dropout, exact backprop and Adam.
//!
//! Every network in the pipeline (encoder, classifier head, rest head,
//! decoder, adversary, utility provider) is an instance of this engine.
//! All arithmetic is `f64`; batches are row-major `(batch, dim)` arrays.

mod adam;
mod forward;
mod loss;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use forward::{backward, forward, forward_eval, ForwardCache, Mode};
pub use loss::{mse_loss, mse_loss_batch, nll_loss, nll_loss_batch};
pub use params::{init_network, GradientBundle, LayerParams, NetworkParams};

use crate::error::{Error, Result};

/// Element-wise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    None,
    Relu,
    /// Negative slope is configurable; 0.01 unless stated otherwise.
    LeakyRelu { slope: f64 },
    Sigmoid,
    /// Row-wise log-softmax; only valid as a final-layer activation.
    LogSoftmax,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
            Activation::LogSoftmax => "log_softmax",
        }
    }
}

/// One dense layer: `out = act(W x + b)` with optional dropout on `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Dropout probability applied to this layer's *input* in train mode.
    pub dropout_p: f64,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
            dropout_p: 0.0,
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }
}

/// An ordered stack of dimension-compatible layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} has a zero dimension"
                )));
            }
            if !(0.0..1.0).contains(&layer.dropout_p) {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} dropout_p {} outside [0,1)",
                    layer.dropout_p
                )));
            }
            if layer.activation == Activation::LogSoftmax && i + 1 != self.layers.len() {
                return Err(Error::InvalidSpec(format!(
                    "log_softmax on layer {i} is only allowed on the final layer"
                )));
            }
            if i > 0 && self.layers[i - 1].out_dim != layer.in_dim {
                return Err(Error::InvalidSpec(format!(
                    "layer {} out_dim {} != layer {} in_dim {}",
                    i - 1,
                    self.layers[i - 1].out_dim,
                    i,
                    layer.in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Total number of trainable scalars: Σ (in·out + out).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.in_dim * l.out_dim + l.out_dim)
            .sum()
    }
}

/// Free-function form of [`NetworkSpec::param_count`].
pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.param_count()
}
