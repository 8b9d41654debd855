//! The four-network obfuscator: encoder, classifier head, rest head and
//! decoder, assembled around a split bottleneck.

mod io;
mod train;

pub use io::{load_model, save_model, MODEL_MAGIC};
pub use train::{
    joint_gradients, train_obfuscator, train_with_validation_split, EpochStats, TrainHistory,
    TrainHyper,
};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::{forward_eval, Activation, LayerSpec, NetworkParams, NetworkSpec};

/// Network shapes for the four components plus the bottleneck split.
///
/// The decoder consumes the classifier output (first) concatenated with
/// the rest output (second).
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscatorArch {
    pub encoder: NetworkSpec,
    pub classifier: NetworkSpec,
    pub rest: NetworkSpec,
    pub decoder: NetworkSpec,
}

impl ObfuscatorArch {
    pub fn new(
        encoder: NetworkSpec,
        classifier: NetworkSpec,
        rest: NetworkSpec,
        decoder: NetworkSpec,
    ) -> Result<Self> {
        let arch = ObfuscatorArch {
            encoder,
            classifier,
            rest,
            decoder,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        for spec in [&self.encoder, &self.classifier, &self.rest, &self.decoder] {
            spec.validate()?;
        }
        let v = self.encoder.out_dim();
        if self.classifier.in_dim() != v || self.rest.in_dim() != v {
            return Err(Error::InvalidSpec(
                "classifier/rest in_dim must equal the encoder out_dim".into(),
            ));
        }
        if self.classifier.out_dim() + self.rest.out_dim() != self.decoder.in_dim() {
            return Err(Error::InvalidSpec(
                "decoder in_dim must equal classifier out_dim + rest out_dim".into(),
            ));
        }
        if self.decoder.out_dim() != self.encoder.in_dim() {
            return Err(Error::InvalidSpec(
                "decoder out_dim must equal the encoder in_dim".into(),
            ));
        }
        Ok(())
    }

    /// The categorical-track architecture: encoder 102->128->128->64,
    /// classifier 64->32->8->2 (log-softmax), rest 64->64->62 (relu),
    /// decoder 64->128->128->102 (sigmoid). `input_dim` replaces 102 when
    /// the encoded width differs.
    pub fn categorical(input_dim: usize) -> Self {
        let relu = Activation::Relu;
        ObfuscatorArch {
            encoder: NetworkSpec {
                layers: vec![
                    LayerSpec::new(input_dim, 128, relu),
                    LayerSpec::new(128, 128, relu),
                    LayerSpec::new(128, 64, relu),
                ],
            },
            classifier: NetworkSpec {
                layers: vec![
                    LayerSpec::new(64, 32, relu),
                    LayerSpec::new(32, 8, relu),
                    LayerSpec::new(8, 2, Activation::LogSoftmax),
                ],
            },
            rest: NetworkSpec {
                layers: vec![LayerSpec::new(64, 64, relu), LayerSpec::new(64, 62, relu)],
            },
            decoder: NetworkSpec {
                layers: vec![
                    LayerSpec::new(64, 128, relu),
                    LayerSpec::new(128, 128, relu),
                    LayerSpec::new(128, input_dim, Activation::Sigmoid),
                ],
            },
        }
    }

    /// A small stand-in with the same topology for synthetic-data tests.
    pub fn compact(input_dim: usize, bottleneck: usize) -> Self {
        assert!(bottleneck > 2);
        let relu = Activation::Relu;
        let hidden = (2 * input_dim).max(16);
        ObfuscatorArch {
            encoder: NetworkSpec {
                layers: vec![
                    LayerSpec::new(input_dim, hidden, relu),
                    LayerSpec::new(hidden, bottleneck, relu),
                ],
            },
            classifier: NetworkSpec {
                layers: vec![
                    LayerSpec::new(bottleneck, 8, relu),
                    LayerSpec::new(8, 2, Activation::LogSoftmax),
                ],
            },
            rest: NetworkSpec {
                layers: vec![LayerSpec::new(bottleneck, bottleneck - 2, relu)],
            },
            decoder: NetworkSpec {
                layers: vec![
                    LayerSpec::new(bottleneck, hidden, relu),
                    LayerSpec::new(hidden, input_dim, Activation::Sigmoid),
                ],
            },
        }
    }

    pub fn bottleneck(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.classifier.param_count()
            + self.rest.param_count()
            + self.decoder.param_count()
    }
}

/// Bookkeeping recorded with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub init_val_lae: f64,
    pub best_val_lae: f64,
    pub seed: u64,
}

impl Default for TrainMeta {
    fn default() -> Self {
        TrainMeta {
            epochs_run: 0,
            best_epoch: 0,
            init_val_lae: f64::NAN,
            best_val_lae: f64::NAN,
            seed: 0,
        }
    }
}

/// Trained parameters for all four networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObfuscatorModel {
    pub arch: ObfuscatorArch,
    pub encoder_params: NetworkParams,
    pub classifier_params: NetworkParams,
    pub rest_params: NetworkParams,
    pub decoder_params: NetworkParams,
    pub meta: TrainMeta,
}

impl ObfuscatorModel {
    /// Freshly initialized model: weights `N(0, 0.02)`, biases zero, each
    /// network seeded from a distinct derivation of `seed`.
    pub fn init(arch: ObfuscatorArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        Ok(ObfuscatorModel {
            encoder_params: crate::nn::init_network(&arch.encoder, seed)?,
            classifier_params: crate::nn::init_network(&arch.classifier, seed.wrapping_add(1))?,
            rest_params: crate::nn::init_network(&arch.rest, seed.wrapping_add(2))?,
            decoder_params: crate::nn::init_network(&arch.decoder, seed.wrapping_add(3))?,
            arch,
            meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
        })
    }

    /// `V = E(X)`, eval mode.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        forward_eval(&self.arch.encoder, &self.encoder_params, x)
    }

    /// `W_NP = C(V)`: 2 log-probabilities per record.
    pub fn classify(&self, v: ArrayView2<f64>) -> Result<Array2<f64>> {
        forward_eval(&self.arch.classifier, &self.classifier_params, v)
    }

    /// `W_P = R(V)`: the residual bottleneck features.
    pub fn rest(&self, v: ArrayView2<f64>) -> Result<Array2<f64>> {
        forward_eval(&self.arch.rest, &self.rest_params, v)
    }

    /// `X' = D(V')` for an already-assembled bottleneck.
    pub fn decode(&self, v_prime: ArrayView2<f64>) -> Result<Array2<f64>> {
        forward_eval(&self.arch.decoder, &self.decoder_params, v_prime)
    }

    /// `X' = D(C(V) || R(V))` with no post-hoc functions applied.
    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let v = self.encode(x)?;
        let w_np = self.classify(v.view())?;
        let w_p = self.rest(v.view())?;
        let v_prime = concat_bottleneck(&w_np, &w_p);
        self.decode(v_prime.view())
    }
}

/// Classifier output first, then the rest output.
pub fn concat_bottleneck(w_np: &Array2<f64>, w_p: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[w_np.view(), w_p.view()]).expect("matching batch sizes")
}
