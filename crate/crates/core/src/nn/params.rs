//! Parameter storage and initialization.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NetworkSpec;
use crate::error::{Error, Result};

/// Variance of the Gaussian weight initialization.
pub const INIT_WEIGHT_VARIANCE: f64 = 0.02;

/// Weights and biases for one layer. Weights are `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All parameters of a network, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.layers.len()
            && self.layers.iter().zip(&spec.layers).all(|(p, s)| {
                p.weights.dim() == (s.out_dim, s.in_dim) && p.bias.len() == s.out_dim
            })
    }

    pub fn zeros_like(&self) -> GradientBundle {
        GradientBundle {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: Array2::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }
}

/// Per-layer weight and bias gradients; shape-matches `NetworkParams`.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub layers: Vec<LayerParams>,
}

impl GradientBundle {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry, for routing checks.
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Weights i.i.d. `N(0, 0.02)`, biases zero; deterministic per seed.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_WEIGHT_VARIANCE.sqrt())
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let layers = spec
        .layers
        .iter()
        .map(|l| LayerParams {
            weights: Array2::from_shape_fn((l.out_dim, l.in_dim), |_| normal.sample(&mut rng)),
            bias: Array1::zeros(l.out_dim),
        })
        .collect();
    Ok(NetworkParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn two_by_two() -> NetworkSpec {
        NetworkSpec::new(vec![LayerSpec::new(2, 2, Activation::None)]).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let spec = two_by_two();
        let a = init_network(&spec, 7).unwrap();
        let b = init_network(&spec, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_biases_are_zero() {
        let params = init_network(&two_by_two(), 7).unwrap();
        assert!(params.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_weight_variance_matches_target() {
        // Monte-Carlo estimate over 1e5 weights.
        let spec = NetworkSpec::new(vec![LayerSpec::new(500, 200, Activation::None)]).unwrap();
        let params = init_network(&spec, 123).unwrap();
        let w = &params.layers[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(
            (var - 0.02).abs() < 0.002,
            "empirical variance {var} outside 0.02 +/- 0.002"
        );
    }
}
