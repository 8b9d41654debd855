//! Batched forward evaluation and exact backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, GradientBundle, LayerParams, NetworkParams, NetworkSpec};
use crate::error::{Error, Result};

/// Dropout behaviour: `Train` samples inverted-dropout masks, `Eval` is a
/// plain forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything `backward` needs: per-layer post-dropout inputs, dropout
/// masks (already carrying the 1/(1-p) scale), and post-activation outputs.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    preacts: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

fn check_input(spec: &NetworkSpec, params: &NetworkParams, x: &ArrayView2<f64>) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::InvalidSpec(
            "params do not shape-match the network spec".into(),
        ));
    }
    if x.ncols() != spec.in_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.in_dim(),
            got: x.ncols(),
            context: "forward input width".into(),
        });
    }
    Ok(())
}

fn affine(x: &Array2<f64>, layer: &LayerParams) -> Array2<f64> {
    x.dot(&layer.weights.t()) + &layer.bias
}

fn apply_activation(act: Activation, z: &Array2<f64>) -> Array2<f64> {
    match act {
        Activation::None => z.clone(),
        Activation::Relu => z.mapv(|v| v.max(0.0)),
        Activation::LeakyRelu { slope } => z.mapv(|v| if v > 0.0 { v } else { slope * v }),
        Activation::Sigmoid => z.mapv(|v| 1.0 / (1.0 + (-v).exp())),
        Activation::LogSoftmax => {
            let mut out = z.clone();
            for mut row in out.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                row.mapv_inplace(|v| v - lse);
            }
            out
        }
    }
}

/// Layer-by-layer evaluation of a batch `(n, in_dim)`.
///
/// In `Train` mode each layer's input is passed through inverted dropout
/// (kept units scaled by 1/(1-p)); the returned cache suffices for exact
/// gradients, including through the sampled masks.
pub fn forward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: ArrayView2<f64>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, ForwardCache)> {
    check_input(spec, params, &x)?;
    let n = spec.layers.len();
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
        preacts: Vec::with_capacity(n),
        outputs: Vec::with_capacity(n),
    };
    let mut current = x.to_owned();
    for (layer, lp) in spec.layers.iter().zip(&params.layers) {
        let (dropped, mask) = if mode == Mode::Train && layer.dropout_p > 0.0 {
            let keep = 1.0 - layer.dropout_p;
            let mask = Array2::from_shape_fn(current.dim(), |_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            (&current * &mask, Some(mask))
        } else {
            (current, None)
        };
        let z = affine(&dropped, lp);
        let a = apply_activation(layer.activation, &z);
        cache.inputs.push(dropped);
        cache.masks.push(mask);
        cache.preacts.push(z);
        cache.outputs.push(a.clone());
        current = a;
    }
    Ok((current, cache))
}

/// Dropout-free forward pass; no cache, no RNG.
pub fn forward_eval(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_input(spec, params, &x)?;
    let mut current = x.to_owned();
    for (layer, lp) in spec.layers.iter().zip(&params.layers) {
        let z = affine(&current, lp);
        current = apply_activation(layer.activation, &z);
    }
    Ok(current)
}

/// Exact gradients of a scalar loss w.r.t. every weight and bias, given the
/// upstream gradient w.r.t. the network output. Also returns the gradient
/// w.r.t. the network input so networks can be chained.
pub fn backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    upstream: ArrayView2<f64>,
) -> Result<(GradientBundle, Array2<f64>)> {
    if cache.inputs.len() != spec.layers.len() {
        return Err(Error::InvalidSpec(
            "cache does not match the network spec".into(),
        ));
    }
    let batch = cache.inputs[0].nrows();
    if upstream.dim() != (batch, spec.out_dim()) {
        return Err(Error::DimensionMismatch {
            expected: spec.out_dim(),
            got: upstream.ncols(),
            context: "backward upstream gradient".into(),
        });
    }
    let mut grads: Vec<LayerParams> = Vec::with_capacity(spec.layers.len());
    let mut da = upstream.to_owned();
    for (idx, (layer, lp)) in spec.layers.iter().zip(&params.layers).enumerate().rev() {
        let z = &cache.preacts[idx];
        let a = &cache.outputs[idx];
        let dz: Array2<f64> = match layer.activation {
            Activation::None => da,
            Activation::Relu => {
                let mut d = da;
                d.zip_mut_with(z, |g, &zv| {
                    if zv <= 0.0 {
                        *g = 0.0;
                    }
                });
                d
            }
            Activation::LeakyRelu { slope } => {
                let mut d = da;
                d.zip_mut_with(z, |g, &zv| {
                    if zv <= 0.0 {
                        *g *= slope;
                    }
                });
                d
            }
            Activation::Sigmoid => {
                let mut d = da;
                d.zip_mut_with(a, |g, &av| *g *= av * (1.0 - av));
                d
            }
            Activation::LogSoftmax => {
                // dz = da - softmax(z) * rowsum(da), softmax(z) = exp(a)
                let row_sums: Array1<f64> = da.sum_axis(Axis(1));
                let mut d = da;
                for ((mut drow, arow), &s) in
                    d.rows_mut().into_iter().zip(a.rows()).zip(row_sums.iter())
                {
                    for (g, &av) in drow.iter_mut().zip(arow.iter()) {
                        *g -= av.exp() * s;
                    }
                }
                d
            }
        };
        let x_tilde = &cache.inputs[idx];
        let dw = dz.t().dot(x_tilde);
        let db = dz.sum_axis(Axis(0));
        let mut dx = dz.dot(&lp.weights);
        if let Some(mask) = &cache.masks[idx] {
            dx *= mask;
        }
        grads.push(LayerParams {
            weights: dw,
            bias: db,
        });
        da = dx;
    }
    grads.reverse();
    Ok((GradientBundle { layers: grads }, da))
}
