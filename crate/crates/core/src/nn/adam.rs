//! Bias-corrected Adam updates.

use ndarray::{Array1, Array2};

use super::{GradientBundle, NetworkParams};
use crate::error::{Error, Result};

/// Adam hyperparameters; the usual constants unless overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct MomentPair {
    m_weights: Array2<f64>,
    v_weights: Array2<f64>,
    m_bias: Array1<f64>,
    v_bias: Array1<f64>,
}

/// First/second moment estimates and the step counter for one network.
pub struct AdamState {
    config: AdamConfig,
    moments: Vec<MomentPair>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let moments = params
            .layers
            .iter()
            .map(|l| MomentPair {
                m_weights: Array2::zeros(l.weights.dim()),
                v_weights: Array2::zeros(l.weights.dim()),
                m_bias: Array1::zeros(l.bias.len()),
                v_bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        AdamState {
            config,
            moments,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every weight and bias. Rejects non-finite gradients.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::InvalidSpec(
            "gradient bundle does not match params".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    state.t += 1;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((p, g), mom) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.moments)
    {
        update(
            &mut p.weights,
            &g.weights,
            &mut mom.m_weights,
            &mut mom.v_weights,
            beta1,
            beta2,
            epsilon,
            lr,
            bc1,
            bc2,
        );
        update(
            &mut p.bias,
            &g.bias,
            &mut mom.m_bias,
            &mut mom.v_bias,
            beta1,
            beta2,
            epsilon,
            lr,
            bc1,
            bc2,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        });
}
