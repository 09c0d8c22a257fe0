use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Params};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip applied before the moment update.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Bias-corrected Adam with parameter-shaped moment buffers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Params,
    pub second_moment: Params,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: Params::zeros_like(params),
            second_moment: Params::zeros_like(params),
            step: 0,
        }
    }

    /// One update of `net` along `-grads`. Clipping, when configured, is
    /// applied to a copy of the gradients.
    pub fn step(&mut self, net: &mut Mlp, grads: &Params) -> Result<()> {
        adam_step(net.params_mut(), grads, self)
    }
}

pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first_moment) {
        return Err(Error::Dimension(
            "parameters, gradients and optimizer state differ in shape".into(),
        ));
    }
    let cfg = state.config;
    let clip = match cfg.max_grad_norm {
        Some(max) => {
            let norm = grads.norm();
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let step_size = cfg.learning_rate / bias1;
    for (((p, g), m), v) in params
        .slices_mut()
        .zip(grads.slices())
        .zip(state.first_moment.slices_mut())
        .zip(state.second_moment.slices_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            let g = g * clip;
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= step_size * *m / ((*v / bias2).sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}
