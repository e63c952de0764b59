//! Standard Adam with bias correction, operating on [`ParamSet`]s.

use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl AdamState {
    pub fn new(like: &ParamSet) -> Self {
        Self {
            m: ParamSet::zeros_like(like),
            v: ParamSet::zeros_like(like),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    if params.tensors.len() != grads.tensors.len()
        || params
            .tensors
            .iter()
            .zip(&grads.tensors)
            .any(|(p, g)| p.len() != g.len())
    {
        return Err(Error::Shape("params and grads differ in shape".into()));
    }
    if grads.tensors.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NumericalBlowup);
    }
    state.t += 1;
    let bc1 = 1.0 - config.beta1.powi(state.t as i32);
    let bc2 = 1.0 - config.beta2.powi(state.t as i32);
    for ti in 0..params.tensors.len() {
        let p = &mut params.tensors[ti];
        let g = &grads.tensors[ti];
        let m = &mut state.m.tensors[ti];
        let v = &mut state.v.tensors[ti];
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}
