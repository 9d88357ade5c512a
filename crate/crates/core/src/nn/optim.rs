use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, step: u64, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if step == 0 {
        return Err(Error::invalid("adam step counter starts at 1"));
    }
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over a set of tensors of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    ids: Vec<ParamId>,
    states: Vec<AdamState>,
}

impl Adam {
    /// Optimizes every tensor in the store.
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        Self::for_params(store, store.ids().collect(), config)
    }

    pub fn for_params(store: &ParamStore, ids: Vec<ParamId>, config: AdamConfig) -> Self {
        let states = ids.iter().map(|&id| AdamState::zeros(store.tensor(id).len())).collect();
        Self {
            config,
            step: 0,
            ids,
            states,
        }
    }

    /// `grads` holds one entry per store tensor; only this optimizer's tensors move.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam: {} gradient tensors for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.step += 1;
        for (&id, s) in self.ids.iter().zip(&mut self.states) {
            adam_step(store.tensor_mut(id).data_mut(), &grads[id.index()], s, self.step, &self.config)?;
        }
        Ok(())
    }
}

/// Clamp every value into `[-bound, bound]`.
pub fn clip_parameters(store: &mut ParamStore, bound: f64) -> Result<()> {
    let ids: Vec<ParamId> = store.ids().collect();
    clip_subset(store, &ids, bound)
}

pub fn clip_subset(store: &mut ParamStore, ids: &[ParamId], bound: f64) -> Result<()> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!("clip bound must be positive, got {bound}")));
    }
    for &id in ids {
        for v in store.tensor_mut(id).data_mut() {
            *v = v.clamp(-bound, bound);
        }
    }
    Ok(())
}
