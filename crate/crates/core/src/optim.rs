//! Adam with L2 regularization folded into the gradient.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::nn::{ParamKind, ParamSet};

/// Which parameters the L2 penalty applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L2Scope {
    /// Dense and recurrent weight matrices only.
    WeightMatrices,
    /// Every parameter, biases and embeddings included.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub l2_scope: L2Scope,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 0.0,
            l2_scope: L2Scope::WeightMatrices,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        AdamState {
            config,
            first: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    /// Rebuilds a state from persisted moments.
    pub fn from_parts(config: AdamConfig, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>, step: u64) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::dim("adam moment count", first.len(), second.len()));
        }
        for (m, v) in first.iter().zip(&second) {
            if m.len() != v.len() {
                return Err(Error::dim("adam moment length", m.len(), v.len()));
            }
        }
        Ok(AdamState {
            config,
            first,
            second,
            step,
        })
    }

    /// One bias-corrected update from the accumulated gradients, which are
    /// cleared afterwards.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::dim("adam parameter count", self.first.len(), params.len()));
        }
        for p in params.iter() {
            if p.tensor.grad().is_none() {
                return Err(Error::contract(format!("missing gradient for parameter {}", p.name)));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - libm::pow(c.beta1, f64::from(t));
        let correct2 = 1.0 - libm::pow(c.beta2, f64::from(t));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            if m.len() != p.tensor.numel() {
                return Err(Error::dim(format!("adam moments for {}", p.name), m.len(), p.tensor.numel()));
            }
            let l2 = match (c.l2_scope, p.kind) {
                (L2Scope::All, _) | (L2Scope::WeightMatrices, ParamKind::Weight) => c.l2,
                _ => 0.0,
            };
            let grad = p.tensor.grad().expect("checked above").to_vec();
            let data = p.tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i] + l2 * data[i];
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let mh = m[i] / correct1;
                let vh = v[i] / correct2;
                data[i] -= c.learning_rate * mh / (math::sqrt(vh) + c.epsilon);
            }
            p.tensor.clear_grad();
        }
        Ok(())
    }
}
