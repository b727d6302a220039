//! Parameter updates: SGD with heavy-ball momentum, Adam, and the step
//! learning-rate schedule. One optimizer instance updates every trainable
//! tensor of a model (encoder, reciprocal points, margins, prototypes) with
//! the same learning rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameter;

pub const SCHEDULE_EVERY: usize = 30;
pub const SCHEDULE_FACTOR: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "adam")]
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// `base_lr * 0.1^floor(epoch / 30)`.
pub fn lr_schedule(epoch: usize, base_lr: f64) -> f64 {
    base_lr * SCHEDULE_FACTOR.powi((epoch / SCHEDULE_EVERY) as i32)
}

fn ensure_buffers(buffers: &mut Vec<Vec<f64>>, params: &[&mut Parameter]) -> Result<()> {
    if buffers.is_empty() {
        *buffers = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
    }
    if buffers.len() != params.len() {
        return Err(Error::contract(format!(
            "optimizer tracks {} tensors, got {}",
            buffers.len(),
            params.len()
        )));
    }
    for (b, p) in buffers.iter().zip(params) {
        if b.len() != p.value.numel() || p.grad.shape() != p.value.shape() {
            return Err(Error::contract(format!(
                "optimizer state for {} does not match its shape {:?}",
                p.name,
                p.value.shape()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub momentum: f64,
    pub velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(momentum: f64) -> Self {
        SgdState {
            momentum,
            velocity: Vec::new(),
        }
    }

    /// `v <- mu*v + g; w <- w - lr*v`.
    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) -> Result<()> {
        ensure_buffers(&mut self.velocity, params)?;
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let Parameter { value, grad, .. } = &mut **p;
            for ((w, g), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + g;
                *w -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl AdamState {
    /// Bias-corrected Adam; the step counter increments before the update.
    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) -> Result<()> {
        ensure_buffers(&mut self.m, params)?;
        ensure_buffers(&mut self.v, params)?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Parameter { value, grad, .. } = &mut **p;
            for (i, (w, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd(SgdState),
    Adam(AdamState),
}

pub const SGD_MOMENTUM: f64 = 0.9;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd(SgdState::new(SGD_MOMENTUM)),
            OptimizerKind::Adam => Optimizer::Adam(AdamState::default()),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd(s) => s.step(params, lr),
            Optimizer::Adam(s) => s.step(params, lr),
        }
    }
}
