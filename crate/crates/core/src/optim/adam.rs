use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Update rule applied to the fast learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain `θ ← θ − η·g` with the warmup schedule.
    Sgd,
    #[default]
    Adam,
}

/// Learning-rate schedule and first/second-moment state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub kind: OptimizerKind,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of updates applied so far.
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
}

impl AdamState {
    pub fn new(len: usize, base_lr: f64, warmup_ratio: f64, total_steps: usize) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            base_lr,
            warmup_ratio,
            total_steps,
        }
    }

    pub fn with_kind(mut self, kind: OptimizerKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * self.total_steps as f64).ceil() as usize
    }

    /// Linear warmup to `base_lr` over `ceil(warmup_ratio · total_steps)`
    /// steps, constant afterwards. `step` is 1-based.
    pub fn lr_at(&self, step: usize) -> f64 {
        let w = self.warmup_steps();
        if w > 0 && step <= w {
            self.base_lr * step as f64 / w as f64
        } else {
            self.base_lr
        }
    }

    /// Applies one update in place. A non-finite gradient is rejected and
    /// leaves both `theta` and the state untouched.
    pub fn step(&mut self, theta: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        grad.check_len(theta.len(), "AdamState::step")?;
        if self.m.len() != theta.len() {
            return Err(Error::dims("AdamState::step", self.m.len(), theta.len()));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let lr = self.lr_at(self.step);
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.as_mut_slice().iter_mut().zip(grad.iter()) {
                    *t -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for (((p, &g), m), v) in theta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(grad.iter())
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    theta: &ParamVector,
    grad: &ParamVector,
) -> Result<(ParamVector, AdamState)> {
    let mut state = state.clone();
    let mut theta = theta.clone();
    state.step(&mut theta, grad)?;
    Ok((theta, state))
}
