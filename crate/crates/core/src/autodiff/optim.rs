use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Learning-rate schedule, advanced once per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    None,
    /// `lr * gamma^epoch`.
    Exponential { gamma: f64 },
    /// `lr * factor^(epoch / every)`.
    Step { every: usize, factor: f64 },
}

impl Schedule {
    pub const EXPONENTIAL: Schedule = Schedule::Exponential { gamma: 0.9995 };
    pub const STEP: Schedule = Schedule::Step { every: 1000, factor: 0.5 };

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::None => true,
            Schedule::Exponential { gamma } => gamma > 0.0 && gamma <= 1.0,
            Schedule::Step { every, factor } => every > 0 && factor > 0.0 && factor <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid schedule {self:?}")))
        }
    }

    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            Schedule::None => base,
            Schedule::Exponential { gamma } => base * gamma.powi(epoch as i32),
            Schedule::Step { every, factor } => base * factor.powi((epoch / every) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

/// First-order optimizer over a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub base_lr: f64,
    pub schedule: Schedule,
    /// Rescales the full gradient to at most this norm before stepping.
    pub clip_norm: Option<f64>,
    lr: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, schedule: Schedule) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        schedule.validate()?;
        Ok(Self { kind, base_lr: lr, schedule, clip_norm: None, lr, t: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr, Schedule::None)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Sets the rate for the given (zero-based) epoch.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.schedule.lr_at(self.base_lr, epoch);
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        if self.m.len() != ids.len() {
            self.m = ids.iter().map(|&id| Matrix::zeros(store.value(id).rows(), store.value(id).cols())).collect();
            self.v = self.m.clone();
        }
        let clip = match self.clip_norm {
            Some(c) => {
                let n = store.grad_norm();
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let lr = self.lr;
        for (k, id) in ids.into_iter().enumerate() {
            let (g, w) = store.grad_and_value_mut(id);
            match self.kind {
                OptimizerKind::Sgd => {
                    for (wi, gi) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *wi -= lr * clip * gi;
                    }
                }
                OptimizerKind::Momentum { beta } => {
                    let m = self.m[k].as_mut_slice();
                    for ((wi, gi), mi) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m) {
                        *mi = beta * *mi + clip * gi;
                        *wi -= lr * *mi;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.t as i32);
                    let c2 = 1.0 - beta2.powi(self.t as i32);
                    let m = self.m[k].as_mut_slice();
                    let v = self.v[k].as_mut_slice();
                    for (((wi, gi), mi), vi) in w.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                        let gi = clip * gi;
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *wi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
        store.zero_grads();
    }
}
