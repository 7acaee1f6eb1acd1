//! Adam optimiser and the toy-task regression trainer.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{clip_global_norm, mse, param_gradient};
use crate::lstm::{InputSequence, ModelParams, ModelShape};
use crate::seed;

/// Optimisation settings for the toy regression models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Optimiser steps (minibatch updates).
    pub max_steps: usize,
    /// Validation checks without a new best before the rate is decayed.
    pub plateau_patience: usize,
    pub plateau_decay: f64,
    pub clip_norm: f64,
    /// A run counts as converged when its best validation MSE is below this.
    pub convergence_mse: f64,
    /// Training stops early once validation MSE drops below this value.
    pub stop_mse: f64,
    pub init_range: (f64, f64),
    pub batch_size: usize,
    /// Steps between validation checks.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            max_steps: 60_000,
            plateau_patience: 10,
            plateau_decay: 0.95,
            clip_norm: 5.0,
            convergence_mse: 1e-4,
            stop_mse: 1e-6,
            init_range: (-1.0, 1.0),
            batch_size: 32,
            eval_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.plateau_decay > 0.0 && self.plateau_decay < 1.0) {
            return Err(Error::invalid("plateau decay must lie in (0, 1)"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if !(self.convergence_mse > 0.0) {
            return Err(Error::invalid("convergence threshold must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::invalid("batch size and evaluation interval must be positive"));
        }
        if !(self.init_range.0 < self.init_range.1) {
            return Err(Error::invalid("init range must be a non-empty interval"));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// One row of the training history, written at every validation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    /// Mean minibatch MSE since the previous check.
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
    /// Global gradient norm after clipping at the last step.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot.
    pub model: ModelParams,
    pub converged: bool,
    pub best_val_mse: f64,
    pub diverged: bool,
    pub history: Vec<HistoryRow>,
}

/// History as a tab-separated table.
pub fn history_table(history: &[HistoryRow]) -> String {
    let mut out = String::from("step\ttrain_mse\tval_mse\tlr\tgrad_norm\n");
    for r in history {
        out.push_str(&format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\n",
            r.step, r.train_mse, r.val_mse, r.lr, r.grad_norm
        ));
    }
    out
}

/// Trains a one-unit LSTM regressor on `train`, selecting the snapshot with
/// the lowest validation MSE.
pub fn train_toy_model(
    train: &[(InputSequence, f64)],
    val: &[(InputSequence, f64)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut rng = seed::rng(cfg.seed);
    let model = ModelParams::random(ModelShape::toy(), &mut rng, cfg.init_range.0, cfg.init_range.1);
    train_regressor(model, train, val, cfg, &mut rng)
}

/// Generic minibatch Adam loop for regression models.
pub fn train_regressor(
    mut model: ModelParams,
    train: &[(InputSequence, f64)],
    val: &[(InputSequence, f64)],
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<TrainOutcome> {
    let mut best_model = model.clone();
    let mut best_val = mse(&model, val)?;
    let mut history = vec![HistoryRow {
        step: 0,
        train_mse: f64::NAN,
        val_mse: best_val,
        lr: cfg.learning_rate,
        grad_norm: 0.0,
    }];
    let mut lr = cfg.learning_rate;
    let mut adam = Adam::new(model.num_parameters());
    let mut flat = model.to_flat();
    let mut since_best = 0;
    let mut running = 0.0;
    let mut running_n = 0usize;
    let mut grad_norm;
    let mut diverged = false;
    let bs = cfg.batch_size.min(train.len());
    let mut batch: Vec<(&InputSequence, f64)> = Vec::with_capacity(bs);

    for step in 1..=cfg.max_steps {
        batch.clear();
        batch.extend(sample(rng, train.len(), bs).into_iter().map(|i| (&train[i].0, train[i].1)));
        let (loss, grads) = match param_gradient(&model, &batch) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut g = grads.to_flat();
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        grad_norm = clip_global_norm(&mut g, cfg.clip_norm).1;
        adam.step(&mut flat, &g, lr);
        model.set_flat(&flat);
        running += loss;
        running_n += 1;

        if step % cfg.eval_every == 0 || step == cfg.max_steps {
            let v = match mse(&model, val) {
                Ok(v) if v.is_finite() => v,
                _ => {
                    diverged = true;
                    break;
                }
            };
            if v < best_val {
                best_val = v;
                best_model = model.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.plateau_patience {
                    lr *= cfg.plateau_decay;
                    since_best = 0;
                }
            }
            history.push(HistoryRow {
                step,
                train_mse: running / running_n as f64,
                val_mse: v,
                lr,
                grad_norm,
            });
            running = 0.0;
            running_n = 0;
            if best_val < cfg.stop_mse {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best_model,
        converged: best_val < cfg.convergence_mse,
        best_val_mse: best_val,
        diverged,
        history,
    })
}
