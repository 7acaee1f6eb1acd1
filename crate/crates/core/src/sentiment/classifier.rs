//! Bidirectional LSTM sentence classifier with jointly trained embeddings.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Sentence, SentimentCorpus, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::grad::{clip_global_norm, cross_entropy_gradient};
use crate::lstm::{argmax, CellKind, InputSequence, ModelParams, ModelShape, GATE_F};
use crate::model_io::{load_model, save_model, Embeddings};
use crate::seed;
use crate::train::Adam;

pub const MODEL_FILE: &str = "model.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Minibatches between validation checks.
    pub eval_every: usize,
    /// Training stops at the first check where validation accuracy reaches
    /// this value. Below 1 this deliberately leaves some test sentences
    /// misclassified, which the increasing-order perturbation track needs.
    pub target_accuracy: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            embed_dim: 16,
            epochs: 15,
            batch_size: 32,
            learning_rate: 0.005,
            clip_norm: 5.0,
            eval_every: 50,
            target_accuracy: 0.95,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::invalid("hidden size, embedding size, batch size and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::invalid("learning rate and clip norm must be positive"));
        }
        Ok(())
    }
}

/// A trained classifier with its (frozen) embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentModel {
    pub model: ModelParams,
    pub embeddings: Embeddings,
}

impl SentimentModel {
    pub fn embed(&self, ids: &[usize]) -> Result<InputSequence> {
        self.embeddings.embed_ids(ids)
    }

    pub fn logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
        self.model.logits(&self.embed(ids)?)
    }

    pub fn predict(&self, ids: &[usize]) -> Result<usize> {
        Ok(argmax(&self.logits(ids)?))
    }

    /// Writes `model.json` and `embeddings.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_model(dir.join(MODEL_FILE), &self.model, None)?;
        self.embeddings.save(dir.join(EMBEDDINGS_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (model, _) = load_model(dir.join(MODEL_FILE))?;
        let embeddings = Embeddings::load(dir.join(EMBEDDINGS_FILE))?;
        if embeddings.dim() != model.input_dim() {
            return Err(Error::shape(format!(
                "embedding dimension {} does not match model input dimension {}",
                embeddings.dim(),
                model.input_dim()
            )));
        }
        Ok(Self { model, embeddings })
    }

    pub fn accuracy(&self, split: &[Sentence]) -> Result<f64> {
        if split.is_empty() {
            return Err(Error::invalid("accuracy of an empty split"));
        }
        let mut ok = 0usize;
        for s in split {
            if self.predict(&s.ids)? == s.label {
                ok += 1;
            }
        }
        Ok(ok as f64 / split.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub epoch: usize,
    /// Minibatches seen so far.
    pub step: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Minibatch Adam on softmax cross-entropy; returns the snapshot with the
/// best validation accuracy.
pub fn train_classifier(corpus: &SentimentCorpus, cfg: &ClassifierConfig) -> Result<(SentimentModel, Vec<ValidationRow>)> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, 30, 0));
    let shape = ModelShape {
        hidden: cfg.hidden,
        input_dim: cfg.embed_dim,
        classes: NUM_CLASSES,
        bidirectional: true,
        output_bias: true,
        cell: CellKind::Lstm,
    };
    let r = 1.0 / (cfg.hidden as f64).sqrt();
    let mut model = ModelParams::random(shape, &mut rng, -r, r);
    for w in std::iter::once(&mut model.forward).chain(model.backward.as_mut()) {
        w.bias[GATE_F].iter_mut().for_each(|b| *b = 1.0);
    }
    let table: Vec<f64> = (0..corpus.vocab.len() * cfg.embed_dim)
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    let mut current = SentimentModel {
        model,
        embeddings: Embeddings::new(cfg.embed_dim, corpus.vocab.clone(), table)?,
    };

    let n_model = current.model.num_parameters();
    let mut adam = Adam::new(n_model + current.embeddings.as_slice().len());
    let mut flat = current.model.to_flat();
    flat.extend_from_slice(current.embeddings.as_slice());

    let mut best = current.clone();
    let mut best_acc = current.accuracy(&corpus.val)?;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..corpus.train.len()).collect();
    let d = cfg.embed_dim;
    let mut step = 0usize;
    'outer: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let seqs: Vec<InputSequence> = chunk
                .iter()
                .map(|&i| current.embed(&corpus.train[i].ids))
                .collect::<Result<_>>()?;
            let batch: Vec<(&InputSequence, usize)> =
                seqs.iter().zip(chunk).map(|(s, &i)| (s, corpus.train[i].label)).collect();
            let (loss, grads, dxs) = cross_entropy_gradient(&current.model, &batch)?;
            let mut g = grads.to_flat();
            let mut ge = vec![0.0; current.embeddings.as_slice().len()];
            for (dx, &i) in dxs.iter().zip(chunk) {
                for (t, &id) in corpus.train[i].ids.iter().enumerate() {
                    for k in 0..d {
                        ge[id * d + k] += dx[t * d + k];
                    }
                }
            }
            g.extend(ge);
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("classifier training, epoch {epoch}")));
            }
            clip_global_norm(&mut g, cfg.clip_norm);
            adam.step(&mut flat, &g, cfg.learning_rate);
            current.model.set_flat(&flat[..n_model]);
            current.embeddings.as_mut_slice().copy_from_slice(&flat[n_model..]);
            loss_sum += loss;
            batches += 1;
            step += 1;
            if step % cfg.eval_every == 0 {
                let acc = current.accuracy(&corpus.val)?;
                history.push(ValidationRow {
                    epoch,
                    step,
                    train_loss: loss_sum / batches as f64,
                    val_accuracy: acc,
                });
                loss_sum = 0.0;
                batches = 0;
                if acc > best_acc {
                    best_acc = acc;
                    best = current.clone();
                }
                if best_acc >= cfg.target_accuracy {
                    break 'outer;
                }
            }
        }
    }
    Ok((best, history))
}
