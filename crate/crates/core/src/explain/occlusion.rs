use serde::{Deserialize, Serialize};

use super::{Method, RelevanceMap};
use crate::error::{Error, Result};
use crate::grad::check_class;
use crate::lstm::{class_probabilities, InputSequence, ModelParams};
use crate::tensor::Matrix;

/// What is compared before and after occluding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OcclusionMode {
    /// Raw score `f_c`.
    FDiff,
    /// Softmax probability of class `c`.
    PDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    /// Zero a whole input vector: `T` extra forward passes.
    Word,
    /// Zero one input component at a time: `T·D` extra forward passes.
    Variable,
}

fn score(model: &ModelParams, seq: &InputSequence, c: usize, mode: OcclusionMode) -> Result<(f64, Vec<f64>)> {
    let logits = model.logits(seq)?;
    let v = match mode {
        OcclusionMode::FDiff => logits[c],
        OcclusionMode::PDiff => class_probabilities(&logits)?[c],
    };
    Ok((v, logits))
}

/// Relevance as the drop in score when an input is set to zero.
pub fn explain_occlusion(
    model: &ModelParams,
    seq: &InputSequence,
    c: usize,
    mode: OcclusionMode,
    granularity: Granularity,
) -> Result<RelevanceMap> {
    check_class(model, c)?;
    if mode == OcclusionMode::PDiff && model.classes() < 2 {
        return Err(Error::invalid(
            "probability-difference occlusion needs a classifier with at least two classes",
        ));
    }
    let (base, logits) = score(model, seq, c, mode)?;
    let method = Method::Occlusion { mode, granularity };
    let tokens = seq.tokens().map(<[String]>::to_vec);
    match granularity {
        Granularity::Word => {
            let per_word = (0..seq.len())
                .map(|t| score(model, &seq.occluded(t), c, mode).map(|(v, _)| base - v))
                .collect::<Result<Vec<_>>>()?;
            Ok(RelevanceMap {
                method,
                target: c,
                logits,
                per_variable: None,
                per_word,
                hidden_relevance: None,
                tokens,
            })
        }
        Granularity::Variable => {
            let mut vars = Matrix::zeros(seq.len(), seq.dim());
            let mut probe = seq.clone();
            for t in 0..seq.len() {
                for d in 0..seq.dim() {
                    let orig = probe.step(t)[d];
                    probe.step_mut(t)[d] = 0.0;
                    let (v, _) = score(model, &probe, c, mode)?;
                    probe.step_mut(t)[d] = orig;
                    vars[(t, d)] = base - v;
                }
            }
            Ok(RelevanceMap::from_variables(method, c, logits, vars, seq))
        }
    }
}
