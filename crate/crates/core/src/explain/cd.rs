//! Contextual Decomposition.
//!
//! Each direction carries a split `h = β + γ`, `c = β_c + γ_c`, where `β`
//! collects contributions of the positions in `[start, stop)`. Gate
//! nonlinearities are linearised by averaging over the orderings of their
//! additive inputs (relevant, irrelevant, bias), with the bias always taken
//! first. The `bias_i · bias_g` product goes to `β` only at positions inside
//! the span. The output gate is applied whole to both parts.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Method, RelevanceMap};
use crate::counters;
use crate::error::{Error, Result};
use crate::grad::check_class;
use crate::lstm::{CellKind, DirectionTrace, InputSequence, LstmWeights, ModelParams, Trace, GATE_F, GATE_G, GATE_I, GATE_O};
use crate::tensor::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdDecomposition {
    pub start: usize,
    pub stop: usize,
    pub target: usize,
    /// `β_T` per direction (forward first).
    pub beta: Vec<Vec<f64>>,
    /// `γ_T` per direction.
    pub gamma: Vec<Vec<f64>>,
    /// `w_cᵀ β_T`, summed over directions with the matching output-weight half.
    pub relevance: f64,
}

impl CdDecomposition {
    /// `β_T + γ_T`, concatenated over directions.
    pub fn reconstructed_hidden(&self) -> Vec<f64> {
        self.beta
            .iter()
            .zip(&self.gamma)
            .flat_map(|(b, g)| b.iter().zip(g).map(|(x, y)| x + y))
            .collect()
    }
}

/// Contributions of `a` and `b` to `act(a + b + c)` given bias `c`; the
/// remainder `act(c)` is the bias part.
#[inline]
fn decomp_three(a: f64, b: f64, c: f64, act: impl Fn(f64) -> f64) -> (f64, f64, f64) {
    let ac = act(c);
    let abc = act(a + b + c);
    let a_part = 0.5 * (act(a + c) - ac + abc - act(b + c));
    let b_part = 0.5 * (act(b + c) - ac + abc - act(a + c));
    (a_part, b_part, ac)
}

#[inline]
fn decomp_two(a: f64, b: f64, act: impl Fn(f64) -> f64) -> (f64, f64) {
    let ab = act(a + b);
    (0.5 * (act(a) + ab - act(b)), 0.5 * (act(b) + ab - act(a)))
}

/// Steps read before the span in `tr`'s direction have `β = 0` and `γ`
/// equal to the ordinary forward state, so they are taken from the trace.
fn cd_direction(
    w: &LstmWeights,
    kind: CellKind,
    seq: &InputSequence,
    reversed: bool,
    span: &Range<usize>,
    tr: Option<&DirectionTrace>,
) -> (Vec<f64>, Vec<f64>) {
    let hsz = w.hidden();
    let len = seq.len();
    let mut rel_h = vec![0.0; hsz];
    let mut irr_h = vec![0.0; hsz];
    let mut rel_c = vec![0.0; hsz];
    let mut irr_c = vec![0.0; hsz];
    let mut rel_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hsz]);
    let mut irr_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hsz]);
    let mut first = 0;
    if let Some(tr) = tr {
        first = if reversed { len - span.end } else { span.start };
        if first > 0 {
            irr_h.copy_from_slice(tr.h(first - 1));
            irr_c.copy_from_slice(tr.cell(first - 1));
        }
    }
    for s in first..len {
        let pos = if reversed { len - 1 - s } else { s };
        let inside = span.contains(&pos);
        let x = seq.step(pos);
        for k in 0..4 {
            rel_pre[k].iter_mut().for_each(|v| *v = 0.0);
            irr_pre[k].iter_mut().for_each(|v| *v = 0.0);
            w.recurrent[k].mul_vec_add(&rel_h, &mut rel_pre[k]);
            w.recurrent[k].mul_vec_add(&irr_h, &mut irr_pre[k]);
            if inside {
                w.input[k].mul_vec_add(x, &mut rel_pre[k]);
            } else {
                w.input[k].mul_vec_add(x, &mut irr_pre[k]);
            }
        }
        for j in 0..hsz {
            let act = |k: usize| move |z: f64| kind.gate_activation(k, z);
            let (ri, ii, bi) = decomp_three(rel_pre[GATE_I][j], irr_pre[GATE_I][j], w.bias[GATE_I][j], act(GATE_I));
            let (rg, ig, bg) = decomp_three(rel_pre[GATE_G][j], irr_pre[GATE_G][j], w.bias[GATE_G][j], act(GATE_G));
            let (rf, iff, bf) = decomp_three(rel_pre[GATE_F][j], irr_pre[GATE_F][j], w.bias[GATE_F][j], act(GATE_F));
            let o = kind.gate_activation(GATE_O, rel_pre[GATE_O][j] + irr_pre[GATE_O][j] + w.bias[GATE_O][j]);

            let mut rel = ri * (rg + bg) + bi * rg;
            let mut irr = ii * (rg + ig + bg) + (ri + bi) * ig;
            if inside {
                rel += bi * bg;
            } else {
                irr += bi * bg;
            }
            rel += (rf + bf) * rel_c[j];
            irr += (rf + iff + bf) * irr_c[j] + iff * rel_c[j];
            rel_c[j] = rel;
            irr_c[j] = irr;

            let (rt, it) = decomp_two(rel, irr, |z| kind.cell_activation(z));
            rel_h[j] = o * rt;
            irr_h[j] = o * it;
        }
    }
    (rel_h, irr_h)
}

/// Decomposes `h_T` into the part due to positions `span` and the rest.
/// For bidirectional models the same input positions are relevant in both
/// directions.
pub fn explain_cd(model: &ModelParams, seq: &InputSequence, c: usize, span: Range<usize>) -> Result<CdDecomposition> {
    check_class(model, c)?;
    if seq.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "input dimension {} does not match model input dimension {}",
            seq.dim(),
            model.input_dim()
        )));
    }
    if span.start >= span.end || span.end > seq.len() {
        return Err(Error::invalid(format!(
            "span [{}, {}) is empty or outside a sequence of length {}",
            span.start,
            span.end,
            seq.len()
        )));
    }
    cd_span(model, seq, c, span, None)
}

fn cd_span(model: &ModelParams, seq: &InputSequence, c: usize, span: Range<usize>, trace: Option<&Trace>) -> Result<CdDecomposition> {
    counters::record_forward();
    let (wf, wb) = model.output_halves(c);
    let (bf, gf) = cd_direction(&model.forward, model.cell, seq, false, &span, trace.map(|t| &t.forward));
    let mut relevance = dot(wf, &bf);
    let mut beta = vec![bf];
    let mut gamma = vec![gf];
    if let (Some(w), Some(wb)) = (&model.backward, wb) {
        let (bb, gb) = cd_direction(w, model.cell, seq, true, &span, trace.and_then(|t| t.backward.as_ref()));
        relevance += dot(wb, &bb);
        beta.push(bb);
        gamma.push(gb);
    }
    if !relevance.is_finite() {
        return Err(Error::NonFinite("contextual decomposition".into()));
    }
    Ok(CdDecomposition {
        start: span.start,
        stop: span.end,
        target: c,
        beta,
        gamma,
        relevance,
    })
}

/// Word-level CD: position `k` is scored with the span `[k, k + 1)`.
pub fn explain_cd_words(model: &ModelParams, seq: &InputSequence, c: usize) -> Result<RelevanceMap> {
    check_class(model, c)?;
    let trace = model.forward_trace(seq)?;
    let per_word = (0..seq.len())
        .map(|k| cd_span(model, seq, c, k..k + 1, Some(&trace)).map(|d| d.relevance))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelevanceMap {
        method: Method::Cd,
        target: c,
        logits: trace.logits,
        per_variable: None,
        per_word,
        hidden_relevance: None,
        tokens: seq.tokens().map(<[String]>::to_vec),
    })
}
