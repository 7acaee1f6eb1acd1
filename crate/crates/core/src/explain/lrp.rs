//! ε-LRP backward pass through the unrolled (bi-)LSTM.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Method, RelevanceMap};
use crate::counters;
use crate::error::{Error, Result};
use crate::grad::check_class;
use crate::lstm::{CellKind, DirectionTrace, InputSequence, LstmWeights, ModelParams, GATE_F, GATE_G, GATE_I, GATE_O};
use crate::tensor::{sign, Matrix};

/// How relevance arriving at `z_g · z_s` is split between gate and signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrpRule {
    /// Signal takes all.
    All,
    Prop,
    Abs,
    Half,
}

impl LrpRule {
    pub const ALL_RULES: [LrpRule; 4] = [LrpRule::All, LrpRule::Prop, LrpRule::Abs, LrpRule::Half];

    pub fn name(self) -> &'static str {
        match self {
            LrpRule::All => "all",
            LrpRule::Prop => "prop",
            LrpRule::Abs => "abs",
            LrpRule::Half => "half",
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            LrpRule::Prop => 0.2,
            _ => 0.001,
        }
    }
}

impl fmt::Display for LrpRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LrpRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(LrpRule::All),
            "prop" => Ok(LrpRule::Prop),
            "abs" => Ok(LrpRule::Abs),
            "half" => Ok(LrpRule::Half),
            other => Err(Error::invalid(format!("unknown LRP rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpConfig {
    pub rule: LrpRule,
    pub epsilon: f64,
}

impl LrpConfig {
    /// Rule with its default stabilizer.
    pub fn new(rule: LrpRule) -> Self {
        Self {
            rule,
            epsilon: rule.default_epsilon(),
        }
    }

    /// Rule with no stabilizer.
    pub fn unstabilized(rule: LrpRule) -> Self {
        Self { rule, epsilon: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "LRP stabilizer must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self::new(LrpRule::All)
    }
}

/// `num / den`, or 0 when the denominator vanishes.
#[inline]
fn share(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// ε-rule for `z_j = Σ_i z_i w_ij + b_j`, with `w` stored as `J × I`
/// (row `j` holds the incoming weights of output `j`).
///
/// Adds the redistributed relevance onto `r_in`. The bias and the stabilizer
/// keep their share.
pub fn lrp_linear(z_in: &[f64], w: &Matrix, z_out: &[f64], r_out: &[f64], eps: f64, r_in: &mut [f64]) {
    debug_assert_eq!(w.shape(), (z_out.len(), z_in.len()));
    for (j, (&zj, &rj)) in z_out.iter().zip(r_out).enumerate() {
        let s = share(rj, zj + eps * sign(zj));
        if s == 0.0 {
            continue;
        }
        for ((ri, zi), wij) in r_in.iter_mut().zip(z_in).zip(w.row(j)) {
            *ri += zi * wij * s;
        }
    }
}

/// Splits `r` at a product `z_g · z_s` into `(R_g, R_s)`.
pub fn lrp_product(z_g: f64, z_s: f64, r: f64, rule: LrpRule, eps: f64) -> (f64, f64) {
    match rule {
        LrpRule::All => (0.0, r),
        LrpRule::Half => (0.5 * r, 0.5 * r),
        LrpRule::Prop => {
            let s = share(r, z_g + z_s + eps * sign(z_g + z_s));
            (z_g * s, z_s * s)
        }
        LrpRule::Abs => {
            let s = share(r, z_g.abs() + z_s.abs() + eps);
            (z_g.abs() * s, z_s.abs() * s)
        }
    }
}

/// LRP relevances for class `c`: one forward pass to record the trace and one
/// relevance backward pass. The output neuron starts with relevance `f_c(x)`.
pub fn explain_lrp(model: &ModelParams, seq: &InputSequence, c: usize, cfg: &LrpConfig) -> Result<RelevanceMap> {
    check_class(model, c)?;
    cfg.validate()?;
    let trace = model.forward_trace(seq)?;
    counters::record_backward();
    let eps = cfg.epsilon;
    // Products in a linear cell multiply by constants, so the signal keeps everything.
    let rule = match model.cell {
        CellKind::Lstm => cfg.rule,
        CellKind::Linear => LrpRule::All,
    };

    let fc = trace.logits[c];
    let wrow = Matrix::from_vec(1, trace.final_hidden.len(), model.output.row(c).to_vec());
    let mut r_hidden = vec![0.0; trace.final_hidden.len()];
    lrp_linear(&trace.final_hidden, &wrow, &[fc], &[fc], eps, &mut r_hidden);

    let h = model.hidden();
    let mut rx = Matrix::zeros(seq.len(), seq.dim());
    lrp_direction(&model.forward, seq, &trace.forward, &r_hidden[..h], rule, eps, &mut rx);
    if let (Some(w), Some(tr)) = (&model.backward, &trace.backward) {
        lrp_direction(w, seq, tr, &r_hidden[h..], rule, eps, &mut rx);
    }

    let mut map = RelevanceMap::from_variables(Method::Lrp(*cfg), c, trace.logits, rx, seq);
    map.hidden_relevance = Some(r_hidden);
    Ok(map)
}

fn lrp_direction(
    w: &LstmWeights,
    seq: &InputSequence,
    tr: &DirectionTrace,
    r_final: &[f64],
    rule: LrpRule,
    eps: f64,
    rx: &mut Matrix,
) {
    let hsz = tr.hidden();
    let mut rh = r_final.to_vec();
    let mut rc = vec![0.0; hsz];
    let mut r_gate: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hsz]);
    let mut rh_prev = vec![0.0; hsz];
    let mut rc_prev = vec![0.0; hsz];
    for s in (0..tr.len()).rev() {
        let (gi, gf, go, gg) = (
            tr.gate(s, GATE_I),
            tr.gate(s, GATE_F),
            tr.gate(s, GATE_O),
            tr.gate(s, GATE_G),
        );
        let c = tr.cell(s);
        let ca = tr.cell_activation(s);
        let c_prev = tr.c_prev(s);
        for j in 0..hsz {
            let (ro, rca) = lrp_product(go[j], ca[j], rh[j], rule, eps);
            let rcj = rc[j] + rca;
            let den = c[j] + eps * sign(c[j]);
            let r_fc = gf[j] * c_prev[j] * share(rcj, den);
            let r_ig = gi[j] * gg[j] * share(rcj, den);
            let (rf, rcp) = lrp_product(gf[j], c_prev[j], r_fc, rule, eps);
            let (ri, rg) = lrp_product(gi[j], gg[j], r_ig, rule, eps);
            r_gate[GATE_I][j] = ri;
            r_gate[GATE_F][j] = rf;
            r_gate[GATE_O][j] = ro;
            r_gate[GATE_G][j] = rg;
            rc_prev[j] = rcp;
        }
        let pos = tr.position(s);
        let x = seq.step(pos);
        let h_prev = tr.h_prev(s);
        rh_prev.iter_mut().for_each(|v| *v = 0.0);
        let rxt = rx.row_mut(pos);
        for k in 0..4 {
            if r_gate[k].iter().all(|&v| v == 0.0) {
                continue;
            }
            let pre = tr.pre_activation(s, k);
            lrp_linear(x, &w.input[k], pre, &r_gate[k], eps, rxt);
            lrp_linear(&h_prev, &w.recurrent[k], pre, &r_gate[k], eps, &mut rh_prev);
        }
        std::mem::swap(&mut rh, &mut rh_prev);
        std::mem::swap(&mut rc, &mut rc_prev);
    }
}
