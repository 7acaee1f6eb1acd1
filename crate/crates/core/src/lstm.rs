//! LSTM and bidirectional LSTM evaluation with a full activation trace.
//!
//! Gate layout everywhere is `[i, f, o, g]`:
//!
//! ```text
//! i_t = sigm(W_i h_{t-1} + U_i x_t + b_i)
//! f_t = sigm(W_f h_{t-1} + U_f x_t + b_f)
//! o_t = sigm(W_o h_{t-1} + U_o x_t + b_o)
//! g_t = tanh(W_g h_{t-1} + U_g x_t + b_g)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ g_t
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! with `h_0 = c_0 = 0`. The backward direction of a bidirectional model reads
//! the input in reverse order; its trace step `s` corresponds to input
//! position `T - 1 - s`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counters;
use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_G: usize = 3;
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];

/// Recurrent cell flavour.
///
/// `Linear` is a product-free recurrent net with identity activations:
/// the gates are pinned to `i = 1, f = 0, o = 1` and only the `g` branch is
/// used, giving `h_t = W_g h_{t-1} + U_g x_t + b_g`. It shares every code path
/// with the LSTM cell and exists so that explainers can be checked against
/// closed forms that only hold for linear networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    #[default]
    Lstm,
    Linear,
}

impl CellKind {
    /// Activation of gate `k` applied to its pre-activation.
    #[inline]
    pub fn gate_activation(self, k: usize, z: f64) -> f64 {
        match (self, k) {
            (CellKind::Lstm, GATE_G) => z.tanh(),
            (CellKind::Lstm, _) => sigmoid(z),
            (CellKind::Linear, GATE_G) => z,
            (CellKind::Linear, GATE_F) => 0.0,
            (CellKind::Linear, _) => 1.0,
        }
    }

    /// Derivative of the gate activation, expressed through its output `a`.
    #[inline]
    pub fn gate_derivative(self, k: usize, a: f64) -> f64 {
        match (self, k) {
            (CellKind::Lstm, GATE_G) => 1.0 - a * a,
            (CellKind::Lstm, _) => a * (1.0 - a),
            (CellKind::Linear, GATE_G) => 1.0,
            (CellKind::Linear, _) => 0.0,
        }
    }

    #[inline]
    pub fn cell_activation(self, c: f64) -> f64 {
        match self {
            CellKind::Lstm => c.tanh(),
            CellKind::Linear => c,
        }
    }

    #[inline]
    pub fn cell_derivative(self, a: f64) -> f64 {
        match self {
            CellKind::Lstm => 1.0 - a * a,
            CellKind::Linear => 1.0,
        }
    }
}

/// Logistic function, evaluated without overflow for any finite argument.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of a single LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `W_k`, H×H, indexed by gate.
    pub recurrent: [Matrix; 4],
    /// `U_k`, H×D, indexed by gate.
    pub input: [Matrix; 4],
    /// `b_k`, length H, indexed by gate.
    pub bias: [Vec<f64>; 4],
}

impl LstmWeights {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        Self {
            recurrent: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            input: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            bias: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias[0].len()
    }

    fn validate(&self, hidden: usize, input_dim: usize, direction: &str) -> Result<()> {
        for k in 0..4 {
            let name = GATE_NAMES[k];
            if self.recurrent[k].shape() != (hidden, hidden) {
                return Err(Error::shape(format!(
                    "tensor W_{name} ({direction}) has shape {:?}, expected ({hidden}, {hidden})",
                    self.recurrent[k].shape()
                )));
            }
            if self.input[k].shape() != (hidden, input_dim) {
                return Err(Error::shape(format!(
                    "tensor U_{name} ({direction}) has shape {:?}, expected ({hidden}, {input_dim})",
                    self.input[k].shape()
                )));
            }
            if self.bias[k].len() != hidden {
                return Err(Error::shape(format!(
                    "tensor b_{name} ({direction}) has length {}, expected {hidden}",
                    self.bias[k].len()
                )));
            }
        }
        Ok(())
    }

    fn slices(&self) -> impl Iterator<Item = (String, &[f64])> {
        let w = (0..4).map(move |k| (format!("W_{}", GATE_NAMES[k]), self.recurrent[k].as_slice()));
        let u = (0..4).map(move |k| (format!("U_{}", GATE_NAMES[k]), self.input[k].as_slice()));
        let b = (0..4).map(move |k| (format!("b_{}", GATE_NAMES[k]), self.bias[k].as_slice()));
        w.chain(u).chain(b)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        out.extend(self.recurrent.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.input.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.bias.iter_mut().map(Vec::as_mut_slice));
        out
    }
}

/// Architecture of a model, independent of its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub hidden: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub bidirectional: bool,
    pub output_bias: bool,
    pub cell: CellKind,
}

impl ModelShape {
    /// One hidden unit, two inputs, one regression output without bias.
    pub fn toy() -> Self {
        Self {
            hidden: 1,
            input_dim: 2,
            classes: 1,
            bidirectional: false,
            output_bias: false,
            cell: CellKind::Lstm,
        }
    }

    pub fn final_hidden_len(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

/// All parameters of a (bi-)LSTM with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cell: CellKind,
    pub forward: LstmWeights,
    pub backward: Option<LstmWeights>,
    /// C × H (or C × 2H when bidirectional), rows are `w_c`.
    pub output: Matrix,
    pub output_bias: Option<Vec<f64>>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let h = shape.hidden;
        let d = shape.input_dim;
        Self {
            cell: shape.cell,
            forward: LstmWeights::zeros(h, d),
            backward: shape.bidirectional.then(|| LstmWeights::zeros(h, d)),
            output: Matrix::zeros(shape.classes, shape.final_hidden_len()),
            output_bias: shape.output_bias.then(|| vec![0.0; shape.classes]),
        }
    }

    /// Weights (not biases) drawn from `U(lo, hi)`; biases zero.
    pub fn random<R: Rng + ?Sized>(shape: ModelShape, rng: &mut R, lo: f64, hi: f64) -> Self {
        let mut m = Self::zeros(shape);
        m.randomize_weights(rng, lo, hi);
        m
    }

    pub fn randomize_weights<R: Rng + ?Sized>(&mut self, rng: &mut R, lo: f64, hi: f64) {
        let dirs = std::iter::once(&mut self.forward).chain(self.backward.as_mut());
        for w in dirs {
            for m in w.recurrent.iter_mut().chain(w.input.iter_mut()) {
                m.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(lo..hi));
            }
        }
        self.output
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.gen_range(lo..hi));
    }

    pub fn randomize_biases<R: Rng + ?Sized>(&mut self, rng: &mut R, lo: f64, hi: f64) {
        let dirs = std::iter::once(&mut self.forward).chain(self.backward.as_mut());
        for w in dirs {
            for b in w.bias.iter_mut() {
                b.iter_mut().for_each(|x| *x = rng.gen_range(lo..hi));
            }
        }
        if let Some(b) = self.output_bias.as_mut() {
            b.iter_mut().for_each(|x| *x = rng.gen_range(lo..hi));
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            hidden: self.hidden(),
            input_dim: self.input_dim(),
            classes: self.classes(),
            bidirectional: self.is_bidirectional(),
            output_bias: self.output_bias.is_some(),
            cell: self.cell,
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input[0].cols()
    }

    pub fn classes(&self) -> usize {
        self.output.rows()
    }

    pub fn is_bidirectional(&self) -> bool {
        self.backward.is_some()
    }

    /// Checks that every tensor agrees with `(H, D, C, bidirectional)`.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let d = self.input_dim();
        self.forward.validate(h, d, "forward")?;
        if let Some(b) = &self.backward {
            b.validate(h, d, "backward")?;
        }
        let width = if self.is_bidirectional() { 2 * h } else { h };
        if self.output.cols() != width || self.output.rows() == 0 {
            return Err(Error::shape(format!(
                "tensor w_out has shape {:?}, expected (C, {width})",
                self.output.shape()
            )));
        }
        if let Some(b) = &self.output_bias {
            if b.len() != self.classes() {
                return Err(Error::shape(format!(
                    "tensor b_out has length {}, expected {}",
                    b.len(),
                    self.classes()
                )));
            }
        }
        Ok(())
    }

    /// Named views of every parameter tensor in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = self
            .forward
            .slices()
            .map(|(n, s)| (format!("forward.{n}"), s))
            .collect();
        if let Some(b) = &self.backward {
            out.extend(b.slices().map(|(n, s)| (format!("backward.{n}"), s)));
        }
        out.push(("w_out".into(), self.output.as_slice()));
        if let Some(b) = &self.output_bias {
            out.push(("b_out".into(), b.as_slice()));
        }
        out
    }

    /// Mutable views in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.forward.slices_mut();
        if let Some(b) = self.backward.as_mut() {
            out.extend(b.slices_mut());
        }
        out.push(self.output.as_mut_slice());
        if let Some(b) = self.output_bias.as_mut() {
            out.push(b.as_mut_slice());
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.tensors_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length");
    }

    /// Output weights of class `c` restricted to the forward half and, for
    /// bidirectional models, the backward half.
    pub fn output_halves(&self, c: usize) -> (&[f64], Option<&[f64]>) {
        let row = self.output.row(c);
        let h = self.hidden();
        if self.is_bidirectional() {
            (&row[..h], Some(&row[h..]))
        } else {
            (row, None)
        }
    }

    fn check_input(&self, seq: &InputSequence) -> Result<()> {
        if seq.dim() != self.input_dim() {
            return Err(Error::shape(format!(
                "input dimension {} does not match model input dimension {}",
                seq.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Full forward pass with activation trace; uni- or bidirectional.
    pub fn forward_trace(&self, seq: &InputSequence) -> Result<Trace> {
        self.check_input(seq)?;
        counters::record_forward();
        let fwd = DirectionTrace::run(&self.forward, self.cell, seq, false);
        let bwd = self
            .backward
            .as_ref()
            .map(|w| DirectionTrace::run(w, self.cell, seq, true));
        let mut final_hidden = fwd.h(seq.len() - 1).to_vec();
        if let Some(b) = &bwd {
            final_hidden.extend_from_slice(b.h(seq.len() - 1));
        }
        let logits = self.output_layer(&final_hidden);
        check_finite(&logits, "forward pass logits")?;
        Ok(Trace {
            forward: fwd,
            backward: bwd,
            final_hidden,
            logits,
        })
    }

    /// Logits only; same arithmetic as [`ModelParams::forward_trace`] without
    /// storing the trace.
    pub fn logits(&self, seq: &InputSequence) -> Result<Vec<f64>> {
        self.check_input(seq)?;
        counters::record_forward();
        let mut final_hidden = run_final_hidden(&self.forward, self.cell, seq, false);
        if let Some(w) = &self.backward {
            final_hidden.extend(run_final_hidden(w, self.cell, seq, true));
        }
        let logits = self.output_layer(&final_hidden);
        check_finite(&logits, "forward pass logits")?;
        Ok(logits)
    }

    pub fn output_layer(&self, final_hidden: &[f64]) -> Vec<f64> {
        let mut logits = match &self.output_bias {
            Some(b) => b.clone(),
            None => vec![0.0; self.classes()],
        };
        self.output.mul_vec_add(final_hidden, &mut logits);
        logits
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Unidirectional forward pass. Rejects bidirectional models.
pub fn lstm_forward(params: &ModelParams, seq: &InputSequence) -> Result<Trace> {
    if params.is_bidirectional() {
        return Err(Error::invalid("lstm_forward called on a bidirectional model"));
    }
    params.forward_trace(seq)
}

/// Bidirectional forward pass. Rejects unidirectional models.
pub fn bilstm_forward(params: &ModelParams, seq: &InputSequence) -> Result<Trace> {
    if !params.is_bidirectional() {
        return Err(Error::invalid("bilstm_forward called on a unidirectional model"));
    }
    params.forward_trace(seq)
}

/// Softmax over class scores with max-logit subtraction.
pub fn class_probabilities(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.len() < 2 {
        return Err(Error::invalid("class probabilities need at least two classes"));
    }
    check_finite(logits, "logits")?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// An input sequence `x_1..x_T` of `D`-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence {
    dim: usize,
    data: Vec<f64>,
    tokens: Option<Vec<String>>,
}

impl InputSequence {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::shape(format!(
                "input data of length {} is not a non-empty multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self {
            dim,
            data,
            tokens: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::shape(format!(
                "input vector {bad} has dimension {}, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(dim, rows.concat())
    }

    pub fn with_tokens(mut self, tokens: Vec<String>) -> Result<Self> {
        if tokens.len() != self.len() {
            return Err(Error::shape(format!(
                "{} tokens for a sequence of length {}",
                tokens.len(),
                self.len()
            )));
        }
        self.tokens = Some(tokens);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn tokens(&self) -> Option<&[String]> {
        self.tokens.as_deref()
    }

    /// Copy with step `t` set to the zero vector.
    pub fn occluded(&self, t: usize) -> Self {
        let mut s = self.clone();
        s.step_mut(t).iter_mut().for_each(|x| *x = 0.0);
        s
    }
}

/// Activations of one direction for every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionTrace {
    hidden: usize,
    len: usize,
    /// Input position consumed at step `s` is `T - 1 - s` when set.
    pub reversed: bool,
    pre: Vec<f64>,
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_act: Vec<f64>,
    h: Vec<f64>,
}

impl DirectionTrace {
    fn run(w: &LstmWeights, kind: CellKind, seq: &InputSequence, reversed: bool) -> Self {
        let hsz = w.hidden();
        let len = seq.len();
        let mut tr = Self {
            hidden: hsz,
            len,
            reversed,
            pre: vec![0.0; len * 4 * hsz],
            gates: vec![0.0; len * 4 * hsz],
            cell: vec![0.0; len * hsz],
            cell_act: vec![0.0; len * hsz],
            h: vec![0.0; len * hsz],
        };
        let zeros = vec![0.0; hsz];
        let mut out = StepOut::new(hsz);
        for s in 0..len {
            let x = seq.step(if reversed { len - 1 - s } else { s });
            let (h_prev, c_prev) = if s == 0 {
                (zeros.as_slice(), zeros.as_slice())
            } else {
                (
                    &tr.h[(s - 1) * hsz..s * hsz],
                    &tr.cell[(s - 1) * hsz..s * hsz],
                )
            };
            lstm_step(w, kind, x, h_prev, c_prev, &mut out);
            tr.pre[s * 4 * hsz..(s + 1) * 4 * hsz].copy_from_slice(&out.pre);
            tr.gates[s * 4 * hsz..(s + 1) * 4 * hsz].copy_from_slice(&out.gates);
            tr.cell[s * hsz..(s + 1) * hsz].copy_from_slice(&out.c);
            tr.cell_act[s * hsz..(s + 1) * hsz].copy_from_slice(&out.c_act);
            tr.h[s * hsz..(s + 1) * hsz].copy_from_slice(&out.h);
        }
        tr
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Input position read at trace step `s`.
    pub fn position(&self, s: usize) -> usize {
        if self.reversed {
            self.len - 1 - s
        } else {
            s
        }
    }

    pub fn pre_activation(&self, s: usize, gate: usize) -> &[f64] {
        let o = (s * 4 + gate) * self.hidden;
        &self.pre[o..o + self.hidden]
    }

    pub fn gate(&self, s: usize, gate: usize) -> &[f64] {
        let o = (s * 4 + gate) * self.hidden;
        &self.gates[o..o + self.hidden]
    }

    pub fn cell(&self, s: usize) -> &[f64] {
        &self.cell[s * self.hidden..(s + 1) * self.hidden]
    }

    /// `tanh(c_s)` (identity for linear cells).
    pub fn cell_activation(&self, s: usize) -> &[f64] {
        &self.cell_act[s * self.hidden..(s + 1) * self.hidden]
    }

    pub fn h(&self, s: usize) -> &[f64] {
        &self.h[s * self.hidden..(s + 1) * self.hidden]
    }

    /// Hidden state before step `s` (zero for `s = 0`).
    pub fn h_prev(&self, s: usize) -> Vec<f64> {
        if s == 0 {
            vec![0.0; self.hidden]
        } else {
            self.h(s - 1).to_vec()
        }
    }

    pub fn c_prev(&self, s: usize) -> Vec<f64> {
        if s == 0 {
            vec![0.0; self.hidden]
        } else {
            self.cell(s - 1).to_vec()
        }
    }
}

/// Forward trace of a model on one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub forward: DirectionTrace,
    pub backward: Option<DirectionTrace>,
    /// `h_T`, or `[h→_T ; h←_T]` for bidirectional models.
    pub final_hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Trace {
    pub fn directions(&self) -> impl Iterator<Item = &DirectionTrace> {
        std::iter::once(&self.forward).chain(self.backward.as_ref())
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

struct StepOut {
    pre: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    c_act: Vec<f64>,
    h: Vec<f64>,
}

impl StepOut {
    fn new(hidden: usize) -> Self {
        Self {
            pre: vec![0.0; 4 * hidden],
            gates: vec![0.0; 4 * hidden],
            c: vec![0.0; hidden],
            c_act: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

#[inline]
fn lstm_step(
    w: &LstmWeights,
    kind: CellKind,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    out: &mut StepOut,
) {
    let hsz = h_prev.len();
    for k in 0..4 {
        let pre = &mut out.pre[k * hsz..(k + 1) * hsz];
        for j in 0..hsz {
            pre[j] = w.bias[k][j] + dot(w.recurrent[k].row(j), h_prev) + dot(w.input[k].row(j), x);
        }
        for j in 0..hsz {
            out.gates[k * hsz + j] = kind.gate_activation(k, pre[j]);
        }
    }
    for j in 0..hsz {
        let i = out.gates[GATE_I * hsz + j];
        let f = out.gates[GATE_F * hsz + j];
        let o = out.gates[GATE_O * hsz + j];
        let g = out.gates[GATE_G * hsz + j];
        let c = f * c_prev[j] + i * g;
        let ca = kind.cell_activation(c);
        out.c[j] = c;
        out.c_act[j] = ca;
        out.h[j] = o * ca;
    }
}

fn run_final_hidden(w: &LstmWeights, kind: CellKind, seq: &InputSequence, reversed: bool) -> Vec<f64> {
    let hsz = w.hidden();
    let len = seq.len();
    let mut h = vec![0.0; hsz];
    let mut c = vec![0.0; hsz];
    let mut out = StepOut::new(hsz);
    for s in 0..len {
        let x = seq.step(if reversed { len - 1 - s } else { s });
        lstm_step(w, kind, x, &h, &c, &mut out);
        h.copy_from_slice(&out.h);
        c.copy_from_slice(&out.c);
    }
    h
}
