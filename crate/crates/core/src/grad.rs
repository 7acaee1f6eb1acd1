//! Reverse-mode differentiation through the (bi-)LSTM.

use std::borrow::Borrow;

use crate::counters;
use crate::error::{Error, Result};
use crate::lstm::{
    CellKind, DirectionTrace, InputSequence, LstmWeights, ModelParams, Trace, GATE_F, GATE_G, GATE_I, GATE_O,
};

/// `∂f_c/∂x_{t,d}` for one target class.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGradient {
    pub class: usize,
    pub len: usize,
    pub dim: usize,
    /// Row-major `T × D`.
    pub values: Vec<f64>,
}

impl InputGradient {
    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

pub(crate) fn check_class(model: &ModelParams, c: usize) -> Result<()> {
    if c >= model.classes() {
        return Err(Error::invalid(format!(
            "target class {c} out of range for a model with {} classes",
            model.classes()
        )));
    }
    Ok(())
}

/// Backpropagates `dlogits` through a stored trace.
///
/// Returns `∂L/∂x` (row-major `T × D`) and accumulates parameter gradients
/// into `grads` when given.
pub fn backward(
    model: &ModelParams,
    seq: &InputSequence,
    trace: &Trace,
    dlogits: &[f64],
    mut grads: Option<&mut ModelParams>,
) -> Vec<f64> {
    counters::record_backward();
    let mut dfinal = vec![0.0; trace.final_hidden.len()];
    model.output.mul_t_vec_add(dlogits, &mut dfinal);
    if let Some(g) = grads.as_deref_mut() {
        g.output.add_outer(dlogits, &trace.final_hidden);
        if let Some(b) = g.output_bias.as_mut() {
            b.iter_mut().zip(dlogits).for_each(|(b, d)| *b += d);
        }
    }
    let h = model.hidden();
    let mut dx = vec![0.0; seq.len() * seq.dim()];
    backward_direction(
        &model.forward,
        model.cell,
        seq,
        &trace.forward,
        &dfinal[..h],
        &mut dx,
        grads.as_deref_mut().map(|g| &mut g.forward),
    );
    if let (Some(w), Some(tr)) = (&model.backward, &trace.backward) {
        backward_direction(
            w,
            model.cell,
            seq,
            tr,
            &dfinal[h..],
            &mut dx,
            grads.and_then(|g| g.backward.as_mut()),
        );
    }
    dx
}

fn backward_direction(
    w: &LstmWeights,
    kind: CellKind,
    seq: &InputSequence,
    tr: &DirectionTrace,
    dh_final: &[f64],
    dx: &mut [f64],
    mut grads: Option<&mut LstmWeights>,
) {
    let hsz = tr.hidden();
    let d = seq.dim();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; hsz];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hsz]);
    let zeros = vec![0.0; hsz];
    for s in (0..tr.len()).rev() {
        let c_prev = if s == 0 { zeros.as_slice() } else { tr.cell(s - 1) };
        let (gi, gf, go, gg) = (
            tr.gate(s, GATE_I),
            tr.gate(s, GATE_F),
            tr.gate(s, GATE_O),
            tr.gate(s, GATE_G),
        );
        let ca = tr.cell_activation(s);
        for j in 0..hsz {
            let d_o = dh[j] * ca[j];
            dc[j] += dh[j] * go[j] * kind.cell_derivative(ca[j]);
            let d_i = dc[j] * gg[j];
            let d_g = dc[j] * gi[j];
            let d_f = dc[j] * c_prev[j];
            da[GATE_I][j] = d_i * kind.gate_derivative(GATE_I, gi[j]);
            da[GATE_F][j] = d_f * kind.gate_derivative(GATE_F, gf[j]);
            da[GATE_O][j] = d_o * kind.gate_derivative(GATE_O, go[j]);
            da[GATE_G][j] = d_g * kind.gate_derivative(GATE_G, gg[j]);
            dc[j] *= gf[j];
        }
        let pos = tr.position(s);
        let x = seq.step(pos);
        let h_prev = if s == 0 { zeros.as_slice() } else { tr.h(s - 1) };
        if let Some(g) = grads.as_deref_mut() {
            for k in 0..4 {
                g.recurrent[k].add_outer(&da[k], h_prev);
                g.input[k].add_outer(&da[k], x);
                g.bias[k].iter_mut().zip(&da[k]).for_each(|(b, v)| *b += v);
            }
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        let dxt = &mut dx[pos * d..(pos + 1) * d];
        for k in 0..4 {
            w.recurrent[k].mul_t_vec_add(&da[k], &mut dh);
            w.input[k].mul_t_vec_add(&da[k], dxt);
        }
    }
}

/// Exact gradient of the pre-softmax score `f_c` with respect to every input
/// component. One forward and one backward pass.
pub fn input_gradient(model: &ModelParams, seq: &InputSequence, c: usize) -> Result<InputGradient> {
    check_class(model, c)?;
    let trace = model.forward_trace(seq)?;
    Ok(input_gradient_from_trace(model, seq, &trace, c))
}

pub fn input_gradient_from_trace(model: &ModelParams, seq: &InputSequence, trace: &Trace, c: usize) -> InputGradient {
    let mut onehot = vec![0.0; model.classes()];
    onehot[c] = 1.0;
    InputGradient {
        class: c,
        len: seq.len(),
        dim: seq.dim(),
        values: backward(model, seq, trace, &onehot, None),
    }
}

/// Max over `(t, d)` of `|G − FD| / (|G| + step)` against central differences
/// of `f_c`, using a caller-supplied gradient.
pub fn finite_diff_error(
    model: &ModelParams,
    seq: &InputSequence,
    c: usize,
    step: f64,
    grad: &InputGradient,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    check_class(model, c)?;
    let mut probe = seq.clone();
    let mut worst: f64 = 0.0;
    for idx in 0..seq.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + step;
        let up = model.logits(&probe)?[c];
        probe.as_mut_slice()[idx] = orig - step;
        let down = model.logits(&probe)?[c];
        probe.as_mut_slice()[idx] = orig;
        let fd = (up - down) / (2.0 * step);
        let g = grad.values[idx];
        worst = worst.max((g - fd).abs() / (g.abs() + step));
    }
    Ok(worst)
}

pub fn finite_diff_check(model: &ModelParams, seq: &InputSequence, c: usize, step: f64) -> Result<f64> {
    let g = input_gradient(model, seq, c)?;
    finite_diff_error(model, seq, c, step, &g)
}

/// Mean squared error of output 0 over a regression batch.
pub fn mse<S: Borrow<InputSequence>>(model: &ModelParams, batch: &[(S, f64)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for (seq, y) in batch {
        let p = model.logits(seq.borrow())?[0];
        total += (p - y) * (p - y);
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of the batch-mean squared error with respect to every tensor.
/// Returns `(loss, gradients)`; gradients share the shape of `model`.
pub fn param_gradient<S: Borrow<InputSequence>>(model: &ModelParams, batch: &[(S, f64)]) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = ModelParams::zeros(model.shape());
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (seq, y) in batch {
        let seq = seq.borrow();
        let trace = model.forward_trace(seq)?;
        let err = trace.logits[0] - y;
        loss += err * err;
        let mut dlogits = vec![0.0; model.classes()];
        dlogits[0] = 2.0 * err / n;
        backward(model, seq, &trace, &dlogits, Some(&mut grads));
    }
    Ok((loss / n, grads))
}

/// Softmax cross-entropy over a labelled batch. Returns the mean loss, the
/// parameter gradients, and `∂L/∂x` for every sample (for embedding updates).
pub fn cross_entropy_gradient(
    model: &ModelParams,
    batch: &[(&InputSequence, usize)],
) -> Result<(f64, ModelParams, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = ModelParams::zeros(model.shape());
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dxs = Vec::with_capacity(batch.len());
    for (seq, label) in batch {
        check_class(model, *label)?;
        let trace = model.forward_trace(seq)?;
        let p = crate::lstm::class_probabilities(&trace.logits)?;
        loss -= p[*label].max(1e-300).ln();
        let mut dlogits: Vec<f64> = p.iter().map(|v| v / n).collect();
        dlogits[*label] -= 1.0 / n;
        dxs.push(backward(model, seq, &trace, &dlogits, Some(&mut grads)));
    }
    Ok((loss / n, grads, dxs))
}

/// Max relative error of [`param_gradient`] against central differences of
/// the batch MSE, over every parameter.
pub fn param_finite_diff_check(model: &ModelParams, batch: &[(InputSequence, f64)], step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, grads) = param_gradient(model, batch)?;
    let analytic = grads.to_flat();
    let base = model.to_flat();
    let mut probe = model.clone();
    let mut flat = base.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.set_flat(&flat);
        let up = mse(&probe, batch)?;
        flat[i] = base[i] - step;
        probe.set_flat(&flat);
        let down = mse(&probe, batch)?;
        flat[i] = base[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((analytic[i] - fd).abs() / (analytic[i].abs() + step));
    }
    Ok(worst)
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before and after clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> (f64, f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
        let after = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        (norm, after)
    } else {
        (norm, norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::ModelShape;
    use crate::seed;
    use crate::tensor::Matrix;
    use rand::Rng;

    fn random_seq(rng: &mut impl Rng, t: usize, d: usize) -> InputSequence {
        InputSequence::new(d, (0..t * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_model(rng: &mut impl Rng, shape: ModelShape) -> ModelParams {
        let mut m = ModelParams::random(shape, rng, -1.0, 1.0);
        m.randomize_biases(rng, -0.5, 0.5);
        m
    }

    #[test]
    fn saturated_gates_give_linear_coefficients() {
        // i, o pinned open and f closed by huge biases; g and tanh(c) in their
        // linear regime through tiny weights. The score is then
        // w * u · x_T (only the last input survives a closed forget gate).
        let mut m = ModelParams::zeros(ModelShape::toy());
        m.forward.bias[GATE_I][0] = 60.0;
        m.forward.bias[GATE_O][0] = 60.0;
        m.forward.bias[GATE_F][0] = -60.0;
        m.forward.input[GATE_G] = Matrix::from_vec(1, 2, vec![1e-4, -2e-4]);
        m.output[(0, 0)] = 3.0;
        let seq = InputSequence::from_rows(&[vec![0.5, 0.1], vec![-0.2, 0.7], vec![0.9, -0.4]]).unwrap();
        let g = input_gradient(&m, &seq, 0).unwrap();
        for t in 0..2 {
            assert!(g.step(t).iter().all(|v| v.abs() < 1e-20));
        }
        assert!((g.step(2)[0] - 3e-4).abs() < 1e-10);
        assert!((g.step(2)[1] + 6e-4).abs() < 1e-10);
    }

    #[test]
    fn gradient_is_homogeneous_in_output_row() {
        let mut rng = seed::rng(21);
        let shape = ModelShape {
            hidden: 3,
            input_dim: 2,
            classes: 3,
            bidirectional: true,
            output_bias: true,
            cell: CellKind::Lstm,
        };
        let m = random_model(&mut rng, shape);
        let seq = random_seq(&mut rng, 5, 2);
        let g1 = input_gradient(&m, &seq, 1).unwrap();
        let mut m2 = m.clone();
        m2.output.row_mut(1).iter_mut().for_each(|w| *w *= 2.0);
        let g2 = input_gradient(&m2, &seq, 1).unwrap();
        for (a, b) in g1.values.iter().zip(&g2.values) {
            assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn finite_differences_on_toy_models() {
        let mut rng = seed::rng(22);
        for _ in 0..20 {
            let m = random_model(&mut rng, ModelShape::toy());
            let seq = random_seq(&mut rng, 4, 2);
            assert!(finite_diff_check(&m, &seq, 0, 1e-5).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn linear_model_gradient_is_exact() {
        let mut rng = seed::rng(23);
        let shape = ModelShape {
            hidden: 2,
            input_dim: 3,
            classes: 1,
            bidirectional: false,
            output_bias: false,
            cell: CellKind::Linear,
        };
        let m = random_model(&mut rng, shape);
        let seq = random_seq(&mut rng, 4, 3);
        let e = finite_diff_check(&m, &seq, 0, 0.5).unwrap();
        assert!(e <= 1e-10, "{e}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = seed::rng(24);
        let m = random_model(&mut rng, ModelShape::toy());
        let seq = random_seq(&mut rng, 4, 2);
        let mut g = input_gradient(&m, &seq, 0).unwrap();
        g.values[3] += 1.0;
        assert!(finite_diff_error(&m, &seq, 0, 1e-5, &g).unwrap() >= 0.5);
    }

    #[test]
    fn gradient_rows_match_sequence_length() {
        let mut rng = seed::rng(25);
        let m = random_model(&mut rng, ModelShape::toy());
        for t in 1..6 {
            let seq = random_seq(&mut rng, t, 2);
            assert_eq!(input_gradient(&m, &seq, 0).unwrap().values.len(), 2 * t);
        }
        assert!(input_gradient(&m, &random_seq(&mut rng, 2, 2), 1).is_err());
    }

    #[test]
    fn zero_model_has_zero_parameter_gradient() {
        let m = ModelParams::zeros(ModelShape::toy());
        let seq = InputSequence::new(2, vec![0.0; 8]).unwrap();
        let (loss, g) = param_gradient(&m, &[(seq, 0.0)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(param_gradient::<InputSequence>(&m, &[]).is_err());
    }

    #[test]
    fn output_weight_gradient_is_chain_rule() {
        let mut rng = seed::rng(26);
        let m = random_model(&mut rng, ModelShape::toy());
        let seq = random_seq(&mut rng, 5, 2);
        let tr = m.forward_trace(&seq).unwrap();
        let y = 0.3;
        let (_, g) = param_gradient(&m, &[(seq, y)]).unwrap();
        let want = 2.0 * (tr.logits[0] - y) * tr.final_hidden[0];
        assert!((g.output[(0, 0)] - want).abs() <= 1e-15);
    }

    #[test]
    fn parameter_finite_differences() {
        let mut rng = seed::rng(27);
        for bidirectional in [false, true] {
            let shape = ModelShape {
                hidden: 2,
                input_dim: 2,
                classes: 1,
                bidirectional,
                output_bias: bidirectional,
                cell: CellKind::Lstm,
            };
            let m = random_model(&mut rng, shape);
            let batch: Vec<_> = (0..3).map(|i| (random_seq(&mut rng, 3 + i, 2), rng.gen_range(-1.0..1.0))).collect();
            assert!(param_finite_diff_check(&m, &batch, 1e-5).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0, 12.0];
        let (pre, post) = clip_global_norm(&mut g, 5.0);
        assert_eq!(pre, 13.0);
        assert!(post <= 5.0 + 1e-12);
        let mut small = vec![0.1, 0.2];
        assert_eq!(clip_global_norm(&mut small, 5.0).1, clip_global_norm(&mut vec![0.1, 0.2], 5.0).0);
    }
}
