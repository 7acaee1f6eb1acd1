//! Fixtures shared by the benchmarks.

use lstm_relevance::{CellKind, InputSequence, ModelParams, ModelShape};
use rand::Rng;

/// Random bi-LSTM with the classifier's default dimensions.
pub fn classifier_model(seed: u64) -> ModelParams {
    let shape = ModelShape {
        hidden: 32,
        input_dim: 16,
        classes: 5,
        bidirectional: true,
        output_bias: true,
        cell: CellKind::Lstm,
    };
    ModelParams::random(shape, &mut lstm_relevance::seed::rng(seed), -0.3, 0.3)
}

pub fn random_sequence(len: usize, dim: usize, seed: u64) -> InputSequence {
    let mut rng = lstm_relevance::seed::rng(seed);
    let data = (0..len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    InputSequence::new(dim, data).expect("positive length")
}
