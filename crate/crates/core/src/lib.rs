//! Attribution methods for LSTM models and the evaluation protocols used to
//! compare them.
//!
//! The crate is organised bottom-up:
//!
//! * [`lstm`]: exact (bi-)LSTM forward passes with activation traces.
//! * [`grad`]: reverse-mode gradients, finite-difference checks, and the
//!   toy-task trainer in [`train`].
//! * [`explain`]: Gradient, Gradient×Input, Occlusion, LRP (four product
//!   rules) and Contextual Decomposition, all returning a [`RelevanceMap`].
//! * [`toy`]: the signed-addition / positive-subtraction ground-truth
//!   benchmark.
//! * [`sentiment`]: perturbation, representation and composition analyses
//!   on a synthetic five-class sentiment corpus.

pub mod counters;
pub mod error;
pub mod explain;
pub mod grad;
pub mod model_io;
pub mod lstm;
pub mod seed;
pub mod sentiment;
pub mod tensor;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
pub use explain::{LrpConfig, LrpRule, Method, RelevanceMap};
pub use lstm::{CellKind, InputSequence, ModelParams, ModelShape, Trace};
pub use tensor::Matrix;
