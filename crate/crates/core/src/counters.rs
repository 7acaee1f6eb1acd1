//! Per-thread counters of model forward and backward passes.
//!
//! Every full forward evaluation of a model (with or without a stored trace)
//! and every reverse pass over a trace bumps the counter of the calling
//! thread. Complexity contracts of the explainers are checked against these.

use std::cell::Cell;

thread_local! {
    static FORWARD: Cell<usize> = const { Cell::new(0) };
    static BACKWARD: Cell<usize> = const { Cell::new(0) };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PassCounts {
    pub forward: usize,
    pub backward: usize,
}

pub(crate) fn record_forward() {
    FORWARD.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_backward() {
    BACKWARD.with(|c| c.set(c.get() + 1));
}

pub fn snapshot() -> PassCounts {
    PassCounts {
        forward: FORWARD.with(Cell::get),
        backward: BACKWARD.with(Cell::get),
    }
}

pub fn reset() {
    FORWARD.with(|c| c.set(0));
    BACKWARD.with(|c| c.set(0));
}

/// Runs `f` and returns its result along with the passes it performed on
/// this thread.
pub fn count<T>(f: impl FnOnce() -> T) -> (T, PassCounts) {
    let before = snapshot();
    let out = f();
    let after = snapshot();
    (
        out,
        PassCounts {
            forward: after.forward - before.forward,
            backward: after.backward - before.backward,
        },
    )
}
