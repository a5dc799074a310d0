//! Global pass counters.
//!
//! Forward passes, parameter-gradient backward passes, and input-gradient
//! backward passes are counted in thread-local monotone counters. There is
//! deliberately no reset: callers take a [`snapshot`] before and after a
//! region and difference the two. This is what makes claims like "this
//! training loop performed zero input-gradient passes" mechanically
//! checkable.

use serde::{Deserialize, Serialize};
use std::cell::Cell;

thread_local! {
    static FORWARD: Cell<u64> = const { Cell::new(0) };
    static PARAM_BACKWARD: Cell<u64> = const { Cell::new(0) };
    static INPUT_GRAD: Cell<u64> = const { Cell::new(0) };
}

/// A point-in-time reading of the three pass counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PassCounts {
    pub forward: u64,
    pub param_backward: u64,
    pub input_grad: u64,
}

impl PassCounts {
    /// Counter increments between `earlier` and `self`.
    pub fn since(&self, earlier: &PassCounts) -> PassCounts {
        PassCounts {
            forward: self.forward - earlier.forward,
            param_backward: self.param_backward - earlier.param_backward,
            input_grad: self.input_grad - earlier.input_grad,
        }
    }
}

pub fn snapshot() -> PassCounts {
    PassCounts {
        forward: FORWARD.with(Cell::get),
        param_backward: PARAM_BACKWARD.with(Cell::get),
        input_grad: INPUT_GRAD.with(Cell::get),
    }
}

pub(crate) fn count_forward() {
    FORWARD.with(|c| c.set(c.get() + 1));
}

/// A backward pass counts as an input-gradient pass when at least one
/// input-kind leaf received gradient; otherwise it is a parameter pass.
pub(crate) fn count_backward(touched_input_leaf: bool) {
    if touched_input_leaf {
        INPUT_GRAD.with(|c| c.set(c.get() + 1));
    } else {
        PARAM_BACKWARD.with(|c| c.set(c.get() + 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_are_monotone() {
        let before = snapshot();
        count_forward();
        count_backward(false);
        count_backward(true);
        let after = snapshot();
        let delta = after.since(&before);
        assert_eq!(delta.forward, 1);
        assert_eq!(delta.param_backward, 1);
        assert_eq!(delta.input_grad, 1);
    }
}
