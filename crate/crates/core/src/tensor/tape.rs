//! The gradient tape: a per-thread, explicitly scoped recording of
//! differentiable operations.
//!
//! Nodes are appended in execution order, so the tape is already a
//! topological order of the computation graph; one reverse sweep visits
//! each node exactly once. Entering a scope with [`with_tape`] starts a
//! fresh tape; leaving it drops every recorded node. Tensors produced
//! under an earlier scope act as constants in later ones.

use super::{Inner, LeafKind, Tensor};
use crate::counters;
use crate::error::{Error, Result};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::{Rc, Weak};

/// Propagates the output gradient of one node to its parents.
/// `ctx.needs(pos)` tells whether parent `pos` is connected at all, so
/// rules can skip dead branches (e.g. weight gradients in a detached
/// model during an input-space attack).
pub(crate) type BackFn = Box<dyn Fn(&[f64], &mut BackwardCtx<'_>)>;

struct Node {
    /// Tape ids of the op's operands; `None` marks an unconnected operand.
    parents: Vec<Option<usize>>,
    back: BackFn,
    /// The tensor this node produced, if still alive, so backward can
    /// publish its gradient.
    out: Weak<Inner>,
}

struct TapeState {
    generation: u64,
    nodes: Vec<Node>,
    /// Leaf tensors already assigned a node on this tape.
    leaf_ids: HashMap<*const Inner, usize>,
}

thread_local! {
    static TAPE: RefCell<Option<TapeState>> = const { RefCell::new(None) };
    static GENERATION: RefCell<u64> = const { RefCell::new(0) };
}

/// Runs `f` with a fresh gradient tape active on this thread. Nested calls
/// stack: the inner tape shadows the outer one until `f` returns.
pub fn with_tape<T>(f: impl FnOnce() -> T) -> T {
    let generation = GENERATION.with(|g| {
        let mut g = g.borrow_mut();
        *g += 1;
        *g
    });
    let fresh = TapeState {
        generation,
        nodes: Vec::new(),
        leaf_ids: HashMap::new(),
    };
    let saved = TAPE.with(|t| t.borrow_mut().replace(fresh));
    struct Restore(Option<TapeState>);
    impl Drop for Restore {
        fn drop(&mut self) {
            let prev = self.0.take();
            TAPE.with(|t| *t.borrow_mut() = prev);
        }
    }
    let _restore = Restore(saved);
    f()
}

pub fn is_active() -> bool {
    TAPE.with(|t| t.borrow().is_some())
}

/// Node id of `t` on the active tape, registering it as a leaf if it is a
/// gradient leaf not seen before. `None` means `t` is a constant here.
fn connect(t: &Tensor, state: &mut TapeState) -> Option<usize> {
    if let Some((generation, id)) = t.inner.node.get() {
        if generation == state.generation {
            return Some(id);
        }
    }
    if t.requires_grad() && t.leaf_kind().is_some() {
        let ptr = Rc::as_ptr(&t.inner);
        if let Some(&id) = state.leaf_ids.get(&ptr) {
            return Some(id);
        }
        let id = state.nodes.len();
        state.nodes.push(Node {
            parents: Vec::new(),
            back: Box::new(|_, _| {}),
            out: Rc::downgrade(&t.inner),
        });
        state.leaf_ids.insert(ptr, id);
        t.inner.node.set(Some((state.generation, id)));
        return Some(id);
    }
    None
}

/// Whether `t` would contribute gradient if recorded now.
pub(crate) fn is_connected(t: &Tensor) -> bool {
    TAPE.with(|tape| {
        let tape = tape.borrow();
        let Some(state) = tape.as_ref() else {
            return false;
        };
        if let Some((generation, _)) = t.inner.node.get() {
            if generation == state.generation {
                return true;
            }
        }
        t.requires_grad() && t.leaf_kind().is_some()
    })
}

/// Records `out = op(parents)` on the active tape. Call only when a tape
/// is active and at least one parent is connected; returns whether the
/// node was recorded (i.e. whether `out` is differentiable).
pub(crate) fn record(parents: &[&Tensor], out: &Tensor, back: BackFn) -> bool {
    TAPE.with(|tape| {
        let mut tape = tape.borrow_mut();
        let Some(state) = tape.as_mut() else {
            return false;
        };
        let parent_ids: Vec<Option<usize>> =
            parents.iter().map(|p| connect(p, state)).collect();
        if parent_ids.iter().all(Option::is_none) {
            return false;
        }
        let id = state.nodes.len();
        state.nodes.push(Node {
            parents: parent_ids,
            back,
            out: Rc::downgrade(&out.inner),
        });
        out.inner.node.set(Some((state.generation, id)));
        true
    })
}

/// Gradient sink handed to backward rules.
pub(crate) struct BackwardCtx<'a> {
    parents: &'a [Option<usize>],
    grads: &'a mut [Option<Vec<f64>>],
}

impl BackwardCtx<'_> {
    /// Whether parent `pos` is connected and therefore worth computing.
    pub fn needs(&self, pos: usize) -> bool {
        self.parents.get(pos).is_some_and(Option::is_some)
    }

    /// Accumulates `contrib` into parent `pos`'s gradient.
    pub fn add(&mut self, pos: usize, contrib: Vec<f64>) {
        if let Some(Some(id)) = self.parents.get(pos) {
            match &mut self.grads[*id] {
                Some(acc) => {
                    debug_assert_eq!(acc.len(), contrib.len());
                    for (a, c) in acc.iter_mut().zip(&contrib) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        }
    }
}

/// Reverse sweep from a scalar root. Every tensor with `requires_grad`
/// reachable from the root receives (accumulates) its gradient. Increments
/// the input-gradient counter when gradient reached an input leaf,
/// otherwise the parameter counter.
pub fn backward(root: &Tensor) -> Result<()> {
    if root.len() != 1 {
        return Err(Error::Contract(format!(
            "backward requires a scalar root, shape is {:?}",
            root.shape()
        )));
    }
    // Take the tape out for the sweep; backward rules never record.
    let state = TAPE
        .with(|t| t.borrow_mut().take())
        .ok_or_else(|| Error::Contract("backward called outside a tape scope".into()))?;
    let root_id = match root.inner.node.get() {
        Some((generation, id)) if generation == state.generation => id,
        _ => {
            TAPE.with(|t| *t.borrow_mut() = Some(state));
            return Err(Error::Contract(
                "backward root was not recorded under the active tape".into(),
            ));
        }
    };

    let mut grads: Vec<Option<Vec<f64>>> = vec![None; state.nodes.len()];
    grads[root_id] = Some(vec![1.0]);
    let mut touched_input_leaf = false;

    for id in (0..=root_id).rev() {
        let Some(grad) = grads[id].take() else {
            continue;
        };
        let node = &state.nodes[id];
        if let Some(inner) = node.out.upgrade() {
            if inner.requires_grad {
                let holder = Tensor { inner };
                holder.accumulate_grad(&grad);
                if holder.leaf_kind() == Some(LeafKind::Input) {
                    touched_input_leaf = true;
                }
            }
        }
        let mut ctx = BackwardCtx {
            parents: &node.parents,
            grads: &mut grads,
        };
        (node.back)(&grad, &mut ctx);
    }

    counters::count_backward(touched_input_leaf);
    TAPE.with(|t| *t.borrow_mut() = Some(state));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_outside_tape_is_contract_error() {
        let x = Tensor::param(&[1], vec![2.0]).unwrap();
        let err = backward(&x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_on_non_scalar_is_contract_error() {
        with_tape(|| {
            let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
            let y = x.relu();
            let err = backward(&y).unwrap_err();
            assert!(matches!(err, Error::Contract(_)));
        });
    }

    #[test]
    fn stale_tensor_from_old_scope_is_constant() {
        let x = Tensor::param(&[1], vec![3.0]).unwrap();
        let y = with_tape(|| x.mul(&x).unwrap());
        with_tape(|| {
            // y was produced under a dropped tape: using it records nothing.
            let z = y.scale(2.0);
            let err = backward(&z).unwrap_err();
            assert!(matches!(err, Error::Contract(_)));
        });
    }

    #[test]
    fn nested_scopes_shadow() {
        let w = Tensor::param(&[1], vec![2.0]).unwrap();
        with_tape(|| {
            let outer = w.mul(&w).unwrap();
            with_tape(|| {
                let inner = w.mul(&w).unwrap();
                backward(&inner).unwrap();
            });
            assert_eq!(w.grad().unwrap(), vec![4.0]);
            w.zero_grad();
            backward(&outer).unwrap();
            assert_eq!(w.grad().unwrap(), vec![4.0]);
        });
    }
}
