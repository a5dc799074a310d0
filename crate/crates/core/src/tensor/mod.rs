//! Dense n-dimensional f64 arrays with tape-based reverse-mode autodiff.
//!
//! A [`Tensor`] is an immutable value: shape and data never change after
//! construction. The only mutable slot is the gradient, which `backward`
//! fills and `zero_grad` clears. Gradients accumulate additively across
//! backward calls, mirroring minibatch SGD semantics.
//!
//! Differentiation is scoped: operations are recorded onto a thread-local
//! tape only inside [`tape::with_tape`], and only when an operand is
//! connected to that tape. Two kinds of leaf participate in gradients:
//! parameters ([`Tensor::param`]) and inputs ([`Tensor::input_leaf`]).
//! The distinction drives the pass counters in [`crate::counters`]: a
//! backward pass that delivers gradient to an input leaf is counted as an
//! input-gradient pass, anything else as a parameter pass. That split is
//! what lets the training loops prove "no input gradients were computed
//! here" instead of merely claiming it.

mod conv;
mod ops;
pub mod tape;

use crate::error::{Error, Result};
use std::cell::{Cell, RefCell};
use std::rc::Rc;

/// What role a gradient leaf plays, for pass accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Model parameter: gradients feed the optimizer.
    Param,
    /// Network input: gradients feed input-space attacks.
    Input,
}

pub(crate) struct Inner {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    leaf: Option<LeafKind>,
    grad: RefCell<Option<Vec<f64>>>,
    /// Node id on the tape generation it was last recorded under.
    node: Cell<Option<(u64, usize)>>,
}

/// Dense n-dimensional array of f64, cheap to clone (shared storage).
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

fn check_shape(shape: &[usize], data: &[f64]) -> Result<()> {
    let numel: usize = shape.iter().product();
    if shape.contains(&0) {
        return Err(Error::Dimension(format!(
            "zero-sized dimension in shape {shape:?}"
        )));
    }
    if numel != data.len() {
        return Err(Error::Dimension(format!(
            "shape {shape:?} implies {numel} elements, got {}",
            data.len()
        )));
    }
    Ok(())
}

impl Tensor {
    fn build(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        leaf: Option<LeafKind>,
    ) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad,
                leaf,
                grad: RefCell::new(None),
                node: Cell::new(None),
            }),
        }
    }

    /// A constant tensor; never receives gradient.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        check_shape(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// A parameter leaf: requires grad, counted as a parameter pass.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        check_shape(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, true, Some(LeafKind::Param)))
    }

    /// An input leaf: requires grad, counted as an input-gradient pass.
    /// Attacks wrap the batch they differentiate through in one of these.
    pub fn input_leaf(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        check_shape(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, true, Some(LeafKind::Input)))
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn scalar(value: f64) -> Tensor {
        Self::build(vec![1], vec![value], false, None)
    }

    /// Result of an op: requires_grad reflects tape connectivity.
    pub(crate) fn derived(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self::build(shape, data, requires_grad, None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn leaf_kind(&self) -> Option<LeafKind> {
        self.inner.leaf
    }

    /// The scalar value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "item() requires a scalar, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    /// Current gradient, if backward has delivered one.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f64]) {
        debug_assert_eq!(contrib.len(), self.len());
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(grad) => {
                for (g, c) in grad.iter_mut().zip(contrib) {
                    *g += c;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Same data viewed under a new shape (copies the buffer).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        ops::reshape(self, shape)
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|x| x.is_finite())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("leaf", &self.inner.leaf)
            .finish()
    }
}
