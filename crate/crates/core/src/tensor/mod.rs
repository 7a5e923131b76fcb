//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! [`Tensor`] is a shared handle to an n-dimensional array plus an optional
//! gradient accumulator. Operations (see [`ops`]) record a backward rule on a
//! [`Tape`]; [`Tape::backward`] replays the rules in reverse to populate
//! gradients. Gradient accumulation is additive: two backward passes through
//! the same leaf sum their contributions.

pub(crate) mod kernels;
pub mod ops;
pub mod sgd;

use crate::error::{Error, Result};
use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

/// Payload behind a [`Tensor`] handle.
#[derive(Debug)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    /// Same-shape accumulator; `Some` iff `requires_grad`.
    pub grad: Option<Vec<f64>>,
}

/// Shared handle to a tensor. Cloning the handle aliases the same storage.
#[derive(Clone, Debug)]
pub struct Tensor(Rc<RefCell<TensorData>>);

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::DimMismatch {
                op: "tensor",
                axis: "element count",
                expected: numel,
                got: data.len(),
            });
        }
        let grad = requires_grad.then(|| vec![0.0; data.len()]);
        Ok(Tensor(Rc::new(RefCell::new(TensorData {
            shape,
            data,
            requires_grad,
            grad,
        }))))
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Tensor {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel], requires_grad).expect("consistent shape")
    }

    /// Constant (non-differentiable) tensor.
    pub fn constant(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        Tensor::new(shape, data, false)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v], false).expect("scalar")
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.borrow().requires_grad
    }

    pub fn borrow(&self) -> Ref<'_, TensorData> {
        self.0.borrow()
    }

    pub fn borrow_mut(&self) -> RefMut<'_, TensorData> {
        self.0.borrow_mut()
    }

    pub fn data_vec(&self) -> Vec<f64> {
        self.0.borrow().data.clone()
    }

    pub fn grad_vec(&self) -> Option<Vec<f64>> {
        self.0.borrow().grad.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let t = self.0.borrow();
        debug_assert_eq!(t.data.len(), 1);
        t.data[0]
    }

    /// Replace the stored values, keeping shape and gradient buffer.
    pub fn set_data(&self, data: &[f64]) -> Result<()> {
        let mut t = self.0.borrow_mut();
        if data.len() != t.data.len() {
            return Err(Error::DimMismatch {
                op: "set_data",
                axis: "element count",
                expected: t.data.len(),
                got: data.len(),
            });
        }
        t.data.copy_from_slice(data);
        Ok(())
    }

    pub fn zero_grad(&self) {
        if let Some(g) = self.0.borrow_mut().grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Add `delta` into the gradient accumulator. No-op for constants.
    pub fn accumulate_grad(&self, delta: &[f64]) {
        let mut t = self.0.borrow_mut();
        if let Some(g) = t.grad.as_mut() {
            debug_assert_eq!(g.len(), delta.len());
            for (gi, di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

type BackwardFn = Box<dyn Fn()>;

struct TapeEntry {
    #[allow(dead_code)]
    name: &'static str,
    output: Tensor,
    backward: BackwardFn,
}

/// Ordered record of operations for one forward pass.
///
/// Operations are appended in execution order, so inputs always precede the
/// ops that consume them. `clear` drops the recorded graph without touching
/// any tensor data. A disabled tape records nothing (pure inference).
#[derive(Default)]
pub struct Tape {
    entries: Vec<TapeEntry>,
    recording: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            entries: Vec::new(),
            recording: true,
        }
    }

    /// A tape that records nothing; ops run forward-only.
    pub fn disabled() -> Tape {
        Tape {
            entries: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drop the recorded graph. Leaf tensors and their gradients are untouched.
    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub(crate) fn record(&mut self, name: &'static str, output: Tensor, backward: BackwardFn) {
        debug_assert!(self.recording);
        self.entries.push(TapeEntry {
            name,
            output,
            backward,
        });
    }

    /// Reverse sweep from a scalar loss. Populates the gradient of every
    /// `requires_grad` tensor reachable from `loss`; leaves accumulate across
    /// repeated calls, intermediate (op output) gradients are reset per call.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss.shape(),
            });
        }
        if !self.entries.iter().any(|e| e.output.ptr_eq(loss)) {
            return Err(Error::LossNotOnTape);
        }
        for entry in &self.entries {
            entry.output.zero_grad();
        }
        loss.accumulate_grad(&[1.0]);
        for entry in self.entries.iter().rev() {
            (entry.backward)();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::ops;
    use super::*;

    #[test]
    fn tensor_shape_data_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5], false).is_err());
    }

    #[test]
    fn grad_present_iff_requires_grad() {
        let a = Tensor::zeros(vec![4], true);
        let b = Tensor::zeros(vec![4], false);
        assert!(a.grad_vec().is_some());
        assert!(b.grad_vec().is_none());
    }

    #[test]
    fn backward_sum_gives_ones() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 5.0], true).unwrap();
        let mut tape = Tape::new();
        let s = ops::sum(&mut tape, &x).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_sum_of_squares_gives_2x() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 5.0], true).unwrap();
        let mut tape = Tape::new();
        let sq = ops::mul(&mut tape, &x, &x).unwrap();
        let s = ops::sum(&mut tape, &sq).unwrap();
        tape.backward(&s).unwrap();
        assert_eq!(x.grad_vec().unwrap(), vec![2.0, -4.0, 10.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0], true).unwrap();
        let mut tape = Tape::new();
        let y = ops::mul(&mut tape, &x, &x).unwrap();
        assert!(matches!(
            tape.backward(&y),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_rejects_off_tape_loss() {
        let x = Tensor::new(vec![1], vec![3.0], true).unwrap();
        let tape = Tape::new();
        assert!(matches!(tape.backward(&x), Err(Error::LossNotOnTape)));
    }

    #[test]
    fn repeated_backward_accumulates_into_leaves() {
        let x = Tensor::new(vec![2], vec![2.0, 3.0], true).unwrap();
        let mut tape = Tape::new();
        let sq = ops::mul(&mut tape, &x, &x).unwrap();
        let s = ops::sum(&mut tape, &sq).unwrap();
        tape.backward(&s).unwrap();
        tape.backward(&s).unwrap();
        // Two passes sum contributions: 2 * 2x.
        assert_eq!(x.grad_vec().unwrap(), vec![8.0, 12.0]);
    }

    #[test]
    fn two_backwards_match_one_backward_of_doubled_loss() {
        let data = vec![0.3, -1.7, 2.2, 0.9];
        let x = Tensor::new(vec![4], data.clone(), true).unwrap();
        let mut tape = Tape::new();
        let sq = ops::mul(&mut tape, &x, &x).unwrap();
        let s = ops::sum(&mut tape, &sq).unwrap();
        tape.backward(&s).unwrap();
        tape.backward(&s).unwrap();
        let twice = x.grad_vec().unwrap();

        let y = Tensor::new(vec![4], data, true).unwrap();
        let mut tape2 = Tape::new();
        let sq2 = ops::mul(&mut tape2, &y, &y).unwrap();
        let s2 = ops::sum(&mut tape2, &sq2).unwrap();
        let doubled = ops::scale(&mut tape2, &s2, 2.0).unwrap();
        tape2.backward(&doubled).unwrap();
        assert_eq!(twice, y.grad_vec().unwrap());
    }

    #[test]
    fn clearing_tape_keeps_parameter_data_and_grads() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0], true).unwrap();
        let mut tape = Tape::new();
        let s = ops::sum(&mut tape, &x).unwrap();
        tape.backward(&s).unwrap();
        tape.clear();
        assert!(tape.is_empty());
        assert_eq!(x.data_vec(), vec![1.0, 2.0]);
        assert_eq!(x.grad_vec().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn disabled_tape_records_nothing() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0], true).unwrap();
        let mut tape = Tape::disabled();
        let s = ops::sum(&mut tape, &x).unwrap();
        assert!(tape.is_empty());
        assert!(!s.requires_grad());
    }
}
