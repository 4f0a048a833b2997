//! Minimal 1-D convolutional network primitives with hand-written backward
//! passes, generic over `f32` (training) and `f64` (gradient checks).
//!
//! Activations are laid out `[batch][channel][time]`. Per-sample work is
//! spread over the rayon pool; cross-sample reductions (weight gradients,
//! batch statistics) always sum in sample order so results do not depend on
//! scheduling.

mod batchnorm;
mod conv;
mod linear;
mod param;
mod pool;
mod tensor;

pub use batchnorm::{BatchNorm1d, BnCache};
pub use conv::{Conv1d, Padding};
pub use linear::Linear;
pub use param::{Param, ParamVisitor, ParamVisitorMut};
pub use pool::{MaxPool3, PoolCache};
pub use tensor::{Matrix, Tensor3};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type usable by every layer.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Whether layers use batch statistics (and update running ones) or the
/// stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `y += a * x` over equal-length slices.
#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Scalar>(output: &[T], grad: &mut [T]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}
