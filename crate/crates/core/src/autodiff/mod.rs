//! A small tape-based reverse-mode differentiation engine covering the
//! operations of the next-step networks: strided and periodic 2D convolution,
//! ReLU, layer normalization, pixel shuffle, rank-1 parameter maps, sums,
//! concatenation and the mean-squared loss.
//!
//! Tensors are single samples laid out `[C, H, W]`; a mini-batch is a sequence
//! of independent graphs whose gradients are reduced in sample order.

mod adam;
mod conv;
mod graph;
mod gradcheck;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use adam::{adam_step, Adam, AdamHyper, AdamState};
pub use conv::{conv_output_size, Padding};
pub use graph::{pixel_unshuffle, Gradients, Graph, Var};
pub use gradcheck::{compare_gradients, gradcheck, GradcheckOptions, GradcheckReport};

/// Floating-point element type of tensors (`f32` for training, `f64` for
/// gradient checks).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// `c = a * b + beta * c` for row/column-strided matrices
    /// (`a` is `m x k`, `b` is `k x n`, `c` is `m x n`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_strides: (isize, isize), b: &[Self], b_strides: (isize, isize), beta: Self, c: &mut [Self], c_strides: (isize, isize));

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_gemm_bounds<T>(rows: usize, cols: usize, strides: (isize, isize), buf: &[T]) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * strides.0 + (cols - 1) as isize * strides.1;
    assert!(strides.0 >= 0 && strides.1 >= 0 && (last as usize) < buf.len(), "gemm operand out of bounds");
}

impl Real for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], sa: (isize, isize), b: &[f32], sb: (isize, isize), beta: f32, c: &mut [f32], sc: (isize, isize)) {
        check_gemm_bounds(m, k, sa, a);
        check_gemm_bounds(k, n, sb, b);
        check_gemm_bounds(m, n, sc, c);
        // SAFETY: every operand's extent was checked against its slice above.
        unsafe {
            matrixmultiply::sgemm(m, k, n, 1.0, a.as_ptr(), sa.0, sa.1, b.as_ptr(), sb.0, sb.1, beta, c.as_mut_ptr(), sc.0, sc.1);
        }
    }
}

impl Real for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (isize, isize), b: &[f64], sb: (isize, isize), beta: f64, c: &mut [f64], sc: (isize, isize)) {
        check_gemm_bounds(m, k, sa, a);
        check_gemm_bounds(k, n, sb, b);
        check_gemm_bounds(m, n, sc, c);
        // SAFETY: every operand's extent was checked against its slice above.
        unsafe {
            matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), sa.0, sa.1, b.as_ptr(), sb.0, sb.1, beta, c.as_mut_ptr(), sc.0, sc.1);
        }
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> crate::Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(crate::Error::ShapeMismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Element type conversion.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| U::of(v.to_f64_lossy())).collect() }
    }

    pub fn dims3(&self) -> crate::Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(crate::Error::ShapeMismatch(format!("expected a [C, H, W] tensor, got {other:?}"))),
        }
    }
}
