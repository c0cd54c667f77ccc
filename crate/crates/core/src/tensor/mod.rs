//! Dense NCHW `f64` tensors and the numeric kernels the networks are built
//! from. Kernels come in forward/backward pairs; the autodiff tape in
//! [`crate::autograd`] wires them together.

mod conv;
mod kernels;

pub use conv::{conv2d_backward, conv2d_forward};
pub use kernels::*;

use crate::error::{Error, Result};

/// Four-dimensional `(batch, channels, height, width)` array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for shape {:?} ({} expected)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ni, ci, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: [1, 1, 1, 1],
            data: vec![v],
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }
    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// The `(n, c)` spatial plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// The single value of a `[1, 1, 1, 1]` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_shape(other.shape)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn expect_shape(&self, shape: [usize; 4]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!(
                "expected {:?}, got {:?}",
                shape, self.shape
            )));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Batch element `n` as its own `[1, C, H, W]` tensor.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let stride = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * stride..(n + 1) * stride].to_vec(),
        }
    }

    /// Stack `[1, C, H, W]` tensors of identical shape along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.shape;
        let mut n = 0;
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape, first.shape
                )));
            }
            n += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }
}
