//! Dense tensors, a reverse-mode tape, finite-difference checking and Adam.

mod adam;
mod gradcheck;
pub(crate) mod kernels;
mod params;
mod tape;

use std::sync::atomic::{AtomicU8, Ordering};

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{Binding, ParamId, ParamSet};
pub use tape::{OpKind, Tape, Var};

use crate::error::{Error, Result};

/// Numeric storage mode for tape values and parameters.
///
/// All arithmetic is carried out in 64-bit floats. In `F32` mode every value
/// written to the tape and every parameter update is rounded to the nearest
/// 32-bit float, so trained weights are exactly representable in the 32-bit
/// checkpoint blob.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

static DEFAULT_PRECISION: AtomicU8 = AtomicU8::new(0);

/// Process-wide default picked up by [`Tape::new`].
pub fn set_default_precision(p: Precision) {
    DEFAULT_PRECISION.store(p as u8, Ordering::Relaxed);
}

pub fn default_precision() -> Precision {
    match DEFAULT_PRECISION.load(Ordering::Relaxed) {
        1 => Precision::F32,
        _ => Precision::F64,
    }
}

impl Precision {
    #[inline]
    pub fn round(self, data: &mut [f64]) {
        if self == Precision::F32 {
            for v in data {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Dense row-major array of reals.
///
/// Matrix operations view a tensor as `rows x cols`, where `cols` is the last
/// dimension and `rows` the product of the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) || shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 2-D tensor from row-major data. Panics if the sizes disagree.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(&[rows, cols], data).expect("matrix dimensions")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zeros shape")
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("filled shape")
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// Single-row matrix `[1, n]`.
    pub fn row(values: &[f64]) -> Self {
        Self::matrix(1, values.len(), values.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    pub fn dims2(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }
}
