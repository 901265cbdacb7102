//! Dense real-valued latent arrays laid out as `(frames, height, width, channels)`.

use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatentError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: LatentShape, actual: LatentShape },
    #[error("buffer of length {len} does not fit shape {shape}")]
    BadLength { shape: LatentShape, len: usize },
    #[error("latent contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Extent of a latent tensor. Row-major with channels fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LatentShape {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of coefficients in one latent frame.
    pub const fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    #[inline]
    pub const fn offset(&self, f: usize, y: usize, x: usize, c: usize) -> usize {
        ((f * self.height + y) * self.width + x) * self.channels + c
    }
}

impl std::fmt::Display for LatentShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.frames, self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    shape: LatentShape,
    data: Vec<f64>,
}

impl LatentTensor {
    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: LatentShape, data: Vec<f64>) -> Result<Self, LatentError> {
        if data.len() != shape.len() {
            return Err(LatentError::BadLength { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: LatentShape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.shape.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let n = self.shape.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    pub fn ensure_same_shape(&self, other: &LatentTensor) -> Result<(), LatentError> {
        if self.shape != other.shape {
            return Err(LatentError::ShapeMismatch {
                expected: self.shape,
                actual: other.shape,
            });
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<(), LatentError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(LatentError::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Mean squared difference against `other`.
    pub fn mse(&self, other: &LatentTensor) -> Result<f64, LatentError> {
        self.ensure_same_shape(other)?;
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sum / self.data.len().max(1) as f64)
    }

    /// Element-wise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &LatentTensor, b: f64) -> Result<LatentTensor, LatentError> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(LatentTensor {
            shape: self.shape,
            data,
        })
    }
}

impl Index<usize> for LatentTensor {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for LatentTensor {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}
