//! Flat parameter vectors with per-layer shape metadata.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One dense layer inside a flat parameter vector: a row-major `rows x cols`
/// weight block at `offset` followed by `bias_len` bias entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub bias_len: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    pub fn bias_range(&self) -> Range<usize> {
        let start = self.offset + self.rows * self.cols;
        start..start + self.bias_len
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols + self.bias_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTable {
    layers: Vec<LayerShape>,
    len: usize,
}

impl ShapeTable {
    /// Table for a dense feedforward net with the given layer widths
    /// (input, hidden..., output). Weights are stored `(out, in)`.
    pub fn dense(layer_sizes: &[usize]) -> Self {
        let mut offset = 0;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let layer = LayerShape {
                    rows: w[1],
                    cols: w[0],
                    bias_len: w[1],
                    offset,
                };
                offset += layer.len();
                layer
            })
            .collect();
        Self { layers, len: offset }
    }

    /// Single weight block of `n` coordinates and no bias.
    pub fn flat(n: usize) -> Self {
        Self {
            layers: vec![LayerShape {
                rows: 1,
                cols: n,
                bias_len: 0,
                offset: 0,
            }],
            len: n,
        }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Contiguous parameter tensors (each weight block, then each bias),
    /// in storage order. Empty segments are skipped.
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.layers.iter().flat_map(|l| {
            [
                Segment {
                    range: l.weight_range(),
                    row_len: l.cols,
                },
                Segment {
                    range: l.bias_range(),
                    row_len: l.bias_len,
                },
            ]
        })
        .filter(|s| !s.range.is_empty())
    }
}

/// A contiguous tensor within the flat vector. `row_len` is the fan-in for
/// weight blocks and the full length for biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub range: Range<usize>,
    pub row_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    values: Vec<T>,
    shape: Arc<ShapeTable>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(shape: Arc<ShapeTable>) -> Self {
        Self {
            values: vec![T::zero(); shape.len()],
            shape,
        }
    }

    pub fn from_values(shape: Arc<ShapeTable>, values: Vec<T>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::shape(
                format!("{} values", shape.len()),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self { values, shape })
    }

    /// Convenience for flat vectors without layer structure.
    pub fn flat(values: Vec<T>) -> Self {
        Self {
            shape: Arc::new(ShapeTable::flat(values.len())),
            values,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(Arc::clone(&self.shape))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn shape(&self) -> &Arc<ShapeTable> {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape) || self.shape == other.shape
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{} parameters in {} layers", self.len(), self.shape.layers().len()),
                format!("{} parameters in {} layers", other.len(), other.shape.layers().len()),
            ))
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    /// `self += scale * x`
    pub fn axpy(&mut self, scale: T, x: &Self) {
        for (a, &b) in self.values.iter_mut().zip(&x.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// `self - other`, keeping `self`'s shape table.
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            shape: Arc::clone(&self.shape),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            shape: Arc::clone(&self.shape),
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
