//! On-disk and in-memory matrix formats.
//!
//! Numeric payloads live in the `VEM1` container (see [`vem`]); event and
//! run metadata live in small JSON sidecars next to them.

mod atlas;
mod bold;
mod track;
pub mod vem;

pub use atlas::RoiAtlas;
pub use bold::BoldRun;
pub use track::{load_stimulus_track, save_stimulus_track, StimulusEvent, StimulusTrack};
pub use vem::{read_matrix, read_matrix_with, write_matrix, ReadOptions};

use crate::error::{Error, Result};

/// Element type recorded in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Row-major dense matrix.
///
/// Values are held as `f64` regardless of [`Dtype`]; an `F32` matrix only
/// ever contains values exactly representable in `f32`, so writing it back
/// out is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    dtype: Dtype,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix {
            rows,
            cols,
            dtype: Dtype::F64,
            data,
        })
    }

    pub fn from_f32(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let mut m = Self::new(rows, cols, data.into_iter().map(f64::from).collect())?;
        m.dtype = Dtype::F32;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            dtype: Dtype::F64,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix {
            rows,
            cols,
            dtype: Dtype::F64,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    /// A 1 x n matrix. Per-voxel maps are stored this way.
    pub fn row_vector(values: Vec<f64>) -> Self {
        let n = values.len();
        DenseMatrix {
            rows: 1,
            cols: n,
            dtype: Dtype::F64,
            data: values,
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Shape(format!(
                    "column {c} has length {}, expected {rows}",
                    col.len()
                )));
            }
            for (r, &v) in col.iter().enumerate() {
                m.data[r * cols + c] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Converts to `f32` storage, rounding every value.
    pub fn to_f32(&self) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            dtype: Dtype::F32,
            data: self.data.iter().map(|&v| f64::from(v as f32)).collect(),
        }
    }

    pub fn to_f64(&self) -> Self {
        DenseMatrix {
            dtype: Dtype::F64,
            ..self.clone()
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            dtype: self.dtype,
            data,
        }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |r, c| self.get(r, idx[c]))
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        DenseMatrix {
            data: self.data.iter().map(|v| v * alpha).collect(),
            dtype: Dtype::F64,
            ..*self
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Fails on the first NaN or infinite entry, in row-major order.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(index) => Err(Error::NonFinite {
                row: index / self.cols.max(1),
                col: index % self.cols.max(1),
                index,
            }),
        }
    }

    /// Z-scores every column in place (population sd). Constant columns are
    /// centered and left at zero.
    pub fn zscore_columns(&mut self) {
        let n = self.rows as f64;
        if self.rows == 0 {
            return;
        }
        for c in 0..self.cols {
            let mean = (0..self.rows).map(|r| self.get(r, c)).sum::<f64>() / n;
            let var = (0..self.rows)
                .map(|r| (self.get(r, c) - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            for r in 0..self.rows {
                let v = (self.get(r, c) - mean) / sd;
                self.set(r, c, v);
            }
        }
        self.dtype = Dtype::F64;
    }

    pub(crate) fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}
