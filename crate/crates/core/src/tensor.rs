//! Dense row-major tensors, contraction, tensorization and matricization.
//!
//! Everything here is `f64` and row-major (last index fastest). Contractions
//! are lowered to a single [`matmul`] after permuting the operands, so a
//! contraction and the equivalent matrix product accumulate every output
//! entry in the same order and agree bit for bit.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("shape {0:?} contains a zero dimension")]
    ZeroDim(Vec<usize>),
    #[error("axis {axis} out of range for order-{order} tensor")]
    AxisOutOfRange { axis: usize, order: usize },
    #[error("axis {0} listed more than once")]
    RepeatedAxis(usize),
    #[error("paired axes have different lengths ({left} vs {right})")]
    PairCountMismatch { left: usize, right: usize },
    #[error("contracted dimension mismatch: A axis {axis_a} has size {size_a}, B axis {axis_b} has size {size_b}")]
    DimMismatch {
        axis_a: usize,
        size_a: usize,
        axis_b: usize,
        size_b: usize,
    },
    #[error("input of length {len} does not fit in shape {shape:?} ({capacity} entries)")]
    TooLong {
        len: usize,
        shape: Vec<usize>,
        capacity: usize,
    },
    #[error("inner dimensions differ: {left_cols} columns vs {right_rows} rows")]
    InnerMismatch { left_cols: usize, right_rows: usize },
    #[error("permutation {0:?} is not a permutation of the tensor axes")]
    BadPermutation(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major real tensor. An empty shape is a scalar holding one value.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return Err(TensorError::ZeroDim(shape));
        }
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                len: data.len(),
                shape,
                expected,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product::<usize>();
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[flat_index(&self.shape, index)]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Same data under a new shape with the same number of entries.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Reorders axes so that output axis `k` is input axis `axes[k]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let order = self.order();
        if axes.len() != order {
            return Err(TensorError::BadPermutation(axes.to_vec()));
        }
        let mut seen = vec![false; order];
        for &a in axes {
            if a >= order || seen[a] {
                return Err(TensorError::BadPermutation(axes.to_vec()));
            }
            seen[a] = true;
        }
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return Ok(self.clone());
        }
        let src_strides = strides(&self.shape);
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let gather: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; order];
        let mut offset = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[offset]);
            // odometer over the output index, tracking the source offset
            for ax in (0..order).rev() {
                idx[ax] += 1;
                offset += gather[ax];
                if idx[ax] < new_shape[ax] {
                    break;
                }
                offset -= gather[ax] * new_shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data: out,
        })
    }
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn flat_index(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    index
        .iter()
        .zip(shape)
        .fold(0usize, |acc, (&i, &n)| acc * n + i)
}

/// Inverse of a permutation given as a list of source axes.
pub fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (k, &a) in axes.iter().enumerate() {
        inv[a] = k;
    }
    inv
}

/// Row-major 2-D matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixView {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixView {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroDim(vec![rows, cols]));
        }
        if rows * cols != data.len() {
            return Err(TensorError::LengthMismatch {
                shape: vec![rows, cols],
                len: data.len(),
                expected: rows * cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }
}

fn check_axes(axes: &[usize], order: usize) -> Result<()> {
    let mut seen = vec![false; order];
    for &a in axes {
        if a >= order {
            return Err(TensorError::AxisOutOfRange { axis: a, order });
        }
        if seen[a] {
            return Err(TensorError::RepeatedAxis(a));
        }
        seen[a] = true;
    }
    Ok(())
}

/// Contracts `axes_a` of `a` against `axes_b` of `b` (paired positionally).
///
/// The result carries the free axes of `a` followed by the free axes of `b`,
/// each group in its original order. Paired indices are summed in row-major
/// order of the paired axes as listed.
pub fn contract(
    a: &DenseTensor,
    b: &DenseTensor,
    axes_a: &[usize],
    axes_b: &[usize],
) -> Result<DenseTensor> {
    if axes_a.len() != axes_b.len() {
        return Err(TensorError::PairCountMismatch {
            left: axes_a.len(),
            right: axes_b.len(),
        });
    }
    check_axes(axes_a, a.order())?;
    check_axes(axes_b, b.order())?;
    for (&xa, &xb) in axes_a.iter().zip(axes_b) {
        if a.shape[xa] != b.shape[xb] {
            return Err(TensorError::DimMismatch {
                axis_a: xa,
                size_a: a.shape[xa],
                axis_b: xb,
                size_b: b.shape[xb],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.order()).filter(|i| !axes_a.contains(i)).collect();
    let free_b: Vec<usize> = (0..b.order()).filter(|i| !axes_b.contains(i)).collect();

    let perm_a: Vec<usize> = free_a.iter().chain(axes_a).copied().collect();
    let perm_b: Vec<usize> = axes_b.iter().chain(&free_b).copied().collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = axes_a.iter().map(|&i| a.shape[i]).product();
    let n: usize = free_b.iter().map(|&i| b.shape[i]).product();
    let prod = matmul_raw(pa.data(), pb.data(), m, k, n);

    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&i| b.shape[i]))
        .collect();
    Ok(DenseTensor { shape, data: prod })
}

/// Zero-pads `v` at the tail up to `product(shape)` entries.
pub fn tensorize(v: &[f64], shape: &[usize]) -> Result<DenseTensor> {
    if shape.iter().any(|&s| s == 0) {
        return Err(TensorError::ZeroDim(shape.to_vec()));
    }
    let capacity: usize = shape.iter().product();
    if v.len() > capacity {
        return Err(TensorError::TooLong {
            len: v.len(),
            shape: shape.to_vec(),
            capacity,
        });
    }
    let mut data = Vec::with_capacity(capacity);
    data.extend_from_slice(v);
    data.resize(capacity, 0.0);
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// The axis order used by [`matricize`]: `row_axes` followed by the
/// remaining axes in ascending order.
pub fn matricize_permutation(order: usize, row_axes: &[usize]) -> Result<Vec<usize>> {
    check_axes(row_axes, order)?;
    Ok(row_axes
        .iter()
        .copied()
        .chain((0..order).filter(|i| !row_axes.contains(i)))
        .collect())
}

/// Flattens `t` to a matrix with `row_axes` on the rows.
pub fn matricize(t: &DenseTensor, row_axes: &[usize]) -> Result<MatrixView> {
    let perm = matricize_permutation(t.order(), row_axes)?;
    let rows: usize = row_axes.iter().map(|&i| t.shape[i]).product();
    let cols = t.len() / rows;
    let p = t.permute(&perm)?;
    MatrixView::new(rows, cols, p.data)
}

/// Undoes [`matricize`] given the original shape and row axes.
pub fn unmatricize(m: &MatrixView, shape: &[usize], row_axes: &[usize]) -> Result<DenseTensor> {
    let perm = matricize_permutation(shape.len(), row_axes)?;
    let permuted_shape: Vec<usize> = perm.iter().map(|&a| shape[a]).collect();
    let t = DenseTensor::new(permuted_shape, m.data.clone())?;
    t.permute(&inverse_permutation(&perm))
}

/// Standard matrix product; each entry sums over the inner index left to right.
pub fn matmul(a: &MatrixView, b: &MatrixView) -> Result<MatrixView> {
    if a.cols != b.rows {
        return Err(TensorError::InnerMismatch {
            left_cols: a.cols,
            right_rows: b.rows,
        });
    }
    Ok(MatrixView {
        rows: a.rows,
        cols: b.cols,
        data: matmul_raw(&a.data, &b.data, a.rows, a.cols, b.cols),
    })
}

// i-k-j order: every c[i][j] still accumulates k = 0, 1, .. in sequence.
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cij, &bpj) in crow.iter_mut().zip(brow) {
                *cij += aip * bpj;
            }
        }
    }
    c
}
