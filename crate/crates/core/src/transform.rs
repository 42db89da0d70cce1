//! The three matrix transformations between consecutive contraction steps.
//!
//! Index formulas are one-based, as `(m, n) -> (p, q)` pairs; the matrices
//! themselves are the usual zero-based [`MatrixView`]s.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DenseTensor, MatrixView};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("transform dimensions must be positive")]
    ZeroDim,
    #[error("input is {found:?}, transform expects {expected:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransformSpec {
    /// `A x (B1 B2) -> (A B1) x B2`
    TypeI { a: usize, b1: usize, b2: usize },
    /// `(A1 A2 A3) x (B1 B2) -> (A1 A3 B1) x (A2 B2)`
    TypeII {
        a1: usize,
        a2: usize,
        a3: usize,
        b1: usize,
        b2: usize,
    },
    /// `(A1 A2 A3) x B -> (A1 A3 B) x A2`
    TypeIII {
        a1: usize,
        a2: usize,
        a3: usize,
        b: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    TypeI,
    TypeII,
    TypeIII,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::TypeI => "I",
            TransformKind::TypeII => "II",
            TransformKind::TypeIII => "III",
        })
    }
}

/// One entry of an index table, all one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexPair {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

/// Why an index table fails to be a bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapDefect {
    OutOfRange(IndexPair),
    Collision { first: IndexPair, second: IndexPair },
    Uncovered { missing: usize },
}

impl TransformSpec {
    /// The basic transformation `(A1 A2) x (B1 B2) -> (A1 B1) x (A2 B2)`.
    pub fn basic(a1: usize, a2: usize, b1: usize, b2: usize) -> Self {
        TransformSpec::TypeII {
            a1,
            a2,
            a3: 1,
            b1,
            b2,
        }
    }

    pub fn kind(&self) -> TransformKind {
        match self {
            TransformSpec::TypeI { .. } => TransformKind::TypeI,
            TransformSpec::TypeII { .. } => TransformKind::TypeII,
            TransformSpec::TypeIII { .. } => TransformKind::TypeIII,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            TransformSpec::TypeI { a, b1, b2 } => vec![a, b1, b2],
            TransformSpec::TypeII { a1, a2, a3, b1, b2 } => vec![a1, a2, a3, b1, b2],
            TransformSpec::TypeIII { a1, a2, a3, b } => vec![a1, a2, a3, b],
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if self.dims().contains(&0) {
            Err(TransformError::ZeroDim)
        } else {
            Ok(())
        }
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_shape(&self) -> (usize, usize) {
        match *self {
            TransformSpec::TypeI { a, b1, b2 } => (a, b1 * b2),
            TransformSpec::TypeII { a1, a2, a3, b1, b2 } => (a1 * a2 * a3, b1 * b2),
            TransformSpec::TypeIII { a1, a2, a3, b } => (a1 * a2 * a3, b),
        }
    }

    pub fn output_shape(&self) -> (usize, usize) {
        match *self {
            TransformSpec::TypeI { a, b1, b2 } => (a * b1, b2),
            TransformSpec::TypeII { a1, a2, a3, b1, b2 } => (a1 * a3 * b1, a2 * b2),
            TransformSpec::TypeIII { a1, a2, a3, b } => (a1 * a3 * b, a2),
        }
    }

    /// One-based `(m, n) -> (p, q)`.
    pub fn map(&self, m: usize, n: usize) -> (usize, usize) {
        match *self {
            TransformSpec::TypeI { b1, b2, .. } => {
                let a = m;
                let (b1i, b2i) = split2(n, b2);
                ((a - 1) * b1 + b1i, b2i)
            }
            TransformSpec::TypeII { a2, a3, b1, b2, .. } => {
                let (a1i, a2i, a3i) = split3(m, a2, a3);
                let (b1i, b2i) = split2(n, b2);
                (
                    (a1i - 1) * a3 * b1 + (a3i - 1) * b1 + b1i,
                    (a2i - 1) * b2 + b2i,
                )
            }
            TransformSpec::TypeIII { a2, a3, b, .. } => {
                let (a1i, a2i, a3i) = split3(m, a2, a3);
                ((a1i - 1) * a3 * b + (a3i - 1) * b + n, a2i)
            }
        }
    }

    /// One-based `(p, q) -> (m, n)`.
    pub fn inverse(&self, p: usize, q: usize) -> (usize, usize) {
        match *self {
            TransformSpec::TypeI { b1, b2, .. } => {
                let (a, b1i) = split2(p, b1);
                (a, (b1i - 1) * b2 + q)
            }
            TransformSpec::TypeII { a2, a3, b1, b2, .. } => {
                let (a1i, a3i, b1i) = split3(p, a3, b1);
                let (a2i, b2i) = split2(q, b2);
                (
                    (a1i - 1) * a2 * a3 + (a2i - 1) * a3 + a3i,
                    (b1i - 1) * b2 + b2i,
                )
            }
            TransformSpec::TypeIII { a2, a3, b, .. } => {
                let (a1i, a3i, bi) = split3(p, a3, b);
                ((a1i - 1) * a2 * a3 + (q - 1) * a3 + a3i, bi)
            }
        }
    }
}

// one-based mixed radix digits
fn split2(v: usize, inner: usize) -> (usize, usize) {
    ((v - 1) / inner + 1, (v - 1) % inner + 1)
}

fn split3(v: usize, mid: usize, inner: usize) -> (usize, usize, usize) {
    let z = v - 1;
    (z / (mid * inner) + 1, z / inner % mid + 1, z % inner + 1)
}

/// Full table for `spec`, enumerated in row-major order of `T`.
pub fn index_map(spec: &TransformSpec) -> Vec<IndexPair> {
    let (rows, cols) = spec.input_shape();
    let mut out = Vec::with_capacity(rows * cols);
    for m in 1..=rows {
        for n in 1..=cols {
            let (p, q) = spec.map(m, n);
            out.push(IndexPair { m, n, p, q });
        }
    }
    out
}

/// Type-II table built with `q = (a2 - 1) * b2` taken at face value.
pub fn literal_type_ii_map(a1: usize, a2: usize, a3: usize, b1: usize, b2: usize) -> Vec<IndexPair> {
    let mut out = Vec::with_capacity(a1 * a2 * a3 * b1 * b2);
    for i1 in 1..=a1 {
        for i2 in 1..=a2 {
            for i3 in 1..=a3 {
                for j1 in 1..=b1 {
                    for j2 in 1..=b2 {
                        out.push(IndexPair {
                            m: (i1 - 1) * a2 * a3 + (i2 - 1) * a3 + i3,
                            n: (j1 - 1) * b2 + j2,
                            p: (i1 - 1) * a3 * b1 + (i3 - 1) * b1 + j1,
                            q: (i2 - 1) * j2,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Checks that `table` maps the `(m, n)` grid one-to-one onto the
/// `out_shape` grid, returning the first defect otherwise.
pub fn check_bijection(table: &[IndexPair], out_shape: (usize, usize)) -> Result<(), MapDefect> {
    let (rows, cols) = out_shape;
    let mut seen: HashMap<(usize, usize), IndexPair> = HashMap::with_capacity(table.len());
    for &e in table {
        if let Some(&first) = seen.get(&(e.p, e.q)) {
            return Err(MapDefect::Collision { first, second: e });
        }
        seen.insert((e.p, e.q), e);
    }
    if let Some(&e) = table
        .iter()
        .find(|e| e.p == 0 || e.q == 0 || e.p > rows || e.q > cols)
    {
        return Err(MapDefect::OutOfRange(e));
    }
    let missing = rows * cols - seen.len();
    if missing > 0 {
        return Err(MapDefect::Uncovered { missing });
    }
    Ok(())
}

fn check_input(spec: &TransformSpec, t: &MatrixView) -> Result<(), TransformError> {
    spec.validate()?;
    let expected = spec.input_shape();
    let found = (t.rows(), t.cols());
    if expected != found {
        return Err(TransformError::Shape { expected, found });
    }
    Ok(())
}

/// `T'(p, q) = T(m, n)` over the index formulas.
pub fn apply_transform(spec: &TransformSpec, t: &MatrixView) -> Result<MatrixView, TransformError> {
    check_input(spec, t)?;
    let (rows, cols) = spec.output_shape();
    let mut out = vec![0.0; rows * cols];
    for m in 1..=t.rows() {
        for n in 1..=t.cols() {
            let (p, q) = spec.map(m, n);
            out[(p - 1) * cols + (q - 1)] = t.get(m - 1, n - 1);
        }
    }
    Ok(MatrixView::new(rows, cols, out).expect("output shape"))
}

/// Reference result via tensor reshape and axis permutation.
pub fn oracle_transform(spec: &TransformSpec, t: &MatrixView) -> Result<MatrixView, TransformError> {
    check_input(spec, t)?;
    let axes: &[usize] = match spec.kind() {
        TransformKind::TypeI => &[0, 1, 2],
        TransformKind::TypeII => &[0, 2, 3, 1, 4],
        TransformKind::TypeIII => &[0, 2, 3, 1],
    };
    let tensor = DenseTensor::new(spec.dims(), t.data().to_vec()).expect("sizes agree");
    let permuted = tensor.permute(axes).expect("valid permutation");
    let (rows, cols) = spec.output_shape();
    Ok(MatrixView::new(rows, cols, permuted.into_data()).expect("output shape"))
}
