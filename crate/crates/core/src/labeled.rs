//! Tensors whose axes carry names, so tree contractions can be written in
//! terms of which indices meet instead of positional bookkeeping.

use crate::tensor::{self, DenseTensor, Result};

/// Axis names used by the HT layer. Modes are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Batch,
    /// Hierarchical rank index of a tree node (node id).
    Rank(usize),
    Out(usize),
    In(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub axes: Vec<Axis>,
    pub tensor: DenseTensor,
}

impl Labeled {
    pub fn new(axes: Vec<Axis>, tensor: DenseTensor) -> Self {
        assert_eq!(
            axes.len(),
            tensor.order(),
            "label count must match tensor order"
        );
        Self { axes, tensor }
    }

    pub fn size_of(&self, axis: Axis) -> Option<usize> {
        self.position(axis).map(|p| self.tensor.shape()[p])
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|&a| a == axis)
    }

    /// Contracts every axis name present in both operands.
    pub fn contract(&self, other: &Labeled) -> Result<Labeled> {
        let shared: Vec<Axis> = self
            .axes
            .iter()
            .copied()
            .filter(|a| other.axes.contains(a))
            .collect();
        let pa: Vec<usize> = shared.iter().map(|&a| self.position(a).unwrap()).collect();
        let pb: Vec<usize> = shared
            .iter()
            .map(|&a| other.position(a).unwrap())
            .collect();
        let t = tensor::contract(&self.tensor, &other.tensor, &pa, &pb)?;
        let axes = self
            .axes
            .iter()
            .copied()
            .filter(|a| !shared.contains(a))
            .chain(other.axes.iter().copied().filter(|a| !shared.contains(a)))
            .collect();
        Ok(Labeled { axes, tensor: t })
    }

    /// Reorders to exactly `order`, which must be a permutation of the labels.
    pub fn permute_to(&self, order: &[Axis]) -> Result<Labeled> {
        let perm: Vec<usize> = order
            .iter()
            .map(|&a| {
                self.position(a)
                    .ok_or_else(|| tensor::TensorError::BadPermutation(vec![]))
            })
            .collect::<Result<_>>()?;
        Ok(Labeled {
            axes: order.to_vec(),
            tensor: self.tensor.permute(&perm)?,
        })
    }
}
