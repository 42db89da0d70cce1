//! Hierarchical Tucker weight format.
//!
//! A weight tensor of shape `[R_D, O_1..O_d, I_1..I_d]` is stored as one
//! leaf frame per mode (`R_j x (O_j * I_j)`, output index varying slower)
//! and one transfer tensor per internal node (`R_s x R_s1 x R_s2`). The
//! root rank `R_D` stacks independent output blocks; the LSTM uses it for
//! its four gates.

mod checkpoint;
mod complexity;
mod tree;
mod weight;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, Section};
pub use complexity::{
    compression_ratio, format_complexity, format_param_count, lstm_dense_params, Format,
};
pub use tree::{DimTree, TreeNode};
pub use weight::{count_params, HtWeight};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HtError {
    #[error("tree order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error("all ranks must be positive")]
    ZeroRank,
    #[error("expected {expected} leaf ranks, got {got}")]
    RankCount { expected: usize, got: usize },
    #[error("input and output mode counts differ ({inputs} vs {outputs})")]
    ModeCount { inputs: usize, outputs: usize },
    #[error("mode sizes must be positive")]
    ZeroDim,
    #[error("node {node}: expected shape {expected:?}, found {found:?}")]
    NodeShape {
        node: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unknown format tag '{0}'")]
    UnknownFormat(String),
    #[error("complexity arguments must be positive")]
    NonPositive,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Shape and rank settings of an HT weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HtConfig {
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub leaf_ranks: Vec<usize>,
    pub non_leaf_rank: usize,
    pub root_rank: usize,
}

impl HtConfig {
    pub fn new(
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        leaf_rank: usize,
        non_leaf_rank: usize,
        root_rank: usize,
    ) -> Self {
        let d = in_dims.len();
        Self {
            in_dims,
            out_dims,
            leaf_ranks: vec![leaf_rank; d],
            non_leaf_rank,
            root_rank,
        }
    }

    /// 57,600-input / 256-hidden LSTM at non-leaf rank 12.
    pub fn ucf11() -> Self {
        Self::new(vec![16, 16, 16, 15], vec![4, 4, 4, 4], 14, 12, 4)
    }

    /// Same shape as [`HtConfig::ucf11`] at non-leaf rank 11.
    pub fn ytc() -> Self {
        Self::new(vec![16, 16, 16, 15], vec![4, 4, 4, 4], 14, 11, 4)
    }

    pub fn order(&self) -> usize {
        self.in_dims.len()
    }

    pub fn input_size(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn output_size(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn validate(&self) -> Result<(), HtError> {
        if self.in_dims.len() != self.out_dims.len() {
            return Err(HtError::ModeCount {
                inputs: self.in_dims.len(),
                outputs: self.out_dims.len(),
            });
        }
        if self.in_dims.iter().chain(&self.out_dims).any(|&n| n == 0) {
            return Err(HtError::ZeroDim);
        }
        self.tree().map(|_| ())
    }

    pub fn tree(&self) -> Result<DimTree, HtError> {
        DimTree::build(
            self.order(),
            &self.leaf_ranks,
            self.non_leaf_rank,
            self.root_rank,
        )
    }
}
