//! Hierarchical Tucker compressed LSTM layers and an on-chip transform
//! simulator.

pub mod ht;
pub mod labeled;
pub mod layer;
pub mod lstm;
pub mod sim;
pub mod tensor;
pub mod transform;
pub mod verify;

pub use ht::{DimTree, HtConfig, HtError, HtWeight};
pub use labeled::{Axis, Labeled};
pub use tensor::{DenseTensor, MatrixView, TensorError};
