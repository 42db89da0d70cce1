use std::fmt;
use std::str::FromStr;

use super::{count_params, HtConfig, HtError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Dense,
    Tt,
    Tr,
    Bt,
    Ht,
}

impl Format {
    pub const COMPRESSED: [Format; 4] = [Format::Tt, Format::Tr, Format::Bt, Format::Ht];
}

impl FromStr for Format {
    type Err = HtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(Format::Dense),
            "tt" => Ok(Format::Tt),
            "tr" => Ok(Format::Tr),
            "bt" => Ok(Format::Bt),
            "ht" => Ok(Format::Ht),
            _ => Err(HtError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Dense => "dense",
            Format::Tt => "TT",
            Format::Tr => "TR",
            Format::Bt => "BT",
            Format::Ht => "HT",
        })
    }
}

/// Leading-order space complexity of a `d`-mode tensorized linear layer with
/// largest input/output factors `in_max`/`out_max` and rank `rank`.
///
/// | format | value |
/// |---|---|
/// | dense | `(I' O')^d` |
/// | TT, TR | `d I' O' R^2` |
/// | BT | `d I' O' R + R^d` |
/// | HT | `d I' O' R + d R^3` |
///
/// These are curve-comparison values, not exact parameter counts; see
/// [`format_param_count`] for those.
pub fn format_complexity(
    format: Format,
    d: usize,
    in_max: usize,
    out_max: usize,
    rank: usize,
) -> Result<u128, HtError> {
    if d == 0 || in_max == 0 || out_max == 0 || rank == 0 {
        return Err(HtError::NonPositive);
    }
    let (d, i, o, r) = (d as u128, in_max as u128, out_max as u128, rank as u128);
    let d32 = d as u32;
    Ok(match format {
        Format::Dense => (i * o).pow(d32),
        Format::Tt | Format::Tr => d * i * o * r * r,
        Format::Bt => d * i * o * r + r.pow(d32),
        Format::Ht => d * i * o * r + d * r * r * r,
    })
}

/// Exact parameter count of each format for the given mode sizes with every
/// rank set to `rank` (TT boundary ranks are 1; HT root rank is 1).
pub fn format_param_count(
    format: Format,
    in_dims: &[usize],
    out_dims: &[usize],
    rank: usize,
) -> Result<u128, HtError> {
    if in_dims.len() != out_dims.len() {
        return Err(HtError::ModeCount {
            inputs: in_dims.len(),
            outputs: out_dims.len(),
        });
    }
    if rank == 0 || in_dims.iter().chain(out_dims).any(|&n| n == 0) || in_dims.is_empty() {
        return Err(HtError::NonPositive);
    }
    let d = in_dims.len();
    let r = rank as u128;
    let io: Vec<u128> = in_dims
        .iter()
        .zip(out_dims)
        .map(|(&i, &o)| (i * o) as u128)
        .collect();
    Ok(match format {
        Format::Dense => io.iter().product(),
        Format::Tt => io
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let left = if k == 0 { 1 } else { r };
                let right = if k == d - 1 { 1 } else { r };
                left * n * right
            })
            .sum(),
        Format::Tr => io.iter().map(|&n| r * n * r).sum(),
        Format::Bt => r.pow(d as u32) + io.iter().map(|&n| n * r).sum::<u128>(),
        Format::Ht => {
            let cfg = HtConfig::new(in_dims.to_vec(), out_dims.to_vec(), rank, rank, 1);
            count_params(&cfg)? as u128
        }
    })
}

/// Weights plus biases of a plain LSTM with four gates.
pub fn lstm_dense_params(input_size: usize, hidden: usize) -> u128 {
    let (i, h) = (input_size as u128, hidden as u128);
    4 * ((i + h) * h + h)
}

pub fn compression_ratio(dense: u128, compressed: usize) -> f64 {
    dense as f64 / compressed as f64
}
