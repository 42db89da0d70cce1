//! Cycle-level model of the accelerator's working memory and MAC array.
//!
//! The working memory is `G` single-port banks of `M` rows, each row holding
//! `Wbits / wordBits` words. A bank is logically cut into segments of `D`
//! rows, giving the coordinates `(x, y, k, z)` = (bank, segment, depth,
//! word). Simulation is word-level; `wordBits` only scales byte counts.

mod scheme;
mod timing;

pub use scheme::{
    assemble, conventional_trace, execute, read_basic, read_scheme, write_basic, write_scheme,
    Fragment, Placement, SchemeRun, SramArrayState,
};
pub use timing::{
    layer_trace, mac_cycles, simulate_layer, simulate_sweep, CycleReport, StepReport, TimingModel,
};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layer::LayerError;
use crate::transform::TransformError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid hardware config: {0}")]
    Config(String),
    #[error("capacity exceeded: {needed} needed, {available} available")]
    Capacity { needed: usize, available: usize },
    #[error("working set overflow at step {step}: {reason}")]
    WorkingSet { step: usize, reason: String },
    #[error("read of unwritten row {row} in bank {bank}")]
    UnwrittenRead { bank: usize, row: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Hardware description, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwConfig {
    #[serde(rename = "G")]
    pub banks: usize,
    #[serde(rename = "Wbits")]
    pub width_bits: usize,
    #[serde(rename = "M")]
    pub depth: usize,
    #[serde(rename = "wordBits")]
    pub word_bits: usize,
    #[serde(rename = "numPE")]
    pub num_pe: usize,
    #[serde(rename = "macsPerPE")]
    pub macs_per_pe: usize,
    #[serde(rename = "freqMHz")]
    pub freq_mhz: f64,
}

impl HwConfig {
    /// 14 banks of 2048 x 256-bit rows, 16-bit words, 16 PEs x 16 MACs, 1 GHz.
    pub fn reference() -> Self {
        Self {
            banks: 14,
            width_bits: 256,
            depth: 2048,
            word_bits: 16,
            num_pe: 16,
            macs_per_pe: 16,
            freq_mhz: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if self.banks == 0 || self.depth == 0 || self.width_bits == 0 || self.word_bits == 0 {
            return bad("G, M, Wbits and wordBits must be positive");
        }
        if self.width_bits % self.word_bits != 0 {
            return bad("Wbits must be a multiple of wordBits");
        }
        if self.word_bits % 8 != 0 {
            return bad("wordBits must be a whole number of bytes");
        }
        if self.num_pe == 0 || self.macs_per_pe == 0 {
            return bad("numPE and macsPerPE must be positive");
        }
        if !(self.freq_mhz > 0.0 && self.freq_mhz.is_finite()) {
            return bad("freqMHz must be positive");
        }
        Ok(())
    }

    pub fn words_per_row(&self) -> usize {
        self.width_bits / self.word_bits
    }

    pub fn word_bytes(&self) -> usize {
        self.word_bits / 8
    }

    pub fn macs_per_cycle(&self) -> usize {
        self.num_pe * self.macs_per_pe
    }

    /// Bytes in one copy of the working memory.
    pub fn copy_bytes(&self) -> usize {
        self.banks * self.depth * self.width_bits / 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Read,
    Write,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Read => "read",
            Op::Write => "write",
        })
    }
}

/// One row access of one bank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    pub cycle: u64,
    pub bank: usize,
    pub row: usize,
    pub op: Op,
    /// Word slots used.
    pub words: Vec<usize>,
    /// Word slots fetched but not needed.
    pub discarded: Vec<usize>,
    /// Tiling pass the access belongs to; addresses restart in each pass.
    pub pass: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConflictReport {
    pub ok: bool,
    /// First `(cycle, bank)` where one port served two rows.
    pub first_conflict: Option<(u64, usize)>,
    pub conflicts: usize,
    pub discarded_words: usize,
}

/// A trace passes when no bank serves two rows in one cycle and no fetched
/// word is thrown away.
pub fn check_conflicts(trace: &[AccessEvent]) -> ConflictReport {
    let mut rows: HashMap<(u64, usize, Op), usize> = HashMap::new();
    let mut first = None;
    let mut conflicts = 0;
    for e in trace {
        match rows.get(&(e.cycle, e.bank, e.op)) {
            Some(&r) if r != e.row => {
                conflicts += 1;
                first = first.or(Some((e.cycle, e.bank)));
            }
            _ => {
                rows.insert((e.cycle, e.bank, e.op), e.row);
            }
        }
    }
    let discarded_words = trace.iter().map(|e| e.discarded.len()).sum();
    ConflictReport {
        ok: conflicts == 0 && discarded_words == 0,
        first_conflict: first,
        conflicts,
        discarded_words,
    }
}

/// Checks that per bank, per pass and per operation, row addresses never
/// decrease in trace order. Returns the first offending event.
pub fn check_monotone(trace: &[AccessEvent]) -> Result<(), AccessEvent> {
    let mut last: HashMap<(usize, usize, Op), usize> = HashMap::new();
    for e in trace {
        let key = (e.pass, e.bank, e.op);
        if let Some(&prev) = last.get(&key) {
            if e.row < prev {
                return Err(e.clone());
            }
        }
        last.insert(key, e.row);
    }
    Ok(())
}

/// Peak bytes held between the read port and stream-out: the largest number
/// of words read in any single cycle.
pub fn assemble_buffer_usage(trace: &[AccessEvent], word_bytes: usize) -> usize {
    let mut per_cycle: HashMap<u64, usize> = HashMap::new();
    for e in trace.iter().filter(|e| e.op == Op::Read) {
        *per_cycle.entry(e.cycle).or_default() += e.words.len();
    }
    per_cycle.values().copied().max().unwrap_or(0) * word_bytes
}

pub fn trace_csv(trace: &[AccessEvent]) -> String {
    let mut out = String::from("cycle,bank,row,op,words\n");
    for e in trace {
        let words: Vec<String> = e.words.iter().map(|w| w.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.cycle,
            e.bank,
            e.row,
            e.op,
            words.join(";")
        ));
    }
    out
}
