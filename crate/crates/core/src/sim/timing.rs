use serde::{Deserialize, Serialize};

use super::{execute, AccessEvent, HwConfig, SimError};
use crate::ht::{HtConfig, HtWeight};
use crate::layer::{LayerSchedule, Step};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingModel {
    /// Every phase runs after the previous one finishes.
    #[default]
    Serial,
    /// A transformation's write phase runs while the product that feeds it
    /// is being computed; its read phase still follows.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepReport {
    pub index: usize,
    /// `multiply:<node>` or `transform:<type>`.
    pub label: String,
    pub mac_cycles: u64,
    pub write_cycles: u64,
    pub read_cycles: u64,
    pub passes: usize,
    pub peak_buffer_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CycleReport {
    pub model: TimingModel,
    pub batch: usize,
    pub total_cycles: u64,
    pub mac_cycles: u64,
    pub mem_write_cycles: u64,
    pub mem_read_cycles: u64,
    pub mac_utilization: f64,
    pub peak_assemble_buffer_bytes: usize,
    pub sram_bytes_touched: usize,
    pub seconds: f64,
    pub steps: Vec<StepReport>,
}

impl CycleReport {
    fn empty(model: TimingModel, batch: usize) -> Self {
        Self {
            model,
            batch,
            total_cycles: 0,
            mac_cycles: 0,
            mem_write_cycles: 0,
            mem_read_cycles: 0,
            mac_utilization: 0.0,
            peak_assemble_buffer_bytes: 0,
            sram_bytes_touched: 0,
            seconds: 0.0,
            steps: Vec::new(),
        }
    }
}

pub fn mac_cycles(m: usize, k: usize, n: usize, hw: &HwConfig) -> u64 {
    ((m * k * n) as u64).div_ceil(hw.macs_per_cycle() as u64)
}

/// Cycle count of one forward pass of an HT layer. A zero batch is an empty
/// layer and costs nothing.
pub fn simulate_layer(
    model: &HtConfig,
    hw: &HwConfig,
    batch: usize,
    timing: TimingModel,
) -> Result<CycleReport, SimError> {
    hw.validate()?;
    let mut report = CycleReport::empty(timing, batch);
    if batch == 0 {
        return Ok(report);
    }
    let w = HtWeight::zeros(model.clone()).map_err(crate::layer::LayerError::from)?;
    let schedule = LayerSchedule::build(&w, batch)?;
    let mut macs = 0u64;
    let mut pending_mac = 0u64;
    let mut total = 0u64;
    for (index, step) in schedule.steps.iter().enumerate() {
        match step {
            Step::Multiply { node, m, k, n, .. } => {
                let c = mac_cycles(*m, *k, *n, hw);
                macs += (m * k * n) as u64;
                report.mac_cycles += c;
                total += pending_mac;
                pending_mac = c;
                report.steps.push(StepReport {
                    index,
                    label: format!("multiply:{node}"),
                    mac_cycles: c,
                    write_cycles: 0,
                    read_cycles: 0,
                    passes: 0,
                    peak_buffer_bytes: 0,
                });
            }
            Step::Transform { spec, .. } => {
                // only one pass has to be resident; a segment taller than a
                // bank cannot be tiled
                let run = execute(hw, spec, None, false).map_err(|e| match e {
                    SimError::Capacity { needed, available } => SimError::WorkingSet {
                        step: index,
                        reason: format!("segment of {needed} rows in a {available}-row bank"),
                    },
                    e => e,
                })?;
                report.mem_write_cycles += run.write_cycles;
                report.mem_read_cycles += run.read_cycles;
                report.peak_assemble_buffer_bytes =
                    report.peak_assemble_buffer_bytes.max(run.peak_buffer_bytes);
                report.sram_bytes_touched = report.sram_bytes_touched.max(run.bytes_touched);
                total += match timing {
                    TimingModel::Serial => pending_mac + run.write_cycles + run.read_cycles,
                    TimingModel::Overlap => pending_mac.max(run.write_cycles) + run.read_cycles,
                };
                pending_mac = 0;
                report.steps.push(StepReport {
                    index,
                    label: format!("transform:{}", spec.kind()),
                    mac_cycles: 0,
                    write_cycles: run.write_cycles,
                    read_cycles: run.read_cycles,
                    passes: run.passes,
                    peak_buffer_bytes: run.peak_buffer_bytes,
                });
            }
        }
    }
    total += pending_mac;
    report.total_cycles = total;
    if total > 0 {
        report.mac_utilization = macs as f64 / (total as f64 * hw.macs_per_cycle() as f64);
    }
    report.seconds = total as f64 / (hw.freq_mhz * 1e6);
    Ok(report)
}

/// Memory accesses of every transformation in one serial forward pass, on a
/// single clock. Pass numbers are made unique across steps.
pub fn layer_trace(model: &HtConfig, hw: &HwConfig, batch: usize) -> Result<Vec<AccessEvent>, SimError> {
    hw.validate()?;
    if batch == 0 {
        return Ok(Vec::new());
    }
    let w = HtWeight::zeros(model.clone()).map_err(crate::layer::LayerError::from)?;
    let schedule = LayerSchedule::build(&w, batch)?;
    let (mut clock, mut passes) = (0u64, 0usize);
    let mut trace = Vec::new();
    for step in &schedule.steps {
        match step {
            Step::Multiply { m, k, n, .. } => clock += mac_cycles(*m, *k, *n, hw),
            Step::Transform { spec, .. } => {
                let run = execute(hw, spec, None, true)?;
                trace.extend(run.trace.into_iter().map(|mut e| {
                    e.cycle += clock;
                    e.pass += passes;
                    e
                }));
                clock += run.write_cycles + run.read_cycles;
                passes += run.passes;
            }
        }
    }
    Ok(trace)
}

/// `simulate_layer` with the non-leaf rank replaced by each value in `ranks`.
pub fn simulate_sweep(
    model: &HtConfig,
    ranks: &[usize],
    hw: &HwConfig,
    batch: usize,
    timing: TimingModel,
) -> Result<Vec<(usize, CycleReport)>, SimError> {
    ranks
        .iter()
        .map(|&r| {
            let mut cfg = model.clone();
            cfg.non_leaf_rank = r;
            simulate_layer(&cfg, hw, batch, timing).map(|rep| (r, rep))
        })
        .collect()
}
