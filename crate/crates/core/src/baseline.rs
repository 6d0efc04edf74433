//! Fixed time-quantum phase analysis and waveform error metrics.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::attribution::{quantum_cpis, AttributionError, Waveform};
use crate::phases::PhaseNode;
use crate::trace::{BlockId, ExecutionTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TqPhase {
    pub start_quantum: usize,
    pub quantum_count: usize,
    pub mean_cpi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TqPhaseList {
    pub quantum_length: u64,
    pub total_instructions: u64,
    pub phases: Vec<TqPhase>,
    pub merge_delta: f64,
}

/// Per-quantum CPI: taken from the trace's quantum samples when their length
/// matches, computed from golden cycles otherwise.
fn per_quantum(trace: &ExecutionTrace, quantum_length: u64) -> Result<Vec<f64>, AttributionError> {
    match trace.quanta() {
        Some(q) if q.length == quantum_length => Ok(q.records.iter().map(|r| r.cpi).collect()),
        _ => quantum_cpis(trace, quantum_length),
    }
}

/// Greedy grouping of consecutive quanta: a quantum joins the current phase
/// while its CPI is within `merge_delta` of the phase's running mean.
pub fn tq_phases(trace: &ExecutionTrace, quantum_length: u64, merge_delta: f64) -> Result<TqPhaseList, AttributionError> {
    let total = trace.total_instructions();
    let quantum_length = quantum_length.clamp(1, total);
    let cpis = per_quantum(trace, quantum_length)?;
    let width = |q: usize| {
        let lo = q as u64 * quantum_length;
        ((lo + quantum_length).min(total) - lo) as f64
    };

    let mut phases: Vec<TqPhase> = Vec::new();
    // (cycles, instructions) of the open phase
    let mut open = (0.0, 0.0);
    for (q, &cpi) in cpis.iter().enumerate() {
        let w = width(q);
        match phases.last_mut() {
            Some(p) if libm::fabs(cpi - open.0 / open.1) <= merge_delta => {
                p.quantum_count += 1;
                open = (open.0 + cpi * w, open.1 + w);
                p.mean_cpi = open.0 / open.1;
            }
            _ => {
                phases.push(TqPhase { start_quantum: q, quantum_count: 1, mean_cpi: cpi });
                open = (cpi * w, w);
            }
        }
    }
    Ok(TqPhaseList { quantum_length, total_instructions: total, phases, merge_delta })
}

/// Anything that can predict CPI at an instruction offset.
pub trait CpiPredictor {
    fn predict_at(&self, offset: u64) -> (f64, Option<BlockId>);
}

impl CpiPredictor for TqPhaseList {
    fn predict_at(&self, offset: u64) -> (f64, Option<BlockId>) {
        let q = (offset / self.quantum_length) as usize;
        let i = self.phases.partition_point(|p| p.start_quantum <= q).saturating_sub(1);
        (self.phases[i].mean_cpi, None)
    }
}

impl CpiPredictor for PhaseNode {
    /// CPI of the deepest phase covering `offset`. A repeating child is tiled
    /// across its parent's whole interval with period equal to its length.
    fn predict_at(&self, offset: u64) -> (f64, Option<BlockId>) {
        let mut node = self;
        let mut pos = offset;
        'descend: loop {
            for child in &node.children {
                if child.occurrence > 1 {
                    let period = child.length_instructions as i128;
                    let rel = pos as i128 - child.start_instruction as i128;
                    let local = child.start_instruction as i128 + rel.rem_euclid(period);
                    pos = local as u64;
                    node = child;
                    continue 'descend;
                }
                if child.start_instruction <= pos && pos < child.end_instruction() {
                    node = child;
                    continue 'descend;
                }
            }
            return (node.mean_cpi, Some(node.head_block));
        }
    }
}

/// Renders a prediction on the same grid as the trace's waveforms.
pub fn predict_waveform(
    source: &impl CpiPredictor,
    total_instructions: u64,
    resolution: usize,
) -> Result<Waveform, AttributionError> {
    Waveform::sample(0, total_instructions, resolution, |off| source.predict_at(off))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub method_label: String,
    pub mean_absolute_percentage_error: f64,
    pub per_sample_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridMismatch;

impl fmt::Display for GridMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "predicted and golden waveforms use different sample grids")
    }
}

impl core::error::Error for GridMismatch {}

/// Mean absolute percentage error of `predicted` against `golden`.
pub fn error_rate(predicted: &Waveform, golden: &Waveform, label: &str) -> Result<ErrorReport, GridMismatch> {
    if predicted.len() != golden.len()
        || predicted.sample_stride != golden.sample_stride
        || predicted.origin_instruction != golden.origin_instruction
        || predicted.is_empty()
    {
        return Err(GridMismatch);
    }
    let errors: Vec<f64> = predicted
        .samples
        .iter()
        .zip(&golden.samples)
        .map(|(&p, &g)| libm::fabs(p - g) / g * 100.0)
        .collect();
    let mape = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(ErrorReport {
        method_label: label.into(),
        mean_absolute_percentage_error: mape,
        per_sample_errors: Some(errors),
    })
}
