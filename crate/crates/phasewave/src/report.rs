//! CSV exports and the BBFDA-versus-TQ comparison.

use std::fmt::Write as _;

use phasewave_core::attribution::{golden_waveform, AttributionError, Waveform};
use phasewave_core::baseline::{error_rate, predict_waveform, tq_phases, GridMismatch};
use phasewave_core::config::AnalysisConfig;
use phasewave_core::phases::{analyze, AnalysisError, PhaseNode};
use phasewave_core::spectral::Spectrum;
use phasewave_core::trace::ExecutionTrace;

use crate::schema::{ComparisonReport, MethodResult};

pub const DEFAULT_MERGE_DELTA: f64 = 0.1;

/// `instruction_offset,cpi,block_id`; the block column is empty where unknown.
pub fn waveform_csv(waveform: &Waveform) -> String {
    let mut out = String::from("instruction_offset,cpi,block_id\n");
    for (k, &cpi) in waveform.samples.iter().enumerate() {
        let _ = write!(out, "{},{}", waveform.offset_of(k), cpi);
        match waveform.sample_heads.get(k).copied().flatten() {
            Some(b) => {
                let _ = writeln!(out, ",{b}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

/// `occurrence,magnitude` with the DC term in row 0.
pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("occurrence,magnitude\n");
    let _ = writeln!(out, "0,{}", spectrum.dc_value);
    for (k, m) in spectrum.magnitudes.iter().enumerate().skip(1) {
        let _ = writeln!(out, "{k},{m}");
    }
    out
}

/// Quantum lengths used when none are given: D/64 and D/8.
pub fn default_quantum_lengths(total_instructions: u64) -> Vec<u64> {
    vec![(total_instructions / 64).max(1), (total_instructions / 8).max(1)]
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("golden cycles required for comparison")]
    NotGolden,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Grid(#[from] GridMismatch),
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub golden: Waveform,
    pub predictions: Vec<Waveform>,
    pub tree: PhaseNode,
}

impl Comparison {
    /// `instruction_offset,golden,<label>...` one row per sample.
    pub fn per_sample_csv(&self) -> String {
        let mut out = String::from("instruction_offset,golden");
        for m in &self.report.methods {
            out.push(',');
            out.push_str(&m.label);
        }
        out.push('\n');
        for (k, g) in self.golden.samples.iter().enumerate() {
            let _ = write!(out, "{},{}", self.golden.offset_of(k), g);
            for p in &self.predictions {
                let _ = write!(out, ",{}", p.samples[k]);
            }
            out.push('\n');
        }
        out
    }
}

pub fn compare(
    trace: &ExecutionTrace,
    trace_name: &str,
    config: &AnalysisConfig,
    quantum_lengths: &[u64],
    merge_delta: f64,
) -> Result<Comparison, CompareError> {
    if !trace.is_golden() {
        return Err(CompareError::NotGolden);
    }
    let total = trace.total_instructions();
    let golden = golden_waveform(trace, config.resolution)?;
    let tree = analyze(trace, config)?;

    let mut methods = Vec::new();
    let mut predictions = Vec::new();

    let bbfda = predict_waveform(&tree, total, config.resolution)?;
    methods.push(MethodResult {
        label: "BBFDA".into(),
        mape_percent: error_rate(&bbfda, &golden, "BBFDA")?.mean_absolute_percentage_error,
        phase_count: tree.node_count(),
    });
    predictions.push(bbfda);

    for &q in quantum_lengths {
        let list = tq_phases(trace, q, merge_delta)?;
        let label = format!("TQ-{}", list.quantum_length);
        let wave = predict_waveform(&list, total, config.resolution)?;
        methods.push(MethodResult {
            mape_percent: error_rate(&wave, &golden, &label)?.mean_absolute_percentage_error,
            phase_count: list.phases.len(),
            label,
        });
        predictions.push(wave);
    }

    Ok(Comparison {
        report: ComparisonReport { trace: trace_name.into(), methods },
        golden,
        predictions,
        tree,
    })
}
