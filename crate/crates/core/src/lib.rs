//! Program phase detection from basic-block CPI traces.
//!
//! The pipeline attributes a CPI to every basic block, redraws the trace as a
//! CPI waveform indexed by instruction count, and finds phases by locating
//! the dominant repetition in the waveform's spectrum. Phases nest: each
//! phase template is analysed again until its waveform is flat.
//!
//! Everything here is `no_std` with `alloc`; file formats and the CLI live in
//! the `phasewave` crate.

#![no_std]

extern crate alloc;

pub mod attribution;
pub mod baseline;
pub mod config;
pub mod fft;
pub mod phases;
pub mod spectral;
pub mod synth;
pub mod trace;

pub use attribution::{
    attribute_block_cpi, build_waveform, golden_waveform, BlockProfile, CpiIndex, ProfileSource, Profiles, Waveform,
};
pub use baseline::{error_rate, predict_waveform, tq_phases, CpiPredictor, ErrorReport, TqPhaseList};
pub use config::AnalysisConfig;
pub use phases::{analyze, analyze_with, export_markers, AnalysisError, MarkerTable, PhaseNode, Structure};
pub use spectral::{dft_magnitude, is_flat, main_spectrum, MainSpectrum, Spectrum};
pub use synth::{generate, GoldenAnnotation, ScenarioSpec, SegmentSpec};
pub use trace::{BlockDescriptor, BlockEvent, BlockId, ExecutionTrace, Terminator};
