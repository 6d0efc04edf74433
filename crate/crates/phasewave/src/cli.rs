//! Subcommands and their exit-code contract: 0 success, 1 analysis error,
//! 2 usage, IO or parse error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use phasewave_core::attribution::{attribute_block_cpi, build_waveform, Waveform};
use phasewave_core::config::AnalysisConfig;
use phasewave_core::phases::{analyze_with, export_markers, export_markers_for, PhaseNode};
use phasewave_core::spectral::dft_magnitude;
use phasewave_core::synth::{generate, ScenarioSpec};
use phasewave_core::trace::{BlockId, ExecutionTrace};

use crate::error::{CliError, EXIT_OK, EXIT_USAGE};
use crate::report::{compare, default_quantum_lengths, spectrum_csv, waveform_csv, DEFAULT_MERGE_DELTA};
use crate::schema::{markers_json, to_json, ConfigJson, PhaseNodeJson, ScenarioJson, SchemaError};
use crate::trace_format::{parse_trace, write_trace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub emitted_files: Vec<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "phasewave", version, about = "Program phase detection from basic-block CPI traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect phases and write the phase tree.
    Analyze(AnalyzeArgs),
    /// Compare phase-based CPI prediction with time-quantum baselines.
    Compare(CompareArgs),
    /// Generate a synthetic trace and its ground-truth annotation.
    Synth(SynthArgs),
    /// Write the spectrum of the whole-trace waveform.
    Spectrum(SpectrumArgs),
    /// Build the marker table from a saved phase tree.
    Markers(MarkersArgs),
}

/// Analysis knobs; flags override values from `--config`.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with any subset of the analysis settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub boundary_threshold_fraction: Option<f64>,
    #[arg(long)]
    pub flat_cpi_range: Option<f64>,
    #[arg(long)]
    pub flat_spectrum_ratio: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_segment_instructions: Option<u64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<AnalysisConfig, CliError> {
        let mut config = AnalysisConfig::default();
        if let Some(path) = &self.config {
            let text = read(path)?;
            let file: ConfigJson = serde_json::from_str(&text)
                .map_err(|e| CliError::Schema { path: path.clone(), source: e.into() })?;
            file.apply(&mut config);
        }
        ConfigJson {
            resolution: self.resolution,
            boundary_threshold_fraction: self.boundary_threshold_fraction,
            flat_cpi_range: self.flat_cpi_range,
            flat_spectrum_ratio: self.flat_spectrum_ratio,
            max_depth: self.max_depth,
            min_segment_instructions: self.min_segment_instructions,
        }
        .apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub trace: PathBuf,
    /// Phase-tree JSON output; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Whole-trace waveform CSV.
    #[arg(long)]
    pub waveform: Option<PathBuf>,
    /// Directory for one spectrum CSV per analysed segment.
    #[arg(long)]
    pub spectra_dir: Option<PathBuf>,
    /// Marker-table JSON.
    #[arg(long)]
    pub markers: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub trace: PathBuf,
    /// Comparison JSON output; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// TQ quantum length in instructions; repeatable. Defaults to D/64 and D/8.
    #[arg(long = "quantum")]
    pub quantum_lengths: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_MERGE_DELTA)]
    pub merge_delta: f64,
    /// Per-sample CSV of the golden waveform and every prediction.
    #[arg(long)]
    pub per_sample: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub spec: PathBuf,
    /// Writes `<prefix>.trace` and `<prefix>.annotation.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub trace: PathBuf,
    /// Spectrum CSV output; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct MarkersArgs {
    pub tree: PathBuf,
    /// Marker-table JSON output; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_trace(path: &Path) -> Result<ExecutionTrace, CliError> {
    parse_trace(&read(path)?).map_err(|source| CliError::Parse { path: path.into(), source })
}

/// Collects output files so a failure part-way still reports what was written.
#[derive(Default)]
struct Sink {
    emitted: Vec<PathBuf>,
}

impl Sink {
    fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })?;
        self.emitted.push(path.into());
        Ok(())
    }

    fn write_or_print(&mut self, path: Option<&Path>, contents: &str) -> Result<(), CliError> {
        match path {
            Some(p) => self.write(p, contents),
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }
}

fn address_lookup(trace: &ExecutionTrace) -> impl Fn(BlockId) -> u64 + '_ {
    |b| trace.block(b).map_or(0, |d| d.start_address)
}

pub fn tree_json(tree: &PhaseNode, trace: &ExecutionTrace) -> String {
    to_json(&PhaseNodeJson::from_node(tree, &address_lookup(trace)))
}

/// Reads a tree written by `analyze` together with its head addresses.
pub fn read_tree(text: &str) -> Result<(PhaseNode, BTreeMap<BlockId, u64>), SchemaError> {
    let json: PhaseNodeJson = serde_json::from_str(text)?;
    let mut addresses = BTreeMap::new();
    let root = json.to_node(&mut addresses)?;
    Ok((root, addresses))
}

fn cmd_analyze(args: &AnalyzeArgs, sink: &mut Sink) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let trace = load_trace(&args.trace)?;
    let profiles = attribute_block_cpi(&trace).map_err(|e| CliError::Analysis(e.into()))?;

    let mut spectra: Vec<(String, String)> = Vec::new();
    let want_spectra = args.spectra_dir.is_some();
    let tree = analyze_with(&trace, &profiles, &config, &mut |seg| {
        if want_spectra {
            let name = format!("spectrum_d{}_{}.csv", seg.depth, seg.start_instruction);
            spectra.push((name, spectrum_csv(seg.spectrum)));
        }
    })?;

    sink.write_or_print(args.output.as_deref(), &tree_json(&tree, &trace))?;
    if let Some(path) = &args.waveform {
        let w = build_waveform(&trace, &profiles, config.resolution).map_err(|e| CliError::Analysis(e.into()))?;
        sink.write(path, &waveform_csv(&w))?;
    }
    if let Some(dir) = &args.spectra_dir {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        for (name, csv) in &spectra {
            sink.write(&dir.join(name), csv)?;
        }
    }
    if let Some(path) = &args.markers {
        sink.write(path, &to_json(&markers_json(&export_markers_for(&tree, &trace))))?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs, sink: &mut Sink) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let trace = load_trace(&args.trace)?;
    let quanta = if args.quantum_lengths.is_empty() {
        default_quantum_lengths(trace.total_instructions())
    } else {
        args.quantum_lengths.clone()
    };
    let name = args.trace.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let result = compare(&trace, &name, &config, &quanta, args.merge_delta)?;
    sink.write_or_print(args.output.as_deref(), &to_json(&result.report))?;
    if let Some(path) = &args.per_sample {
        sink.write(path, &result.per_sample_csv())?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, sink: &mut Sink) -> Result<(), CliError> {
    let text = read(&args.spec)?;
    let json: ScenarioJson =
        serde_json::from_str(&text).map_err(|e| CliError::Schema { path: args.spec.clone(), source: e.into() })?;
    let (trace, annotation) = generate(&ScenarioSpec::from(&json))?;

    let prefix = args.out_prefix.as_os_str();
    let with_suffix = |suffix: &str| {
        let mut p = OsString::from(prefix);
        p.push(suffix);
        PathBuf::from(p)
    };
    sink.write(&with_suffix(".trace"), &write_trace(&trace))?;
    sink.write(&with_suffix(".annotation.json"), &tree_json(&annotation.true_phases, &trace))?;
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs, sink: &mut Sink) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let trace = load_trace(&args.trace)?;
    let profiles = attribute_block_cpi(&trace).map_err(|e| CliError::Analysis(e.into()))?;
    let w: Waveform =
        build_waveform(&trace, &profiles, config.resolution).map_err(|e| CliError::Analysis(e.into()))?;
    sink.write_or_print(args.output.as_deref(), &spectrum_csv(&dft_magnitude(&w)))
}

fn cmd_markers(args: &MarkersArgs, sink: &mut Sink) -> Result<(), CliError> {
    let text = read(&args.tree)?;
    let (root, addresses) = read_tree(&text).map_err(|source| CliError::Schema { path: args.tree.clone(), source })?;
    root.check_well_formed().map_err(CliError::Tree)?;
    let table = export_markers(&root, |b| addresses.get(&b).copied());
    sink.write_or_print(args.output.as_deref(), &to_json(&markers_json(&table)))
}

pub fn execute(cli: &Cli) -> CommandOutcome {
    let mut sink = Sink::default();
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, &mut sink),
        Command::Compare(a) => cmd_compare(a, &mut sink),
        Command::Synth(a) => cmd_synth(a, &mut sink),
        Command::Spectrum(a) => cmd_spectrum(a, &mut sink),
        Command::Markers(a) => cmd_markers(a, &mut sink),
    };
    let exit_code = match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("phasewave: {e}");
            e.exit_code()
        }
    };
    CommandOutcome { exit_code, emitted_files: sink.emitted }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let _ = e.print();
            let exit_code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            CommandOutcome { exit_code, emitted_files: Vec::new() }
        }
    }
}
