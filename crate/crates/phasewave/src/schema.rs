//! JSON documents: phase trees, marker tables, comparison reports, analysis
//! configs, and scenario specs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use phasewave_core::config::AnalysisConfig;
use phasewave_core::phases::{MarkerTable, PhaseNode, Structure};
use phasewave_core::synth::{EntryKind, NestedSpec, ScenarioSpec, SegmentSpec};
use phasewave_core::trace::BlockId;

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad address '{0}'")]
    Address(String),
    #[error("unknown structure '{0}'")]
    Structure(String),
}

pub fn hex(address: u64) -> String {
    format!("{address:#x}")
}

fn parse_hex(s: &str) -> Result<u64, SchemaError> {
    let digits = s.strip_prefix("0x").ok_or_else(|| SchemaError::Address(s.into()))?;
    u64::from_str_radix(digits, 16).map_err(|_| SchemaError::Address(s.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseNodeJson {
    pub head_block: u32,
    pub head_address: String,
    pub start: u64,
    pub length: u64,
    pub occurrence: u64,
    pub mean_cpi: f64,
    pub structure: String,
    pub children: Vec<PhaseNodeJson>,
}

impl PhaseNodeJson {
    pub fn from_node(node: &PhaseNode, address_of: &impl Fn(BlockId) -> u64) -> Self {
        Self {
            head_block: node.head_block.0,
            head_address: hex(address_of(node.head_block)),
            start: node.start_instruction,
            length: node.length_instructions,
            occurrence: node.occurrence,
            mean_cpi: node.mean_cpi,
            structure: node.structure.as_str().into(),
            children: node.children.iter().map(|c| Self::from_node(c, address_of)).collect(),
        }
    }

    /// Rebuilds the tree and collects the head addresses it names.
    pub fn to_node(&self, addresses: &mut BTreeMap<BlockId, u64>) -> Result<PhaseNode, SchemaError> {
        addresses.insert(BlockId(self.head_block), parse_hex(&self.head_address)?);
        Ok(PhaseNode {
            head_block: BlockId(self.head_block),
            start_instruction: self.start,
            length_instructions: self.length,
            mean_cpi: self.mean_cpi,
            occurrence: self.occurrence,
            structure: Structure::parse(&self.structure).ok_or_else(|| SchemaError::Structure(self.structure.clone()))?,
            children: self.children.iter().map(|c| c.to_node(addresses)).collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerEntryJson {
    pub head_block: u32,
    pub phase_path: Vec<usize>,
    pub mean_cpi: f64,
    pub structure: String,
    pub nested_paths: Vec<Vec<usize>>,
}

pub fn markers_json(table: &MarkerTable) -> BTreeMap<String, MarkerEntryJson> {
    table
        .iter()
        .map(|(&addr, e)| {
            (
                hex(addr),
                MarkerEntryJson {
                    head_block: e.head_block.0,
                    phase_path: e.phase_path.clone(),
                    mean_cpi: e.mean_cpi,
                    structure: e.structure.as_str().into(),
                    nested_paths: e.nested_paths.clone(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub label: String,
    pub mape_percent: f64,
    pub phase_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trace: String,
    pub methods: Vec<MethodResult>,
}

/// Every field optional; missing fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigJson {
    pub resolution: Option<usize>,
    pub boundary_threshold_fraction: Option<f64>,
    pub flat_cpi_range: Option<f64>,
    pub flat_spectrum_ratio: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_segment_instructions: Option<u64>,
}

impl ConfigJson {
    pub fn apply(&self, config: &mut AnalysisConfig) {
        if let Some(v) = self.resolution {
            config.resolution = v;
        }
        if let Some(v) = self.boundary_threshold_fraction {
            config.boundary_threshold_fraction = v;
        }
        if let Some(v) = self.flat_cpi_range {
            config.flat_cpi_range = v;
        }
        if let Some(v) = self.flat_spectrum_ratio {
            config.flat_spectrum_ratio = v;
        }
        if let Some(v) = self.max_depth {
            config.max_depth = v;
        }
        if let Some(v) = self.min_segment_instructions {
            config.min_segment_instructions = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKindJson {
    Fallthrough,
    BackwardBranch,
    Call,
}

impl From<EntryKindJson> for EntryKind {
    fn from(k: EntryKindJson) -> Self {
        match k {
            EntryKindJson::Fallthrough => EntryKind::Fallthrough,
            EntryKindJson::BackwardBranch => EntryKind::BackwardBranch,
            EntryKindJson::Call => EntryKind::Call,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedJson {
    pub repetitions: u64,
    pub segments: Vec<SegmentJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentJson {
    pub label: String,
    #[serde(default = "one")]
    pub block_cpi: f64,
    pub block_instruction_count: u32,
    pub event_count: u64,
    #[serde(default)]
    pub nested: Option<NestedJson>,
    #[serde(default = "fallthrough")]
    pub entry_kind: EntryKindJson,
}

fn one() -> f64 {
    1.0
}

fn fallthrough() -> EntryKindJson {
    EntryKindJson::Fallthrough
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioJson {
    pub segments: Vec<SegmentJson>,
    #[serde(default = "one_u64")]
    pub repetitions: u64,
    #[serde(default)]
    pub noise_stddev: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quantum_length: Option<u64>,
}

fn one_u64() -> u64 {
    1
}

impl From<&SegmentJson> for SegmentSpec {
    fn from(s: &SegmentJson) -> Self {
        SegmentSpec {
            label: s.label.clone(),
            block_cpi: s.block_cpi,
            block_instruction_count: s.block_instruction_count,
            event_count: s.event_count,
            nested: s.nested.as_ref().map(|n| NestedSpec {
                repetitions: n.repetitions,
                segments: n.segments.iter().map(Into::into).collect(),
            }),
            entry_kind: s.entry_kind.into(),
        }
    }
}

impl From<&ScenarioJson> for ScenarioSpec {
    fn from(s: &ScenarioJson) -> Self {
        ScenarioSpec {
            segments: s.segments.iter().map(Into::into).collect(),
            repetitions: s.repetitions,
            noise_stddev: s.noise_stddev,
            seed: s.seed,
            quantum_length: s.quantum_length,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("schema types serialize");
    s.push('\n');
    s
}
