//! Synthetic traces with scripted ground truth.
//!
//! A scenario is a sequence of segments repeated a number of times. A plain
//! segment runs `event_count` executions of blocks with a fixed CPI; a nested
//! segment instead repeats its own inner sequence. Every run of a segment
//! starts with a head block and ends with an exit block whose terminator
//! encodes how the next run is entered (fallthrough, backward branch, call).
//!
//! Randomness comes from PCG-64 MCG (`rand_pcg::Pcg64Mcg`) seeded with
//! `SeedableRng::seed_from_u64`, so a spec and seed always yield the same
//! trace.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64Mcg;

use crate::attribution::quantum_cpis;
use crate::phases::{PhaseNode, Structure};
use crate::trace::{
    BlockDescriptor, BlockEvent, BlockId, ExecutionTrace, QuantumRecord, QuantumSamples, Terminator, TraceError,
};

/// How control enters a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryKind {
    Fallthrough,
    BackwardBranch,
    Call,
}

impl EntryKind {
    pub fn structure(self) -> Structure {
        match self {
            EntryKind::Fallthrough => Structure::None,
            EntryKind::BackwardBranch => Structure::Loop,
            EntryKind::Call => Structure::Function,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedSpec {
    pub repetitions: u64,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    pub label: String,
    pub block_cpi: f64,
    pub block_instruction_count: u32,
    pub event_count: u64,
    /// When present, the segment body is the nested sequence repeated; its
    /// length must equal `event_count * block_instruction_count`.
    pub nested: Option<NestedSpec>,
    pub entry_kind: EntryKind,
}

impl SegmentSpec {
    pub fn plain(label: &str, block_cpi: f64, block_instruction_count: u32, event_count: u64, entry_kind: EntryKind) -> Self {
        Self { label: label.into(), block_cpi, block_instruction_count, event_count, nested: None, entry_kind }
    }

    pub fn length(&self) -> u64 {
        self.event_count * u64::from(self.block_instruction_count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub segments: Vec<SegmentSpec>,
    pub repetitions: u64,
    pub noise_stddev: f64,
    pub seed: u64,
    pub quantum_length: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenAnnotation {
    pub true_phases: PhaseNode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Invalid(String),
    Trace(TraceError),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Invalid(m) => write!(f, "invalid scenario: {m}"),
            SynthError::Trace(e) => write!(f, "generated trace invalid: {e}"),
        }
    }
}

impl core::error::Error for SynthError {}

fn invalid(label: &str, what: &str) -> SynthError {
    SynthError::Invalid(alloc::format!("segment '{label}': {what}"))
}

/// Minimum per-event CPI after noise, as a fraction of one cycle per instruction.
const MIN_EVENT_CPI: f64 = 0.05;

type Path = Vec<usize>;

#[derive(Debug, Clone)]
struct Run {
    path: Path,
    head_key: Path,
    entry: EntryKind,
    events: u64,
    instructions: u32,
    cpi: f64,
    start: u64,
}

impl Run {
    fn end(&self) -> u64 {
        self.start + self.events * u64::from(self.instructions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum BlockKey {
    Head(Path),
    Body(Path),
    // (segment path, follower entry, follower head key)
    Exit(Path, Option<(EntryKind, Path)>),
    // single-event run: head and exit at once
    Combined(Path, Option<(EntryKind, Path)>),
}

impl BlockKey {
    fn region(&self) -> u8 {
        match self {
            BlockKey::Head(_) => 0,
            BlockKey::Body(_) => 1,
            BlockKey::Exit(..) | BlockKey::Combined(..) => 2,
        }
    }
}

fn validate(segments: &[SegmentSpec], min_cpi: &mut f64) -> Result<(), SynthError> {
    if segments.is_empty() {
        return Err(SynthError::Invalid("at least one segment required".into()));
    }
    for s in segments {
        if s.block_instruction_count == 0 {
            return Err(invalid(&s.label, "block_instruction_count must be >= 1"));
        }
        if s.event_count == 0 {
            return Err(invalid(&s.label, "event_count must be >= 1"));
        }
        match &s.nested {
            Some(n) => {
                if n.repetitions == 0 {
                    return Err(invalid(&s.label, "nested repetitions must be >= 1"));
                }
                validate(&n.segments, min_cpi)?;
                let period: u64 = n.segments.iter().map(SegmentSpec::length).sum();
                if period * n.repetitions != s.length() {
                    return Err(invalid(&s.label, "nested segments must tile the segment body exactly"));
                }
            }
            None => {
                if !(s.block_cpi.is_finite() && s.block_cpi > 0.0) {
                    return Err(invalid(&s.label, "block_cpi must be positive"));
                }
                *min_cpi = min_cpi.min(s.block_cpi);
            }
        }
    }
    Ok(())
}

fn expand(segments: &[SegmentSpec], repetitions: u64, prefix: &[usize], cursor: &mut u64, out: &mut Vec<Run>) {
    for _ in 0..repetitions {
        for (i, seg) in segments.iter().enumerate() {
            let mut path = prefix.to_vec();
            path.push(i);
            match &seg.nested {
                Some(n) => {
                    let first = out.len();
                    expand(&n.segments, n.repetitions, &path, cursor, out);
                    // the outermost segment starting here owns the entry
                    out[first].entry = seg.entry_kind;
                    out[first].head_key = path;
                }
                None => {
                    let run = Run {
                        head_key: path.clone(),
                        path,
                        entry: seg.entry_kind,
                        events: seg.event_count,
                        instructions: seg.block_instruction_count,
                        cpi: seg.block_cpi,
                        start: *cursor,
                    };
                    *cursor = run.end();
                    out.push(run);
                }
            }
        }
    }
}

/// Scripted CPI lookup over the run list.
struct Script<'r> {
    runs: &'r [Run],
}

impl Script<'_> {
    fn run_at(&self, offset: u64) -> &Run {
        let i = self.runs.partition_point(|r| r.start <= offset) - 1;
        &self.runs[i]
    }

    fn mean(&self, start: u64, end: u64) -> f64 {
        let first = self.runs.partition_point(|r| r.start <= start) - 1;
        let mut cycles = 0.0;
        let mut single: Option<f64> = None;
        let mut uniform = true;
        for r in self.runs[first..].iter().take_while(|r| r.start < end) {
            let lo = r.start.max(start);
            let hi = r.end().min(end);
            cycles += (hi - lo) as f64 * r.cpi;
            match single {
                None => single = Some(r.cpi),
                Some(c) if c != r.cpi => uniform = false,
                _ => {}
            }
        }
        match single {
            Some(c) if uniform => c,
            _ => cycles / (end - start) as f64,
        }
    }

    fn constant(&self, start: u64, end: u64) -> bool {
        let first = self.runs.partition_point(|r| r.start <= start) - 1;
        let c = self.runs[first].cpi;
        self.runs[first..].iter().take_while(|r| r.start < end).all(|r| r.cpi == c)
    }
}

struct Annotator<'a> {
    script: Script<'a>,
    head_blocks: BTreeMap<u64, BlockId>,
}

impl Annotator<'_> {
    /// `repeated`: some enclosing phase (or this one) occurs more than once,
    /// so even a head at offset 0 is re-entered through its entry kind.
    fn node(&self, start: u64, length: u64, occurrence: u64, repeated: bool, children: Vec<PhaseNode>) -> PhaseNode {
        let run = self.script.run_at(start);
        let structure = if start == 0 && !repeated { Structure::None } else { run.entry.structure() };
        let mut node = PhaseNode {
            head_block: self.head_blocks[&start],
            start_instruction: start,
            length_instructions: length,
            mean_cpi: self.script.mean(start, start + length),
            occurrence,
            structure,
            children,
        };
        if self.script.constant(start, start + length) {
            node.children.clear();
        }
        // a lone child spanning the whole parent adds nothing
        if node.children.len() == 1 && node.children[0].length_instructions == length && node.children[0].occurrence == 1 {
            node.children = core::mem::take(&mut node.children[0].children);
        }
        node
    }

    fn level(&self, segments: &[SegmentSpec], repetitions: u64, start: u64, repeated: bool) -> Vec<PhaseNode> {
        let repeated = repeated || repetitions > 1;
        let mut cursor = start;
        let mut nodes = Vec::new();
        for seg in segments {
            let children = match &seg.nested {
                Some(n) => self.level(&n.segments, n.repetitions, cursor, repeated),
                None => Vec::new(),
            };
            nodes.push(self.node(cursor, seg.length(), 1, repeated, children));
            cursor += seg.length();
        }
        if repetitions > 1 {
            vec![self.node(start, cursor - start, repetitions, repeated, nodes)]
        } else {
            nodes
        }
    }
}

/// Builds a golden-mode trace (plus quantum samples when requested) and the
/// phase tree it was scripted from.
pub fn generate(spec: &ScenarioSpec) -> Result<(ExecutionTrace, GoldenAnnotation), SynthError> {
    if spec.repetitions == 0 {
        return Err(SynthError::Invalid("repetitions must be >= 1".into()));
    }
    let mut min_cpi = f64::INFINITY;
    validate(&spec.segments, &mut min_cpi)?;
    if !(spec.noise_stddev >= 0.0 && spec.noise_stddev < min_cpi) {
        return Err(SynthError::Invalid("noise_stddev must be non-negative and below every segment CPI".into()));
    }
    if spec.quantum_length == Some(0) {
        return Err(SynthError::Invalid("quantum_length must be >= 1".into()));
    }

    let mut runs = Vec::new();
    let mut total = 0u64;
    expand(&spec.segments, spec.repetitions, &[], &mut total, &mut runs);
    for r in &runs {
        if r.entry == EntryKind::BackwardBranch && r.events < 2 {
            return Err(SynthError::Invalid("a backward-branch entered segment needs at least two events".into()));
        }
    }

    // block key sequence per run
    let mut run_keys: Vec<Vec<(BlockKey, u64)>> = Vec::with_capacity(runs.len());
    for (i, r) in runs.iter().enumerate() {
        let follower = runs.get(i + 1).map(|f| (f.entry, f.head_key.clone()));
        let keys = if r.events == 1 {
            vec![(BlockKey::Combined(r.head_key.clone(), follower), 1)]
        } else {
            let mut k = vec![(BlockKey::Head(r.head_key.clone()), 1)];
            if r.events > 2 {
                k.push((BlockKey::Body(r.path.clone()), r.events - 2));
            }
            k.push((BlockKey::Exit(r.path.clone(), follower), 1));
            k
        };
        run_keys.push(keys);
    }

    // address layout: heads, then bodies, then exits; first appearance order within a region
    let mut order: Vec<(BlockKey, u32)> = Vec::new();
    let mut seen: BTreeMap<BlockKey, ()> = BTreeMap::new();
    for (keys, r) in run_keys.iter().zip(&runs) {
        for (k, _) in keys {
            if seen.insert(k.clone(), ()).is_none() {
                order.push((k.clone(), r.instructions));
            }
        }
    }
    order.sort_by_key(|(k, _)| k.region());
    let mut address = 0x40_0000u64;
    let mut ids: BTreeMap<BlockKey, (BlockId, u64, u32)> = BTreeMap::new();
    for (i, (k, n)) in order.iter().enumerate() {
        ids.insert(k.clone(), (BlockId(i as u32), address, *n));
        address += u64::from(*n) * 4;
    }
    let head_address = |key: &Path, single: bool, follower: &Option<(EntryKind, Path)>| -> u64 {
        // single-event heads are keyed with their own follower
        if single {
            ids[&BlockKey::Combined(key.clone(), follower.clone())].1
        } else {
            ids[&BlockKey::Head(key.clone())].1
        }
    };

    let mut blocks = Vec::with_capacity(order.len());
    for (k, _) in &order {
        let (id, start_address, n) = ids[k];
        let (terminator, target_address) = match k {
            BlockKey::Head(_) => (Terminator::Fallthrough, None),
            BlockKey::Body(_) => (Terminator::Branch, Some(start_address)),
            BlockKey::Exit(_, follower) | BlockKey::Combined(_, follower) => match follower {
                None => (Terminator::Return, None),
                Some((EntryKind::Fallthrough, _)) => (Terminator::Fallthrough, None),
                Some((kind, head)) => {
                    // locate the follower run's head block
                    let fi = runs
                        .iter()
                        .position(|r| &r.head_key == head && r.entry == *kind)
                        .expect("follower run exists");
                    let next_follower = runs.get(fi + 1).map(|f| (f.entry, f.head_key.clone()));
                    let target = head_address(head, runs[fi].events == 1, &next_follower);
                    let t = if *kind == EntryKind::Call { Terminator::Call } else { Terminator::Branch };
                    (t, Some(target))
                }
            },
        };
        blocks.push(BlockDescriptor { id, start_address, instruction_count: n, terminator, target_address });
    }

    let mut rng = Pcg64Mcg::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_stddev).map_err(|_| SynthError::Invalid("bad noise".into()))?;
    let mut events = Vec::new();
    let mut head_blocks = BTreeMap::new();
    for (keys, r) in run_keys.iter().zip(&runs) {
        head_blocks.insert(r.start, ids[&keys[0].0].0);
        let n = f64::from(r.instructions);
        for (k, count) in keys {
            let block = ids[k].0;
            for _ in 0..*count {
                let cpi = if spec.noise_stddev > 0.0 {
                    (r.cpi + noise.sample(&mut rng)).max(MIN_EVENT_CPI)
                } else {
                    r.cpi
                };
                events.push(BlockEvent { block, cycles: Some(cpi * n) });
            }
        }
    }

    let mut trace = ExecutionTrace::new(blocks.clone(), events.clone(), None).map_err(SynthError::Trace)?;
    if let Some(q) = spec.quantum_length {
        let cpis = quantum_cpis(&trace, q).expect("generated trace is golden");
        let records = cpis.into_iter().enumerate().map(|(i, cpi)| QuantumRecord { index: i as u64, cpi }).collect();
        trace = ExecutionTrace::new(blocks, events, Some(QuantumSamples { length: q, records }))
            .map_err(SynthError::Trace)?;
    }

    let annotator = Annotator { script: Script { runs: &runs }, head_blocks };
    let children = annotator.level(&spec.segments, spec.repetitions, 0, false);
    let true_phases = annotator.node(0, total, 1, false, children);
    Ok((trace, GoldenAnnotation { true_phases }))
}
