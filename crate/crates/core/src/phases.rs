//! Recursive phase identification.
//!
//! Each segment of the trace is resampled, transformed, and either declared a
//! single phase (flat), split at its strongest CPI step (no repetition), or
//! reduced to one template instance of its dominant repeating pattern, which
//! is analysed again. Phase starts are snapped to basic-block boundaries.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::attribution::{self, build_waveform_range, AttributionError, CpiIndex, Profiles, Waveform};
use crate::config::{AnalysisConfig, ConfigError};
use crate::spectral::{dft_magnitude, is_flat, main_spectrum, MainSpectrum, Spectrum};
use crate::trace::{BlockDescriptor, BlockId, ExecutionTrace, Terminator};

/// Code structure entered at a phase head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Structure {
    Loop,
    Function,
    None,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Loop => "loop",
            Structure::Function => "function",
            Structure::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "loop" => Some(Structure::Loop),
            "function" => Some(Structure::Function),
            "none" => Some(Structure::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNode {
    pub head_block: BlockId,
    pub start_instruction: u64,
    pub length_instructions: u64,
    pub mean_cpi: f64,
    /// Number of repetitions of this phase inside its parent.
    pub occurrence: u64,
    pub structure: Structure,
    pub children: Vec<PhaseNode>,
}

impl PhaseNode {
    pub fn end_instruction(&self) -> u64 {
        self.start_instruction + self.length_instructions
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(PhaseNode::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PhaseNode::node_count).sum::<usize>()
    }

    /// Visits every node with its child-index path from the root, depth first.
    pub fn walk(&self, f: &mut impl FnMut(&[usize], &PhaseNode)) {
        fn go(node: &PhaseNode, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &PhaseNode)) {
            f(path, node);
            for (i, c) in node.children.iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn at_path(&self, path: &[usize]) -> Option<&PhaseNode> {
        path.iter().try_fold(self, |n, &i| n.children.get(i))
    }

    /// Children lie inside the parent, are ordered, and do not overlap.
    pub fn check_well_formed(&self) -> Result<(), TreeError> {
        if self.length_instructions == 0 {
            return Err(TreeError::EmptyNode { start: self.start_instruction });
        }
        if !(self.mean_cpi.is_finite() && self.mean_cpi > 0.0) || self.occurrence == 0 {
            return Err(TreeError::InvalidValue { start: self.start_instruction });
        }
        let mut cursor = self.start_instruction;
        for c in &self.children {
            if c.start_instruction < cursor || c.end_instruction() > self.end_instruction() {
                return Err(TreeError::ChildOutOfBounds { parent_start: self.start_instruction, child_start: c.start_instruction });
            }
            cursor = c.end_instruction();
            c.check_well_formed()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeError {
    EmptyNode { start: u64 },
    InvalidValue { start: u64 },
    ChildOutOfBounds { parent_start: u64, child_start: u64 },
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::EmptyNode { start } => write!(f, "phase at {start} has zero length"),
            TreeError::InvalidValue { start } => write!(f, "phase at {start} has invalid cpi or occurrence"),
            TreeError::ChildOutOfBounds { parent_start, child_start } => {
                write!(f, "child at {child_start} overlaps or escapes parent at {parent_start}")
            }
        }
    }
}

impl core::error::Error for TreeError {}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    Config(ConfigError),
    Attribution(AttributionError),
    Tree(TreeError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::Config(e) => e.fmt(f),
            AnalysisError::Attribution(e) => e.fmt(f),
            AnalysisError::Tree(e) => write!(f, "internal invariant violated: {e}"),
        }
    }
}

impl core::error::Error for AnalysisError {}

impl From<ConfigError> for AnalysisError {
    fn from(e: ConfigError) -> Self {
        AnalysisError::Config(e)
    }
}

impl From<AttributionError> for AnalysisError {
    fn from(e: AttributionError) -> Self {
        AnalysisError::Attribution(e)
    }
}

/// A block that may start a phase: it follows a large CPI change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadCandidate {
    pub event_index: usize,
    pub block: BlockId,
    pub offset: u64,
}

/// Scans consecutive event pairs and keeps the second event of every pair
/// whose block CPIs differ by more than `threshold`.
pub fn candidate_heads(
    trace: &ExecutionTrace,
    profiles: &Profiles,
    threshold: f64,
) -> Result<Vec<HeadCandidate>, AttributionError> {
    let index = CpiIndex::from_profiles(trace, profiles)?;
    Ok(candidates_in(&index, 0, trace.events().len(), threshold))
}

fn candidates_in(index: &CpiIndex<'_>, first: usize, end: usize, threshold: f64) -> Vec<HeadCandidate> {
    let trace = index.trace();
    (first + 1..end)
        .filter(|&i| libm::fabs(index.event_cpi(i) - index.event_cpi(i - 1)) > threshold)
        .map(|i| HeadCandidate { event_index: i, block: trace.events()[i].block, offset: trace.event_offset(i) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoAlignment;

impl fmt::Display for NoAlignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no head-block candidate to align")
    }
}

impl core::error::Error for NoAlignment {}

/// Chooses the candidate block whose recurrence best matches the phase
/// length: the block with the median gap between its candidate positions
/// closest to `phase_length`. Among equally close blocks, the one whose
/// positions line up (modulo the phase length) with the earliest candidate
/// wins, then the earliest first occurrence. If no block recurs, the
/// earliest candidate is returned.
pub fn align_phase(candidates: &[HeadCandidate], phase_length: u64) -> Result<(u64, BlockId), NoAlignment> {
    let origin = candidates.iter().map(|c| c.offset).min().ok_or(NoAlignment)?;
    let period = phase_length.max(1);
    let mut positions: BTreeMap<BlockId, Vec<u64>> = BTreeMap::new();
    for c in candidates {
        positions.entry(c.block).or_default().push(c.offset);
    }
    let mut best: Option<(f64, u64, u64, BlockId)> = None;
    for (&block, offs) in &positions {
        if offs.len() < 2 {
            continue;
        }
        let mut gaps: Vec<u64> = offs.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_unstable();
        let m = gaps.len();
        let median = if m % 2 == 1 { gaps[m / 2] as f64 } else { (gaps[m / 2 - 1] + gaps[m / 2]) as f64 / 2.0 };
        let distance = libm::fabs(median - phase_length as f64);
        let first = offs[0];
        let shift = (first - origin) % period;
        let better = match best {
            None => true,
            Some((d, sh, o, _)) => distance < d || (distance == d && (shift, first) < (sh, o)),
        };
        if better {
            best = Some((distance, shift, first, block));
        }
    }
    if let Some((_, _, offset, block)) = best {
        return Ok((offset, block));
    }
    candidates.iter().min_by_key(|c| c.offset).map(|c| (c.offset, c.block)).ok_or(NoAlignment)
}

/// A boundary between a lower- and a higher-performance part of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub boundary_instruction: u64,
    pub mean_before: f64,
    pub mean_after: f64,
}

const SPLIT_TIE_TOLERANCE: f64 = 1e-9;

/// Finds the sample boundary with the largest difference between the mean
/// before and the mean after. The split is accepted only when that
/// difference exceeds the population standard deviation of the waveform.
/// Near-equal differences resolve toward the most balanced split.
pub fn split_step(waveform: &Waveform) -> Option<Split> {
    let s = &waveform.samples;
    let n = s.len();
    if n < 2 || s.iter().all(|&x| x == s[0]) {
        return None;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &x in s {
        acc += x;
        prefix.push(acc);
    }
    let total = acc;
    let mean = total / n as f64;
    let variance = s.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let std = libm::sqrt(variance);
    if std == 0.0 {
        return None;
    }

    let diff_at = |t: usize| {
        let before = prefix[t] / t as f64;
        let after = (total - prefix[t]) / (n - t) as f64;
        (before, after)
    };
    let best_diff = (1..n).map(|t| {
        let (b, a) = diff_at(t);
        libm::fabs(a - b)
    });
    let peak = best_diff.clone().fold(0.0, f64::max);
    let center = n as f64 / 2.0;
    let t = (1..n)
        .zip(best_diff)
        .filter(|&(_, d)| d >= peak * (1.0 - SPLIT_TIE_TOLERANCE))
        .min_by(|a, b| {
            let da = libm::fabs(a.0 as f64 - center);
            let db = libm::fabs(b.0 as f64 - center);
            da.total_cmp(&db).then(a.0.cmp(&b.0))
        })?
        .0;
    if peak <= std {
        return None;
    }
    let (mean_before, mean_after) = diff_at(t);
    Some(Split { boundary_instruction: waveform.offset_of(t), mean_before, mean_after })
}

/// Code structure a phase head is entered through, judged from the block
/// whose terminator transferred control to it.
pub fn classify_structure(_block: &BlockDescriptor, context: Option<&BlockDescriptor>) -> Structure {
    match context {
        Some(c) if c.terminator == Terminator::Call => Structure::Function,
        Some(c) if c.is_backward_branch() => Structure::Loop,
        _ => Structure::None,
    }
}

/// One analysed segment, reported to observers as the recursion proceeds.
#[derive(Debug, Clone)]
pub struct SegmentReport<'a> {
    pub depth: usize,
    pub start_instruction: u64,
    pub length_instructions: u64,
    pub waveform: &'a Waveform,
    pub spectrum: &'a Spectrum,
    pub main: Option<MainSpectrum>,
}

/// Analyses a trace with block CPIs attributed by [`attribution::attribute_block_cpi`].
pub fn analyze(trace: &ExecutionTrace, config: &AnalysisConfig) -> Result<PhaseNode, AnalysisError> {
    let profiles = attribution::attribute_block_cpi(trace)?;
    analyze_with(trace, &profiles, config, &mut |_| {})
}

pub fn analyze_with(
    trace: &ExecutionTrace,
    profiles: &Profiles,
    config: &AnalysisConfig,
    observer: &mut dyn FnMut(&SegmentReport<'_>),
) -> Result<PhaseNode, AnalysisError> {
    config.validate()?;
    let index = CpiIndex::from_profiles(trace, profiles)?;
    let mut analyzer = Analyzer { index: &index, config, observer };
    let root = analyzer.segment(0, trace.total_instructions(), 0, 1, None)?;
    root.check_well_formed().map_err(AnalysisError::Tree)?;
    Ok(root)
}

struct Analyzer<'a, 't> {
    index: &'a CpiIndex<'t>,
    config: &'a AnalysisConfig,
    observer: &'a mut dyn FnMut(&SegmentReport<'_>),
}

impl Analyzer<'_, '_> {
    fn trace(&self) -> &ExecutionTrace {
        self.index.trace()
    }

    /// `period` is the length of the outermost repeating phase enclosing
    /// `start`. A head at the very start of the trace has no predecessor, so
    /// its next instance one period later supplies the entry context.
    fn leaf(&self, start: u64, end: u64, occurrence: u64, period: Option<u64>) -> PhaseNode {
        let trace = self.trace();
        let head = trace.event_at(start).expect("segment inside trace");
        let context_event = match (head, period) {
            (0, Some(p)) => trace
                .event_at(start + p)
                .filter(|&i| trace.event_offset(i) == start + p && trace.events()[i].block == trace.events()[0].block),
            (0, None) => None,
            _ => Some(head),
        };
        let context = context_event.filter(|&i| i > 0).map(|i| trace.event_descriptor(i - 1));
        let descriptor = trace.event_descriptor(head);
        PhaseNode {
            head_block: descriptor.id,
            start_instruction: start,
            length_instructions: end - start,
            mean_cpi: self.index.mean(start, end),
            occurrence,
            structure: classify_structure(descriptor, context),
            children: Vec::new(),
        }
    }

    fn segment(
        &mut self,
        start: u64,
        end: u64,
        depth: usize,
        occurrence: u64,
        period: Option<u64>,
    ) -> Result<PhaseNode, AnalysisError> {
        let mut node = self.leaf(start, end, occurrence, period);
        let length = end - start;
        if depth >= self.config.max_depth || length < self.config.min_segment_instructions {
            return Ok(node);
        }
        let waveform = build_waveform_range(self.index, start, end, self.config.resolution)?;
        if waveform.len() < 2 {
            return Ok(node);
        }
        let spectrum = dft_magnitude(&waveform);
        let flat = is_flat(&waveform, &spectrum, self.config);
        let main = if flat { None } else { main_spectrum(&spectrum).ok() };
        (self.observer)(&SegmentReport {
            depth,
            start_instruction: start,
            length_instructions: length,
            waveform: &waveform,
            spectrum: &spectrum,
            main,
        });
        let Some(main) = main else {
            return Ok(node);
        };

        if main.occurrence == 1 {
            if let Some(split) = split_step(&waveform) {
                let boundary = self.snap_boundary(start, end, split.boundary_instruction, waveform.sample_stride);
                if boundary > start && boundary < end {
                    node.children = vec![
                        self.segment(start, boundary, depth + 1, 1, period)?,
                        self.segment(boundary, end, depth + 1, 1, period)?,
                    ];
                }
            }
            return Ok(node);
        }

        // round(length / X) can overshoot the segment by up to X/2 in total;
        // cap the template so its occurrences fit within one stride of slack
        let phase_length = main
            .phase_length_instructions
            .min((length + waveform.sample_stride) / main.occurrence as u64)
            .max(1);
        let threshold = self.config.boundary_threshold_fraction * main.magnitude;
        let trace = self.trace();
        let first = trace.event_at(start).expect("segment inside trace");
        let last = trace.event_at(end - 1).expect("segment inside trace") + 1;
        // The segment start is itself a phase boundary, so its block competes
        // with the CPI-change candidates.
        let mut candidates = vec![HeadCandidate {
            event_index: first,
            block: trace.events()[first].block,
            offset: trace.event_offset(first).max(start),
        }];
        candidates.extend(candidates_in(self.index, first, last, threshold));
        let (mut head_start, _) = align_phase(&candidates, phase_length).unwrap_or((start, node.head_block));
        // an instance a whole number of periods in means one also begins at
        // the segment start, whatever block heads it there
        let phase = (head_start - start) % phase_length;
        if phase <= waveform.sample_stride || phase_length - phase <= waveform.sample_stride {
            head_start = start;
        }
        let child_end = (head_start + phase_length).min(end);
        if child_end > head_start && child_end - head_start < length {
            let period = period.or(Some(phase_length));
            node.children = vec![self.segment(head_start, child_end, depth + 1, main.occurrence as u64, period)?];
        }
        Ok(node)
    }

    /// Moves a sample-grid boundary onto the block boundary within one stride
    /// that best separates the two sides.
    fn snap_boundary(&self, start: u64, end: u64, boundary: u64, stride: u64) -> u64 {
        let trace = self.trace();
        let lo = boundary.saturating_sub(stride).max(start + 1);
        let hi = boundary.saturating_add(stride).min(end - 1);
        let mut best: Option<(f64, u64, u64)> = None;
        let mut i = trace.first_event_at_or_after(lo);
        while i < trace.events().len() && trace.event_offset(i) <= hi {
            let b = trace.event_offset(i);
            let separation = libm::fabs(self.index.mean(b, end) - self.index.mean(start, b));
            let distance = b.abs_diff(boundary);
            let better = match best {
                None => true,
                Some((s, d, _)) => separation > s || (separation == s && distance < d),
            };
            if better {
                best = Some((separation, distance, b));
            }
            i += 1;
        }
        if let Some((_, _, b)) = best {
            return b;
        }
        // no block boundary near the grid point: take the nearest one inside the segment
        let after = trace.first_event_at_or_after(boundary);
        let next = (after < trace.events().len()).then(|| trace.event_offset(after)).filter(|&b| b < end);
        let prev = after.checked_sub(1).map(|i| trace.event_offset(i)).filter(|&b| b > start);
        match (prev, next) {
            (Some(p), Some(n)) => if boundary - p <= n - boundary { p } else { n },
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => boundary,
        }
    }
}

/// Marker-table entry for one phase head address.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerEntry {
    pub head_block: BlockId,
    pub phase_path: Vec<usize>,
    pub mean_cpi: f64,
    pub structure: Structure,
    /// Deeper phases that share this head.
    pub nested_paths: Vec<Vec<usize>>,
}

/// Keyed by head block start address.
pub type MarkerTable = BTreeMap<u64, MarkerEntry>;

/// Builds the table a binary patcher would consume: one entry per distinct
/// head address, holding the shallowest phase that starts there.
pub fn export_markers(root: &PhaseNode, address_of: impl Fn(BlockId) -> Option<u64>) -> MarkerTable {
    let mut table = MarkerTable::new();
    let mut queue: VecDeque<(Vec<usize>, &PhaseNode)> = VecDeque::from([(Vec::new(), root)]);
    while let Some((path, node)) = queue.pop_front() {
        for (i, c) in node.children.iter().enumerate() {
            let mut p = path.clone();
            p.push(i);
            queue.push_back((p, c));
        }
        let Some(address) = address_of(node.head_block) else { continue };
        match table.get_mut(&address) {
            Some(entry) => entry.nested_paths.push(path),
            None => {
                table.insert(
                    address,
                    MarkerEntry {
                        head_block: node.head_block,
                        phase_path: path,
                        mean_cpi: node.mean_cpi,
                        structure: node.structure,
                        nested_paths: Vec::new(),
                    },
                );
            }
        }
    }
    table
}

/// [`export_markers`] with addresses from the trace's block table.
pub fn export_markers_for(root: &PhaseNode, trace: &ExecutionTrace) -> MarkerTable {
    export_markers(root, |b| trace.block(b).map(|d| d.start_address))
}
