//! Per-block CPI attribution and the instruction-indexed performance waveform.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::trace::{BlockId, ExecutionTrace};

/// Where a block's CPI came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    /// Exact per-event cycle counts.
    Golden,
    /// Weighted average of the quanta the block occurs in.
    QuantumWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockProfile {
    pub block: BlockId,
    pub cpi: f64,
    pub occurrence_total: u64,
    pub source: ProfileSource,
}

pub type Profiles = BTreeMap<BlockId, BlockProfile>;

#[derive(Debug, Clone, PartialEq)]
pub enum AttributionError {
    /// The requested source is not available in this trace.
    SourceUnavailable(ProfileSource),
    MissingProfile(BlockId),
    NonPositiveCpi(BlockId),
    InvalidResolution(usize),
    EmptyRange,
}

impl fmt::Display for AttributionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributionError::SourceUnavailable(ProfileSource::Golden) => {
                write!(f, "golden cycles required")
            }
            AttributionError::SourceUnavailable(ProfileSource::QuantumWeighted) => {
                write!(f, "quantum samples required")
            }
            AttributionError::MissingProfile(b) => write!(f, "no profile for executed block {b}"),
            AttributionError::NonPositiveCpi(b) => write!(f, "block {b} has non-positive CPI"),
            AttributionError::InvalidResolution(r) => write!(f, "resolution {r} must be >= 2"),
            AttributionError::EmptyRange => write!(f, "empty instruction range"),
        }
    }
}

impl core::error::Error for AttributionError {}

/// Attributes CPI to every executed block. Quantum samples are used when the
/// trace has them, golden cycles otherwise.
pub fn attribute_block_cpi(trace: &ExecutionTrace) -> Result<Profiles, AttributionError> {
    let source = if trace.quanta().is_some() {
        ProfileSource::QuantumWeighted
    } else {
        ProfileSource::Golden
    };
    attribute_block_cpi_from(trace, source)
}

pub fn attribute_block_cpi_from(
    trace: &ExecutionTrace,
    source: ProfileSource,
) -> Result<Profiles, AttributionError> {
    let mut acc: BTreeMap<BlockId, Accumulator> = BTreeMap::new();
    match source {
        ProfileSource::Golden => {
            if !trace.is_golden() {
                return Err(AttributionError::SourceUnavailable(source));
            }
            for (i, e) in trace.events().iter().enumerate() {
                let n = trace.event_instructions(i) as f64;
                let cycles = e.cycles.unwrap_or_default();
                acc.entry(e.block).or_default().add(cycles, n, cycles / n);
            }
        }
        ProfileSource::QuantumWeighted => {
            let q = trace.quanta().ok_or(AttributionError::SourceUnavailable(source))?;
            for (i, e) in trace.events().iter().enumerate() {
                // an event belongs to the quantum holding its first instruction
                let qi = (trace.event_offset(i) / q.length) as usize;
                let v = q.records[qi].cpi;
                acc.entry(e.block).or_default().add(v, 1.0, v);
            }
        }
    }
    acc.into_iter()
        .map(|(block, a)| {
            let cpi = a.value();
            let occ = a.occurrences;
            if cpi.is_nan() || cpi <= 0.0 {
                return Err(AttributionError::NonPositiveCpi(block));
            }
            Ok((block, BlockProfile { block, cpi, occurrence_total: occ, source }))
        })
        .collect()
}

/// Weighted mean that stays exact when every contribution has the same rate.
#[derive(Default)]
struct Accumulator {
    sum: f64,
    weight: f64,
    occurrences: u64,
    common: Option<f64>,
    uniform: bool,
}

impl Accumulator {
    fn add(&mut self, amount: f64, weight: f64, rate: f64) {
        self.sum += amount;
        self.weight += weight;
        match self.common {
            None if self.occurrences == 0 => {
                self.common = Some(rate);
                self.uniform = true;
            }
            Some(c) if c != rate => self.uniform = false,
            _ => {}
        }
        self.occurrences += 1;
    }

    fn value(&self) -> f64 {
        match self.common {
            Some(c) if self.uniform => c,
            _ => self.sum / self.weight,
        }
    }
}

/// Exact CPI of each fixed-length quantum, computed from golden cycles.
/// An event straddling a quantum boundary contributes cycles in proportion
/// to the instructions it executes on each side.
pub fn quantum_cpis(trace: &ExecutionTrace, quantum_length: u64) -> Result<Vec<f64>, AttributionError> {
    if !trace.is_golden() {
        return Err(AttributionError::SourceUnavailable(ProfileSource::Golden));
    }
    let total = trace.total_instructions();
    let quantum_length = quantum_length.max(1);
    let count = total.div_ceil(quantum_length) as usize;
    let mut cycles = alloc::vec![0.0f64; count];
    for (i, e) in trace.events().iter().enumerate() {
        let start = trace.event_offset(i);
        let n = trace.event_instructions(i);
        let per_instruction = e.cycles.unwrap_or_default() / n as f64;
        let mut pos = start;
        while pos < start + n {
            let q = pos / quantum_length;
            let q_end = ((q + 1) * quantum_length).min(start + n);
            cycles[q as usize] += per_instruction * (q_end - pos) as f64;
            pos = q_end;
        }
    }
    Ok(cycles
        .into_iter()
        .enumerate()
        .map(|(q, c)| {
            let lo = q as u64 * quantum_length;
            let hi = (lo + quantum_length).min(total);
            c / (hi - lo) as f64
        })
        .collect())
}

/// Per-event CPI lookup with prefix sums, so interval means are O(log n).
#[derive(Debug, Clone)]
pub struct CpiIndex<'t> {
    trace: &'t ExecutionTrace,
    event_cpi: Vec<f64>,
    // weighted[i] = sum over events < i of cpi * instructions
    weighted: Vec<f64>,
}

impl<'t> CpiIndex<'t> {
    /// CPI per event taken from the block profiles.
    pub fn from_profiles(trace: &'t ExecutionTrace, profiles: &Profiles) -> Result<Self, AttributionError> {
        let event_cpi = trace
            .events()
            .iter()
            .map(|e| profiles.get(&e.block).map(|p| p.cpi).ok_or(AttributionError::MissingProfile(e.block)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::with_event_cpi(trace, event_cpi))
    }

    /// CPI per event taken from the event's own cycles.
    pub fn golden(trace: &'t ExecutionTrace) -> Result<Self, AttributionError> {
        if !trace.is_golden() {
            return Err(AttributionError::SourceUnavailable(ProfileSource::Golden));
        }
        let event_cpi = trace
            .events()
            .iter()
            .enumerate()
            .map(|(i, e)| e.cycles.unwrap_or_default() / trace.event_instructions(i) as f64)
            .collect();
        Ok(Self::with_event_cpi(trace, event_cpi))
    }

    fn with_event_cpi(trace: &'t ExecutionTrace, event_cpi: Vec<f64>) -> Self {
        let mut weighted = Vec::with_capacity(event_cpi.len() + 1);
        let mut acc = 0.0;
        weighted.push(acc);
        for (i, c) in event_cpi.iter().enumerate() {
            acc += c * trace.event_instructions(i) as f64;
            weighted.push(acc);
        }
        Self { trace, event_cpi, weighted }
    }

    pub fn trace(&self) -> &'t ExecutionTrace {
        self.trace
    }

    pub fn event_cpi(&self, event: usize) -> f64 {
        self.event_cpi[event]
    }

    /// CPI and block executing instruction `offset`.
    pub fn at(&self, offset: u64) -> Option<(f64, BlockId)> {
        let i = self.trace.event_at(offset)?;
        Some((self.event_cpi[i], self.trace.events()[i].block))
    }

    /// Sum of per-instruction CPI over [0, offset).
    fn cumulative(&self, offset: u64) -> f64 {
        match self.trace.event_at(offset) {
            None => *self.weighted.last().expect("non-empty"),
            Some(i) => {
                let partial = (offset - self.trace.event_offset(i)) as f64;
                self.weighted[i] + partial * self.event_cpi[i]
            }
        }
    }

    /// Instruction-weighted mean CPI over [start, end).
    pub fn mean(&self, start: u64, end: u64) -> f64 {
        if end <= start {
            return 0.0;
        }
        if end - start == 1 {
            return self.at(start).map_or(0.0, |(c, _)| c);
        }
        let exact = self.exact_run(start, end);
        if let Some(c) = exact {
            return c;
        }
        (self.cumulative(end) - self.cumulative(start)) / (end - start) as f64
    }

    // When the whole interval runs at a single CPI, return it bit-exactly
    // instead of through prefix-sum differences.
    fn exact_run(&self, start: u64, end: u64) -> Option<f64> {
        let first = self.trace.event_at(start)?;
        let last = self.trace.event_at(end - 1)?;
        let c = self.event_cpi[first];
        self.event_cpi[first..=last].iter().all(|&x| x == c).then_some(c)
    }
}

/// CPI sampled on a uniform instruction grid by zero-order hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_stride: u64,
    pub origin_instruction: u64,
    /// Instructions covered by the waveform; the last sample may hold for
    /// fewer than `sample_stride` instructions.
    pub length_instructions: u64,
    /// Block executing at each sample position; absent for synthetic predictions.
    pub sample_heads: Vec<Option<BlockId>>,
}

/// Default number of samples per waveform.
pub const DEFAULT_RESOLUTION: usize = 4096;

/// Grid for `length` instructions at `resolution` samples: stride is
/// ceil(length / resolution) and the sample count is ceil(length / stride),
/// so samples never run past the end of the interval.
pub fn sample_grid(length: u64, resolution: usize) -> (u64, usize) {
    let stride = length.div_ceil(resolution as u64).max(1);
    (stride, length.div_ceil(stride) as usize)
}

impl Waveform {
    /// Samples `value` over [origin, origin + length).
    pub fn sample(
        origin: u64,
        length: u64,
        resolution: usize,
        mut value: impl FnMut(u64) -> (f64, Option<BlockId>),
    ) -> Result<Self, AttributionError> {
        if resolution < 2 {
            return Err(AttributionError::InvalidResolution(resolution));
        }
        if length == 0 {
            return Err(AttributionError::EmptyRange);
        }
        let (stride, count) = sample_grid(length, resolution);
        let (samples, sample_heads) = (0..count as u64).map(|k| value(origin + k * stride)).unzip();
        Ok(Self { samples, sample_stride: stride, origin_instruction: origin, length_instructions: length, sample_heads })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Instruction offset of sample `k`.
    pub fn offset_of(&self, k: usize) -> u64 {
        self.origin_instruction + k as u64 * self.sample_stride
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)))
    }
}

/// Waveform of block CPIs over the whole trace.
pub fn build_waveform(
    trace: &ExecutionTrace,
    profiles: &Profiles,
    resolution: usize,
) -> Result<Waveform, AttributionError> {
    let index = CpiIndex::from_profiles(trace, profiles)?;
    build_waveform_range(&index, 0, trace.total_instructions(), resolution)
}

/// Waveform over the instruction interval [start, end).
pub fn build_waveform_range(
    index: &CpiIndex<'_>,
    start: u64,
    end: u64,
    resolution: usize,
) -> Result<Waveform, AttributionError> {
    let end = end.min(index.trace().total_instructions());
    Waveform::sample(start, end.saturating_sub(start), resolution, |off| {
        let (c, b) = index.at(off).expect("offset inside trace");
        (c, Some(b))
    })
}

/// Exact per-event CPI waveform, the reference for error rates.
pub fn golden_waveform(trace: &ExecutionTrace, resolution: usize) -> Result<Waveform, AttributionError> {
    let index = CpiIndex::golden(trace)?;
    build_waveform_range(&index, 0, trace.total_instructions(), resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{BlockDescriptor, BlockEvent, QuantumRecord, QuantumSamples, Terminator};
    use alloc::vec;

    fn blk(id: u32, n: u32) -> BlockDescriptor {
        BlockDescriptor {
            id: BlockId(id),
            start_address: 0x1000 + 0x100 * id as u64,
            instruction_count: n,
            terminator: Terminator::Fallthrough,
            target_address: None,
        }
    }

    fn quantum_trace(events: &[u32], block_len: u32, qlen: u64, cpis: &[f64]) -> ExecutionTrace {
        let ids: alloc::collections::BTreeSet<u32> = events.iter().copied().collect();
        ExecutionTrace::new(
            ids.into_iter().map(|i| blk(i, block_len)).collect(),
            events.iter().map(|&b| BlockEvent { block: BlockId(b), cycles: None }).collect(),
            Some(QuantumSamples {
                length: qlen,
                records: cpis.iter().enumerate().map(|(i, &c)| QuantumRecord { index: i as u64, cpi: c }).collect(),
            }),
        )
        .unwrap()
    }

    #[test]
    fn single_quantum_block() {
        // block 1 only in quantum 3, v3 = 2.0
        let t = quantum_trace(&[0, 0, 0, 1], 4, 4, &[1.0, 1.0, 1.0, 2.0]);
        let p = attribute_block_cpi(&t).unwrap();
        assert_eq!(p[&BlockId(1)].cpi, 2.0);
        assert_eq!(p[&BlockId(1)].source, ProfileSource::QuantumWeighted);
    }

    #[test]
    fn weighted_average_hand_evaluated() {
        // block 0: 3 occurrences in q0, 1 in q1; v = (1.0, 2.0) -> (3*1 + 1*2)/4
        let t = quantum_trace(&[0, 0, 0, 1, 0, 1], 1, 4, &[1.0, 2.0]);
        let p = attribute_block_cpi(&t).unwrap();
        assert_eq!(p[&BlockId(0)].cpi, 1.25);
        assert_eq!(p[&BlockId(0)].occurrence_total, 4);
        assert_eq!(p[&BlockId(1)].cpi, 1.5);
    }

    #[test]
    fn straddling_event_uses_first_instruction() {
        // blocks of 3, quantum 4: event 1 covers [3,6) -> quantum 0
        let t = quantum_trace(&[0, 1, 0], 3, 4, &[1.0, 3.0, 5.0]);
        let p = attribute_block_cpi(&t).unwrap();
        assert_eq!(p[&BlockId(1)].cpi, 1.0);
        assert_eq!(p[&BlockId(0)].cpi, (1.0 + 3.0) / 2.0);
    }

    #[test]
    fn golden_profile() {
        let t = ExecutionTrace::new(
            vec![blk(0, 5)],
            vec![
                BlockEvent { block: BlockId(0), cycles: Some(5.0) },
                BlockEvent { block: BlockId(0), cycles: Some(10.0) },
            ],
            None,
        )
        .unwrap();
        let p = attribute_block_cpi(&t).unwrap();
        assert_eq!(p[&BlockId(0)].cpi, 1.5);
        assert_eq!(p[&BlockId(0)].source, ProfileSource::Golden);
        assert!(attribute_block_cpi_from(&t, ProfileSource::QuantumWeighted).is_err());
    }

    #[test]
    fn constant_waveform() {
        let t = ExecutionTrace::new(
            vec![blk(0, 10)],
            vec![BlockEvent { block: BlockId(0), cycles: Some(15.0) }; 10],
            None,
        )
        .unwrap();
        let p = attribute_block_cpi(&t).unwrap();
        let w = build_waveform(&t, &p, 4).unwrap();
        assert_eq!(w.samples, vec![1.5; 4]);
        assert_eq!(w.sample_stride, 25);
        assert_eq!(w.sample_heads, vec![Some(BlockId(0)); 4]);
    }

    #[test]
    fn alternating_waveform() {
        let events: Vec<_> = (0..8)
            .map(|i| BlockEvent { block: BlockId(i % 2), cycles: Some(if i % 2 == 0 { 4.0 } else { 8.0 }) })
            .collect();
        let t = ExecutionTrace::new(vec![blk(0, 4), blk(1, 4)], events, None).unwrap();
        let p = attribute_block_cpi(&t).unwrap();
        let w = build_waveform(&t, &p, 8).unwrap();
        assert_eq!(w.samples, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn resolution_checked() {
        let t = ExecutionTrace::new(vec![blk(0, 4)], vec![BlockEvent { block: BlockId(0), cycles: Some(4.0) }], None)
            .unwrap();
        let p = attribute_block_cpi(&t).unwrap();
        assert_eq!(build_waveform(&t, &p, 1), Err(AttributionError::InvalidResolution(1)));
        assert!(matches!(build_waveform(&t, &Profiles::new(), 4), Err(AttributionError::MissingProfile(_))));
    }

    #[test]
    fn grid_never_overruns() {
        assert_eq!(sample_grid(4500, 4096), (2, 2250));
        assert_eq!(sample_grid(400, 4096), (1, 400));
        assert_eq!(sample_grid(100, 4), (25, 4));
        assert_eq!(sample_grid(10, 4), (3, 4));
    }

    #[test]
    fn quantum_cpis_split_proportionally() {
        // two events of 3 instrs: cpi 1 then 3; quantum 4 -> q0 = (3*1 + 1*3)/4, q1 = 3
        let t = ExecutionTrace::new(
            vec![blk(0, 3), blk(1, 3)],
            vec![
                BlockEvent { block: BlockId(0), cycles: Some(3.0) },
                BlockEvent { block: BlockId(1), cycles: Some(9.0) },
            ],
            None,
        )
        .unwrap();
        assert_eq!(quantum_cpis(&t, 4).unwrap(), vec![1.5, 3.0]);
        let idx = CpiIndex::golden(&t).unwrap();
        assert_eq!(idx.mean(0, 4), 1.5);
        assert_eq!(idx.mean(3, 6), 3.0);
        assert_eq!(idx.mean(2, 5), (1.0 + 3.0 + 3.0) / 3.0);
    }
}
