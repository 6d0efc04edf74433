//! Execution trace data model.
//!
//! A trace is a static block table plus the ordered sequence of dynamic block
//! executions. Per-event cycle counts (golden mode) and fixed-length quantum
//! CPI samples (quantum mode) are the two ways performance enters the model.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

/// Compact alias for a basic block. The block's identity is its start address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How control leaves a basic block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Terminator {
    Fallthrough,
    Branch,
    Call,
    Return,
}

impl Terminator {
    pub fn has_target(self) -> bool {
        matches!(self, Terminator::Branch | Terminator::Call)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDescriptor {
    pub id: BlockId,
    pub start_address: u64,
    pub instruction_count: u32,
    pub terminator: Terminator,
    pub target_address: Option<u64>,
}

impl BlockDescriptor {
    /// True when the block ends in a branch whose target does not lie after
    /// the block itself.
    pub fn is_backward_branch(&self) -> bool {
        self.terminator == Terminator::Branch
            && self.target_address.is_some_and(|t| t <= self.start_address)
    }
}

/// One dynamic execution of a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEvent {
    pub block: BlockId,
    pub cycles: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumRecord {
    pub index: u64,
    pub cpi: f64,
}

/// Quantum samples and the number of instructions each quantum spans.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSamples {
    pub length: u64,
    pub records: Vec<QuantumRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    InvalidBlock { id: BlockId, reason: &'static str },
    DuplicateBlock(BlockId),
    DuplicateAddress(u64),
    UnknownBlock(BlockId),
    InvalidCycles { event: usize },
    InvalidQuantum { index: usize, reason: &'static str },
    QuantumCountMismatch { expected: u64, found: usize },
    MixedMode,
    Empty,
}

impl fmt::Display for TraceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceError::InvalidBlock { id, reason } => write!(f, "invalid block {id}: {reason}"),
            TraceError::DuplicateBlock(id) => write!(f, "duplicate block {id}"),
            TraceError::DuplicateAddress(a) => write!(f, "duplicate block address {a:#x}"),
            TraceError::UnknownBlock(id) => write!(f, "unknown block {id}"),
            TraceError::InvalidCycles { event } => {
                write!(f, "event {event}: cycles must be finite and non-negative")
            }
            TraceError::InvalidQuantum { index, reason } => write!(f, "quantum {index}: {reason}"),
            TraceError::QuantumCountMismatch { expected, found } => {
                write!(f, "quantum count mismatch: expected {expected}, found {found}")
            }
            TraceError::MixedMode => write!(
                f,
                "mixed-mode violation: events must all carry cycles, or quanta must be present"
            ),
            TraceError::Empty => write!(f, "trace executes no instructions"),
        }
    }
}

impl core::error::Error for TraceError {}

/// A validated execution trace. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    blocks: Vec<BlockDescriptor>,
    index: BTreeMap<BlockId, usize>,
    events: Vec<BlockEvent>,
    quanta: Option<QuantumSamples>,
    // offsets[i] = instruction offset of event i's first instruction; len = events + 1
    offsets: Vec<u64>,
}

impl ExecutionTrace {
    pub fn new(
        blocks: Vec<BlockDescriptor>,
        events: Vec<BlockEvent>,
        quanta: Option<QuantumSamples>,
    ) -> Result<Self, TraceError> {
        let mut index = BTreeMap::new();
        let mut addresses = BTreeMap::new();
        for (i, b) in blocks.iter().enumerate() {
            if b.instruction_count == 0 {
                return Err(TraceError::InvalidBlock { id: b.id, reason: "instruction count must be >= 1" });
            }
            if b.terminator.has_target() != b.target_address.is_some() {
                return Err(TraceError::InvalidBlock {
                    id: b.id,
                    reason: "target address present iff terminator is branch or call",
                });
            }
            if index.insert(b.id, i).is_some() {
                return Err(TraceError::DuplicateBlock(b.id));
            }
            if addresses.insert(b.start_address, b.id).is_some() {
                return Err(TraceError::DuplicateAddress(b.start_address));
            }
        }

        let mut offsets = Vec::with_capacity(events.len() + 1);
        let mut total = 0u64;
        offsets.push(0);
        let mut with_cycles = 0usize;
        for (i, e) in events.iter().enumerate() {
            let pos = *index.get(&e.block).ok_or(TraceError::UnknownBlock(e.block))?;
            if let Some(c) = e.cycles {
                if !c.is_finite() || c < 0.0 {
                    return Err(TraceError::InvalidCycles { event: i });
                }
                with_cycles += 1;
            }
            total += u64::from(blocks[pos].instruction_count);
            offsets.push(total);
        }
        if total == 0 {
            return Err(TraceError::Empty);
        }
        let golden = with_cycles == events.len();
        if with_cycles != 0 && !golden {
            return Err(TraceError::MixedMode);
        }

        if let Some(q) = &quanta {
            if q.length == 0 {
                return Err(TraceError::InvalidQuantum { index: 0, reason: "quantum length must be >= 1" });
            }
            let expected = total.div_ceil(q.length);
            if q.records.len() as u64 != expected {
                return Err(TraceError::QuantumCountMismatch { expected, found: q.records.len() });
            }
            for (i, r) in q.records.iter().enumerate() {
                if r.index != i as u64 {
                    return Err(TraceError::InvalidQuantum {
                        index: i,
                        reason: "indices must be contiguous from 0",
                    });
                }
                if !(r.cpi.is_finite() && r.cpi > 0.0) {
                    return Err(TraceError::InvalidQuantum { index: i, reason: "cpi must be positive" });
                }
            }
        } else if !golden {
            return Err(TraceError::MixedMode);
        }

        Ok(Self { blocks, index, events, quanta, offsets })
    }

    pub fn blocks(&self) -> &[BlockDescriptor] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> Option<&BlockDescriptor> {
        self.index.get(&id).map(|&i| &self.blocks[i])
    }

    pub fn events(&self) -> &[BlockEvent] {
        &self.events
    }

    pub fn quanta(&self) -> Option<&QuantumSamples> {
        self.quanta.as_ref()
    }

    /// Every event carries its own cycle count.
    pub fn is_golden(&self) -> bool {
        self.events.iter().all(|e| e.cycles.is_some())
    }

    /// Total executed instructions (D).
    pub fn total_instructions(&self) -> u64 {
        *self.offsets.last().expect("offsets never empty")
    }

    /// Instruction offset of the first instruction of event `i`.
    /// `i == events().len()` yields the total.
    pub fn event_offset(&self, i: usize) -> u64 {
        self.offsets[i]
    }

    pub fn event_instructions(&self, i: usize) -> u64 {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn event_descriptor(&self, i: usize) -> &BlockDescriptor {
        &self.blocks[self.index[&self.events[i].block]]
    }

    /// Index of the event executing instruction `offset`, if any.
    pub fn event_at(&self, offset: u64) -> Option<usize> {
        if offset >= self.total_instructions() {
            return None;
        }
        // last i with offsets[i] <= offset
        Some(self.offsets.partition_point(|&o| o <= offset) - 1)
    }

    /// Index of the first event whose first instruction is at or after `offset`.
    pub fn first_event_at_or_after(&self, offset: u64) -> usize {
        self.offsets[..self.events.len()].partition_point(|&o| o < offset)
    }
}

/// Total executed instructions (D).
pub fn total_instructions(trace: &ExecutionTrace) -> u64 {
    trace.total_instructions()
}
