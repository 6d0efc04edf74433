#![allow(dead_code)]

use phasewave_core::trace::{BlockDescriptor, BlockEvent, BlockId, ExecutionTrace, Terminator};
use proptest::prelude::*;

pub fn block(id: u32, instructions: u32) -> BlockDescriptor {
    BlockDescriptor {
        id: BlockId(id),
        start_address: 0x1000 + 0x100 * id as u64,
        instruction_count: instructions,
        terminator: Terminator::Fallthrough,
        target_address: None,
    }
}

/// Golden trace with per-event cycles drawn around a per-block CPI.
pub fn golden_trace() -> impl Strategy<Value = ExecutionTrace> {
    (1usize..6)
        .prop_flat_map(|nblocks| {
            (
                prop::collection::vec((1u32..12, 0.2f64..4.0), nblocks),
                prop::collection::vec((0..nblocks, 0.5f64..1.5), 1..200),
            )
        })
        .prop_map(|(shapes, picks)| {
            let blocks: Vec<_> = shapes.iter().enumerate().map(|(i, &(n, _))| block(i as u32, n)).collect();
            let events = picks
                .iter()
                .map(|&(b, jitter)| {
                    let (n, cpi) = shapes[b];
                    BlockEvent { block: BlockId(b as u32), cycles: Some(n as f64 * cpi * jitter) }
                })
                .collect();
            ExecutionTrace::new(blocks, events, None).unwrap()
        })
}
