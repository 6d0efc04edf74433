use phasewave::{parse_trace, write_trace};
use phasewave_core::synth::{generate, EntryKind, NestedSpec, ScenarioSpec, SegmentSpec};
use phasewave_core::trace::{BlockDescriptor, BlockEvent, BlockId, ExecutionTrace, Terminator};
use proptest::prelude::*;

fn entry_kind() -> impl Strategy<Value = EntryKind> {
    prop_oneof![Just(EntryKind::Fallthrough), Just(EntryKind::BackwardBranch), Just(EntryKind::Call)]
}

fn scenario() -> impl Strategy<Value = ScenarioSpec> {
    (
        prop::collection::vec((0.3f64..4.0, 1u32..9, 2u64..40, entry_kind()), 1..5),
        1u64..5,
        0.0f64..0.25,
        any::<u64>(),
        prop::option::of(1u64..200),
    )
        .prop_map(|(segs, repetitions, noise_stddev, seed, quantum_length)| ScenarioSpec {
            segments: segs
                .iter()
                .enumerate()
                .map(|(i, &(cpi, n, e, k))| SegmentSpec::plain(&format!("s{i}"), cpi, n, e, k))
                .collect(),
            repetitions,
            noise_stddev,
            seed,
            quantum_length,
        })
}

fn terminator() -> impl Strategy<Value = (Terminator, bool)> {
    prop_oneof![
        Just((Terminator::Fallthrough, false)),
        Just((Terminator::Return, false)),
        Just((Terminator::Branch, true)),
        Just((Terminator::Call, true)),
    ]
}

/// Hand-built golden traces with arbitrary addresses and cycle values.
fn raw_trace() -> impl Strategy<Value = ExecutionTrace> {
    prop::collection::btree_map(any::<u32>(), (1u32..1000, terminator(), any::<u64>()), 1..8)
        .prop_flat_map(|blocks| {
            let n = blocks.len();
            (Just(blocks), prop::collection::vec((0..n, 0.001f64..1e6), 1..100))
        })
        .prop_map(|(blocks, picks)| {
            let descs: Vec<BlockDescriptor> = blocks
                .iter()
                .enumerate()
                .map(|(i, (&id, &(n, (term, has_target), target)))| BlockDescriptor {
                    id: BlockId(id),
                    start_address: (i as u64) << 20,
                    instruction_count: n,
                    terminator: term,
                    target_address: has_target.then_some(target),
                })
                .collect();
            let events = picks
                .iter()
                .map(|&(b, c)| BlockEvent { block: descs[b].id, cycles: Some(c) })
                .collect();
            ExecutionTrace::new(descs, events, None).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn generated_traces_round_trip(spec in scenario()) {
        let (trace, _) = generate(&spec).unwrap();
        let text = write_trace(&trace);
        let back = parse_trace(&text).unwrap();
        prop_assert_eq!(&back, &trace);
        prop_assert_eq!(write_trace(&back), text);
    }

    #[test]
    fn raw_traces_round_trip(trace in raw_trace()) {
        prop_assert_eq!(parse_trace(&write_trace(&trace)).unwrap(), trace);
    }
}

#[test]
fn nested_scenario_round_trips() {
    let inner = vec![
        SegmentSpec::plain("x", 1.0, 4, 20, EntryKind::BackwardBranch),
        SegmentSpec::plain("y", 1.6, 4, 20, EntryKind::Call),
    ];
    let outer = SegmentSpec {
        label: "outer".into(),
        block_cpi: 1.0,
        block_instruction_count: 4,
        event_count: 120,
        nested: Some(NestedSpec { repetitions: 3, segments: inner }),
        entry_kind: EntryKind::Fallthrough,
    };
    let spec = ScenarioSpec {
        segments: vec![outer, SegmentSpec::plain("tail", 3.0, 4, 200, EntryKind::Fallthrough)],
        repetitions: 2,
        noise_stddev: 0.05,
        seed: 11,
        quantum_length: Some(97),
    };
    let (trace, _) = generate(&spec).unwrap();
    assert_eq!(parse_trace(&write_trace(&trace)).unwrap(), trace);
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let src = "# header comment\n\nV 1\nB 0 0x10 2 F   # trailing\n\nE 0 4\n";
    let t = parse_trace(src).unwrap();
    assert_eq!(t.events().len(), 1);
    assert_eq!(t.blocks()[0].start_address, 0x10);
}
