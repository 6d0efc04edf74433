mod common;

use phasewave_core::attribution::{attribute_block_cpi, golden_waveform, sample_grid};
use phasewave_core::baseline::{error_rate, predict_waveform, tq_phases};
use phasewave_core::config::AnalysisConfig;
use phasewave_core::phases::{analyze, PhaseNode};
use phasewave_core::synth::{generate, EntryKind, ScenarioSpec, SegmentSpec};
use phasewave_core::trace::{ExecutionTrace, QuantumRecord, QuantumSamples};
use proptest::prelude::*;

fn entry_kind() -> impl Strategy<Value = EntryKind> {
    prop_oneof![Just(EntryKind::Fallthrough), Just(EntryKind::BackwardBranch), Just(EntryKind::Call)]
}

/// Repeating scenarios of 1 to 4 plain segments, optionally noisy.
fn scenario(max_noise: f64) -> impl Strategy<Value = ScenarioSpec> {
    (
        prop::collection::vec((0.5f64..3.0, 1u32..8, 2u64..60, entry_kind()), 1..5),
        1u64..7,
        0.0..=max_noise,
        any::<u64>(),
    )
        .prop_map(|(segs, repetitions, noise_stddev, seed)| ScenarioSpec {
            segments: segs
                .iter()
                .enumerate()
                .map(|(i, &(cpi, n, e, kind))| SegmentSpec::plain(&format!("s{i}"), cpi, n, e, kind))
                .collect(),
            repetitions,
            noise_stddev,
            seed,
            quantum_length: None,
        })
}

/// Square-wave scenarios: two segments with a clear CPI gap, repeated. Each
/// half is at least the minimum segment length so the analysis may split it.
fn square(max_reps: u64) -> impl Strategy<Value = ScenarioSpec> {
    (0.5f64..2.0, 0.5f64..2.0, 1u32..6, 10u64..80, 10u64..80, 2..=max_reps)
        .prop_filter("halves shorter than the minimum segment", |&(_, _, n, e1, e2, _)| {
            let min = AnalysisConfig::default().min_segment_instructions;
            n as u64 * e1.min(e2) >= min
        })
        .prop_map(
        |(lo, gap, n, e1, e2, repetitions)| ScenarioSpec {
            segments: vec![
                SegmentSpec::plain("lo", lo, n, e1, EntryKind::BackwardBranch),
                SegmentSpec::plain("hi", lo + gap, n, e2, EntryKind::Call),
            ],
            repetitions,
            noise_stddev: 0.0,
            seed: 0,
            quantum_length: None,
        },
    )
}

fn assert_consistent(node: &PhaseNode, resolution: usize) -> Result<(), TestCaseError> {
    let (stride, _) = sample_grid(node.length_instructions, resolution);
    for c in &node.children {
        if !c.is_leaf() {
            prop_assert!(c.occurrence * c.length_instructions <= node.length_instructions + stride);
        }
        assert_consistent(c, resolution)?;
    }
    Ok(())
}

/// Same shape; starts and lengths within `slack`; CPIs within 1e-9.
fn assert_matches(got: &PhaseNode, want: &PhaseNode, slack: u64) -> Result<(), TestCaseError> {
    prop_assert_eq!(got.children.len(), want.children.len(), "shape differs at {}", want.start_instruction);
    prop_assert!(got.start_instruction.abs_diff(want.start_instruction) <= slack);
    prop_assert!(got.length_instructions.abs_diff(want.length_instructions) <= slack);
    prop_assert_eq!(got.occurrence, want.occurrence);
    prop_assert!((got.mean_cpi - want.mean_cpi).abs() <= 1e-9, "{} vs {}", got.mean_cpi, want.mean_cpi);
    for (g, w) in got.children.iter().zip(&want.children) {
        assert_matches(g, w, slack)?;
    }
    Ok(())
}

fn scale_quanta(trace: &ExecutionTrace, a: f64) -> ExecutionTrace {
    let q = trace.quanta().unwrap();
    let records = q.records.iter().map(|r| QuantumRecord { index: r.index, cpi: r.cpi * a }).collect();
    ExecutionTrace::new(
        trace.blocks().to_vec(),
        trace.events().to_vec(),
        Some(QuantumSamples { length: q.length, records }),
    )
    .unwrap()
}

fn scaled_alike(x: &PhaseNode, y: &PhaseNode, a: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(x.head_block, y.head_block);
    prop_assert_eq!(x.start_instruction, y.start_instruction);
    prop_assert_eq!(x.length_instructions, y.length_instructions);
    prop_assert_eq!(x.occurrence, y.occurrence);
    prop_assert!((x.mean_cpi * a - y.mean_cpi).abs() <= 1e-9 * y.mean_cpi);
    prop_assert_eq!(x.children.len(), y.children.len());
    for (p, q) in x.children.iter().zip(&y.children) {
        scaled_alike(p, q, a)?;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trees_are_well_formed(spec in scenario(0.3)) {
        let (trace, annotation) = generate(&spec).unwrap();
        annotation.true_phases.check_well_formed().unwrap();
        let cfg = AnalysisConfig::default();
        let tree = analyze(&trace, &cfg).unwrap();
        tree.check_well_formed().unwrap();
        prop_assert_eq!(tree.start_instruction, 0);
        prop_assert_eq!(tree.length_instructions, trace.total_instructions());
        prop_assert!(tree.depth() <= cfg.max_depth + 1);
        assert_consistent(&tree, cfg.resolution)?;
    }

    #[test]
    fn analysis_is_deterministic(spec in scenario(0.3)) {
        let (trace, _) = generate(&spec).unwrap();
        let cfg = AnalysisConfig::default();
        prop_assert_eq!(analyze(&trace, &cfg).unwrap(), analyze(&trace, &cfg).unwrap());
        let (again, _) = generate(&spec).unwrap();
        prop_assert_eq!(trace, again);
    }

    #[test]
    fn scaling_quanta_scales_cpis_only(spec in scenario(0.1), q in 3u64..40, a in 0.2f64..5.0) {
        // the CPI-range flatness test is absolute, so it is switched off here
        // and only the scale-free criteria remain
        let cfg = AnalysisConfig { flat_cpi_range: 0.0, ..AnalysisConfig::default() };
        let (trace, _) = generate(&ScenarioSpec { quantum_length: Some(q), ..spec }).unwrap();
        let base = analyze(&trace, &cfg).unwrap();
        let scaled = analyze(&scale_quanta(&trace, a), &cfg).unwrap();
        scaled_alike(&base, &scaled, a)?;
    }

    #[test]
    fn square_waves_round_trip(spec in square(8)) {
        let (trace, annotation) = generate(&spec).unwrap();
        let cfg = AnalysisConfig::default();
        let tree = analyze(&trace, &cfg).unwrap();
        let (stride, _) = sample_grid(trace.total_instructions(), cfg.resolution);
        assert_matches(&tree, &annotation.true_phases, stride)?;
        let golden = golden_waveform(&trace, cfg.resolution).unwrap();
        let predicted = predict_waveform(&tree, trace.total_instructions(), cfg.resolution).unwrap();
        prop_assert!(error_rate(&predicted, &golden, "x").unwrap().mean_absolute_percentage_error <= 1e-6);
    }

    #[test]
    fn zero_noise_cpis_are_scripted(spec in scenario(0.0)) {
        let (trace, _) = generate(&spec).unwrap();
        let profiles = attribute_block_cpi(&trace).unwrap();
        for seg in &spec.segments {
            prop_assert!(profiles.values().any(|p| (p.cpi - seg.block_cpi).abs() <= 1e-9));
        }
        let scripted: Vec<f64> = spec.segments.iter().map(|s| s.block_cpi).collect();
        for p in profiles.values() {
            prop_assert!(scripted.iter().any(|c| (p.cpi - c).abs() <= 1e-9));
        }
    }

    #[test]
    fn tq_phases_tile_the_quanta(spec in scenario(0.3), q in 1u64..500, delta in 0.0f64..2.0) {
        let (trace, _) = generate(&spec).unwrap();
        let list = tq_phases(&trace, q, delta).unwrap();
        let quanta = trace.total_instructions().div_ceil(list.quantum_length) as usize;
        let mut next = 0;
        for p in &list.phases {
            prop_assert_eq!(p.start_quantum, next);
            prop_assert!(p.quantum_count >= 1);
            next += p.quantum_count;
        }
        prop_assert_eq!(next, quanta);
    }

    #[test]
    fn tq_recovers_aligned_phases(
        pairs in prop::collection::vec((0.5f64..1.5, 1.8f64..3.0), 1..3),
        widths in prop::collection::vec(1u64..6, 4),
        q in 1u64..30,
        n in 1u32..5,
        reps in 1u64..5,
    ) {
        // low and high CPIs alternate, so neighbours (also across repetitions)
        // differ by more than the merge delta
        let cpis: Vec<f64> = pairs.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
        let segments: Vec<SegmentSpec> = cpis
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (&c, &w))| SegmentSpec::plain(&format!("s{i}"), c, n, w * q, EntryKind::Fallthrough))
            .collect();
        let spec = ScenarioSpec { segments, repetitions: reps, noise_stddev: 0.0, seed: 1, quantum_length: None };
        let (trace, _) = generate(&spec).unwrap();
        // every segment spans a whole number of quanta of q*n instructions
        let list = tq_phases(&trace, q * n as u64, 0.2).unwrap();
        prop_assert_eq!(list.phases.len() as u64, cpis.len() as u64 * reps);
    }
}

#[test]
fn constant_trace_is_a_single_leaf() {
    let spec = ScenarioSpec {
        segments: vec![SegmentSpec::plain("flat", 1.7, 4, 500, EntryKind::Fallthrough)],
        repetitions: 1,
        noise_stddev: 0.0,
        seed: 3,
        quantum_length: None,
    };
    let (trace, annotation) = generate(&spec).unwrap();
    let tree = analyze(&trace, &AnalysisConfig::default()).unwrap();
    assert!(tree.is_leaf());
    assert_eq!(tree.mean_cpi, 1.7);
    assert_eq!(tree, annotation.true_phases);
}
