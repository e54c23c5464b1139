mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use hetsim::dist::{RngState, ServiceDistribution};
use hetsim::engine::{simulate, EventKind, SimConfig};
use hetsim::graph::{EdgeSpec, ExclusiveResource, FlowGraphSpec, Modification, NodeKind, NodeSpec};
use hetsim::metrics::{fps_per_stream, prediction_error, speedup, StreamFps};
use hetsim::reference::{constant_stage_spec, reference_spec};
use hetsim::scenarios::{run_ab_study, run_sweep, SweepSpec};
use hetsim::trace::{build_distributions, parse_trace, serialize_trace, TraceRecord};

fn any_dist() -> impl Strategy<Value = ServiceDistribution> {
    prop_oneof![
        (0.0..1e5f64).prop_map(ServiceDistribution::constant),
        (0.0..1e5f64, 0.0..1e5f64).prop_map(|(lo, w)| ServiceDistribution::Uniform {
            lo_us: lo,
            hi_us: lo + w
        }),
        (1.0..1e5f64).prop_map(|m| ServiceDistribution::Exponential { mean_us: m }),
        (-2.0..10.0f64, 0.0..2.0f64, 0.1..100.0f64).prop_map(|(mu, sigma, unit_us)| {
            ServiceDistribution::Lognormal { mu, sigma, unit_us }
        }),
        prop::collection::vec(0.0..1e5f64, 1..20)
            .prop_map(|s| ServiceDistribution::from_samples(&s).unwrap()),
    ]
}

fn small_cfg(frames: usize, seed: u64) -> SimConfig {
    SimConfig {
        frames_per_stream: frames,
        seed,
        ..SimConfig::default()
    }
}

proptest! {
    #[test]
    fn equal_seeds_give_equal_draws(d in any_dist(), seed: u64, stream: u64) {
        let mut a = RngState::new(seed, stream);
        let mut b = RngState::new(seed, stream);
        for _ in 0..32 {
            prop_assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn samples_are_non_negative(d in any_dist(), seed: u64) {
        let mut rng = RngState::new(seed, 0);
        for _ in 0..64 {
            let x = d.sample(&mut rng);
            prop_assert!(x >= 0.0 && x.is_finite());
        }
    }

    #[test]
    fn bootstrap_draws_come_from_the_samples(s in prop::collection::vec(0.0..1e6f64, 1..50), seed: u64) {
        let d = ServiceDistribution::from_samples(&s).unwrap();
        let mut rng = RngState::new(seed, 3);
        for _ in 0..100 {
            let x = d.sample(&mut rng);
            prop_assert!(s.contains(&x));
        }
    }

    #[test]
    fn distinct_substreams_differ(seed: u64, a: u64, b: u64) {
        prop_assume!(a != b);
        let mut ra = RngState::new(seed, a);
        let mut rb = RngState::new(seed, b);
        let pa: Vec<u64> = (0..64).map(|_| ra.next_u64()).collect();
        let pb: Vec<u64> = (0..64).map(|_| rb.next_u64()).collect();
        prop_assert_ne!(pa, pb);
    }

    #[test]
    fn instantiate_replicates_per_stream_nodes(seed in 0u64..500, streams in 1usize..6) {
        let spec = common::random_spec(seed);
        let g = spec.instantiate(streams).unwrap();
        for name in &spec.per_stream_nodes {
            let n = g.instances().iter().filter(|i| i.name.starts_with(&format!("{name}#"))).count();
            prop_assert_eq!(n, streams);
        }
        prop_assert_eq!(g.shared_instance_count(), spec.nodes.len() - spec.per_stream_nodes.len());
    }

    #[test]
    fn add_then_remove_is_identity(seed in 0u64..500, d in any_dist()) {
        let spec = common::random_spec(seed);
        let before = spec.clone();
        let first = spec.nodes[0].name.clone();
        let last = spec.nodes.last().unwrap().name.clone();
        let add = Modification::add_basic_node("fresh", d, &[&first], &[&last]);
        let added = spec.apply_modification(&add).unwrap();
        prop_assert_eq!(&spec, &before);
        let removed = added.apply_modification(&Modification::RemoveNode { node: "fresh".into() }).unwrap();
        prop_assert_eq!(removed, spec);
    }

    #[test]
    fn validate_is_total(
        names in prop::collection::vec("[a-c]{0,2}", 0..6),
        kinds in prop::collection::vec(0u8..4, 0..6),
        edges in prop::collection::vec((0usize..8, 0usize..8), 0..10),
        per_stream in prop::collection::vec(0usize..8, 0..6),
        capacity in 0usize..3,
    ) {
        let kind = |k: u8| [NodeKind::Source, NodeKind::Basic, NodeKind::Exclusive, NodeKind::Sink][k as usize];
        let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("x{i}"));
        let nodes: Vec<NodeSpec> = names
            .iter()
            .zip(kinds.iter().chain(std::iter::repeat(&1)))
            .map(|(n, &k)| match kind(k) {
                NodeKind::Exclusive => NodeSpec::exclusive(n, "d", "r"),
                k => NodeSpec::new(n, k, if n.len() == 1 { "d" } else { "missing" }),
            })
            .collect();
        let spec = FlowGraphSpec {
            nodes,
            edges: edges.iter().map(|&(f, t)| EdgeSpec::new(&name(f), &name(t))).collect(),
            resources: vec![ExclusiveResource { name: "r".into(), capacity }],
            distributions: BTreeMap::from([("d".into(), ServiceDistribution::constant(1.0))]),
            per_stream_nodes: per_stream.iter().map(|&i| name(i)).collect(),
        };
        let v = spec.validate();
        prop_assert!(v.is_ok() || !v.violations().is_empty());
    }

    #[test]
    fn event_log_invariants_hold(seed in 0u64..10_000, streams in 1usize..4, workers in 1usize..5, sim_seed: u64) {
        let spec = common::random_spec(seed);
        let g = spec.instantiate(streams).unwrap();
        let cfg = SimConfig { cpu_workers: workers, ..small_cfg(15, sim_seed) };
        let r = simulate(&g, &cfg).unwrap();
        prop_assert_eq!(common::check_invariants(&r, &g, &cfg), Ok(()));
        let again = simulate(&g, &cfg).unwrap();
        prop_assert_eq!(r.event_csv(), again.event_csv());
    }

    #[test]
    fn parse_serialize_identity(recs in prop::collection::vec(("[A-Za-z_][A-Za-z0-9_#/]{0,8}", 0u64..64, 0u64..1_000_000, 0u64..100_000), 0..40)) {
        let records: Vec<TraceRecord> = recs
            .into_iter()
            .map(|(node, stream_id, start_us, d)| TraceRecord { node, stream_id, start_us, end_us: start_us + d })
            .collect();
        prop_assert_eq!(parse_trace(&serialize_trace(&records)).unwrap(), records.clone());
        if !records.is_empty() {
            let b = build_distributions(&records).unwrap();
            for (node, count) in &b.sample_counts {
                prop_assert_eq!(*count, records.iter().filter(|r| &r.node == node).count());
            }
        }
    }

    #[test]
    fn speedup_is_reciprocal(a in prop::collection::vec(0.1..1e3f64, 1..8), k in 0.1..10.0f64) {
        let base: Vec<StreamFps> = a.iter().enumerate().map(|(i, &fps)| StreamFps { stream_id: i, fps, frames_counted: 10 }).collect();
        let other: Vec<StreamFps> = base.iter().map(|s| StreamFps { fps: s.fps * k, ..*s }).collect();
        prop_assert_eq!(speedup(&base, &base).unwrap(), 1.0);
        let prod = speedup(&base, &other).unwrap() * speedup(&other, &base).unwrap();
        prop_assert!((prod - 1.0).abs() < 1e-9);
        prop_assert_eq!(prediction_error(&base, &base).unwrap(), 0.0);
        if (k - 1.0).abs() > 1e-6 {
            prop_assert!(prediction_error(&base, &other).unwrap() > 0.0);
        }
    }

    #[test]
    fn fps_ignores_time_shift(gaps in prop::collection::vec(1u64..10_000, 3..60), shift in 0u64..1_000_000) {
        let spec = constant_stage_spec();
        let g = spec.instantiate(1).unwrap();
        let cfg = small_cfg(gaps.len(), 0);
        let mut r = simulate(&g, &cfg).unwrap();
        let mut t = 0;
        r.per_stream_completion = vec![gaps.iter().map(|d| { t += d; t }).collect()];
        let before = fps_per_stream(&r, &cfg).unwrap();
        r.start_time += shift;
        for c in &mut r.per_stream_completion[0] {
            *c += shift;
        }
        prop_assert_eq!(fps_per_stream(&r, &cfg).unwrap(), before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn another_worker_never_slows_constant_graphs(seed in 0u64..10_000, streams in 1usize..4, workers in 1usize..6) {
        let mut spec = common::random_spec(seed);
        for (i, d) in spec.distributions.values_mut().enumerate() {
            *d = ServiceDistribution::constant(1000.0 + 700.0 * i as f64);
        }
        let g = spec.instantiate(streams).unwrap();
        let end = |n: usize| {
            let cfg = SimConfig { cpu_workers: n, ..small_cfg(30, 0) };
            simulate(&g, &cfg).unwrap().end_time
        };
        prop_assert!(end(workers + 1) <= end(workers));
    }

    #[test]
    fn noop_study_ratios_are_one(streams in prop::collection::btree_set(1usize..6, 1..4), seed: u64) {
        let base = reference_spec();
        let noop = Modification::SetDistribution { node: "C".into(), distribution: base.distributions["C"].clone() };
        let counts: Vec<usize> = streams.into_iter().collect();
        let sweep = SweepSpec::new(base.clone(), small_cfg(60, seed), &counts, 2);
        let report = run_ab_study(&base, &noop, &sweep).unwrap();
        prop_assert!(report.per_point.iter().all(|p| p.ratio == 1.0));
    }

    #[test]
    fn sweep_order_does_not_matter(mut counts in prop::collection::vec(1usize..6, 1..5), seed: u64) {
        let base = reference_spec();
        let a = run_sweep(&SweepSpec::new(base.clone(), small_cfg(40, seed), &counts, 1)).unwrap();
        counts.reverse();
        let b = run_sweep(&SweepSpec::new(base, small_cfg(40, seed), &counts, 1)).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn resource_waiters_are_served_in_request_order() {
    let spec = FlowGraphSpec {
        nodes: vec![
            NodeSpec::new("A", NodeKind::Source, "A"),
            NodeSpec::exclusive("G", "G", "gpu"),
            NodeSpec::new("B", NodeKind::Sink, "zero"),
        ],
        edges: vec![EdgeSpec::new("A", "G"), EdgeSpec::new("G", "B")],
        resources: vec![ExclusiveResource {
            name: "gpu".into(),
            capacity: 1,
        }],
        distributions: BTreeMap::from([
            ("A".into(), ServiceDistribution::constant_ms(10.0)),
            ("G".into(), ServiceDistribution::constant_ms(3.0)),
            ("zero".into(), ServiceDistribution::zero()),
        ]),
        per_stream_nodes: vec!["A".into(), "G".into(), "B".into()],
    };
    let g = spec.instantiate(3).unwrap();
    let r = simulate(&g, &small_cfg(4, 0)).unwrap();
    let grants: Vec<(u64, u32)> = r
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ResourceAcquired)
        .map(|e| (e.time, e.stream))
        .collect();
    let expected: Vec<(u64, u32)> = (0..4u64)
        .flat_map(|f| (0..3u32).map(move |s| (10_000 * (f + 1) + 3_000 * s as u64, s)))
        .collect();
    assert_eq!(grants, expected);
}
