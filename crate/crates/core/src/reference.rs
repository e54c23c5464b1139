//! The five-stage video analytics pipeline (A -> GPU -> B -> C -> D, with an
//! optional CPU module E on A -> E -> D) and the reference configuration
//! shipped as `ref.json`.

use std::collections::BTreeMap;

use crate::dist::{NamedDistribution, ServiceDistribution};
use crate::graph::{EdgeSpec, ExclusiveResource, FlowGraphSpec, Modification, NodeKind, NodeSpec};

/// Stage service times in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageTimes {
    pub a: f64,
    pub gpu: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// `A` is the per-stream source, `D` the sink, `GPU` a shared exclusive node.
pub fn five_stage_topology(t: StageTimes) -> FlowGraphSpec {
    let per_stream = ["A", "B", "C", "D"];
    let nodes = vec![
        NodeSpec::new("A", NodeKind::Source, "A"),
        NodeSpec::exclusive("GPU", "GPU", "gpu"),
        NodeSpec::new("B", NodeKind::Basic, "B"),
        NodeSpec::new("C", NodeKind::Basic, "C"),
        NodeSpec::new("D", NodeKind::Sink, "D"),
    ];
    let edges = vec![
        EdgeSpec::new("A", "GPU"),
        EdgeSpec::new("GPU", "B"),
        EdgeSpec::new("B", "C"),
        EdgeSpec::new("C", "D"),
    ];
    let distributions = BTreeMap::from([
        ("A".to_string(), ServiceDistribution::constant_ms(t.a)),
        ("GPU".to_string(), ServiceDistribution::constant_ms(t.gpu)),
        ("B".to_string(), ServiceDistribution::constant_ms(t.b)),
        ("C".to_string(), ServiceDistribution::constant_ms(t.c)),
        ("D".to_string(), ServiceDistribution::constant_ms(t.d)),
    ]);
    FlowGraphSpec {
        nodes,
        edges,
        resources: vec![ExclusiveResource {
            name: "gpu".into(),
            capacity: 1,
        }],
        distributions,
        per_stream_nodes: per_stream.iter().map(|s| s.to_string()).collect(),
    }
}

/// Adds the CPU module E on `A -> E -> D`; D then joins E with the GPU path.
pub fn add_node_e(dist: ServiceDistribution) -> Modification {
    Modification::add_basic_node("E", dist, &["A"], &["D"])
}

const REF_JSON: &str = include_str!("../../../ref.json");
const CACHE_JSON: &str = include_str!("../../../data/cache_overhead.json");
const NODE_E_JSON: &str = include_str!("../../../data/node_e.json");

/// The shipped reference pipeline: A 8ms, a two-mode GPU around 2.6ms, and
/// short CPU stages, on one GPU.
pub fn reference_spec() -> FlowGraphSpec {
    FlowGraphSpec::from_json_str(REF_JSON).expect("ref.json is valid")
}

/// Measured per-frame cost of serving GPU results from a cache.
pub fn cache_overhead() -> ServiceDistribution {
    let value = serde_json::from_str(CACHE_JSON).expect("cache_overhead.json parses");
    NamedDistribution::from_json(value)
        .expect("cache_overhead.json is valid")
        .dist
}

/// `data/node_e.json`: E as a constant 20ms CPU stage.
pub fn node_e_modification() -> Modification {
    serde_json::from_str(NODE_E_JSON).expect("node_e.json is valid")
}

/// A 8ms, GPU 5ms, B 1ms, C 4ms, D 1ms, all constant.
pub fn constant_stage_spec() -> FlowGraphSpec {
    five_stage_topology(StageTimes {
        a: 8.0,
        gpu: 5.0,
        b: 1.0,
        c: 4.0,
        d: 1.0,
    })
}
