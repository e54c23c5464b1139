#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hetsim::dist::{RngState, ServiceDistribution};
use hetsim::engine::{EventKind, SimConfig, SimResult};
use hetsim::graph::{
    EdgeSpec, ExclusiveResource, FlowGraphSpec, JoinPolicy, NodeKind, NodeSpec, RuntimeGraph,
};

fn random_dist(rng: &mut RngState) -> ServiceDistribution {
    let ms = |rng: &mut RngState| 200.0 + rng.next_unit() * 4800.0;
    match rng.index(5) {
        0 => ServiceDistribution::constant(ms(rng)),
        1 => {
            let lo = ms(rng);
            ServiceDistribution::Uniform {
                lo_us: lo,
                hi_us: lo + ms(rng),
            }
        }
        2 => ServiceDistribution::Exponential { mean_us: ms(rng) },
        3 => ServiceDistribution::Lognormal {
            mu: ms(rng).ln(),
            sigma: 0.1 + rng.next_unit() * 0.5,
            unit_us: 1.0,
        },
        _ => {
            let n = 1 + rng.index(8);
            let samples: Vec<f64> = (0..n).map(|_| ms(rng)).collect();
            ServiceDistribution::from_samples(&samples).unwrap()
        }
    }
}

/// A valid random DAG with at most 8 nodes: sources first, sinks last,
/// edges only point forward.
pub fn random_spec(seed: u64) -> FlowGraphSpec {
    let mut rng = RngState::for_label(seed, "random-spec");
    let n = 3 + rng.index(6);
    let sources = 1 + rng.index(2.min(n - 2));
    let sinks = 1 + rng.index(2.min(n - sources - 1));
    let resources: Vec<ExclusiveResource> = (0..1 + rng.index(2))
        .map(|i| ExclusiveResource {
            name: format!("r{i}"),
            capacity: 1 + rng.index(2),
        })
        .collect();

    let mut spec = FlowGraphSpec {
        resources: resources.clone(),
        ..FlowGraphSpec::default()
    };
    let mut per_stream = Vec::new();
    for i in 0..n {
        let name = format!("n{i}");
        let kind = if i < sources {
            NodeKind::Source
        } else if i >= n - sinks {
            NodeKind::Sink
        } else if rng.index(3) == 0 {
            NodeKind::Exclusive
        } else {
            NodeKind::Basic
        };
        let mut node = match kind {
            NodeKind::Exclusive => {
                let r = &resources[rng.index(resources.len())].name;
                NodeSpec::exclusive(&name, &name, r)
            }
            k => NodeSpec::new(&name, k, &name),
        };
        if rng.index(3) == 0 {
            node = node.with_join(JoinPolicy::AnyOf);
        }
        if kind != NodeKind::Exclusive || rng.index(2) == 0 {
            per_stream.push(name.clone());
        }
        spec.distributions.insert(name, random_dist(&mut rng));
        spec.nodes.push(node);
    }
    spec.per_stream_nodes = per_stream;

    let mut edges = BTreeSet::new();
    for j in sources..n {
        let from_hi = j.min(n - sinks);
        let k = 1 + rng.index(2);
        for _ in 0..k {
            edges.insert((rng.index(from_hi), j));
        }
    }
    for i in 0..n - sinks {
        if !edges.iter().any(|&(f, _)| f == i) {
            let lo = (i + 1).max(sources);
            edges.insert((i, lo + rng.index(n - lo)));
        }
    }
    for (f, t) in edges {
        let mut e = EdgeSpec::new(&format!("n{f}"), &format!("n{t}"));
        if rng.index(5) == 0 {
            let name = format!("lat{f}_{t}");
            spec.distributions
                .insert(name.clone(), random_dist(&mut rng));
            e.latency = Some(name);
        }
        spec.edges.push(e);
    }
    spec
}

/// Sweeps the event log: time order, worker and resource capacity, cores
/// given up during exclusive service, and exactly-once frames per sink.
pub fn check_invariants(r: &SimResult, g: &RuntimeGraph, cfg: &SimConfig) -> Result<(), String> {
    let mut last = 0;
    let mut workers = 0i64;
    let mut held_by: Vec<i64> = vec![0; r.node_names.len()];
    let mut res: BTreeMap<&str, (i64, i64)> = g
        .resources()
        .iter()
        .map(|x| (x.name.as_str(), (0, x.capacity as i64)))
        .collect();
    let mut completed: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, e) in r.events.iter().enumerate() {
        if e.time < last {
            return Err(format!("event {i} goes back in time"));
        }
        last = e.time;
        let node = e.node as usize;
        match e.kind {
            EventKind::CoreAcquired => {
                workers += 1;
                held_by[node] += 1;
            }
            EventKind::CoreReleased => {
                workers -= 1;
                held_by[node] -= 1;
            }
            EventKind::ResourceAcquired | EventKind::ResourceReleased => {
                let name = g
                    .instance_resource(node)
                    .ok_or_else(|| format!("event {i}: resource event on {}", r.node_names[node]))?
                    .name
                    .as_str();
                let slot = res.get_mut(name).unwrap();
                slot.0 += if e.kind == EventKind::ResourceAcquired {
                    1
                } else {
                    -1
                };
                if slot.0 < 0 || slot.0 > slot.1 {
                    return Err(format!(
                        "event {i}: resource {name} held {} of {}",
                        slot.0, slot.1
                    ));
                }
            }
            EventKind::ServiceStarted if g.instance_kind(node) == NodeKind::Exclusive => {
                let single = g.instances()[node].stream.is_some()
                    || g.instance_resource(node).unwrap().capacity == 1;
                if single && held_by[node] != 0 {
                    return Err(format!(
                        "event {i}: {} serves while holding a core",
                        r.node_names[node]
                    ));
                }
            }
            EventKind::FrameCompleted => completed.entry(e.node).or_default().push(e.frame),
            _ => {}
        }
        if workers < 0 || workers > cfg.cpu_workers as i64 {
            return Err(format!(
                "event {i}: {workers} cores held of {}",
                cfg.cpu_workers
            ));
        }
        if held_by[node] < 0 {
            return Err(format!(
                "event {i}: negative core count on {}",
                r.node_names[node]
            ));
        }
    }
    if workers != 0 || res.values().any(|v| v.0 != 0) {
        return Err("cores or resources still held at the end".into());
    }
    let expected: Vec<u32> = (0..cfg.frames_per_stream as u32).collect();
    for (i, inst) in g.instances().iter().enumerate() {
        if g.instance_kind(i) != NodeKind::Sink {
            continue;
        }
        let mut frames = completed.remove(&(i as u32)).unwrap_or_default();
        frames.sort_unstable();
        if frames != expected {
            return Err(format!(
                "{}: completed frames are not exactly 0..F",
                inst.name
            ));
        }
    }
    if !completed.is_empty() {
        return Err("frame_completed logged by a non-sink".into());
    }
    for (s, times) in r.per_stream_completion.iter().enumerate() {
        if times.len() != cfg.frames_per_stream {
            return Err(format!("stream {s}: completion count mismatch"));
        }
    }
    Ok(())
}
