//! Pipeline description, validation, per-stream replication and declarative
//! what-if edits.
//!
//! A [`FlowGraphSpec`] describes one stream's worth of nodes. Nodes listed in
//! `per_stream_nodes` are copied once per stream (`A#0`, `A#1`, ...); every
//! other node must be an exclusive node and exists once, fed by all streams
//! through a single shared queue.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::ServiceDistribution;
use crate::error::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Source,
    Basic,
    Exclusive,
    Sink,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinPolicy {
    /// Wait for one message per predecessor with the same (stream, frame).
    #[default]
    AllOf,
    /// Treat every arrival as its own message.
    AnyOf,
}

impl JoinPolicy {
    fn is_default(&self) -> bool {
        *self == JoinPolicy::AllOf
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    #[serde(rename = "dist")]
    pub distribution: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<String>,
    #[serde(default, skip_serializing_if = "JoinPolicy::is_default")]
    pub join: JoinPolicy,
}

impl NodeSpec {
    pub fn new(name: &str, kind: NodeKind, distribution: &str) -> Self {
        Self {
            name: name.into(),
            kind,
            distribution: distribution.into(),
            resource: None,
            join: JoinPolicy::AllOf,
        }
    }

    pub fn exclusive(name: &str, distribution: &str, resource: &str) -> Self {
        Self {
            resource: Some(resource.into()),
            ..Self::new(name, NodeKind::Exclusive, distribution)
        }
    }

    pub fn with_join(mut self, join: JoinPolicy) -> Self {
        self.join = join;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    /// Communication delay distribution; consumes no worker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<String>,
}

impl EdgeSpec {
    pub fn new(from: &str, to: &str) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            latency: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusiveResource {
    pub name: String,
    pub capacity: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub resources: Vec<ExclusiveResource>,
    pub distributions: BTreeMap<String, ServiceDistribution>,
    pub per_stream_nodes: Vec<String>,
}

/// One broken rule. `element` names the offending node, edge or table entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub element: String,
}

impl Violation {
    fn new(rule: &'static str, element: impl Into<String>) -> Self {
        Self {
            rule,
            element: element.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.element)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationResult {
    Ok,
    Violations(Vec<Violation>),
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ValidationResult::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ValidationResult::Ok => &[],
            ValidationResult::Violations(v) => v,
        }
    }

    pub fn into_result(self) -> Result<(), GraphError> {
        match self {
            ValidationResult::Ok => Ok(()),
            ValidationResult::Violations(v) => Err(GraphError::Invalid(v)),
        }
    }
}

impl FlowGraphSpec {
    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text =
            fs::read_to_string(path).map_err(|e| GraphError::Io(path.display().to_string(), e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn is_per_stream(&self, name: &str) -> bool {
        self.per_stream_nodes.iter().any(|n| n == name)
    }

    /// Nodes that exist once and serve every stream.
    pub fn shared_nodes(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| !self.is_per_stream(&n.name))
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn validate(&self) -> ValidationResult {
        let mut out = Vec::new();
        let mut names: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.name.is_empty() {
                out.push(Violation::new("empty node name", format!("node #{i}")));
            }
            if names.insert(&n.name, i).is_some() {
                out.push(Violation::new("duplicate node", &n.name));
            }
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Source) {
            out.push(Violation::new("no source node", "graph"));
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Sink) {
            out.push(Violation::new("no sink node", "graph"));
        }

        let mut resource_names = BTreeSet::new();
        for r in &self.resources {
            if !resource_names.insert(r.name.as_str()) {
                out.push(Violation::new("duplicate resource", &r.name));
            }
            if r.capacity < 1 {
                out.push(Violation::new("resource capacity below 1", &r.name));
            }
        }

        for (name, d) in &self.distributions {
            if let Err(e) = d.validate() {
                out.push(Violation::new(
                    "invalid distribution",
                    format!("{name} ({e})"),
                ));
            }
        }

        for n in &self.nodes {
            if !self.distributions.contains_key(&n.distribution) {
                out.push(Violation::new(
                    "unresolved distribution",
                    format!("{} -> {}", n.name, n.distribution),
                ));
            }
            match (&n.kind, &n.resource) {
                (NodeKind::Exclusive, None) => {
                    out.push(Violation::new("unresolved resource", &n.name));
                }
                (NodeKind::Exclusive, Some(r)) if !resource_names.contains(r.as_str()) => {
                    out.push(Violation::new(
                        "unresolved resource",
                        format!("{} -> {r}", n.name),
                    ));
                }
                (NodeKind::Exclusive, Some(_)) => {}
                (_, Some(r)) => out.push(Violation::new(
                    "resource on non-exclusive node",
                    format!("{} -> {r}", n.name),
                )),
                (_, None) => {}
            }
            if !self.is_per_stream(&n.name) && n.kind != NodeKind::Exclusive {
                out.push(Violation::new(
                    "non-exclusive node must be per-stream",
                    &n.name,
                ));
            }
        }

        let mut seen_per_stream = BTreeSet::new();
        for p in &self.per_stream_nodes {
            if !names.contains_key(p.as_str()) {
                out.push(Violation::new("unknown per-stream node", p));
            }
            if !seen_per_stream.insert(p.as_str()) {
                out.push(Violation::new("duplicate per-stream node", p));
            }
        }

        let n = self.nodes.len();
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pred_count = vec![0usize; n];
        let mut seen_edges = BTreeSet::new();
        for e in &self.edges {
            let label = format!("{}->{}", e.from, e.to);
            let (from, to) = (names.get(e.from.as_str()), names.get(e.to.as_str()));
            if from.is_none() {
                out.push(Violation::new(
                    "unknown edge endpoint",
                    format!("{label} ({})", e.from),
                ));
            }
            if to.is_none() {
                out.push(Violation::new(
                    "unknown edge endpoint",
                    format!("{label} ({})", e.to),
                ));
            }
            if let Some(l) = &e.latency {
                if !self.distributions.contains_key(l) {
                    out.push(Violation::new(
                        "unresolved distribution",
                        format!("{label} -> {l}"),
                    ));
                }
            }
            if !seen_edges.insert((e.from.as_str(), e.to.as_str())) {
                out.push(Violation::new("duplicate edge", label));
                continue;
            }
            if let (Some(&f), Some(&t)) = (from, to) {
                succ[f].push(t);
                pred_count[t] += 1;
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind == NodeKind::Source && pred_count[i] > 0 {
                out.push(Violation::new("source has predecessors", &node.name));
            }
            if node.kind == NodeKind::Sink && !succ[i].is_empty() {
                out.push(Violation::new("sink has successors", &node.name));
            }
            if node.kind != NodeKind::Source && pred_count[i] == 0 {
                out.push(Violation::new("node has no predecessors", &node.name));
            }
            if node.kind != NodeKind::Sink && succ[i].is_empty() {
                out.push(Violation::new(
                    "non-sink node has no successors",
                    &node.name,
                ));
            }
        }

        if let Some(cycle) = find_cycle(&succ) {
            let path: Vec<&str> = cycle.iter().map(|&i| self.nodes[i].name.as_str()).collect();
            out.push(Violation::new("cycle", path.join("→")));
        } else {
            // Reachability only makes sense once the graph is known to be a DAG.
            let mut reached = vec![false; n];
            let mut stack: Vec<usize> = (0..n)
                .filter(|&i| self.nodes[i].kind == NodeKind::Source)
                .collect();
            while let Some(i) = stack.pop() {
                if !std::mem::replace(&mut reached[i], true) {
                    stack.extend(succ[i].iter().copied());
                }
            }
            for (i, node) in self.nodes.iter().enumerate() {
                if !reached[i] && pred_count[i] > 0 {
                    out.push(Violation::new("unreachable from any source", &node.name));
                }
            }
        }

        if out.is_empty() {
            ValidationResult::Ok
        } else {
            ValidationResult::Violations(out)
        }
    }

    /// Pure edit: returns a new validated spec and leaves `self` untouched.
    pub fn apply_modification(&self, m: &Modification) -> Result<FlowGraphSpec, GraphError> {
        let mut spec = self.clone();
        match m {
            Modification::AddNode {
                node,
                edges,
                distributions,
                per_stream,
            } => {
                if spec.node(&node.name).is_some() {
                    return Err(GraphError::DuplicateNode(node.name.clone()));
                }
                for e in edges {
                    if e.from != node.name && e.to != node.name {
                        return Err(GraphError::DetachedEdge(e.from.clone(), e.to.clone()));
                    }
                    let other = if e.from == node.name { &e.to } else { &e.from };
                    if other != &node.name && spec.node(other).is_none() {
                        return Err(GraphError::UnknownNode(other.clone()));
                    }
                }
                for (name, d) in distributions {
                    if spec.distributions.contains_key(name) {
                        return Err(GraphError::DuplicateDistribution(name.clone()));
                    }
                    spec.distributions.insert(name.clone(), d.clone());
                }
                spec.nodes.push(node.clone());
                spec.edges.extend(edges.iter().cloned());
                if *per_stream {
                    spec.per_stream_nodes.push(node.name.clone());
                }
            }
            Modification::RemoveNode { node } => {
                let Some(idx) = spec.nodes.iter().position(|n| &n.name == node) else {
                    return Err(GraphError::UnknownNode(node.clone()));
                };
                let removed = spec.nodes.remove(idx);
                let mut dropped_latency = Vec::new();
                spec.edges.retain(|e| {
                    let keep = &e.from != node && &e.to != node;
                    if !keep {
                        dropped_latency.extend(e.latency.clone());
                    }
                    keep
                });
                spec.per_stream_nodes.retain(|n| n != node);
                for d in std::iter::once(removed.distribution).chain(dropped_latency) {
                    if !spec.references_distribution(&d) {
                        spec.distributions.remove(&d);
                    }
                }
            }
            Modification::SetDistribution { node, distribution } => {
                spec.set_node_distribution(node, distribution.clone())?;
            }
            Modification::ZeroNode { node } => {
                spec.set_node_distribution(node, ServiceDistribution::zero())?;
            }
            Modification::SetEdgeLatency { from, to, latency } => {
                let Some(idx) = spec
                    .edges
                    .iter()
                    .position(|e| &e.from == from && &e.to == to)
                else {
                    return Err(GraphError::UnknownEdge(from.clone(), to.clone()));
                };
                let old = spec.edges[idx].latency.take();
                if let Some(d) = latency {
                    let name =
                        spec.fresh_distribution_name(&format!("{from}->{to}"), old.as_deref());
                    spec.distributions.insert(name.clone(), d.clone());
                    spec.edges[idx].latency = Some(name);
                }
                if let Some(old) = old {
                    if !spec.references_distribution(&old) {
                        spec.distributions.remove(&old);
                    }
                }
            }
        }
        spec.validate().into_result()?;
        Ok(spec)
    }

    fn references_distribution(&self, name: &str) -> bool {
        self.nodes.iter().any(|n| n.distribution == name)
            || self
                .edges
                .iter()
                .any(|e| e.latency.as_deref() == Some(name))
    }

    fn fresh_distribution_name(&self, base: &str, reusable: Option<&str>) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.distributions.contains_key(&name) && Some(name.as_str()) != reusable {
            name = format!("{base}~{k}");
            k += 1;
        }
        name
    }

    // Overwrites the node's table entry in place when nobody else uses it, so a
    // no-op substitution leaves the spec structurally identical.
    fn set_node_distribution(
        &mut self,
        node: &str,
        dist: ServiceDistribution,
    ) -> Result<(), GraphError> {
        let Some(idx) = self.nodes.iter().position(|n| n.name == node) else {
            return Err(GraphError::UnknownNode(node.into()));
        };
        let current = self.nodes[idx].distribution.clone();
        let users = self
            .nodes
            .iter()
            .filter(|n| n.distribution == current)
            .count()
            + self
                .edges
                .iter()
                .filter(|e| e.latency.as_deref() == Some(current.as_str()))
                .count();
        if users == 1 {
            self.distributions.insert(current, dist);
        } else {
            let name = self.fresh_distribution_name(node, None);
            self.distributions.insert(name.clone(), dist);
            self.nodes[idx].distribution = name;
        }
        Ok(())
    }

    /// Expands the spec into `streams` disjoint per-stream components that
    /// share the non-per-stream (exclusive) nodes and all resources.
    pub fn instantiate(&self, streams: usize) -> Result<RuntimeGraph, GraphError> {
        if streams == 0 {
            return Err(GraphError::ZeroStreams);
        }
        self.validate().into_result()?;

        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        let resource_index: HashMap<&str, usize> = self
            .resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.name.as_str(), i))
            .collect();

        let mut classes: Vec<NodeClass> = self
            .nodes
            .iter()
            .map(|n| NodeClass {
                name: n.name.clone(),
                kind: n.kind,
                distribution: n.distribution.clone(),
                resource: n.resource.as_deref().map(|r| resource_index[r]),
                join: n.join,
                per_stream: self.is_per_stream(&n.name),
                preds: Vec::new(),
                succs: Vec::new(),
            })
            .collect();
        for e in &self.edges {
            let (f, t) = (index[e.from.as_str()], index[e.to.as_str()]);
            classes[f].succs.push(Successor {
                class: t,
                latency: e.latency.clone(),
            });
            classes[t].preds.push(f);
        }

        let mut instances = Vec::new();
        let mut per_stream_instance = vec![Vec::new(); classes.len()];
        for s in 0..streams {
            for (c, class) in classes.iter().enumerate() {
                if class.per_stream {
                    per_stream_instance[c].push(instances.len());
                    instances.push(NodeInstance {
                        name: format!("{}#{s}", class.name),
                        class: c,
                        stream: Some(s),
                    });
                }
            }
        }
        let mut shared_instance = vec![None; classes.len()];
        for (c, class) in classes.iter().enumerate() {
            if !class.per_stream {
                shared_instance[c] = Some(instances.len());
                instances.push(NodeInstance {
                    name: class.name.clone(),
                    class: c,
                    stream: None,
                });
            }
        }

        Ok(RuntimeGraph {
            spec: self.clone(),
            streams,
            classes,
            instances,
            per_stream_instance,
            shared_instance,
        })
    }
}

fn find_cycle(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; succ.len()];
    for root in 0..succ.len() {
        if mark[root] != Mark::New {
            continue;
        }
        // (node, next successor position)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut pos)) = stack.last_mut() {
            if let Some(&next) = succ[node].get(*pos) {
                *pos += 1;
                match mark[next] {
                    Mark::New => {
                        mark[next] = Mark::Active;
                        stack.push((next, 0));
                    }
                    Mark::Active => {
                        let start = stack.iter().position(|&(n, _)| n == next).unwrap();
                        let mut cycle: Vec<usize> =
                            stack[start..].iter().map(|&(n, _)| n).collect();
                        cycle.push(next);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

/// Declarative pipeline edit used by what-if studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modification {
    AddNode {
        node: NodeSpec,
        /// Every attachment edge must have the new node as an endpoint.
        edges: Vec<EdgeSpec>,
        /// New table entries; names must not already exist.
        #[serde(default)]
        distributions: BTreeMap<String, ServiceDistribution>,
        #[serde(default = "default_true")]
        per_stream: bool,
    },
    RemoveNode {
        node: String,
    },
    SetDistribution {
        node: String,
        distribution: ServiceDistribution,
    },
    ZeroNode {
        node: String,
    },
    SetEdgeLatency {
        from: String,
        to: String,
        /// `None` clears the latency.
        latency: Option<ServiceDistribution>,
    },
}

fn default_true() -> bool {
    true
}

impl Modification {
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text =
            fs::read_to_string(path).map_err(|e| GraphError::Io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| GraphError::Format(e.to_string()))
    }

    /// Adds a per-stream basic node with its own fresh distribution entry.
    pub fn add_basic_node(
        name: &str,
        dist: ServiceDistribution,
        preds: &[&str],
        succs: &[&str],
    ) -> Self {
        let edges = preds
            .iter()
            .map(|p| EdgeSpec::new(p, name))
            .chain(succs.iter().map(|s| EdgeSpec::new(name, s)))
            .collect();
        Modification::AddNode {
            node: NodeSpec::new(name, NodeKind::Basic, name),
            edges,
            distributions: BTreeMap::from([(name.to_string(), dist)]),
            per_stream: true,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Successor {
    pub class: usize,
    pub latency: Option<String>,
}

#[derive(Clone, Debug)]
pub(crate) struct NodeClass {
    pub name: String,
    pub kind: NodeKind,
    pub distribution: String,
    pub resource: Option<usize>,
    pub join: JoinPolicy,
    pub per_stream: bool,
    pub preds: Vec<usize>,
    pub succs: Vec<Successor>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeInstance {
    pub name: String,
    pub class: usize,
    /// `None` for shared nodes.
    pub stream: Option<usize>,
}

/// A spec expanded for a fixed stream count, ready to simulate.
#[derive(Clone, Debug)]
pub struct RuntimeGraph {
    pub(crate) spec: FlowGraphSpec,
    pub(crate) streams: usize,
    pub(crate) classes: Vec<NodeClass>,
    pub(crate) instances: Vec<NodeInstance>,
    pub(crate) per_stream_instance: Vec<Vec<usize>>,
    pub(crate) shared_instance: Vec<Option<usize>>,
}

impl RuntimeGraph {
    pub fn spec(&self) -> &FlowGraphSpec {
        &self.spec
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn instances(&self) -> &[NodeInstance] {
        &self.instances
    }

    /// Count of replicated per-stream node instances.
    pub fn per_stream_instance_count(&self) -> usize {
        self.instances.iter().filter(|i| i.stream.is_some()).count()
    }

    pub fn shared_instance_count(&self) -> usize {
        self.instances.iter().filter(|i| i.stream.is_none()).count()
    }

    pub fn resources(&self) -> &[ExclusiveResource] {
        &self.spec.resources
    }

    pub fn instance_kind(&self, instance: usize) -> NodeKind {
        self.classes[self.instances[instance].class].kind
    }

    /// The resource an exclusive instance locks.
    pub fn instance_resource(&self, instance: usize) -> Option<&ExclusiveResource> {
        let class = &self.classes[self.instances[instance].class];
        class.resource.map(|r| &self.spec.resources[r])
    }

    pub fn class_name(&self, class: usize) -> &str {
        &self.classes[class].name
    }

    pub(crate) fn instance_for(&self, class: usize, stream: usize) -> usize {
        match self.shared_instance[class] {
            Some(i) => i,
            None => self.per_stream_instance[class][stream],
        }
    }

    /// Instance-level edges, one per stream for per-stream endpoints.
    pub fn instance_edges(&self) -> Vec<(String, String)> {
        let mut out = BTreeSet::new();
        for (c, class) in self.classes.iter().enumerate() {
            for s in &class.succs {
                for stream in 0..self.streams {
                    let from = &self.instances[self.instance_for(c, stream)].name;
                    let to = &self.instances[self.instance_for(s.class, stream)].name;
                    out.insert((from.clone(), to.clone()));
                }
            }
        }
        out.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dists() -> BTreeMap<String, ServiceDistribution> {
        BTreeMap::from([
            ("zero".into(), ServiceDistribution::zero()),
            ("a".into(), ServiceDistribution::constant_ms(2.0)),
            ("gpu".into(), ServiceDistribution::constant_ms(5.0)),
            ("b".into(), ServiceDistribution::constant_ms(1.0)),
        ])
    }

    fn chain() -> FlowGraphSpec {
        FlowGraphSpec {
            nodes: vec![
                NodeSpec::new("source", NodeKind::Source, "zero"),
                NodeSpec::new("A", NodeKind::Basic, "a"),
                NodeSpec::exclusive("GPU", "gpu", "gpu"),
                NodeSpec::new("B", NodeKind::Basic, "b"),
                NodeSpec::new("sink", NodeKind::Sink, "zero"),
            ],
            edges: vec![
                EdgeSpec::new("source", "A"),
                EdgeSpec::new("A", "GPU"),
                EdgeSpec::new("GPU", "B"),
                EdgeSpec::new("B", "sink"),
            ],
            resources: vec![ExclusiveResource {
                name: "gpu".into(),
                capacity: 1,
            }],
            distributions: dists(),
            per_stream_nodes: vec!["source".into(), "A".into(), "B".into(), "sink".into()],
        }
    }

    #[test]
    fn minimal_chain_is_valid() {
        assert_eq!(chain().validate(), ValidationResult::Ok);
    }

    #[test]
    fn cycle_is_named() {
        let mut spec = chain();
        spec.edges.push(EdgeSpec::new("B", "A"));
        let v = spec.validate();
        let cycle = v.violations().iter().find(|v| v.rule == "cycle").unwrap();
        assert_eq!(cycle.to_string(), "cycle: A→GPU→B→A");
    }

    #[test]
    fn missing_resource_is_reported() {
        let mut spec = chain();
        spec.nodes[2].resource = None;
        let v = spec.validate();
        assert!(v
            .violations()
            .iter()
            .any(|v| v.rule == "unresolved resource" && v.element == "GPU"));
        spec.nodes[2].resource = Some("tpu".into());
        assert!(spec
            .validate()
            .violations()
            .iter()
            .any(|v| v.rule == "unresolved resource"));
    }

    #[test]
    fn other_violations() {
        let mut spec = chain();
        spec.nodes.push(NodeSpec::new("A", NodeKind::Basic, "nope"));
        spec.per_stream_nodes.push("ghost".into());
        spec.edges.push(EdgeSpec::new("sink", "ghost2"));
        spec.resources[0].capacity = 0;
        let rules: BTreeSet<_> = spec
            .validate()
            .violations()
            .iter()
            .map(|v| v.rule)
            .collect();
        for r in [
            "duplicate node",
            "unresolved distribution",
            "unknown per-stream node",
            "unknown edge endpoint",
            "resource capacity below 1",
        ] {
            assert!(rules.contains(r), "missing {r} in {rules:?}");
        }
    }

    #[test]
    fn shared_node_must_be_exclusive() {
        let mut spec = chain();
        spec.per_stream_nodes.retain(|n| n != "A");
        assert!(spec
            .validate()
            .violations()
            .iter()
            .any(|v| v.rule == "non-exclusive node must be per-stream" && v.element == "A"));
    }

    #[test]
    fn empty_spec_is_invalid_not_a_crash() {
        let v = FlowGraphSpec::default().validate();
        assert!(!v.is_ok());
    }

    #[test]
    fn instantiate_two_streams() {
        let g = chain().instantiate(2).unwrap();
        assert_eq!(g.per_stream_instance_count(), 8);
        assert_eq!(g.shared_instance_count(), 1);
        assert_eq!(g.resources().len(), 1);
        let names: Vec<_> = g.instances().iter().map(|i| i.name.as_str()).collect();
        assert!(names.contains(&"A#1"));
        assert!(names.contains(&"GPU"));
        assert!(g
            .instance_edges()
            .contains(&("GPU".to_string(), "B#1".to_string())));
    }

    #[test]
    fn instantiate_rejects_zero_streams() {
        assert!(matches!(
            chain().instantiate(0),
            Err(GraphError::ZeroStreams)
        ));
    }

    #[test]
    fn add_then_remove_is_identity() {
        let spec = chain();
        let m = Modification::add_basic_node(
            "E",
            ServiceDistribution::constant_ms(20.0),
            &["A"],
            &["sink"],
        );
        let with_e = spec.apply_modification(&m).unwrap();
        assert_eq!(with_e.nodes.len(), 6);
        let back = with_e
            .apply_modification(&Modification::RemoveNode { node: "E".into() })
            .unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn modification_errors() {
        let spec = chain();
        assert!(matches!(
            spec.apply_modification(&Modification::ZeroNode { node: "Q".into() }),
            Err(GraphError::UnknownNode(_))
        ));
        let dup = Modification::add_basic_node("A", ServiceDistribution::zero(), &["A"], &["sink"]);
        assert!(matches!(
            spec.apply_modification(&dup),
            Err(GraphError::DuplicateNode(_))
        ));
        assert!(matches!(
            spec.apply_modification(&Modification::SetEdgeLatency {
                from: "A".into(),
                to: "B".into(),
                latency: None
            }),
            Err(GraphError::UnknownEdge(..))
        ));
        // removing the GPU disconnects B
        assert!(matches!(
            spec.apply_modification(&Modification::RemoveNode { node: "GPU".into() }),
            Err(GraphError::Invalid(_))
        ));
    }

    #[test]
    fn zero_node_and_set_distribution() {
        let spec = chain();
        let z = spec
            .apply_modification(&Modification::ZeroNode { node: "GPU".into() })
            .unwrap();
        let gpu = z.node("GPU").unwrap();
        assert_eq!(
            z.distributions[&gpu.distribution],
            ServiceDistribution::zero()
        );
        // "zero" is shared by source and sink: a dedicated entry is created
        let s = spec
            .apply_modification(&Modification::SetDistribution {
                node: "sink".into(),
                distribution: ServiceDistribution::constant_ms(1.0),
            })
            .unwrap();
        assert_eq!(s.node("source").unwrap().distribution, "zero");
        assert_ne!(s.node("sink").unwrap().distribution, "zero");
        // no-op substitution is structurally identical
        let same = spec
            .apply_modification(&Modification::SetDistribution {
                node: "A".into(),
                distribution: spec.distributions["a"].clone(),
            })
            .unwrap();
        assert_eq!(same, spec);
    }

    #[test]
    fn edge_latency_set_and_clear() {
        let spec = chain();
        let set = Modification::SetEdgeLatency {
            from: "A".into(),
            to: "GPU".into(),
            latency: Some(ServiceDistribution::constant(50.0)),
        };
        let with = spec.apply_modification(&set).unwrap();
        assert_eq!(with.edges[1].latency.as_deref(), Some("A->GPU"));
        let cleared = with
            .apply_modification(&Modification::SetEdgeLatency {
                from: "A".into(),
                to: "GPU".into(),
                latency: None,
            })
            .unwrap();
        assert_eq!(cleared, spec);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = chain().to_json_string();
        assert_eq!(FlowGraphSpec::from_json_str(&text).unwrap(), chain());
        let bad = text.replacen("\"nodes\"", "\"extra\": 1, \"nodes\"", 1);
        assert!(FlowGraphSpec::from_json_str(&bad).is_err());
        let bad_node = text.replacen(
            "\"kind\": \"source\"",
            "\"kind\": \"source\", \"color\": 1",
            1,
        );
        assert!(FlowGraphSpec::from_json_str(&bad_node).is_err());
    }
}
