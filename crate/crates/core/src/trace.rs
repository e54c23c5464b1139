//! Profiling traces: one span per line, `node,stream,start_us,end_us`.
//! Spans are pooled per node across streams into empirical distributions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::dist::{NamedDistribution, RngState, ServiceDistribution};
use crate::engine::ticks;
use crate::error::{DistError, TraceError};

pub const TRACE_HEADER: &str = "node,stream,start_us,end_us";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub node: String,
    pub stream_id: u64,
    pub start_us: u64,
    pub end_us: u64,
}

impl TraceRecord {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

/// Parses a trace file. Lines may end in LF or CRLF; blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        _ => return Err(TraceError::MissingHeader),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(line, line_no)?);
    }
    Ok(out)
}

fn parse_line(line: &str, line_no: usize) -> Result<TraceRecord, TraceError> {
    let malformed = |msg: String| TraceError::Malformed { line: line_no, msg };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(malformed(format!(
            "expected 4 fields, found {}",
            fields.len()
        )));
    }
    if fields[0].is_empty() {
        return Err(malformed("empty node name".into()));
    }
    let int = |name: &str, s: &str| {
        s.parse::<u64>()
            .map_err(|_| malformed(format!("{name} is not a non-negative integer: {s:?}")))
    };
    let stream_id = int("stream", fields[1])?;
    let start_us = int("start_us", fields[2])?;
    let end_us = int("end_us", fields[3])?;
    if end_us < start_us {
        return Err(TraceError::EndBeforeStart {
            line: line_no,
            start: start_us,
            end: end_us,
        });
    }
    Ok(TraceRecord {
        node: fields[0].to_string(),
        stream_id,
        start_us,
        end_us,
    })
}

pub fn serialize_trace(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.node, r.stream_id, r.start_us, r.end_us
        );
    }
    out
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let text =
        fs::read_to_string(path).map_err(|e| TraceError::Io(path.display().to_string(), e))?;
    parse_trace(&text)
}

/// Empirical distributions keyed by node name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistributionBundle {
    pub per_node: BTreeMap<String, ServiceDistribution>,
    pub sample_counts: BTreeMap<String, usize>,
}

pub fn build_distributions(records: &[TraceRecord]) -> Result<DistributionBundle, TraceError> {
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    let mut grouped: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(r.node.as_str())
            .or_default()
            .push(r.duration_us() as f64);
    }
    let mut bundle = DistributionBundle::default();
    for (node, samples) in grouped {
        bundle.sample_counts.insert(node.to_string(), samples.len());
        bundle.per_node.insert(
            node.to_string(),
            ServiceDistribution::from_samples(&samples)?,
        );
    }
    Ok(bundle)
}

impl DistributionBundle {
    fn insert(&mut self, name: String, dist: ServiceDistribution) -> Result<(), DistError> {
        let ServiceDistribution::Empirical { samples_us } = &dist else {
            return Err(DistError::Format(format!(
                "{name}: bundle entries must be empirical, found {}",
                dist.kind_name()
            )));
        };
        self.sample_counts.insert(name.clone(), samples_us.len());
        self.per_node.insert(name, dist);
        Ok(())
    }

    /// `{node: {"kind": "empirical", "samples_us": [...]}, ...}`
    pub fn to_combined_json(&self) -> String {
        serde_json::to_string_pretty(&self.per_node).expect("distributions serialize")
    }

    pub fn from_combined_json(text: &str) -> Result<Self, DistError> {
        let map: BTreeMap<String, ServiceDistribution> =
            serde_json::from_str(text).map_err(|e| DistError::Format(e.to_string()))?;
        let mut out = Self::default();
        for (name, dist) in map {
            out.insert(name, dist)?;
        }
        Ok(out)
    }

    /// Writes `<node>.json` per node, each in the named distribution format.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DistError> {
        fs::create_dir_all(dir).map_err(|e| DistError::Io(dir.display().to_string(), e))?;
        for (name, dist) in &self.per_node {
            if name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(DistError::Format(format!(
                    "node name {name:?} is not a file name"
                )));
            }
            let path = dir.join(format!("{name}.json"));
            let named = NamedDistribution {
                name: name.clone(),
                dist: dist.clone(),
            };
            let mut text = serde_json::to_string_pretty(&named.to_json()).expect("json");
            text.push('\n');
            fs::write(&path, text).map_err(|e| DistError::Io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    /// Loads every `*.json` file in `dir`; the name inside each file is the key.
    pub fn read_dir(dir: &Path) -> Result<Self, DistError> {
        let io = |e| DistError::Io(dir.display().to_string(), e);
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
        paths.sort();
        let mut out = Self::default();
        for p in paths {
            let named = NamedDistribution::load(&p)?;
            if out.per_node.contains_key(&named.name) {
                return Err(DistError::Format(format!(
                    "{}: duplicate node {:?}",
                    p.display(),
                    named.name
                )));
            }
            out.insert(named.name, named.dist)?;
        }
        Ok(out)
    }

    /// Replaces the distribution of every matching node in `spec`; returns the
    /// node names that had no counterpart in the pipeline.
    pub fn apply_to(&self, spec: &mut crate::graph::FlowGraphSpec) -> Vec<String> {
        let mut unused = Vec::new();
        for (name, dist) in &self.per_node {
            let Some(node) = spec.nodes.iter().find(|n| &n.name == name) else {
                unused.push(name.clone());
                continue;
            };
            spec.distributions
                .insert(node.distribution.clone(), dist.clone());
        }
        unused
    }

    pub fn to_value(&self) -> Value {
        let map: Map<String, Value> = self
            .per_node
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::to_value(v).expect("json")))
            .collect();
        Value::Object(map)
    }
}

/// Synthetic trace: `records_per_node` spans per node, round-robin over
/// `streams`, with durations drawn from each node's distribution and rounded
/// to whole microseconds. Spans of one stream are laid end to end.
pub fn generate_trace(
    nodes: &[(&str, ServiceDistribution)],
    streams: u64,
    records_per_node: usize,
    seed: u64,
) -> Vec<TraceRecord> {
    let streams = streams.max(1);
    let mut clock = vec![0u64; streams as usize];
    let mut out = Vec::with_capacity(nodes.len() * records_per_node);
    for (name, dist) in nodes {
        let mut rng = RngState::for_label(seed, name);
        for i in 0..records_per_node {
            let stream = i as u64 % streams;
            let start = clock[stream as usize];
            let end = start + ticks(dist.sample(&mut rng));
            clock[stream as usize] = end;
            out.push(TraceRecord {
                node: name.to_string(),
                stream_id: stream,
                start_us: start,
                end_us: end,
            });
        }
    }
    out
}
