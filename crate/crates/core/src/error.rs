use std::io;

use thiserror::Error;

use crate::graph::Violation;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("empirical distribution needs at least one sample")]
    EmptySamples,
    #[error("{0} is negative ({1})")]
    Negative(&'static str, f64),
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("uniform bounds inverted: lo {0} > hi {1}")]
    InvertedBounds(f64, f64),
    #[error("exponential mean must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("distribution format: {0}")]
    Format(String),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid pipeline: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("unknown edge {0:?} -> {1:?}")]
    UnknownEdge(String, String),
    #[error("duplicate node name {0:?}")]
    DuplicateNode(String),
    #[error("duplicate distribution name {0:?}")]
    DuplicateDistribution(String),
    #[error("attachment edge {0:?} -> {1:?} does not touch the added node")]
    DetachedEdge(String, String),
    #[error("stream count must be at least 1")]
    ZeroStreams,
    #[error("pipeline format: {0}")]
    Format(String),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("deadlock at t={time_us}us with unfinished frames; blocked: {}", .blocked.join(", "))]
    Deadlock { time_us: u64, blocked: Vec<String> },
    #[error("event log is empty")]
    EmptyLog,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is missing the header `node,stream,start_us,end_us`")]
    MissingHeader,
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: end_us {end} is before start_us {start}")]
    EndBeforeStart { line: usize, start: u64, end: u64 },
    #[error("no trace records")]
    Empty,
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("stream {stream}: only {counted} completions after warm-up, need at least 2")]
    TooFewCompletions { stream: usize, counted: usize },
    #[error("stream {stream}: measurement window is empty")]
    EmptyWindow { stream: usize },
    #[error("baseline mean fps is zero")]
    ZeroBaseline,
    #[error("measured fps is zero for stream {0}")]
    ZeroMeasured(usize),
    #[error("stream sets differ: {0} vs {1}")]
    MismatchedStreams(usize, usize),
    #[error("sweeps have different x axes")]
    MismatchedAxes,
    #[error("no data points")]
    Empty,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("streams={streams} replicate={replicate}: {source}")]
    Sim {
        streams: usize,
        replicate: usize,
        #[source]
        source: SimError,
    },
    #[error("streams={streams} replicate={replicate}: {source}")]
    Metrics {
        streams: usize,
        replicate: usize,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Compare(#[from] MetricsError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("study format: {0}")]
    Format(String),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart needs at least one non-empty series")]
    EmptySeries,
    #[error("series {0:?} has mismatched x/y lengths")]
    LengthMismatch(String),
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
}
