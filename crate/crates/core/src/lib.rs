//! Discrete-event simulation of heterogeneous CPU/GPU flow-graph pipelines.
//!
//! The crate predicts per-stream throughput, bottlenecks and the payoff of
//! pipeline edits. A typical run:
//!
//! ```
//! use hetsim::{graph::FlowGraphSpec, engine::{simulate, SimConfig}, metrics::fps_per_stream};
//!
//! let spec = hetsim::reference::reference_spec();
//! let graph = spec.instantiate(2).unwrap();
//! let cfg = SimConfig { frames_per_stream: 200, ..SimConfig::default() };
//! let result = simulate(&graph, &cfg).unwrap();
//! let fps = fps_per_stream(&result, &cfg).unwrap();
//! assert_eq!(fps.len(), 2);
//! # let _ = FlowGraphSpec::default();
//! ```

pub mod chart;
pub mod dist;
pub mod engine;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod reference;
pub mod scenarios;
pub mod trace;
