//! What-if studies: stream-count sweeps, A/B comparisons of a pipeline edit,
//! and ideal-vs-measured optimization payoff.
//!
//! Replicate `r` always runs with seed `cfg.seed + r`, for the base and the
//! modified pipeline alike, so differences come from the edit and not from
//! sampling noise.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::ServiceDistribution;
use crate::engine::{detect_bottleneck, simulate, SimConfig, Utilization};
use crate::error::ScenarioError;
use crate::graph::{FlowGraphSpec, Modification};
use crate::metrics::{self, slowdown_curve, speedup, ComparisonReport, StreamFps};

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: FlowGraphSpec,
    pub cfg: SimConfig,
    pub stream_counts: Vec<usize>,
    pub replications: usize,
}

impl SweepSpec {
    pub fn new(
        base: FlowGraphSpec,
        cfg: SimConfig,
        stream_counts: &[usize],
        replications: usize,
    ) -> Self {
        Self {
            base,
            cfg,
            stream_counts: stream_counts.to_vec(),
            replications,
        }
    }

    /// Sorted, de-duplicated stream counts.
    pub fn normalized_counts(&self) -> Result<Vec<usize>, ScenarioError> {
        if self.stream_counts.is_empty() {
            return Err(ScenarioError::InvalidSweep("no stream counts".into()));
        }
        if self.stream_counts.contains(&0) {
            return Err(ScenarioError::InvalidSweep("stream count 0".into()));
        }
        if self.replications < 1 {
            return Err(ScenarioError::InvalidSweep(
                "replications must be >= 1".into(),
            ));
        }
        let mut counts = self.stream_counts.clone();
        counts.sort_unstable();
        counts.dedup();
        Ok(counts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub streams: usize,
    pub mean_fps_per_stream: f64,
    /// Normal-approximation 95% half-width over replicate means; 0 for one replicate.
    pub ci95_halfwidth: f64,
    pub aggregate_fps: f64,
    /// Top of the utilization ranking in replicate 0.
    pub bottleneck: Utilization,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyResult {
    /// (streams, replicate) -> per-stream fps
    #[serde(serialize_with = "points_as_list")]
    pub points: BTreeMap<(usize, usize), Vec<StreamFps>>,
    pub summary: BTreeMap<usize, PointSummary>,
}

fn points_as_list<S: serde::Serializer>(
    points: &BTreeMap<(usize, usize), Vec<StreamFps>>,
    s: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Point<'a> {
        streams: usize,
        replicate: usize,
        fps: &'a [StreamFps],
    }
    s.collect_seq(points.iter().map(|(&(streams, replicate), fps)| Point {
        streams,
        replicate,
        fps,
    }))
}

impl StudyResult {
    pub fn mean_curve(&self) -> BTreeMap<usize, f64> {
        self.summary
            .iter()
            .map(|(&s, p)| (s, p.mean_fps_per_stream))
            .collect()
    }

    pub fn aggregate_curve(&self) -> BTreeMap<usize, f64> {
        self.summary
            .iter()
            .map(|(&s, p)| (s, p.aggregate_fps))
            .collect()
    }

    /// `streams,stream_id,fps` for replicate 0, then later replicates.
    pub fn to_fps_csv(&self) -> String {
        let mut out = String::from(metrics::FPS_CSV_HEADER);
        for (&(streams, _), fps) in &self.points {
            out.push_str(&metrics::fps_csv_rows(streams, fps));
        }
        out
    }
}

struct RunOutcome {
    fps: Vec<StreamFps>,
    bottleneck: Utilization,
}

fn run_point(
    spec: &FlowGraphSpec,
    cfg: &SimConfig,
    streams: usize,
    replicate: usize,
) -> Result<RunOutcome, ScenarioError> {
    let graph = spec.instantiate(streams)?;
    let cfg = SimConfig {
        seed: cfg.seed.wrapping_add(replicate as u64),
        ..cfg.clone()
    };
    let result = simulate(&graph, &cfg).map_err(|source| ScenarioError::Sim {
        streams,
        replicate,
        source,
    })?;
    let fps = metrics::fps_per_stream(&result, &cfg).map_err(|source| ScenarioError::Metrics {
        streams,
        replicate,
        source,
    })?;
    let bottleneck = detect_bottleneck(&result, &graph)
        .map_err(|source| ScenarioError::Sim {
            streams,
            replicate,
            source,
        })?
        .swap_remove(0);
    Ok(RunOutcome { fps, bottleneck })
}

/// Simulates every (stream count, replicate) pair, in parallel.
pub fn run_sweep(spec: &SweepSpec) -> Result<StudyResult, ScenarioError> {
    let counts = spec.normalized_counts()?;
    spec.base.validate().into_result()?;
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .flat_map(|&s| (0..spec.replications).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<((usize, usize), RunOutcome)> = jobs
        .par_iter()
        .map(|&(s, r)| run_point(&spec.base, &spec.cfg, s, r).map(|o| ((s, r), o)))
        .collect::<Result<_, _>>()?;

    let mut points = BTreeMap::new();
    let mut bottlenecks = BTreeMap::new();
    for ((s, r), o) in outcomes {
        if r == 0 {
            bottlenecks.insert(s, o.bottleneck);
        }
        points.insert((s, r), o.fps);
    }
    let summary = counts
        .iter()
        .map(|&s| {
            let means: Vec<f64> = (0..spec.replications)
                .map(|r| metrics::mean_fps(&points[&(s, r)]))
                .collect();
            let aggs: Vec<f64> = (0..spec.replications)
                .map(|r| metrics::aggregate_fps(&points[&(s, r)]))
                .collect();
            let (mean, ci) = mean_ci95(&means);
            let summary = PointSummary {
                streams: s,
                mean_fps_per_stream: mean,
                ci95_halfwidth: ci,
                aggregate_fps: aggs.iter().sum::<f64>() / aggs.len() as f64,
                bottleneck: bottlenecks.remove(&s).expect("replicate 0 ran"),
            };
            (s, summary)
        })
        .collect();
    Ok(StudyResult { points, summary })
}

fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Sweeps the base and the modified pipeline with paired seeds and reports
/// `baseline / variant` FPS per stream count.
pub fn run_ab_study(
    base: &FlowGraphSpec,
    modification: &Modification,
    sweep: &SweepSpec,
) -> Result<ComparisonReport, ScenarioError> {
    let variant = base.apply_modification(modification)?;
    let base_sweep = SweepSpec {
        base: base.clone(),
        ..sweep.clone()
    };
    let variant_sweep = SweepSpec {
        base: variant,
        ..sweep.clone()
    };
    let a = run_sweep(&base_sweep)?;
    let b = run_sweep(&variant_sweep)?;
    Ok(slowdown_curve(
        "baseline",
        &a.mean_curve(),
        "modified",
        &b.mean_curve(),
    )?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub ideal_speedup: Option<f64>,
    pub real_speedup: Option<f64>,
}

/// Ideal: the node's service time becomes zero. Real: it becomes
/// `measured_overhead`. Both are compared against the unmodified pipeline at
/// the same stream count and seed.
pub fn run_optimization_study(
    base: &FlowGraphSpec,
    node: &str,
    ideal: bool,
    measured_overhead: Option<&ServiceDistribution>,
    streams: usize,
    cfg: &SimConfig,
) -> Result<OptimizationResult, ScenarioError> {
    if !ideal && measured_overhead.is_none() {
        return Err(ScenarioError::InvalidSweep(
            "real optimization study needs a measured overhead distribution".into(),
        ));
    }
    if base.node(node).is_none() {
        return Err(crate::error::GraphError::UnknownNode(node.into()).into());
    }
    let baseline = run_point(base, cfg, streams, 0)?.fps;
    let mut out = OptimizationResult::default();
    if ideal {
        let spec = base.apply_modification(&Modification::ZeroNode { node: node.into() })?;
        out.ideal_speedup = Some(speedup(&baseline, &run_point(&spec, cfg, streams, 0)?.fps)?);
    }
    if let Some(overhead) = measured_overhead {
        let spec = base.apply_modification(&Modification::SetDistribution {
            node: node.into(),
            distribution: overhead.clone(),
        })?;
        out.real_speedup = Some(speedup(&baseline, &run_point(&spec, cfg, streams, 0)?.fps)?);
    }
    Ok(out)
}

/// Study file: `{pipeline, sweep: {streams, replications, seed}, modification?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub pipeline: PathBuf,
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modification: Option<Modification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub streams: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_replications() -> usize {
    5
}

impl StudyFile {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
        let mut study: StudyFile =
            serde_json::from_str(&text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        if study.pipeline.is_relative() {
            if let Some(dir) = path.parent() {
                study.pipeline = dir.join(&study.pipeline);
            }
        }
        Ok(study)
    }

    pub fn sweep_spec(&self, cfg: &SimConfig) -> Result<SweepSpec, ScenarioError> {
        let base = FlowGraphSpec::load(&self.pipeline)?;
        let cfg = SimConfig {
            seed: self.sweep.seed,
            ..cfg.clone()
        };
        Ok(SweepSpec::new(
            base,
            cfg,
            &self.sweep.streams,
            self.sweep.replications,
        ))
    }
}

/// Measured curve: CSV `streams,fps` with a header row.
pub fn parse_measured(text: &str) -> Result<BTreeMap<usize, f64>, ScenarioError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "streams,fps" => {}
        _ => {
            return Err(ScenarioError::Format(
                "measured file needs header `streams,fps`".into(),
            ))
        }
    }
    let mut out = BTreeMap::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || ScenarioError::Format(format!("measured file line {}: {line:?}", i + 1));
        let (s, f) = line.split_once(',').ok_or_else(bad)?;
        let s: usize = s.trim().parse().map_err(|_| bad())?;
        let f: f64 = f.trim().parse().map_err(|_| bad())?;
        if !f.is_finite() || f < 0.0 {
            return Err(bad());
        }
        out.insert(s, f);
    }
    Ok(out)
}

pub fn load_measured(path: &Path) -> Result<BTreeMap<usize, f64>, ScenarioError> {
    let text =
        fs::read_to_string(path).map_err(|e| ScenarioError::Io(path.display().to_string(), e))?;
    parse_measured(&text)
}
