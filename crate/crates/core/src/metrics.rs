//! Throughput metrics: per-stream FPS with warm-up exclusion, speedup and
//! slowdown ratios, prediction error.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::engine::{SimConfig, SimResult, Utilization};
use crate::error::MetricsError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StreamFps {
    pub stream_id: usize,
    pub fps: f64,
    pub frames_counted: usize,
}

/// Drops the first `ceil(warmup_fraction * F)` completions of each stream and
/// divides the remaining count by the time since the last dropped completion
/// (or since the run started when nothing is dropped).
pub fn fps_per_stream(result: &SimResult, cfg: &SimConfig) -> Result<Vec<StreamFps>, MetricsError> {
    let skip = cfg.warmup_frames();
    result
        .per_stream_completion
        .iter()
        .enumerate()
        .map(|(stream, times)| {
            let counted = times.len().saturating_sub(skip);
            if counted < 2 {
                return Err(MetricsError::TooFewCompletions { stream, counted });
            }
            let origin = if skip == 0 {
                result.start_time
            } else {
                times[skip - 1]
            };
            let last = *times.last().expect("counted >= 2");
            if last <= origin {
                return Err(MetricsError::EmptyWindow { stream });
            }
            let window_s = (last - origin) as f64 / 1e6;
            Ok(StreamFps {
                stream_id: stream,
                fps: counted as f64 / window_s,
                frames_counted: counted,
            })
        })
        .collect()
}

pub fn mean_fps(fps: &[StreamFps]) -> f64 {
    if fps.is_empty() {
        return 0.0;
    }
    aggregate_fps(fps) / fps.len() as f64
}

/// System throughput: the sum over streams.
pub fn aggregate_fps(fps: &[StreamFps]) -> f64 {
    fps.iter().map(|f| f.fps).sum()
}

/// `mean(variant) / mean(baseline)`.
pub fn speedup(baseline: &[StreamFps], variant: &[StreamFps]) -> Result<f64, MetricsError> {
    if baseline.len() != variant.len() {
        return Err(MetricsError::MismatchedStreams(
            baseline.len(),
            variant.len(),
        ));
    }
    let base = mean_fps(baseline);
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(mean_fps(variant) / base)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    /// baseline / variant: above 1 means the variant is slower.
    Slowdown,
    /// variant / baseline: above 1 means the variant is faster.
    Speedup,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonPoint {
    pub x: usize,
    pub baseline_fps: f64,
    pub variant_fps: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub baseline_label: String,
    pub variant_label: String,
    pub ratio_kind: RatioKind,
    pub per_point: Vec<ComparisonPoint>,
}

impl ComparisonReport {
    pub fn ratio_at(&self, x: usize) -> Option<f64> {
        self.per_point.iter().find(|p| p.x == x).map(|p| p.ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("streams,baseline_fps,variant_fps,ratio\n");
        for p in &self.per_point {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.x, p.baseline_fps, p.variant_fps, p.ratio
            );
        }
        out
    }
}

/// Per stream count, `baseline / variant` FPS.
pub fn slowdown_curve(
    baseline_label: &str,
    baseline: &BTreeMap<usize, f64>,
    variant_label: &str,
    variant: &BTreeMap<usize, f64>,
) -> Result<ComparisonReport, MetricsError> {
    if !baseline.keys().eq(variant.keys()) {
        return Err(MetricsError::MismatchedAxes);
    }
    if baseline.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_point = baseline
        .iter()
        .zip(variant.values())
        .map(|((&x, &b), &v)| {
            if v == 0.0 {
                return Err(MetricsError::ZeroBaseline);
            }
            Ok(ComparisonPoint {
                x,
                baseline_fps: b,
                variant_fps: v,
                ratio: b / v,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(ComparisonReport {
        baseline_label: baseline_label.into(),
        variant_label: variant_label.into(),
        ratio_kind: RatioKind::Slowdown,
        per_point,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictionError {
    pub mean: f64,
    pub max: f64,
}

/// Mean over streams of `|predicted - measured| / measured`, matched by stream id.
pub fn prediction_error(
    predicted: &[StreamFps],
    measured: &[StreamFps],
) -> Result<f64, MetricsError> {
    prediction_error_stats(predicted, measured).map(|e| e.mean)
}

pub fn prediction_error_stats(
    predicted: &[StreamFps],
    measured: &[StreamFps],
) -> Result<PredictionError, MetricsError> {
    let p: BTreeMap<usize, f64> = predicted.iter().map(|s| (s.stream_id, s.fps)).collect();
    let m: BTreeMap<usize, f64> = measured.iter().map(|s| (s.stream_id, s.fps)).collect();
    if !p.keys().eq(m.keys()) || p.len() != predicted.len() || m.len() != measured.len() {
        return Err(MetricsError::MismatchedStreams(
            predicted.len(),
            measured.len(),
        ));
    }
    relative_errors(&p, &m)
}

/// Same error measure over a sweep, keyed by stream count.
pub fn sweep_prediction_error(
    predicted: &BTreeMap<usize, f64>,
    measured: &BTreeMap<usize, f64>,
) -> Result<PredictionError, MetricsError> {
    if !predicted.keys().eq(measured.keys()) {
        return Err(MetricsError::MismatchedAxes);
    }
    relative_errors(predicted, measured)
}

fn relative_errors(
    predicted: &BTreeMap<usize, f64>,
    measured: &BTreeMap<usize, f64>,
) -> Result<PredictionError, MetricsError> {
    if measured.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for ((&k, &p), &m) in predicted.iter().zip(measured.values()) {
        if m == 0.0 {
            return Err(MetricsError::ZeroMeasured(k));
        }
        let e = (p - m).abs() / m;
        sum += e;
        max = max.max(e);
    }
    Ok(PredictionError {
        mean: sum / measured.len() as f64,
        max,
    })
}

/// `streams,stream_id,fps` rows (no header).
pub fn fps_csv_rows(streams: usize, fps: &[StreamFps]) -> String {
    let mut out = String::new();
    for f in fps {
        let _ = writeln!(out, "{streams},{},{}", f.stream_id, f.fps);
    }
    out
}

pub const FPS_CSV_HEADER: &str = "streams,stream_id,fps\n";

/// `{mean_fps, aggregate_fps, utilization: {entity: fraction}}`
pub fn summary_json(fps: &[StreamFps], utilization: &[Utilization]) -> Value {
    let util: serde_json::Map<String, Value> = utilization
        .iter()
        .map(|u| (u.entity.to_string(), json!(u.utilization)))
        .collect();
    json!({
        "mean_fps": mean_fps(fps),
        "aggregate_fps": aggregate_fps(fps),
        "per_stream": fps,
        "utilization": util,
    })
}
