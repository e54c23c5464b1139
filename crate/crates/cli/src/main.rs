use std::collections::BTreeMap;
use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hetsim::chart::{render_svg, ChartKind, Labels, Series};
use hetsim::dist::NamedDistribution;
use hetsim::engine::{detect_bottleneck, simulate, SimConfig};
use hetsim::graph::{FlowGraphSpec, Modification};
use hetsim::metrics::{self, sweep_prediction_error};
use hetsim::scenarios::{
    load_measured, run_ab_study, run_optimization_study, run_sweep, StudyFile, StudyResult,
    SweepSpec,
};
use hetsim::trace::{build_distributions, load_trace};

type Res<T> = Result<T, Box<dyn Error>>;

/// Simulate CPU/GPU flow-graph pipelines and predict per-stream throughput.
#[derive(Parser)]
#[command(name = "hetsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a pipeline file; prints `ok` or the list of violations.
    Validate {
        /// Pipeline spec (JSON).
        #[arg(long)]
        pipeline: PathBuf,
    },
    /// Turn a profiling trace into per-node empirical distributions.
    Ingest(IngestArgs),
    /// Simulate one stream count and report FPS and utilization.
    Run(RunArgs),
    /// FPS per stream over a range of stream counts.
    Sweep(SweepArgs),
    /// Slowdown of a modified pipeline against the original.
    Ab(AbArgs),
    /// Ideal and measured speedup of speeding up one node.
    Optimize(OptimizeArgs),
    /// Prediction error of simulated FPS against measured FPS.
    Compare(CompareArgs),
    /// Markdown report: throughput, bottleneck ranking and queue depths.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct SimArgs {
    /// CPU worker threads.
    #[arg(long, default_value_t = 12)]
    workers: usize,
    /// Frames per stream.
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    /// Base seed; replicate r uses seed + r.
    #[arg(long, env = "HETSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// Fraction of leading frames per stream excluded from FPS.
    #[arg(long, default_value_t = 0.10)]
    warmup: f64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            cpu_workers: self.workers,
            frames_per_stream: self.frames,
            seed: self.seed,
            warmup_fraction: self.warmup,
            max_sim_time: None,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Trace CSV with header `node,stream,start_us,end_us`.
    trace: PathBuf,
    /// A `.json` file receives one combined map; any other path is a
    /// directory that receives one `<node>.json` file per node.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline spec (JSON).
    #[arg(long)]
    pipeline: PathBuf,
    /// Number of video streams.
    #[arg(long, default_value_t = 1)]
    streams: usize,
    /// Modification applied before simulating (JSON).
    #[arg(long)]
    modification: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Summary JSON: per-stream FPS and utilization.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Event log CSV.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Pipeline spec (JSON).
    #[arg(long, required_unless_present = "study")]
    pipeline: Option<PathBuf>,
    /// Stream counts: `a..b` (inclusive), comma lists, or both.
    #[arg(long, value_parser = parse_streams, required_unless_present = "study")]
    streams: Option<StreamList>,
    /// Study file supplying pipeline, streams, replications, seed and modification.
    #[arg(long, conflicts_with_all = ["pipeline", "streams"])]
    study: Option<PathBuf>,
    /// Modification applied before sweeping (JSON).
    #[arg(long)]
    modification: Option<PathBuf>,
    /// Replicates per stream count.
    #[arg(long, default_value_t = 5)]
    replications: usize,
    #[command(flatten)]
    sim: SimArgs,
    /// Measured CSV `streams,fps`; adds a measured series and the prediction error.
    #[arg(long)]
    measured: Option<PathBuf>,
    /// Summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG chart of FPS per stream.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct AbArgs {
    /// Pipeline spec (JSON).
    #[arg(long, required_unless_present = "study")]
    pipeline: Option<PathBuf>,
    /// Modification to compare against the original (JSON).
    #[arg(long, required_unless_present = "study")]
    modification: Option<PathBuf>,
    /// Stream counts: `a..b` (inclusive), comma lists, or both.
    #[arg(long, value_parser = parse_streams, required_unless_present = "study")]
    streams: Option<StreamList>,
    /// Study file supplying pipeline, streams, replications, seed and modification.
    #[arg(long, conflicts_with_all = ["pipeline", "streams", "modification"])]
    study: Option<PathBuf>,
    /// Replicates per stream count.
    #[arg(long, default_value_t = 5)]
    replications: usize,
    #[command(flatten)]
    sim: SimArgs,
    /// Slowdown CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG bar chart of the slowdown.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Pipeline spec (JSON).
    #[arg(long)]
    pipeline: PathBuf,
    /// Node whose service time is replaced.
    #[arg(long)]
    node: String,
    /// Also evaluate a zero service time.
    #[arg(long)]
    ideal: bool,
    /// Distribution file with the measured cost of the optimized node.
    #[arg(long, required_unless_present = "ideal")]
    overhead: Option<PathBuf>,
    /// Number of video streams.
    #[arg(long, default_value_t = 1)]
    streams: usize,
    #[command(flatten)]
    sim: SimArgs,
    /// Result JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Pipeline spec (JSON).
    #[arg(long)]
    pipeline: PathBuf,
    /// Measured CSV `streams,fps`.
    #[arg(long)]
    measured: PathBuf,
    /// Stream counts to simulate; defaults to those in the measured file.
    #[arg(long, value_parser = parse_streams)]
    streams: Option<StreamList>,
    /// Replicates per stream count.
    #[arg(long, default_value_t = 5)]
    replications: usize,
    #[command(flatten)]
    sim: SimArgs,
    /// Per-point CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG chart with simulated and measured series.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Pipeline spec (JSON).
    #[arg(long)]
    pipeline: PathBuf,
    /// Number of video streams.
    #[arg(long, default_value_t = 1)]
    streams: usize,
    #[command(flatten)]
    sim: SimArgs,
    /// Markdown file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
struct StreamList(Vec<usize>);

/// `1..12`, `1,2,4`, `1..4,8,16`.
fn parse_streams(s: &str) -> Result<StreamList, String> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let num = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad stream count {t:?}"))
        };
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.contains(&0) {
        return Err("stream counts must be at least 1".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(StreamList(out))
}

/// Files are staged next to their targets and renamed only once all of them
/// were written, so a failure leaves no partial outputs behind.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: Option<&PathBuf>, bytes: impl Into<Vec<u8>>) {
        if let Some(p) = path {
            self.0.push((p.clone(), bytes.into()));
        }
    }

    fn commit(self) -> Res<()> {
        let mut staged = Vec::new();
        let result = (|| -> Res<()> {
            for (path, bytes) in &self.0 {
                let name = path
                    .file_name()
                    .ok_or_else(|| format!("{}: not a file path", path.display()))?;
                let tmp = path.with_file_name(format!(
                    ".{}.tmp{}",
                    name.to_string_lossy(),
                    std::process::id()
                ));
                let mut f =
                    fs::File::create(&tmp).map_err(|e| format!("{}: {e}", path.display()))?;
                staged.push(tmp.clone());
                f.write_all(bytes)?;
                f.sync_all()?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for tmp in &staged {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (tmp, (path, _)) in staged.iter().zip(&self.0) {
            fs::rename(tmp, path).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        Ok(())
    }
}

fn load_pipeline(path: &Path, modification: Option<&PathBuf>) -> Res<FlowGraphSpec> {
    let spec = FlowGraphSpec::load(path)?;
    spec.validate().into_result()?;
    match modification {
        Some(m) => Ok(spec.apply_modification(&Modification::load(m)?)?),
        None => Ok(spec),
    }
}

fn fps_chart(series: &[Series], kind: ChartKind, y: &str) -> Res<String> {
    let labels = Labels {
        title: String::new(),
        x: "video streams".into(),
        y: y.into(),
    };
    Ok(render_svg(series, kind, &labels)?)
}

fn sim_series(study: &StudyResult) -> Series {
    let x = study.summary.keys().map(|&s| s as f64).collect();
    let y = study
        .summary
        .values()
        .map(|p| p.mean_fps_per_stream)
        .collect();
    let ci = study.summary.values().map(|p| p.ci95_halfwidth).collect();
    Series::new("simulated", x, y).with_ci(ci)
}

fn measured_series(measured: &BTreeMap<usize, f64>) -> Series {
    Series::new(
        "measured",
        measured.keys().map(|&s| s as f64).collect(),
        measured.values().copied().collect(),
    )
}

fn cmd_validate(pipeline: &Path) -> Res<()> {
    FlowGraphSpec::load(pipeline)?.validate().into_result()?;
    println!("ok");
    Ok(())
}

fn cmd_ingest(a: &IngestArgs) -> Res<()> {
    let bundle = build_distributions(&load_trace(&a.trace)?)?;
    let mut out = Outputs::default();
    if a.out.extension().is_some_and(|e| e == "json") {
        out.add(Some(&a.out), bundle.to_combined_json() + "\n");
    } else {
        fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
        for (name, dist) in &bundle.per_node {
            if name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(format!("node name {name:?} is not a file name").into());
            }
            let named = NamedDistribution {
                name: name.clone(),
                dist: dist.clone(),
            };
            let text = serde_json::to_string_pretty(&named.to_json())? + "\n";
            out.add(Some(&a.out.join(format!("{name}.json"))), text);
        }
    }
    out.commit()?;
    for (name, dist) in &bundle.per_node {
        println!(
            "node={name} samples={} mean_us={:.1}",
            bundle.sample_counts[name],
            dist.mean()
        );
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Res<()> {
    let spec = load_pipeline(&a.pipeline, a.modification.as_ref())?;
    let cfg = a.sim.config();
    let graph = spec.instantiate(a.streams)?;
    let result = simulate(&graph, &cfg)?;
    let fps = metrics::fps_per_stream(&result, &cfg)?;
    let util = detect_bottleneck(&result, &graph)?;
    let mut summary = metrics::summary_json(&fps, &util);
    summary["simulation"] = result.summary_json();
    summary["config"] = serde_json::to_value(&cfg)?;

    let mut out = Outputs::default();
    out.add(
        a.out.as_ref(),
        serde_json::to_string_pretty(&summary)? + "\n",
    );
    out.add(a.events.as_ref(), result.event_csv());
    out.commit()?;
    println!(
        "mean_fps={:.3} aggregate_fps={:.3} bottleneck={} utilization={:.3}",
        metrics::mean_fps(&fps),
        metrics::aggregate_fps(&fps),
        util[0].entity,
        util[0].utilization
    );
    Ok(())
}

fn sweep_from_args(
    pipeline: Option<&PathBuf>,
    streams: Option<&StreamList>,
    study: Option<&PathBuf>,
    modification: Option<&PathBuf>,
    replications: usize,
    sim: &SimArgs,
) -> Res<(SweepSpec, Option<Modification>)> {
    if let Some(path) = study {
        let study = StudyFile::load(path)?;
        let sweep = study.sweep_spec(&sim.config())?;
        let m = match modification {
            Some(p) => Some(Modification::load(p)?),
            None => study.modification,
        };
        return Ok((sweep, m));
    }
    let base = load_pipeline(pipeline.expect("clap requires it"), None)?;
    let m = modification.map(|p| Modification::load(p)).transpose()?;
    let counts = &streams.expect("clap requires it").0;
    Ok((SweepSpec::new(base, sim.config(), counts, replications), m))
}

fn cmd_sweep(a: &SweepArgs) -> Res<()> {
    let (mut sweep, m) = sweep_from_args(
        a.pipeline.as_ref(),
        a.streams.as_ref(),
        a.study.as_ref(),
        a.modification.as_ref(),
        a.replications,
        &a.sim,
    )?;
    if let Some(m) = m {
        sweep.base = sweep.base.apply_modification(&m)?;
    }
    let study = run_sweep(&sweep)?;
    let measured = a.measured.as_ref().map(|p| load_measured(p)).transpose()?;

    let mut csv = String::from(
        "streams,fps_per_stream,ci95,aggregate_fps,bottleneck,bottleneck_utilization\n",
    );
    for p in study.summary.values() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            p.streams,
            p.mean_fps_per_stream,
            p.ci95_halfwidth,
            p.aggregate_fps,
            p.bottleneck.entity,
            p.bottleneck.utilization
        );
    }
    let mut out = Outputs::default();
    out.add(a.out.as_ref(), csv);
    if a.chart.is_some() {
        let mut series = vec![sim_series(&study)];
        series.extend(measured.as_ref().map(measured_series));
        out.add(
            a.chart.as_ref(),
            fps_chart(&series, ChartKind::Line, "FPS per stream")?,
        );
    }
    let err = match &measured {
        Some(m) => {
            let predicted: BTreeMap<usize, f64> = study
                .mean_curve()
                .into_iter()
                .filter(|(s, _)| m.contains_key(s))
                .collect();
            let m: BTreeMap<usize, f64> = m
                .iter()
                .filter(|(s, _)| predicted.contains_key(s))
                .map(|(&s, &f)| (s, f))
                .collect();
            Some(sweep_prediction_error(&predicted, &m)?)
        }
        None => None,
    };
    out.commit()?;
    for p in study.summary.values() {
        println!(
            "streams={} fps_per_stream={:.3} ci95={:.3} aggregate_fps={:.3} bottleneck={}",
            p.streams,
            p.mean_fps_per_stream,
            p.ci95_halfwidth,
            p.aggregate_fps,
            p.bottleneck.entity
        );
    }
    if let Some(e) = err {
        println!("mean_error={:.6} max_error={:.6}", e.mean, e.max);
    }
    Ok(())
}

fn cmd_ab(a: &AbArgs) -> Res<()> {
    let (sweep, m) = sweep_from_args(
        a.pipeline.as_ref(),
        a.streams.as_ref(),
        a.study.as_ref(),
        a.modification.as_ref(),
        a.replications,
        &a.sim,
    )?;
    let m = m.ok_or("the study file has no modification")?;
    let report = run_ab_study(&sweep.base, &m, &sweep)?;
    let mut out = Outputs::default();
    out.add(a.out.as_ref(), report.to_csv());
    if a.chart.is_some() {
        let series = Series::new(
            "slowdown (baseline / modified)",
            report.per_point.iter().map(|p| p.x as f64).collect(),
            report.per_point.iter().map(|p| p.ratio).collect(),
        );
        out.add(
            a.chart.as_ref(),
            fps_chart(&[series], ChartKind::Bar, "slowdown")?,
        );
    }
    out.commit()?;
    for p in &report.per_point {
        println!(
            "streams={} baseline_fps={:.3} modified_fps={:.3} slowdown={:.4}",
            p.x, p.baseline_fps, p.variant_fps, p.ratio
        );
    }
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs) -> Res<()> {
    let spec = load_pipeline(&a.pipeline, None)?;
    let overhead = a
        .overhead
        .as_ref()
        .map(|p| NamedDistribution::load(p).map(|n| n.dist))
        .transpose()?;
    let r = run_optimization_study(
        &spec,
        &a.node,
        a.ideal,
        overhead.as_ref(),
        a.streams,
        &a.sim.config(),
    )?;
    let mut out = Outputs::default();
    out.add(
        a.out.as_ref(),
        serde_json::to_string_pretty(&json!({
            "node": a.node,
            "streams": a.streams,
            "ideal_speedup": r.ideal_speedup,
            "real_speedup": r.real_speedup,
        }))? + "\n",
    );
    out.commit()?;
    if let Some(s) = r.ideal_speedup {
        println!("ideal_speedup={s:.4}");
    }
    if let Some(s) = r.real_speedup {
        println!("real_speedup={s:.4}");
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Res<()> {
    let base = load_pipeline(&a.pipeline, None)?;
    let measured = load_measured(&a.measured)?;
    let counts = match &a.streams {
        Some(s) => s.0.clone(),
        None => measured.keys().copied().collect(),
    };
    let study = run_sweep(&SweepSpec::new(
        base,
        a.sim.config(),
        &counts,
        a.replications,
    ))?;
    let predicted = study.mean_curve();
    let err = sweep_prediction_error(&predicted, &measured)?;

    let mut csv = String::from("streams,predicted_fps,measured_fps,relative_error\n");
    for (s, p) in &predicted {
        let m = measured[s];
        let _ = writeln!(csv, "{s},{p},{m},{}", (p - m).abs() / m);
    }
    let mut out = Outputs::default();
    out.add(a.out.as_ref(), csv);
    if a.chart.is_some() {
        let series = [sim_series(&study), measured_series(&measured)];
        out.add(
            a.chart.as_ref(),
            fps_chart(&series, ChartKind::Line, "FPS per stream")?,
        );
    }
    out.commit()?;
    println!("mean_error={:.6} max_error={:.6}", err.mean, err.max);
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Res<()> {
    let spec = load_pipeline(&a.pipeline, None)?;
    let cfg = a.sim.config();
    let graph = spec.instantiate(a.streams)?;
    let result = simulate(&graph, &cfg)?;
    let fps = metrics::fps_per_stream(&result, &cfg)?;
    let util = detect_bottleneck(&result, &graph)?;

    let mut md = String::new();
    let _ = writeln!(md, "# Simulation report: {}\n", a.pipeline.display());
    let _ = writeln!(
        md,
        "{} streams, {} workers, {} frames per stream, seed {}, warm-up {}.\n",
        a.streams, cfg.cpu_workers, cfg.frames_per_stream, cfg.seed, cfg.warmup_fraction
    );
    let _ = writeln!(md, "## Throughput\n");
    let _ = writeln!(md, "| stream | FPS |\n|---|---|");
    for f in &fps {
        let _ = writeln!(md, "| {} | {:.3} |", f.stream_id, f.fps);
    }
    let _ = writeln!(
        md,
        "\nMean FPS per stream {:.3}, aggregate {:.3}.\n",
        metrics::mean_fps(&fps),
        metrics::aggregate_fps(&fps)
    );
    let _ = writeln!(md, "## Utilization\n");
    let _ = writeln!(md, "| entity | busy |\n|---|---|");
    for u in &util {
        let _ = writeln!(md, "| {} | {:.1}% |", u.entity, 100.0 * u.utilization);
    }
    let _ = writeln!(md, "\n## Queues\n");
    let _ = writeln!(md, "| node | max depth | dequeued |\n|---|---|---|");
    for q in &result.queues {
        let _ = writeln!(md, "| {} | {} | {} |", q.node, q.max_depth, q.dequeued);
    }
    match &a.out {
        Some(p) => {
            let mut out = Outputs::default();
            out.add(Some(p), md);
            out.commit()?;
        }
        None => print!("{md}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Validate { pipeline } => cmd_validate(&pipeline),
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Ab(a) => cmd_ab(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_ranges() {
        assert_eq!(parse_streams("1..4").unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!(parse_streams("1,2,8").unwrap().0, vec![1, 2, 8]);
        assert_eq!(parse_streams("8,1..3,2").unwrap().0, vec![1, 2, 3, 8]);
        assert_eq!(parse_streams("6").unwrap().0, vec![6]);
        assert!(parse_streams("0..2").is_err());
        assert!(parse_streams("4..2").is_err());
        assert!(parse_streams("a").is_err());
        assert!(parse_streams("").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
