//! Discrete-event kernel for instantiated flow graphs.
//!
//! Every node instance runs one or more logical processes:
//!
//! * source: for each frame, take a worker, hold it for a sampled time, emit,
//!   release.
//! * basic / sink: pop an input message, take a worker, hold it for a sampled
//!   time, push to successors (sinks record the completion), release.
//! * exclusive: pop an input, take a worker, lock the resource, give the worker
//!   back, hold the resource for a sampled time, release it, take a worker
//!   again, push to successors, release.
//!
//! Shared exclusive nodes run one process per unit of resource capacity, all
//! pulling from a single queue fed by every stream.
//!
//! Time is integer microseconds. Simultaneous events fire in scheduling order
//! (global sequence number), and worker/resource waiters are served FIFO, so a
//! run is a pure function of `(graph, config)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::dist::{RngState, ServiceDistribution};
use crate::error::SimError;
use crate::graph::{JoinPolicy, NodeKind, RuntimeGraph};

/// Simulated time in microseconds.
pub type SimTime = u64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub cpu_workers: usize,
    pub frames_per_stream: usize,
    pub seed: u64,
    pub warmup_fraction: f64,
    /// Stop (and flag the result as truncated) once the next event lies past this time.
    pub max_sim_time: Option<SimTime>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cpu_workers: 12,
            frames_per_stream: 1000,
            seed: 0,
            warmup_fraction: 0.10,
            max_sim_time: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.cpu_workers < 1 {
            return Err(SimError::InvalidConfig("cpu_workers must be >= 1".into()));
        }
        if self.frames_per_stream < 1 {
            return Err(SimError::InvalidConfig(
                "frames_per_stream must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "warmup_fraction {} outside [0, 1)",
                self.warmup_fraction
            )));
        }
        Ok(())
    }

    /// Number of leading completions per stream excluded from measurement.
    pub fn warmup_frames(&self) -> usize {
        (self.warmup_fraction * self.frames_per_stream as f64).ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MsgDequeued,
    CoreAcquired,
    CoreReleased,
    ResourceAcquired,
    ResourceReleased,
    ServiceStarted,
    ServiceFinished,
    MsgEmitted,
    FrameCompleted,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MsgDequeued => "msg_dequeued",
            EventKind::CoreAcquired => "core_acquired",
            EventKind::CoreReleased => "core_released",
            EventKind::ResourceAcquired => "resource_acquired",
            EventKind::ResourceReleased => "resource_released",
            EventKind::ServiceStarted => "service_started",
            EventKind::ServiceFinished => "service_finished",
            EventKind::MsgEmitted => "msg_emitted",
            EventKind::FrameCompleted => "frame_completed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log line. `node` indexes [`SimResult::node_names`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub time: SimTime,
    pub node: u32,
    pub kind: EventKind,
    pub stream: u32,
    pub frame: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueueStat {
    pub node: String,
    pub max_depth: usize,
    pub dequeued: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResourceBusy {
    pub name: String,
    pub capacity: usize,
    pub busy_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    #[serde(skip)]
    pub events: Vec<EventRecord>,
    pub node_names: Vec<String>,
    pub start_time: SimTime,
    pub end_time: SimTime,
    pub streams: usize,
    pub frames_per_stream: usize,
    pub cpu_workers: usize,
    /// Per stream, the times at which frames finished at every sink, in
    /// completion order.
    pub per_stream_completion: Vec<Vec<SimTime>>,
    pub worker_busy_us: u64,
    pub resource_busy: Vec<ResourceBusy>,
    pub queues: Vec<QueueStat>,
    /// Completion time after which every stream is past its warm-up frames.
    pub warmup_end: SimTime,
    /// Set when `max_sim_time` stopped the run early.
    pub truncated: bool,
}

impl SimResult {
    pub fn node_name(&self, rec: &EventRecord) -> &str {
        &self.node_names[rec.node as usize]
    }

    /// `time_us,node,kind,stream,frame` with a header row.
    pub fn write_event_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_us,node,kind,stream,frame")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.time,
                self.node_name(e),
                e.kind,
                e.stream,
                e.frame
            )?;
        }
        Ok(())
    }

    pub fn event_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_event_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("result serializes")
    }
}

#[derive(Clone, Debug)]
struct Message {
    stream: u32,
    frame: u32,
    #[allow(dead_code)]
    created_at: SimTime,
    /// (node instance, completion time), time ordered
    provenance: Vec<(u32, SimTime)>,
}

impl Message {
    fn merge(parts: Vec<Message>) -> Message {
        let mut it = parts.into_iter();
        let mut out = it.next().expect("join has at least one part");
        for m in it {
            out.created_at = out.created_at.min(m.created_at);
            out.provenance.extend(m.provenance);
        }
        out.provenance.sort_by_key(|&(n, t)| (t, n));
        out.provenance.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Purpose {
    Run,
    Emit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    WaitWorker(Purpose),
    WaitResource,
    Service,
    Done,
}

#[derive(Debug)]
struct Proc {
    instance: usize,
    kind: NodeKind,
    phase: Phase,
    msg: Option<Message>,
    /// (stream, frame) of the message being worked on, kept after emission
    tag: (u32, u32),
    rng: RngState,
    next_frame: u32,
    worker_since: Option<SimTime>,
    resource_since: Option<SimTime>,
}

#[derive(Debug, Default)]
struct Port {
    ready: VecDeque<Message>,
    /// all_of joins: (stream, frame) -> per-predecessor FIFO
    pending: BTreeMap<(u32, u32), Vec<VecDeque<Message>>>,
    max_depth: usize,
    dequeued: u64,
}

#[derive(Debug)]
enum Ev {
    ServiceDone(usize),
    WorkerGranted(usize),
    ResourceGranted(usize),
    Deliver {
        to: usize,
        slot: usize,
        msg: Message,
    },
}

struct Pool {
    free: usize,
    waiters: VecDeque<usize>,
}

struct Sim<'g> {
    g: &'g RuntimeGraph,
    cfg: &'g SimConfig,
    now: SimTime,
    seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: BTreeMap<u64, Ev>,
    procs: Vec<Proc>,
    procs_of: Vec<Vec<usize>>,
    ports: Vec<Port>,
    dists: Vec<&'g ServiceDistribution>,
    workers: Pool,
    resources: Vec<Pool>,
    resource_busy: Vec<u64>,
    worker_busy: u64,
    edge_rngs: BTreeMap<(usize, usize, u32), RngState>,
    events: Vec<EventRecord>,
    sink_classes: usize,
    sink_frames: Vec<BTreeSet<u32>>,
    frame_sinks: Vec<BTreeMap<u32, usize>>,
    completions: Vec<Vec<SimTime>>,
}

/// Runs the graph until every stream has completed all frames.
pub fn simulate(graph: &RuntimeGraph, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut sim = Sim::new(graph, cfg);
    sim.start();
    let truncated = sim.run();
    sim.finish(truncated)
}

pub(crate) fn ticks(us: f64) -> SimTime {
    // round half up; `as` saturates for huge values
    (us + 0.5).floor() as SimTime
}

impl<'g> Sim<'g> {
    fn new(g: &'g RuntimeGraph, cfg: &'g SimConfig) -> Self {
        let dists = g
            .classes
            .iter()
            .map(|c| &g.spec.distributions[&c.distribution])
            .collect();
        let mut procs = Vec::new();
        let mut procs_of = vec![Vec::new(); g.instances.len()];
        for (i, inst) in g.instances.iter().enumerate() {
            let class = &g.classes[inst.class];
            let servers = match (inst.stream, class.resource) {
                (None, Some(r)) => g.spec.resources[r].capacity,
                _ => 1,
            };
            for k in 0..servers {
                let label = if k == 0 {
                    inst.name.clone()
                } else {
                    format!("{}/{k}", inst.name)
                };
                procs_of[i].push(procs.len());
                procs.push(Proc {
                    instance: i,
                    kind: class.kind,
                    phase: Phase::Idle,
                    msg: None,
                    tag: (0, 0),
                    rng: RngState::for_label(cfg.seed, &label),
                    next_frame: 0,
                    worker_since: None,
                    resource_since: None,
                });
            }
        }
        let resources = g
            .spec
            .resources
            .iter()
            .map(|r| Pool {
                free: r.capacity,
                waiters: VecDeque::new(),
            })
            .collect();
        let sink_classes = g
            .classes
            .iter()
            .filter(|c| c.kind == NodeKind::Sink)
            .count();
        Self {
            g,
            cfg,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            pending: BTreeMap::new(),
            procs,
            procs_of,
            ports: (0..g.instances.len()).map(|_| Port::default()).collect(),
            dists,
            workers: Pool {
                free: cfg.cpu_workers,
                waiters: VecDeque::new(),
            },
            resources,
            resource_busy: vec![0; g.spec.resources.len()],
            worker_busy: 0,
            edge_rngs: BTreeMap::new(),
            events: Vec::new(),
            sink_classes,
            sink_frames: vec![BTreeSet::new(); g.instances.len()],
            frame_sinks: vec![BTreeMap::new(); g.streams],
            completions: vec![Vec::new(); g.streams],
        }
    }

    fn schedule(&mut self, at: SimTime, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((at, seq)));
        self.pending.insert(seq, ev);
    }

    fn log(&mut self, p: usize, kind: EventKind, stream: u32, frame: u32) {
        self.events.push(EventRecord {
            time: self.now,
            node: self.procs[p].instance as u32,
            kind,
            stream,
            frame,
        });
    }

    fn log_msg(&mut self, p: usize, kind: EventKind) {
        let (stream, frame) = self.procs[p].tag;
        self.log(p, kind, stream, frame);
    }

    fn class_of(&self, p: usize) -> usize {
        self.g.instances[self.procs[p].instance].class
    }

    fn start(&mut self) {
        for p in 0..self.procs.len() {
            if self.procs[p].kind == NodeKind::Source {
                self.next_source_frame(p);
            }
        }
    }

    fn run(&mut self) -> bool {
        while let Some(Reverse((at, seq))) = self.heap.pop() {
            if let Some(limit) = self.cfg.max_sim_time {
                if at > limit {
                    return true;
                }
            }
            self.now = at;
            let ev = self.pending.remove(&seq).expect("scheduled event");
            match ev {
                Ev::ServiceDone(p) => self.on_service_done(p),
                Ev::WorkerGranted(p) => self.on_worker(p),
                Ev::ResourceGranted(p) => self.on_resource(p),
                Ev::Deliver { to, slot, msg } => self.deliver(to, slot, msg),
            }
        }
        false
    }

    fn next_source_frame(&mut self, p: usize) {
        let frame = self.procs[p].next_frame;
        if frame as usize >= self.cfg.frames_per_stream {
            self.procs[p].phase = Phase::Done;
            return;
        }
        self.procs[p].next_frame += 1;
        let stream = self.g.instances[self.procs[p].instance]
            .stream
            .expect("sources are per-stream") as u32;
        self.procs[p].tag = (stream, frame);
        self.procs[p].msg = Some(Message {
            stream,
            frame,
            created_at: self.now,
            provenance: Vec::new(),
        });
        self.request_worker(p, Purpose::Run);
    }

    fn request_worker(&mut self, p: usize, purpose: Purpose) {
        if self.workers.free > 0 {
            self.workers.free -= 1;
            self.grant_worker(p);
            self.procs[p].phase = Phase::WaitWorker(purpose);
            self.on_worker(p);
        } else {
            self.procs[p].phase = Phase::WaitWorker(purpose);
            self.workers.waiters.push_back(p);
        }
    }

    fn grant_worker(&mut self, p: usize) {
        self.procs[p].worker_since = Some(self.now);
        self.log_msg(p, EventKind::CoreAcquired);
    }

    fn release_worker(&mut self, p: usize) {
        let since = self.procs[p].worker_since.take().expect("worker held");
        self.worker_busy += self.now - since;
        self.log_msg(p, EventKind::CoreReleased);
        if let Some(next) = self.workers.waiters.pop_front() {
            self.grant_worker(next);
            self.schedule(self.now, Ev::WorkerGranted(next));
        } else {
            self.workers.free += 1;
        }
    }

    fn request_resource(&mut self, p: usize) {
        let r = self.g.classes[self.class_of(p)]
            .resource
            .expect("exclusive node");
        self.procs[p].phase = Phase::WaitResource;
        if self.resources[r].free > 0 {
            self.resources[r].free -= 1;
            self.grant_resource(p);
            self.on_resource(p);
        } else {
            self.resources[r].waiters.push_back(p);
        }
    }

    fn grant_resource(&mut self, p: usize) {
        self.procs[p].resource_since = Some(self.now);
        self.log_msg(p, EventKind::ResourceAcquired);
    }

    fn release_resource(&mut self, p: usize) {
        let r = self.g.classes[self.class_of(p)]
            .resource
            .expect("exclusive node");
        let since = self.procs[p].resource_since.take().expect("resource held");
        self.resource_busy[r] += self.now - since;
        self.log_msg(p, EventKind::ResourceReleased);
        if let Some(next) = self.resources[r].waiters.pop_front() {
            self.grant_resource(next);
            self.schedule(self.now, Ev::ResourceGranted(next));
        } else {
            self.resources[r].free += 1;
        }
    }

    fn start_service(&mut self, p: usize) {
        self.log_msg(p, EventKind::ServiceStarted);
        let dist = self.dists[self.class_of(p)];
        let t = ticks(dist.sample(&mut self.procs[p].rng));
        self.procs[p].phase = Phase::Service;
        self.schedule(self.now + t, Ev::ServiceDone(p));
    }

    fn on_worker(&mut self, p: usize) {
        let Phase::WaitWorker(purpose) = self.procs[p].phase else {
            unreachable!("worker granted to a process that did not ask");
        };
        match (purpose, self.procs[p].kind) {
            (Purpose::Run, NodeKind::Exclusive) => self.request_resource(p),
            (Purpose::Run, _) => self.start_service(p),
            (Purpose::Emit, _) => {
                self.emit(p);
                self.release_worker(p);
                self.procs[p].phase = Phase::Idle;
                self.try_dequeue(p);
            }
        }
    }

    fn on_resource(&mut self, p: usize) {
        // the core goes back to the pool while the resource does the work
        self.release_worker(p);
        self.start_service(p);
    }

    fn on_service_done(&mut self, p: usize) {
        self.log_msg(p, EventKind::ServiceFinished);
        match self.procs[p].kind {
            NodeKind::Source => {
                self.emit(p);
                self.release_worker(p);
                self.procs[p].phase = Phase::Idle;
                self.next_source_frame(p);
            }
            NodeKind::Basic => {
                self.emit(p);
                self.release_worker(p);
                self.procs[p].phase = Phase::Idle;
                self.try_dequeue(p);
            }
            NodeKind::Sink => {
                self.complete(p);
                self.release_worker(p);
                self.procs[p].phase = Phase::Idle;
                self.try_dequeue(p);
            }
            NodeKind::Exclusive => {
                self.release_resource(p);
                self.request_worker(p, Purpose::Emit);
            }
        }
    }

    fn complete(&mut self, p: usize) {
        let msg = self.procs[p].msg.take().expect("sink holds a message");
        let inst = self.procs[p].instance;
        // any_of fan-in can deliver a frame twice; only the first arrival counts
        if !self.sink_frames[inst].insert(msg.frame) {
            return;
        }
        self.log(p, EventKind::MsgEmitted, msg.stream, msg.frame);
        self.log(p, EventKind::FrameCompleted, msg.stream, msg.frame);
        let stream = msg.stream as usize;
        let done = self.frame_sinks[stream].entry(msg.frame).or_insert(0);
        *done += 1;
        if *done == self.sink_classes {
            self.frame_sinks[stream].remove(&msg.frame);
            self.completions[stream].push(self.now);
        }
    }

    fn emit(&mut self, p: usize) {
        let mut msg = self.procs[p]
            .msg
            .take()
            .expect("emitting process holds a message");
        let inst = self.procs[p].instance;
        msg.provenance.push((inst as u32, self.now));
        self.log(p, EventKind::MsgEmitted, msg.stream, msg.frame);
        let class = self.g.instances[inst].class;
        let succs = &self.g.classes[class].succs;
        for (k, s) in succs.iter().enumerate() {
            let to = self.g.instance_for(s.class, msg.stream as usize);
            let slot = self.g.classes[s.class]
                .preds
                .iter()
                .position(|&c| c == class)
                .expect("edge has a matching predecessor");
            let m = if k + 1 == succs.len() {
                std::mem::replace(
                    &mut msg,
                    Message {
                        stream: 0,
                        frame: 0,
                        created_at: 0,
                        provenance: Vec::new(),
                    },
                )
            } else {
                msg.clone()
            };
            match &s.latency {
                Some(name) => {
                    let dist = &self.g.spec.distributions[name];
                    let key = (class, s.class, m.stream);
                    let label = format!(
                        "{}->{}#{}",
                        self.g.classes[class].name, self.g.classes[s.class].name, m.stream
                    );
                    let seed = self.cfg.seed;
                    let rng = self
                        .edge_rngs
                        .entry(key)
                        .or_insert_with(|| RngState::for_label(seed, &label));
                    let delay = ticks(dist.sample(rng));
                    self.schedule(self.now + delay, Ev::Deliver { to, slot, msg: m });
                }
                None => self.deliver(to, slot, m),
            }
        }
    }

    fn deliver(&mut self, to: usize, slot: usize, msg: Message) {
        let class = &self.g.classes[self.g.instances[to].class];
        let port = &mut self.ports[to];
        if class.join == JoinPolicy::AllOf && class.preds.len() > 1 {
            let n = class.preds.len();
            let key = (msg.stream, msg.frame);
            let parts = port
                .pending
                .entry(key)
                .or_insert_with(|| vec![VecDeque::new(); n]);
            parts[slot].push_back(msg);
            if parts.iter().all(|q| !q.is_empty()) {
                let merged: Vec<Message> =
                    parts.iter_mut().map(|q| q.pop_front().unwrap()).collect();
                if parts.iter().all(|q| q.is_empty()) {
                    port.pending.remove(&key);
                }
                port.ready.push_back(Message::merge(merged));
            } else {
                return;
            }
        } else {
            port.ready.push_back(msg);
        }
        port.max_depth = port.max_depth.max(port.ready.len());
        for i in 0..self.procs_of[to].len() {
            if self.ports[to].ready.is_empty() {
                break;
            }
            let p = self.procs_of[to][i];
            self.try_dequeue(p);
        }
    }

    fn try_dequeue(&mut self, p: usize) {
        if self.procs[p].phase != Phase::Idle {
            return;
        }
        let inst = self.procs[p].instance;
        let Some(msg) = self.ports[inst].ready.pop_front() else {
            return;
        };
        self.ports[inst].dequeued += 1;
        self.procs[p].tag = (msg.stream, msg.frame);
        self.procs[p].msg = Some(msg);
        self.log_msg(p, EventKind::MsgDequeued);
        self.request_worker(p, Purpose::Run);
    }

    fn finish(self, truncated: bool) -> Result<SimResult, SimError> {
        let frames = self.cfg.frames_per_stream;
        if !truncated && self.completions.iter().any(|c| c.len() < frames) {
            return Err(SimError::Deadlock {
                time_us: self.now,
                blocked: self.blocked_report(),
            });
        }
        let k = self.cfg.warmup_frames();
        let warmup_end = if k == 0 {
            0
        } else {
            self.completions
                .iter()
                .filter_map(|c| c.get(k - 1).copied())
                .max()
                .unwrap_or(0)
        };
        let g = self.g;
        let queues = g
            .instances
            .iter()
            .zip(&self.ports)
            .filter(|(i, _)| g.classes[i.class].kind != NodeKind::Source)
            .map(|(i, port)| QueueStat {
                node: i.name.clone(),
                max_depth: port.max_depth,
                dequeued: port.dequeued,
            })
            .collect();
        Ok(SimResult {
            events: self.events,
            node_names: g.instances.iter().map(|i| i.name.clone()).collect(),
            start_time: 0,
            end_time: self.now,
            streams: g.streams,
            frames_per_stream: frames,
            cpu_workers: self.cfg.cpu_workers,
            per_stream_completion: self.completions,
            worker_busy_us: self.worker_busy,
            resource_busy: g
                .spec
                .resources
                .iter()
                .zip(self.resource_busy)
                .map(|(r, busy_us)| ResourceBusy {
                    name: r.name.clone(),
                    capacity: r.capacity,
                    busy_us,
                })
                .collect(),
            queues,
            warmup_end,
            truncated,
        })
    }

    fn blocked_report(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, port) in self.ports.iter().enumerate() {
            let class = &self.g.classes[self.g.instances[i].class];
            if class.kind == NodeKind::Sink {
                continue;
            }
            for ((stream, frame), parts) in &port.pending {
                let missing: Vec<&str> = parts
                    .iter()
                    .zip(&class.preds)
                    .filter(|(q, _)| q.is_empty())
                    .map(|(_, &c)| self.g.classes[c].name.as_str())
                    .collect();
                out.push(format!(
                    "join {} waiting on [{}] for stream {stream} frame {frame}",
                    self.g.instances[i].name,
                    missing.join(", ")
                ));
                if out.len() >= 16 {
                    out.push("...".into());
                    return out;
                }
            }
        }
        for p in &self.procs {
            if !matches!(p.phase, Phase::Idle | Phase::Done) {
                out.push(format!(
                    "{} in {:?}",
                    self.g.instances[p.instance].name, p.phase
                ));
            }
        }
        if out.is_empty() {
            out.push("no producer left for the remaining frames".into());
        }
        out
    }
}

/// Something that can saturate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "type", content = "name", rename_all = "snake_case")]
pub enum Entity {
    WorkerPool,
    Resource(String),
    /// All instances of a spec node across streams.
    Node(String),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::WorkerPool => f.write_str("workers"),
            Entity::Resource(n) => write!(f, "resource:{n}"),
            Entity::Node(n) => write!(f, "node:{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Utilization {
    pub entity: Entity,
    pub utilization: f64,
}

/// Ranks the worker pool, resources and node classes by busy fraction over
/// `[warmup_end, end_time]`; the first entry is the bottleneck.
pub fn detect_bottleneck(
    result: &SimResult,
    graph: &RuntimeGraph,
) -> Result<Vec<Utilization>, SimError> {
    if result.events.is_empty() {
        return Err(SimError::EmptyLog);
    }
    let from = result.warmup_end.min(result.end_time);
    let window = (result.end_time - from) as f64;

    let resource_of_class: Vec<Option<usize>> = graph.classes.iter().map(|c| c.resource).collect();
    let instance_class: Vec<usize> = graph.instances.iter().map(|i| i.class).collect();
    let n_res = graph.spec.resources.len();
    let n_cls = graph.classes.len();

    // integrate "number held" step functions over the window
    let mut level = vec![0i64; 1 + n_res + n_cls];
    let mut area = vec![0f64; level.len()];
    let mut last = from;
    for e in &result.events {
        let t = e.time.max(from);
        if t > last {
            let dt = (t - last) as f64;
            for (a, l) in area.iter_mut().zip(&level) {
                *a += dt * *l as f64;
            }
            last = t;
        }
        let class = instance_class[e.node as usize];
        match e.kind {
            EventKind::CoreAcquired => level[0] += 1,
            EventKind::CoreReleased => level[0] -= 1,
            EventKind::ResourceAcquired => {
                if let Some(r) = resource_of_class[class] {
                    level[1 + r] += 1;
                }
            }
            EventKind::ResourceReleased => {
                if let Some(r) = resource_of_class[class] {
                    level[1 + r] -= 1;
                }
            }
            EventKind::ServiceStarted => level[1 + n_res + class] += 1,
            EventKind::ServiceFinished => level[1 + n_res + class] -= 1,
            _ => {}
        }
    }
    if result.end_time > last {
        let dt = (result.end_time - last) as f64;
        for (a, l) in area.iter_mut().zip(&level) {
            *a += dt * *l as f64;
        }
    }

    let frac = |a: f64, cap: usize| {
        if window > 0.0 && cap > 0 {
            a / (window * cap as f64)
        } else {
            0.0
        }
    };
    let mut out = vec![Utilization {
        entity: Entity::WorkerPool,
        utilization: frac(area[0], result.cpu_workers),
    }];
    for (r, res) in graph.spec.resources.iter().enumerate() {
        out.push(Utilization {
            entity: Entity::Resource(res.name.clone()),
            utilization: frac(area[1 + r], res.capacity),
        });
    }
    for (c, class) in graph.classes.iter().enumerate() {
        let servers = if class.per_stream {
            graph.streams
        } else {
            class
                .resource
                .map_or(1, |r| graph.spec.resources[r].capacity)
        };
        out.push(Utilization {
            entity: Entity::Node(class.name.clone()),
            utilization: frac(area[1 + n_res + c], servers),
        });
    }
    out.sort_by(|a, b| {
        b.utilization
            .total_cmp(&a.utilization)
            .then_with(|| a.entity.cmp(&b.entity))
    });
    Ok(out)
}
