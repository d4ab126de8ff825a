//! Discrete-event simulation of segment delivery.
//!
//! A run replays a workload trace against one delivery method. Each segment
//! is decided by the method's policy and then realized: transfers share link
//! bandwidth fluidly and pay a sampled propagation delay after serialization;
//! on-demand jobs wait for a worker under non-preemptive EDF and take a
//! sampled processing time. Every requested segment is eventually delivered
//! and produces exactly one [`SegmentOutcome`].
//!
//! A run is a single-threaded event loop and is fully determined by its
//! inputs and seed.

mod link;
mod workers;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

pub use link::{ActiveTransfer, LinkState};
pub use workers::{Job, WorkerPool};

use crate::model::{
    assign_deadlines, validate_trace, CachePlan, Catalog, Endpoint, LinkId, ModelError, NodeId,
    ScenarioFlags, Segment, Topology, WorkloadTrace,
};
use crate::policies::{decide, DecisionContext, DeliveryChoice, MethodKind, PolicyError};
use crate::stochastic::{mix_seed, sample_truncated, SeededRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("request {request}, segment {index} of video {video}: {source}")]
    Unservable {
        request: u32,
        video: u32,
        index: u32,
        #[source]
        source: PolicyError,
    },
    #[error("no link between {0} and {1}")]
    MissingLink(String, String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything a run needs besides the trace: network, catalog, and the cache
/// contents each method sees.
#[derive(Debug, Clone)]
pub struct World {
    pub topology: Topology,
    pub catalog: Catalog,
    /// Partial per-segment caches used by the FDN-based methods.
    pub fdn_cache: CachePlan,
    /// Whole-video caches used by the CDN method.
    pub cdn_cache: CachePlan,
    pub flags: ScenarioFlags,
}

impl World {
    pub fn cache_for(&self, method: MethodKind) -> &CachePlan {
        match method {
            MethodKind::Cdn => &self.cdn_cache,
            _ => &self.fdn_cache,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentOutcome {
    pub request_id: u32,
    pub video_id: u32,
    pub segment_index: u32,
    pub choice: DeliveryChoice,
    pub delivered_at: f64,
    pub deadline: f64,
    pub missed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChoiceCounts {
    pub local_cache: usize,
    pub on_demand: usize,
    pub remote_fdn: usize,
    pub remote_cloud: usize,
}

impl ChoiceCounts {
    fn record(&mut self, choice: DeliveryChoice, cloud: NodeId) {
        match choice {
            DeliveryChoice::LocalCache => self.local_cache += 1,
            DeliveryChoice::OnDemand => self.on_demand += 1,
            DeliveryChoice::RemoteFetch { source } if source == cloud => self.remote_cloud += 1,
            DeliveryChoice::RemoteFetch { .. } => self.remote_fdn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.local_cache + self.on_demand + self.remote_fdn + self.remote_cloud
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: MethodKind,
    pub total_segments: usize,
    pub missed_segments: usize,
    pub miss_rate: f64,
    pub counts: ChoiceCounts,
    pub seed: u64,
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: &'static str,
    pub request: u32,
    pub segment: Option<u32>,
    pub node: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub outcomes: Vec<SegmentOutcome>,
    pub summary: RunSummary,
    pub events: Option<Vec<EventRecord>>,
}

impl RunOutput {
    /// Writes the event log as JSON lines.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in self.events.iter().flatten() {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub event_log: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Transfer { link: LinkId, to: Endpoint },
    Process { node: NodeId },
}

#[derive(Debug, Clone)]
struct Task {
    request: usize,
    index: u32,
    deadline: f64,
    choice: DeliveryChoice,
    steps: [Option<Step>; 2],
    next_step: usize,
    /// Worker key while in service.
    worker_key: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    RequestArrival { request: usize },
    SegmentDispatch { request: usize, index: u32 },
    TransferComplete { link: LinkId, version: u64 },
    HopArrival { task: usize },
    ProcessingComplete { node: NodeId, task: usize },
    WorkerDispatch { node: NodeId },
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed for a min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

// Random stream labels. Each segment draws from one stream per link and per
// processing node, so a segment crossing the same link under two methods sees
// the same latency draw.
const STREAM_PROCESSING: u64 = 0;
const STREAM_HOP: u64 = 1;

struct Sim<'a> {
    world: &'a World,
    trace: &'a WorkloadTrace,
    method: MethodKind,
    cache: &'a CachePlan,
    seed: u64,
    now: f64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    links: Vec<LinkState<usize>>,
    pools: Vec<WorkerPool<usize>>,
    dispatch_pending: Vec<bool>,
    tasks: Vec<Task>,
    deadlines: Vec<Vec<f64>>,
    outcomes: Vec<SegmentOutcome>,
    counts: ChoiceCounts,
    events: Option<Vec<EventRecord>>,
}

impl<'a> Sim<'a> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn log(
        &mut self,
        kind: &'static str,
        request: usize,
        segment: Option<u32>,
        node: Option<Endpoint>,
    ) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(EventRecord {
                time: self.now,
                kind,
                request: self.trace.requests[request].id,
                segment,
                node: node.map(|n| self.world.topology.endpoint_name(n).to_string()),
            });
        }
    }

    fn segment(&self, request: usize, index: u32) -> &'a Segment {
        let r = &self.trace.requests[request];
        self.world
            .catalog
            .segment(r.video, index)
            .expect("trace validated against catalog")
    }

    fn link(&self, a: Endpoint, b: Endpoint) -> Result<LinkId, EngineError> {
        let t = &self.world.topology;
        t.link_between(a, b).ok_or_else(|| {
            EngineError::MissingLink(t.endpoint_name(a).into(), t.endpoint_name(b).into())
        })
    }

    fn on_arrival(&mut self, request: usize) -> Result<(), EngineError> {
        self.log("request_arrival", request, None, None);
        let r = &self.trace.requests[request];
        let video = self
            .world
            .catalog
            .video(r.video)
            .expect("trace validated against catalog");
        let deadlines = assign_deadlines(r, video);
        for (i, &d) in deadlines.iter().enumerate() {
            let seg = &video.segments[i];
            if self.world.flags.just_in_time {
                let at = (d - seg.gop_duration).max(self.now);
                self.schedule(
                    at,
                    EventKind::SegmentDispatch {
                        request,
                        index: i as u32,
                    },
                );
            } else {
                self.dispatch(request, i as u32, d)?;
            }
        }
        self.deadlines[request] = deadlines;
        Ok(())
    }

    fn dispatch(&mut self, request: usize, index: u32, deadline: f64) -> Result<(), EngineError> {
        let r = &self.trace.requests[request];
        let segment = self.segment(request, index);
        let backlog = if self.world.flags.queue_aware {
            let p = &self.pools[r.local_fdn.0 as usize];
            if p.workers() == 0 {
                0.0
            } else {
                p.backlog(self.now)
            }
        } else {
            0.0
        };
        let ctx = DecisionContext {
            topology: &self.world.topology,
            cache: self.cache,
            local_fdn: r.local_fdn,
            viewer: r.viewer,
            now: self.now,
            deadline,
            on_demand_backlog: backlog,
        };
        let estimate =
            decide(self.method, segment, &ctx).map_err(|source| EngineError::Unservable {
                request: r.id,
                video: r.video.0,
                index,
                source,
            })?;
        let local = Endpoint::Node(r.local_fdn);
        let viewer = Endpoint::Viewer(r.viewer);
        let last_mile = || self.link(local, viewer);
        let steps = match estimate.choice {
            DeliveryChoice::LocalCache => [
                Some(Step::Transfer {
                    link: last_mile()?,
                    to: viewer,
                }),
                None,
            ],
            DeliveryChoice::OnDemand => [
                Some(Step::Process { node: r.local_fdn }),
                Some(Step::Transfer {
                    link: last_mile()?,
                    to: viewer,
                }),
            ],
            DeliveryChoice::RemoteFetch { source } if self.method == MethodKind::CentralCloud => [
                Some(Step::Transfer {
                    link: self.link(Endpoint::Node(source), viewer)?,
                    to: viewer,
                }),
                None,
            ],
            DeliveryChoice::RemoteFetch { source } => [
                Some(Step::Transfer {
                    link: self.link(Endpoint::Node(source), local)?,
                    to: local,
                }),
                Some(Step::Transfer {
                    link: last_mile()?,
                    to: viewer,
                }),
            ],
        };
        self.counts
            .record(estimate.choice, self.world.topology.cloud());
        let task = self.tasks.len();
        self.tasks.push(Task {
            request,
            index,
            deadline,
            choice: estimate.choice,
            steps,
            next_step: 0,
            worker_key: 0.0,
        });
        let node = match estimate.choice {
            DeliveryChoice::RemoteFetch { source } => Endpoint::Node(source),
            _ => local,
        };
        self.log("segment_dispatch", request, Some(index), Some(node));
        self.advance(task);
        Ok(())
    }

    fn stream(&self, task: usize, label: u64, key: u64) -> SeededRng {
        let t = &self.tasks[task];
        let r = &self.trace.requests[t.request];
        SeededRng::new(mix_seed(
            self.seed,
            &[r.id as u64, t.index as u64, label, key],
        ))
    }

    /// Starts the task's next step, or records delivery when none remain.
    fn advance(&mut self, task: usize) {
        let t = &self.tasks[task];
        let step = t.steps.get(t.next_step).copied().flatten();
        let (request, index) = (t.request, t.index);
        match step {
            None => self.deliver(task),
            Some(Step::Process { node }) => {
                let segment = self.segment(request, index);
                let deadline = self.tasks[task].deadline;
                self.pools[node.0 as usize].enqueue(Job {
                    tag: task,
                    deadline,
                    expected_service: segment.processing.mean(),
                });
                self.log(
                    "processing_queued",
                    request,
                    Some(index),
                    Some(Endpoint::Node(node)),
                );
                if !self.dispatch_pending[node.0 as usize] {
                    self.dispatch_pending[node.0 as usize] = true;
                    self.schedule(self.now, EventKind::WorkerDispatch { node });
                }
            }
            Some(Step::Transfer { link, to }) => {
                let bits = self.segment(request, index).size_bits as f64;
                let now = self.now;
                let next = self.links[link.0].start(now, task, bits);
                self.log("transfer_start", request, Some(index), Some(to));
                self.schedule_link(link, next);
            }
        }
    }

    fn schedule_link(&mut self, link: LinkId, next: Option<f64>) {
        if let Some(at) = next {
            let version = self.links[link.0].version();
            self.schedule(
                at.max(self.now),
                EventKind::TransferComplete { link, version },
            );
        }
    }

    fn on_transfer_complete(&mut self, link: LinkId, version: u64) {
        if self.links[link.0].version() != version {
            return;
        }
        let now = self.now;
        let (done, next) = self.links[link.0].finish_drained(now);
        self.schedule_link(link, next);
        let propagation = self.world.topology.link(link).propagation;
        for task in done {
            let (request, index) = (self.tasks[task].request, self.tasks[task].index);
            let mut rng = self.stream(task, STREAM_HOP, link.0 as u64);
            let delay = sample_truncated(&propagation, &mut rng, 0.0);
            self.log("transfer_complete", request, Some(index), None);
            self.schedule(now + delay, EventKind::HopArrival { task });
        }
    }

    fn on_hop_arrival(&mut self, task: usize) {
        self.tasks[task].next_step += 1;
        self.advance(task);
    }

    fn on_worker_dispatch(&mut self, node: NodeId) {
        self.dispatch_pending[node.0 as usize] = false;
        let now = self.now;
        for job in self.pools[node.0 as usize].start_ready(now) {
            let task = job.tag;
            self.tasks[task].worker_key = now + job.expected_service;
            let (request, index) = (self.tasks[task].request, self.tasks[task].index);
            let model = self.segment(request, index).processing;
            let mut rng = self.stream(task, STREAM_PROCESSING, node.0 as u64);
            let service = sample_truncated(&model, &mut rng, 0.0);
            self.log(
                "processing_start",
                request,
                Some(index),
                Some(Endpoint::Node(node)),
            );
            self.schedule(now + service, EventKind::ProcessingComplete { node, task });
        }
    }

    fn on_processing_complete(&mut self, node: NodeId, task: usize) {
        let key = self.tasks[task].worker_key;
        self.pools[node.0 as usize].finish(key);
        let (request, index) = (self.tasks[task].request, self.tasks[task].index);
        self.log(
            "processing_complete",
            request,
            Some(index),
            Some(Endpoint::Node(node)),
        );
        if !self.dispatch_pending[node.0 as usize] {
            self.dispatch_pending[node.0 as usize] = true;
            self.schedule(self.now, EventKind::WorkerDispatch { node });
        }
        self.tasks[task].next_step += 1;
        self.advance(task);
    }

    fn deliver(&mut self, task: usize) {
        let t = &self.tasks[task];
        let r = &self.trace.requests[t.request];
        let outcome = SegmentOutcome {
            request_id: r.id,
            video_id: r.video.0,
            segment_index: t.index,
            choice: t.choice,
            delivered_at: self.now,
            deadline: t.deadline,
            missed: self.now > t.deadline,
        };
        let (request, index) = (t.request, t.index);
        self.outcomes.push(outcome);
        self.log(
            "segment_delivered",
            request,
            Some(index),
            Some(Endpoint::Viewer(r.viewer)),
        );
    }
}

/// Replays `trace` under `method`.
pub fn run(
    world: &World,
    trace: &WorkloadTrace,
    method: MethodKind,
    seed: u64,
    options: RunOptions,
) -> Result<RunOutput, EngineError> {
    validate_trace(trace, &world.catalog)?;
    let topology = &world.topology;
    let mut sim = Sim {
        world,
        trace,
        method,
        cache: world.cache_for(method),
        seed,
        now: 0.0,
        seq: 0,
        queue: BinaryHeap::new(),
        links: topology.links().iter().map(LinkState::from_spec).collect(),
        pools: topology
            .nodes()
            .iter()
            .map(|n| WorkerPool::new(n.workers))
            .collect(),
        dispatch_pending: vec![false; topology.nodes().len()],
        tasks: Vec::with_capacity(trace.total_segments),
        deadlines: vec![Vec::new(); trace.requests.len()],
        outcomes: Vec::with_capacity(trace.total_segments),
        counts: ChoiceCounts::default(),
        events: options.event_log.then(Vec::new),
    };
    for (i, r) in trace.requests.iter().enumerate() {
        sim.schedule(r.arrival_time, EventKind::RequestArrival { request: i });
    }
    while let Some(ev) = sim.queue.pop() {
        debug_assert!(ev.time >= sim.now);
        sim.now = ev.time;
        match ev.kind {
            EventKind::RequestArrival { request } => sim.on_arrival(request)?,
            EventKind::SegmentDispatch { request, index } => {
                let d = sim.deadlines[request][index as usize];
                sim.dispatch(request, index, d)?;
            }
            EventKind::TransferComplete { link, version } => {
                sim.on_transfer_complete(link, version)
            }
            EventKind::HopArrival { task } => sim.on_hop_arrival(task),
            EventKind::ProcessingComplete { node, task } => sim.on_processing_complete(node, task),
            EventKind::WorkerDispatch { node } => sim.on_worker_dispatch(node),
        }
    }
    debug_assert_eq!(sim.outcomes.len(), trace.total_segments);
    let missed = sim.outcomes.iter().filter(|o| o.missed).count();
    let total = sim.outcomes.len();
    let summary = RunSummary {
        method,
        total_segments: total,
        missed_segments: missed,
        miss_rate: if total == 0 {
            0.0
        } else {
            missed as f64 / total as f64
        },
        counts: sim.counts,
        seed,
    };
    Ok(RunOutput {
        outcomes: sim.outcomes,
        summary,
        events: sim.events,
    })
}
