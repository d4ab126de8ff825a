//! Stream requests, synthetic trace generation, and the trace file format.
//!
//! A trace file is line-delimited CSV with a header row:
//!
//! ```text
//! # window_s=180 seed=42
//! request_id,arrival_time_s,video_id,viewer_id,local_fdn,startup_delay_s,segment_count
//! 0,3.25,4,viewers0,fdn0,2,37
//! ```
//!
//! The first six columns are fixed. `segment_count` is the number of leading
//! segments of the video the request streams (a request may be truncated to
//! hit a segment budget). Viewer and node columns carry scenario names.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::stochastic::SeededRng;

use super::catalog::{Catalog, VideoAsset, VideoId};
use super::topology::{NodeId, Topology, ViewerId};
use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamRequest {
    pub id: u32,
    pub video: VideoId,
    pub viewer: ViewerId,
    pub local_fdn: NodeId,
    pub arrival_time: f64,
    pub startup_delay: f64,
    pub segment_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub requests: Vec<StreamRequest>,
    pub window: f64,
    pub seed: u64,
    pub total_segments: usize,
}

impl WorkloadTrace {
    pub fn empty(window: f64, seed: u64) -> Self {
        WorkloadTrace {
            requests: Vec::new(),
            window,
            seed,
            total_segments: 0,
        }
    }
}

/// How requests (or cache slots) are spread over the catalog. Video id is the
/// popularity rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Popularity {
    Uniform,
    Zipf { s: f64 },
}

impl Popularity {
    /// Unnormalized weight of the video at `rank` (0-based).
    pub fn weight(&self, rank: usize) -> f64 {
        match *self {
            Popularity::Uniform => 1.0,
            Popularity::Zipf { s } => 1.0 / ((rank + 1) as f64).powf(s),
        }
    }
}

/// Inverse-CDF sampler over a fixed set of ranks.
#[derive(Debug, Clone)]
pub struct RankSampler {
    cumulative: Vec<f64>,
}

impl RankSampler {
    pub fn new(popularity: Popularity, n: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = (0..n)
            .map(|r| {
                acc += popularity.weight(r);
                acc
            })
            .collect();
        RankSampler { cumulative }
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let total = *self.cumulative.last().expect("non-empty sampler");
        let u = rng.uniform() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Trace generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceParams {
    /// Arrival window in seconds; arrivals fall in `[0, window)`.
    pub window: f64,
    /// Number of requests. Ignored when `target_segments` is set.
    #[serde(default)]
    pub request_count: u32,
    /// Draw requests until this many segments are requested, truncating the
    /// last video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_segments: Option<u32>,
    pub popularity: Popularity,
    pub startup_delay: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        TraceParams {
            window: 180.0,
            request_count: 0,
            target_segments: Some(3500),
            popularity: Popularity::Zipf { s: 0.8 },
            startup_delay: 2.0,
        }
    }
}

/// Generates a workload trace.
///
/// Requests are drawn one after another from a single stream seeded by
/// `seed`, so a trace with a larger budget extends a smaller one with the
/// same seed. The returned list is ordered by arrival time.
pub fn generate_trace(
    params: &TraceParams,
    catalog: &Catalog,
    topology: &Topology,
    seed: u64,
) -> Result<WorkloadTrace, ModelError> {
    if !(params.window > 0.0 && params.window.is_finite()) {
        return Err(ModelError::InvalidParams("window must be > 0".into()));
    }
    if !(params.startup_delay >= 0.0 && params.startup_delay.is_finite()) {
        return Err(ModelError::InvalidParams(
            "startup delay must be >= 0".into(),
        ));
    }
    let wants_any = match params.target_segments {
        Some(t) => t > 0,
        None => params.request_count > 0,
    };
    if !wants_any {
        return Ok(WorkloadTrace::empty(params.window, seed));
    }
    if catalog.is_empty() {
        return Err(ModelError::EmptyCatalog);
    }
    if topology.viewers().is_empty() {
        return Err(ModelError::InvalidParams("topology has no viewers".into()));
    }

    let sampler = RankSampler::new(params.popularity, catalog.len());
    let viewer_count = topology.viewers().len() as u64;
    let mut rng = SeededRng::new(seed);
    let mut requests = Vec::new();
    let mut total = 0usize;
    loop {
        match params.target_segments {
            Some(t) if total >= t as usize => break,
            None if requests.len() >= params.request_count as usize => break,
            _ => {}
        }
        let arrival_time = (rng.uniform() * params.window).min(params.window.next_down());
        let video = &catalog.videos()[sampler.sample(&mut rng)];
        let viewer = ViewerId(rng.below(viewer_count) as u32);
        let mut segment_count = video.len() as u32;
        if let Some(t) = params.target_segments {
            segment_count = segment_count.min(t - total as u32);
        }
        total += segment_count as usize;
        requests.push(StreamRequest {
            id: requests.len() as u32,
            video: video.id,
            viewer,
            local_fdn: topology.local_fdn_of(viewer),
            arrival_time,
            startup_delay: params.startup_delay,
            segment_count,
        });
    }
    requests.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.id.cmp(&b.id))
    });
    Ok(WorkloadTrace {
        requests,
        window: params.window,
        seed,
        total_segments: total,
    })
}

/// Absolute presentation deadlines of the requested segments:
/// `arrival + startup + sum of earlier GOP durations`.
pub fn assign_deadlines(request: &StreamRequest, video: &VideoAsset) -> Vec<f64> {
    debug_assert_eq!(request.video, video.id);
    let mut at = request.arrival_time + request.startup_delay;
    video
        .segments
        .iter()
        .take(request.segment_count as usize)
        .map(|s| {
            let d = at;
            at += s.gop_duration;
            d
        })
        .collect()
}

/// Checks that every request names a catalog video and fits inside it.
pub fn validate_trace(trace: &WorkloadTrace, catalog: &Catalog) -> Result<(), ModelError> {
    let mut total = 0usize;
    for r in &trace.requests {
        let video = catalog
            .video(r.video)
            .ok_or(ModelError::UnknownVideo(r.video.0))?;
        if r.segment_count as usize > video.len() {
            return Err(ModelError::InvalidTrace(format!(
                "request {} asks for {} segments of video {} which has {}",
                r.id,
                r.segment_count,
                r.video,
                video.len()
            )));
        }
        if !(r.arrival_time >= 0.0 && r.arrival_time.is_finite()) {
            return Err(ModelError::InvalidTrace(format!(
                "request {} has arrival {}",
                r.id, r.arrival_time
            )));
        }
        total += r.segment_count as usize;
    }
    if total != trace.total_segments {
        return Err(ModelError::InvalidTrace(format!(
            "total_segments {} disagrees with requests ({total})",
            trace.total_segments
        )));
    }
    Ok(())
}

const TRACE_HEADER: &str =
    "request_id,arrival_time_s,video_id,viewer_id,local_fdn,startup_delay_s,segment_count";

pub fn write_trace<W: Write>(
    trace: &WorkloadTrace,
    topology: &Topology,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "# window_s={} seed={}", trace.window, trace.seed)?;
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.requests {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.id,
            r.arrival_time,
            r.video.0,
            topology.viewer(r.viewer).name,
            topology.node(r.local_fdn).name,
            r.startup_delay,
            r.segment_count
        )?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct TraceRow {
    request_id: u32,
    arrival_time_s: f64,
    video_id: u32,
    viewer_id: String,
    local_fdn: String,
    startup_delay_s: f64,
    segment_count: Option<u32>,
}

/// Reads a trace written by [`write_trace`]. A missing `segment_count`
/// column means whole videos.
pub fn read_trace<R: Read>(
    mut input: R,
    topology: &Topology,
    catalog: &Catalog,
) -> Result<WorkloadTrace, ModelError> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| ModelError::InvalidTrace(e.to_string()))?;
    let (mut window, mut seed) = (None, 0u64);
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for kv in line.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("window_s", v)) => window = v.parse::<f64>().ok(),
                Some(("seed", v)) => seed = v.parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut requests = Vec::new();
    let mut total = 0usize;
    for row in reader.deserialize::<TraceRow>() {
        let row = row.map_err(|e| ModelError::InvalidTrace(e.to_string()))?;
        let viewer = topology
            .viewer_by_name(&row.viewer_id)
            .ok_or_else(|| ModelError::UnknownNode(row.viewer_id.clone()))?;
        let local_fdn = topology
            .node_by_name(&row.local_fdn)
            .ok_or_else(|| ModelError::UnknownNode(row.local_fdn.clone()))?;
        let video = catalog
            .video(VideoId(row.video_id))
            .ok_or(ModelError::UnknownVideo(row.video_id))?;
        let segment_count = row.segment_count.unwrap_or(video.len() as u32);
        total += segment_count as usize;
        requests.push(StreamRequest {
            id: row.request_id,
            video: video.id,
            viewer,
            local_fdn,
            arrival_time: row.arrival_time_s,
            startup_delay: row.startup_delay_s,
            segment_count,
        });
    }
    let window = window.unwrap_or_else(|| {
        requests
            .iter()
            .map(|r| r.arrival_time)
            .fold(0.0, f64::max)
            .next_up()
    });
    let trace = WorkloadTrace {
        requests,
        window,
        seed,
        total_segments: total,
    };
    validate_trace(&trace, catalog)?;
    Ok(trace)
}
