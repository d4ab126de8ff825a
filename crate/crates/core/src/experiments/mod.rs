//! Parameter sweeps over scenarios and methods, aggregate statistics, and
//! the Monte Carlo check of the analytic robustness math.
//!
//! Seeds: every trace index `k` gets a workload seed `mix_seed(base, [0, k])`,
//! a cache-placement seed `mix_seed(base, [1, k])` and an engine seed
//! `mix_seed(base, [2, k])`. All three are shared by every sweep point and
//! method, so compared runs see the same requests, placements and per-segment
//! randomness.

mod validate;

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use validate::{random_grid, validate_robustness, CellReport, GridCell, ValidationReport};

use crate::engine::{run, ChoiceCounts, EngineError, RunOptions, RunSummary, World};
use crate::model::{
    build_cache_plan, generate_catalog, generate_trace, CacheGranularity, Catalog, ModelError,
    Scenario, WorkloadTrace,
};
use crate::policies::MethodKind;
use crate::stochastic::mix_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("summarize needs at least one value")]
    EmptySample,
    #[error("point {point}, method {method}, trace {trace}: {source}")]
    Run {
        point: f64,
        method: MethodKind,
        trace: u32,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Points are the fraction of segments each FDN caches.
    CacheLevel,
    /// Points are segment counts per trace.
    WorkloadSize,
    /// Points scale edge-link propagation, relative to `latency_baseline`.
    EdgeLatency,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::CacheLevel => "cache_level",
            SweepKind::WorkloadSize => "workload_size",
            SweepKind::EdgeLatency => "edge_latency",
        }
    }

    /// Methods compared when a spec does not list any.
    pub fn default_methods(&self) -> Vec<MethodKind> {
        match self {
            SweepKind::CacheLevel => vec![
                MethodKind::FederatedCdn,
                MethodKind::IsolatedFdn,
                MethodKind::DeterministicFfdn,
                MethodKind::RobustFfdn,
            ],
            _ => MethodKind::ALL.to_vec(),
        }
    }
}

/// A sweep file:
///
/// ```toml
/// kind = "cache_level"
/// values = [0.0, 0.3, 0.6, 0.9]
/// methods = ["robust-ffdn", "isolated-fdn"]   # optional
/// trace_count = 30                            # optional
/// seed = 1
/// scenario = "scenario.toml"                  # optional, relative to this file
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    #[serde(default)]
    pub methods: Vec<MethodKind>,
    #[serde(default = "default_trace_count")]
    pub trace_count: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    /// Edge-latency point that leaves the scenario unscaled; defaults to the
    /// first point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_baseline: Option<f64>,
}

fn default_trace_count() -> u32 {
    30
}

impl SweepSpec {
    pub fn new(kind: SweepKind, values: Vec<f64>, seed: u64) -> Self {
        SweepSpec {
            kind,
            values,
            methods: Vec::new(),
            trace_count: default_trace_count(),
            seed,
            scenario: None,
            latency_baseline: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let spec: SweepSpec =
            toml::from_str(text).map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn methods(&self) -> Vec<MethodKind> {
        if self.methods.is_empty() {
            self.kind.default_methods()
        } else {
            self.methods.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.values.is_empty() {
            return bad("no sweep values".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep values must be strictly increasing".into());
        }
        if self.trace_count == 0 {
            return bad("trace_count must be >= 1".into());
        }
        match self.kind {
            SweepKind::CacheLevel if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                bad("cache levels must lie in [0, 1]".into())
            }
            SweepKind::WorkloadSize
                if self
                    .values
                    .iter()
                    .any(|&v| v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64) =>
            {
                bad("workload sizes must be whole segment counts".into())
            }
            SweepKind::EdgeLatency if self.values.iter().any(|&v| v < 0.0) => {
                bad("latency points must be >= 0".into())
            }
            SweepKind::EdgeLatency if self.latency_baseline() <= 0.0 => {
                bad("latency baseline must be > 0".into())
            }
            _ => Ok(()),
        }
    }

    fn latency_baseline(&self) -> f64 {
        self.latency_baseline.unwrap_or(self.values[0])
    }
}

pub fn trace_seed(base: u64, trace: u32) -> u64 {
    mix_seed(base, &[0, trace as u64])
}

pub fn cache_seed(base: u64, trace: u32) -> u64 {
    mix_seed(base, &[1, trace as u64])
}

pub fn engine_seed(base: u64, trace: u32) -> u64 {
    mix_seed(base, &[2, trace as u64])
}

/// Builds the world for one trace index: FDN caches at `fdn_fraction`
/// (per the scenario's granularity), CDN caches whole videos at the
/// scenario's CDN fraction.
pub fn build_world(
    scenario: &Scenario,
    catalog: &Catalog,
    fdn_fraction: f64,
    seed: u64,
) -> Result<World, ModelError> {
    let topology = scenario.topology()?;
    let c = &scenario.cache;
    let fdn_cache = build_cache_plan(
        &topology,
        catalog,
        fdn_fraction,
        c.granularity,
        c.popularity,
        seed,
    )?;
    let cdn_cache = build_cache_plan(
        &topology,
        catalog,
        c.cdn_fraction,
        CacheGranularity::PerVideo,
        c.popularity,
        seed,
    )?;
    Ok(World {
        topology,
        catalog: catalog.clone(),
        fdn_cache,
        cdn_cache,
        flags: scenario.flags,
    })
}

/// World and trace for a single run of `scenario` with trace index 0 under
/// base seed `seed`, as a sweep would build them.
pub fn prepare_run(scenario: &Scenario, seed: u64) -> Result<(World, WorkloadTrace), ModelError> {
    let catalog = generate_catalog(&scenario.catalog)?;
    let world = build_world(
        scenario,
        &catalog,
        scenario.cache.fraction,
        cache_seed(seed, 0),
    )?;
    let trace = generate_trace(
        &scenario.workload,
        &catalog,
        &world.topology,
        trace_seed(seed, 0),
    )?;
    Ok((world, trace))
}

/// One engine run inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub point_index: usize,
    pub point: f64,
    pub trace_index: u32,
    pub trace_seed: u64,
    pub engine_seed: u64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    pub kind: SweepKind,
    pub point: f64,
    pub method: MethodKind,
    pub trace_count: u32,
    pub mean_miss_rate: f64,
    /// 95% half-width; absent for a single trace.
    pub ci_half_width: Option<f64>,
    /// Summed over traces.
    pub total_segments: usize,
    /// Summed over traces.
    pub counts: ChoiceCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub aggregates: Vec<AggregateResult>,
    pub runs: Vec<RunRecord>,
}

impl SweepOutput {
    pub fn aggregate(&self, point: f64, method: MethodKind) -> Option<&AggregateResult> {
        self.aggregates
            .iter()
            .find(|a| a.point == point && a.method == method)
    }
}

/// Mean and 95% normal-approximation half-width `1.96 s / sqrt(n)`.
pub fn summarize(values: &[f64]) -> Result<(f64, Option<f64>), ExperimentError> {
    let n = values.len();
    if n == 0 {
        return Err(ExperimentError::EmptySample);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok((mean, None));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, Some(1.96 * var.sqrt() / (n as f64).sqrt())))
}

/// Runs every (point, method, trace) combination of `spec` on `scenario`.
///
/// Runs execute in parallel; results are reduced in (point, method, trace)
/// order, so the output does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, scenario: &Scenario) -> Result<SweepOutput, ExperimentError> {
    spec.validate()?;
    let methods = spec.methods();
    let catalog = generate_catalog(&scenario.catalog)?;
    let jobs: Vec<(usize, u32)> = (0..spec.values.len())
        .flat_map(|p| (0..spec.trace_count).map(move |k| (p, k)))
        .collect();
    let per_job: Vec<Result<Vec<RunRecord>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(p, k)| run_point_trace(spec, scenario, &catalog, &methods, p, k))
        .collect();

    let mut runs = Vec::with_capacity(jobs.len() * methods.len());
    for r in per_job {
        runs.extend(r?);
    }
    let mut aggregates = Vec::with_capacity(spec.values.len() * methods.len());
    for (p, &point) in spec.values.iter().enumerate() {
        for &method in &methods {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.point_index == p && r.summary.method == method)
                .collect();
            let rates: Vec<f64> = group.iter().map(|r| r.summary.miss_rate).collect();
            let (mean, ci) = summarize(&rates)?;
            let mut counts = ChoiceCounts::default();
            for r in &group {
                let c = r.summary.counts;
                counts.local_cache += c.local_cache;
                counts.on_demand += c.on_demand;
                counts.remote_fdn += c.remote_fdn;
                counts.remote_cloud += c.remote_cloud;
            }
            aggregates.push(AggregateResult {
                kind: spec.kind,
                point,
                method,
                trace_count: spec.trace_count,
                mean_miss_rate: mean,
                ci_half_width: ci,
                total_segments: group.iter().map(|r| r.summary.total_segments).sum(),
                counts,
            });
        }
    }
    Ok(SweepOutput { aggregates, runs })
}

fn run_point_trace(
    spec: &SweepSpec,
    scenario: &Scenario,
    catalog: &Catalog,
    methods: &[MethodKind],
    p: usize,
    k: u32,
) -> Result<Vec<RunRecord>, ExperimentError> {
    let point = spec.values[p];
    let mut fraction = scenario.cache.fraction;
    let mut workload = scenario.workload.clone();
    match spec.kind {
        SweepKind::CacheLevel => fraction = point,
        SweepKind::WorkloadSize => workload.target_segments = Some(point as u32),
        SweepKind::EdgeLatency => {}
    }
    let mut world = build_world(scenario, catalog, fraction, cache_seed(spec.seed, k))?;
    if spec.kind == SweepKind::EdgeLatency {
        world.topology = world
            .topology
            .with_edge_latency_scaled(point / spec.latency_baseline())?;
    }
    let tseed = trace_seed(spec.seed, k);
    let trace = generate_trace(&workload, catalog, &world.topology, tseed)?;
    let engine_seed = engine_seed(spec.seed, k);
    methods
        .iter()
        .map(|&method| {
            let out = run(&world, &trace, method, engine_seed, RunOptions::default()).map_err(
                |source| ExperimentError::Run {
                    point,
                    method,
                    trace: k,
                    source,
                },
            )?;
            Ok(RunRecord {
                point_index: p,
                point,
                trace_index: k,
                trace_seed: tseed,
                engine_seed,
                summary: out.summary,
            })
        })
        .collect()
}

pub const RESULTS_HEADER: [&str; 11] = [
    "sweep_kind",
    "sweep_point",
    "method",
    "trace_count",
    "mean_miss_rate",
    "ci_half_width",
    "total_segments",
    "local_cache",
    "on_demand",
    "remote_fdn",
    "remote_cloud",
];

/// Writes the aggregate results CSV; a missing half-width is an empty field.
pub fn write_results_csv<W: Write>(
    aggregates: &[AggregateResult],
    out: W,
) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for a in aggregates {
        w.write_record([
            a.kind.name().to_string(),
            a.point.to_string(),
            a.method.to_string(),
            a.trace_count.to_string(),
            a.mean_miss_rate.to_string(),
            a.ci_half_width.map(|c| c.to_string()).unwrap_or_default(),
            a.total_segments.to_string(),
            a.counts.local_cache.to_string(),
            a.counts.on_demand.to_string(),
            a.counts.remote_fdn.to_string(),
            a.counts.remote_cloud.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per run with the seeds needed to replay it alone.
pub fn write_runs_csv<W: Write>(runs: &[RunRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep_point",
        "trace_index",
        "method",
        "trace_seed",
        "engine_seed",
        "total_segments",
        "missed_segments",
        "miss_rate",
    ])?;
    for r in runs {
        w.write_record([
            r.point.to_string(),
            r.trace_index.to_string(),
            r.summary.method.to_string(),
            r.trace_seed.to_string(),
            r.engine_seed.to_string(),
            r.summary.total_segments.to_string(),
            r.summary.missed_segments.to_string(),
            r.summary.miss_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
