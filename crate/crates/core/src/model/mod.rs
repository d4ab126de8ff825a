//! Domain entities: catalog, topology, cache plans, workload traces, and the
//! scenario file that ties them together.

mod cache;
mod catalog;
mod scenario;
mod topology;
mod workload;

use thiserror::Error;

pub use cache::{build_cache_plan, CacheGranularity, CachePlan, NodeCache};
pub use catalog::{generate_catalog, Catalog, CatalogParams, Segment, VideoAsset, VideoId};
pub use scenario::{CacheParams, LinkConfig, Scenario, ScenarioFlags};
pub use topology::{
    transfer_model, Endpoint, LinkId, LinkSpec, NodeId, NodeKind, NodeSpec, Topology, ViewerId,
    ViewerSpec,
};
pub use workload::{
    assign_deadlines, generate_trace, read_trace, validate_trace, write_trace, Popularity,
    RankSampler, StreamRequest, TraceParams, WorkloadTrace,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Distribution(#[from] crate::stochastic::ModelError),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("duplicate node or viewer name `{0}`")]
    DuplicateName(String),
    #[error("unknown node or viewer `{0}`")]
    UnknownNode(String),
    #[error("unknown video {0}")]
    UnknownVideo(u32),
    #[error("segment {1} of video {0} is not in the catalog")]
    NotInCatalog(u32, u32),
    #[error("topology must contain exactly one central cloud, found {0}")]
    CloudCount(usize),
    #[error("catalog is empty but requests were asked for")]
    EmptyCatalog,
}
