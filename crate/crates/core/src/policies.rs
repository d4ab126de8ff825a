//! Per-segment source selection for the six delivery methods.
//!
//! A segment that misses the local FDN cache can be processed on demand by
//! the local workers, or fetched from a node that holds it (a neighboring
//! FDN, or the central cloud, which holds everything). Each option has a
//! normal end-to-end delivery model; its robustness is the probability that
//! delivery lands at or before the segment deadline.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{transfer_model, CachePlan, Endpoint, NodeId, Segment, Topology, ViewerId};
use crate::stochastic::GaussianModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeliveryChoice {
    LocalCache,
    OnDemand,
    RemoteFetch { source: NodeId },
}

impl DeliveryChoice {
    /// Fixed tie-break rank: on-demand first, then remote sources by id.
    fn tie_rank(&self) -> u64 {
        match self {
            DeliveryChoice::LocalCache => 0,
            DeliveryChoice::OnDemand => 1,
            DeliveryChoice::RemoteFetch { source } => 2 + source.0 as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    CentralCloud,
    Cdn,
    FederatedCdn,
    IsolatedFdn,
    DeterministicFfdn,
    RobustFfdn,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::CentralCloud,
        MethodKind::Cdn,
        MethodKind::FederatedCdn,
        MethodKind::IsolatedFdn,
        MethodKind::DeterministicFfdn,
        MethodKind::RobustFfdn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::CentralCloud => "central-cloud",
            MethodKind::Cdn => "cdn",
            MethodKind::FederatedCdn => "federated-cdn",
            MethodKind::IsolatedFdn => "isolated-fdn",
            MethodKind::DeterministicFfdn => "deterministic-ffdn",
            MethodKind::RobustFfdn => "robust-ffdn",
        }
    }

    pub fn caches_at_edge(&self) -> bool {
        !matches!(self, MethodKind::CentralCloud)
    }

    pub fn federated(&self) -> bool {
        matches!(
            self,
            MethodKind::FederatedCdn | MethodKind::DeterministicFfdn | MethodKind::RobustFfdn
        )
    }

    pub fn on_demand(&self) -> bool {
        matches!(
            self,
            MethodKind::IsolatedFdn | MethodKind::DeterministicFfdn | MethodKind::RobustFfdn
        )
    }

    pub fn robustness_aware(&self) -> bool {
        matches!(
            self,
            MethodKind::FederatedCdn | MethodKind::IsolatedFdn | MethodKind::RobustFfdn
        )
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        let m = match norm.as_str() {
            "central-cloud" | "cloud" => MethodKind::CentralCloud,
            "cdn" => MethodKind::Cdn,
            "federated-cdn" | "f-cdn" | "fcdn" => MethodKind::FederatedCdn,
            "isolated-fdn" | "i-fdn" | "ifdn" => MethodKind::IsolatedFdn,
            "deterministic-ffdn" | "det-ffdn" | "deterministic" => MethodKind::DeterministicFfdn,
            "robust-ffdn" | "robust" => MethodKind::RobustFfdn,
            _ => return Err(PolicyError::UnknownMethod(s.to_string())),
        };
        Ok(m)
    }
}

/// One evaluated delivery option.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceEstimate {
    pub choice: DeliveryChoice,
    /// End-to-end delivery latency model.
    pub delivery_model: GaussianModel,
    /// `P(delivery latency <= deadline - now)`.
    pub robustness: f64,
}

impl ChoiceEstimate {
    fn new(choice: DeliveryChoice, delivery_model: GaussianModel, slack: f64) -> Self {
        ChoiceEstimate {
            choice,
            delivery_model,
            robustness: delivery_model.cdf_at(slack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("segment {index} of video {video} is not in the local cache")]
    NotCached { video: u32, index: u32 },
    #[error("node {0} has no workers for on-demand processing")]
    NoWorkers(NodeId),
    #[error("node {node} does not hold segment {index} of video {video}")]
    NotHeld {
        node: NodeId,
        video: u32,
        index: u32,
    },
    #[error("no link between {0} and {1}")]
    MissingLink(String, String),
    #[error("no feasible delivery option for segment {index} of video {video}")]
    Unservable { video: u32, index: u32 },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

/// Immutable snapshot a decision is made against.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub topology: &'a Topology,
    pub cache: &'a CachePlan,
    pub local_fdn: NodeId,
    pub viewer: ViewerId,
    pub now: f64,
    pub deadline: f64,
    /// Expected wait before a new on-demand job would start. Zero unless the
    /// scenario is queue-aware.
    pub on_demand_backlog: f64,
}

impl DecisionContext<'_> {
    pub fn slack(&self) -> f64 {
        self.deadline - self.now
    }

    fn hop(
        &self,
        segment: &Segment,
        a: Endpoint,
        b: Endpoint,
    ) -> Result<GaussianModel, PolicyError> {
        let link = self.topology.link_between(a, b).ok_or_else(|| {
            PolicyError::MissingLink(
                self.topology.endpoint_name(a).to_string(),
                self.topology.endpoint_name(b).to_string(),
            )
        })?;
        Ok(transfer_model(segment, self.topology.link(link)))
    }

    fn last_mile(&self, segment: &Segment) -> Result<GaussianModel, PolicyError> {
        self.hop(
            segment,
            Endpoint::Node(self.local_fdn),
            Endpoint::Viewer(self.viewer),
        )
    }

    fn holds(&self, node: NodeId, segment: &Segment) -> bool {
        node == self.topology.cloud() || self.cache.holds(node, segment.video, segment.index)
    }
}

/// Streaming a locally cached segment: one hop, FDN to viewer.
pub fn estimate_local(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    if !ctx.cache.holds(ctx.local_fdn, segment.video, segment.index) {
        return Err(PolicyError::NotCached {
            video: segment.video.0,
            index: segment.index,
        });
    }
    Ok(ChoiceEstimate::new(
        DeliveryChoice::LocalCache,
        ctx.last_mile(segment)?,
        ctx.slack(),
    ))
}

/// Processing on the local FDN, then one hop to the viewer.
pub fn estimate_on_demand(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    if ctx.topology.node(ctx.local_fdn).workers == 0 {
        return Err(PolicyError::NoWorkers(ctx.local_fdn));
    }
    let mut processing = segment.processing;
    if ctx.on_demand_backlog > 0.0 {
        processing = processing
            .shifted(ctx.on_demand_backlog)
            .expect("finite backlog");
    }
    Ok(ChoiceEstimate::new(
        DeliveryChoice::OnDemand,
        processing.convolve(&ctx.last_mile(segment)?),
        ctx.slack(),
    ))
}

/// Store-and-forward fetch: source to local FDN, then local FDN to viewer.
pub fn estimate_remote(
    segment: &Segment,
    source: NodeId,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    if !ctx.holds(source, segment) {
        return Err(PolicyError::NotHeld {
            node: source,
            video: segment.video.0,
            index: segment.index,
        });
    }
    let first = ctx.hop(
        segment,
        Endpoint::Node(source),
        Endpoint::Node(ctx.local_fdn),
    )?;
    Ok(ChoiceEstimate::new(
        DeliveryChoice::RemoteFetch { source },
        first.convolve(&ctx.last_mile(segment)?),
        ctx.slack(),
    ))
}

/// Direct single-hop delivery from the central cloud to the viewer.
pub fn estimate_cloud_direct(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    let cloud = ctx.topology.cloud();
    Ok(ChoiceEstimate::new(
        DeliveryChoice::RemoteFetch { source: cloud },
        ctx.hop(segment, Endpoint::Node(cloud), Endpoint::Viewer(ctx.viewer))?,
        ctx.slack(),
    ))
}

/// Which non-local options a method may consider.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSet {
    pub neighbors: bool,
    pub cloud: bool,
    pub on_demand: bool,
}

impl CandidateSet {
    pub const FULL: CandidateSet = CandidateSet {
        neighbors: true,
        cloud: true,
        on_demand: true,
    };
}

/// Every feasible non-local option in `set`. Options whose link is missing
/// or whose node has no workers are left out.
pub fn candidates(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
    set: CandidateSet,
) -> Vec<ChoiceEstimate> {
    let mut out = Vec::with_capacity(4);
    if set.on_demand {
        if let Ok(e) = estimate_on_demand(segment, ctx) {
            out.push(e);
        }
    }
    if set.neighbors {
        for n in ctx.topology.neighbors_of(ctx.local_fdn) {
            if ctx.cache.holds(n, segment.video, segment.index) {
                if let Ok(e) = estimate_remote(segment, n, ctx) {
                    out.push(e);
                }
            }
        }
    }
    if set.cloud {
        if let Ok(e) = estimate_remote(segment, ctx.topology.cloud(), ctx) {
            out.push(e);
        }
    }
    out
}

fn by_mean_then_rank(a: &ChoiceEstimate, b: &ChoiceEstimate) -> Ordering {
    a.delivery_model
        .mean()
        .total_cmp(&b.delivery_model.mean())
        .then(a.choice.tie_rank().cmp(&b.choice.tie_rank()))
}

/// Orders estimates best-first by robustness, then mean, then fixed rank.
pub fn robust_order(a: &ChoiceEstimate, b: &ChoiceEstimate) -> Ordering {
    b.robustness
        .total_cmp(&a.robustness)
        .then_with(|| by_mean_then_rank(a, b))
}

/// Orders estimates best-first by mean, then fixed rank.
pub fn deterministic_order(a: &ChoiceEstimate, b: &ChoiceEstimate) -> Ordering {
    by_mean_then_rank(a, b)
}

fn unservable(segment: &Segment) -> PolicyError {
    PolicyError::Unservable {
        video: segment.video.0,
        index: segment.index,
    }
}

fn select(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
    set: CandidateSet,
    order: fn(&ChoiceEstimate, &ChoiceEstimate) -> Ordering,
) -> Result<ChoiceEstimate, PolicyError> {
    if ctx.cache.holds(ctx.local_fdn, segment.video, segment.index) {
        return estimate_local(segment, ctx);
    }
    candidates(segment, ctx, set)
        .into_iter()
        .min_by(order)
        .ok_or_else(|| unservable(segment))
}

/// Robustness-maximizing selection over local cache, neighbors, cloud, and
/// on-demand processing. A local cache hit is taken unconditionally.
pub fn decide_robust(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    select(segment, ctx, CandidateSet::FULL, robust_order)
}

/// Same candidates as [`decide_robust`], picking the smallest expected
/// delivery time.
pub fn decide_deterministic(
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    select(segment, ctx, CandidateSet::FULL, deterministic_order)
}

/// Decision of `method` for one segment.
///
/// The central cloud method always streams straight from the cloud to the
/// viewer; its `RemoteFetch` is single-hop. Every other `RemoteFetch` is
/// relayed through the local FDN.
pub fn decide(
    method: MethodKind,
    segment: &Segment,
    ctx: &DecisionContext<'_>,
) -> Result<ChoiceEstimate, PolicyError> {
    match method {
        MethodKind::CentralCloud => estimate_cloud_direct(segment, ctx),
        MethodKind::Cdn => {
            if ctx.cache.holds_video(ctx.local_fdn, segment.video) {
                estimate_local(segment, ctx)
            } else {
                estimate_remote(segment, ctx.topology.cloud(), ctx)
            }
        }
        MethodKind::FederatedCdn => select(
            segment,
            ctx,
            CandidateSet {
                neighbors: true,
                cloud: true,
                on_demand: false,
            },
            robust_order,
        ),
        MethodKind::IsolatedFdn => select(
            segment,
            ctx,
            CandidateSet {
                neighbors: false,
                cloud: true,
                on_demand: true,
            },
            robust_order,
        ),
        MethodKind::DeterministicFfdn => decide_deterministic(segment, ctx),
        MethodKind::RobustFfdn => decide_robust(segment, ctx),
    }
}
