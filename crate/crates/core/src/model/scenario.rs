//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [[nodes]]
//! name = "cloud"
//! kind = "central_cloud"
//!
//! [[nodes]]
//! name = "fdn0"
//! kind = "fdn"
//! workers = 3
//!
//! [[viewers]]
//! name = "viewers0"
//! local_fdn = "fdn0"
//!
//! [[links]]
//! a = "fdn0"
//! b = "viewers0"
//! capacity_bps = 3e8
//! serialization_cv = 0.1
//! propagation = { mean = 1.5, stddev = 0.15 }
//!
//! [catalog]      # see CatalogParams
//! [cache]        # see CacheParams
//! [workload]     # see TraceParams
//! [flags]        # queue_aware, just_in_time
//! ```
//!
//! Links are undirected; `capacity_bps = inf` disables serialization delay.

use serde::{Deserialize, Serialize};

use crate::stochastic::GaussianModel;

use super::cache::CacheGranularity;
use super::catalog::CatalogParams;
use super::topology::{Endpoint, LinkSpec, NodeKind, NodeSpec, Topology, ViewerSpec};
use super::workload::{Popularity, TraceParams};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    pub propagation: GaussianModel,
    pub capacity_bps: f64,
    #[serde(default = "default_cv")]
    pub serialization_cv: f64,
}

fn default_cv() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheParams {
    /// Fraction of catalog segments each FDN pre-caches.
    pub fraction: f64,
    pub granularity: CacheGranularity,
    pub popularity: Popularity,
    /// Fraction used by the CDN method, always cached per whole video.
    pub cdn_fraction: f64,
}

impl Default for CacheParams {
    fn default() -> Self {
        CacheParams {
            fraction: 0.30,
            granularity: CacheGranularity::PerSegment,
            popularity: Popularity::Zipf { s: 0.8 },
            cdn_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFlags {
    /// Shift the on-demand estimate by the local worker backlog.
    pub queue_aware: bool,
    /// Decide each segment one GOP before its deadline instead of at arrival.
    pub just_in_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub viewers: Vec<ViewerSpec>,
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub catalog: CatalogParams,
    #[serde(default)]
    pub cache: CacheParams,
    #[serde(default)]
    pub workload: TraceParams,
    #[serde(default)]
    pub flags: ScenarioFlags,
}

fn gaussian(mean: f64, stddev: f64) -> GaussianModel {
    GaussianModel::new(mean, stddev).expect("valid default model")
}

impl Default for Scenario {
    /// Three FDNs plus a central cloud; all viewers attach to `fdn0`, the
    /// other two FDNs act as caching neighbors.
    ///
    /// The last mile is the slowest edge hop and is shared by every stream,
    /// so it is the link that congests as the workload grows. Cloud links
    /// are narrow wide-area shares.
    fn default() -> Self {
        let node = |name: &str, kind, workers| NodeSpec {
            name: name.into(),
            kind,
            workers,
        };
        let link = |a: &str, b: &str, mean, stddev, capacity_bps| LinkConfig {
            a: a.into(),
            b: b.into(),
            propagation: gaussian(mean, stddev),
            capacity_bps,
            serialization_cv: 0.1,
        };
        Scenario {
            nodes: vec![
                node("cloud", NodeKind::CentralCloud, 0),
                node("fdn0", NodeKind::Fdn, 3),
                node("fdn1", NodeKind::Fdn, 3),
                node("fdn2", NodeKind::Fdn, 3),
            ],
            viewers: vec![ViewerSpec {
                name: "viewers0".into(),
                local_fdn: "fdn0".into(),
            }],
            links: vec![
                link("fdn0", "viewers0", 1.5, 0.15, 3e8),
                link("fdn1", "fdn0", 0.2, 0.25, 1e9),
                link("fdn2", "fdn0", 0.2, 0.25, 1e9),
                link("fdn1", "fdn2", 0.2, 0.25, 1e9),
                link("cloud", "fdn0", 2.0, 0.8, 3.75e6),
                link("cloud", "fdn1", 2.0, 0.8, 3.75e6),
                link("cloud", "fdn2", 2.0, 0.8, 3.75e6),
                link("cloud", "viewers0", 2.0, 0.8, 1.5e7),
            ],
            catalog: CatalogParams::default(),
            cache: CacheParams::default(),
            workload: TraceParams::default(),
            flags: ScenarioFlags::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| ModelError::InvalidScenario(e.to_string()))?;
        s.topology()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Resolves names into a [`Topology`].
    pub fn topology(&self) -> Result<Topology, ModelError> {
        let lookup = |name: &str| -> Result<Endpoint, ModelError> {
            if let Some(i) = self.nodes.iter().position(|n| n.name == name) {
                return Ok(Endpoint::Node(super::NodeId(i as u32)));
            }
            if let Some(i) = self.viewers.iter().position(|v| v.name == name) {
                return Ok(Endpoint::Viewer(super::ViewerId(i as u32)));
            }
            Err(ModelError::UnknownNode(name.to_string()))
        };
        let links = self
            .links
            .iter()
            .map(|l| {
                LinkSpec::new(
                    lookup(&l.a)?,
                    lookup(&l.b)?,
                    l.propagation,
                    l.capacity_bps,
                    l.serialization_cv,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Topology::new(self.nodes.clone(), self.viewers.clone(), links)
    }
}
