use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stochastic::GaussianModel;

use super::catalog::Segment;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ViewerId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node#{}", self.0)
    }
}

impl fmt::Display for ViewerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "viewer#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    CentralCloud,
    Fdn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    /// Workers available for on-demand processing; 0 disables it.
    #[serde(default)]
    pub workers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewerSpec {
    pub name: String,
    /// Name of the FDN this viewer is statically bound to.
    pub local_fdn: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Node(NodeId),
    Viewer(ViewerId),
}

/// A capacity-limited link between two endpoints.
///
/// Links are bidirectional and shared: both directions draw on the same
/// capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub endpoints: (Endpoint, Endpoint),
    pub propagation: GaussianModel,
    /// Bits per second. `f64::INFINITY` makes serialization instantaneous.
    pub capacity_bps: f64,
    /// Coefficient of variation of the size-dependent transfer term.
    pub serialization_cv: f64,
}

impl LinkSpec {
    pub fn new(
        a: Endpoint,
        b: Endpoint,
        propagation: GaussianModel,
        capacity_bps: f64,
        serialization_cv: f64,
    ) -> Result<Self, ModelError> {
        if capacity_bps.is_nan() || capacity_bps <= 0.0 {
            return Err(ModelError::InvalidLink(format!(
                "capacity must be > 0, got {capacity_bps}"
            )));
        }
        if propagation.mean() < 0.0 {
            return Err(ModelError::InvalidLink(format!(
                "propagation mean must be >= 0, got {}",
                propagation.mean()
            )));
        }
        if !serialization_cv.is_finite() || serialization_cv < 0.0 {
            return Err(ModelError::InvalidLink(format!(
                "serialization cv must be >= 0, got {serialization_cv}"
            )));
        }
        Ok(LinkSpec {
            endpoints: (a, b),
            propagation,
            capacity_bps,
            serialization_cv,
        })
    }

    /// Solo serialization time of `bits` on this link.
    pub fn serialization_time(&self, bits: u64) -> f64 {
        if bits == 0 || self.capacity_bps.is_infinite() {
            0.0
        } else {
            bits as f64 / self.capacity_bps
        }
    }
}

/// One-hop latency model of sending `segment` over `link`: propagation
/// convolved with a size-proportional serialization term.
pub fn transfer_model(segment: &Segment, link: &LinkSpec) -> GaussianModel {
    let serial = link.serialization_time(segment.size_bits);
    // serial >= 0 and cv >= 0, so construction cannot fail.
    let serialization = GaussianModel::new(serial, link.serialization_cv * serial)
        .expect("serialization term is finite and non-negative");
    link.propagation.convolve(&serialization)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub usize);

/// Resolved network: nodes, viewers, and links addressed by dense ids.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    viewers: Vec<ViewerSpec>,
    viewer_fdn: Vec<NodeId>,
    links: Vec<LinkSpec>,
    link_index: HashMap<(Endpoint, Endpoint), LinkId>,
    cloud: NodeId,
}

impl Topology {
    pub fn new(
        nodes: Vec<NodeSpec>,
        viewers: Vec<ViewerSpec>,
        links: Vec<LinkSpec>,
    ) -> Result<Self, ModelError> {
        let mut names = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if names
                .insert(n.name.clone(), Endpoint::Node(NodeId(i as u32)))
                .is_some()
            {
                return Err(ModelError::DuplicateName(n.name.clone()));
            }
        }
        let clouds: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::CentralCloud)
            .map(|(i, _)| i)
            .collect();
        let cloud = match clouds.as_slice() {
            [c] => NodeId(*c as u32),
            _ => return Err(ModelError::CloudCount(clouds.len())),
        };
        let mut viewer_fdn = Vec::with_capacity(viewers.len());
        for (i, v) in viewers.iter().enumerate() {
            if names
                .insert(v.name.clone(), Endpoint::Viewer(ViewerId(i as u32)))
                .is_some()
            {
                return Err(ModelError::DuplicateName(v.name.clone()));
            }
            match nodes.iter().position(|n| n.name == v.local_fdn) {
                Some(j) if nodes[j].kind == NodeKind::Fdn => viewer_fdn.push(NodeId(j as u32)),
                _ => return Err(ModelError::UnknownNode(v.local_fdn.clone())),
            }
        }
        let mut link_index = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            let (a, b) = l.endpoints;
            if a == b {
                return Err(ModelError::InvalidLink("self-loop".into()));
            }
            let check = |e: Endpoint| match e {
                Endpoint::Node(n) => (n.0 as usize) < nodes.len(),
                Endpoint::Viewer(v) => (v.0 as usize) < viewers.len(),
            };
            if !check(a) || !check(b) {
                return Err(ModelError::InvalidLink("endpoint out of range".into()));
            }
            let key = ordered(a, b);
            if link_index.insert(key, LinkId(i)).is_some() {
                return Err(ModelError::InvalidLink(format!(
                    "duplicate link between {:?} and {:?}",
                    a, b
                )));
            }
        }
        Ok(Topology {
            nodes,
            viewers,
            viewer_fdn,
            links,
            link_index,
            cloud,
        })
    }

    pub fn cloud(&self) -> NodeId {
        self.cloud
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.0 as usize]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(|i| NodeId(i as u32))
    }

    pub fn fdns(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids()
            .filter(move |&n| self.node(n).kind == NodeKind::Fdn)
    }

    pub fn viewers(&self) -> &[ViewerSpec] {
        &self.viewers
    }

    pub fn viewer(&self, id: ViewerId) -> &ViewerSpec {
        &self.viewers[id.0 as usize]
    }

    pub fn viewer_ids(&self) -> impl Iterator<Item = ViewerId> + '_ {
        (0..self.viewers.len()).map(|i| ViewerId(i as u32))
    }

    pub fn local_fdn_of(&self, viewer: ViewerId) -> NodeId {
        self.viewer_fdn[viewer.0 as usize]
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.0]
    }

    pub fn link_between(&self, a: Endpoint, b: Endpoint) -> Option<LinkId> {
        self.link_index.get(&ordered(a, b)).copied()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| NodeId(i as u32))
    }

    pub fn viewer_by_name(&self, name: &str) -> Option<ViewerId> {
        self.viewers
            .iter()
            .position(|v| v.name == name)
            .map(|i| ViewerId(i as u32))
    }

    pub fn endpoint_name(&self, e: Endpoint) -> &str {
        match e {
            Endpoint::Node(n) => &self.node(n).name,
            Endpoint::Viewer(v) => &self.viewer(v).name,
        }
    }

    /// True for links that touch no central cloud (FDN-FDN and FDN-viewer).
    pub fn is_edge_link(&self, link: &LinkSpec) -> bool {
        let (a, b) = link.endpoints;
        a != Endpoint::Node(self.cloud) && b != Endpoint::Node(self.cloud)
    }

    /// FDNs other than `fdn`, in id order.
    pub fn neighbors_of(&self, fdn: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.fdns().filter(move |&n| n != fdn)
    }

    /// Copy with edge-link propagation mean and stddev multiplied by `factor`.
    pub fn with_edge_latency_scaled(&self, factor: f64) -> Result<Topology, ModelError> {
        let mut t = self.clone();
        for i in 0..t.links.len() {
            if self.is_edge_link(&self.links[i]) {
                t.links[i].propagation = t.links[i].propagation.scaled(factor)?;
            }
        }
        Ok(t)
    }
}

fn ordered(a: Endpoint, b: Endpoint) -> (Endpoint, Endpoint) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
