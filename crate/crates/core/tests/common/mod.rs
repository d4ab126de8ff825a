//! Randomized decision contexts shared by the integration tests.

#![allow(dead_code)]

use ffdn::model::{
    CachePlan, Catalog, Endpoint, LinkSpec, NodeCache, NodeId, NodeKind, NodeSpec, Segment,
    Topology, VideoAsset, VideoId, ViewerId, ViewerSpec,
};
use ffdn::policies::DecisionContext;
use ffdn::stochastic::{GaussianModel, SeededRng};

pub const LOCAL: NodeId = NodeId(1);
pub const VIEWER: ViewerId = ViewerId(0);

/// A small world around one segment: cloud, local FDN, up to three
/// neighbors, and a random subset of links and cache holdings.
#[derive(Debug, Clone)]
pub struct Case {
    pub topology: Topology,
    pub cache: CachePlan,
    pub segment: Segment,
    pub deadline: f64,
}

impl Case {
    pub fn ctx(&self) -> DecisionContext<'_> {
        DecisionContext {
            topology: &self.topology,
            cache: &self.cache,
            local_fdn: LOCAL,
            viewer: VIEWER,
            now: 0.0,
            deadline: self.deadline,
            on_demand_backlog: 0.0,
        }
    }
}

fn gaussian(rng: &mut SeededRng, max_mean: f64, max_sd: f64) -> GaussianModel {
    let mean = max_mean * rng.uniform();
    // Degenerate models show up often enough to exercise the step CDF.
    let sd = if rng.uniform() < 0.15 {
        0.0
    } else {
        max_sd * rng.uniform()
    };
    GaussianModel::new(mean, sd).unwrap()
}

fn link(rng: &mut SeededRng, a: Endpoint, b: Endpoint) -> LinkSpec {
    let capacity = if rng.uniform() < 0.1 {
        f64::INFINITY
    } else {
        1e7 + 1e9 * rng.uniform()
    };
    LinkSpec::new(a, b, gaussian(rng, 2.0, 0.6), capacity, 0.3 * rng.uniform()).unwrap()
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = SeededRng::new(seed);
    let fdns = 1 + rng.below(4) as u32;
    let mut nodes = vec![NodeSpec {
        name: "cloud".into(),
        kind: NodeKind::CentralCloud,
        workers: 0,
    }];
    for i in 0..fdns {
        nodes.push(NodeSpec {
            name: format!("fdn{i}"),
            kind: NodeKind::Fdn,
            workers: rng.below(4) as u32,
        });
    }
    let viewers = vec![ViewerSpec {
        name: "v".into(),
        local_fdn: "fdn0".into(),
    }];
    let cloud = Endpoint::Node(NodeId(0));
    let local = Endpoint::Node(LOCAL);
    let mut links = Vec::new();
    let mut maybe = |rng: &mut SeededRng, p: f64, a, b| {
        if rng.uniform() < p {
            links.push(link(rng, a, b));
        }
    };
    maybe(&mut rng, 0.95, local, Endpoint::Viewer(VIEWER));
    maybe(&mut rng, 0.9, cloud, local);
    maybe(&mut rng, 0.9, cloud, Endpoint::Viewer(VIEWER));
    for n in 2..=fdns {
        maybe(&mut rng, 0.85, Endpoint::Node(NodeId(n)), local);
    }
    let topology = Topology::new(nodes, viewers, links).unwrap();

    let segment = Segment::new(
        VideoId(0),
        0,
        1 + rng.below(20_000_000),
        2.0,
        GaussianModel::new(0.05 + 2.0 * rng.uniform(), 0.5 * rng.uniform()).unwrap(),
    )
    .unwrap();
    let catalog = Catalog::new(vec![
        VideoAsset::new(VideoId(0), vec![segment.clone()]).unwrap()
    ])
    .unwrap();
    let mut cache = CachePlan::new();
    for n in 1..=fdns {
        let mut held = NodeCache::empty(&catalog);
        if rng.uniform() < 0.4 {
            held.insert(VideoId(0), 0).unwrap();
        }
        cache.set_node(NodeId(n), held);
    }
    let deadline = 6.0 * rng.uniform();
    Case {
        topology,
        cache,
        segment,
        deadline,
    }
}
