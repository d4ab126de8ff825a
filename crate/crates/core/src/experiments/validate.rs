//! Monte Carlo check of the analytic robustness of each delivery pipeline.
//!
//! Each grid cell describes a segment, a last-mile link, a second hop, and a
//! processing model. The analytic robustness comes from the policy
//! estimators; the empirical one from summing independent draws of every
//! hop's propagation and serialization terms and the processing time.

use rayon::prelude::*;
use serde::Serialize;

use super::ExperimentError;
use crate::model::{
    CachePlan, Catalog, Endpoint, LinkSpec, NodeCache, NodeId, NodeKind, NodeSpec, Segment,
    Topology, VideoAsset, VideoId, ViewerId, ViewerSpec,
};
use crate::policies::{estimate_local, estimate_on_demand, estimate_remote, DecisionContext};
use crate::stochastic::{mix_seed, GaussianModel, SeededRng};

pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub size_bits: u64,
    pub last_mile: LinkParams,
    pub hop: LinkParams,
    pub processing: GaussianModel,
    /// Time from decision to deadline.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkParams {
    pub propagation: GaussianModel,
    pub capacity_bps: f64,
    pub serialization_cv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineCheck {
    pub analytic: f64,
    pub empirical: f64,
}

impl PipelineCheck {
    pub fn deviation(&self) -> f64 {
        (self.analytic - self.empirical).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub cell: GridCell,
    pub local: PipelineCheck,
    pub on_demand: PipelineCheck,
    pub remote: PipelineCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mc_samples: usize,
    pub cells: Vec<CellReport>,
    pub max_deviation: f64,
}

/// `n` random cells with slack drawn uniformly from `[0, 5)` seconds.
pub fn random_grid(n: usize, seed: u64) -> Vec<GridCell> {
    let mut rng = SeededRng::new(seed);
    let mut range = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();
    (0..n)
        .map(|_| {
            let link = |r: &mut dyn FnMut(f64, f64) -> f64| LinkParams {
                propagation: GaussianModel::new(r(0.0, 2.0), r(0.0, 0.6)).unwrap(),
                capacity_bps: r(1e7, 1e9),
                serialization_cv: r(0.0, 0.3),
            };
            let last_mile = link(&mut range);
            let hop = link(&mut range);
            let processing = GaussianModel::new(range(0.1, 2.0), range(0.0, 0.5)).unwrap();
            let size_bits = range(1e6, 2e7) as u64;
            let slack = range(0.0, 5.0);
            GridCell {
                size_bits,
                last_mile,
                hop,
                processing,
                slack,
            }
        })
        .collect()
}

const LOCAL: NodeId = NodeId(1);
const REMOTE: NodeId = NodeId(2);
const VIEWER: ViewerId = ViewerId(0);

struct CellWorld {
    topology: Topology,
    cache: CachePlan,
    segment: Segment,
}

fn cell_world(cell: &GridCell) -> Result<CellWorld, ExperimentError> {
    let node = |name: &str, kind, workers| NodeSpec {
        name: name.into(),
        kind,
        workers,
    };
    let nodes = vec![
        node("cloud", NodeKind::CentralCloud, 0),
        node("local", NodeKind::Fdn, 1),
        node("remote", NodeKind::Fdn, 1),
    ];
    let viewers = vec![ViewerSpec {
        name: "viewer".into(),
        local_fdn: "local".into(),
    }];
    let link = |a, b, p: &LinkParams| {
        LinkSpec::new(a, b, p.propagation, p.capacity_bps, p.serialization_cv)
    };
    let links = vec![
        link(
            Endpoint::Node(LOCAL),
            Endpoint::Viewer(VIEWER),
            &cell.last_mile,
        )?,
        link(Endpoint::Node(REMOTE), Endpoint::Node(LOCAL), &cell.hop)?,
    ];
    let topology = Topology::new(nodes, viewers, links)?;
    let segment = Segment::new(VideoId(0), 0, cell.size_bits, 2.0, cell.processing)?;
    let catalog = Catalog::new(vec![VideoAsset::new(VideoId(0), vec![segment.clone()])?])?;
    let mut held = NodeCache::empty(&catalog);
    held.insert(VideoId(0), 0)?;
    let mut cache = CachePlan::new();
    cache.set_node(LOCAL, held.clone());
    cache.set_node(REMOTE, held);
    Ok(CellWorld {
        topology,
        cache,
        segment,
    })
}

/// One realization of a hop: propagation draw plus size-dependent draw.
fn sample_hop(p: &LinkParams, bits: u64, rng: &mut SeededRng) -> f64 {
    let prop = p.propagation.mean() + p.propagation.stddev() * rng.standard_normal();
    let ser = if p.capacity_bps.is_infinite() {
        0.0
    } else {
        let m = bits as f64 / p.capacity_bps;
        m + p.serialization_cv * m * rng.standard_normal()
    };
    prop + ser
}

fn check_cell(
    cell: &GridCell,
    mc_samples: usize,
    seed: u64,
) -> Result<CellReport, ExperimentError> {
    let w = cell_world(cell)?;
    let ctx = DecisionContext {
        topology: &w.topology,
        cache: &w.cache,
        local_fdn: LOCAL,
        viewer: VIEWER,
        now: 0.0,
        deadline: cell.slack,
        on_demand_backlog: 0.0,
    };
    let local = estimate_local(&w.segment, &ctx).expect("local copy exists");
    let on_demand = estimate_on_demand(&w.segment, &ctx).expect("local workers exist");
    let remote = estimate_remote(&w.segment, REMOTE, &ctx).expect("remote copy exists");

    let mut rng = SeededRng::new(seed);
    let (mut hits_l, mut hits_o, mut hits_r) = (0usize, 0usize, 0usize);
    let p = cell.processing;
    for _ in 0..mc_samples {
        // Fresh draws per pipeline so the three estimates are independent.
        let l = sample_hop(&cell.last_mile, cell.size_bits, &mut rng);
        hits_l += (l <= cell.slack) as usize;
        let proc = p.mean() + p.stddev() * rng.standard_normal();
        let o = proc + sample_hop(&cell.last_mile, cell.size_bits, &mut rng);
        hits_o += (o <= cell.slack) as usize;
        let r = sample_hop(&cell.hop, cell.size_bits, &mut rng)
            + sample_hop(&cell.last_mile, cell.size_bits, &mut rng);
        hits_r += (r <= cell.slack) as usize;
    }
    let n = mc_samples as f64;
    let check = |analytic: f64, hits: usize| PipelineCheck {
        analytic,
        empirical: hits as f64 / n,
    };
    Ok(CellReport {
        cell: cell.clone(),
        local: check(local.robustness, hits_l),
        on_demand: check(on_demand.robustness, hits_o),
        remote: check(remote.robustness, hits_r),
    })
}

/// Compares analytic and empirical robustness on every cell.
pub fn validate_robustness(
    cells: &[GridCell],
    mc_samples: usize,
    seed: u64,
) -> Result<ValidationReport, ExperimentError> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(ExperimentError::InvalidSpec(format!(
            "at least {MIN_MC_SAMPLES} Monte Carlo samples are required, got {mc_samples}"
        )));
    }
    let reports = cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| check_cell(c, mc_samples, mix_seed(seed, &[i as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let max_deviation = reports
        .iter()
        .flat_map(|r| [r.local, r.on_demand, r.remote])
        .map(|c| c.deviation())
        .fold(0.0, f64::max);
    Ok(ValidationReport {
        mc_samples,
        cells: reports,
        max_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: f64, s: f64) -> GaussianModel {
        GaussianModel::new(m, s).unwrap()
    }

    fn instant(m: f64, s: f64) -> LinkParams {
        LinkParams {
            propagation: g(m, s),
            capacity_bps: f64::INFINITY,
            serialization_cv: 0.0,
        }
    }

    #[test]
    fn slack_at_mean_is_one_half() {
        let cell = GridCell {
            size_bits: 1_000_000,
            last_mile: instant(1.0, 0.3),
            hop: instant(0.0, 0.3),
            processing: g(0.5, 0.4),
            slack: 1.0,
        };
        let r = validate_robustness(&[cell], 100_000, 3).unwrap();
        let c = &r.cells[0];
        assert!((c.local.analytic - 0.5).abs() < 1e-12);
        // Hop has zero mean, so remote has the same mean as local.
        assert!((c.remote.analytic - 0.5).abs() < 1e-12);
        assert!(r.max_deviation <= 0.01, "{r:?}");
    }

    #[test]
    fn degenerate_models_are_exact() {
        let cell = GridCell {
            size_bits: 1_000_000,
            last_mile: instant(1.0, 0.0),
            hop: instant(0.5, 0.0),
            processing: g(0.2, 0.0),
            slack: 1.3,
        };
        let r = validate_robustness(&[cell], 10_000, 1).unwrap();
        let c = &r.cells[0];
        assert_eq!((c.local.analytic, c.local.empirical), (1.0, 1.0));
        assert_eq!((c.on_demand.analytic, c.on_demand.empirical), (1.0, 1.0));
        assert_eq!((c.remote.analytic, c.remote.empirical), (0.0, 0.0));
        assert_eq!(r.max_deviation, 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(validate_robustness(&random_grid(1, 0), 9_999, 0).is_err());
    }

    #[test]
    fn grid_is_seeded() {
        assert_eq!(random_grid(5, 8), random_grid(5, 8));
        assert_ne!(random_grid(5, 8), random_grid(5, 9));
    }
}
