use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stochastic::{mix_seed, SeededRng};

use super::catalog::{Catalog, VideoId};
use super::topology::{NodeId, Topology};
use super::workload::Popularity;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheGranularity {
    PerSegment,
    PerVideo,
}

/// Pre-processed segments held by one node, indexed `[video][segment]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCache {
    held: Vec<Vec<bool>>,
    count: usize,
}

impl NodeCache {
    pub fn empty(catalog: &Catalog) -> Self {
        NodeCache {
            held: catalog
                .videos()
                .iter()
                .map(|v| vec![false; v.len()])
                .collect(),
            count: 0,
        }
    }

    pub fn contains(&self, video: VideoId, index: u32) -> bool {
        self.held
            .get(video.0 as usize)
            .and_then(|v| v.get(index as usize))
            .copied()
            .unwrap_or(false)
    }

    /// Whether every segment of `video` is held.
    pub fn holds_video(&self, video: VideoId) -> bool {
        self.held
            .get(video.0 as usize)
            .is_some_and(|v| v.iter().all(|&b| b))
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn insert(&mut self, video: VideoId, index: u32) -> Result<bool, ModelError> {
        let slot = self
            .held
            .get_mut(video.0 as usize)
            .and_then(|v| v.get_mut(index as usize))
            .ok_or(ModelError::NotInCatalog(video.0, index))?;
        let fresh = !*slot;
        *slot = true;
        self.count += fresh as usize;
        Ok(fresh)
    }

    pub fn segments(&self) -> impl Iterator<Item = (VideoId, u32)> + '_ {
        self.held.iter().enumerate().flat_map(|(v, segs)| {
            segs.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(move |(i, _)| (VideoId(v as u32), i as u32))
        })
    }
}

/// Per-node cache contents. The central cloud holds everything implicitly
/// and is never stored here.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CachePlan {
    nodes: BTreeMap<NodeId, NodeCache>,
}

impl CachePlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, node: NodeId) -> Option<&NodeCache> {
        self.nodes.get(&node)
    }

    pub fn set_node(&mut self, node: NodeId, cache: NodeCache) {
        self.nodes.insert(node, cache);
    }

    pub fn holds(&self, node: NodeId, video: VideoId, index: u32) -> bool {
        self.nodes
            .get(&node)
            .is_some_and(|c| c.contains(video, index))
    }

    pub fn holds_video(&self, node: NodeId, video: VideoId) -> bool {
        self.nodes.get(&node).is_some_and(|c| c.holds_video(video))
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeCache)> {
        self.nodes.iter().map(|(&n, c)| (n, c))
    }
}

/// Efraimidis-Spirakis weighted random order: sort by `ln(u) / w`
/// descending. Prefixes of the order are weighted samples without
/// replacement.
fn weighted_order(weights: &[f64], rng: &mut SeededRng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            // uniform() is in [0, 1); shift to (0, 1] so ln is finite.
            let u = 1.0 - rng.uniform();
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Fills every FDN's cache with a popularity-biased random selection.
///
/// Each FDN draws from its own sub-seed, so neighbors hold different content.
/// For a fixed seed the selection order does not depend on `fraction`, so
/// plans at increasing fractions are nested.
pub fn build_cache_plan(
    topology: &Topology,
    catalog: &Catalog,
    fraction: f64,
    granularity: CacheGranularity,
    bias: Popularity,
    seed: u64,
) -> Result<CachePlan, ModelError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(ModelError::InvalidParams(format!(
            "cache fraction must be in [0, 1], got {fraction}"
        )));
    }
    let total = catalog.total_segments();
    let budget = ((fraction * total as f64).floor() as usize).min(total);
    let mut plan = CachePlan::new();
    for fdn in topology.fdns() {
        let mut rng = SeededRng::new(mix_seed(seed, &[fdn.0 as u64]));
        let mut cache = NodeCache::empty(catalog);
        match granularity {
            CacheGranularity::PerSegment => {
                let keys: Vec<(VideoId, u32)> = catalog
                    .videos()
                    .iter()
                    .flat_map(|v| (0..v.len() as u32).map(move |i| (v.id, i)))
                    .collect();
                let weights: Vec<f64> = keys
                    .iter()
                    .map(|(v, _)| bias.weight(v.0 as usize))
                    .collect();
                for k in weighted_order(&weights, &mut rng).into_iter().take(budget) {
                    cache.insert(keys[k].0, keys[k].1)?;
                }
            }
            CacheGranularity::PerVideo => {
                let weights: Vec<f64> = (0..catalog.len()).map(|r| bias.weight(r)).collect();
                for v in weighted_order(&weights, &mut rng) {
                    if cache.len() >= budget {
                        break;
                    }
                    let video = &catalog.videos()[v];
                    for i in 0..video.len() as u32 {
                        cache.insert(video.id, i)?;
                    }
                }
            }
        }
        plan.set_node(fdn, cache);
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::generate_catalog;
    use crate::model::Scenario;

    fn fixtures() -> (Topology, Catalog) {
        let s = Scenario::default();
        (s.topology().unwrap(), generate_catalog(&s.catalog).unwrap())
    }

    const ZIPF: Popularity = Popularity::Zipf { s: 0.8 };

    #[test]
    fn zero_fraction_is_empty() {
        let (t, c) = fixtures();
        for g in [CacheGranularity::PerSegment, CacheGranularity::PerVideo] {
            let p = build_cache_plan(&t, &c, 0.0, g, ZIPF, 1).unwrap();
            for fdn in t.fdns() {
                assert!(p.node(fdn).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn full_fraction_holds_everything() {
        let (t, c) = fixtures();
        for g in [CacheGranularity::PerSegment, CacheGranularity::PerVideo] {
            let p = build_cache_plan(&t, &c, 1.0, g, ZIPF, 1).unwrap();
            for fdn in t.fdns() {
                assert_eq!(p.node(fdn).unwrap().len(), c.total_segments());
                for v in c.videos() {
                    assert!(p.holds_video(fdn, v.id));
                }
            }
        }
    }

    #[test]
    fn thirty_percent_per_segment_count() {
        let (t, c) = fixtures();
        let p = build_cache_plan(&t, &c, 0.30, CacheGranularity::PerSegment, ZIPF, 9).unwrap();
        let expected = (0.30 * c.total_segments() as f64).floor() as usize;
        for fdn in t.fdns() {
            assert_eq!(p.node(fdn).unwrap().len(), expected);
            assert_eq!(p.node(fdn).unwrap().segments().count(), expected);
        }
        assert!(p.node(t.cloud()).is_none());
    }

    #[test]
    fn neighbors_hold_different_content() {
        let (t, c) = fixtures();
        let p = build_cache_plan(&t, &c, 0.30, CacheGranularity::PerSegment, ZIPF, 9).unwrap();
        let fdns: Vec<NodeId> = t.fdns().collect();
        assert_ne!(p.node(fdns[0]), p.node(fdns[1]));
    }

    #[test]
    fn plans_are_nested_in_fraction() {
        let (t, c) = fixtures();
        let lo = build_cache_plan(&t, &c, 0.3, CacheGranularity::PerSegment, ZIPF, 4).unwrap();
        let hi = build_cache_plan(&t, &c, 0.6, CacheGranularity::PerSegment, ZIPF, 4).unwrap();
        for (n, cache) in lo.iter() {
            for (v, i) in cache.segments() {
                assert!(hi.holds(n, v, i));
            }
        }
    }

    #[test]
    fn per_video_meets_budget_with_whole_videos() {
        let (t, c) = fixtures();
        let p = build_cache_plan(&t, &c, 0.75, CacheGranularity::PerVideo, ZIPF, 3).unwrap();
        let budget = (0.75 * c.total_segments() as f64).floor() as usize;
        for fdn in t.fdns() {
            let cache = p.node(fdn).unwrap();
            assert!(cache.len() >= budget);
            for v in c.videos() {
                let n = (0..v.len() as u32)
                    .filter(|&i| cache.contains(v.id, i))
                    .count();
                assert!(n == 0 || n == v.len());
            }
        }
    }

    #[test]
    fn popularity_bias_prefers_hot_videos() {
        let (t, c) = fixtures();
        let strong = Popularity::Zipf { s: 2.0 };
        let p = build_cache_plan(&t, &c, 0.2, CacheGranularity::PerSegment, strong, 8).unwrap();
        let fdn = t.fdns().next().unwrap();
        let cache = p.node(fdn).unwrap();
        let frac = |v: usize| {
            let video = &c.videos()[v];
            (0..video.len() as u32)
                .filter(|&i| cache.contains(video.id, i))
                .count() as f64
                / video.len() as f64
        };
        assert!(frac(0) > frac(c.len() - 1));
    }

    #[test]
    fn rejects_out_of_range_fraction() {
        let (t, c) = fixtures();
        assert!(build_cache_plan(&t, &c, 1.5, CacheGranularity::PerSegment, ZIPF, 1).is_err());
        assert!(build_cache_plan(&t, &c, -0.1, CacheGranularity::PerSegment, ZIPF, 1).is_err());
    }
}
