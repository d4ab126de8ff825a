use std::fmt;

use serde::{Deserialize, Serialize};

use crate::stochastic::{GaussianModel, SeededRng};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VideoId(pub u32);

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One group of pictures: the unit of caching, processing, and transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub video: VideoId,
    pub index: u32,
    pub size_bits: u64,
    pub gop_duration: f64,
    pub processing: GaussianModel,
}

impl Segment {
    pub fn new(
        video: VideoId,
        index: u32,
        size_bits: u64,
        gop_duration: f64,
        processing: GaussianModel,
    ) -> Result<Self, ModelError> {
        if size_bits == 0 {
            return Err(ModelError::InvalidSegment("size must be > 0 bits".into()));
        }
        if !(gop_duration > 0.0 && gop_duration.is_finite()) {
            return Err(ModelError::InvalidSegment(format!(
                "gop duration must be > 0, got {gop_duration}"
            )));
        }
        if processing.mean() <= 0.0 {
            return Err(ModelError::InvalidSegment(format!(
                "processing mean must be > 0, got {}",
                processing.mean()
            )));
        }
        Ok(Segment {
            video,
            index,
            size_bits,
            gop_duration,
            processing,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoAsset {
    pub id: VideoId,
    pub segments: Vec<Segment>,
}

impl VideoAsset {
    pub fn new(id: VideoId, segments: Vec<Segment>) -> Result<Self, ModelError> {
        for (i, s) in segments.iter().enumerate() {
            if s.index as usize != i || s.video != id {
                return Err(ModelError::InvalidSegment(format!(
                    "video {id}: segment at position {i} has index {} of video {}",
                    s.index, s.video
                )));
            }
        }
        Ok(VideoAsset { id, segments })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// The full set of videos, addressed by `VideoId` (dense, 0-based).
///
/// Video ids double as popularity ranks: video 0 is the most popular.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    videos: Vec<VideoAsset>,
}

impl Catalog {
    pub fn new(videos: Vec<VideoAsset>) -> Result<Self, ModelError> {
        for (i, v) in videos.iter().enumerate() {
            if v.id.0 as usize != i {
                return Err(ModelError::InvalidSegment(format!(
                    "video at position {i} has id {}",
                    v.id
                )));
            }
        }
        Ok(Catalog { videos })
    }

    pub fn videos(&self) -> &[VideoAsset] {
        &self.videos
    }

    pub fn video(&self, id: VideoId) -> Option<&VideoAsset> {
        self.videos.get(id.0 as usize)
    }

    pub fn segment(&self, video: VideoId, index: u32) -> Option<&Segment> {
        self.video(video)?.segments.get(index as usize)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn total_segments(&self) -> usize {
        self.videos.iter().map(|v| v.len()).sum()
    }
}

/// Parameters of the synthetic catalog generator. All ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogParams {
    pub videos: u32,
    pub min_gops: u32,
    pub max_gops: u32,
    pub gop_duration: f64,
    pub min_size_bits: u64,
    pub max_size_bits: u64,
    pub min_processing_mean: f64,
    pub max_processing_mean: f64,
    /// Per-segment processing stddev as a fraction of its mean.
    pub processing_cv: f64,
    pub seed: u64,
}

impl Default for CatalogParams {
    fn default() -> Self {
        CatalogParams {
            videos: 20,
            min_gops: 10,
            max_gops: 60,
            gop_duration: 2.0,
            min_size_bits: 1_000_000,
            max_size_bits: 3_000_000,
            min_processing_mean: 0.15,
            max_processing_mean: 0.45,
            processing_cv: 0.15,
            seed: 2019,
        }
    }
}

/// Generates a catalog from `params`; identical parameters give an identical
/// catalog.
pub fn generate_catalog(params: &CatalogParams) -> Result<Catalog, ModelError> {
    if params.videos == 0 {
        return Err(ModelError::InvalidParams(
            "catalog needs at least one video".into(),
        ));
    }
    if params.min_gops == 0 || params.min_gops > params.max_gops {
        return Err(ModelError::InvalidParams(
            "gop range must satisfy 1 <= min <= max".into(),
        ));
    }
    if params.min_size_bits == 0 || params.min_size_bits > params.max_size_bits {
        return Err(ModelError::InvalidParams(
            "size range must satisfy 1 <= min <= max".into(),
        ));
    }
    if !(params.min_processing_mean > 0.0
        && params.min_processing_mean <= params.max_processing_mean)
    {
        return Err(ModelError::InvalidParams(
            "processing mean range must satisfy 0 < min <= max".into(),
        ));
    }
    if !(params.processing_cv >= 0.0 && params.processing_cv.is_finite()) {
        return Err(ModelError::InvalidParams(
            "processing cv must be >= 0".into(),
        ));
    }
    let mut rng = SeededRng::new(params.seed);
    let mut videos = Vec::with_capacity(params.videos as usize);
    for v in 0..params.videos {
        let id = VideoId(v);
        let span = (params.max_gops - params.min_gops) as u64 + 1;
        let gops = params.min_gops + rng.below(span) as u32;
        let mut segments = Vec::with_capacity(gops as usize);
        for index in 0..gops {
            let size_span = params.max_size_bits - params.min_size_bits + 1;
            let size_bits = params.min_size_bits + rng.below(size_span);
            let mean = params.min_processing_mean
                + rng.uniform() * (params.max_processing_mean - params.min_processing_mean);
            let processing = GaussianModel::new(mean, params.processing_cv * mean)?;
            segments.push(Segment::new(
                id,
                index,
                size_bits,
                params.gop_duration,
                processing,
            )?);
        }
        videos.push(VideoAsset::new(id, segments)?);
    }
    Catalog::new(videos)
}
