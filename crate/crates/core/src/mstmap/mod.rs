//! Multi-scale spatio-temporal maps from per-region color traces.
//!
//! Flow: [`RegionTraceSet`] -> [`RegionTraceSet::resample`] ->
//! [`build_mstmaps`] -> optional [`color_transform`] -> [`normalize_rows`].
//! [`prepare_maps`] runs the whole chain.

mod color;
pub mod io;
mod map;
mod trace;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use color::{color_transform, ColorSpace};
pub use map::{build_mstmaps, enumerate_subsets, normalize_rows, MstMap, MAX_REGIONS};
pub use trace::{Label, RegionTraceSet};

#[derive(Debug, Error)]
pub enum MstMapError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("at least 2 frames are required, got {0}")]
    TooFewFrames(usize),
    #[error("region count {0} outside 1..={max}", max = MAX_REGIONS)]
    RegionCount(usize),
    #[error("trace set has no face regions")]
    EmptyFaceRegions,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("unknown color space {0:?} (expected RGB, G, YUV, CHROM or POS)")]
    UnknownColorSpace(String),
    #[error("malformed map file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl MstMapError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        MstMapError::Io { path: path.to_path_buf(), source }
    }
}

/// How raw traces become model inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct MapOptions {
    pub target_fps: f64,
    /// Clip length in seconds; the first `seconds` of each recording are
    /// kept and resampled to `target_fps * seconds` frames.
    pub seconds: f64,
    pub color_space: ColorSpace,
    pub replicate_channels: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { target_fps: 30.0, seconds: 10.0, color_space: ColorSpace::Rgb, replicate_channels: false }
    }
}

impl MapOptions {
    pub fn frames(&self) -> usize {
        (self.target_fps * self.seconds).round() as usize
    }
}

/// Normalized face and background maps for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MapPair {
    pub face: MstMap,
    pub bg: Option<MstMap>,
}

/// Crop, resample, build, transform, and normalize one sample.
pub fn prepare_maps(set: &RegionTraceSet, opts: &MapOptions) -> Result<MapPair, MstMapError> {
    let duration = set.frames() as f64 / set.fps;
    let clip = if opts.seconds + 1e-9 < duration { set.crop_seconds(opts.seconds)? } else { set.clone() };
    let resampled = clip.resample(opts.target_fps, opts.frames())?;
    let (face, bg) = build_mstmaps(&resampled)?;
    let finish = |m: MstMap| -> Result<MstMap, MstMapError> {
        Ok(normalize_rows(&color_transform(&m, opts.color_space, opts.replicate_channels)?))
    };
    Ok(MapPair { face: finish(face)?, bg: bg.map(finish).transpose()? })
}
