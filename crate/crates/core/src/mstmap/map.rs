use super::{MstMapError, RegionTraceSet};

/// Largest region count accepted by [`enumerate_subsets`].
pub const MAX_REGIONS: usize = 16;

/// Multi-scale spatio-temporal map: one row per non-empty region subset,
/// `t` columns (frames) and `channels` values per cell, stored row-major
/// as `values[(row * t + frame) * channels + channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MstMap {
    pub rows: usize,
    pub t: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub normalized: bool,
    /// Row -> region bitmask (bit `i` set when region `i` is in the subset).
    pub subset_index: Vec<u32>,
}

impl MstMap {
    pub fn get(&self, row: usize, frame: usize, channel: usize) -> f64 {
        self.values[(row * self.t + frame) * self.channels + channel]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.t, self.channels)
    }

    /// Values as `f32` in storage order.
    pub fn values_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    /// Vertically stacks two maps with matching `t` and channel count.
    /// Used by the single-branch "face + background in one map" variant.
    pub fn stack(&self, below: &MstMap) -> Result<MstMap, MstMapError> {
        if self.t != below.t || self.channels != below.channels {
            return Err(MstMapError::InvalidTrace(format!(
                "cannot stack maps {:?} and {:?}",
                self.shape(),
                below.shape()
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&below.values);
        let shift = 32 - self.subset_index.iter().map(|m| m.leading_zeros()).min().unwrap_or(32);
        let mut subset_index = self.subset_index.clone();
        subset_index.extend(below.subset_index.iter().map(|m| m << shift));
        Ok(MstMap {
            rows: self.rows + below.rows,
            t: self.t,
            channels: self.channels,
            values,
            normalized: self.normalized && below.normalized,
            subset_index,
        })
    }
}

/// All non-empty subsets of `k` regions as bitmasks, ascending.
pub fn enumerate_subsets(k: usize) -> Result<Vec<u32>, MstMapError> {
    if !(1..=MAX_REGIONS).contains(&k) {
        return Err(MstMapError::RegionCount(k));
    }
    Ok((1..(1u32 << k)).collect())
}

/// Averages region traces over every non-empty subset.
fn subset_map(traces: &[Vec<[f64; 3]>], frames: usize) -> Result<MstMap, MstMapError> {
    let subsets = enumerate_subsets(traces.len())?;
    let mut values = Vec::with_capacity(subsets.len() * frames * 3);
    for &mask in &subsets {
        let members: Vec<&Vec<[f64; 3]>> =
            traces.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, t)| t).collect();
        let inv = 1.0 / members.len() as f64;
        for f in 0..frames {
            for c in 0..3 {
                let sum: f64 = members.iter().map(|t| t[f][c]).sum();
                values.push(sum * inv);
            }
        }
    }
    Ok(MstMap { rows: subsets.len(), t: frames, channels: 3, values, normalized: false, subset_index: subsets })
}

/// Builds the face and background maps from (already resampled) traces.
///
/// Each row is the unweighted mean of its member regions' channel means.
/// The background map is `None` when the set has no background regions.
pub fn build_mstmaps(set: &RegionTraceSet) -> Result<(MstMap, Option<MstMap>), MstMapError> {
    set.validate()?;
    let frames = set.frames();
    let face = subset_map(&set.face_traces, frames)?;
    let bg = if set.bg_traces.is_empty() { None } else { Some(subset_map(&set.bg_traces, frames)?) };
    Ok((face, bg))
}

/// Min-max scales every row/channel signal to `[0, 1]`; constant signals
/// become 0.5.
pub fn normalize_rows(map: &MstMap) -> MstMap {
    let mut out = map.clone();
    let (t, c) = (map.t, map.channels);
    for row in 0..map.rows {
        for ch in 0..c {
            let idx = |f: usize| (row * t + f) * c + ch;
            let (lo, hi) = (0..t).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                let v = map.values[idx(f)];
                (lo.min(v), hi.max(v))
            });
            let range = hi - lo;
            for f in 0..t {
                out.values[idx(f)] = if range > 0.0 { (map.values[idx(f)] - lo) / range } else { 0.5 };
            }
        }
    }
    out.normalized = true;
    out
}
