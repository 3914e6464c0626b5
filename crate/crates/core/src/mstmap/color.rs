//! Color-space transforms applied to raw (un-normalized) RGB maps.

use std::fmt;
use std::str::FromStr;

use super::{MstMap, MstMapError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    Rgb,
    /// Green channel only.
    G,
    /// BT.601 full-range.
    Yuv,
    /// Chrominance projection `X - (std X / std Y) Y` on mean-normalized RGB.
    Chrom,
    /// Plane-orthogonal-to-skin projection `S1 + (std S1 / std S2) S2`.
    Pos,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 5] = [ColorSpace::Rgb, ColorSpace::G, ColorSpace::Yuv, ColorSpace::Chrom, ColorSpace::Pos];

    /// Channels produced before optional replication.
    pub fn native_channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::Yuv => 3,
            ColorSpace::G | ColorSpace::Chrom | ColorSpace::Pos => 1,
        }
    }

    /// Channels produced with the given replication setting.
    pub fn channels(self, replicate: bool) -> usize {
        if replicate {
            3
        } else {
            self.native_channels()
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::G => "G",
            ColorSpace::Yuv => "YUV",
            ColorSpace::Chrom => "CHROM",
            ColorSpace::Pos => "POS",
        })
    }
}

impl FromStr for ColorSpace {
    type Err = MstMapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RGB" => Ok(ColorSpace::Rgb),
            "G" => Ok(ColorSpace::G),
            "YUV" => Ok(ColorSpace::Yuv),
            "CHROM" => Ok(ColorSpace::Chrom),
            "POS" => Ok(ColorSpace::Pos),
            _ => Err(MstMapError::UnknownColorSpace(s.to_string())),
        }
    }
}

const YUV: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Divides each channel of one row by its temporal mean.
fn mean_normalized(rgb: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let means = [0, 1, 2].map(|c| {
        let m = rgb.iter().map(|p| p[c]).sum::<f64>() / rgb.len() as f64;
        if m != 0.0 {
            m
        } else {
            1.0
        }
    });
    rgb.iter().map(|p| [0, 1, 2].map(|c| p[c] / means[c])).collect()
}

/// `a + (std a / std b) * b`, with the ratio taken as 0 when `b` is flat.
fn tuned_sum(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    let (_, sa) = mean_std(a);
    let (_, sb) = mean_std(b);
    let alpha = if sb > 0.0 { sa / sb } else { 0.0 };
    a.iter().zip(b).map(|(x, y)| x + sign * alpha * y).collect()
}

fn chrom(rgb: &[[f64; 3]]) -> Vec<f64> {
    let n = mean_normalized(rgb);
    let x: Vec<f64> = n.iter().map(|p| 3.0 * p[0] - 2.0 * p[1]).collect();
    let y: Vec<f64> = n.iter().map(|p| 1.5 * p[0] + p[1] - 1.5 * p[2]).collect();
    tuned_sum(&x, &y, -1.0)
}

fn pos(rgb: &[[f64; 3]]) -> Vec<f64> {
    let n = mean_normalized(rgb);
    let s1: Vec<f64> = n.iter().map(|p| p[1] - p[2]).collect();
    let s2: Vec<f64> = n.iter().map(|p| -2.0 * p[0] + p[1] + p[2]).collect();
    tuned_sum(&s1, &s2, 1.0)
}

/// Re-expresses an RGB map in another color space, row by row.
///
/// CHROM and POS use the whole row as one projection window. Single-channel
/// outputs are copied into three channels when `replicate` is set.
pub fn color_transform(map: &MstMap, space: ColorSpace, replicate: bool) -> Result<MstMap, MstMapError> {
    if map.channels != 3 {
        return Err(MstMapError::InvalidTrace(format!("color transform needs RGB input, got {} channels", map.channels)));
    }
    if map.normalized {
        return Err(MstMapError::InvalidTrace("color transform must run before normalization".into()));
    }
    if space == ColorSpace::Rgb {
        return Ok(map.clone());
    }
    let t = map.t;
    let out_c = space.channels(replicate);
    let mut values = Vec::with_capacity(map.rows * t * out_c);
    for row in 0..map.rows {
        let rgb: Vec<[f64; 3]> = (0..t).map(|f| [0, 1, 2].map(|c| map.get(row, f, c))).collect();
        match space {
            ColorSpace::Rgb => unreachable!(),
            ColorSpace::Yuv => {
                for p in &rgb {
                    values.extend(YUV.iter().map(|w| w[0] * p[0] + w[1] * p[1] + w[2] * p[2]));
                }
            }
            ColorSpace::G | ColorSpace::Chrom | ColorSpace::Pos => {
                let signal: Vec<f64> = match space {
                    ColorSpace::G => rgb.iter().map(|p| p[1]).collect(),
                    ColorSpace::Chrom => chrom(&rgb),
                    _ => pos(&rgb),
                };
                for v in signal {
                    values.extend(std::iter::repeat_n(v, out_c));
                }
            }
        }
    }
    Ok(MstMap { rows: map.rows, t, channels: out_c, values, normalized: false, subset_index: map.subset_index.clone() })
}
