//! Binary map export and 8-bit PGM/PPM rendering.
//!
//! Binary layout, little-endian: `b"MSTM"`, u32 version (1), u32 rows,
//! u32 T, u32 C, then `rows * T * C` f32 values in row-major order.

use std::path::Path;

use super::{MstMap, MstMapError};

const MAGIC: &[u8; 4] = b"MSTM";
const VERSION: u32 = 1;

pub fn encode_map(map: &MstMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + map.values.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, map.rows as u32, map.t as u32, map.channels as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in map.values_f32() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a binary map. Row subsets are assumed to be the canonical
/// ascending bitmasks and the values are taken as normalized.
pub fn decode_map(bytes: &[u8]) -> Result<MstMap, MstMapError> {
    let bad = |m: &str| MstMapError::Format(m.to_string());
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(bad("missing MSTM header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad(&format!("unsupported version {}", word(0))));
    }
    let (rows, t, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let count = rows * t * c;
    if bytes.len() != 20 + 4 * count {
        return Err(bad(&format!("expected {} payload bytes, found {}", 4 * count, bytes.len() - 20)));
    }
    let values = bytes[20..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    Ok(MstMap { rows, t, channels: c, values, normalized: true, subset_index: (1..=rows as u32).collect() })
}

pub fn write_map(map: &MstMap, path: &Path) -> Result<(), MstMapError> {
    std::fs::write(path, encode_map(map)).map_err(|e| MstMapError::io(path, e))
}

pub fn read_map(path: &Path) -> Result<MstMap, MstMapError> {
    let bytes = std::fs::read(path).map_err(|e| MstMapError::io(path, e))?;
    decode_map(&bytes)
}

/// `round_half_up(clamp(v, 0, 1) * 255)`.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Binary PGM (1 channel) or PPM (3 channels); rows become image rows and
/// frames become columns.
pub fn encode_image(map: &MstMap) -> Result<Vec<u8>, MstMapError> {
    let magic = match map.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(MstMapError::Format(format!("cannot render {c}-channel map"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", map.t, map.rows).into_bytes();
    out.extend(map.values.iter().map(|&v| to_byte(v)));
    Ok(out)
}

pub fn write_image(map: &MstMap, path: &Path) -> Result<(), MstMapError> {
    std::fs::write(path, encode_image(map)?).map_err(|e| MstMapError::io(path, e))
}

/// Grayscale PGM from a row-major `height x width` grid, linearly scaled so
/// the grid maximum maps to 255.
pub fn encode_gray(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_byte(v * scale)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MstMap {
        MstMap {
            rows: 3,
            t: 2,
            channels: 3,
            values: (0..18).map(|i| i as f64 / 17.0).collect(),
            normalized: true,
            subset_index: vec![1, 2, 3],
        }
    }

    #[test]
    fn binary_layout() {
        let bytes = encode_map(&sample());
        assert_eq!(&bytes[..4], b"MSTM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 20 + 18 * 4);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), (1.0 / 17.0) as f32);
        let back = decode_map(&bytes).unwrap();
        assert_eq!(encode_map(&back), bytes);
        assert!(decode_map(&bytes[..30]).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(to_byte(0.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.5), 128); // 127.5 rounds up
        assert_eq!(to_byte(-3.0), 0);
        assert_eq!(to_byte(2.0), 255);
    }

    #[test]
    fn ppm_header_and_size() {
        let img = encode_image(&sample()).unwrap();
        let header = b"P6\n2 3\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(img.len(), header.len() + 18);
        assert_eq!(*img.last().unwrap(), 255);
    }
}
