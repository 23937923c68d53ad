//! Flat binary dataset records.
//!
//! Layout (little-endian): `count: u32, height: u32, width: u32`, then per
//! sample `height·width·3` `f64` pixels followed by one `t_label` byte.

use std::fs;
use std::path::Path;

use super::glyphs::{split_label, GlyphSample, NUM_T_CLASSES};
use super::SourceError;

pub fn encode_dataset(samples: &[GlyphSample]) -> Result<Vec<u8>, SourceError> {
    let size = samples.first().map_or(0, |s| s.size);
    if samples.iter().any(|s| s.size != size) {
        return Err(SourceError::InvalidArgument("mixed glyph sizes in one dataset".into()));
    }
    let mut out = Vec::with_capacity(12 + samples.len() * (size * size * 24 + 1));
    for v in [samples.len(), size, size] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for s in samples {
        for p in &s.pixels {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.push(s.t_label);
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<GlyphSample>, SourceError> {
    let header = |i: usize| -> Result<usize, SourceError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| SourceError::Truncated("dataset header".into()))
    };
    let (count, height, width) = (header(0)?, header(1)?, header(2)?);
    if height != width {
        return Err(SourceError::InvalidArgument(format!("non-square glyphs {height}x{width}")));
    }
    let pixels = height * width * 3;
    let record = pixels * 8 + 1;
    let body = &bytes[12..];
    if body.len() != count * record {
        return Err(SourceError::Truncated(format!("expected {} record bytes, found {}", count * record, body.len())));
    }
    body.chunks(record)
        .map(|rec| {
            let values: Vec<f64> = rec[..pixels * 8]
                .chunks(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let t = rec[pixels * 8];
            if t as usize >= NUM_T_CLASSES {
                return Err(SourceError::InvalidArgument(format!("label {t} out of range")));
            }
            let (color, thickness) = split_label(t);
            Ok(GlyphSample { size: height, pixels: values, color, thickness, t_label: t, template: None })
        })
        .collect()
}

pub fn write_dataset(path: &Path, samples: &[GlyphSample]) -> Result<(), SourceError> {
    Ok(fs::write(path, encode_dataset(samples)?)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<GlyphSample>, SourceError> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::generate_glyphs;

    #[test]
    fn dataset_round_trip() {
        let glyphs = generate_glyphs(12, 8, 4).unwrap();
        let decoded = decode_dataset(&encode_dataset(&glyphs).unwrap()).unwrap();
        for (a, b) in glyphs.iter().zip(&decoded) {
            assert_eq!(a.pixels, b.pixels);
            assert_eq!(a.t_label, b.t_label);
            assert_eq!((a.color, a.thickness), (b.color, b.thickness));
        }
    }

    #[test]
    fn truncated_dataset_is_rejected() {
        let mut bytes = encode_dataset(&generate_glyphs(2, 8, 4).unwrap()).unwrap();
        bytes.pop();
        assert!(decode_dataset(&bytes).is_err());
    }
}
