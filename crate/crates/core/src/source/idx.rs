//! IDX image/label files and conversion of grayscale digits into colored glyphs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::glyphs::{dilate_times, Color, GlyphSample};
use super::SourceError;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count × rows × cols` raw bytes.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.pixels[i * len..(i + 1) * len]
    }
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, SourceError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| SourceError::Truncated(format!("{what} header")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, SourceError> {
    let magic = read_u32(bytes, 0, "image")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(SourceError::BadMagic { expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let count = read_u32(bytes, 4, "image")? as usize;
    let rows = read_u32(bytes, 8, "image")? as usize;
    let cols = read_u32(bytes, 12, "image")? as usize;
    let len = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < len {
        return Err(SourceError::Truncated(format!("expected {len} pixel bytes, found {}", body.len())));
    }
    Ok(IdxImages { rows, cols, pixels: body[..len].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, SourceError> {
    let magic = read_u32(bytes, 0, "label")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(SourceError::BadMagic { expected: IDX_LABELS_MAGIC, found: magic });
    }
    let count = read_u32(bytes, 4, "label")? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(SourceError::Truncated(format!("expected {count} labels, found {}", body.len())));
    }
    Ok(body[..count].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages, SourceError> {
    parse_idx_images(&fs::read(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, SourceError> {
    parse_idx_labels(&fs::read(path)?)
}

pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<(), SourceError> {
    Ok(fs::write(path, encode_idx_images(images))?)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), SourceError> {
    Ok(fs::write(path, encode_idx_labels(labels))?)
}

/// Thresholds at half intensity and resamples to `size × size`; a target
/// pixel is lit when any source pixel in its box is lit.
pub fn threshold_and_resize(image: &[u8], rows: usize, cols: usize, size: usize) -> Vec<bool> {
    let mut mask = vec![false; size * size];
    for r in 0..size {
        let (r0, r1) = (r * rows / size, ((r + 1) * rows).div_ceil(size).max(r * rows / size + 1));
        for c in 0..size {
            let (c0, c1) = (c * cols / size, ((c + 1) * cols).div_ceil(size).max(c * cols / size + 1));
            mask[r * size + c] = (r0..r1.min(rows)).any(|sr| (c0..c1.min(cols)).any(|sc| image[sr * cols + sc] >= 128));
        }
    }
    mask
}

/// Loads IDX digits and turns each into a colored glyph: random color, a
/// random 0/1/2 dilation passes for thickness, resized to `size`.
pub fn load_idx_and_colorize(
    images_path: &Path,
    labels_path: &Path,
    size: usize,
    seed: u64,
) -> Result<Vec<GlyphSample>, SourceError> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    colorize(&images, &labels, size, seed)
}

pub fn colorize(images: &IdxImages, labels: &[u8], size: usize, seed: u64) -> Result<Vec<GlyphSample>, SourceError> {
    if images.count() != labels.len() {
        return Err(SourceError::CountMismatch { images: images.count(), labels: labels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..images.count())
        .map(|i| {
            let mask = threshold_and_resize(images.image(i), images.rows, images.cols, size);
            if !mask.iter().any(|&m| m) {
                return Err(SourceError::EmptyGlyph(i));
            }
            let color = Color::from_index(rng.gen_range(0..3)).expect("three colors");
            let thickness = rng.gen_range(0..3u8);
            let mask = dilate_times(&mask, size, thickness);
            Ok(GlyphSample::from_mask(&mask, size, color, thickness, Some(labels[i])))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_images(count: usize) -> IdxImages {
        let (rows, cols) = (28, 28);
        let mut pixels = vec![0u8; count * rows * cols];
        for i in 0..count {
            for r in 4..24 {
                pixels[i * rows * cols + r * cols + 10 + i] = 200 + i as u8;
            }
        }
        IdxImages { rows, cols, pixels }
    }

    #[test]
    fn magic_constants() {
        assert_eq!(&encode_idx_images(&synthetic_images(1))[..4], &[0, 0, 8, 3]);
        assert_eq!(&encode_idx_labels(&[1])[..4], &[0, 0, 8, 1]);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let images = synthetic_images(10);
        let labels: Vec<u8> = (0..10).collect();
        let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lbl.idx"));
        write_idx_images(&ip, &images).unwrap();
        write_idx_labels(&lp, &labels).unwrap();
        assert_eq!(read_idx_images(&ip).unwrap(), images);
        assert_eq!(read_idx_labels(&lp).unwrap(), labels);
        let glyphs = load_idx_and_colorize(&ip, &lp, 16, 1).unwrap();
        assert_eq!(glyphs.len(), 10);
        assert!(glyphs.iter().all(|g| g.is_consistent() && g.lit_pixels() > 0));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_idx_images(&synthetic_images(2));
        assert!(matches!(parse_idx_labels(&bytes), Err(SourceError::BadMagic { .. })));
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(parse_idx_images(&bytes), Err(SourceError::Truncated(_))));
        assert!(matches!(parse_idx_images(&[0, 0]), Err(SourceError::Truncated(_))));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let err = colorize(&synthetic_images(3), &[1, 2], 16, 0).unwrap_err();
        assert!(matches!(err, SourceError::CountMismatch { images: 3, labels: 2 }));
    }

    #[test]
    fn all_black_image_is_an_empty_glyph() {
        let images = IdxImages { rows: 28, cols: 28, pixels: vec![0; 28 * 28] };
        let err = colorize(&images, &[0], 16, 0).unwrap_err();
        assert!(err.to_string().contains("empty glyph"));
    }
}
