//! Procedural colored digit glyphs with a latent (color, thickness) label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SourceError;

pub const NUM_COLORS: usize = 3;
pub const NUM_THICKNESSES: usize = 3;
/// Size of the sensitive alphabet: color × thickness.
pub const NUM_T_CLASSES: usize = NUM_COLORS * NUM_THICKNESSES;
pub const NUM_TEMPLATES: usize = 10;
pub const DEFAULT_GLYPH_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn letter(self) -> char {
        match self {
            Color::Red => 'R',
            Color::Green => 'G',
            Color::Blue => 'B',
        }
    }
}

pub fn t_label(color: Color, thickness: u8) -> u8 {
    (3 * color.index() + thickness as usize) as u8
}

/// Splits a sensitive label into its (color, thickness) parts.
pub fn split_label(t: u8) -> (Color, u8) {
    (Color::from_index(t as usize / 3).expect("label below 9"), t % 3)
}

/// One source image with its sensitive attribute.
///
/// Pixels are stored row-major as `H × W × 3` intensities in `[0, 1]`. Only
/// the glyph's color channel is ever nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphSample {
    pub size: usize,
    pub pixels: Vec<f64>,
    pub color: Color,
    pub thickness: u8,
    pub t_label: u8,
    /// Digit template index, when known.
    pub template: Option<u8>,
}

impl GlyphSample {
    /// Builds a sample from a binary stroke mask (`size × size`).
    pub fn from_mask(mask: &[bool], size: usize, color: Color, thickness: u8, template: Option<u8>) -> Self {
        let mut pixels = vec![0.0; size * size * 3];
        for (i, &lit) in mask.iter().enumerate() {
            if lit {
                pixels[i * 3 + color.index()] = 1.0;
            }
        }
        Self { size, pixels, color, thickness, t_label: t_label(color, thickness), template }
    }

    pub fn lit_pixels(&self) -> usize {
        self.pixels.chunks(3).filter(|px| px.iter().any(|&v| v > 0.0)).count()
    }

    /// Pure-hue check: only `color`'s channel carries mass, and the label is consistent.
    pub fn is_consistent(&self) -> bool {
        let c = self.color.index();
        let pure = self.pixels.chunks(3).all(|px| px.iter().enumerate().all(|(ch, &v)| ch == c || v == 0.0));
        pure && self.t_label == t_label(self.color, self.thickness) && self.thickness < 3
    }
}

/// Stroke polylines of each digit in a unit box (x right, y down).
fn template_strokes(digit: usize) -> &'static [&'static [(f64, f64)]] {
    const TL: (f64, f64) = (0.0, 0.0);
    const TR: (f64, f64) = (1.0, 0.0);
    const ML: (f64, f64) = (0.0, 0.5);
    const MR: (f64, f64) = (1.0, 0.5);
    const BL: (f64, f64) = (0.0, 1.0);
    const BR: (f64, f64) = (1.0, 1.0);
    match digit {
        0 => &[&[TL, TR, BR, BL, TL]],
        1 => &[&[(0.5, 0.0), (0.5, 1.0)], &[(0.15, 0.3), (0.5, 0.0)]],
        2 => &[&[TL, TR, MR, ML, BL, BR]],
        3 => &[&[TL, TR, BR, BL], &[ML, MR]],
        4 => &[&[TL, ML, MR], &[TR, BR]],
        5 => &[&[TR, TL, ML, MR, BR, BL]],
        6 => &[&[TR, TL, BL, BR, MR, ML]],
        7 => &[&[TL, TR, (0.3, 1.0)]],
        8 => &[&[TL, TR, BR, BL, TL], &[ML, MR]],
        9 => &[&[MR, ML, TL, TR, BR, BL]],
        _ => unreachable!("ten templates"),
    }
}

/// One-pixel-wide strokes of `template`, shifted by `(dx, dy)`.
pub fn rasterize_template(template: usize, size: usize, dx: i64, dy: i64) -> Vec<bool> {
    let left = (size as f64 * 0.25).round();
    let right = (size as f64 * 0.625).round();
    let top = (size as f64 * 0.125).round();
    let bottom = (size as f64 * 0.6875).round();
    let mut mask = vec![false; size * size];
    let mut plot = |x: f64, y: f64| {
        let c = (left + x * (right - left)).round() as i64 + dx;
        let r = (top + y * (bottom - top)).round() as i64 + dy;
        if (0..size as i64).contains(&r) && (0..size as i64).contains(&c) {
            mask[r as usize * size + c as usize] = true;
        }
    };
    for stroke in template_strokes(template) {
        for seg in stroke.windows(2) {
            let ((x0, y0), (x1, y1)) = (seg[0], seg[1]);
            let steps = (4 * size).max(1);
            for s in 0..=steps {
                let a = s as f64 / steps as f64;
                plot(x0 + a * (x1 - x0), y0 + a * (y1 - y0));
            }
        }
    }
    mask
}

/// One dilation pass with a 2×2 structuring element (grows strokes right and down).
pub fn dilate(mask: &[bool], size: usize) -> Vec<bool> {
    let mut out = mask.to_vec();
    for r in 0..size {
        for c in 0..size {
            if !mask[r * size + c] {
                continue;
            }
            for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                let (rr, cc) = (r + dr, c + dc);
                if rr < size && cc < size {
                    out[rr * size + cc] = true;
                }
            }
        }
    }
    out
}

pub fn dilate_times(mask: &[bool], size: usize, passes: u8) -> Vec<bool> {
    (0..passes).fold(mask.to_vec(), |m, _| dilate(&m, size))
}

/// Renders one glyph deterministically from its parts.
pub fn render_glyph(template: usize, size: usize, color: Color, thickness: u8, dx: i64, dy: i64) -> GlyphSample {
    let mask = dilate_times(&rasterize_template(template, size, dx, dy), size, thickness);
    GlyphSample::from_mask(&mask, size, color, thickness, Some(template as u8))
}

/// Generates `count` glyphs of `size × size` pixels.
///
/// Sensitive labels are a shuffled balanced assignment over the nine
/// (color, thickness) classes; digit templates and one-pixel jitter are drawn
/// independently, so the label carries no information about the digit.
pub fn generate_glyphs(count: usize, size: usize, seed: u64) -> Result<Vec<GlyphSample>, SourceError> {
    if count == 0 {
        return Err(SourceError::InvalidArgument("glyph count must be positive".into()));
    }
    if size < 8 {
        return Err(SourceError::InvalidArgument(format!("glyph size {size} below minimum 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..count).map(|i| (i % NUM_T_CLASSES) as u8).collect();
    labels.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .map(|t| {
            let (color, thickness) = split_label(t);
            let template = rng.gen_range(0..NUM_TEMPLATES);
            let dx = rng.gen_range(-1..=1);
            let dy = rng.gen_range(-1..=1);
            render_glyph(template, size, color, thickness, dx, dy)
        })
        .collect())
}
