//! Source generation: colored glyphs with a latent sensitive label, IDX
//! ingestion, dataset caching, and small discrete systems.

mod cache;
mod discrete;
mod glyphs;
mod idx;

pub use cache::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use discrete::{
    make_discrete_system, normalize, DiscreteKind, DiscreteSystem, MAX_CODE_BITS, MAX_S_CARD, MAX_T_CARD,
};
pub use glyphs::{
    dilate, dilate_times, generate_glyphs, rasterize_template, render_glyph, split_label, t_label, Color,
    GlyphSample, DEFAULT_GLYPH_SIZE, NUM_COLORS, NUM_TEMPLATES, NUM_THICKNESSES, NUM_T_CLASSES,
};
pub use idx::{
    colorize, encode_idx_images, encode_idx_labels, load_idx_and_colorize, parse_idx_images, parse_idx_labels,
    read_idx_images, read_idx_labels, threshold_and_resize, write_idx_images, write_idx_labels, IdxImages,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("empty glyph at index {0}: no pixel reaches the threshold")]
    EmptyGlyph(usize),
    #[error("table not normalized: {0}")]
    NotNormalized(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
