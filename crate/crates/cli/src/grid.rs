//! Image grids written as binary PPM.

/// Rows of equally sized RGB images (interleaved, values in `[0, 1]`),
/// separated by a one-pixel gray border.
pub fn ppm_grid(rows: &[Vec<&[f64]>], size: usize) -> Vec<u8> {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width = cols * (size + 1) + 1;
    let height = rows.len() * (size + 1) + 1;
    let mut raster = vec![128u8; width * height * 3];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            assert_eq!(img.len(), size * size * 3, "image is not {size}x{size} RGB");
            for y in 0..size {
                for x in 0..size {
                    let dst = ((r * (size + 1) + 1 + y) * width + c * (size + 1) + 1 + x) * 3;
                    let src = (y * size + x) * 3;
                    for ch in 0..3 {
                        raster[dst + ch] = (img[src + ch].clamp(0.0, 1.0) * 255.0).round() as u8;
                    }
                }
            }
        }
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&raster);
    out
}
