//! 8-bit image export for visual inspection.
//!
//! Images are expected in the normalized [−0.2, 1] range (see
//! [`crate::recon::normalize_clip`]); the linear mapping [−0.2, 1] → [0, 255]
//! is applied before writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::recon::CLIP_MIN;

/// Quantize a normalized image: linear [−0.2, 1] → [0, 255], clamped.
pub fn image_to_u8(img: &Array2<f64>) -> Array2<u8> {
    img.mapv(|v| {
        let scaled = (v - CLIP_MIN) / (1.0 - CLIP_MIN) * 255.0;
        scaled.round().clamp(0.0, 255.0) as u8
    })
}

/// Binary PGM (P5).
pub fn write_pgm<P: AsRef<Path>>(path: P, img: &Array2<u8>) -> Result<()> {
    let (rows, cols) = img.dim();
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    for v in img.iter() {
        w.write_all(&[*v])?;
    }
    w.flush()?;
    Ok(())
}

/// 8-bit grayscale PNG.
pub fn write_png<P: AsRef<Path>>(path: P, img: &Array2<u8>) -> Result<()> {
    let (rows, cols) = img.dim();
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, cols as u32, rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::invalid(format!("png header: {e}")))?;
    let data: Vec<u8> = img.iter().copied().collect();
    writer
        .write_image_data(&data)
        .map_err(|e| Error::invalid(format!("png data: {e}")))?;
    Ok(())
}
