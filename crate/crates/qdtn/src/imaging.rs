use std::path::Path;

use anyhow::Context;
use image::{GrayImage as LumaBuffer, Luma};
use qdtn_core::GrayImage;

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Decodes PNG or JPEG bytes to grayscale in `[0, 1]`.
pub fn decode_gray(bytes: &[u8]) -> anyhow::Result<GrayImage> {
    let rgb = image::load_from_memory(bytes)
        .context("decoding image")?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            let y = LUMA_WEIGHTS[0] * r as f64
                + LUMA_WEIGHTS[1] * g as f64
                + LUMA_WEIGHTS[2] * b as f64;
            (y / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    Ok(GrayImage::new(w as usize, h as usize, pixels)?)
}

pub fn load_gray(path: &Path) -> anyhow::Result<GrayImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_gray(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn save_png(img: &GrayImage, path: &Path) -> anyhow::Result<()> {
    let mut buf = LumaBuffer::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        *px = Luma([(img.get(x as usize, y as usize) * 255.0).round() as u8]);
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}
