//! PNG reading/writing and numbered frame sequences.
//!
//! 8-bit values map to `v / 255` with no gamma handling.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage, Rgba, RgbaImage};

use super::RasterImage;
use crate::error::{Error, Result};

/// File name of frame `index` (0-based) in a sequence directory.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{:06}.png", index + 1)
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Read a PNG as 1 (gray), 3 (RGB) or 4 (RGBA) channels.
pub fn read_png(path: impl AsRef<Path>) -> Result<RasterImage> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw): (usize, Vec<u8>) = match img.color().channel_count() {
        1 | 2 => (1, img.to_luma8().into_raw()),
        4 => (4, img.to_rgba8().into_raw()),
        _ => (3, img.to_rgb8().into_raw()),
    };
    let mut out = RasterImage::new(w, h, channels);
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                out.set(x, y, c, raw[(y * w + x) * channels + c] as f64 / 255.0);
            }
        }
    }
    Ok(out)
}

/// Write 1, 3 or 4 channel images as 8-bit PNG. Values are clamped to `[0, 1]`.
pub fn write_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.channels() {
        1 => {
            let buf: GrayImage = ImageBuffer::from_fn(w, h, |x, y| {
                Luma([to_u8(img.at(x as usize, y as usize, 0))])
            });
            buf.save(path)?;
        }
        3 => {
            let buf: RgbImage = ImageBuffer::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgb([
                    to_u8(img.at(x, y, 0)),
                    to_u8(img.at(x, y, 1)),
                    to_u8(img.at(x, y, 2)),
                ])
            });
            buf.save(path)?;
        }
        4 => {
            let buf: RgbaImage = ImageBuffer::from_fn(w, h, |x, y| {
                let (x, y) = (x as usize, y as usize);
                Rgba([
                    to_u8(img.at(x, y, 0)),
                    to_u8(img.at(x, y, 1)),
                    to_u8(img.at(x, y, 2)),
                    to_u8(img.at(x, y, 3)),
                ])
            });
            buf.save(path)?;
        }
        n => {
            return Err(Error::InvalidArgument(format!(
                "cannot write {n}-channel image as png"
            )))
        }
    }
    Ok(())
}

/// Sorted list of `frame_*.png` files in `dir`.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn write_frames(frames: &[RasterImage], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        write_png(f, dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Quantize to the 8-bit grid the PNG writer uses.
pub fn quantize_8bit(img: &RasterImage) -> RasterImage {
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = to_u8(*v) as f64 / 255.0;
    }
    out
}
