//! PNG (8-bit RGB) and PGM (binary masks) file access.

use std::path::Path;

use image::RgbImage;

use super::{BinaryMask, ImageRgb};
use crate::error::{Error, Result};

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads any image format the `image` crate understands and converts it to RGB8.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0).collect();
    ImageRgb::new(w as usize, h as usize, data)
}

pub fn write_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

/// Reads a grayscale mask; any level >= 128 counts as foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] >= 128).collect();
    BinaryMask::new(w as usize, h as usize, data)
}

/// Writes a binary PGM with 0 for background and 255 for foreground.
pub fn write_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    buf.extend(mask.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }));
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
