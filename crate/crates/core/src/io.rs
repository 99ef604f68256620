//! 8-bit image files.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage, RgbaImage};

use crate::image::ImageGrid;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

/// Loads an image as gray, RGB or RGBA with intensities `value / 255`.
pub fn load_image(path: &Path) -> Result<ImageGrid, IoError> {
    let img = image::open(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_) => {
            (4, img.to_rgba8().into_raw())
        }
        DynamicImage::ImageLuma16(_) => (1, img.to_luma8().into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    let samples = raw.into_iter().map(|v| f32::from(v) / 255.0).collect();
    ImageGrid::from_samples(w, h, channels, samples).map_err(|e| IoError::Format(e.to_string()))
}

/// Quantizes to 8 bits rounding half up; invalid pixels become black.
pub fn to_u8(v: f32) -> u8 {
    (f64::from(v) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn to_bytes(img: &ImageGrid) -> Vec<u8> {
    let mut bytes: Vec<u8> = img.samples().iter().map(|v| to_u8(*v)).collect();
    if img.channels() == 4 {
        // Invalid pixels are opaque black, not transparent.
        for (px, valid) in bytes.chunks_exact_mut(4).zip(img.valid_mask()) {
            if !valid {
                px[3] = 255;
            }
        }
    }
    bytes
}

pub fn save_png(img: &ImageGrid, path: &Path) -> Result<(), IoError> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = to_bytes(img);
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer")),
        _ => DynamicImage::ImageRgba8(RgbaImage::from_raw(w, h, bytes).expect("sized buffer")),
    };
    write(&dynamic, path)
}

/// White where valid, black elsewhere.
pub fn save_mask_png(img: &ImageGrid, path: &Path) -> Result<(), IoError> {
    let (w, h) = img.dims();
    let mask: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([if img.is_valid(x as usize, y as usize) { 255 } else { 0 }])
    });
    write(&DynamicImage::ImageLuma8(mask), path)
}

fn write(img: &DynamicImage, path: &Path) -> Result<(), IoError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| IoError::Write {
            path: path.display().to_string(),
            source,
        })
}

/// RGB copy of `img` for drawing overlays.
pub(crate) fn to_rgb(img: &ImageGrid) -> RgbImage {
    let (w, h) = img.dims();
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = img.pixel(x as usize, y as usize);
        let g = |c: usize| to_u8(px[c.min(px.len() - 1)]);
        Rgb([g(0), g(1), g(2)])
    })
}

pub(crate) fn save_rgb(img: &RgbImage, path: &Path) -> Result<(), IoError> {
    write(&DynamicImage::ImageRgb8(img.clone()), path)
}
