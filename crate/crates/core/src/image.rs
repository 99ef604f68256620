//! Raster images with a per-pixel validity mask.

use thiserror::Error;

use crate::geometry::Point2;

/// Per-channel color; channels beyond the image's count are zero.
pub type Color = [f64; 4];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image dimensions {width}x{height} must be positive")]
    EmptyImage { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1, 3 or 4)")]
    Channels(usize),
    #[error("expected {expected} samples, got {actual}")]
    SampleCount { expected: usize, actual: usize },
}

/// Row-major raster of intensities in `[0, 1]`.
///
/// Pixel `(col, row)` of the raster sits at image coordinate
/// `(col + 1, row + 1)`. Invalid pixels always hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f32>,
    valid: Vec<bool>,
}

impl ImageGrid {
    /// A fully invalid (transparent) image.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self, ImageError> {
        check_shape(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            samples: vec![0.0; width * height * channels],
            valid: vec![false; width * height],
        })
    }

    /// A fully valid image from interleaved row-major samples.
    pub fn from_samples(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f32>,
    ) -> Result<Self, ImageError> {
        check_shape(width, height, channels)?;
        let expected = width * height * channels;
        if samples.len() != expected {
            return Err(ImageError::SampleCount {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
            valid: vec![true; width * height],
        })
    }

    /// Builds a fully valid image by evaluating `f(col, row, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, ImageError> {
        check_shape(width, height, channels)?;
        let mut samples = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    samples.push(f(col, row, ch));
                }
            }
        }
        Self::from_samples(width, height, channels, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.width + col]
    }

    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.samples[i..i + self.channels]
    }

    /// Writes a pixel and marks it valid.
    #[inline]
    pub fn set_pixel(&mut self, col: usize, row: usize, value: &[f32]) {
        let idx = row * self.width + col;
        let i = idx * self.channels;
        self.samples[i..i + self.channels].copy_from_slice(&value[..self.channels]);
        self.valid[idx] = true;
    }

    pub fn set_color(&mut self, col: usize, row: usize, color: &Color) {
        let mut px = [0.0f32; 4];
        for (dst, src) in px.iter_mut().zip(color) {
            *dst = *src as f32;
        }
        self.set_pixel(col, row, &px);
    }

    pub fn invalidate(&mut self, col: usize, row: usize) {
        let idx = row * self.width + col;
        let i = idx * self.channels;
        self.samples[i..i + self.channels].fill(0.0);
        self.valid[idx] = false;
    }

    pub fn color(&self, col: usize, row: usize) -> Color {
        let mut c = [0.0; 4];
        for (dst, src) in c.iter_mut().zip(self.pixel(col, row)) {
            *dst = f64::from(*src);
        }
        c
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Mean over channels, keeping the validity mask.
    pub fn to_gray(&self) -> ImageGrid {
        let c = self.channels.min(3);
        let mut samples = Vec::with_capacity(self.width * self.height);
        for px in self.samples.chunks_exact(self.channels) {
            samples.push(px[..c].iter().sum::<f32>() / c as f32);
        }
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            samples,
            valid: self.valid.clone(),
        }
    }

    /// Copy of the `width × height` block starting at `(col, row)`.
    pub fn crop(&self, col: usize, row: usize, width: usize, height: usize) -> ImageGrid {
        assert!(col + width <= self.width && row + height <= self.height, "crop outside image");
        let ch = self.channels;
        let mut samples = Vec::with_capacity(width * height * ch);
        let mut valid = Vec::with_capacity(width * height);
        for r in row..row + height {
            let i = r * self.width + col;
            samples.extend_from_slice(&self.samples[i * ch..(i + width) * ch]);
            valid.extend_from_slice(&self.valid[i..i + width]);
        }
        ImageGrid {
            width,
            height,
            channels: ch,
            samples,
            valid,
        }
    }

    /// Bilinear sample at raster coordinates (`(0, 0)` is the first pixel).
    ///
    /// Returns `None` when any pixel with nonzero weight lies outside the
    /// raster or is invalid.
    pub fn bilinear_sample(&self, p: Point2) -> Option<Color> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let fx = p.x - x0;
        let fy = p.y - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        let w = self.width;
        if !(self.valid[y0 * w + x0]
            && self.valid[y0 * w + x1]
            && self.valid[y1 * w + x0]
            && self.valid[y1 * w + x1])
        {
            return None;
        }
        let mut out = [0.0; 4];
        let ch = self.channels;
        let base = |x: usize, y: usize| (y * w + x) * ch;
        let (i00, i10, i01, i11) = (base(x0, y0), base(x1, y0), base(x0, y1), base(x1, y1));
        for (c, slot) in out.iter_mut().enumerate().take(ch) {
            let v00 = f64::from(self.samples[i00 + c]);
            let v10 = f64::from(self.samples[i10 + c]);
            let v01 = f64::from(self.samples[i01 + c]);
            let v11 = f64::from(self.samples[i11 + c]);
            let top = v00 + (v10 - v00) * fx;
            let bottom = v01 + (v11 - v01) * fx;
            let v = top + (bottom - top) * fy;
            // Rounding can step an ulp outside the support's range.
            let lo = v00.min(v10).min(v01).min(v11);
            let hi = v00.max(v10).max(v01).max(v11);
            *slot = v.clamp(lo, hi);
        }
        Some(out)
    }

    /// Bilinear sample at 1-based image coordinates.
    #[inline]
    pub fn sample(&self, p: Point2) -> Option<Color> {
        self.bilinear_sample(Point2::new(p.x - 1.0, p.y - 1.0))
    }
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * row[clamp(x as isize + k as isize - radius, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = clamp(y as isize + k as isize - radius, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyImage { width, height });
    }
    if !matches!(channels, 1 | 3 | 4) {
        return Err(ImageError::Channels(channels));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ImageGrid {
        ImageGrid::from_fn(4, 3, 3, |x, y, c| x as f32 * 0.1 + y as f32 * 0.2 + c as f32 * 0.01)
            .unwrap()
    }

    #[test]
    fn shape_checks() {
        assert!(matches!(ImageGrid::new(0, 4, 1), Err(ImageError::EmptyImage { .. })));
        assert_eq!(ImageGrid::new(2, 2, 2), Err(ImageError::Channels(2)));
        assert!(matches!(
            ImageGrid::from_samples(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::SampleCount { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn integer_coordinates_reproduce_pixels() {
        let img = ramp();
        for y in 0..3 {
            for x in 0..4 {
                let c = img.bilinear_sample(Point2::new(x as f64, y as f64)).unwrap();
                assert_eq!(c, img.color(x, y));
            }
        }
    }

    #[test]
    fn midpoint_is_mean() {
        let img = ImageGrid::from_samples(2, 1, 1, vec![0.25, 0.75]).unwrap();
        let c = img.bilinear_sample(Point2::new(0.5, 0.0)).unwrap();
        assert_eq!(c[0], 0.5);
        let img = ImageGrid::from_samples(2, 1, 1, vec![0.2, 0.6]).unwrap();
        let c = img.bilinear_sample(Point2::new(0.5, 0.0)).unwrap();
        assert!((c[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn outside_or_invalid_support_is_none() {
        let mut img = ramp();
        assert!(img.bilinear_sample(Point2::new(-0.1, 1.0)).is_none());
        assert!(img.bilinear_sample(Point2::new(3.01, 1.0)).is_none());
        assert!(img.bilinear_sample(Point2::new(1.0, 2.5)).is_none());
        assert!(img.bilinear_sample(Point2::new(f64::NAN, 1.0)).is_none());
        assert!(img.bilinear_sample(Point2::new(3.0, 2.0)).is_some());
        img.invalidate(1, 1);
        assert!(img.bilinear_sample(Point2::new(0.5, 0.5)).is_none());
        assert!(img.bilinear_sample(Point2::new(0.0, 0.0)).is_some());
        assert_eq!(img.pixel(1, 1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn blur_preserves_constants() {
        let src = vec![0.25f32; 7 * 5];
        let out = gaussian_blur(&src, 7, 5, 1.3);
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn crop_keeps_values_and_mask() {
        let mut img = ramp();
        img.invalidate(2, 1);
        let c = img.crop(1, 1, 3, 2);
        assert_eq!(c.dims(), (3, 2));
        assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
        assert!(!c.is_valid(1, 0));
        assert_eq!(c.valid_count(), 5);
    }

    #[test]
    fn one_based_sampling() {
        let img = ramp();
        assert_eq!(img.sample(Point2::new(1.0, 1.0)), Some(img.color(0, 0)));
        assert!(img.sample(Point2::new(0.5, 1.0)).is_none());
    }
}
