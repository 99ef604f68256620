//! Synthetic test scenes and image pairs with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, Homography, Point2};
use crate::image::ImageGrid;
use crate::registration::Correspondence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("overlap fraction {0} must lie in (0.05, 0.95)")]
    InvalidOverlap(f64),
    #[error("source image {0}x{1} is too small for a pair")]
    SourceTooSmall(usize, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Random rectangles and discs over a smooth background, lightly blurred so
/// that edges are band-limited. Deterministic in `seed`.
pub fn textured_scene(width: usize, height: usize, channels: usize, seed: u64) -> ImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = channels.clamp(1, 4);
    let mut buf = vec![0.0f32; width * height * ch];
    let base: Vec<f32> = (0..ch).map(|_| rng.gen_range(0.3..0.6)).collect();
    let (fx, fy) = (rng.gen_range(2.0..5.0), rng.gen_range(2.0..5.0));
    for y in 0..height {
        for x in 0..width {
            let u = x as f32 / width as f32;
            let v = y as f32 / height as f32;
            let g = 0.15 * ((fx * u * 6.28).sin() * (fy * v * 6.28).cos());
            for c in 0..ch {
                buf[(y * width + x) * ch + c] = base[c] + g;
            }
        }
    }
    let shapes = (width * height / 900).max(8);
    let mut color = [0.0f32; 4];
    for _ in 0..shapes {
        for c in color.iter_mut().take(ch) {
            *c = rng.gen_range(0.0..1.0);
        }
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let size: f64 = rng.gen_range(4.0..28.0);
        let disc = rng.gen_bool(0.3);
        let aspect: f64 = rng.gen_range(0.5..2.0);
        let (hw, hh) = (size * aspect.sqrt(), size / aspect.sqrt());
        let x0 = (cx - hw).max(0.0) as usize;
        let x1 = ((cx + hw).ceil() as usize).min(width);
        let y0 = (cy - hh).max(0.0) as usize;
        let y1 = ((cy + hh).ceil() as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if disc {
                    let dx = (x as f64 - cx) / hw;
                    let dy = (y as f64 - cy) / hh;
                    if dx * dx + dy * dy > 1.0 {
                        continue;
                    }
                }
                let i = (y * width + x) * ch;
                buf[i..i + ch].copy_from_slice(&color[..ch]);
            }
        }
    }
    let mut out = vec![0.0f32; width * height * ch];
    for c in 0..ch {
        let plane: Vec<f32> = buf.iter().skip(c).step_by(ch).copied().collect();
        let blurred = crate::image::gaussian_blur(&plane, width, height, 0.8);
        for (i, v) in blurred.into_iter().enumerate() {
            out[i * ch + c] = v.clamp(0.0, 1.0);
        }
    }
    ImageGrid::from_samples(width, height, ch, out).expect("valid scene dimensions")
}

/// Smooth color field without corners; useful for continuity checks.
pub fn smooth_scene(width: usize, height: usize, channels: usize) -> ImageGrid {
    ImageGrid::from_fn(width, height, channels, |x, y, c| {
        let u = x as f32 / width as f32;
        let v = y as f32 / height as f32;
        0.5 + 0.3 * ((3.0 + c as f32) * u + 2.0 * v).sin() * (1.5 * v + 0.3 * c as f32).cos()
    })
    .expect("valid scene dimensions")
}

/// Projective tilt `[[1,0,0],[0,1,0],[p,0,1]]` conjugated to act about
/// `center`, which it leaves fixed.
pub fn perspective_about(p: f64, center: Point2) -> Homography {
    let tilt = Homography::from_row_major(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, p, 0.0, 1.0])
        .expect("tilt is invertible");
    Homography::translation(center.x, center.y)
        .compose(&tilt)
        .and_then(|m| m.compose(&Homography::translation(-center.x, -center.y)))
        .expect("conjugated tilt is invertible")
}

/// Reference and target crops of one source image plus their ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub reference: ImageGrid,
    pub target: ImageGrid,
    /// Maps target coordinates onto reference coordinates.
    pub h_true: Homography,
    /// Horizontal offset between the two windows, in pixels.
    pub offset: f64,
    /// Ground truth on a 4-pixel lattice of the target, restricted to points
    /// landing inside the reference.
    pub correspondences: Vec<Correspondence>,
}

/// Crops a reference window at the source's left edge and a target window
/// shifted right so the two share `overlap` of their width. The target is
/// additionally resampled through `distortion` (applied in target
/// coordinates before the shift), so the full target-to-reference map is
/// `translation(offset, 0) ∘ distortion`.
///
/// A tenth of the source height is kept as margin above and below the
/// crops so mild distortions still find source content.
pub fn make_synthetic_pair(
    src: &ImageGrid,
    distortion: &Homography,
    overlap: f64,
) -> Result<SyntheticPair, SynthError> {
    if !(overlap > 0.05 && overlap < 0.95) {
        return Err(SynthError::InvalidOverlap(overlap));
    }
    let (ws, hs) = src.dims();
    let margin = hs / 10;
    let height = hs - 2 * margin;
    let width = (ws as f64 / (2.0 - overlap)).floor() as usize;
    if width < 16 || height < 16 {
        return Err(SynthError::SourceTooSmall(ws, hs));
    }
    let offset = ((1.0 - overlap) * width as f64).round();
    let h_true = Homography::translation(offset, 0.0).compose(distortion)?;

    let ch = src.channels();
    let mut reference = ImageGrid::new(width, height, ch).expect("non-empty crop");
    for y in 0..height {
        for x in 0..width {
            if src.is_valid(x, y + margin) {
                reference.set_pixel(x, y, src.pixel(x, y + margin));
            }
        }
    }
    let mut target = ImageGrid::new(width, height, ch).expect("non-empty crop");
    let mut correspondences = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let q = Point2::new(x as f64 + 1.0, y as f64 + 1.0);
            let Ok(p) = h_true.apply(q) else { continue };
            // Reference coordinate -> source raster coordinate.
            let raster = Point2::new(p.x - 1.0, p.y - 1.0 + margin as f64);
            if let Some(c) = src.bilinear_sample(raster) {
                target.set_color(x, y, &c);
            }
            let inside = p.x >= 1.0 && p.y >= 1.0 && p.x <= width as f64 && p.y <= height as f64;
            if x % 4 == 0 && y % 4 == 0 && inside {
                correspondences.push(Correspondence::new(q, p));
            }
        }
    }
    Ok(SyntheticPair {
        reference,
        target,
        h_true,
        offset,
        correspondences,
    })
}

/// Source dimensions whose crops come out at `width × height`.
pub fn source_dims_for(width: usize, height: usize, overlap: f64) -> (usize, usize) {
    let ws = (width as f64 * (2.0 - overlap)).ceil() as usize;
    // Keep floor(ws / (2 - overlap)) == width.
    let ws = (ws..ws + 4)
        .find(|w| (*w as f64 / (2.0 - overlap)).floor() as usize == width)
        .unwrap_or(ws);
    let margin = height / 8;
    let mut hs = height + 2 * margin;
    while hs - 2 * (hs / 10) != height {
        if hs - 2 * (hs / 10) > height {
            hs -= 1;
        } else {
            hs += 1;
        }
    }
    (ws, hs)
}
