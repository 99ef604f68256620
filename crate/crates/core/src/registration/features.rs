//! Harris corners with normalized-patch descriptors, and mutual
//! nearest-neighbour matching with a distance-ratio test.

use serde::{Deserialize, Serialize};

use super::{Correspondence, MatchSet, RegistrationError};
use crate::geometry::Point2;
use crate::image::{gaussian_blur, ImageGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    /// Image coordinates (1-based).
    pub position: Point2,
    pub descriptor: Vec<f32>,
    pub response: f64,
    pub scale: Option<f64>,
    pub orientation: Option<f64>,
}

/// Anything that can turn an image into a list of described features.
///
/// All features from one call must share a descriptor length.
pub trait FeatureDetector {
    fn detect(&self, img: &ImageGrid) -> Vec<Feature>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarrisDetector {
    pub k: f64,
    pub smoothing_sigma: f64,
    pub window_sigma: f64,
    pub nms_radius: usize,
    pub max_features: usize,
    /// Responses below this fraction of the strongest one are discarded.
    pub relative_threshold: f64,
    pub patch_radius: usize,
}

impl Default for HarrisDetector {
    fn default() -> Self {
        Self {
            k: 0.04,
            smoothing_sigma: 1.0,
            window_sigma: 1.5,
            nms_radius: 4,
            max_features: 1500,
            relative_threshold: 1e-3,
            patch_radius: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub detector: HarrisDetector,
    pub ratio: f64,
    pub mutual: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            detector: HarrisDetector::default(),
            ratio: 0.8,
            mutual: true,
        }
    }
}

/// Detects with the built-in Harris detector and matches the two sets.
pub fn detect_and_match(
    reference: &ImageGrid,
    target: &ImageGrid,
    cfg: &MatchConfig,
) -> Result<MatchSet, RegistrationError> {
    detect_and_match_with(&cfg.detector, reference, target, cfg)
}

pub fn detect_and_match_with(
    detector: &dyn FeatureDetector,
    reference: &ImageGrid,
    target: &ImageGrid,
    cfg: &MatchConfig,
) -> Result<MatchSet, RegistrationError> {
    let ref_features = detector.detect(reference);
    let tgt_features = detector.detect(target);
    let pairs = match_descriptors(&tgt_features, &ref_features, cfg.ratio, cfg.mutual)
        .into_iter()
        .map(|(t, r)| Correspondence::new(tgt_features[t].position, ref_features[r].position))
        .collect::<Vec<_>>();
    if pairs.len() < 4 {
        return Err(RegistrationError::TooFewMatches { found: pairs.len() });
    }
    Ok(MatchSet::new(pairs))
}

/// Indices `(query, train)` of matches passing the ratio test and, when
/// `mutual` is set, the cross-check. Output is ordered by query index.
pub fn match_descriptors(
    query: &[Feature],
    train: &[Feature],
    ratio: f64,
    mutual: bool,
) -> Vec<(usize, usize)> {
    if query.is_empty() || train.len() < 2 {
        return Vec::new();
    }
    let mut train_best = vec![(f64::INFINITY, usize::MAX); train.len()];
    let mut candidates = Vec::new();
    let r2 = ratio * ratio;
    for (qi, q) in query.iter().enumerate() {
        let (mut d1, mut d2, mut best) = (f64::INFINITY, f64::INFINITY, usize::MAX);
        for (ti, t) in train.iter().enumerate() {
            let d = squared_distance(&q.descriptor, &t.descriptor);
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = ti;
            } else if d < d2 {
                d2 = d;
            }
            if d < train_best[ti].0 {
                train_best[ti] = (d, qi);
            }
        }
        if best != usize::MAX && d1 < r2 * d2 {
            candidates.push((qi, best));
        }
    }
    if mutual {
        candidates.retain(|&(qi, ti)| train_best[ti].1 == qi);
    }
    candidates
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

impl FeatureDetector for HarrisDetector {
    fn detect(&self, img: &ImageGrid) -> Vec<Feature> {
        let (w, h) = img.dims();
        let gray = img.to_gray();
        let smooth = gaussian_blur(gray.samples(), w, h, self.smoothing_sigma);

        let mut ixx = vec![0.0f32; w * h];
        let mut iyy = vec![0.0f32; w * h];
        let mut ixy = vec![0.0f32; w * h];
        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let i = y * w + x;
                let gx = 0.5 * (smooth[i + 1] - smooth[i - 1]);
                let gy = 0.5 * (smooth[i + w] - smooth[i - w]);
                ixx[i] = gx * gx;
                iyy[i] = gy * gy;
                ixy[i] = gx * gy;
            }
        }
        let sxx = gaussian_blur(&ixx, w, h, self.window_sigma);
        let syy = gaussian_blur(&iyy, w, h, self.window_sigma);
        let sxy = gaussian_blur(&ixy, w, h, self.window_sigma);
        let k = self.k as f32;
        let response: Vec<f32> = (0..w * h)
            .map(|i| {
                let tr = sxx[i] + syy[i];
                sxx[i] * syy[i] - sxy[i] * sxy[i] - k * tr * tr
            })
            .collect();

        let max_r = response.iter().copied().fold(0.0f32, f32::max);
        if !(max_r > 0.0) {
            return Vec::new();
        }
        let threshold = max_r * self.relative_threshold as f32;

        // Everything a descriptor or gradient touches must be valid and inside.
        let support = self.patch_radius + 2 + (3.0 * (self.smoothing_sigma + self.window_sigma)).ceil() as usize;
        let margin = support.max(self.nms_radius);
        if w <= 2 * margin || h <= 2 * margin {
            return Vec::new();
        }
        let invalid = InvalidCounter::new(img);

        let r = self.nms_radius;
        let mut corners = Vec::new();
        for y in margin..h - margin {
            for x in margin..w - margin {
                let i = y * w + x;
                let v = response[i];
                if v <= threshold {
                    continue;
                }
                if is_local_max(&response, w, x, y, r) && !invalid.any(x, y, support) {
                    corners.push((v, i));
                }
            }
        }
        corners.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        corners.truncate(self.max_features);

        corners
            .into_iter()
            .filter_map(|(v, i)| {
                let (x, y) = (i % w, i / w);
                let (dx, dy) = subpixel_offset(&response, w, x, y);
                let pos = Point2::new(x as f64 + dx, y as f64 + dy);
                let descriptor = describe(&smooth, w, pos, self.patch_radius)?;
                Some(Feature {
                    position: Point2::new(pos.x + 1.0, pos.y + 1.0),
                    descriptor,
                    response: f64::from(v),
                    scale: None,
                    orientation: None,
                })
            })
            .collect()
    }
}

/// Strict maximum against earlier pixels, non-strict against later ones, so
/// plateaus keep exactly their first pixel in scan order.
fn is_local_max(resp: &[f32], w: usize, x: usize, y: usize, r: usize) -> bool {
    let v = resp[y * w + x];
    for yy in y - r..=y + r {
        for xx in x - r..=x + r {
            let o = resp[yy * w + xx];
            let earlier = (yy, xx) < (y, x);
            if o > v || (earlier && o == v) {
                return false;
            }
        }
    }
    true
}

/// Vertex of the quadratic through the 3×3 neighbourhood, clamped to ±0.5.
fn subpixel_offset(resp: &[f32], w: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |dx: isize, dy: isize| {
        f64::from(resp[(y as isize + dy) as usize * w + (x as isize + dx) as usize])
    };
    let c = at(0, 0);
    let gx = 0.5 * (at(1, 0) - at(-1, 0));
    let gy = 0.5 * (at(0, 1) - at(0, -1));
    let hxx = at(1, 0) - 2.0 * c + at(-1, 0);
    let hyy = at(0, 1) - 2.0 * c + at(0, -1);
    let hxy = 0.25 * (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1));
    let det = hxx * hyy - hxy * hxy;
    if !(det > 0.0) || hxx >= 0.0 {
        return (0.0, 0.0);
    }
    let ox = -(hyy * gx - hxy * gy) / det;
    let oy = -(hxx * gy - hxy * gx) / det;
    if ox.is_finite() && oy.is_finite() {
        (ox.clamp(-0.5, 0.5), oy.clamp(-0.5, 0.5))
    } else {
        (0.0, 0.0)
    }
}

/// Zero-mean, unit-norm patch sampled bilinearly around `pos` (raster coords).
fn describe(img: &[f32], w: usize, pos: Point2, radius: usize) -> Option<Vec<f32>> {
    let r = radius as isize;
    let mut patch = Vec::with_capacity((2 * radius + 1).pow(2));
    let (x0, y0) = (pos.x.floor(), pos.y.floor());
    let (fx, fy) = ((pos.x - x0) as f32, (pos.y - y0) as f32);
    let (x0, y0) = (x0 as isize, y0 as isize);
    for dy in -r..=r {
        for dx in -r..=r {
            let x = (x0 + dx) as usize;
            let y = (y0 + dy) as usize;
            let i = y * w + x;
            let top = img[i] + (img[i + 1] - img[i]) * fx;
            let bottom = img[i + w] + (img[i + w + 1] - img[i + w]) * fx;
            patch.push(top + (bottom - top) * fy);
        }
    }
    let mean = patch.iter().sum::<f32>() / patch.len() as f32;
    patch.iter_mut().for_each(|v| *v -= mean);
    let norm = patch.iter().map(|v| v * v).sum::<f32>().sqrt();
    if !(norm > 1e-6) {
        return None;
    }
    patch.iter_mut().for_each(|v| *v /= norm);
    Some(patch)
}

/// Summed-area table over the invalid-pixel mask.
struct InvalidCounter {
    w: usize,
    sums: Vec<u32>,
}

impl InvalidCounter {
    fn new(img: &ImageGrid) -> Self {
        let (w, h) = img.dims();
        let mask = img.valid_mask();
        let mut sums = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from(!mask[y * w + x]);
                sums[(y + 1) * (w + 1) + x + 1] = sums[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Whether the square of radius `r` around `(x, y)` holds an invalid pixel.
    /// The caller guarantees the square lies inside the image.
    fn any(&self, x: usize, y: usize, r: usize) -> bool {
        let s = self.w + 1;
        let (x0, y0, x1, y1) = (x - r, y - r, x + r + 1, y + r + 1);
        self.sums[y1 * s + x1] + self.sums[y0 * s + x0] != self.sums[y0 * s + x1] + self.sums[y1 * s + x0]
    }
}
