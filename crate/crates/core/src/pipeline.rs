//! End-to-end stitching of a reference/target pair.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ::image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositor::{
    blend, canvas_bounds, find_seam_scaled, render_reference, render_target, Canvas,
    CompositorError, SeamLabels, SeamLayout,
};
use crate::geometry::{CylindricalParams, GeometryError, HalfCylWarp, Homography, Point2, Similarity};
use crate::image::ImageGrid;
use crate::io::{self, IoError};
use crate::params::{
    choose_a0, column_heights, compute_hd, estimate_b0, estimate_focal, Dims, FocalSearchConfig,
    ParamsError,
};
use crate::registration::{
    detect_and_match, estimate_homography_ransac, fit_similarity, reprojection_rmse,
    selection_scale, MatchConfig, MatchSet, RansacConfig, RegistrationError,
};
use crate::resample::{build_sample_grid, filter_nonoverlap, resample_strip, ResampleError, ResampledStrip};

#[derive(Debug, Clone, PartialEq)]
pub struct StitchConfig {
    /// Downscale divisor for the seam search; a power of two.
    pub seam_scale: usize,
    pub ransac: RansacConfig,
    pub matching: MatchConfig,
    /// Focal search bracket; derived from the reference width when `None`.
    pub focal_search: Option<FocalSearchConfig>,
    /// Overrides the upper end of the focal bracket.
    pub f_max: Option<f64>,
    pub feather: bool,
    pub save_intermediate: Option<PathBuf>,
    /// Seeds RANSAC; replaces `ransac.seed`.
    pub seed: u64,
    /// When off, every time in the report is written as zero so reports
    /// are reproducible byte for byte.
    pub record_timings: bool,
}

impl Default for StitchConfig {
    fn default() -> Self {
        Self {
            seam_scale: 8,
            ransac: RansacConfig::default(),
            matching: MatchConfig::default(),
            focal_search: None,
            f_max: None,
            feather: false,
            save_intermediate: None,
            seed: 0,
            record_timings: true,
        }
    }
}

impl StitchConfig {
    pub fn validate(&self) -> Result<(), StitchError> {
        if self.seam_scale == 0 || !self.seam_scale.is_power_of_two() {
            return Err(StitchError::InvalidConfig("seam scale must be a power of two"));
        }
        self.ransac.validate()?;
        if let Some(fs) = &self.focal_search {
            fs.validate()?;
        }
        if let Some(f) = self.f_max {
            if !(f > 0.0 && f.is_finite()) {
                return Err(StitchError::InvalidConfig("f_max must be positive"));
            }
        }
        Ok(())
    }

    fn focal_config(&self, reference_width: usize) -> FocalSearchConfig {
        let mut fs = self
            .focal_search
            .unwrap_or_else(|| FocalSearchConfig::for_reference_width(reference_width));
        if let Some(f) = self.f_max {
            fs.f_max = f;
        }
        fs
    }
}

/// Metrics of one stitch. Serialized as the metrics JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    /// Target-to-reference homography, row-major, scaled so its
    /// largest-magnitude entry is 1.
    pub homography: [f64; 9],
    pub similarity: Similarity,
    pub scale: f64,
    pub a0: f64,
    pub b0: f64,
    pub focal: f64,
    pub degenerate_focal: bool,
    pub inlier_count: usize,
    pub alignment_rmse_px: f64,
    pub warp_time_s: f64,
    pub seam_time_s: f64,
    pub total_time_s: f64,
}

#[derive(Debug, Error)]
pub enum StitchError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("displacement ({dx:.1}, {dy:.1}) is mostly vertical; only horizontal pairs are supported")]
    VerticalDisplacement { dx: f64, dy: f64 },
    #[error("warp: {0}")]
    Warp(GeometryError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Compositor(#[from] CompositorError),
    #[error("cannot serialize report: {0}")]
    Report(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

impl StitchError {
    pub fn stage(&self) -> &'static str {
        match self {
            StitchError::Io(_) | StitchError::Report(_) => "io",
            StitchError::Registration(_) => "registration",
            StitchError::Params(_) | StitchError::VerticalDisplacement { .. } | StitchError::Warp(_) => {
                "params"
            }
            StitchError::Resample(_) | StitchError::Compositor(_) => "rendering",
            StitchError::InvalidConfig(_) => "config",
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self.stage() {
            "io" => 2,
            "registration" => 3,
            "params" => 4,
            "rendering" => 5,
            _ => 1,
        }
    }
}

/// Everything a stitch produces, for callers that want more than the image.
#[derive(Debug, Clone)]
pub struct StitchOutput {
    pub image: ImageGrid,
    pub report: StitchReport,
    pub matches: MatchSet,
    pub warp: HalfCylWarp,
    pub canvas: Canvas,
    /// `None` when the focal estimate is degenerate and the target is
    /// rendered by the homography alone.
    pub strip: Option<ResampledStrip>,
    /// Samples per row handed to the resampler, `⌊s·w_t⌋`.
    pub sample_count: usize,
    pub desired_height: f64,
    pub reference_render: ImageGrid,
    pub target_render: ImageGrid,
    pub labels: SeamLabels,
}

struct Stopwatch {
    enabled: bool,
}

impl Stopwatch {
    fn time<T>(&self, acc: &mut f64, f: impl FnOnce() -> T) -> T {
        if !self.enabled {
            return f();
        }
        let start = Instant::now();
        let out = f();
        *acc += start.elapsed().as_secs_f64();
        out
    }
}

/// Runs the whole pipeline in memory.
pub fn stitch_images(
    reference: &ImageGrid,
    target: &ImageGrid,
    cfg: &StitchConfig,
) -> Result<StitchOutput, StitchError> {
    cfg.validate()?;
    let clock = Stopwatch {
        enabled: cfg.record_timings,
    };
    let (mut warp_time, mut seam_time, mut total_time) = (0.0, 0.0, 0.0);
    let ref_dims = Dims::new(reference.width(), reference.height());
    let tgt_dims = Dims::new(target.width(), target.height());

    let staged = clock.time(&mut total_time, || -> Result<_, StitchError> {
        let mut matches = detect_and_match(reference, target, &cfg.matching)?;
        let ransac = RansacConfig {
            seed: cfg.seed,
            ..cfg.ransac
        };
        let (h, _) = estimate_homography_ransac(&mut matches, &ransac)?;
        let inliers = matches.inlier_pairs();
        let similarity = fit_similarity(&inliers)?;
        let scale = selection_scale(&similarity)?;
        let rmse = reprojection_rmse(&h, &inliers);
        check_horizontal(&h, ref_dims, tgt_dims)?;

        let rendered = clock.time(&mut warp_time, || -> Result<_, StitchError> {
            let (a0, side) = choose_a0(&h, ref_dims, tgt_dims)?;
            let b0 = estimate_b0(&h, tgt_dims)?;
            let heights = column_heights(&h, tgt_dims, a0, side)?;
            let (first, last) = (heights.first(), heights.last());
            let hd = compute_hd(tgt_dims.height, first.map_or(0.0, |c| c.1), last.map_or(0.0, |c| c.1));
            let focal = estimate_focal(&heights, a0, hd, &cfg.focal_config(ref_dims.width))?;
            let cyl = CylindricalParams::new(focal.f, a0, b0).map_err(StitchError::Warp)?;
            let warp = HalfCylWarp::new(h.clone(), cyl, side).map_err(StitchError::Warp)?;
            let grid = build_sample_grid(tgt_dims, scale)?;
            let sample_count = grid.count;
            let strip = if focal.degenerate {
                None
            } else {
                let filtered = filter_nonoverlap(&grid, &warp);
                if filtered.is_empty() {
                    None
                } else {
                    Some(resample_strip(target, &warp, &filtered)?)
                }
            };
            let canvas = canvas_bounds(ref_dims, &warp, tgt_dims, strip.as_ref())?;
            let target_render = render_target(target, &warp, strip.as_ref(), &canvas);
            Ok((warp, focal, b0, hd, strip, sample_count, canvas, target_render))
        })?;
        Ok((matches, h, similarity, scale, rmse, rendered))
    })?;
    let (matches, h, similarity, scale, rmse, rendered) = staged;
    let (warp, focal, b0, hd, strip, sample_count, canvas, target_render) = rendered;

    let composed = clock.time(&mut total_time, || -> Result<_, StitchError> {
        let reference_render = render_reference(reference, &canvas);
        let layout = SeamLayout::from(warp.side());
        let labels = clock.time(&mut seam_time, || {
            find_seam_scaled(&reference_render, &target_render, cfg.seam_scale, layout)
        })?;
        let image = blend(&reference_render, &target_render, &labels, cfg.feather)?;
        Ok((reference_render, labels, image))
    })?;
    let (reference_render, labels, image) = composed;

    let report = StitchReport {
        homography: h.to_row_major(),
        similarity,
        scale,
        a0: warp.a0(),
        b0,
        focal: focal.f,
        degenerate_focal: focal.degenerate,
        inlier_count: matches.inlier_count(),
        alignment_rmse_px: rmse,
        warp_time_s: warp_time,
        seam_time_s: seam_time,
        total_time_s: total_time,
    };
    Ok(StitchOutput {
        image,
        report,
        matches,
        warp,
        canvas,
        strip,
        sample_count,
        desired_height: hd,
        reference_render,
        target_render,
        labels,
    })
}

/// Rejects pairs whose target center moves more vertically than
/// horizontally relative to the reference center.
fn check_horizontal(h: &Homography, reference: Dims, target: Dims) -> Result<(), StitchError> {
    let center = |d: Dims| Point2::new((1.0 + d.width as f64) / 2.0, (1.0 + d.height as f64) / 2.0);
    let moved = h.apply(center(target)).map_err(StitchError::Warp)?;
    let rc = center(reference);
    let (dx, dy) = (moved.x - rc.x, moved.y - rc.y);
    if dy.abs() > dx.abs() {
        return Err(StitchError::VerticalDisplacement { dx, dy });
    }
    Ok(())
}

/// Loads both inputs, stitches them and writes the output PNG, plus the
/// metrics JSON and intermediate images when requested. Nothing is written
/// unless both inputs load and the stitch succeeds.
pub fn run_stitch(
    reference_path: &Path,
    target_path: &Path,
    output_path: &Path,
    metrics_path: Option<&Path>,
    cfg: &StitchConfig,
) -> Result<StitchReport, StitchError> {
    let reference = io::load_image(reference_path)?;
    let target = io::load_image(target_path)?;
    let out = stitch_images(&reference, &target, cfg)?;
    io::save_png(&out.image, output_path)?;
    if let Some(path) = metrics_path {
        write_report(&out.report, path)?;
    }
    if let Some(dir) = &cfg.save_intermediate {
        save_intermediates(&reference, &target, &out, dir)?;
    }
    Ok(out.report)
}

pub fn write_report(report: &StitchReport, path: &Path) -> Result<(), StitchError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| {
        StitchError::Io(IoError::File {
            path: path.display().to_string(),
            source,
        })
    })
}

fn save_intermediates(
    reference: &ImageGrid,
    target: &ImageGrid,
    out: &StitchOutput,
    dir: &Path,
) -> Result<(), StitchError> {
    std::fs::create_dir_all(dir).map_err(|source| {
        StitchError::Io(IoError::File {
            path: dir.display().to_string(),
            source,
        })
    })?;
    io::save_rgb(&matches_overlay(reference, target, &out.matches), &dir.join("matches.png"))?;
    io::save_png(&render_unselected(target, &out.warp), &dir.join("before_selection.png"))?;
    io::save_png(&out.target_render, &dir.join("after_selection.png"))?;
    io::save_rgb(&seam_overlay(&out.image, &out.reference_render, &out.target_render, &out.labels), &dir.join("seam.png"))?;
    io::save_mask_png(&out.image, &dir.join("mask.png"))?;
    Ok(())
}

/// Reference and target side by side with inliers joined in green and
/// outliers in red.
fn matches_overlay(reference: &ImageGrid, target: &ImageGrid, matches: &MatchSet) -> RgbImage {
    let (rw, rh) = reference.dims();
    let (tw, th) = target.dims();
    let mut canvas = RgbImage::new((rw + tw) as u32, rh.max(th) as u32);
    ::image::imageops::replace(&mut canvas, &io::to_rgb(reference), 0, 0);
    ::image::imageops::replace(&mut canvas, &io::to_rgb(target), rw as i64, 0);
    for (i, c) in matches.pairs.iter().enumerate() {
        let inlier = matches.inliers.as_ref().is_none_or(|m| m[i]);
        let color = if inlier { Rgb([0, 255, 0]) } else { Rgb([255, 0, 0]) };
        let from = (c.reference.x - 1.0, c.reference.y - 1.0);
        let to = (c.target.x - 1.0 + rw as f64, c.target.y - 1.0);
        draw_line(&mut canvas, from, to, color);
    }
    canvas
}

fn draw_line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), color: Rgb<u8>) {
    let steps = (to.0 - from.0).abs().max((to.1 - from.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = (from.0 + t * (to.0 - from.0)).round();
        let y = (from.1 + t * (to.1 - from.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// The target under the plain half-cylindrical warp, without re-spacing
/// the columns.
fn render_unselected(target: &ImageGrid, warp: &HalfCylWarp) -> ImageGrid {
    let (w, h) = target.dims();
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    let border = (1..=w)
        .flat_map(|x| [(x, 1), (x, h)])
        .chain((1..=h).flat_map(|y| [(1, y), (w, y)]));
    for (x, y) in border {
        if let Ok(q) = warp.forward(Point2::new(x as f64, y as f64)) {
            if q.is_finite() {
                xs = (xs.0.min(q.x), xs.1.max(q.x));
                ys = (ys.0.min(q.y), ys.1.max(q.y));
            }
        }
    }
    if !xs.0.is_finite() {
        return ImageGrid::new(1, 1, target.channels()).expect("non-empty");
    }
    let (x0, y0) = (xs.0.floor() as i64, ys.0.floor() as i64);
    let width = (xs.1.ceil() as i64 - x0 + 1) as usize;
    let height = (ys.1.ceil() as i64 - y0 + 1) as usize;
    let mut out = ImageGrid::new(width, height, target.channels()).expect("non-empty");
    for row in 0..height {
        for col in 0..width {
            let q = Point2::new((x0 + col as i64) as f64, (y0 + row as i64) as f64);
            if let Ok(p) = warp.inverse(q) {
                if let Some(c) = target.sample(p) {
                    out.set_color(col, row, &c);
                }
            }
        }
    }
    out
}

/// The blended output with the seam drawn in red where both inputs are
/// valid.
fn seam_overlay(
    image: &ImageGrid,
    reference: &ImageGrid,
    target: &ImageGrid,
    labels: &SeamLabels,
) -> RgbImage {
    let mut rgb = io::to_rgb(image);
    let mut prev: Option<usize> = None;
    for row in 0..image.height() {
        let b = labels.boundary[row.min(labels.height - 1)];
        let (lo, hi) = prev.map_or((b, b), |p| (p.min(b), p.max(b)));
        prev = Some(b);
        for col in lo..=hi + 1 {
            if col < image.width() && reference.is_valid(col, row) && target.is_valid(col, row) {
                rgb.put_pixel(col as u32, row as u32, Rgb([255, 0, 0]));
            }
        }
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_stage() {
        let io = StitchError::Io(IoError::Format(String::new()));
        let reg = StitchError::Registration(RegistrationError::TooFewMatches { found: 0 });
        let params = StitchError::Params(ParamsError::AmbiguousSide);
        let render = StitchError::Compositor(CompositorError::NoOverlap);
        let codes: Vec<i32> = [io, reg, params, render].iter().map(|e| e.exit_code()).collect();
        assert_eq!(codes, vec![2, 3, 4, 5]);
    }

    #[test]
    fn seam_scale_must_be_power_of_two() {
        let cfg = StitchConfig {
            seam_scale: 6,
            ..StitchConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(StitchError::InvalidConfig(_))));
    }

    #[test]
    fn vertical_pairs_are_rejected() {
        let d = Dims::new(100, 100);
        assert!(check_horizontal(&Homography::translation(60.0, 5.0), d, d).is_ok());
        assert!(matches!(
            check_horizontal(&Homography::translation(5.0, 60.0), d, d),
            Err(StitchError::VerticalDisplacement { .. })
        ));
    }
}
