//! Horizontal pixel selection on the non-overlapping side of the partition.
//!
//! Each target row is sampled at `N = ⌊s·w⌋` equally spaced abscissas
//! `x_i = i·w/N`. The samples whose half-cylindrical image falls beyond the
//! partition line are re-spaced one canvas pixel apart, outward from the
//! line, while keeping their warped ordinates. The strip therefore carries
//! the target's content at the similarity scale `s` horizontally and the
//! cylindrical shape vertically.

use thiserror::Error;

use crate::geometry::{GeometryError, HalfCylWarp, Point2, Region, Side};
use crate::image::ImageGrid;
use crate::params::Dims;

/// Source coordinates within this distance of an integer are snapped to it,
/// so round-trips through the warp land exactly on pixel rows and columns.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResampleError {
    #[error("scale {scale} leaves no samples across width {width}")]
    ScaleTooSmall { scale: f64, width: usize },
    #[error("no samples fall in the non-overlapping region")]
    EmptyGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Sample abscissas shared by every row `t = 1..=height`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub scale: f64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// `x_i = i·w/N` for `i = 1..=N`.
    pub abscissas: Vec<f64>,
}

pub fn build_sample_grid(target: Dims, scale: f64) -> Result<SampleGrid, ResampleError> {
    let n = scale * target.width as f64;
    if !(scale > 0.0) || !n.is_finite() || n.floor() < 1.0 {
        return Err(ResampleError::ScaleTooSmall {
            scale,
            width: target.width,
        });
    }
    let count = n.floor() as usize;
    let w = target.width as f64;
    let abscissas = (1..=count).map(|i| i as f64 * w / count as f64).collect();
    Ok(SampleGrid {
        scale,
        count,
        width: target.width,
        height: target.height,
        abscissas,
    })
}

/// Samples of one row that landed in the cylindrical region.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedRun {
    /// Row ordinate `t` (1-based).
    pub row: usize,
    /// Index into [`SampleGrid::abscissas`] of the first retained sample.
    pub first: usize,
    /// Warped positions, in order of increasing sample index.
    pub warped: Vec<Point2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredGrid {
    pub grid: SampleGrid,
    pub side: Side,
    pub runs: Vec<RetainedRun>,
}

impl FilteredGrid {
    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.runs.iter().map(|r| r.warped.len()).sum()
    }
}

/// Keeps, per row, the longest contiguous run of samples whose image lies
/// in the cylindrical region (earliest run on ties).
pub fn filter_nonoverlap(grid: &SampleGrid, warp: &HalfCylWarp) -> FilteredGrid {
    let mut runs = Vec::new();
    let mut warped_row = Vec::with_capacity(grid.count);
    for t in 1..=grid.height {
        warped_row.clear();
        let y = t as f64;
        let (mut best_start, mut best_len) = (0, 0);
        let mut start = None;
        for (i, &x) in grid.abscissas.iter().enumerate() {
            let q = warp.homography().apply(Point2::new(x, y)).ok();
            let inside = q.is_some_and(|q| warp.region(q.x) == Region::Cylindrical);
            warped_row.push(q.map(|q| warp.cylinder().forward(q)));
            match (inside, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    if i - s > best_len {
                        (best_start, best_len) = (s, i - s);
                    }
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            if grid.count - s > best_len {
                (best_start, best_len) = (s, grid.count - s);
            }
        }
        if best_len > 0 {
            runs.push(RetainedRun {
                row: t,
                first: best_start,
                warped: warped_row[best_start..best_start + best_len]
                    .iter()
                    .map(|q| q.expect("retained samples have images"))
                    .collect(),
            });
        }
    }
    FilteredGrid {
        grid: grid.clone(),
        side: warp.side(),
        runs,
    }
}

/// The re-spaced non-overlap strip.
///
/// Raster row `t − 1` holds target row `t`; raster column `j − 1` holds the
/// sample placed at canvas abscissa `a0 ± j` (outward from the line).
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledStrip {
    pub image: ImageGrid,
    pub side: Side,
    pub a0: f64,
    /// Canvas position of the first column of the topmost non-empty row.
    pub anchor: Point2,
    /// Number of placed samples per raster row.
    pub run_lengths: Vec<usize>,
    /// Canvas ordinate of each placed sample (`NaN` past a row's run).
    pub canvas_y: Vec<f64>,
    /// Target position each placed sample was read from (1-based).
    pub source: Vec<Point2>,
}

impl ResampledStrip {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Canvas abscissa of strip column `j` (1-based).
    pub fn canvas_x(&self, j: usize) -> f64 {
        self.a0 + self.side.sign() * j as f64
    }

    pub fn placed(&self, row: usize, col: usize) -> Option<(f64, Point2)> {
        if col >= self.run_lengths[row] {
            return None;
        }
        let i = row * self.width() + col;
        Some((self.canvas_y[i], self.source[i]))
    }

    pub fn total_samples(&self) -> usize {
        self.run_lengths.iter().sum()
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= SNAP {
        r
    } else {
        v
    }
}

/// Places each retained sample one pixel further from the partition line
/// than the previous one, reads its color back through the inverse warp with
/// bilinear interpolation, and records where it sits on the canvas.
pub fn resample_strip(
    target: &ImageGrid,
    warp: &HalfCylWarp,
    filtered: &FilteredGrid,
) -> Result<ResampledStrip, ResampleError> {
    if filtered.is_empty() {
        return Err(ResampleError::EmptyGrid);
    }
    let width = filtered.runs.iter().map(|r| r.warped.len()).max().unwrap_or(0);
    let height = filtered.grid.height;
    let mut image = ImageGrid::new(width, height, target.channels())
        .map_err(|_| ResampleError::EmptyGrid)?;
    let mut run_lengths = vec![0; height];
    let mut canvas_y = vec![f64::NAN; width * height];
    let mut source = vec![Point2::new(f64::NAN, f64::NAN); width * height];
    let side = filtered.side;
    let mut anchor = None;

    for run in &filtered.runs {
        let r = run.row - 1;
        let n = run.warped.len();
        run_lengths[r] = n;
        for j in 0..n {
            // Column j sits j + 1 pixels from the line; on the left side the
            // sample nearest the line is the last one of the run.
            let q = match side {
                Side::CylRightOfLine => run.warped[j],
                Side::CylLeftOfLine => run.warped[n - 1 - j],
            };
            let p = warp.inverse(q)?;
            let p = Point2::new(snap(p.x), snap(p.y));
            let idx = r * width + j;
            canvas_y[idx] = q.y;
            source[idx] = p;
            if let Some(c) = target.sample(p) {
                image.set_color(j, r, &c);
            }
        }
        if anchor.is_none() {
            let y = canvas_y[r * width];
            anchor = Some(Point2::new(warp.a0(), y));
        }
    }

    Ok(ResampledStrip {
        image,
        side,
        a0: warp.a0(),
        anchor: anchor.unwrap_or_default(),
        run_lengths,
        canvas_y,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CylindricalParams, Homography};

    #[test]
    fn grid_examples() {
        let g = build_sample_grid(Dims::new(640, 4), 1.0).unwrap();
        assert_eq!(g.count, 640);
        assert!(g.abscissas.iter().enumerate().all(|(i, x)| *x == (i + 1) as f64));

        let g = build_sample_grid(Dims::new(1000, 4), 0.8).unwrap();
        assert_eq!(g.count, 800);
        assert!(g.abscissas.iter().enumerate().all(|(i, x)| (*x - 1.25 * (i + 1) as f64).abs() < 1e-12));

        let g = build_sample_grid(Dims::new(10, 4), 1.3).unwrap();
        assert_eq!(g.count, 13);
        assert!((g.abscissas[0] - 10.0 / 13.0).abs() < 1e-15);
        assert_eq!(*g.abscissas.last().unwrap(), 10.0);
    }

    #[test]
    fn tiny_scale_is_rejected() {
        assert!(matches!(
            build_sample_grid(Dims::new(10, 4), 0.05),
            Err(ResampleError::ScaleTooSmall { .. })
        ));
        assert!(build_sample_grid(Dims::new(10, 4), 0.0).is_err());
        assert!(build_sample_grid(Dims::new(10, 4), f64::NAN).is_err());
    }

    #[test]
    fn nothing_retained_when_target_is_on_the_homography_side() {
        let g = build_sample_grid(Dims::new(50, 20), 1.0).unwrap();
        let c = CylindricalParams::new(200.0, 500.0, 10.0).unwrap();
        let warp = HalfCylWarp::new(Homography::identity(), c, Side::CylRightOfLine).unwrap();
        let f = filter_nonoverlap(&g, &warp);
        assert!(f.is_empty());
        let img = ImageGrid::from_fn(50, 20, 1, |_, _, _| 0.5).unwrap();
        assert_eq!(resample_strip(&img, &warp, &f), Err(ResampleError::EmptyGrid));
    }

    #[test]
    fn midline_partition_keeps_the_far_half() {
        let g = build_sample_grid(Dims::new(60, 8), 1.0).unwrap();
        let c = CylindricalParams::new(80.0, 30.0, 4.0).unwrap();
        let warp = HalfCylWarp::new(Homography::identity(), c, Side::CylRightOfLine).unwrap();
        let f = filter_nonoverlap(&g, &warp);
        assert_eq!(f.runs.len(), 8);
        for run in &f.runs {
            // Samples x = 31..=60 lie right of a0 = 30.
            assert_eq!(run.first, 30);
            assert_eq!(run.warped.len(), 30);
            for (k, q) in run.warped.iter().enumerate() {
                let x = (run.first + k + 1) as f64;
                assert_eq!(*q, c.forward(Point2::new(x, run.row as f64)));
            }
        }
    }

    #[test]
    fn left_side_columns_start_at_the_line() {
        let img = ImageGrid::from_fn(40, 6, 1, |x, _, _| x as f32 / 40.0).unwrap();
        let g = build_sample_grid(Dims::new(40, 6), 1.0).unwrap();
        let c = CylindricalParams::new(1e9, 20.0, 3.0).unwrap();
        let warp = HalfCylWarp::new(Homography::identity(), c, Side::CylLeftOfLine).unwrap();
        let strip = resample_strip(&img, &warp, &filter_nonoverlap(&g, &warp)).unwrap();
        assert_eq!(strip.width(), 19);
        // Column 1 holds x = 19, one pixel left of the line.
        assert_eq!(strip.canvas_x(1), 19.0);
        assert_eq!(strip.image.pixel(0, 0)[0], 18.0 / 40.0);
        assert_eq!(strip.image.pixel(18, 0)[0], 0.0);
    }
}
