//! Free parameters of the half-cylindrical warp, estimated from the global
//! homography and the image sizes: the partition abscissa `a0` and its side,
//! the center ordinate `b0`, the target height `h_D`, and the focal length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Homography, Point2, Side};

/// Fraction of the reference width around its center in which the warped
/// target centroid is considered too central to pick a side.
pub const AMBIGUOUS_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("warped target centroid is within 5% of the reference center; cannot pick a side")]
    AmbiguousSide,
    #[error("warped target does not extend past the partition line")]
    EmptyNonOverlap,
    #[error("warped target is not a convex quadrilateral")]
    NonConvexQuad,
    #[error("invalid focal bracket [{f_min}, {f_max}]")]
    InvalidBracket { f_min: f64, f_max: f64 },
    #[error("invalid focal search configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }
}

/// Picks the partition line at the reference's left (`a0 = 1`) or right
/// (`a0 = w`) border, on the side where the warped target lies.
pub fn choose_a0(h: &Homography, reference: Dims, target: Dims) -> Result<(f64, Side), ParamsError> {
    let (w, ht) = (target.width as f64, target.height as f64);
    let corners = [
        Point2::new(1.0, 1.0),
        Point2::new(w, 1.0),
        Point2::new(w, ht),
        Point2::new(1.0, ht),
    ];
    let mut cx = 0.0;
    for c in corners {
        cx += h.apply(c)?.x;
    }
    cx /= 4.0;
    let wr = reference.width as f64;
    let center = 0.5 * (1.0 + wr);
    if (cx - center).abs() <= AMBIGUOUS_BAND * wr {
        return Err(ParamsError::AmbiguousSide);
    }
    if cx > center {
        Ok((wr, Side::CylRightOfLine))
    } else {
        Ok((1.0, Side::CylLeftOfLine))
    }
}

/// Center ordinate from the target row whose two boundary points keep the
/// smallest vertical offset under `h`. Ties go to the topmost row.
pub fn estimate_b0(h: &Homography, target: Dims) -> Result<f64, ParamsError> {
    let right = target.width as f64;
    let mut best = (f64::INFINITY, 0.0);
    for i in 1..=target.height {
        let y = i as f64;
        let yl = h.apply(Point2::new(1.0, y))?.y;
        let yr = h.apply(Point2::new(right, y))?.y;
        let offset = (yl - yr).abs();
        if offset < best.0 {
            best = (offset, 0.5 * (yl + yr));
        }
    }
    Ok(best.1)
}

/// Heights of the warped target along vertical lines across its
/// non-overlapping part, ordered by increasing abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnHeights {
    pub columns: Vec<(f64, f64)>,
}

impl ColumnHeights {
    pub fn first(&self) -> Option<(f64, f64)> {
        self.columns.first().copied()
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.columns.last().copied()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Corners of the target's pixel footprint `[0.5, w+0.5] × [0.5, h+0.5]`
/// mapped by `h`, in boundary order.
pub fn warped_footprint(h: &Homography, target: Dims) -> Result<[Point2; 4], ParamsError> {
    let (x1, y1) = (target.width as f64 + 0.5, target.height as f64 + 0.5);
    Ok([
        h.apply(Point2::new(0.5, 0.5))?,
        h.apply(Point2::new(x1, 0.5))?,
        h.apply(Point2::new(x1, y1))?,
        h.apply(Point2::new(0.5, y1))?,
    ])
}

fn is_convex(quad: &[Point2; 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b, c) = (quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]);
        let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
        if cross == 0.0 || (sign != 0.0 && cross.signum() != sign) {
            return false;
        }
        sign = cross.signum();
    }
    true
}

/// Vertical extent of the intersection of the line `x = at` with a convex
/// quadrilateral; zero when they do not meet.
pub fn vertical_extent(quad: &[Point2; 4], at: f64) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..4 {
        let (p, q) = (quad[i], quad[(i + 1) % 4]);
        if at < p.x.min(q.x) || at > p.x.max(q.x) {
            continue;
        }
        if p.x == q.x {
            lo = lo.min(p.y.min(q.y));
            hi = hi.max(p.y.max(q.y));
        } else {
            let y = p.y + (at - p.x) * (q.y - p.y) / (q.x - p.x);
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// Samples `target.width` equally spaced columns (at sub-interval centers)
/// between the partition line and the far edge of the warped footprint.
pub fn column_heights(
    h: &Homography,
    target: Dims,
    a0: f64,
    side: Side,
) -> Result<ColumnHeights, ParamsError> {
    let quad = warped_footprint(h, target)?;
    if !is_convex(&quad) {
        return Err(ParamsError::NonConvexQuad);
    }
    let xmin = quad.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = quad.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let (start, end) = match side {
        Side::CylRightOfLine => (a0.max(xmin), xmax),
        Side::CylLeftOfLine => (xmin, a0.min(xmax)),
    };
    if !(end > start) {
        return Err(ParamsError::EmptyNonOverlap);
    }
    let n = target.width;
    let step = (end - start) / n as f64;
    let columns: Vec<(f64, f64)> = (1..=n)
        .map(|i| start + (i as f64 - 0.5) * step)
        .map(|x| (x, vertical_extent(&quad, x)))
        .filter(|(_, height)| *height > 0.0)
        .collect();
    if columns.is_empty() {
        return Err(ParamsError::EmptyNonOverlap);
    }
    Ok(ColumnHeights { columns })
}

/// Desired height after the cylindrical correction:
/// `max(h, (h'_1 + h'_w + 2h) / 4)`.
pub fn compute_hd(target_height: usize, h_first: f64, h_last: f64) -> f64 {
    let h = target_height as f64;
    h.max((h_first + h_last + 2.0 * h) / 4.0)
}

/// Height of a column of post-homography height `h_prime` at abscissa
/// `x_prime` after the cylindrical warp: `f·(h'−1)/√((x'−a0)²+f²) + 1`.
pub fn height_after_cyl(f: f64, x_prime: f64, a0: f64, h_prime: f64) -> f64 {
    f * (h_prime - 1.0) / f.hypot(x_prime - a0) + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalSearchConfig {
    pub f_min: f64,
    pub f_max: f64,
    /// Final bracket width of the refinement, in pixels.
    pub tolerance: f64,
    pub grid_points: usize,
}

impl FocalSearchConfig {
    /// `[w/8, 32·w]`, 0.5 px tolerance, 64 grid probes.
    pub fn for_reference_width(width: usize) -> Self {
        let w = width as f64;
        Self {
            f_min: w / 8.0,
            f_max: 32.0 * w,
            tolerance: 0.5,
            grid_points: 64,
        }
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.f_min < self.f_max) || !self.f_max.is_finite() {
            return Err(ParamsError::InvalidBracket {
                f_min: self.f_min,
                f_max: self.f_max,
            });
        }
        if !(self.f_min > 0.0) {
            return Err(ParamsError::InvalidConfig("f_min must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(ParamsError::InvalidConfig("tolerance must be positive"));
        }
        if self.grid_points < 3 {
            return Err(ParamsError::InvalidConfig("need at least 3 grid points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalEstimate {
    pub f: f64,
    /// The minimizer sits at the upper bound: no bending is needed.
    pub degenerate: bool,
    pub residual: f64,
}

/// `Σ (h''_i(f) − h_D)²` over the sampled columns.
pub fn focal_objective(ch: &ColumnHeights, a0: f64, hd: f64, f: f64) -> f64 {
    ch.columns
        .iter()
        .map(|&(x, h)| (height_after_cyl(f, x, a0, h) - hd).powi(2))
        .sum()
}

/// Geometric grid scan over `[f_min, f_max]`, then golden-section search
/// inside the cells adjacent to the best probe.
pub fn estimate_focal(
    ch: &ColumnHeights,
    a0: f64,
    hd: f64,
    cfg: &FocalSearchConfig,
) -> Result<FocalEstimate, ParamsError> {
    cfg.validate()?;
    if ch.is_empty() {
        return Err(ParamsError::EmptyNonOverlap);
    }
    let objective = |f: f64| focal_objective(ch, a0, hd, f);
    let n = cfg.grid_points;
    let ratio = (cfg.f_max / cfg.f_min).powf(1.0 / (n - 1) as f64);
    let grid: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => cfg.f_min,
            i if i == n - 1 => cfg.f_max,
            i => cfg.f_min * ratio.powi(i as i32),
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&f| objective(f)).collect();
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[k] {
            k = i;
        }
    }
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(n - 1)];
    let (mut f, mut value) = golden_section(&objective, lo, hi, cfg.tolerance);
    if values[k] <= value {
        f = grid[k];
        value = values[k];
    }
    Ok(FocalEstimate {
        f,
        degenerate: cfg.f_max - f <= cfg.tolerance,
        residual: value,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Returns the best evaluated point once the bracket is narrower than `tol`.
fn golden_section(func: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut best = if func(a) <= func(b) { (a, func(a)) } else { (b, func(b)) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (func(c), func(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = func(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = func(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    best
}
