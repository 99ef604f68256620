//! Output canvas, rendering of both inputs onto it, seam search in the
//! overlap at reduced resolution, and hard-cut (optionally feathered)
//! blending along the seam.

use thiserror::Error;

use crate::geometry::{HalfCylWarp, Point2, Region, Side};
use crate::image::ImageGrid;
use crate::params::Dims;
use crate::resample::ResampledStrip;

/// Energy of a pixel that lies in the seam's bounding box but outside the
/// overlap. Real energies are at most 4 (four channels, unit range).
const OUTSIDE_COST: f64 = 1e6;

/// Half-width of the optional feather ramp, in pixels.
pub const FEATHER_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompositorError {
    #[error("canvas would be empty")]
    EmptyCanvas,
    #[error("the rendered images do not overlap")]
    NoOverlap,
    #[error("raster sizes differ: {0:?} vs {1:?}")]
    RasterMismatch((usize, usize), (usize, usize)),
}

/// Integer rectangle in reference coordinates. Canvas pixel `(col, row)`
/// sits at reference coordinate `(x0 + col, y0 + row)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Canvas {
    pub x0: i64,
    pub y0: i64,
    pub width: usize,
    pub height: usize,
}

impl Canvas {
    pub fn to_reference(&self, col: usize, row: usize) -> Point2 {
        Point2::new((self.x0 + col as i64) as f64, (self.y0 + row as i64) as f64)
    }

    /// Canvas pixel holding the (integer) reference coordinate, if any.
    pub fn to_canvas(&self, x: i64, y: i64) -> Option<(usize, usize)> {
        let (c, r) = (x - self.x0, y - self.y0);
        (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
            .then_some((c as usize, r as usize))
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x0 as f64
            && p.y >= self.y0 as f64
            && p.x <= (self.x0 + self.width as i64 - 1) as f64
            && p.y <= (self.y0 + self.height as i64 - 1) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Bounds {
    fn empty() -> Self {
        Self {
            xmin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymin: f64::INFINITY,
            ymax: f64::NEG_INFINITY,
        }
    }

    fn add(&mut self, p: Point2) {
        if p.is_finite() {
            self.xmin = self.xmin.min(p.x);
            self.xmax = self.xmax.max(p.x);
            self.ymin = self.ymin.min(p.y);
            self.ymax = self.ymax.max(p.y);
        }
    }
}

/// Target corners (pixel centers) mapped by the homography, clipped to the
/// homography side of the partition line.
fn homography_side_polygon(warp: &HalfCylWarp, target: Dims, clip: bool) -> Vec<Point2> {
    let (w, h) = (target.width as f64, target.height as f64);
    let quad: Vec<Point2> = [
        Point2::new(1.0, 1.0),
        Point2::new(w, 1.0),
        Point2::new(w, h),
        Point2::new(1.0, h),
    ]
    .iter()
    .filter_map(|p| warp.homography().apply(*p).ok())
    .collect();
    if !clip || quad.len() < 3 {
        return quad;
    }
    let s = warp.side().sign();
    let a0 = warp.a0();
    // Keep the half-plane s·(x − a0) ≤ 0.
    let inside = |p: &Point2| s * (p.x - a0) <= 0.0;
    let mut out = Vec::new();
    for i in 0..quad.len() {
        let (p, q) = (quad[i], quad[(i + 1) % quad.len()]);
        match (inside(&p), inside(&q)) {
            (true, true) => out.push(q),
            (true, false) | (false, true) => {
                let t = (a0 - p.x) / (q.x - p.x);
                out.push(Point2::new(a0, p.y + t * (q.y - p.y)));
                if inside(&q) {
                    out.push(q);
                }
            }
            (false, false) => {}
        }
    }
    out
}

/// Smallest integer rectangle holding the reference, the homography-side
/// part of the warped target, and the placed strip. Without a strip the
/// whole target is rendered by the homography.
pub fn canvas_bounds(
    reference: Dims,
    warp: &HalfCylWarp,
    target: Dims,
    strip: Option<&ResampledStrip>,
) -> Result<Canvas, CompositorError> {
    if reference.width == 0 || reference.height == 0 || target.width == 0 || target.height == 0 {
        return Err(CompositorError::EmptyCanvas);
    }
    let mut b = Bounds::empty();
    b.add(Point2::new(1.0, 1.0));
    b.add(Point2::new(reference.width as f64, reference.height as f64));
    for p in homography_side_polygon(warp, target, strip.is_some()) {
        b.add(p);
    }
    if let Some(s) = strip {
        for (r, &n) in s.run_lengths.iter().enumerate() {
            for j in 0..n {
                b.add(Point2::new(s.canvas_x(j + 1), s.canvas_y[r * s.width() + j]));
            }
        }
    }
    let (x0, x1) = (b.xmin.floor(), b.xmax.ceil());
    let (y0, y1) = (b.ymin.floor(), b.ymax.ceil());
    if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
        return Err(CompositorError::EmptyCanvas);
    }
    Ok(Canvas {
        x0: x0 as i64,
        y0: y0 as i64,
        width: (x1 - x0) as usize + 1,
        height: (y1 - y0) as usize + 1,
    })
}

/// The reference pasted at its own coordinates.
pub fn render_reference(reference: &ImageGrid, canvas: &Canvas) -> ImageGrid {
    let mut out = ImageGrid::new(canvas.width, canvas.height, reference.channels())
        .expect("canvas is non-empty");
    for row in 0..reference.height() {
        for col in 0..reference.width() {
            if !reference.is_valid(col, row) {
                continue;
            }
            if let Some((c, r)) = canvas.to_canvas(col as i64 + 1, row as i64 + 1) {
                out.set_pixel(c, r, reference.pixel(col, row));
            }
        }
    }
    out
}

/// Renders the target: backward homography mapping on the homography side
/// (the whole canvas when `strip` is `None`), and the re-spaced strip on the
/// cylindrical side, interpolated vertically between strip rows.
pub fn render_target(
    target: &ImageGrid,
    warp: &HalfCylWarp,
    strip: Option<&ResampledStrip>,
    canvas: &Canvas,
) -> ImageGrid {
    let mut out = ImageGrid::new(canvas.width, canvas.height, target.channels())
        .expect("canvas is non-empty");
    let h_inv = warp.homography_inverse().matrix();
    let poly = homography_side_polygon(warp, Dims::new(target.width(), target.height()), strip.is_some());
    let mut b = Bounds::empty();
    for p in &poly {
        b.add(*p);
    }
    if b.xmin.is_finite() {
        let c0 = ((b.xmin.floor() as i64 - canvas.x0).max(0) as usize).min(canvas.width);
        let c1 = ((b.xmax.ceil() as i64 - canvas.x0 + 1).max(0) as usize).min(canvas.width);
        let r0 = ((b.ymin.floor() as i64 - canvas.y0).max(0) as usize).min(canvas.height);
        let r1 = ((b.ymax.ceil() as i64 - canvas.y0 + 1).max(0) as usize).min(canvas.height);
        for row in r0..r1 {
            for col in c0..c1 {
                let q = canvas.to_reference(col, row);
                if strip.is_some() && warp.region(q.x) == Region::Cylindrical {
                    continue;
                }
                let w = h_inv[(2, 0)] * q.x + h_inv[(2, 1)] * q.y + h_inv[(2, 2)];
                if w.abs() <= crate::geometry::MIN_DEPTH {
                    continue;
                }
                let p = Point2::new(
                    snap((h_inv[(0, 0)] * q.x + h_inv[(0, 1)] * q.y + h_inv[(0, 2)]) / w),
                    snap((h_inv[(1, 0)] * q.x + h_inv[(1, 1)] * q.y + h_inv[(1, 2)]) / w),
                );
                if let Some(c) = target.sample(p) {
                    out.set_color(col, row, &c);
                }
            }
        }
    }
    if let Some(strip) = strip {
        paint_strip(target, strip, canvas, &mut out);
    }
    out
}

/// Removes round-off from source positions that should be integral, so
/// exact pixel shifts keep their edge pixels.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 {
        r
    } else {
        v
    }
}

fn paint_strip(target: &ImageGrid, strip: &ResampledStrip, canvas: &Canvas, out: &mut ImageGrid) {
    let width = strip.width();
    for j in 1..=width {
        let x = strip.canvas_x(j);
        let xi = x.round();
        if (x - xi).abs() > 1e-9 {
            continue;
        }
        let col = xi as i64 - canvas.x0;
        if col < 0 || col as usize >= canvas.width {
            continue;
        }
        let col = col as usize;
        let mut prev: Option<(f64, Point2)> = None;
        for r in 0..strip.height() {
            let Some((y1, s1)) = strip.placed(r, j - 1) else {
                prev = None;
                continue;
            };
            if let Some((y0, s0)) = prev {
                if y1 > y0 {
                    // Half-open [y0, y1) except that the top row fills its own endpoint.
                    let lo = y0.ceil() as i64;
                    let hi = if y1.fract() == 0.0 { y1 as i64 - 1 } else { y1.floor() as i64 };
                    for y in lo..=hi {
                        let u = (y as f64 - y0) / (y1 - y0);
                        let p = Point2::new(s0.x + u * (s1.x - s0.x), s0.y + u * (s1.y - s0.y));
                        paint(target, canvas, out, col, y, p);
                    }
                }
            }
            if r + 1 == strip.height() || strip.placed(r + 1, j - 1).is_none() {
                if y1.fract() == 0.0 {
                    paint(target, canvas, out, col, y1 as i64, s1);
                }
            }
            prev = Some((y1, s1));
        }
    }
}

fn paint(target: &ImageGrid, canvas: &Canvas, out: &mut ImageGrid, col: usize, y: i64, p: Point2) {
    let row = y - canvas.y0;
    if row < 0 || row as usize >= canvas.height {
        return;
    }
    if let Some(c) = target.sample(p) {
        out.set_color(col, row as usize, &c);
    }
}

/// Box-filter downscale. Edge blocks that are cut off by the image border
/// average the pixels they do cover. A block is valid only when every pixel
/// in it is.
pub fn downscale(img: &ImageGrid, factor: usize) -> ImageGrid {
    let factor = factor.max(1);
    if factor == 1 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let ch = img.channels();
    let mut out = ImageGrid::new(ow, oh, ch).expect("non-empty");
    let samples = img.samples();
    let valid = img.valid_mask();
    // Row-streaming accumulation: one block row at a time.
    let mut acc = vec![0.0f64; ow * ch];
    let mut ok = vec![true; ow];
    let mut px = [0.0f32; 4];
    for by in 0..oh {
        acc.fill(0.0);
        ok.fill(true);
        let (y0, y1) = (by * factor, ((by + 1) * factor).min(h));
        for y in y0..y1 {
            let row = &samples[y * w * ch..(y + 1) * w * ch];
            let vrow = &valid[y * w..(y + 1) * w];
            for (x, (p, v)) in row.chunks_exact(ch).zip(vrow).enumerate() {
                let bx = x / factor;
                if !v {
                    ok[bx] = false;
                }
                for (a, s) in acc[bx * ch..(bx + 1) * ch].iter_mut().zip(p) {
                    *a += f64::from(*s);
                }
            }
        }
        for bx in 0..ow {
            if !ok[bx] {
                continue;
            }
            let (x0, x1) = (bx * factor, ((bx + 1) * factor).min(w));
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            for c in 0..ch {
                px[c] = (acc[bx * ch + c] / n) as f32;
            }
            out.set_pixel(bx, by, &px);
        }
    }
    out
}

/// Which input a composited pixel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    FromReference,
    FromTarget,
}

/// Horizontal arrangement of the two inputs across the seam.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeamLayout {
    TargetRight,
    TargetLeft,
}

impl From<Side> for SeamLayout {
    fn from(side: Side) -> Self {
        match side {
            Side::CylRightOfLine => SeamLayout::TargetRight,
            Side::CylLeftOfLine => SeamLayout::TargetLeft,
        }
    }
}

/// A seam with one boundary per row: columns `<= boundary[row]` take the
/// left input, the rest the right one.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamLabels {
    pub width: usize,
    pub height: usize,
    pub boundary: Vec<usize>,
    pub layout: SeamLayout,
    /// Summed energy along the seam path.
    pub cost: f64,
}

impl SeamLabels {
    /// Label at `(col, row)`; coordinates past the raster are clamped.
    pub fn label(&self, col: usize, row: usize) -> Label {
        let b = self.boundary[row.min(self.height - 1)];
        let left = col <= b;
        match (self.layout, left) {
            (SeamLayout::TargetRight, true) | (SeamLayout::TargetLeft, false) => Label::FromReference,
            _ => Label::FromTarget,
        }
    }

    pub fn transitions(&self, row: usize) -> usize {
        let mut n = 0;
        let mut prev = self.label(0, row);
        for col in 1..self.width {
            let l = self.label(col, row);
            if l != prev {
                n += 1;
                prev = l;
            }
        }
        n
    }
}

/// Per-pixel seam energy `Σ_c (a − b)²`, or `None` outside the overlap.
pub fn seam_energy(a: &ImageGrid, b: &ImageGrid, overlap: &[bool]) -> Vec<Option<f64>> {
    let ch = a.channels().min(b.channels());
    let (w, h) = a.dims();
    let mut e = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            if !overlap[row * w + col] {
                e.push(None);
                continue;
            }
            let (pa, pb) = (a.pixel(col, row), b.pixel(col, row));
            let mut s = 0.0;
            for c in 0..ch {
                let d = f64::from(pa[c]) - f64::from(pb[c]);
                s += d * d;
            }
            e.push(Some(s));
        }
    }
    e
}

/// Pixels valid in both renders.
pub fn overlap_mask(a: &ImageGrid, b: &ImageGrid) -> Vec<bool> {
    a.valid_mask()
        .iter()
        .zip(b.valid_mask())
        .map(|(x, y)| *x && *y)
        .collect()
}

/// Minimal-energy 8-connected top-to-bottom path through the overlap, by
/// dynamic programming on the overlap's bounding box. Among optimal paths
/// the lexicographically leftmost (top row first) is chosen.
pub fn find_seam(
    a: &ImageGrid,
    b: &ImageGrid,
    overlap: &[bool],
    layout: SeamLayout,
) -> Result<SeamLabels, CompositorError> {
    if a.dims() != b.dims() {
        return Err(CompositorError::RasterMismatch(a.dims(), b.dims()));
    }
    let energy = seam_energy(a, b, overlap);
    seam_from_energy(&energy, a.width(), a.height(), layout)
}

/// DP core of [`find_seam`] on a precomputed energy raster.
pub fn seam_from_energy(
    energy: &[Option<f64>],
    width: usize,
    height: usize,
    layout: SeamLayout,
) -> Result<SeamLabels, CompositorError> {
    let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
    for (i, e) in energy.iter().enumerate() {
        if e.is_some() {
            let (c, r) = (i % width, i / width);
            c0 = c0.min(c);
            c1 = c1.max(c);
            r0 = r0.min(r);
            r1 = r1.max(r);
        }
    }
    if c0 == usize::MAX {
        return Err(CompositorError::NoOverlap);
    }
    let bw = c1 - c0 + 1;
    let bh = r1 - r0 + 1;
    let e = |c: usize, r: usize| energy[(r0 + r) * width + c0 + c].unwrap_or(OUTSIDE_COST);

    // Cost-to-go from each cell to the bottom row.
    let mut cost = vec![0.0f64; bw * bh];
    for c in 0..bw {
        cost[(bh - 1) * bw + c] = e(c, bh - 1);
    }
    for r in (0..bh - 1).rev() {
        for c in 0..bw {
            let below = &cost[(r + 1) * bw..(r + 2) * bw];
            let lo = c.saturating_sub(1);
            let hi = (c + 1).min(bw - 1);
            let m = below[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
            cost[r * bw + c] = e(c, r) + m;
        }
    }

    let leftmost_min = |row: &[f64], lo: usize, hi: usize| {
        let mut k = lo;
        for c in lo..=hi {
            if row[c] < row[k] {
                k = c;
            }
        }
        k
    };
    let mut path = Vec::with_capacity(bh);
    let mut c = leftmost_min(&cost[..bw], 0, bw - 1);
    let total = cost[c];
    path.push(c);
    for r in 1..bh {
        let row = &cost[r * bw..(r + 1) * bw];
        c = leftmost_min(row, c.saturating_sub(1), (c + 1).min(bw - 1));
        path.push(c);
    }

    let mut boundary = vec![0; height];
    for (row, b) in boundary.iter_mut().enumerate() {
        let r = row.clamp(r0, r1) - r0;
        *b = c0 + path[r];
    }
    Ok(SeamLabels {
        width,
        height,
        boundary,
        layout,
        cost: total,
    })
}

/// Nearest-neighbour expansion of the labels by `factor` in each direction.
pub fn upscale_labels(labels: &SeamLabels, factor: usize) -> SeamLabels {
    let factor = factor.max(1);
    let mut boundary = Vec::with_capacity(labels.height * factor);
    for &b in &labels.boundary {
        let full = (b + 1) * factor - 1;
        boundary.extend(std::iter::repeat(full).take(factor));
    }
    SeamLabels {
        width: labels.width * factor,
        height: labels.height * factor,
        boundary,
        layout: labels.layout,
        cost: labels.cost,
    }
}

/// Seam search on the overlap's bounding box reduced by `factor`, with the
/// result expanded back to the full raster. Rows outside the box reuse the
/// nearest box row.
pub fn find_seam_scaled(
    a: &ImageGrid,
    b: &ImageGrid,
    factor: usize,
    layout: SeamLayout,
) -> Result<SeamLabels, CompositorError> {
    if a.dims() != b.dims() {
        return Err(CompositorError::RasterMismatch(a.dims(), b.dims()));
    }
    let (w, h) = a.dims();
    let overlap = overlap_mask(a, b);
    let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
    for (i, _) in overlap.iter().enumerate().filter(|(_, o)| **o) {
        let (c, r) = (i % w, i / w);
        c0 = c0.min(c);
        c1 = c1.max(c);
        r0 = r0.min(r);
        r1 = r1.max(r);
    }
    if c0 == usize::MAX {
        return Err(CompositorError::NoOverlap);
    }
    let (bw, bh) = (c1 - c0 + 1, r1 - r0 + 1);
    let small_a = downscale(&a.crop(c0, r0, bw, bh), factor);
    let small_b = downscale(&b.crop(c0, r0, bw, bh), factor);
    let small_overlap = overlap_mask(&small_a, &small_b);
    let small = find_seam(&small_a, &small_b, &small_overlap, layout)?;
    let up = upscale_labels(&small, factor);
    let boundary = (0..h)
        .map(|row| {
            let r = row.clamp(r0, r1) - r0;
            c0 + up.boundary[r.min(up.height - 1)].min(bw - 1)
        })
        .collect();
    Ok(SeamLabels {
        width: w,
        height: h,
        boundary,
        layout,
        cost: up.cost,
    })
}

/// Composites the two renders: labeled source inside the overlap, whichever
/// input is valid elsewhere. With `feather`, overlap pixels within
/// [`FEATHER_WIDTH`] of the seam are mixed linearly.
pub fn blend(
    reference: &ImageGrid,
    target: &ImageGrid,
    labels: &SeamLabels,
    feather: bool,
) -> Result<ImageGrid, CompositorError> {
    if reference.dims() != target.dims() {
        return Err(CompositorError::RasterMismatch(reference.dims(), target.dims()));
    }
    let (w, h) = reference.dims();
    let ch = reference.channels().max(target.channels());
    let mut out = ImageGrid::new(w, h, ch).map_err(|_| CompositorError::EmptyCanvas)?;
    let mut px = [0.0f32; 4];
    for row in 0..h {
        for col in 0..w {
            let (rv, tv) = (reference.is_valid(col, row), target.is_valid(col, row));
            match (rv, tv) {
                (false, false) => {}
                (true, false) => out.set_pixel(col, row, &widen(reference.pixel(col, row), ch, &mut px)),
                (false, true) => out.set_pixel(col, row, &widen(target.pixel(col, row), ch, &mut px)),
                (true, true) => {
                    if feather {
                        let b = labels.boundary[row.min(labels.height - 1)] as f64 + 0.5;
                        let t = ((col as f64 - b) / (2.0 * FEATHER_WIDTH) + 0.5).clamp(0.0, 1.0);
                        let right = match labels.layout {
                            SeamLayout::TargetRight => t,
                            SeamLayout::TargetLeft => 1.0 - t,
                        } as f32;
                        let (pr, pt) = (reference.pixel(col, row), target.pixel(col, row));
                        let mut mixed = [0.0f32; 4];
                        for c in 0..ch {
                            let (a, b) = (pr[c.min(pr.len() - 1)], pt[c.min(pt.len() - 1)]);
                            mixed[c] = a + (b - a) * right;
                        }
                        out.set_pixel(col, row, &mixed);
                    } else {
                        let src = match labels.label(col, row) {
                            Label::FromReference => reference.pixel(col, row),
                            Label::FromTarget => target.pixel(col, row),
                        };
                        out.set_pixel(col, row, &widen(src, ch, &mut px));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gray pixels are replicated across channels when the other input is color.
fn widen(src: &[f32], ch: usize, buf: &mut [f32; 4]) -> [f32; 4] {
    for c in 0..ch {
        buf[c] = src[c.min(src.len() - 1)];
    }
    *buf
}
