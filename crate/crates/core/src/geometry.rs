//! Planar warps used by the stitcher: homographies, similarities, the
//! cylindrical warp about an arbitrary center, and the half-cylindrical
//! composite that switches between them across a vertical partition line.
//!
//! Coordinates follow the image convention: origin at the upper-left, `x`
//! to the right, `y` down, pixel centers at integer positions starting at 1.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest homogeneous depth accepted by [`Homography::apply`].
pub const MIN_DEPTH: f64 = 1e-12;

/// Relative determinant below which a matrix is treated as singular.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("homogeneous depth {0:e} is at or beyond the horizon line")]
    DegenerateDepth(f64),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("abscissa offset {offset} is outside the cylindrical range (-{limit}, {limit})")]
    OutOfRange { offset: f64, limit: f64 },
    #[error("invalid cylinder: focal length {f}, center ({a0}, {b0})")]
    InvalidCylinder { f: f64, a0: f64, b0: f64 },
    #[error("similarity has zero scale")]
    ZeroScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A 3×3 projective map, stored with its largest-magnitude entry equal to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    /// Canonicalizes `m` and rejects singular matrices.
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::SingularMatrix);
        }
        let m = canonicalize(&m).ok_or(GeometryError::SingularMatrix)?;
        if relative_determinant(&m) < SINGULAR_TOL {
            return Err(GeometryError::SingularMatrix);
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
            .expect("translations are invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = self.m[(r, c)];
            }
        }
        out
    }

    /// Maps `p` through the homography, dividing by the homogeneous depth.
    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= MIN_DEPTH || !w.is_finite() {
            return Err(GeometryError::DegenerateDepth(w));
        }
        let x = m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)];
        let y = m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)];
        Ok(Point2::new(x / w, y / w))
    }

    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(GeometryError::SingularMatrix)?;
        Homography::new(inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography, GeometryError> {
        Homography::new(self.m * other.m)
    }

    /// Frobenius distance between canonical forms, relative to the norm of
    /// `self`. Insensitive to the overall sign of either matrix.
    pub fn relative_distance(&self, other: &Homography) -> f64 {
        let d = (self.m - other.m).norm().min((self.m + other.m).norm());
        d / self.m.norm()
    }
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonicalize(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    // First entry in row-major order wins ties, so the choice is stable.
    let mut pivot = 0.0_f64;
    for r in 0..3 {
        for c in 0..3 {
            let v = m[(r, c)];
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
    }
    (pivot != 0.0).then(|| m / pivot)
}

/// |det| divided by the product of row norms (Hadamard's bound), in [0, 1].
fn relative_determinant(m: &Matrix3<f64>) -> f64 {
    let bound: f64 = (0..3).map(|r| m.row(r).norm()).product();
    if bound == 0.0 {
        0.0
    } else {
        m.determinant().abs() / bound
    }
}

/// `x' = a·x − b·y + tx`, `y' = b·x + a·y + ty`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// Rotation by `angle` radians with uniform `scale`, then translation.
    pub fn from_scale_rotation(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        Self {
            a: scale * angle.cos(),
            b: scale * angle.sin(),
            tx,
            ty,
        }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.a * p.x - self.b * p.y + self.tx,
            self.b * p.x + self.a * p.y + self.ty,
        )
    }

    /// `√(a² + b²)`.
    pub fn scale(&self) -> Result<f64, GeometryError> {
        let s = self.a.hypot(self.b);
        if s > 0.0 && s.is_finite() {
            Ok(s)
        } else {
            Err(GeometryError::ZeroScale)
        }
    }
}

/// Cylinder of radius `f` whose axis is the vertical line through `(a0, b0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylindricalParams {
    f: f64,
    a0: f64,
    b0: f64,
}

impl CylindricalParams {
    pub fn new(f: f64, a0: f64, b0: f64) -> Result<Self, GeometryError> {
        if !(f > 0.0 && f.is_finite() && a0.is_finite() && b0.is_finite()) {
            return Err(GeometryError::InvalidCylinder { f, a0, b0 });
        }
        Ok(Self { f, a0, b0 })
    }

    pub fn focal(&self) -> f64 {
        self.f
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Half-width of the forward image in `x`: `f·π/2`.
    pub fn x_limit(&self) -> f64 {
        self.f * FRAC_PI_2
    }

    /// `x'' = f·atan((x−a0)/f) + a0`, `y'' = f·(y−b0)/√((x−a0)²+f²) + b0`.
    ///
    /// Points on the line `x = a0` are returned bit-for-bit unchanged.
    pub fn forward(&self, p: Point2) -> Point2 {
        let dx = p.x - self.a0;
        let ratio = self.f / self.f.hypot(dx);
        Point2::new(
            self.a0 + self.f * (dx / self.f).atan(),
            p.y - (p.y - self.b0) * (1.0 - ratio),
        )
    }

    pub fn inverse(&self, q: Point2) -> Result<Point2, GeometryError> {
        let u = q.x - self.a0;
        let limit = self.x_limit();
        if !(u.abs() < limit) {
            return Err(GeometryError::OutOfRange { offset: u, limit });
        }
        let dx = self.f * (u / self.f).tan();
        let stretch = self.f.hypot(dx) / self.f;
        Ok(Point2::new(
            self.a0 + dx,
            q.y + (q.y - self.b0) * (stretch - 1.0),
        ))
    }
}

/// Which side of the partition line receives the cylindrical branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    CylLeftOfLine,
    CylRightOfLine,
}

impl Side {
    /// `+1` when the cylindrical region lies to the right, `-1` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Side::CylLeftOfLine => -1.0,
            Side::CylRightOfLine => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Homography,
    Cylindrical,
}

/// Homography on one side of `x = a0`, cylinder-after-homography on the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCylWarp {
    h: Homography,
    h_inv: Homography,
    cyl: CylindricalParams,
    side: Side,
}

impl HalfCylWarp {
    pub fn new(h: Homography, cyl: CylindricalParams, side: Side) -> Result<Self, GeometryError> {
        Ok(Self {
            h_inv: h.inverse()?,
            h,
            cyl,
            side,
        })
    }

    pub fn homography(&self) -> &Homography {
        &self.h
    }

    pub fn homography_inverse(&self) -> &Homography {
        &self.h_inv
    }

    pub fn cylinder(&self) -> &CylindricalParams {
        &self.cyl
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn a0(&self) -> f64 {
        self.cyl.a0
    }

    /// Region of a post-homography abscissa. The line itself belongs to the
    /// homography branch; both branches agree there.
    pub fn region(&self, x: f64) -> Region {
        let beyond = match self.side {
            Side::CylRightOfLine => x > self.cyl.a0,
            Side::CylLeftOfLine => x < self.cyl.a0,
        };
        if beyond {
            Region::Cylindrical
        } else {
            Region::Homography
        }
    }

    pub fn forward(&self, p: Point2) -> Result<Point2, GeometryError> {
        let q = self.h.apply(p)?;
        Ok(match self.region(q.x) {
            Region::Homography => q,
            Region::Cylindrical => self.cyl.forward(q),
        })
    }

    /// The cylindrical forward map keeps each side of the line on that side,
    /// so `q`'s own abscissa selects the branch to undo.
    pub fn inverse(&self, q: Point2) -> Result<Point2, GeometryError> {
        let mid = match self.region(q.x) {
            Region::Homography => q,
            Region::Cylindrical => self.cyl.inverse(q)?,
        };
        self.h_inv.apply(mid)
    }
}
