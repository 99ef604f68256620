use nalgebra::{DMatrix, Matrix3};

use super::{Correspondence, RegistrationError};
use crate::geometry::{Homography, Point2};

/// Twice the area of the triangle, in normalized units.
const COLLINEAR_TOL: f64 = 1e-9;

/// Normalized direct linear transform: least-squares homography mapping each
/// `target` onto its `reference`, solved in Hartley-normalized coordinates.
pub fn dlt_homography(pairs: &[Correspondence]) -> Result<Homography, RegistrationError> {
    if pairs.len() < 4 {
        return Err(RegistrationError::DegenerateSample);
    }
    let src: Vec<Point2> = pairs.iter().map(|c| c.target).collect();
    let dst: Vec<Point2> = pairs.iter().map(|c| c.reference).collect();
    let (src_n, t_src) = normalize(&src)?;
    let (dst_n, t_dst) = normalize(&dst)?;
    if pairs.len() == 4 {
        if has_collinear_triple(&src_n) || has_collinear_triple(&dst_n) {
            return Err(RegistrationError::DegenerateSample);
        }
    } else if is_collinear(&src_n) || is_collinear(&dst_n) {
        return Err(RegistrationError::DegenerateSample);
    }

    // Pad to at least 9 rows so the SVD exposes the full right null space.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, q)) in src_n.iter().zip(&dst_n).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * k;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(RegistrationError::DegenerateSample)?;
    let k = svd.singular_values.imin();
    let h = v_t.row(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(RegistrationError::DegenerateSample)?;
    Homography::new(t_dst_inv * hn * t_src).map_err(|_| RegistrationError::DegenerateSample)
}

/// Centroid to the origin, mean distance √2.
fn normalize(pts: &[Point2]) -> Result<(Vec<Point2>, Matrix3<f64>), RegistrationError> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean_dist > 1e-12) || !mean_dist.is_finite() {
        return Err(RegistrationError::DegenerateSample);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts
        .iter()
        .map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    Ok((out, t))
}

fn twice_area(a: Point2, b: Point2, c: Point2) -> f64 {
    ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs()
}

fn has_collinear_triple(p: &[Point2]) -> bool {
    let n = p.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if twice_area(p[i], p[j], p[k]) < COLLINEAR_TOL {
                    return true;
                }
            }
        }
    }
    false
}

/// All points (already centered) on one line: the scatter matrix has a
/// vanishing eigenvalue.
fn is_collinear(p: &[Point2]) -> bool {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for q in p {
        sxx += q.x * q.x;
        syy += q.y * q.y;
        sxy += q.x * q.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let small = 0.5 * (tr - disc);
    let large = 0.5 * (tr + disc);
    det <= 0.0 || small <= COLLINEAR_TOL * large
}
