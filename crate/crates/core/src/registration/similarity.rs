use super::{Correspondence, RegistrationError};
use crate::geometry::Similarity;

/// Closed-form least-squares similarity mapping targets onto references.
///
/// With centered coordinates the normal equations decouple:
/// `a = Σ(x·x' + y·y') / Σ(x² + y²)` and `b = Σ(x·y' − y·x') / Σ(x² + y²)`.
pub fn fit_similarity(pairs: &[Correspondence]) -> Result<Similarity, RegistrationError> {
    if pairs.len() < 2 {
        return Err(RegistrationError::DegenerateConfiguration(
            "similarity needs at least two correspondences",
        ));
    }
    let n = pairs.len() as f64;
    let (mut mx, mut my, mut mu, mut mv) = (0.0, 0.0, 0.0, 0.0);
    for c in pairs {
        mx += c.target.x;
        my += c.target.y;
        mu += c.reference.x;
        mv += c.reference.y;
    }
    mx /= n;
    my /= n;
    mu /= n;
    mv /= n;

    let (mut norm, mut dot, mut cross) = (0.0, 0.0, 0.0);
    for c in pairs {
        let (x, y) = (c.target.x - mx, c.target.y - my);
        let (u, v) = (c.reference.x - mu, c.reference.y - mv);
        norm += x * x + y * y;
        dot += x * u + y * v;
        cross += x * v - y * u;
    }
    let spread = mx.abs().max(my.abs()).max(1.0);
    if !(norm > 1e-24 * spread * spread * n) {
        return Err(RegistrationError::DegenerateConfiguration(
            "all target points coincide",
        ));
    }
    let a = dot / norm;
    let b = cross / norm;
    Ok(Similarity {
        a,
        b,
        tx: mu - a * mx + b * my,
        ty: mv - b * mx - a * my,
    })
}

/// Pixel-selection scale `√(a² + b²)`.
pub fn selection_scale(s: &Similarity) -> Result<f64, RegistrationError> {
    s.scale()
        .map_err(|_| RegistrationError::DegenerateConfiguration("similarity has zero scale"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn grid() -> Vec<Point2> {
        (0..5)
            .flat_map(|i| (0..4).map(move |j| Point2::new(13.0 * i as f64 + 2.0, 9.0 * j as f64 - 4.0)))
            .collect()
    }

    #[test]
    fn translation() {
        let pairs: Vec<_> = grid()
            .into_iter()
            .map(|p| Correspondence::new(p, Point2::new(p.x + 5.0, p.y - 3.0)))
            .collect();
        let s = fit_similarity(&pairs).unwrap();
        assert!((s.a - 1.0).abs() < 1e-12 && s.b.abs() < 1e-12);
        assert!((s.tx - 5.0).abs() < 1e-12 && (s.ty + 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_with_scale() {
        // (x, y) -> (-2y, 2x): a = 0, b = 2.
        let pairs: Vec<_> = grid()
            .into_iter()
            .map(|p| Correspondence::new(p, Point2::new(-2.0 * p.y, 2.0 * p.x)))
            .collect();
        let s = fit_similarity(&pairs).unwrap();
        assert!(s.a.abs() < 1e-9 && (s.b - 2.0).abs() < 1e-9);
        assert!(s.tx.abs() < 1e-9 && s.ty.abs() < 1e-9);
        assert!((selection_scale(&s).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_sources() {
        let p = Point2::new(3.0, 4.0);
        let pairs = vec![
            Correspondence::new(p, Point2::new(0.0, 0.0)),
            Correspondence::new(p, Point2::new(5.0, 1.0)),
        ];
        assert!(matches!(
            fit_similarity(&pairs),
            Err(RegistrationError::DegenerateConfiguration(_))
        ));
        assert!(fit_similarity(&pairs[..1]).is_err());
    }

    #[test]
    fn scale_examples() {
        let s = |a, b| Similarity { a, b, tx: 0.0, ty: 0.0 };
        assert_eq!(selection_scale(&s(1.0, 0.0)).unwrap(), 1.0);
        assert_eq!(selection_scale(&s(0.0, 2.0)).unwrap(), 2.0);
        assert!((selection_scale(&s(0.6, 0.8)).unwrap() - 1.0).abs() < 1e-15);
        assert!(selection_scale(&s(0.0, 0.0)).is_err());
    }
}
