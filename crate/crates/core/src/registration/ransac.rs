use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dlt_homography, Correspondence, MatchSet, RegistrationError};
use crate::geometry::Homography;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Reprojection threshold in pixels.
    pub threshold: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 3.0,
            max_iters: 2000,
            confidence: 0.995,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(RegistrationError::InvalidConfig("threshold must be positive"));
        }
        if self.max_iters == 0 {
            return Err(RegistrationError::InvalidConfig("max_iters must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(RegistrationError::InvalidConfig("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

struct Score {
    mask: Vec<bool>,
    count: usize,
    sse: f64,
}

impl Score {
    /// More inliers wins; equal counts fall back to lower mean squared error.
    fn beats(&self, other: &Score) -> bool {
        if self.count != other.count {
            return self.count > other.count;
        }
        // sse_a / n < sse_b / n with the same n.
        self.sse < other.sse
    }
}

fn score(h: &Homography, pairs: &[Correspondence], threshold: f64) -> Score {
    let t2 = threshold * threshold;
    let mut mask = Vec::with_capacity(pairs.len());
    let (mut count, mut sse) = (0, 0.0);
    for c in pairs {
        let inlier = match h.apply(c.target) {
            Ok(q) => {
                let d2 = (q.x - c.reference.x).powi(2) + (q.y - c.reference.y).powi(2);
                if d2 < t2 {
                    sse += d2;
                    true
                } else {
                    false
                }
            }
            Err(_) => false,
        };
        count += usize::from(inlier);
        mask.push(inlier);
    }
    Score { mask, count, sse }
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let good_sample = inlier_ratio.powi(4);
    if good_sample >= 1.0 {
        return 1;
    }
    if good_sample <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good_sample).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Seeded RANSAC over 4-point DLT hypotheses.
///
/// The winning hypothesis (most inliers, then lowest inlier error, then
/// earliest iteration) is refit on all of its inliers. The final inlier mask
/// is written back into `matches`.
pub fn estimate_homography_ransac(
    matches: &mut MatchSet,
    cfg: &RansacConfig,
) -> Result<(Homography, Vec<bool>), RegistrationError> {
    cfg.validate()?;
    let pairs = &matches.pairs;
    let n = pairs.len();
    if n < 4 {
        return Err(RegistrationError::NoConsensus { inliers: n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Homography, Score)> = None;
    let mut required = cfg.max_iters;
    let mut iter = 0;
    let mut sample = Vec::with_capacity(4);
    while iter < required {
        iter += 1;
        sample.clear();
        sample.extend(index::sample(&mut rng, n, 4).into_iter().map(|i| pairs[i]));
        let Ok(h) = dlt_homography(&sample) else {
            continue;
        };
        let s = score(&h, pairs, cfg.threshold);
        let improved = best.as_ref().map_or(true, |(_, b)| s.beats(b));
        if improved {
            required = required_iterations(s.count as f64 / n as f64, cfg.confidence, cfg.max_iters);
            best = Some((h, s));
        }
    }

    let (h, s) = match best {
        Some(b) if b.1.count >= 4 => b,
        Some(b) => return Err(RegistrationError::NoConsensus { inliers: b.1.count }),
        None => return Err(RegistrationError::NoConsensus { inliers: 0 }),
    };

    let inliers: Vec<Correspondence> = pairs
        .iter()
        .zip(&s.mask)
        .filter(|(_, m)| **m)
        .map(|(c, _)| *c)
        .collect();
    let (h, mask) = match dlt_homography(&inliers) {
        Ok(refit) => {
            let rs = score(&refit, pairs, cfg.threshold);
            if rs.count >= 4 {
                (refit, rs.mask)
            } else {
                (h, s.mask)
            }
        }
        Err(_) => (h, s.mask),
    };
    matches.inliers = Some(mask.clone());
    Ok((h, mask))
}

/// Root-mean-square of `‖H(target) − reference‖` over `pairs`.
pub fn reprojection_rmse(h: &Homography, pairs: &[Correspondence]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut sse = 0.0;
    for c in pairs {
        sse += match h.apply(c.target) {
            Ok(q) => q.distance(&c.reference).powi(2),
            Err(_) => f64::INFINITY,
        };
    }
    (sse / pairs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use rand::Rng;

    fn truth() -> Homography {
        Homography::from_row_major(&[1.02, 0.03, 310.0, -0.02, 0.98, 8.0, 2e-4, 1e-5, 1.0]).unwrap()
    }

    fn exact_pairs(h: &Homography, n: usize, rng: &mut ChaCha8Rng) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                let p = Point2::new(rng.gen_range(1.0..640.0), rng.gen_range(1.0..480.0));
                Correspondence::new(p, h.apply(p).unwrap())
            })
            .collect()
    }

    #[test]
    fn outlier_free_recovers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = truth();
        let mut m = MatchSet::new(exact_pairs(&h, 100, &mut rng));
        let (est, mask) = estimate_homography_ransac(&mut m, &RansacConfig::default()).unwrap();
        assert!(mask.iter().all(|v| *v));
        assert!(reprojection_rmse(&est, &m.pairs) < 1e-6);
        assert!(est.relative_distance(&h) < 1e-8);
        assert_eq!(m.inlier_count(), 100);
    }

    #[test]
    fn rejects_uniform_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = truth();
        let mut pairs = exact_pairs(&h, 70, &mut rng);
        for _ in 0..30 {
            pairs.push(Correspondence::new(
                Point2::new(rng.gen_range(1.0..640.0), rng.gen_range(1.0..480.0)),
                Point2::new(rng.gen_range(1.0..1000.0), rng.gen_range(1.0..480.0)),
            ));
        }
        let mut m = MatchSet::new(pairs);
        let cfg = RansacConfig { seed: 9, ..RansacConfig::default() };
        let (est, mask) = estimate_homography_ransac(&mut m, &cfg).unwrap();
        assert!(mask[..70].iter().all(|v| *v));
        assert!(reprojection_rmse(&est, &m.inlier_pairs()) < 0.5);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pairs = exact_pairs(&truth(), 40, &mut rng);
        for c in pairs.iter_mut().step_by(3) {
            c.reference.x += rng.gen_range(-40.0..40.0);
        }
        let cfg = RansacConfig { seed: 77, ..RansacConfig::default() };
        let mut a = MatchSet::new(pairs.clone());
        let mut b = MatchSet::new(pairs);
        let ra = estimate_homography_ransac(&mut a, &cfg).unwrap();
        let rb = estimate_homography_ransac(&mut b, &cfg).unwrap();
        assert_eq!(ra.0.to_row_major(), rb.0.to_row_major());
        assert_eq!(ra.1, rb.1);
    }

    #[test]
    fn three_matches_have_no_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = MatchSet::new(exact_pairs(&truth(), 3, &mut rng));
        assert_eq!(
            estimate_homography_ransac(&mut m, &RansacConfig::default()),
            Err(RegistrationError::NoConsensus { inliers: 3 })
        );
    }

    #[test]
    fn invalid_config() {
        let mut m = MatchSet::default();
        let cfg = RansacConfig { threshold: 0.0, ..RansacConfig::default() };
        assert!(matches!(
            estimate_homography_ransac(&mut m, &cfg),
            Err(RegistrationError::InvalidConfig(_))
        ));
    }

    #[test]
    fn adaptive_iteration_count() {
        assert_eq!(required_iterations(1.0, 0.995, 2000), 1);
        assert_eq!(required_iterations(0.0, 0.995, 2000), 2000);
        // 0.5⁴ = 1/16: ln(0.005) / ln(15/16) = 82.1…
        assert_eq!(required_iterations(0.5, 0.995, 2000), 83);
    }
}
