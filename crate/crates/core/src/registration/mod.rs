//! Correspondences between the two inputs and the global transforms fitted
//! to them: the robust homography that aligns the target onto the reference
//! and the least-squares similarity that fixes the pixel-selection scale.
//!
//! Throughout, the reference image stays fixed and every transform maps
//! target coordinates into reference coordinates.

mod dlt;
mod features;
mod ransac;
mod similarity;

use thiserror::Error;

use crate::geometry::{GeometryError, Point2};

pub use dlt::dlt_homography;
pub use features::{
    detect_and_match, detect_and_match_with, match_descriptors, Feature, FeatureDetector,
    HarrisDetector, MatchConfig,
};
pub use ransac::{estimate_homography_ransac, reprojection_rmse, RansacConfig};
pub use similarity::{fit_similarity, selection_scale};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("only {found} candidate matches survived filtering (need at least 4)")]
    TooFewMatches { found: usize },
    #[error("degenerate sample: points are coincident or collinear")]
    DegenerateSample,
    #[error("no consensus: best hypothesis has {inliers} inliers (need at least 4)")]
    NoConsensus { inliers: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A target point and the reference point it corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub target: Point2,
    pub reference: Point2,
}

impl Correspondence {
    pub const fn new(target: Point2, reference: Point2) -> Self {
        Self { target, reference }
    }
}

/// Candidate correspondences; `inliers` is filled by robust estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pairs: Vec<Correspondence>,
    pub inliers: Option<Vec<bool>>,
}

impl MatchSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self {
            pairs,
            inliers: None,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs flagged as inliers, or every pair before estimation.
    pub fn inlier_pairs(&self) -> Vec<Correspondence> {
        match &self.inliers {
            Some(mask) => self
                .pairs
                .iter()
                .zip(mask)
                .filter(|(_, keep)| **keep)
                .map(|(p, _)| *p)
                .collect(),
            None => self.pairs.clone(),
        }
    }

    pub fn inlier_count(&self) -> usize {
        self.inliers
            .as_ref()
            .map_or(0, |m| m.iter().filter(|v| **v).count())
    }
}
