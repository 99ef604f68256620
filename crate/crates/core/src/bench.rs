//! Processing-time comparison between seam search at full resolution and
//! at a reduced scale.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{Homography, Point2};
use crate::pipeline::{stitch_images, StitchConfig, StitchError};
use crate::synth::{make_synthetic_pair, perspective_about, source_dims_for, textured_scene, SynthError, SyntheticPair};

/// Image size written `HEIGHTxWIDTH`, e.g. `1500x2000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, w) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected HEIGHTxWIDTH, got {s:?}"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n >= 64)
                .ok_or_else(|| format!("bad dimension {v:?} in {s:?} (minimum 64)"))
        };
        Ok(Self {
            height: parse(h)?,
            width: parse(w)?,
        })
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Runs averaged per configuration; at least 3.
    pub runs: usize,
    pub overlap: f64,
    /// Perspective coefficient of the synthetic distortion, per pixel.
    pub perspective: f64,
    pub scene_seed: u64,
    /// Pipeline settings; `seam_scale` is the reduced scale compared
    /// against 1.
    pub stitch: StitchConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 3,
            overlap: 0.3,
            perspective: 2e-5,
            scene_seed: 7,
            stitch: StitchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub resolution: String,
    pub runs: usize,
    pub seam_scale: usize,
    pub warp_time_s: f64,
    pub seam_time_full_s: f64,
    pub total_time_full_s: f64,
    pub seam_time_scaled_s: f64,
    pub total_time_scaled_s: f64,
}

impl TimingRow {
    pub fn total_ratio(&self) -> f64 {
        self.total_time_scaled_s / self.total_time_full_s
    }

    pub fn seam_ratio(&self) -> f64 {
        self.seam_time_scaled_s / self.seam_time_full_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error("at least 3 runs are required, got {0}")]
    TooFewRuns(usize),
}

/// A textured synthetic pair whose crops are exactly `res`, with a mild
/// perspective tilt about the target center.
pub fn bench_pair(res: Resolution, cfg: &BenchConfig) -> Result<SyntheticPair, BenchError> {
    let (ws, hs) = source_dims_for(res.width, res.height, cfg.overlap);
    let src = textured_scene(ws, hs, 3, cfg.scene_seed);
    let center = Point2::new((1.0 + res.width as f64) / 2.0, (1.0 + res.height as f64) / 2.0);
    let distortion: Homography = perspective_about(cfg.perspective, center);
    Ok(make_synthetic_pair(&src, &distortion, cfg.overlap)?)
}

/// Average warp, seam and total times per resolution, with the seam found
/// at full resolution and at `cfg.stitch.seam_scale`.
pub fn timing_report(resolutions: &[Resolution], cfg: &BenchConfig) -> Result<TimingTable, BenchError> {
    if cfg.runs < 3 {
        return Err(BenchError::TooFewRuns(cfg.runs));
    }
    let mut rows = Vec::with_capacity(resolutions.len());
    for &res in resolutions {
        let pair = bench_pair(res, cfg)?;
        let run = |seam_scale: usize| -> Result<(f64, f64, f64), BenchError> {
            let stitch = StitchConfig {
                seam_scale,
                record_timings: true,
                save_intermediate: None,
                ..cfg.stitch.clone()
            };
            let (mut warp, mut seam, mut total) = (0.0, 0.0, 0.0);
            for _ in 0..cfg.runs {
                let r = stitch_images(&pair.reference, &pair.target, &stitch)?.report;
                warp += r.warp_time_s;
                seam += r.seam_time_s;
                total += r.total_time_s;
            }
            let n = cfg.runs as f64;
            Ok((warp / n, seam / n, total / n))
        };
        let (warp_full, seam_full, total_full) = run(1)?;
        let (warp_scaled, seam_scaled, total_scaled) = run(cfg.stitch.seam_scale)?;
        rows.push(TimingRow {
            resolution: res.to_string(),
            runs: cfg.runs,
            seam_scale: cfg.stitch.seam_scale,
            warp_time_s: (warp_full + warp_scaled) / 2.0,
            seam_time_full_s: seam_full,
            total_time_full_s: total_full,
            seam_time_scaled_s: seam_scaled,
            total_time_scaled_s: total_scaled,
        });
    }
    Ok(TimingTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parsing() {
        let r: Resolution = "1500x2000".parse().unwrap();
        assert_eq!((r.height, r.width), (1500, 2000));
        assert_eq!(r.to_string(), "1500x2000");
        assert!("1500".parse::<Resolution>().is_err());
        assert!("10x2000".parse::<Resolution>().is_err());
        assert!("ax2000".parse::<Resolution>().is_err());
    }

    #[test]
    fn needs_three_runs() {
        let cfg = BenchConfig {
            runs: 2,
            ..BenchConfig::default()
        };
        assert!(matches!(timing_report(&[], &cfg), Err(BenchError::TooFewRuns(2))));
    }
}
