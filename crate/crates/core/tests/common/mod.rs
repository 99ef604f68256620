#![allow(dead_code)]

use halfcyl::geometry::{CylindricalParams, HalfCylWarp, Homography, Point2};
use halfcyl::params::{
    choose_a0, column_heights, compute_hd, estimate_b0, estimate_focal, Dims, FocalEstimate,
    FocalSearchConfig,
};
use halfcyl::synth::{make_synthetic_pair, perspective_about, source_dims_for, textured_scene, SyntheticPair};

/// Textured pair with crops of `width × height`, the given overlap and a
/// perspective tilt about the target center.
pub fn textured_pair(width: usize, height: usize, overlap: f64, perspective: f64, seed: u64) -> SyntheticPair {
    let (ws, hs) = source_dims_for(width, height, overlap);
    let src = textured_scene(ws, hs, 3, seed);
    let center = Point2::new((1.0 + width as f64) / 2.0, (1.0 + height as f64) / 2.0);
    make_synthetic_pair(&src, &perspective_about(perspective, center), overlap).unwrap()
}

/// Half-cylindrical warp built from a known homography with the same
/// parameter chain the pipeline uses.
pub fn warp_for(h: &Homography, reference: Dims, target: Dims) -> (HalfCylWarp, FocalEstimate, f64) {
    let (a0, side) = choose_a0(h, reference, target).unwrap();
    let b0 = estimate_b0(h, target).unwrap();
    let ch = column_heights(h, target, a0, side).unwrap();
    let hd = compute_hd(target.height, ch.first().unwrap().1, ch.last().unwrap().1);
    let focal = estimate_focal(&ch, a0, hd, &FocalSearchConfig::for_reference_width(reference.width)).unwrap();
    let cyl = CylindricalParams::new(focal.f, a0, b0).unwrap();
    (HalfCylWarp::new(h.clone(), cyl, side).unwrap(), focal, hd)
}
