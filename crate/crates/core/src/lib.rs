//! Two-image stitching with a ratio-preserving half-cylindrical warp.
//!
//! The target image is registered to the reference by a homography. On the
//! overlapping side of a vertical partition line the homography is used
//! as is; on the other side a cylindrical correction bends the warped target
//! so that its height stays close to the reference, and the columns are
//! re-spaced so horizontal ratios follow the similarity scale between the
//! two images. The inputs are then composited along a seam found at reduced
//! resolution.
//!
//! Coordinates are 1-based with pixel centers on integers, origin at the
//! upper-left corner and `y` pointing down.

pub mod bench;
pub mod compositor;
pub mod geometry;
pub mod image;
pub mod io;
pub mod params;
pub mod pipeline;
pub mod registration;
pub mod resample;
pub mod synth;

pub use geometry::{CylindricalParams, GeometryError, HalfCylWarp, Homography, Point2, Side, Similarity};
pub use image::{ImageError, ImageGrid};
pub use pipeline::{run_stitch, stitch_images, StitchConfig, StitchError, StitchOutput, StitchReport};
