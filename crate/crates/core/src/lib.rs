//! Multi-camera RGBD tracking toolkit.
//!
//! The crate is organised around the stages of a per-camera pipeline plus a
//! central fusion step:
//!
//! - [`geometry`]: pinhole projection, rigid transforms, depth-to-color
//!   registration.
//! - [`sim`]: synthetic RGBD sensor with disparity quantization, per-sensor
//!   range drift, temporal noise and dropout, plus ground truth.
//! - [`correction`]: per-sensor polynomial depth correction fitted from
//!   (measured, reference) pairs, applied per depth level.
//! - [`pixel_kalman`]: scalar Kalman filter run independently on every depth
//!   pixel.
//! - [`markers`]: HSV segmentation of three colored markers, image moments,
//!   and rigid-body pose from the marker triangle.
//! - [`tracker`]: per-marker state estimation — classical Kalman baseline and
//!   the robust Kalman/H∞ recursion with feasibility checks.
//! - [`fusion`]: covariance intersection across cameras with fast and
//!   adaptive weighting.

pub mod correction;
pub mod frame;
pub mod fusion;
pub mod geometry;
pub mod markers;
pub mod pixel_kalman;
pub mod sim;
pub mod tracker;
