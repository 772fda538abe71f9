//! Covariance intersection across cameras.
//!
//! Per-camera estimates are transformed to the world frame and fused with
//! the information-weighted intersection rule, which stays conservative
//! under unknown cross-correlation. Weights come either from the fast
//! trace-of-information rule or from an adaptive quality sum that also folds
//! in the residual sensor accuracy and the camera-to-target distance.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CameraModel;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("no estimates to fuse")]
    Empty,
    #[error("estimate covariance of camera {0} is singular")]
    SingularCovariance(usize),
    #[error("weighted information sum is singular")]
    SingularInformation,
}

/// One camera's world-frame estimate of a target position for one frame.
#[derive(Clone, Debug)]
pub struct SensorEstimate {
    pub camera: usize,
    pub position: Vector3<f64>,
    /// Estimate covariance from the per-camera tracker.
    pub p: Matrix3<f64>,
    /// Residual sensor accuracy after depth correction.
    pub k_sensor: Matrix3<f64>,
    /// Camera-to-target distance, meters.
    pub z_dist: f64,
    pub prediction_only: bool,
}

/// Fused position with its conservative covariance and the weights used.
#[derive(Clone, Debug)]
pub struct FusedEstimate {
    pub position: Vector3<f64>,
    pub p: Matrix3<f64>,
    /// Per-camera weights in input order.
    pub weights: Vec<f64>,
}

/// Weighting rule for the intersection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    /// Unweighted information sum; optimistic under correlation.
    Naive,
    /// Fast rule: weight by trace of the information matrix.
    Fast,
    /// Adaptive quality sum over estimate covariance and sensor residual.
    AdaptivePk,
    /// Adaptive quality sum that also penalizes camera distance.
    AdaptivePkz,
}

/// Tuning of the adaptive distance term.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FusionParams {
    /// Scale of the squared-distance term in the quality sum, 1/m^2 units
    /// folded in so the term is commensurate with the covariance traces.
    pub kappa: f64,
    /// Add the distance in meters directly to the quality sum instead of
    /// the squared form.
    pub raw_distance_term: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            raw_distance_term: false,
        }
    }
}

fn quality_sum(e: &SensorEstimate, mode: CiMode, params: &FusionParams) -> f64 {
    let base = e.p.trace()
        + match mode {
            CiMode::AdaptivePkz | CiMode::AdaptivePk => e.k_sensor.trace(),
            _ => 0.0,
        };
    match mode {
        CiMode::AdaptivePkz => {
            base + if params.raw_distance_term {
                e.z_dist
            } else {
                params.kappa * e.z_dist * e.z_dist
            }
        }
        _ => base,
    }
}

/// Fusion weights for a set of estimates.
///
/// Every mode returns weights that sum to one (the naive mode is handled in
/// [`ci_fuse`] directly and gets uniform weights here). Lower quality sums
/// and higher information traces always map to weights at least as large.
pub fn ci_weights(
    estimates: &[SensorEstimate],
    mode: CiMode,
    params: &FusionParams,
) -> Result<Vec<f64>, FusionError> {
    let n = estimates.len();
    if n == 0 {
        return Err(FusionError::Empty);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    match mode {
        CiMode::Naive => Ok(vec![1.0 / n as f64; n]),
        CiMode::Fast => {
            let traces: Vec<f64> = estimates
                .iter()
                .map(|e| {
                    e.p.try_inverse()
                        .map(|inv| inv.trace())
                        .ok_or(FusionError::SingularCovariance(e.camera))
                })
                .collect::<Result<_, _>>()?;
            let total: f64 = traces.iter().sum();
            Ok(traces.into_iter().map(|t| t / total).collect())
        }
        CiMode::AdaptivePk | CiMode::AdaptivePkz => {
            let sums: Vec<f64> = estimates
                .iter()
                .map(|e| quality_sum(e, mode, params))
                .collect();
            let total: f64 = sums.iter().sum();
            // subtractive rule normalized by (N-1) so the weights sum to one
            Ok(sums
                .into_iter()
                .map(|s| (total - s) / ((n - 1) as f64 * total))
                .collect())
        }
    }
}

/// Information-weighted intersection: `P^{-1} = Σ ω_n P_n^{-1}` and
/// `x = P Σ ω_n P_n^{-1} x_n`. With unit weights this is the naive fusion of
/// uncorrelated estimates.
pub fn ci_fuse(
    estimates: &[SensorEstimate],
    weights: &[f64],
) -> Result<FusedEstimate, FusionError> {
    if estimates.is_empty() {
        return Err(FusionError::Empty);
    }
    assert_eq!(estimates.len(), weights.len());
    let mut info = Matrix3::zeros();
    let mut vec = Vector3::zeros();
    for (e, &w) in estimates.iter().zip(weights) {
        let inv = e
            .p
            .try_inverse()
            .ok_or(FusionError::SingularCovariance(e.camera))?;
        info += inv * w;
        vec += inv * e.position * w;
    }
    let p = info.try_inverse().ok_or(FusionError::SingularInformation)?;
    Ok(FusedEstimate {
        position: p * vec,
        p,
        weights: weights.to_vec(),
    })
}

/// Weights then fusion in one call; naive mode uses unit weights.
pub fn fuse_with_mode(
    estimates: &[SensorEstimate],
    mode: CiMode,
    params: &FusionParams,
) -> Result<FusedEstimate, FusionError> {
    match mode {
        CiMode::Naive => ci_fuse(estimates, &vec![1.0; estimates.len()]),
        _ => {
            let w = ci_weights(estimates, mode, params)?;
            ci_fuse(estimates, &w)
        }
    }
}

/// Map a camera-frame position estimate and its covariance to the world.
pub fn to_world(
    position: &Vector3<f64>,
    covariance: &Matrix3<f64>,
    cam: &CameraModel,
) -> (Vector3<f64>, Matrix3<f64>) {
    let rot = cam.camera_to_world.rotation();
    (
        cam.camera_to_world.transform_point(position),
        rot * covariance * rot.transpose(),
    )
}

/// Weighted circular mean of angles in radians.
pub fn weighted_circular_mean(angles_weights: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &(a, w) in angles_weights {
        s += w * a.sin();
        c += w * a.cos();
    }
    s.atan2(c)
}

/// Tracker outputs of one camera for one frame, ready for fusion.
#[derive(Clone, Debug)]
pub struct CameraFrameEstimate {
    pub camera: usize,
    /// Front, left, right marker estimates; missing while uninitialized.
    pub markers: [Option<SensorEstimate>; 3],
    /// Heading computed from this camera's filtered markers.
    pub yaw: Option<f64>,
}

/// Fused robot state for one frame.
#[derive(Clone, Debug)]
pub struct FusedFrame {
    pub position: Vector3<f64>,
    pub p: Matrix3<f64>,
    pub yaw: f64,
    /// Per-camera weight actually applied, averaged over marker slots,
    /// indexed by position in the input slice.
    pub camera_weights: Vec<f64>,
}

/// Fuse all cameras' marker estimates for one frame.
///
/// Marker positions fuse per slot across cameras; the robot position is the
/// mean of the fused markers and the heading is the weighted circular mean
/// of the per-camera headings, driven by the same per-camera weights.
/// Returns `None` when no camera contributed anything.
pub fn fuse_frame(
    cameras: &[CameraFrameEstimate],
    mode: CiMode,
    params: &FusionParams,
) -> Result<Option<FusedFrame>, FusionError> {
    let mut fused_markers = Vec::new();
    let mut cam_weight_sum = vec![0.0; cameras.len()];
    let mut cam_weight_n = vec![0u32; cameras.len()];

    for slot in 0..3 {
        let mut ests = Vec::new();
        let mut owners = Vec::new();
        for (ci, cam) in cameras.iter().enumerate() {
            if let Some(e) = &cam.markers[slot] {
                ests.push(e.clone());
                owners.push(ci);
            }
        }
        if ests.is_empty() {
            continue;
        }
        let weights = match mode {
            CiMode::Naive => vec![1.0; ests.len()],
            _ => ci_weights(&ests, mode, params)?,
        };
        let fused = ci_fuse(&ests, &weights)?;
        let norm: f64 = weights.iter().sum();
        for (o, w) in owners.iter().zip(&weights) {
            cam_weight_sum[*o] += w / norm;
            cam_weight_n[*o] += 1;
        }
        fused_markers.push(fused);
    }

    if fused_markers.is_empty() {
        return Ok(None);
    }

    let position = fused_markers
        .iter()
        .fold(Vector3::zeros(), |acc, f| acc + f.position)
        / fused_markers.len() as f64;
    let m = fused_markers.len() as f64;
    let p = fused_markers
        .iter()
        .fold(Matrix3::zeros(), |acc, f| acc + f.p)
        / (m * m);

    let camera_weights: Vec<f64> = cam_weight_sum
        .iter()
        .zip(&cam_weight_n)
        .map(|(s, n)| if *n > 0 { s / *n as f64 } else { 0.0 })
        .collect();

    let yaw_inputs: Vec<(f64, f64)> = cameras
        .iter()
        .enumerate()
        .filter_map(|(ci, c)| c.yaw.map(|y| (y, camera_weights[ci])))
        .collect();
    let yaw = if yaw_inputs.iter().all(|(_, w)| *w == 0.0) {
        weighted_circular_mean(
            &yaw_inputs
                .iter()
                .map(|(y, _)| (*y, 1.0))
                .collect::<Vec<_>>(),
        )
    } else {
        weighted_circular_mean(&yaw_inputs)
    };

    Ok(Some(FusedFrame {
        position,
        p,
        yaw,
        camera_weights,
    }))
}
