//! Scalar Kalman filter per depth pixel.
//!
//! Every pixel carries an independent static-state filter; a frame update
//! runs them in parallel. The measurement variance defaults to that of the
//! uniform quantization noise, `gap(z)^2 / 12`, with an optional process
//! floor of the same form to keep pixels responsive when scene content
//! moves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{depth_is_valid, DepthFrame, INVALID_DEPTH};
use crate::sim::DisparityModel;

#[derive(Debug, Error, PartialEq)]
pub enum PixelKalmanError {
    #[error("grid is {grid_w}x{grid_h} but frame is {frame_w}x{frame_h}")]
    SizeMismatch {
        grid_w: usize,
        grid_h: usize,
        frame_w: usize,
        frame_h: usize,
    },
}

/// Depth-dependent variance model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DepthNoiseModel {
    /// Variance of uniform noise one quantization level wide: `gap(z)^2/12`.
    QuantizationUniform { disparity: DisparityModel },
    Constant { variance: f64 },
    Zero,
}

impl DepthNoiseModel {
    #[inline]
    pub fn variance_at(&self, z: f64) -> f64 {
        match self {
            DepthNoiseModel::QuantizationUniform { disparity } => {
                let gap = disparity.level_gap_at(z);
                gap * gap / 12.0
            }
            DepthNoiseModel::Constant { variance } => *variance,
            DepthNoiseModel::Zero => 0.0,
        }
    }
}

/// Filter configuration shared by all pixels of a grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PixelFilterConfig {
    pub measurement: DepthNoiseModel,
    /// Process-noise floor added at prediction; `Zero` reproduces the pure
    /// static model, which freezes once converged.
    pub process: DepthNoiseModel,
    /// Variance assigned when a pixel (re)initializes, m^2.
    pub initial_variance: f64,
    /// Consecutive invalid frames after which a pixel resets.
    pub reset_horizon: u32,
}

impl PixelFilterConfig {
    /// Quantization-matched measurement and process noise for a sensor.
    pub fn for_disparity(disparity: DisparityModel) -> Self {
        Self {
            measurement: DepthNoiseModel::QuantizationUniform { disparity },
            process: DepthNoiseModel::QuantizationUniform { disparity },
            initial_variance: 1.0,
            reset_horizon: 5,
        }
    }
}

/// One scalar prediction/correction step.
///
/// Prediction keeps the previous estimate and inflates the variance by the
/// process floor; correction blends the measurement in with gain
/// `K = P/(P + R)`.
#[inline]
pub fn pk_update(estimate: f64, variance: f64, z: f64, r: f64, q: f64) -> (f64, f64) {
    let predicted = estimate;
    let p_prior = variance + q;
    let k = p_prior / (p_prior + r);
    let updated = predicted + k * (z - predicted);
    (updated, (1.0 - k) * p_prior)
}

#[derive(Clone, Copy, Debug)]
struct PixelState {
    estimate: f64,
    variance: f64,
    invalid_streak: u32,
    initialized: bool,
}

impl PixelState {
    const FRESH: PixelState = PixelState {
        estimate: 0.0,
        variance: 0.0,
        invalid_streak: 0,
        initialized: false,
    };
}

/// Per-pixel filter states for one camera.
#[derive(Clone, Debug)]
pub struct PixelKalmanGrid {
    width: usize,
    height: usize,
    pixels: Vec<PixelState>,
}

impl PixelKalmanGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![PixelState::FRESH; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// (estimate, variance) of an initialized pixel.
    pub fn state_at(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let s = &self.pixels[y * self.width + x];
        s.initialized.then_some((s.estimate, s.variance))
    }
}

fn step_pixel(state: &mut PixelState, z: f64, config: &PixelFilterConfig) -> f64 {
    if depth_is_valid(z) {
        state.invalid_streak = 0;
        if state.initialized {
            let (e, p) = pk_update(
                state.estimate,
                state.variance,
                z,
                config.measurement.variance_at(z),
                config.process.variance_at(state.estimate),
            );
            state.estimate = e;
            state.variance = p;
        } else {
            state.initialized = true;
            state.estimate = z;
            state.variance = config.initial_variance;
        }
        state.estimate
    } else {
        if !state.initialized {
            return INVALID_DEPTH;
        }
        state.invalid_streak += 1;
        if state.invalid_streak > config.reset_horizon {
            *state = PixelState::FRESH;
            return INVALID_DEPTH;
        }
        // prediction only: variance still inflates by the process floor
        state.variance += config.process.variance_at(state.estimate);
        state.estimate
    }
}

/// Update the whole grid from one frame and emit the filtered depth map.
///
/// Pixels are independent, so the row-parallel pass is bit-identical to a
/// sequential sweep.
pub fn filter_frame(
    grid: &mut PixelKalmanGrid,
    frame: &DepthFrame,
    config: &PixelFilterConfig,
) -> Result<DepthFrame, PixelKalmanError> {
    if grid.width != frame.width() || grid.height != frame.height() {
        return Err(PixelKalmanError::SizeMismatch {
            grid_w: grid.width,
            grid_h: grid.height,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    let width = grid.width;
    let mut out = DepthFrame::new_invalid(width, grid.height, frame.timestamp);
    out.as_mut_slice()
        .par_chunks_mut(width)
        .zip(grid.pixels.par_chunks_mut(width))
        .zip(frame.as_slice().par_chunks(width))
        .for_each(|((out_row, state_row), in_row)| {
            for ((o, s), &z) in out_row.iter_mut().zip(state_row).zip(in_row) {
                *o = step_pixel(s, z, config);
            }
        });
    Ok(out)
}
