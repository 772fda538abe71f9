//! Throughput benchmark of the per-pixel pipeline stages.
//!
//! Measures frames per second for correction + per-pixel Kalman +
//! registration over all simulated cameras at 640x480, across thread
//! counts. Frame synthesis happens up front and is excluded from the timed
//! region.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use rgbdtrack_core::correction::{apply_correction, filter_unreliable, fit_correction, CorrectionModel};
use rgbdtrack_core::frame::{ColorFrame, DepthFrame};
use rgbdtrack_core::geometry::{register_frame, CameraModel};
use rgbdtrack_core::pixel_kalman::{
    filter_frame, DepthNoiseModel, PixelFilterConfig, PixelKalmanGrid,
};
use rgbdtrack_core::sim::synthesize_frame;

use crate::config::ScenarioConfig;
use crate::scenario::calibration_samples;

/// Reference throughput of the original real-time system, for comparison
/// only; the benchmark does not gate on it.
pub const REFERENCE_FPS: f64 = 25.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub cameras: usize,
    pub frames_per_run: usize,
    pub runs: usize,
    pub rows: Vec<BenchRow>,
    pub reference_fps: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub fps_median: f64,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "per-pixel stages over {} cameras at 640x480, {} frames/run, median of {} runs\n",
            self.cameras, self.frames_per_run, self.runs
        );
        for row in &self.rows {
            s.push_str(&format!(
                "  threads={:<3} {:>8.2} fps\n",
                row.threads, row.fps_median
            ));
        }
        if let (Some(first), Some(last)) = (self.rows.first(), self.rows.last()) {
            if last.threads > first.threads {
                s.push_str(&format!(
                    "  speedup {}->{} threads: {:.2}x\n",
                    first.threads,
                    last.threads,
                    last.fps_median / first.fps_median
                ));
            }
        }
        s.push_str(&format!(
            "  reference: {} fps (original five-camera real-time target)\n",
            self.reference_fps
        ));
        s
    }

    pub fn fps_at(&self, threads: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.threads == threads)
            .map(|r| r.fps_median)
    }
}

struct BenchCamera {
    cam: CameraModel,
    correction: CorrectionModel,
    pixel_cfg: PixelFilterConfig,
    frames: Vec<(DepthFrame, ColorFrame)>,
}

/// Measure fps for each thread count; runs at least 5 repetitions per count
/// and reports the median.
pub fn benchmark(
    config: &ScenarioConfig,
    thread_counts: &[usize],
    frames_per_run: usize,
    runs: usize,
) -> Result<BenchReport> {
    config.validate()?;
    let runs = runs.max(5);
    let scene = config.scene();

    let cameras: Vec<BenchCamera> = config
        .cameras
        .iter()
        .enumerate()
        .map(|(i, cfg)| -> Result<BenchCamera> {
            let cam = cfg.build_model()?;
            let profile = cfg.build_profile();
            let samples = calibration_samples(&profile, config.correction.samples);
            let correction = fit_correction(&samples, &profile.disparity, config.correction.degree)
                .with_context(|| format!("camera {i} correction fit"))?;
            let frames = (0..frames_per_run as u64)
                .map(|k| {
                    let (d, c, _) = synthesize_frame(&scene, &cam, &profile, k);
                    (d, c)
                })
                .collect();
            Ok(BenchCamera {
                pixel_cfg: PixelFilterConfig {
                    measurement: DepthNoiseModel::QuantizationUniform {
                        disparity: profile.disparity,
                    },
                    process: DepthNoiseModel::QuantizationUniform {
                        disparity: profile.disparity,
                    },
                    initial_variance: config.pixel_filter.initial_variance,
                    reset_horizon: config.pixel_filter.reset_horizon,
                },
                cam,
                correction,
                frames,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &threads in thread_counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .context("building benchmark thread pool")?;
        let mut samples: Vec<f64> = Vec::with_capacity(runs);
        for _ in 0..runs {
            let mut grids: Vec<PixelKalmanGrid> = cameras
                .iter()
                .map(|c| PixelKalmanGrid::new(c.cam.width, c.cam.height))
                .collect();
            let start = Instant::now();
            pool.install(|| -> Result<()> {
                for k in 0..frames_per_run {
                    for (c, grid) in cameras.iter().zip(grids.iter_mut()) {
                        let (depth, color) = &c.frames[k];
                        let d = filter_unreliable(depth);
                        let d = apply_correction(&d, &c.correction);
                        let d = filter_frame(grid, &d, &c.pixel_cfg)?;
                        let cloud = register_frame(&d, color, &c.cam)?;
                        std::hint::black_box(&cloud);
                    }
                }
                Ok(())
            })?;
            samples.push(frames_per_run as f64 / start.elapsed().as_secs_f64());
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BenchRow {
            threads,
            fps_median: samples[samples.len() / 2],
        });
    }

    Ok(BenchReport {
        cameras: cameras.len(),
        frames_per_run,
        runs,
        rows,
        reference_fps: REFERENCE_FPS,
    })
}
