//! End-to-end scenario execution.
//!
//! Per frame and per camera: synthesize -> filter unreliable -> correct ->
//! per-pixel Kalman -> register -> extract markers -> track (Kalman and
//! robust lanes) -> transform to world; then one covariance-intersection
//! fusion step per weighting mode. Deterministic for a fixed config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::{Matrix3, Matrix6, Vector3};
use rayon::prelude::*;

use rgbdtrack_core::correction::{apply_correction, filter_unreliable, fit_correction, CorrectionModel};
use rgbdtrack_core::frame::{depth_is_valid, DepthFrame};
use rgbdtrack_core::fusion::{
    fuse_frame, CameraFrameEstimate, CiMode, FusedFrame, SensorEstimate,
};
use rgbdtrack_core::geometry::{backproject, register_colors, CameraModel};
use rgbdtrack_core::markers::{
    compute_pose, extract_centroids, morph_open, rear_is_left, rgb_pixel_to_hsv, BinaryMask,
    MarkerObservation, MarkerSample, Pose,
};
use rgbdtrack_core::pixel_kalman::{
    filter_frame, DepthNoiseModel, PixelFilterConfig, PixelKalmanGrid,
};
use rgbdtrack_core::sim::{CameraSimulator, DisparityModel, GroundTruthLog, SensorProfile};
use rgbdtrack_core::tracker::{
    make_motion_model, KalmanMarkerTracker, MotionModel, RobustMarkerTracker, RobustParams,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExtractionConfig, ScenarioConfig};
use crate::report::{FusedReport, PerCameraReport, RunReport};
use crate::rms::compute_rms;

/// Which per-camera estimator lane feeds the trajectory CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lane {
    Raw,
    Kalman,
    Robust,
}

/// Run-time switches carried by the CLI.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub csv_lane: Lane,
    pub csv_mode: CiMode,
    pub disable_correction: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            csv_lane: Lane::Robust,
            csv_mode: CiMode::AdaptivePkz,
            disable_correction: false,
        }
    }
}

/// Everything a run produces in memory.
pub struct ScenarioOutput {
    pub report: RunReport,
    pub trajectory_csv: String,
    pub ground_truth_csv: String,
    /// Fused positions per mode for the robust lane, by frame.
    pub fused_tracks: BTreeMap<&'static str, Vec<(u64, Vector3<f64>)>>,
    /// Per-camera robust-lane positions, by frame.
    pub camera_tracks_rf: Vec<Vec<(u64, Vector3<f64>)>>,
    /// Per-frame fused output for the selected mode and estimator lane.
    pub fused_frames: Vec<Option<FusedFrame>>,
    /// Per-frame robust-lane fusion inputs, for weighting studies and the
    /// occlusion analysis.
    pub rf_estimates: Vec<Vec<CameraFrameEstimate>>,
    /// Marker-centroid ground truth by frame.
    pub truth_centers: BTreeMap<u64, Vector3<f64>>,
}

pub const MODE_NAMES: [(&str, CiMode); 4] = [
    ("naive", CiMode::Naive),
    ("fast", CiMode::Fast),
    ("adaptive_pk", CiMode::AdaptivePk),
    ("adaptive_pkz", CiMode::AdaptivePkz),
];

struct CameraPipeline {
    index: usize,
    cam: CameraModel,
    sim: CameraSimulator,
    correction: Option<CorrectionModel>,
    k_sensor: Matrix3<f64>,
    correction_residual: f64,
    grid: PixelKalmanGrid,
    pixel_cfg: PixelFilterConfig,
    kf: [KalmanMarkerTracker; 3],
    rf: [RobustMarkerTracker; 3],
}

/// Per-camera results of one frame.
struct CameraFrameOutput {
    raw_pose: Option<Pose>,
    kf_pose: Option<Pose>,
    rf_pose: Option<Pose>,
    kf_fusion: CameraFrameEstimate,
    rf_fusion: CameraFrameEstimate,
}

/// Calibration readings for one sensor: measured depth against the reference
/// a precise external tracker would provide.
pub fn calibration_samples(profile: &SensorProfile, count: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed ^ 0xCA11_B8A7_E5EED);
    let mut samples = Vec::with_capacity(count);
    let (lo, hi) = (0.85_f64, 4.45_f64);
    let mut z = lo;
    while samples.len() < count {
        let z_true = (z + rng.random_range(-0.02..0.02)).clamp(0.81, 4.49);
        let z_meas = profile.measure_depth(z_true, &mut rng);
        if depth_is_valid(z_meas) {
            samples.push((z_meas, z_true));
        }
        z += (hi - lo) / count as f64;
        if z > hi {
            z = lo;
        }
    }
    samples
}

impl CameraPipeline {
    fn new(config: &ScenarioConfig, index: usize, disable_correction: bool) -> Result<Self> {
        let cam_cfg = &config.cameras[index];
        let cam = cam_cfg.build_model()?;
        let profile = cam_cfg.build_profile();

        let (correction, residual) = if config.correction.enabled && !disable_correction {
            let samples = calibration_samples(&profile, config.correction.samples);
            let model = fit_correction(&samples, &profile.disparity, config.correction.degree)
                .with_context(|| format!("fitting correction model for camera {index}"))?;
            let residual = model.residual_rms();
            (Some(model), residual)
        } else {
            // no correction stage: the sensor quality indicator is the raw
            // deviation of calibration readings from the reference
            let samples = calibration_samples(&profile, config.correction.samples.max(100));
            let sq: f64 = samples.iter().map(|(m, t)| (m - t) * (m - t)).sum();
            (None, (sq / samples.len() as f64).sqrt())
        };
        let k_sensor = Matrix3::from_diagonal_element(residual * residual);

        let disparity = profile.disparity;
        let pixel_cfg = PixelFilterConfig {
            measurement: DepthNoiseModel::QuantizationUniform { disparity },
            process: scaled_process(disparity, config.pixel_filter.process_scale),
            initial_variance: config.pixel_filter.initial_variance,
            reset_horizon: config.pixel_filter.reset_horizon,
        };

        let t = &config.tracking;
        let model: MotionModel = make_motion_model(config.dt, t.q_accel, t.r_pos)?;
        let mut params =
            RobustParams::with_position_uncertainty(t.theta, t.alpha, t.delta, &model, t.s1, t.s2);
        params.epsilon = t.epsilon;
        let p0 = Matrix6::from_diagonal_element(t.s1);

        Ok(Self {
            index,
            grid: PixelKalmanGrid::new(cam.width, cam.height),
            kf: std::array::from_fn(|_| KalmanMarkerTracker::new(model.clone(), p0)),
            rf: std::array::from_fn(|_| RobustMarkerTracker::new(model.clone(), params.clone())),
            sim: CameraSimulator::new(config.scene(), cam.clone(), profile),
            cam,
            correction,
            k_sensor,
            correction_residual: residual,
            pixel_cfg,
        })
    }

    fn process_frame(
        &mut self,
        extraction: &ExtractionConfig,
        frame: u64,
        occluded: bool,
    ) -> Result<CameraFrameOutput> {
        let (depth, color, _) = self.sim.synthesize(frame);
        let depth = filter_unreliable(&depth);
        let depth = match &self.correction {
            Some(model) => apply_correction(&depth, model),
            None => depth,
        };
        let depth = filter_frame(&mut self.grid, &depth, &self.pixel_cfg)?;
        let aligned = register_colors(&depth, &color, &self.cam)?;

        let obs = if occluded {
            MarkerObservation::default()
        } else {
            detect_markers(&depth, &aligned, &self.cam, extraction)
        };
        let raw_pose = compute_pose(&obs);

        let mut kf_fusion = CameraFrameEstimate {
            camera: self.index,
            markers: [None, None, None],
            yaw: None,
        };
        let mut rf_fusion = kf_fusion.clone();

        let mut kf_world: [Option<Vector3<f64>>; 3] = [None; 3];
        let mut rf_world: [Option<Vector3<f64>>; 3] = [None; 3];
        for slot in 0..3 {
            let meas = obs.by_slot(slot).map(|m| m.position_camera);
            if let Some(out) = self.kf[slot].step(meas.as_ref())? {
                let (pos_w, p_w) =
                    rgbdtrack_core::fusion::to_world(&out.position, &out.p_position, &self.cam);
                kf_world[slot] = Some(pos_w);
                kf_fusion.markers[slot] = Some(SensorEstimate {
                    camera: self.index,
                    position: pos_w,
                    p: p_w,
                    k_sensor: self.k_sensor,
                    z_dist: out.position.norm(),
                    prediction_only: out.prediction_only,
                });
            }
            if let Some(out) = self.rf[slot].step(meas.as_ref())? {
                let (pos_w, p_w) =
                    rgbdtrack_core::fusion::to_world(&out.position, &out.p_position, &self.cam);
                rf_world[slot] = Some(pos_w);
                rf_fusion.markers[slot] = Some(SensorEstimate {
                    camera: self.index,
                    position: pos_w,
                    p: p_w,
                    k_sensor: self.k_sensor,
                    z_dist: out.position.norm(),
                    prediction_only: out.prediction_only,
                });
            }
        }

        let kf_pose = pose_from_filtered(&kf_world);
        let rf_pose = pose_from_filtered(&rf_world);
        kf_fusion.yaw = kf_pose.map(|p| p.yaw);
        rf_fusion.yaw = rf_pose.map(|p| p.yaw);

        Ok(CameraFrameOutput {
            raw_pose,
            kf_pose,
            rf_pose,
            kf_fusion,
            rf_fusion,
        })
    }
}

fn scaled_process(disparity: DisparityModel, scale: f64) -> DepthNoiseModel {
    if scale == 0.0 {
        DepthNoiseModel::Zero
    } else {
        // fold the multiplier into the stereo constant: gap^2 scales with
        // 1/(8 b f)^2, so dividing b by sqrt(scale) multiplies the variance
        DepthNoiseModel::QuantizationUniform {
            disparity: DisparityModel {
                baseline: disparity.baseline / scale.sqrt(),
                ..disparity
            },
        }
    }
}

/// Pose from three filtered world-frame marker positions.
fn pose_from_filtered(markers: &[Option<Vector3<f64>>; 3]) -> Option<Pose> {
    let sample = |p: &Option<Vector3<f64>>| {
        p.map(|w| MarkerSample {
            pixel: (0.0, 0.0),
            position_camera: w,
            position_world: w,
        })
    };
    compute_pose(&MarkerObservation {
        front: sample(&markers[0]),
        left: sample(&markers[1]),
        right: sample(&markers[2]),
    })
}

/// Locate the three markers in a registered depth/color pair.
///
/// The registered colors are converted to HSV and thresholded per marker
/// color in one pass (unregistered pixels can never match), the masks are
/// opened, and the largest surviving components become candidates. A
/// marker's depth is the registered reading at its centroid pixel.
pub fn detect_markers(
    depth: &DepthFrame,
    aligned_colors: &[Option<[u8; 3]>],
    cam: &CameraModel,
    extraction: &ExtractionConfig,
) -> MarkerObservation {
    let (w, h) = (cam.width, cam.height);
    let mut front_mask = BinaryMask::new(w, h);
    let mut rear_mask = BinaryMask::new(w, h);
    let (fr, rr) = (&extraction.front_range, &extraction.rear_range);
    for (i, c) in aligned_colors.iter().enumerate() {
        let Some(rgb) = c else { continue };
        // value/saturation gate before the costlier hue computation
        let max = rgb[0].max(rgb[1]).max(rgb[2]);
        let min = rgb[0].min(rgb[1]).min(rgb[2]);
        let v = max as f32 / 255.0;
        let s = if max == 0 { 0.0 } else { (max - min) as f32 / max as f32 };
        let front_sv = v >= fr.v_lo && v <= fr.v_hi && s >= fr.s_lo && s <= fr.s_hi;
        let rear_sv = v >= rr.v_lo && v <= rr.v_hi && s >= rr.s_lo && s <= rr.s_hi;
        if !front_sv && !rear_sv {
            continue;
        }
        let hsv = rgb_pixel_to_hsv(*rgb);
        let (u, vv) = (i % w, i / w);
        if front_sv && fr.contains(hsv) {
            front_mask.set(u, vv, true);
        }
        if rear_sv && rr.contains(hsv) {
            rear_mask.set(u, vv, true);
        }
    }

    let min_area = extraction.effective_min_area();
    let find = |mask: &BinaryMask| {
        let opened = open_within_bounds(mask, extraction.kernel_radius);
        let blobs = extract_centroids(&opened, min_area);
        (opened, blobs)
    };

    let (front_mask, front_blobs) = find(&front_mask);
    let (rear_mask, rear_blobs) = find(&rear_mask);

    let to_sample = |mask: &BinaryMask, blob: &rgbdtrack_core::markers::Blob| {
        let z = centroid_depth(mask, depth, blob)?;
        let p_cam = backproject(blob.centroid.0, blob.centroid.1, z, &cam.ir).ok()?;
        Some(MarkerSample {
            pixel: blob.centroid,
            position_camera: p_cam,
            position_world: cam.camera_to_world.transform_point(&p_cam),
        })
    };

    let front = front_blobs.first().and_then(|b| to_sample(&front_mask, b));
    let rear: Vec<MarkerSample> = rear_blobs
        .iter()
        .take(2)
        .filter_map(|b| to_sample(&rear_mask, b))
        .collect();

    let mut obs = MarkerObservation {
        front,
        ..Default::default()
    };
    if let (Some(f), [a, b]) = (&obs.front, rear.as_slice()) {
        let center = (f.position_world + a.position_world + b.position_world) / 3.0;
        if rear_is_left(&f.position_world, &a.position_world, &center) {
            obs.left = Some(*a);
            obs.right = Some(*b);
        } else {
            obs.left = Some(*b);
            obs.right = Some(*a);
        }
    }
    obs
}

/// Morphological opening restricted to the bounding box of the set pixels;
/// equals the full-frame opening because everything outside is false.
fn open_within_bounds(mask: &BinaryMask, kernel_radius: usize) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut x0 = w;
    let mut x1 = 0usize;
    let mut y0 = h;
    let mut y1 = 0usize;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    let mut out = BinaryMask::new(w, h);
    if x0 > x1 {
        return out; // empty mask
    }
    let r = kernel_radius;
    let cx0 = x0.saturating_sub(r + 1);
    let cy0 = y0.saturating_sub(r + 1);
    let cx1 = (x1 + r + 1).min(w - 1);
    let cy1 = (y1 + r + 1).min(h - 1);
    let (cw, ch) = (cx1 - cx0 + 1, cy1 - cy0 + 1);
    let mut crop = BinaryMask::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            crop.set(x, y, mask.get(cx0 + x, cy0 + y));
        }
    }
    let opened = morph_open(&crop, r);
    for y in 0..ch {
        for x in 0..cw {
            if opened.get(x, y) {
                out.set(cx0 + x, cy0 + y, true);
            }
        }
    }
    out
}

/// Registered depth of a blob: the reading at its centroid pixel, falling
/// back to the median over the blob's disc when that pixel carries none.
fn centroid_depth(
    mask: &BinaryMask,
    depths: &DepthFrame,
    blob: &rgbdtrack_core::markers::Blob,
) -> Option<f64> {
    let (cx, cy) = (blob.centroid.0.round() as i64, blob.centroid.1.round() as i64);
    if cx >= 0 && cy >= 0 && (cx as usize) < mask.width() && (cy as usize) < mask.height() {
        let z = depths.get(cx as usize, cy as usize);
        if depth_is_valid(z) && mask.get(cx as usize, cy as usize) {
            return Some(z);
        }
    }
    let radius = (blob.area as f64 / std::f64::consts::PI).sqrt().ceil() as i64 + 1;
    let mut zs = Vec::new();
    for y in (cy - radius).max(0)..=(cy + radius).min(mask.height() as i64 - 1) {
        for x in (cx - radius).max(0)..=(cx + radius).min(mask.width() as i64 - 1) {
            if mask.get(x as usize, y as usize) {
                let z = depths.get(x as usize, y as usize);
                if depth_is_valid(z) {
                    zs.push(z);
                }
            }
        }
    }
    if zs.is_empty() {
        return None;
    }
    zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(zs[zs.len() / 2])
}

/// Execute a scenario and assemble the report plus CSV artifacts.
pub fn run_scenario(config: &ScenarioConfig, options: &RunOptions) -> Result<ScenarioOutput> {
    config.validate()?;
    let scene = config.scene();
    let n_cams = config.cameras.len();

    let mut pipelines: Vec<CameraPipeline> = (0..n_cams)
        .map(|i| CameraPipeline::new(config, i, options.disable_correction))
        .collect::<Result<_>>()?;

    let mut truth_log = GroundTruthLog::default();
    let mut truth_centers = BTreeMap::new();
    let mut raw_tracks: Vec<Vec<(u64, Vector3<f64>)>> = vec![Vec::new(); n_cams];
    let mut kf_tracks: Vec<Vec<(u64, Vector3<f64>)>> = vec![Vec::new(); n_cams];
    let mut rf_tracks: Vec<Vec<(u64, Vector3<f64>)>> = vec![Vec::new(); n_cams];
    let mut fused_tracks: BTreeMap<&'static str, Vec<(u64, Vector3<f64>)>> = BTreeMap::new();
    let mut fused_tracks_kf: BTreeMap<&'static str, Vec<(u64, Vector3<f64>)>> = BTreeMap::new();
    let mut fused_frames: Vec<Option<FusedFrame>> = Vec::with_capacity(config.frames as usize);
    let mut rf_estimates: Vec<Vec<CameraFrameEstimate>> = Vec::with_capacity(config.frames as usize);
    let mut trajectory_csv = String::from("frame,source,x,y,z,yaw,trace_p\n");

    let fusion_params = config.fusion.params();
    let started = Instant::now();

    for frame in 0..config.frames {
        let truth = scene.truth_at(frame);
        truth_log.push(truth);
        let center = (truth.markers[0] + truth.markers[1] + truth.markers[2]) / 3.0;
        truth_centers.insert(frame, center);

        let occluded: Vec<bool> = (0..n_cams)
            .map(|c| config.occlusions.iter().any(|o| o.covers(c, frame)))
            .collect();

        let outputs: Vec<CameraFrameOutput> = pipelines
            .par_iter_mut()
            .map(|p| {
                let occ = occluded[p.index];
                p.process_frame(&config.extraction, frame, occ)
            })
            .collect::<Result<_>>()?;

        for (c, out) in outputs.iter().enumerate() {
            if let Some(p) = &out.raw_pose {
                raw_tracks[c].push((frame, p.position));
            }
            if let Some(p) = &out.kf_pose {
                kf_tracks[c].push((frame, p.position));
            }
            if let Some(p) = &out.rf_pose {
                rf_tracks[c].push((frame, p.position));
            }
        }

        // fusion per weighting mode, for both estimator lanes
        let rf_inputs: Vec<CameraFrameEstimate> =
            outputs.iter().map(|o| o.rf_fusion.clone()).collect();
        rf_estimates.push(rf_inputs.clone());
        let kf_inputs: Vec<CameraFrameEstimate> =
            outputs.iter().map(|o| o.kf_fusion.clone()).collect();
        // the exported fused trajectory follows the selected estimator lane;
        // raw has no fused analogue and falls back to the robust lane
        let select_from_kf = options.csv_lane == Lane::Kalman;
        let mut selected: Option<FusedFrame> = None;
        for (name, mode) in MODE_NAMES {
            if let Some(f) = fuse_frame(&rf_inputs, mode, &fusion_params)? {
                fused_tracks.entry(name).or_default().push((frame, f.position));
                if mode == options.csv_mode && !select_from_kf {
                    selected = Some(f);
                }
            }
            if let Some(f) = fuse_frame(&kf_inputs, mode, &fusion_params)? {
                fused_tracks_kf.entry(name).or_default().push((frame, f.position));
                if mode == options.csv_mode && select_from_kf {
                    selected = Some(f);
                }
            }
        }

        for (c, out) in outputs.iter().enumerate() {
            let pose = match options.csv_lane {
                Lane::Raw => &out.raw_pose,
                Lane::Kalman => &out.kf_pose,
                Lane::Robust => &out.rf_pose,
            };
            if let Some(p) = pose {
                let trace = match options.csv_lane {
                    Lane::Robust => fusion_trace(&out.rf_fusion),
                    Lane::Kalman => fusion_trace(&out.kf_fusion),
                    Lane::Raw => 0.0,
                };
                writeln!(
                    trajectory_csv,
                    "{frame},cam{c},{},{},{},{},{trace}",
                    p.position.x, p.position.y, p.position.z, p.yaw
                )?;
            }
        }
        if let Some(f) = &selected {
            writeln!(
                trajectory_csv,
                "{frame},fused,{},{},{},{},{}",
                f.position.x,
                f.position.y,
                f.position.z,
                f.yaw,
                f.p.trace()
            )?;
        }
        fused_frames.push(selected);
    }

    let elapsed = started.elapsed().as_secs_f64();
    let fps = config.frames as f64 / elapsed;

    // reports
    let mut per_camera = Vec::new();
    for c in 0..n_cams {
        per_camera.push(PerCameraReport {
            camera: c,
            raw: compute_rms(&raw_tracks[c], &truth_centers).ok(),
            kf: compute_rms(&kf_tracks[c], &truth_centers).ok(),
            rf: compute_rms(&rf_tracks[c], &truth_centers).ok(),
            correction_residual_rms: pipelines[c].correction_residual,
        });
    }
    let mut fused_rf = BTreeMap::new();
    let mut fused_kf = BTreeMap::new();
    for (name, _) in MODE_NAMES {
        if let Some(track) = fused_tracks.get(name) {
            fused_rf.insert(name.to_string(), compute_rms(track, &truth_centers)?);
        }
        if let Some(track) = fused_tracks_kf.get(name) {
            fused_kf.insert(name.to_string(), compute_rms(track, &truth_centers)?);
        }
    }

    let report = RunReport {
        seed: config.seed,
        frames: config.frames,
        cameras: n_cams,
        per_camera,
        fused: FusedReport {
            rf: fused_rf,
            kf: fused_kf,
        },
        pipeline_fps: fps,
        config: config.clone(),
    };

    Ok(ScenarioOutput {
        report,
        trajectory_csv,
        ground_truth_csv: truth_log.to_csv(),
        fused_tracks,
        camera_tracks_rf: rf_tracks,
        fused_frames,
        rf_estimates,
        truth_centers,
    })
}

fn fusion_trace(est: &CameraFrameEstimate) -> f64 {
    est.markers
        .iter()
        .flatten()
        .map(|m| m.p.trace())
        .sum::<f64>()
        / est.markers.iter().flatten().count().max(1) as f64
}

/// Write the run artifacts: trajectory CSV, per-camera fusion weights CSV,
/// ground-truth CSV, and the JSON report.
pub fn write_artifacts(output: &ScenarioOutput, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("trajectory.csv"), &output.trajectory_csv)?;
    std::fs::write(out_dir.join("ground_truth.csv"), &output.ground_truth_csv)?;
    std::fs::write(out_dir.join("fusion_weights.csv"), output.weights_csv())?;
    let json = serde_json::to_string_pretty(&output.report)?;
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(())
}

impl ScenarioOutput {
    /// Per-frame fusion weights of the exported mode, one column per camera.
    pub fn weights_csv(&self) -> String {
        let n = self.report.cameras;
        let mut s = String::from("frame");
        for c in 0..n {
            s.push_str(&format!(",w_cam{c}"));
        }
        s.push('\n');
        for (frame, fused) in self.fused_frames.iter().enumerate() {
            let Some(f) = fused else { continue };
            s.push_str(&frame.to_string());
            for w in &f.camera_weights {
                s.push_str(&format!(",{w}"));
            }
            s.push('\n');
        }
        s
    }
}
