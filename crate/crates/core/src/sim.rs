//! Synthetic RGBD camera.
//!
//! Produces depth frames with disparity quantization ("Z-levels"), a
//! per-sensor range drift, temporal Gaussian noise and i.i.d. dropout, plus a
//! color frame showing three colored markers on a moving robot, and the
//! ground truth that generated both.

use nalgebra::{Matrix3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::{
    depth_is_valid, ColorFrame, DepthFrame, DEPTH_MAX_M, DEPTH_MIN_M, INVALID_DEPTH,
};
use crate::geometry::CameraModel;
use crate::markers::HsvColor;

/// Disparity-to-depth mapping of the structured-light range sensor.
///
/// Raw disparity `kd` is counted in 1/8-pixel units; the normalized disparity
/// is `d = (doff - kd) / 8` and depth follows the stereo relation
/// `z = baseline * ir_focal / d`. Only integer `kd` values are representable,
/// which yields the discrete depth levels whose spacing grows quadratically
/// with range.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DisparityModel {
    /// Device disparity offset, 1/8-pixel units.
    pub doff: f64,
    /// Stereo baseline between projector and IR camera, meters.
    pub baseline: f64,
    /// IR focal length, pixels.
    pub ir_focal: f64,
}

impl DisparityModel {
    /// Factory-typical parameters.
    pub fn consumer_default() -> Self {
        Self {
            doff: 1090.0,
            baseline: 0.075,
            ir_focal: 580.0,
        }
    }

    /// Normalized disparity for a raw reading.
    #[inline]
    pub fn normalized_disparity(&self, kd: f64) -> f64 {
        (self.doff - kd) / 8.0
    }

    /// Depth for a raw disparity reading; non-positive disparity has no depth.
    #[inline]
    pub fn depth_from_kd(&self, kd: f64) -> f64 {
        let d = self.normalized_disparity(kd);
        if d > 0.0 {
            self.baseline * self.ir_focal / d
        } else {
            INVALID_DEPTH
        }
    }

    /// Real-valued raw disparity that would produce depth `z`.
    #[inline]
    pub fn kd_from_depth(&self, z: f64) -> f64 {
        self.doff - 8.0 * self.baseline * self.ir_focal / z
    }

    /// Snap a depth to the nearest representable level.
    ///
    /// Rounds to the nearest integer raw disparity; an exact tie goes to the
    /// larger disparity, i.e. the closer depth.
    #[inline]
    pub fn quantize(&self, z: f64) -> f64 {
        if !depth_is_valid(z) {
            return INVALID_DEPTH;
        }
        // ceil(x - 0.5) rounds half-down: the smaller kd is the larger disparity
        let kd = (self.kd_from_depth(z) - 0.5).ceil();
        self.depth_from_kd(kd)
    }

    /// Local spacing between adjacent depth levels, `z^2 / (8 b f)`.
    #[inline]
    pub fn level_gap_at(&self, z: f64) -> f64 {
        z * z / (8.0 * self.baseline * self.ir_focal)
    }

    /// Inclusive integer disparity range whose depths lie inside `[zmin, zmax]`.
    pub fn kd_range(&self, zmin: f64, zmax: f64) -> (i64, i64) {
        let lo = self.kd_from_depth(zmin).ceil() as i64;
        let hi = self.kd_from_depth(zmax).floor() as i64;
        (lo, hi)
    }
}

/// Everything that characterises one physical sensor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SensorProfile {
    pub disparity: DisparityModel,
    /// Depth-independent part of the temporal noise std-dev, meters.
    pub sigma_floor: f64,
    /// Part of the noise std-dev proportional to the local level gap.
    pub sigma_gap_scale: f64,
    /// Coefficients (ascending powers of z) of the systematic range drift
    /// `g(z)` the sensor adds to the true range, meters.
    pub drift: Vec<f64>,
    /// Probability that a pixel reports no measurement.
    pub dropout_rate: f64,
    pub seed: u64,
}

impl SensorProfile {
    /// Temporal noise std-dev at depth `z`.
    pub fn noise_sigma(&self, z: f64) -> f64 {
        self.sigma_floor + self.sigma_gap_scale * self.disparity.level_gap_at(z)
    }

    /// Systematic range drift at depth `z`.
    pub fn drift_at(&self, z: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.drift.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// One corrupted range measurement of a true depth.
    ///
    /// Applies drift, Gaussian noise, level quantization, the useful-range
    /// cut and dropout, in that order. Draws from `rng` unconditionally so a
    /// reading stream stays aligned regardless of outcomes.
    pub fn measure_depth(&self, z_true: f64, rng: &mut ChaCha8Rng) -> f64 {
        let noise: f64 = StandardNormal.sample(rng);
        let dropped = rng.random::<f64>() < self.dropout_rate;
        if !depth_is_valid(z_true) {
            return INVALID_DEPTH;
        }
        let corrupted = z_true + self.drift_at(z_true) + noise * self.noise_sigma(z_true);
        let q = self.disparity.quantize(corrupted);
        if dropped || !depth_is_valid(q) || q < DEPTH_MIN_M || q > DEPTH_MAX_M {
            INVALID_DEPTH
        } else {
            q
        }
    }
}

/// Robot position and heading at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

/// A timestamped position on a waypoint path.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds from the start of the run.
    pub t: f64,
    pub position: [f64; 3],
}

/// Ground-truth robot trajectory as a function of time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trajectory {
    /// Fixed pose; useful for calibration scenes.
    Static { position: [f64; 3], yaw: f64 },
    /// Near-circular path with smooth bounded acceleration. Heading follows
    /// the direction of travel; an optional slow vertical bob keeps every
    /// axis dynamic.
    Subcircular {
        center: [f64; 3],
        radius: f64,
        /// Angular rate, rad/s.
        angular_velocity: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        bob_amplitude: f64,
        #[serde(default = "default_bob_period")]
        bob_period: f64,
    },
    /// Piecewise-linear path through timestamped waypoints; the pose holds
    /// at the ends, and the heading follows the active segment.
    Waypoints { points: Vec<Waypoint> },
}

fn default_bob_period() -> f64 {
    8.0
}

impl Trajectory {
    pub fn pose_at(&self, t: f64) -> RobotPose {
        match self {
            Trajectory::Static { position, yaw } => RobotPose {
                position: Vector3::new(position[0], position[1], position[2]),
                yaw: *yaw,
            },
            Trajectory::Subcircular {
                center,
                radius,
                angular_velocity,
                phase,
                bob_amplitude,
                bob_period,
            } => {
                let a = angular_velocity * t + phase;
                let bob = if *bob_amplitude > 0.0 {
                    bob_amplitude * (2.0 * std::f64::consts::PI * t / bob_period).sin()
                } else {
                    0.0
                };
                RobotPose {
                    position: Vector3::new(
                        center[0] + radius * a.cos(),
                        center[1] + radius * a.sin(),
                        center[2] + bob,
                    ),
                    // heading is tangent to the circle
                    yaw: wrap_angle(a + std::f64::consts::FRAC_PI_2 * angular_velocity.signum()),
                }
            }
            Trajectory::Waypoints { points } => {
                assert!(!points.is_empty(), "waypoint path may not be empty");
                let first = &points[0];
                let last = &points[points.len() - 1];
                if t <= first.t || points.len() == 1 {
                    return RobotPose {
                        position: Vector3::from(first.position),
                        yaw: segment_yaw(points, 0),
                    };
                }
                if t >= last.t {
                    return RobotPose {
                        position: Vector3::from(last.position),
                        yaw: segment_yaw(points, points.len().saturating_sub(2)),
                    };
                }
                let i = points.partition_point(|w| w.t <= t) - 1;
                let (a, b) = (&points[i], &points[i + 1]);
                let frac = (t - a.t) / (b.t - a.t).max(1e-12);
                RobotPose {
                    position: Vector3::from(a.position).lerp(&Vector3::from(b.position), frac),
                    yaw: segment_yaw(points, i),
                }
            }
        }
    }
}

fn segment_yaw(points: &[Waypoint], i: usize) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let i = i.min(points.len() - 2);
    let d = Vector3::from(points[i + 1].position) - Vector3::from(points[i].position);
    if d.x == 0.0 && d.y == 0.0 {
        0.0
    } else {
        d.y.atan2(d.x)
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Axis-aligned bounds of the tracked volume, meters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Volume {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

/// The simulated world: robot trajectory, marker geometry and colors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scene {
    pub trajectory: Trajectory,
    /// Marker offsets in the robot frame, meters: front, left, right.
    pub marker_layout: [[f64; 3]; 3],
    /// Rendered marker radius, meters.
    pub marker_radius: f64,
    /// Color of the heading marker.
    pub front_color: HsvColor,
    /// Color of the two rear markers.
    pub rear_color: HsvColor,
    pub background_color: HsvColor,
    pub volume: Volume,
    /// Frame period, seconds.
    pub dt: f64,
}

impl Scene {
    /// World positions of the three markers for a robot pose.
    pub fn marker_world_positions(&self, pose: &RobotPose) -> [Vector3<f64>; 3] {
        let rot = Matrix3::new(
            pose.yaw.cos(),
            -pose.yaw.sin(),
            0.0,
            pose.yaw.sin(),
            pose.yaw.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let mut out = [Vector3::zeros(); 3];
        for (i, m) in self.marker_layout.iter().enumerate() {
            out[i] = pose.position + rot * Vector3::new(m[0], m[1], m[2]);
        }
        out
    }

    /// Ground truth for frame `k`.
    pub fn truth_at(&self, k: u64) -> GroundTruthEntry {
        let pose = self.trajectory.pose_at(k as f64 * self.dt);
        GroundTruthEntry {
            frame: k,
            markers: self.marker_world_positions(&pose),
            pose,
        }
    }
}

/// Per-frame ground truth: robot pose plus the marker world positions.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruthEntry {
    pub frame: u64,
    pub pose: RobotPose,
    pub markers: [Vector3<f64>; 3],
}

/// Full ground-truth record of a synthesized sequence.
#[derive(Clone, Debug, Default)]
pub struct GroundTruthLog {
    pub entries: Vec<GroundTruthEntry>,
}

impl GroundTruthLog {
    pub fn push(&mut self, e: GroundTruthEntry) {
        self.entries.push(e);
    }

    /// CSV export: frame, pose, then per-marker world coordinates.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "frame,x,y,z,yaw,m0x,m0y,m0z,m1x,m1y,m1z,m2x,m2y,m2z\n",
        );
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{}",
                e.frame, e.pose.position.x, e.pose.position.y, e.pose.position.z, e.pose.yaw
            ));
            for m in &e.markers {
                s.push_str(&format!(",{},{},{}", m.x, m.y, m.z));
            }
            s.push('\n');
        }
        s
    }
}

/// Distance along a camera ray to the exit face of the volume box.
///
/// Returns the camera-frame depth (z coordinate) of the hit, assuming the
/// unnormalized ray direction has `dir_cam.z == 1` so the ray parameter *is*
/// the depth.
fn box_exit_depth(origin: &Vector3<f64>, dir: &Vector3<f64>, vol: &Volume) -> f64 {
    // slab method; valid for a viewpoint inside the box
    let mut s_exit = f64::INFINITY;
    for axis in 0..3 {
        let d = dir[axis];
        if d.abs() < 1e-12 {
            continue;
        }
        let t1 = (vol.min[axis] - origin[axis]) / d;
        let t2 = (vol.max[axis] - origin[axis]) / d;
        s_exit = s_exit.min(t1.max(t2));
    }
    s_exit
}

struct MarkerSprite {
    /// Center in the rendering camera frame.
    depth: f64,
    /// Projected center, pixels.
    u: f64,
    v: f64,
    radius_px: f64,
    color: [u8; 3],
}

impl MarkerSprite {
    #[inline]
    fn covers(&self, u: usize, v: usize) -> bool {
        let du = u as f64 - self.u;
        let dv = v as f64 - self.v;
        du * du + dv * dv <= self.radius_px * self.radius_px
    }

    /// Rows the sprite can touch, clamped to the image.
    fn row_span(&self, height: usize) -> (usize, usize) {
        let lo = (self.v - self.radius_px).floor().max(0.0) as usize;
        let hi = (self.v + self.radius_px).ceil().min(height as f64 - 1.0) as usize;
        (lo, hi)
    }
}

/// Stateful renderer for one camera: the static background depth map is ray
/// cast once and reused for every frame, along with its per-pixel drift and
/// noise level.
pub struct CameraSimulator {
    scene: Scene,
    cam: CameraModel,
    profile: SensorProfile,
    background_depth: Vec<f64>,
    /// Background depth with the systematic drift already applied.
    background_drifted: Vec<f64>,
    background_sigma: Vec<f64>,
}

impl CameraSimulator {
    pub fn new(scene: Scene, cam: CameraModel, profile: SensorProfile) -> Self {
        let width = cam.width;
        let height = cam.height;
        let cam_pos = *cam.camera_to_world.translation();
        let cam_rot = *cam.camera_to_world.rotation();
        let volume = scene.volume;
        let mut background_depth = vec![0.0f64; width * height];
        background_depth
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(v, row)| {
                for (u, out) in row.iter_mut().enumerate() {
                    let dir_cam = Vector3::new(
                        (u as f64 - cam.ir.cx) / cam.ir.fx,
                        (v as f64 - cam.ir.cy) / cam.ir.fy,
                        1.0,
                    );
                    let dir_w = cam_rot * dir_cam;
                    *out = box_exit_depth(&cam_pos, &dir_w, &volume);
                }
            });
        let background_drifted = background_depth
            .iter()
            .map(|&z| z + profile.drift_at(z))
            .collect();
        let background_sigma = background_depth
            .iter()
            .map(|&z| profile.noise_sigma(z))
            .collect();
        Self {
            scene,
            cam,
            profile,
            background_depth,
            background_drifted,
            background_sigma,
        }
    }

    /// Render and corrupt frame `k`. Deterministic for a fixed simulator:
    /// pixel noise streams are derived per (seed, frame, row).
    pub fn synthesize(&self, k: u64) -> (DepthFrame, ColorFrame, GroundTruthEntry) {
        let truth = self.scene.truth_at(k);
        let cam = &self.cam;
        let world_to_cam = cam.camera_to_world.inverse();

        // marker sprites in the IR view (depth) and the RGB view (color)
        let mut ir_sprites: Vec<MarkerSprite> = Vec::new();
        let mut rgb_sprites: Vec<MarkerSprite> = Vec::new();
        for (i, mw) in truth.markers.iter().enumerate() {
            let color = if i == 0 {
                self.scene.front_color
            } else {
                self.scene.rear_color
            }
            .to_rgb();
            let p_ir = world_to_cam.transform_point(mw);
            if p_ir.z > 0.05 {
                ir_sprites.push(MarkerSprite {
                    depth: p_ir.z,
                    u: p_ir.x * cam.ir.fx / p_ir.z + cam.ir.cx,
                    v: p_ir.y * cam.ir.fy / p_ir.z + cam.ir.cy,
                    radius_px: self.scene.marker_radius * cam.ir.fx / p_ir.z,
                    color,
                });
            }
            let p_rgb = cam.ir_to_rgb.transform_point(&p_ir);
            if p_rgb.z > 0.05 {
                rgb_sprites.push(MarkerSprite {
                    depth: p_rgb.z,
                    u: p_rgb.x * cam.rgb.fx / p_rgb.z + cam.rgb.cx,
                    v: p_rgb.y * cam.rgb.fy / p_rgb.z + cam.rgb.cy,
                    radius_px: self.scene.marker_radius * cam.rgb.fx / p_rgb.z,
                    color,
                });
            }
        }

        let width = cam.width;
        let height = cam.height;
        let profile = &self.profile;

        let mut depth = DepthFrame::new_invalid(width, height, k);
        depth
            .as_mut_slice()
            .par_chunks_mut(width)
            .zip(
                self.background_depth
                    .par_chunks(width)
                    .zip(self.background_drifted.par_chunks(width))
                    .zip(self.background_sigma.par_chunks(width)),
            )
            .enumerate()
            .for_each(|(v, (row, ((bg_row, drift_row), sigma_row)))| {
                let mut rng = row_rng(profile.seed, k, v as u64);
                let active: Vec<&MarkerSprite> = ir_sprites
                    .iter()
                    .filter(|s| {
                        let (lo, hi) = s.row_span(height);
                        (lo..=hi).contains(&v)
                    })
                    .collect();
                for (u, (out, ((&bg, &bg_drifted), &bg_sigma))) in row
                    .iter_mut()
                    .zip(bg_row.iter().zip(drift_row).zip(sigma_row))
                    .enumerate()
                {
                    let mut z_true = bg;
                    for s in &active {
                        if s.covers(u, v) && s.depth < z_true {
                            z_true = s.depth;
                        }
                    }
                    *out = if z_true == bg {
                        // background pixel: drift and noise level were
                        // precomputed; the sample path matches measure_depth
                        let noise: f64 = StandardNormal.sample(&mut rng);
                        let dropped = rng.random::<f64>() < profile.dropout_rate;
                        let q = profile.disparity.quantize(bg_drifted + noise * bg_sigma);
                        if dropped || !depth_is_valid(q) || q < DEPTH_MIN_M || q > DEPTH_MAX_M {
                            INVALID_DEPTH
                        } else {
                            q
                        }
                    } else {
                        profile.measure_depth(z_true, &mut rng)
                    };
                }
            });

        let bg = self.scene.background_color.to_rgb();
        let mut color = ColorFrame::new_filled(width, height, k, bg);
        // painter's order: draw far sprites first so the nearest wins overlaps
        rgb_sprites.sort_by(|a, b| b.depth.partial_cmp(&a.depth).unwrap());
        color
            .as_mut_slice()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(v, row)| {
                for s in rgb_sprites.iter() {
                    let (lo, hi) = s.row_span(height);
                    if !(lo..=hi).contains(&v) {
                        continue;
                    }
                    let u_lo = (s.u - s.radius_px).floor().max(0.0) as usize;
                    let u_hi = (s.u + s.radius_px).ceil().min(width as f64 - 1.0) as usize;
                    for (u, out) in row[u_lo..=u_hi].iter_mut().enumerate() {
                        if s.covers(u + u_lo, v) {
                            *out = s.color;
                        }
                    }
                }
            });

        (depth, color, truth)
    }
}

/// Synthesize one frame: corrupted depth map, color image, and the ground
/// truth entry used to render them. One-shot form of [`CameraSimulator`];
/// loops should hold a simulator instead so the background ray cast is not
/// repeated.
pub fn synthesize_frame(
    scene: &Scene,
    cam: &CameraModel,
    profile: &SensorProfile,
    k: u64,
) -> (DepthFrame, ColorFrame, GroundTruthEntry) {
    CameraSimulator::new(scene.clone(), cam.clone(), profile.clone()).synthesize(k)
}

/// Per-row noise stream: independent of thread scheduling, distinct across
/// (sensor, frame, row).
fn row_rng(seed: u64, frame: u64, row: u64) -> ChaCha8Rng {
    let mut x = seed
        ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ row.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Extrinsics, Intrinsics};
    use crate::markers::HsvColor;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn model() -> DisparityModel {
        DisparityModel::consumer_default()
    }

    fn quiet_profile() -> SensorProfile {
        SensorProfile {
            disparity: model(),
            sigma_floor: 0.0,
            sigma_gap_scale: 0.0,
            drift: vec![],
            dropout_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn zero_disparity_has_no_depth() {
        let m = model();
        assert!(!depth_is_valid(m.depth_from_kd(m.doff)));
    }

    #[test]
    fn unit_disparity_depth() {
        let m = model();
        // kd = doff - 8 gives normalized disparity 1
        let z = m.depth_from_kd(m.doff - 8.0);
        assert_relative_eq!(z, m.baseline * m.ir_focal, epsilon = 1e-12);
    }

    #[test]
    fn depth_disparity_round_trip_within_one_level() {
        let m = model();
        for i in 0..500 {
            let z = 0.8 + 3.7 * (i as f64 / 499.0);
            let q = m.depth_from_kd(m.kd_from_depth(z).round());
            assert!((q - z).abs() <= m.level_gap_at(z) * 0.51 + 1e-12, "z={z} q={q}");
        }
    }

    #[test]
    fn quantize_is_idempotent_on_levels() {
        let m = model();
        for kd in [700_i64, 800, 900, 1000] {
            let z = m.depth_from_kd(kd as f64);
            assert_eq!(m.quantize(z), z);
        }
    }

    #[test]
    fn quantize_tie_goes_to_larger_disparity() {
        let m = model();
        // construct a depth whose raw disparity is exactly halfway
        let kd = 800.0;
        let z_half = m.depth_from_kd(kd + 0.5);
        let q = m.quantize(z_half);
        // larger disparity = smaller kd = closer depth
        assert_eq!(q, m.depth_from_kd(kd));
        assert!(q < z_half);
    }

    #[test]
    fn level_gap_grows_with_depth() {
        let m = model();
        let gap_near = m.depth_from_kd(m.kd_from_depth(1.0).round() + 1.0)
            - m.depth_from_kd(m.kd_from_depth(1.0).round());
        let gap_far = m.depth_from_kd(m.kd_from_depth(4.0).round() + 1.0)
            - m.depth_from_kd(m.kd_from_depth(4.0).round());
        assert!(gap_far > gap_near);
        // analytic gap agrees with the discrete one to first order
        assert_relative_eq!(gap_near, m.level_gap_at(1.0), max_relative = 0.02);
        assert_relative_eq!(gap_far, m.level_gap_at(4.0), max_relative = 0.02);
    }

    fn look_at_camera(pos: Vector3<f64>, target: Vector3<f64>) -> CameraModel {
        let up = Vector3::new(0.0, 0.0, 1.0);
        let fwd = (target - pos).normalize();
        let x = fwd.cross(&up).normalize();
        let y = fwd.cross(&x).normalize();
        let rot = Matrix3::from_columns(&[x, y, fwd]);
        CameraModel::new(
            Intrinsics::new(580.0, 580.0, 319.5, 239.5).unwrap(),
            Intrinsics::new(525.0, 525.0, 319.5, 239.5).unwrap(),
            Extrinsics::new(Matrix3::identity(), Vector3::new(-0.025, 0.0, 0.0)).unwrap(),
            Extrinsics::new(rot, pos).unwrap(),
        )
        .unwrap()
    }

    fn test_scene() -> Scene {
        Scene {
            trajectory: Trajectory::Static {
                position: [2.0, 2.0, 0.3],
                yaw: 0.0,
            },
            marker_layout: [[0.12, 0.0, 0.05], [-0.08, 0.09, 0.05], [-0.08, -0.09, 0.05]],
            marker_radius: 0.035,
            front_color: HsvColor { h: 220.0, s: 0.85, v: 0.9 },
            rear_color: HsvColor { h: 55.0, s: 0.9, v: 0.95 },
            background_color: HsvColor { h: 0.0, s: 0.05, v: 0.45 },
            volume: Volume {
                min: [0.0, 0.0, 0.0],
                max: [4.0, 4.0, 3.0],
            },
            dt: 1.0 / 30.0,
        }
    }

    #[test]
    fn noiseless_static_scene_is_constant() {
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let profile = quiet_profile();
        let (d0, c0, _) = synthesize_frame(&scene, &cam, &profile, 0);
        let (d5, c5, _) = synthesize_frame(&scene, &cam, &profile, 5);
        assert!(d0
            .as_slice()
            .iter()
            .zip(d5.as_slice())
            .all(|(a, b)| (a.is_nan() && b.is_nan()) || a == b));
        assert_eq!(c0.as_slice(), c5.as_slice());
        assert!(d0.valid_count() > 0);
    }

    #[test]
    fn full_dropout_blanks_the_frame() {
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let profile = SensorProfile {
            dropout_rate: 1.0,
            ..quiet_profile()
        };
        let (d, _, _) = synthesize_frame(&scene, &cam, &profile, 0);
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn marker_discs_land_at_projected_centers() {
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let profile = quiet_profile();
        let (_, color, truth) = synthesize_frame(&scene, &cam, &profile, 0);

        let world_to_cam = cam.camera_to_world.inverse();
        for (i, mw) in truth.markers.iter().enumerate() {
            let p_rgb = cam
                .ir_to_rgb
                .transform_point(&world_to_cam.transform_point(mw));
            let (u, v) =
                crate::geometry::project(&p_rgb, &cam.rgb).expect("marker in front of camera");
            // the disc center pixel carries the marker color
            let expected = if i == 0 {
                scene.front_color
            } else {
                scene.rear_color
            }
            .to_rgb();
            let got = color.get((u + 0.5).floor() as usize, (v + 0.5).floor() as usize);
            assert_eq!(got, expected, "marker {i} at ({u:.1},{v:.1})");

            // centroid of its colored pixels lies within half a pixel
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut n = 0.0;
            for y in 0..color.height() {
                for x in 0..color.width() {
                    if color.get(x, y) == expected
                        && ((x as f64 - u).powi(2) + (y as f64 - v).powi(2)) < 40.0 * 40.0
                    {
                        sx += x as f64;
                        sy += y as f64;
                        n += 1.0;
                    }
                }
            }
            assert!(n > 0.0);
            assert!((sx / n - u).abs() < 0.5, "marker {i} centroid u");
            assert!((sy / n - v).abs() < 0.5, "marker {i} centroid v");
        }
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let noisy = SensorProfile {
            sigma_floor: 0.004,
            sigma_gap_scale: 0.8,
            dropout_rate: 0.02,
            ..quiet_profile()
        };
        let (a, _, _) = synthesize_frame(&scene, &cam, &noisy, 3);
        let (b, _, _) = synthesize_frame(&scene, &cam, &noisy, 3);
        let bits = |f: &DepthFrame| f.as_slice().iter().map(|z| z.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        let other = SensorProfile { seed: 12, ..noisy };
        let (c, _, _) = synthesize_frame(&scene, &cam, &other, 3);
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn noise_at_one_level_gap_makes_most_pixels_fluctuate() {
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let profile = SensorProfile {
            sigma_gap_scale: 1.0, // sigma equals the local level gap
            ..quiet_profile()
        };
        let (a, _, _) = synthesize_frame(&scene, &cam, &profile, 0);
        let (b, _, _) = synthesize_frame(&scene, &cam, &profile, 1);
        let mut changed = 0usize;
        let mut total = 0usize;
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            if depth_is_valid(*x) && depth_is_valid(*y) {
                total += 1;
                if x != y {
                    changed += 1;
                }
            }
        }
        assert!(total > 100_000);
        assert!(
            changed as f64 > 0.5 * total as f64,
            "only {changed}/{total} pixels fluctuated"
        );
    }

    #[test]
    fn quantization_floor_bounds_noiseless_error() {
        // with no drift and no noise the only depth error is quantization
        let scene = test_scene();
        let cam = look_at_camera(Vector3::new(0.2, 2.0, 1.2), Vector3::new(2.0, 2.0, 0.3));
        let profile = quiet_profile();
        let (d, _, _) = synthesize_frame(&scene, &cam, &profile, 0);
        let world_to_cam = cam.camera_to_world.inverse();
        let cam_rot = cam.camera_to_world.rotation();
        let cam_pos = cam.camera_to_world.translation();
        let _ = world_to_cam;
        for v in (0..cam.height).step_by(48) {
            for u in (0..cam.width).step_by(64) {
                let z = d.get(u, v);
                if !depth_is_valid(z) {
                    continue;
                }
                let dir_cam = Vector3::new(
                    (u as f64 - cam.ir.cx) / cam.ir.fx,
                    (v as f64 - cam.ir.cy) / cam.ir.fy,
                    1.0,
                );
                let dir_w = cam_rot * dir_cam;
                let z_true = box_exit_depth(cam_pos, &dir_w, &scene.volume);
                let gap = profile.disparity.level_gap_at(z_true);
                assert!(
                    (z - z_true).abs() <= 0.5 * gap + 1e-9,
                    "pixel ({u},{v}): z={z} true={z_true} gap={gap}"
                );
            }
        }
    }

    #[test]
    fn waypoint_path_interpolates_and_clamps() {
        let tr = Trajectory::Waypoints {
            points: vec![
                Waypoint { t: 0.0, position: [1.0, 1.0, 0.3] },
                Waypoint { t: 2.0, position: [3.0, 1.0, 0.3] },
                Waypoint { t: 4.0, position: [3.0, 3.0, 0.3] },
            ],
        };
        let before = tr.pose_at(-1.0);
        assert_eq!(before.position, Vector3::new(1.0, 1.0, 0.3));
        let mid = tr.pose_at(1.0);
        assert_relative_eq!(mid.position, Vector3::new(2.0, 1.0, 0.3), epsilon = 1e-12);
        assert_relative_eq!(mid.yaw, 0.0, epsilon = 1e-12);
        let turn = tr.pose_at(3.0);
        assert_relative_eq!(turn.position, Vector3::new(3.0, 2.0, 0.3), epsilon = 1e-12);
        assert_relative_eq!(turn.yaw, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let after = tr.pose_at(9.0);
        assert_eq!(after.position, Vector3::new(3.0, 3.0, 0.3));
    }

    #[test]
    fn robot_outside_frustum_still_yields_frame() {
        let mut scene = test_scene();
        scene.trajectory = Trajectory::Static {
            position: [2.0, 3.5, 0.3],
            yaw: 0.0,
        };
        // camera looks toward the near wall; the robot sits behind it
        let cam = look_at_camera(Vector3::new(2.0, 2.5, 1.2), Vector3::new(2.0, 0.0, 1.0));
        let (d, color, _) = synthesize_frame(&scene, &cam, &quiet_profile(), 0);
        assert!(d.valid_count() > 0);
        let bg = scene.background_color.to_rgb();
        assert!(color.as_slice().iter().all(|&c| c == bg));
    }
}
