//! Scenario configuration: a single versioned JSON file fully determines a
//! run.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rgbdtrack_core::fusion::{CiMode, FusionParams};
use rgbdtrack_core::geometry::{CameraModel, Extrinsics, Intrinsics};
use rgbdtrack_core::markers::{HsvColor, HsvRange};
use rgbdtrack_core::sim::{DisparityModel, Scene, SensorProfile, Trajectory, Volume};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("camera geometry: {0}")]
    Geometry(#[from] rgbdtrack_core::geometry::GeometryError),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub version: u32,
    pub seed: u64,
    pub frames: u64,
    pub dt: f64,
    pub cameras: Vec<CameraConfig>,
    pub scene: SceneConfig,
    pub extraction: ExtractionConfig,
    pub tracking: TrackingConfig,
    #[serde(default)]
    pub pixel_filter: PixelFilterSettings,
    #[serde(default)]
    pub correction: CorrectionSettings,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default)]
    pub occlusions: Vec<OcclusionWindow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraConfig {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub ir: IntrinsicsConfig,
    pub rgb: IntrinsicsConfig,
    /// IR-to-RGB stereo translation, meters.
    pub ir_to_rgb_translation: [f64; 3],
    pub profile: ProfileConfig,
    #[serde(default)]
    pub project_with_ir_intrinsics: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntrinsicsConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub doff: f64,
    pub baseline: f64,
    pub ir_focal: f64,
    pub sigma_floor: f64,
    pub sigma_gap_scale: f64,
    /// Drift polynomial coefficients, ascending powers of depth.
    #[serde(default)]
    pub drift: Vec<f64>,
    #[serde(default)]
    pub dropout_rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneConfig {
    pub trajectory: Trajectory,
    pub marker_layout: [[f64; 3]; 3],
    pub marker_radius: f64,
    pub front_color: HsvColor,
    pub rear_color: HsvColor,
    pub background_color: HsvColor,
    pub volume: Volume,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub front_range: HsvRange,
    pub rear_range: HsvRange,
    pub kernel_radius: usize,
    /// Minimum blob area; defaults to the morphology kernel area.
    #[serde(default)]
    pub min_area: Option<u64>,
}

impl ExtractionConfig {
    pub fn effective_min_area(&self) -> u64 {
        self.min_area.unwrap_or({
            let side = 2 * self.kernel_radius as u64 + 1;
            side * side
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrackingConfig {
    /// Acceleration bound absorbed into the process covariance, m/s^2.
    pub q_accel: f64,
    /// Position measurement std-dev assumed by the trackers, meters.
    pub r_pos: f64,
    pub theta: f64,
    pub alpha: f64,
    pub delta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub s1: f64,
    pub s2: f64,
}

fn default_epsilon() -> f64 {
    rgbdtrack_core::tracker::DEFAULT_EPSILON
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PixelFilterSettings {
    /// Multiplier on the quantization-matched process noise floor.
    pub process_scale: f64,
    pub initial_variance: f64,
    pub reset_horizon: u32,
}

impl Default for PixelFilterSettings {
    fn default() -> Self {
        Self {
            process_scale: 1.0,
            initial_variance: 1.0,
            reset_horizon: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorrectionSettings {
    pub enabled: bool,
    pub degree: usize,
    /// Calibration readings drawn per sensor when fitting.
    pub samples: usize,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            degree: rgbdtrack_core::correction::DEFAULT_DEGREE,
            samples: 600,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FusionSettings {
    pub mode: CiMode,
    pub kappa: f64,
    pub raw_distance_term: bool,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            mode: CiMode::AdaptivePkz,
            kappa: 1.0,
            raw_distance_term: false,
        }
    }
}

impl FusionSettings {
    pub fn params(&self) -> FusionParams {
        FusionParams {
            kappa: self.kappa,
            raw_distance_term: self.raw_distance_term,
        }
    }
}

/// Frames during which a camera is fully blind.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OcclusionWindow {
    pub camera: usize,
    pub start: u64,
    pub frames: u64,
}

impl OcclusionWindow {
    pub fn covers(&self, camera: usize, frame: u64) -> bool {
        camera == self.camera && frame >= self.start && frame < self.start + self.frames
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(field_err(
                "version",
                format!("expected {CONFIG_VERSION}, got {}", self.version),
            ));
        }
        if self.frames == 0 {
            return Err(field_err("frames", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(field_err("dt", "must be positive"));
        }
        if self.cameras.is_empty() {
            return Err(field_err("cameras", "need at least one camera"));
        }
        let vol = &self.scene.volume;
        for a in 0..3 {
            if !(vol.min[a] < vol.max[a]) {
                return Err(field_err("scene.volume", "min must be below max"));
            }
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            let f = |name: &str| format!("cameras[{i}].{name}");
            for a in 0..3 {
                if cam.position[a] < vol.min[a] || cam.position[a] > vol.max[a] {
                    return Err(field_err(
                        f("position"),
                        "camera must sit inside the scene volume",
                    ));
                }
            }
            if cam.position == cam.look_at {
                return Err(field_err(f("look_at"), "must differ from position"));
            }
            if !(cam.profile.baseline > 0.0) {
                return Err(field_err(f("profile.baseline"), "must be positive"));
            }
            if !(cam.profile.ir_focal > 0.0) {
                return Err(field_err(f("profile.ir_focal"), "must be positive"));
            }
            if !(0.0..=1.0).contains(&cam.profile.dropout_rate) {
                return Err(field_err(f("profile.dropout_rate"), "must lie in [0, 1]"));
            }
            if cam.profile.sigma_floor < 0.0 || cam.profile.sigma_gap_scale < 0.0 {
                return Err(field_err(f("profile"), "noise terms must be non-negative"));
            }
        }
        // marker colors must be separable: each inside its own range, and
        // the background outside both
        let ex = &self.extraction;
        if !ex.front_range.contains(self.scene.front_color) {
            return Err(field_err(
                "extraction.front_range",
                "must contain scene.front_color",
            ));
        }
        if !ex.rear_range.contains(self.scene.rear_color) {
            return Err(field_err(
                "extraction.rear_range",
                "must contain scene.rear_color",
            ));
        }
        for (name, range) in [
            ("extraction.front_range", &ex.front_range),
            ("extraction.rear_range", &ex.rear_range),
        ] {
            if range.contains(self.scene.background_color) {
                return Err(field_err(
                    name,
                    "background color falls inside a marker range",
                ));
            }
        }
        if ex.front_range.contains(self.scene.rear_color)
            || ex.rear_range.contains(self.scene.front_color)
        {
            return Err(field_err(
                "extraction",
                "front and rear marker colors are not separable",
            ));
        }
        // markers must span a triangle
        let m = &self.scene.marker_layout;
        let a = Vector3::from(m[1]) - Vector3::from(m[0]);
        let b = Vector3::from(m[2]) - Vector3::from(m[0]);
        if a.cross(&b).norm() < 1e-6 {
            return Err(field_err("scene.marker_layout", "markers are collinear"));
        }
        if !(self.scene.marker_radius > 0.0) {
            return Err(field_err("scene.marker_radius", "must be positive"));
        }
        let t = &self.tracking;
        for (name, v, lo) in [
            ("tracking.q_accel", t.q_accel, 0.0),
            ("tracking.r_pos", t.r_pos, f64::MIN_POSITIVE),
            ("tracking.theta", t.theta, f64::MIN_POSITIVE),
            ("tracking.alpha", t.alpha, f64::MIN_POSITIVE),
            ("tracking.s1", t.s1, f64::MIN_POSITIVE),
            ("tracking.s2", t.s2, f64::MIN_POSITIVE),
        ] {
            if !v.is_finite() || v < lo {
                return Err(field_err(name, "out of range"));
            }
        }
        if t.delta < 0.0 || t.epsilon <= 0.0 {
            return Err(field_err("tracking", "delta must be >= 0 and epsilon > 0"));
        }
        if t.s1 >= 1.0 / (t.theta * t.theta) {
            return Err(field_err(
                "tracking.s1",
                "initial covariance already violates the theta bound",
            ));
        }
        if self.extraction.kernel_radius == 0 {
            return Err(field_err("extraction.kernel_radius", "must be at least 1"));
        }
        for (i, o) in self.occlusions.iter().enumerate() {
            if o.camera >= self.cameras.len() {
                return Err(field_err(
                    format!("occlusions[{i}].camera"),
                    "camera index out of range",
                ));
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Scene {
        Scene {
            trajectory: self.scene.trajectory.clone(),
            marker_layout: self.scene.marker_layout,
            marker_radius: self.scene.marker_radius,
            front_color: self.scene.front_color,
            rear_color: self.scene.rear_color,
            background_color: self.scene.background_color,
            volume: self.scene.volume,
            dt: self.dt,
        }
    }
}

impl CameraConfig {
    pub fn build_model(&self) -> Result<CameraModel, ConfigError> {
        let ir = Intrinsics::new(self.ir.fx, self.ir.fy, self.ir.cx, self.ir.cy)?;
        let rgb = Intrinsics::new(self.rgb.fx, self.rgb.fy, self.rgb.cx, self.rgb.cy)?;
        let t = self.ir_to_rgb_translation;
        let ir_to_rgb = Extrinsics::new(Matrix3::identity(), Vector3::new(t[0], t[1], t[2]))?;
        let pose = look_at_extrinsics(
            Vector3::from(self.position),
            Vector3::from(self.look_at),
        )?;
        let mut model = CameraModel::new(ir, rgb, ir_to_rgb, pose)?;
        model.project_with_ir_intrinsics = self.project_with_ir_intrinsics;
        Ok(model)
    }

    pub fn build_profile(&self) -> SensorProfile {
        SensorProfile {
            disparity: DisparityModel {
                doff: self.profile.doff,
                baseline: self.profile.baseline,
                ir_focal: self.profile.ir_focal,
            },
            sigma_floor: self.profile.sigma_floor,
            sigma_gap_scale: self.profile.sigma_gap_scale,
            drift: self.profile.drift.clone(),
            dropout_rate: self.profile.dropout_rate,
            seed: self.profile.seed,
        }
    }
}

/// Camera-to-world pose looking from `position` toward `target`, with the
/// image v axis pointing down in the world (z-up convention).
pub fn look_at_extrinsics(
    position: Vector3<f64>,
    target: Vector3<f64>,
) -> Result<Extrinsics, ConfigError> {
    let up = Vector3::new(0.0, 0.0, 1.0);
    let fwd = (target - position).normalize();
    let x = fwd.cross(&up);
    if x.norm() < 1e-9 {
        return Err(field_err("look_at", "viewing direction may not be vertical"));
    }
    let x = x.normalize();
    let y = fwd.cross(&x).normalize();
    Ok(Extrinsics::new(
        Matrix3::from_columns(&[x, y, fwd]),
        position,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_config() -> ScenarioConfig {
        let json = include_str!("../../../configs/standard.json");
        ScenarioConfig::from_json(json).expect("standard config parses")
    }

    #[test]
    fn standard_config_is_valid() {
        let c = minimal_config();
        assert_eq!(c.cameras.len(), 5);
        assert_eq!(c.version, CONFIG_VERSION);
        for cam in &c.cameras {
            cam.build_model().unwrap();
        }
    }

    #[test]
    fn validation_reports_the_offending_field() {
        let mut c = minimal_config();
        c.dt = 0.0;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");

        let mut c = minimal_config();
        c.cameras[2].profile.dropout_rate = 1.5;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("cameras[2]"), "{err}");

        let mut c = minimal_config();
        c.occlusions.push(OcclusionWindow {
            camera: 99,
            start: 0,
            frames: 10,
        });
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = minimal_config();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(back.seed, c.seed);
        assert_eq!(back.frames, c.frames);
        assert_eq!(back.cameras.len(), c.cameras.len());
    }

    #[test]
    fn look_at_builds_a_proper_right_handed_frame() {
        let e = look_at_extrinsics(Vector3::new(0.0, 0.0, 1.0), Vector3::new(2.0, 0.0, 1.0))
            .unwrap();
        // forward (+z of camera) points along world +x
        let fwd = e.rotation() * Vector3::new(0.0, 0.0, 1.0);
        assert!((fwd - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        // image down (+y of camera) points along world -z
        let down = e.rotation() * Vector3::new(0.0, 1.0, 0.0);
        assert!((down - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
