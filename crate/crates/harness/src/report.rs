//! Run report structures serialized to JSON.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::config::ScenarioConfig;
use crate::rms::RmsBreakdown;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub frames: u64,
    pub cameras: usize,
    pub per_camera: Vec<PerCameraReport>,
    pub fused: FusedReport,
    /// End-to-end frames per second measured during this run.
    pub pipeline_fps: f64,
    /// Echo of the configuration that produced the run.
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerCameraReport {
    pub camera: usize,
    pub raw: Option<RmsBreakdown>,
    pub kf: Option<RmsBreakdown>,
    pub rf: Option<RmsBreakdown>,
    /// RMS residual of the depth-correction fit, meters.
    pub correction_residual_rms: f64,
}

/// Fused RMS per weighting mode, for both estimator lanes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FusedReport {
    pub rf: BTreeMap<String, RmsBreakdown>,
    pub kf: BTreeMap<String, RmsBreakdown>,
}

impl RunReport {
    /// Short human-readable summary for the CLI.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{} cameras, {} frames, seed {} ({:.1} fps end-to-end)\n",
            self.cameras, self.frames, self.seed, self.pipeline_fps
        ));
        for cam in &self.per_camera {
            let fmt = |r: &Option<RmsBreakdown>| match r {
                Some(r) => format!("{:.4}", r.overall),
                None => "-".to_string(),
            };
            s.push_str(&format!(
                "  cam{}: raw {}  kf {}  rf {}  (corr residual {:.4})\n",
                cam.camera,
                fmt(&cam.raw),
                fmt(&cam.kf),
                fmt(&cam.rf),
                cam.correction_residual_rms
            ));
        }
        for (lane, table) in [("rf", &self.fused.rf), ("kf", &self.fused.kf)] {
            for (mode, r) in table {
                s.push_str(&format!(
                    "  fused[{lane}/{mode}]: overall {:.4} (x {:.4}, y {:.4}, z {:.4})\n",
                    r.overall, r.x, r.y, r.z
                ));
            }
        }
        s
    }
}
