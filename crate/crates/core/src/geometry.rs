//! Pinhole projection, rigid transforms, and IR-to-RGB registration.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{depth_is_valid, ColorFrame, DepthFrame};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("focal lengths must be positive, got fx={fx} fy={fy}")]
    BadFocalLength { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) lies outside the {width}x{height} image")]
    PrincipalPointOutside {
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
    #[error("rotation is not orthonormal (max residual {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected +1")]
    ImproperRotation(f64),
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("image size must be {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    UnsupportedSize {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("depth frame timestamp {depth} does not match color frame timestamp {color}")]
    TimestampMismatch { depth: u64, color: u64 },
}

/// Pinhole intrinsics: focal lengths and principal point, in pixels.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::BadFocalLength { fx, fy });
        }
        Ok(Self { fx, fy, cx, cy })
    }

    fn check_principal_point(&self, width: usize, height: usize) -> Result<(), GeometryError> {
        if self.cx < 0.0 || self.cx >= width as f64 || self.cy < 0.0 || self.cy >= height as f64 {
            return Err(GeometryError::PrincipalPointOutside {
                cx: self.cx,
                cy: self.cy,
                width,
                height,
            });
        }
        Ok(())
    }
}

const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Rigid transform: orthonormality is validated once at construction.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "ExtrinsicsData", into = "ExtrinsicsData")]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Serialized form of [`Extrinsics`]; conversion re-runs validation.
#[derive(Clone, Serialize, Deserialize)]
struct ExtrinsicsData {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl TryFrom<ExtrinsicsData> for Extrinsics {
    type Error = GeometryError;
    fn try_from(d: ExtrinsicsData) -> Result<Self, GeometryError> {
        Extrinsics::new(d.rotation, d.translation)
    }
}

impl From<Extrinsics> for ExtrinsicsData {
    fn from(e: Extrinsics) -> Self {
        ExtrinsicsData {
            rotation: e.rotation,
            translation: e.translation,
        }
    }
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if residual > ORTHONORMALITY_TOL {
            return Err(GeometryError::NotOrthonormal(residual));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(GeometryError::ImproperRotation(det));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `R·p + T`.
    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Full camera description: IR and RGB intrinsics, the IR-to-RGB stereo
/// transform, and the camera pose in the world.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameraModel {
    pub ir: Intrinsics,
    pub rgb: Intrinsics,
    pub ir_to_rgb: Extrinsics,
    pub camera_to_world: Extrinsics,
    pub width: usize,
    pub height: usize,
    /// Compatibility switch: when set, the reprojection into the RGB imager
    /// uses the IR intrinsics instead of the RGB ones.
    #[serde(default)]
    pub project_with_ir_intrinsics: bool,
}

impl CameraModel {
    pub fn new(
        ir: Intrinsics,
        rgb: Intrinsics,
        ir_to_rgb: Extrinsics,
        camera_to_world: Extrinsics,
    ) -> Result<Self, GeometryError> {
        use crate::frame::{FRAME_HEIGHT, FRAME_WIDTH};
        ir.check_principal_point(FRAME_WIDTH, FRAME_HEIGHT)?;
        rgb.check_principal_point(FRAME_WIDTH, FRAME_HEIGHT)?;
        Ok(Self {
            ir,
            rgb,
            ir_to_rgb,
            camera_to_world,
            width: FRAME_WIDTH,
            height: FRAME_HEIGHT,
            project_with_ir_intrinsics: false,
        })
    }

    /// Intrinsics used when reprojecting registered points into the RGB
    /// imager (see `project_with_ir_intrinsics`).
    pub fn rgb_projection_intrinsics(&self) -> &Intrinsics {
        if self.project_with_ir_intrinsics {
            &self.ir
        } else {
            &self.rgb
        }
    }
}

/// Lift an image point at depth `z` into the camera frame.
#[inline]
pub fn backproject(u: f64, v: f64, z: f64, k: &Intrinsics) -> Result<Vector3<f64>, GeometryError> {
    if !depth_is_valid(z) {
        return Err(GeometryError::InvalidDepth(z));
    }
    Ok(Vector3::new(
        (u - k.cx) * z / k.fx,
        (v - k.cy) * z / k.fy,
        z,
    ))
}

/// Project a camera-frame point onto the imager; real-valued pixel coords.
#[inline]
pub fn project(p: &Vector3<f64>, k: &Intrinsics) -> Result<(f64, f64), GeometryError> {
    if p.z <= 0.0 || !p.z.is_finite() {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((p.x * k.fx / p.z + k.cx, p.y * k.fy / p.z + k.cy))
}

/// `R·p + T`.
#[inline]
pub fn transform_point(p: &Vector3<f64>, e: &Extrinsics) -> Vector3<f64> {
    e.transform_point(p)
}

/// One registered point: position in the IR camera frame, color sampled from
/// the RGB image, and the depth pixel it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegisteredPoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub pixel: (u16, u16),
}

/// Map every valid depth pixel into the RGB image and sample its color.
///
/// Points whose reprojection lands outside the RGB image are dropped; color
/// is sampled at the nearest pixel. Output order is row-major over the depth
/// image regardless of how the rows were scheduled.
pub fn register_frame(
    depth: &DepthFrame,
    color: &ColorFrame,
    cam: &CameraModel,
) -> Result<Vec<RegisteredPoint>, GeometryError> {
    if depth.timestamp != color.timestamp {
        return Err(GeometryError::TimestampMismatch {
            depth: depth.timestamp,
            color: color.timestamp,
        });
    }
    if depth.width() != cam.width || depth.height() != cam.height {
        return Err(GeometryError::UnsupportedSize {
            expected_w: cam.width,
            expected_h: cam.height,
            got_w: depth.width(),
            got_h: depth.height(),
        });
    }
    if color.width() != cam.width || color.height() != cam.height {
        return Err(GeometryError::UnsupportedSize {
            expected_w: cam.width,
            expected_h: cam.height,
            got_w: color.width(),
            got_h: color.height(),
        });
    }

    let width = depth.width();
    let proj_k = cam.rgb_projection_intrinsics();
    let rows: Vec<Vec<RegisteredPoint>> = depth
        .as_slice()
        .par_chunks(width)
        .enumerate()
        .map(|(v, row)| {
            let mut out = Vec::with_capacity(width / 2);
            for (u, &z) in row.iter().enumerate() {
                if !depth_is_valid(z) {
                    continue;
                }
                let p_ir = Vector3::new(
                    (u as f64 - cam.ir.cx) * z / cam.ir.fx,
                    (v as f64 - cam.ir.cy) * z / cam.ir.fy,
                    z,
                );
                let p_rgb = cam.ir_to_rgb.transform_point(&p_ir);
                if p_rgb.z <= 0.0 {
                    continue;
                }
                let uc = p_rgb.x * proj_k.fx / p_rgb.z + proj_k.cx;
                let vc = p_rgb.y * proj_k.fy / p_rgb.z + proj_k.cy;
                // nearest pixel via floor(x + 0.5)
                let ui = (uc + 0.5).floor();
                let vi = (vc + 0.5).floor();
                if ui < 0.0 || vi < 0.0 || ui >= color.width() as f64 || vi >= color.height() as f64
                {
                    continue;
                }
                out.push(RegisteredPoint {
                    position: p_ir,
                    color: color.get(ui as usize, vi as usize),
                    pixel: (u as u16, v as u16),
                });
            }
            (v, out)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(_, row)| row)
        .collect();

    Ok(rows.into_iter().flatten().collect())
}

/// Registration without the point-cloud materialization: for every valid
/// depth pixel, the color its reprojection samples in the RGB image, or
/// `None` when the pixel is invalid or reprojects outside the image.
///
/// Shares its math with [`register_frame`] pixel for pixel; the cloud's
/// camera-frame z coordinate equals the depth value itself.
pub fn register_colors(
    depth: &DepthFrame,
    color: &ColorFrame,
    cam: &CameraModel,
) -> Result<Vec<Option<[u8; 3]>>, GeometryError> {
    if depth.timestamp != color.timestamp {
        return Err(GeometryError::TimestampMismatch {
            depth: depth.timestamp,
            color: color.timestamp,
        });
    }
    let width = depth.width();
    let proj_k = cam.rgb_projection_intrinsics();
    let mut out = vec![None; width * depth.height()];
    out.par_chunks_mut(width)
        .zip(depth.as_slice().par_chunks(width))
        .enumerate()
        .for_each(|(v, (out_row, depth_row))| {
            for (u, (o, &z)) in out_row.iter_mut().zip(depth_row).enumerate() {
                if !depth_is_valid(z) {
                    continue;
                }
                let p_ir = Vector3::new(
                    (u as f64 - cam.ir.cx) * z / cam.ir.fx,
                    (v as f64 - cam.ir.cy) * z / cam.ir.fy,
                    z,
                );
                let p_rgb = cam.ir_to_rgb.transform_point(&p_ir);
                if p_rgb.z <= 0.0 {
                    continue;
                }
                let uc = p_rgb.x * proj_k.fx / p_rgb.z + proj_k.cx;
                let vc = p_rgb.y * proj_k.fy / p_rgb.z + proj_k.cy;
                let ui = (uc + 0.5).floor();
                let vi = (vc + 0.5).floor();
                if ui < 0.0 || vi < 0.0 || ui >= color.width() as f64 || vi >= color.height() as f64
                {
                    continue;
                }
                *o = Some(color.get(ui as usize, vi as usize));
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FRAME_HEIGHT, FRAME_WIDTH, INVALID_DEPTH};
    use approx::assert_relative_eq;

    fn k() -> Intrinsics {
        Intrinsics::new(525.0, 525.0, 319.5, 239.5).unwrap()
    }

    fn rot_z(a: f64) -> Matrix3<f64> {
        Matrix3::new(
            a.cos(),
            -a.sin(),
            0.0,
            a.sin(),
            a.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }

    #[test]
    fn backproject_principal_ray() {
        let p = backproject(319.5, 239.5, 2.0, &k()).unwrap();
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn backproject_one_focal_length_off_axis() {
        let k = k();
        let p = backproject(k.cx + k.fx, k.cy, 1.0, &k).unwrap();
        assert_relative_eq!(p, Vector3::new(1.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn backproject_rejects_bad_depth() {
        assert!(matches!(
            backproject(10.0, 10.0, 0.0, &k()),
            Err(GeometryError::InvalidDepth(_))
        ));
        assert!(matches!(
            backproject(10.0, 10.0, INVALID_DEPTH, &k()),
            Err(GeometryError::InvalidDepth(_))
        ));
    }

    #[test]
    fn project_principal_axis_and_unit_offset() {
        let k = k();
        let (u, v) = project(&Vector3::new(0.0, 0.0, 1.0), &k).unwrap();
        assert_relative_eq!(u, k.cx);
        assert_relative_eq!(v, k.cy);
        let (u, _) = project(&Vector3::new(1.0, 0.0, 1.0), &k).unwrap();
        assert_relative_eq!(u, k.cx + 525.0);
    }

    #[test]
    fn project_rejects_behind_camera() {
        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, -1.0), &k()),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn transform_identity_and_stereo_baseline() {
        let p = Vector3::new(0.4, -0.2, 1.7);
        assert_eq!(transform_point(&p, &Extrinsics::identity()), p);

        // 7.5 cm stereo baseline shifts a point on the optical axis sideways
        let e = Extrinsics::new(Matrix3::identity(), Vector3::new(0.075, 0.0, 0.0)).unwrap();
        let q = transform_point(&Vector3::new(0.0, 0.0, 1.0), &e);
        assert_relative_eq!(q, Vector3::new(0.075, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn transform_inverse_round_trip() {
        let e = Extrinsics::new(rot_z(0.7), Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let inv = e.inverse();
        let p = Vector3::new(0.3, 0.9, 2.4);
        let back = inv.transform_point(&e.transform_point(&p));
        assert_relative_eq!(back, p, epsilon = 1e-12);
    }

    #[test]
    fn extrinsics_rejects_non_orthonormal() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Extrinsics::new(bad, Vector3::zeros()),
            Err(GeometryError::NotOrthonormal(_))
        ));
        // orthonormal but orientation-reversing
        let reflect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            Extrinsics::new(reflect, Vector3::zeros()),
            Err(GeometryError::ImproperRotation(_))
        ));
    }

    fn test_camera() -> CameraModel {
        CameraModel::new(
            k(),
            Intrinsics::new(520.0, 521.0, 310.0, 245.0).unwrap(),
            Extrinsics::identity(),
            Extrinsics::identity(),
        )
        .unwrap()
    }

    #[test]
    fn register_identity_maps_pixels_onto_themselves() {
        let mut cam = test_camera();
        cam.rgb = cam.ir; // same imager, identity stereo transform
        let depth = DepthFrame::from_data(
            FRAME_WIDTH,
            FRAME_HEIGHT,
            0,
            vec![2.0; FRAME_WIDTH * FRAME_HEIGHT],
        );
        let mut color = ColorFrame::new_filled(FRAME_WIDTH, FRAME_HEIGHT, 0, [0, 0, 0]);
        for y in 0..FRAME_HEIGHT {
            for x in 0..FRAME_WIDTH {
                color.set(x, y, [(x % 256) as u8, (y % 256) as u8, 7]);
            }
        }
        let cloud = register_frame(&depth, &color, &cam).unwrap();
        assert_eq!(cloud.len(), FRAME_WIDTH * FRAME_HEIGHT);
        for pt in cloud.iter().step_by(997) {
            let (u, v) = pt.pixel;
            assert_eq!(pt.color, color.get(u as usize, v as usize));
        }
    }

    #[test]
    fn register_all_invalid_is_empty() {
        let cam = test_camera();
        let depth = DepthFrame::new_invalid(FRAME_WIDTH, FRAME_HEIGHT, 3);
        let color = ColorFrame::new_filled(FRAME_WIDTH, FRAME_HEIGHT, 3, [1, 2, 3]);
        assert!(register_frame(&depth, &color, &cam).unwrap().is_empty());
    }

    #[test]
    fn register_rejects_mismatched_timestamps() {
        let cam = test_camera();
        let depth = DepthFrame::new_invalid(FRAME_WIDTH, FRAME_HEIGHT, 1);
        let color = ColorFrame::new_filled(FRAME_WIDTH, FRAME_HEIGHT, 2, [0, 0, 0]);
        assert!(matches!(
            register_frame(&depth, &color, &cam),
            Err(GeometryError::TimestampMismatch { .. })
        ));
    }

    #[test]
    fn register_matches_composed_operations_per_point() {
        let mut cam = test_camera();
        cam.ir_to_rgb =
            Extrinsics::new(rot_z(0.01), Vector3::new(-0.025, 0.002, 0.001)).unwrap();
        let mut depth = DepthFrame::new_invalid(FRAME_WIDTH, FRAME_HEIGHT, 0);
        // sparse grid of valid pixels at varying depths
        for y in (0..FRAME_HEIGHT).step_by(37) {
            for x in (0..FRAME_WIDTH).step_by(41) {
                depth.set(x, y, 0.9 + 0.001 * (x + 3 * y) as f64);
            }
        }
        let mut color = ColorFrame::new_filled(FRAME_WIDTH, FRAME_HEIGHT, 0, [9, 9, 9]);
        for y in 0..FRAME_HEIGHT {
            for x in 0..FRAME_WIDTH {
                color.set(x, y, [(x % 251) as u8, (y % 241) as u8, ((x + y) % 256) as u8]);
            }
        }
        let cloud = register_frame(&depth, &color, &cam).unwrap();
        assert!(!cloud.is_empty());
        for pt in &cloud {
            let (u, v) = pt.pixel;
            let z = depth.get(u as usize, v as usize);
            let p = backproject(u as f64, v as f64, z, &cam.ir).unwrap();
            assert_eq!(p, pt.position);
            let p_rgb = transform_point(&p, &cam.ir_to_rgb);
            let (uc, vc) = project(&p_rgb, &cam.rgb).unwrap();
            let (ui, vi) = ((uc + 0.5).floor() as usize, (vc + 0.5).floor() as usize);
            assert_eq!(pt.color, color.get(ui, vi));
        }
        // count bound: never more points than valid pixels
        assert!(cloud.len() <= depth.valid_count());
    }

    #[test]
    fn register_colors_agrees_with_the_cloud() {
        let mut cam = test_camera();
        cam.ir_to_rgb = Extrinsics::new(rot_z(-0.02), Vector3::new(0.03, -0.001, 0.002)).unwrap();
        let mut depth = DepthFrame::new_invalid(FRAME_WIDTH, FRAME_HEIGHT, 0);
        for y in (0..FRAME_HEIGHT).step_by(11) {
            for x in (0..FRAME_WIDTH).step_by(13) {
                depth.set(x, y, 1.1 + 0.002 * (x + y) as f64);
            }
        }
        let mut color = ColorFrame::new_filled(FRAME_WIDTH, FRAME_HEIGHT, 0, [0, 0, 0]);
        for y in 0..FRAME_HEIGHT {
            for x in 0..FRAME_WIDTH {
                color.set(x, y, [(x % 256) as u8, (y % 256) as u8, 1]);
            }
        }
        let cloud = register_frame(&depth, &color, &cam).unwrap();
        let aligned = register_colors(&depth, &color, &cam).unwrap();
        assert_eq!(
            cloud.len(),
            aligned.iter().filter(|c| c.is_some()).count()
        );
        for pt in &cloud {
            let (u, v) = pt.pixel;
            assert_eq!(aligned[v as usize * FRAME_WIDTH + u as usize], Some(pt.color));
        }
    }

    #[test]
    fn camera_serde_round_trip() {
        let cam = test_camera();
        let text = serde_json::to_string(&cam).unwrap();
        let back: CameraModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.ir, cam.ir);
        assert_eq!(back.rgb, cam.rgb);
        assert_eq!(back.ir_to_rgb, cam.ir_to_rgb);
        assert!(!back.project_with_ir_intrinsics);
    }
}
