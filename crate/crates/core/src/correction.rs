//! Per-sensor depth correction.
//!
//! A worn sensor reports ranges shifted from the truth; the shift grows with
//! distance. From (measured, reference) sample pairs we fit a polynomial
//! offset `f(z_sh) = z_sh - z_cor` in the least-squares sense and apply it
//! per representable depth level through an exact lookup table.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{depth_is_valid, DepthFrame, DEPTH_MAX_M, DEPTH_MIN_M, INVALID_DEPTH};
use crate::sim::DisparityModel;

/// Default polynomial degree of the offset model.
pub const DEFAULT_DEGREE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CorrectionError {
    #[error("need at least {need} samples for a degree-{degree} fit, got {got}")]
    TooFewSamples {
        got: usize,
        need: usize,
        degree: usize,
    },
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("design matrix is rank deficient; samples must span the range")]
    RankDeficient,
    #[error("least-squares solve failed: {0}")]
    SolveFailed(String),
    #[error("csv line {line}: {message}")]
    BadCsv { line: usize, message: String },
}

/// Fitted per-sensor correction: polynomial offset plus a per-level lookup
/// table keyed by integer raw disparity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "CorrectionModelData", into = "CorrectionModelData")]
pub struct CorrectionModel {
    /// Offset polynomial coefficients over the scaled variable, ascending.
    coeffs: Vec<f64>,
    /// Domain map: t = (z - center) / half, so the fit runs over [-1, 1].
    center: f64,
    half: f64,
    /// Measured-depth interval covered by the samples; the offset is clamped
    /// to its ends outside it.
    support: (f64, f64),
    valid_range: (f64, f64),
    disparity: DisparityModel,
    /// RMS of (corrected - reference) over the fitting samples.
    residual_rms: f64,
    kd_min: i64,
    lut: Vec<f64>,
}

/// Serialized form: the lookup table is rebuilt on load.
#[derive(Clone, Serialize, Deserialize)]
struct CorrectionModelData {
    coeffs: Vec<f64>,
    center: f64,
    half: f64,
    support: (f64, f64),
    valid_range: (f64, f64),
    disparity: DisparityModel,
    residual_rms: f64,
}

impl From<CorrectionModelData> for CorrectionModel {
    fn from(d: CorrectionModelData) -> Self {
        CorrectionModel::from_parts(
            d.coeffs,
            d.center,
            d.half,
            d.support,
            d.disparity,
            d.residual_rms,
        )
    }
}

impl From<CorrectionModel> for CorrectionModelData {
    fn from(m: CorrectionModel) -> Self {
        CorrectionModelData {
            coeffs: m.coeffs,
            center: m.center,
            half: m.half,
            support: m.support,
            valid_range: m.valid_range,
            disparity: m.disparity,
            residual_rms: m.residual_rms,
        }
    }
}

impl CorrectionModel {
    fn from_parts(
        coeffs: Vec<f64>,
        center: f64,
        half: f64,
        support: (f64, f64),
        disparity: DisparityModel,
        residual_rms: f64,
    ) -> Self {
        let mut model = Self {
            coeffs,
            center,
            half,
            support,
            valid_range: (DEPTH_MIN_M, DEPTH_MAX_M),
            disparity,
            residual_rms,
            kd_min: 0,
            lut: Vec::new(),
        };
        model.rebuild_lut();
        model
    }

    /// Model with zero offset everywhere.
    pub fn identity(disparity: DisparityModel) -> Self {
        Self::from_parts(
            vec![0.0],
            (DEPTH_MIN_M + DEPTH_MAX_M) / 2.0,
            (DEPTH_MAX_M - DEPTH_MIN_M) / 2.0,
            (DEPTH_MIN_M, DEPTH_MAX_M),
            disparity,
            0.0,
        )
    }

    fn rebuild_lut(&mut self) {
        let (lo, hi) = self
            .disparity
            .kd_range(self.valid_range.0, self.valid_range.1);
        self.kd_min = lo;
        self.lut = (lo..=hi)
            .map(|kd| self.correct_value(self.disparity.depth_from_kd(kd as f64)))
            .collect();
    }

    /// Offset `f(z_sh)` at a measured depth; clamped beyond the sample
    /// support where a high-degree polynomial has no business extrapolating.
    pub fn offset_at(&self, z: f64) -> f64 {
        let zc = z.clamp(self.support.0, self.support.1);
        let t = (zc - self.center) / self.half;
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    /// Corrected depth `z - f(z)`.
    #[inline]
    pub fn correct_value(&self, z: f64) -> f64 {
        z - self.offset_at(z)
    }

    pub fn residual_rms(&self) -> f64 {
        self.residual_rms
    }

    pub fn disparity(&self) -> &DisparityModel {
        self.disparity_ref()
    }

    fn disparity_ref(&self) -> &DisparityModel {
        &self.disparity
    }

    pub fn valid_range(&self) -> (f64, f64) {
        self.valid_range
    }

    /// Corrected depth via the per-level table; falls back to direct
    /// polynomial evaluation for depths that sit on no representable level.
    #[inline]
    pub fn correct_level(&self, z: f64) -> f64 {
        let kd = self.disparity.kd_from_depth(z).round() as i64;
        let idx = kd - self.kd_min;
        if idx >= 0 && (idx as usize) < self.lut.len() {
            self.lut[idx as usize]
        } else {
            self.correct_value(z)
        }
    }
}

/// Invalidate pixels outside the useful depth interval.
pub fn filter_unreliable(frame: &DepthFrame) -> DepthFrame {
    let mut out = frame.clone();
    out.as_mut_slice().par_chunks_mut(4096).for_each(|chunk| {
        for z in chunk {
            if depth_is_valid(*z) && (*z < DEPTH_MIN_M || *z > DEPTH_MAX_M) {
                *z = INVALID_DEPTH;
            }
        }
    });
    out
}

/// Fit the offset polynomial from (measured, reference) depth pairs.
///
/// Requires at least `degree + 1` samples; the depth variable is centered
/// and scaled to `[-1, 1]` before building the design matrix, and the
/// solution comes from an SVD least-squares solve with an explicit rank
/// check.
pub fn fit_correction(
    samples: &[(f64, f64)],
    disparity: &DisparityModel,
    degree: usize,
) -> Result<CorrectionModel, CorrectionError> {
    let need = (degree + 1).max(9);
    if samples.len() < need {
        return Err(CorrectionError::TooFewSamples {
            got: samples.len(),
            need,
            degree,
        });
    }
    for (i, &(z_sh, z_cor)) in samples.iter().enumerate() {
        if !z_sh.is_finite() || !z_cor.is_finite() {
            return Err(CorrectionError::NonFiniteSample { index: i });
        }
    }

    let zmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let zmax = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (zmin + zmax);
    let half = 0.5 * (zmax - zmin);
    if half < 1e-9 {
        return Err(CorrectionError::RankDeficient);
    }

    let n = samples.len();
    let cols = degree + 1;
    let design = DMatrix::from_fn(n, cols, |i, j| {
        let t = (samples[i].0 - center) / half;
        t.powi(j as i32)
    });
    let rhs = DVector::from_iterator(n, samples.iter().map(|&(z_sh, z_cor)| z_sh - z_cor));

    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(cols) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(CorrectionError::RankDeficient);
    }
    let coeffs = svd
        .solve(&rhs, tol)
        .map_err(|e| CorrectionError::SolveFailed(e.to_string()))?;

    let mut model = CorrectionModel::from_parts(
        coeffs.iter().copied().collect(),
        center,
        half,
        (zmin, zmax),
        *disparity,
        0.0,
    );
    let sq_sum: f64 = samples
        .iter()
        .map(|&(z_sh, z_cor)| {
            let e = model.correct_value(z_sh) - z_cor;
            e * e
        })
        .sum();
    model.residual_rms = (sq_sum / n as f64).sqrt();
    Ok(model)
}

/// Correct every valid pixel through the per-level table. Corrected values
/// that leave the useful range become invalid; invalid pixels pass through.
pub fn apply_correction(frame: &DepthFrame, model: &CorrectionModel) -> DepthFrame {
    let mut out = frame.clone();
    let (lo, hi) = model.valid_range;
    out.as_mut_slice().par_chunks_mut(4096).for_each(|chunk| {
        for z in chunk {
            if !depth_is_valid(*z) {
                continue;
            }
            let corrected = model.correct_level(*z);
            *z = if depth_is_valid(corrected) && (lo..=hi).contains(&corrected) {
                corrected
            } else {
                INVALID_DEPTH
            };
        }
    });
    out
}

/// Parse `z_sh,z_cor` sample pairs; a non-numeric first line is treated as a
/// header.
pub fn parse_sample_csv(text: &str) -> Result<Vec<(f64, f64)>, CorrectionError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts.next().map(str::trim).unwrap_or("");
        let b = parts.next().map(str::trim).unwrap_or("");
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(z_sh), Ok(z_cor)) => out.push((z_sh, z_cor)),
            _ if i == 0 => continue, // header
            _ => {
                return Err(CorrectionError::BadCsv {
                    line: i + 1,
                    message: format!("expected two numbers, got {line:?}"),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FRAME_HEIGHT, FRAME_WIDTH};
    use crate::sim::SensorProfile;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disparity() -> DisparityModel {
        DisparityModel::consumer_default()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| DEPTH_MIN_M + (DEPTH_MAX_M - DEPTH_MIN_M) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn filter_unreliable_applies_range_rule() {
        let mut f = DepthFrame::new_invalid(8, 2, 0);
        f.set(0, 0, 0.5);
        f.set(1, 0, 5.0);
        f.set(2, 0, 2.0);
        f.set(3, 0, 0.8);
        f.set(4, 0, 4.5);
        let g = filter_unreliable(&f);
        assert!(!depth_is_valid(g.get(0, 0)));
        assert!(!depth_is_valid(g.get(1, 0)));
        assert_eq!(g.get(2, 0), 2.0);
        assert_eq!(g.get(3, 0), 0.8);
        assert_eq!(g.get(4, 0), 4.5);
        assert!(!depth_is_valid(g.get(5, 0)));
    }

    #[test]
    fn filter_unreliable_is_idempotent() {
        let mut f = DepthFrame::new_invalid(64, 4, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..64 * 4 {
            f.as_mut_slice()[i] = rng.random_range(0.1..6.0);
        }
        let once = filter_unreliable(&f);
        let twice = filter_unreliable(&once);
        let bits = |fr: &DepthFrame| fr.as_slice().iter().map(|z| z.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&once), bits(&twice));
    }

    #[test]
    fn zero_offset_samples_fit_to_zero_polynomial() {
        let samples: Vec<(f64, f64)> = grid(40).into_iter().map(|z| (z, z)).collect();
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();
        for z in grid(200) {
            assert!(model.offset_at(z).abs() < 1e-9, "offset at {z}");
        }
        assert!(model.residual_rms() < 1e-9);
    }

    #[test]
    fn recovers_known_cubic_offset() {
        let poly = |z: f64| 0.01 - 0.004 * z + 0.0031 * z * z + 0.0012 * z * z * z;
        let samples: Vec<(f64, f64)> = grid(60).into_iter().map(|z| (z, z - poly(z))).collect();
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();
        let mut sq = 0.0;
        let eval = grid(500);
        for &z in &eval {
            let e = model.offset_at(z) - poly(z);
            sq += e * e;
        }
        assert!((sq / eval.len() as f64).sqrt() < 1e-6);
    }

    #[test]
    fn too_few_or_degenerate_samples_fail() {
        let few: Vec<(f64, f64)> = grid(8).into_iter().map(|z| (z, z)).collect();
        assert!(matches!(
            fit_correction(&few, &disparity(), DEFAULT_DEGREE),
            Err(CorrectionError::TooFewSamples { .. })
        ));
        let flat: Vec<(f64, f64)> = (0..20).map(|_| (2.0, 2.0)).collect();
        assert!(matches!(
            fit_correction(&flat, &disparity(), DEFAULT_DEGREE),
            Err(CorrectionError::RankDeficient)
        ));
        let nan = vec![(f64::NAN, 1.0); 20];
        assert!(matches!(
            fit_correction(&nan, &disparity(), DEFAULT_DEGREE),
            Err(CorrectionError::NonFiniteSample { .. })
        ));
    }

    fn level_frame() -> DepthFrame {
        // every pixel sits exactly on a representable level
        let d = disparity();
        let (lo, hi) = d.kd_range(DEPTH_MIN_M, DEPTH_MAX_M);
        let mut f = DepthFrame::new_invalid(FRAME_WIDTH, FRAME_HEIGHT, 0);
        let span = (hi - lo) as usize;
        for i in 0..FRAME_WIDTH * FRAME_HEIGHT {
            if i % 17 == 0 {
                continue; // keep some invalid holes
            }
            let kd = lo + (i % (span + 1)) as i64;
            f.as_mut_slice()[i] = d.depth_from_kd(kd as f64);
        }
        f
    }

    #[test]
    fn identity_model_leaves_frame_unchanged() {
        let model = CorrectionModel::identity(disparity());
        let f = level_frame();
        let g = apply_correction(&f, &model);
        let bits = |fr: &DepthFrame| fr.as_slice().iter().map(|z| z.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&f), bits(&g));
    }

    #[test]
    fn lut_path_equals_direct_polynomial_on_every_level() {
        let poly = |z: f64| 0.002 * z * z;
        let samples: Vec<(f64, f64)> = grid(50).into_iter().map(|z| (z, z - poly(z))).collect();
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();
        let d = disparity();
        let (lo, hi) = d.kd_range(DEPTH_MIN_M, DEPTH_MAX_M);
        for kd in lo..=hi {
            let z = d.depth_from_kd(kd as f64);
            assert_eq!(
                model.correct_level(z).to_bits(),
                model.correct_value(z).to_bits(),
                "level kd={kd}"
            );
        }
    }

    #[test]
    fn lut_apply_is_bit_identical_to_per_pixel_polynomial() {
        let poly = |z: f64| -0.004 + 0.0035 * z * z;
        let samples: Vec<(f64, f64)> = grid(50).into_iter().map(|z| (z, z - poly(z))).collect();
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();
        let f = level_frame();
        let via_lut = apply_correction(&f, &model);
        // reference path: direct polynomial evaluation per pixel
        let mut direct = f.clone();
        for z in direct.as_mut_slice() {
            if depth_is_valid(*z) {
                let c = model.correct_value(*z);
                *z = if (DEPTH_MIN_M..=DEPTH_MAX_M).contains(&c) {
                    c
                } else {
                    INVALID_DEPTH
                };
            }
        }
        let bits = |fr: &DepthFrame| fr.as_slice().iter().map(|z| z.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&via_lut), bits(&direct));
    }

    #[test]
    fn corrected_values_leaving_the_range_become_invalid() {
        // constant +0.15 m offset pushes near-minimum depths below 0.8
        let samples: Vec<(f64, f64)> = grid(40).into_iter().map(|z| (z, z - 0.15)).collect();
        let model = fit_correction(&samples, &disparity(), 2).unwrap();
        let d = disparity();
        let mut f = DepthFrame::new_invalid(4, 1, 0);
        f.set(0, 0, d.quantize(0.85));
        f.set(1, 0, d.quantize(3.0));
        let g = apply_correction(&f, &model);
        assert!(!depth_is_valid(g.get(0, 0)), "0.85 - 0.15 < 0.8");
        assert!((g.get(1, 0) - (f.get(1, 0) - 0.15)).abs() < 1e-9);
        assert!(!depth_is_valid(g.get(2, 0)), "invalid stays invalid");
    }

    #[test]
    fn correction_improves_a_drifty_sensor() {
        let profile = SensorProfile {
            disparity: disparity(),
            sigma_floor: 0.002,
            sigma_gap_scale: 0.5,
            drift: vec![0.0, 0.0, 0.01], // 0.01 z^2
            dropout_rate: 0.0,
            seed: 99,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut samples = Vec::new();
        for _ in 0..600 {
            let z_true = rng.random_range(DEPTH_MIN_M..DEPTH_MAX_M);
            let z_meas = profile.measure_depth(z_true, &mut rng);
            if depth_is_valid(z_meas) {
                samples.push((z_meas, z_true));
            }
        }
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();

        // held-out evaluation
        let mut pre_sq = 0.0;
        let mut post_sq = 0.0;
        let mut improved = 0usize;
        let mut n = 0usize;
        for _ in 0..2000 {
            let z_true = rng.random_range(1.0..4.3);
            let z_meas = profile.measure_depth(z_true, &mut rng);
            if !depth_is_valid(z_meas) {
                continue;
            }
            let pre = z_meas - z_true;
            let post = model.correct_value(z_meas) - z_true;
            pre_sq += pre * pre;
            post_sq += post * post;
            if post.abs() <= pre.abs() {
                improved += 1;
            }
            n += 1;
        }
        let pre_rms = (pre_sq / n as f64).sqrt();
        let post_rms = (post_sq / n as f64).sqrt();
        assert!(
            post_rms < 0.55 * pre_rms,
            "post={post_rms:.4} pre={pre_rms:.4}"
        );
        assert!(
            improved as f64 >= 0.9 * n as f64,
            "improved on {improved}/{n} points"
        );
    }

    #[test]
    fn model_serde_round_trip_preserves_lut() {
        let poly = |z: f64| 0.001 * z * z * z;
        let samples: Vec<(f64, f64)> = grid(50).into_iter().map(|z| (z, z - poly(z))).collect();
        let model = fit_correction(&samples, &disparity(), DEFAULT_DEGREE).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: CorrectionModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lut.len(), model.lut.len());
        for (a, b) in back.lut.iter().zip(&model.lut) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.residual_rms(), model.residual_rms());
    }

    #[test]
    fn csv_parser_accepts_header_and_rejects_junk() {
        let ok = parse_sample_csv("z_sh,z_cor\n1.5,1.45\n2.5, 2.4\n").unwrap();
        assert_eq!(ok, vec![(1.5, 1.45), (2.5, 2.4)]);
        assert!(matches!(
            parse_sample_csv("1.0,2.0\nbroken,line\n"),
            Err(CorrectionError::BadCsv { line: 2, .. })
        ));
    }
}
