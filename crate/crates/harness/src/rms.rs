//! Trajectory error metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RmsError {
    #[error("estimate and ground truth share no frames")]
    EmptyOverlap,
}

/// Per-axis and overall RMS of a position trajectory against ground truth.
///
/// `overall` is the root of the summed per-axis mean squared errors, so
/// `overall^2 = x^2 + y^2 + z^2`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RmsBreakdown {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub overall: f64,
    /// Frames with both an estimate and ground truth.
    pub frames_used: u64,
    /// Ground-truth frames the estimate missed.
    pub frames_missing: u64,
}

/// RMS of per-frame estimates against the ground-truth positions.
///
/// Frames without an estimate are excluded from the averages and counted in
/// `frames_missing`.
pub fn compute_rms(
    estimates: &[(u64, Vector3<f64>)],
    truth: &BTreeMap<u64, Vector3<f64>>,
) -> Result<RmsBreakdown, RmsError> {
    let mut sq = Vector3::zeros();
    let mut used = 0u64;
    for (frame, est) in estimates {
        if let Some(t) = truth.get(frame) {
            let d = est - t;
            sq += d.component_mul(&d);
            used += 1;
        }
    }
    if used == 0 {
        return Err(RmsError::EmptyOverlap);
    }
    let mean = sq / used as f64;
    Ok(RmsBreakdown {
        x: mean.x.sqrt(),
        y: mean.y.sqrt(),
        z: mean.z.sqrt(),
        overall: mean.sum().sqrt(),
        frames_used: used,
        frames_missing: truth.len() as u64 - used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth_of(entries: &[(u64, [f64; 3])]) -> BTreeMap<u64, Vector3<f64>> {
        entries
            .iter()
            .map(|(f, p)| (*f, Vector3::new(p[0], p[1], p[2])))
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_rms() {
        let truth = truth_of(&[(0, [1.0, 2.0, 3.0]), (1, [2.0, 2.0, 3.0])]);
        let est: Vec<_> = truth.iter().map(|(f, p)| (*f, *p)).collect();
        let r = compute_rms(&est, &truth).unwrap();
        assert_eq!((r.x, r.y, r.z, r.overall), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.frames_used, 2);
        assert_eq!(r.frames_missing, 0);
    }

    #[test]
    fn constant_single_axis_offset() {
        let truth = truth_of(&[(0, [0.0; 3]), (1, [1.0, 0.0, 0.0]), (2, [2.0, 0.0, 0.0])]);
        let est: Vec<_> = truth
            .iter()
            .map(|(f, p)| (*f, p + Vector3::new(0.1, 0.0, 0.0)))
            .collect();
        let r = compute_rms(&est, &truth).unwrap();
        assert!((r.x - 0.1).abs() < 1e-15);
        assert_eq!(r.y, 0.0);
        assert_eq!(r.z, 0.0);
        assert!((r.overall - 0.1).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth: BTreeMap<u64, Vector3<f64>> = (0..200)
            .map(|f| (f, Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0))))
            .collect();
        let est: Vec<(u64, Vector3<f64>)> = (0..200)
            .filter(|f| f % 7 != 0) // gaps
            .map(|f| (f, truth[&f] + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1))))
            .collect();
        let r = compute_rms(&est, &truth).unwrap();

        // brute force over axes
        let mut sums = [0.0f64; 3];
        let mut n = 0u64;
        for (f, e) in &est {
            let t = truth[f];
            for a in 0..3 {
                sums[a] += (e[a] - t[a]) * (e[a] - t[a]);
            }
            n += 1;
        }
        assert_eq!(r.x, (sums[0] / n as f64).sqrt());
        assert_eq!(r.y, (sums[1] / n as f64).sqrt());
        assert_eq!(r.z, (sums[2] / n as f64).sqrt());
        let overall = ((sums[0] + sums[1] + sums[2]) / n as f64).sqrt();
        assert!((r.overall - overall).abs() < 1e-15);
        assert_eq!(r.frames_missing, truth.len() as u64 - n);
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let truth = truth_of(&[(0, [0.0; 3])]);
        assert_eq!(
            compute_rms(&[(5, Vector3::zeros())], &truth).unwrap_err(),
            RmsError::EmptyOverlap
        );
    }
}
