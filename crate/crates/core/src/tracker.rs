//! Per-marker state estimation.
//!
//! A Newtonian constant-velocity model with bounded, unmeasured acceleration
//! drives two estimators over 3D marker positions: a classical Kalman filter
//! and a robust mixed Kalman/H∞ recursion that tolerates structured
//! uncertainty `ΔF = M1 Γ N`, `ΔH = M2 Γ N` with `ΓᵀΓ ≤ I`. The robust
//! recursion enforces its two feasibility conditions at every step and
//! reports violations as typed errors rather than continuing silently.

use nalgebra::{Cholesky, Matrix3, Matrix3x6, Matrix6, Matrix6x3, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("time step must be finite and non-negative, got {0}")]
    BadTimeStep(f64),
    #[error("measurement std-dev must be positive, got {0}")]
    BadMeasurementNoise(f64),
    #[error("theta is too aggressive: an eigenvalue of P reaches 1/theta^2")]
    InfeasibleTheta,
    #[error("alpha is too small: alpha*I - N*Ptilde*N^T is not positive definite")]
    InfeasibleAlpha,
    #[error("matrix inversion failed in {0}")]
    Numerical(&'static str),
}

/// Discrete Newtonian motion model over position and velocity.
#[derive(Clone, Debug)]
pub struct MotionModel {
    /// State transition, `[[I, dt*I], [0, I]]`.
    pub f: Matrix6<f64>,
    /// Acceleration input map, `[dt^2/2 * I; dt * I]`.
    pub b: Matrix6x3<f64>,
    /// Observation matrix selecting position, `[I 0]`.
    pub h: Matrix3x6<f64>,
    /// Process covariance from the acceleration bound.
    pub q: Matrix6<f64>,
    /// Measurement covariance.
    pub r: Matrix3<f64>,
    pub dt: f64,
}

const Q_FLOOR: f64 = 1e-12;

/// Build the motion model for a frame period `dt`, an acceleration bound
/// `q_accel` (m/s^2, absorbed into the process covariance since the tracker
/// never sees the true input), and a position measurement std-dev `r_pos`.
pub fn make_motion_model(dt: f64, q_accel: f64, r_pos: f64) -> Result<MotionModel, TrackerError> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(TrackerError::BadTimeStep(dt));
    }
    if !(r_pos > 0.0) {
        return Err(TrackerError::BadMeasurementNoise(r_pos));
    }
    let mut f = Matrix6::identity();
    let mut b = Matrix6x3::zeros();
    let mut h = Matrix3x6::zeros();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
        b[(i, i)] = dt * dt / 2.0;
        b[(i + 3, i)] = dt;
        h[(i, i)] = 1.0;
    }
    let q = b * Matrix3::from_diagonal_element(q_accel * q_accel) * b.transpose()
        + Matrix6::from_diagonal_element(Q_FLOOR);
    let r = Matrix3::from_diagonal_element(r_pos * r_pos);
    Ok(MotionModel { f, b, h, q, r, dt })
}

/// Classical Kalman state: posterior mean and covariance.
#[derive(Clone, Debug)]
pub struct KalmanState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
}

impl KalmanState {
    pub fn from_position(z: &Vector3<f64>, p0: Matrix6<f64>) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(z);
        Self { x, p: p0 }
    }
}

/// Standard predict/update step; a missing measurement runs prediction only.
pub fn kf_step(
    state: &KalmanState,
    model: &MotionModel,
    z: Option<&Vector3<f64>>,
) -> Result<KalmanState, TrackerError> {
    let x_pred = model.f * state.x;
    let p_pred = model.f * state.p * model.f.transpose() + model.q;
    match z {
        None => Ok(KalmanState {
            x: x_pred,
            p: symmetrize6(&p_pred),
        }),
        Some(z) => {
            let innovation_cov = model.h * p_pred * model.h.transpose() + model.r;
            let inv = Cholesky::new(innovation_cov)
                .ok_or(TrackerError::Numerical("innovation covariance"))?
                .inverse();
            let gain = p_pred * model.h.transpose() * inv;
            let x = x_pred + gain * (z - model.h * x_pred);
            let p = (Matrix6::identity() - gain * model.h) * p_pred;
            Ok(KalmanState {
                x,
                p: symmetrize6(&p),
            })
        }
    }
}

/// Uncertainty structure and tuning of the robust recursion.
#[derive(Clone, Debug)]
pub struct RobustParams {
    /// Worst-case bound parameter; the disturbance gain is bounded by 1/theta.
    pub theta: f64,
    /// Scalar sequence value, held constant per run.
    pub alpha: f64,
    /// Riccati regularizer added at every step.
    pub epsilon: f64,
    pub m1: Matrix6x3<f64>,
    pub m2: Matrix3<f64>,
    pub n: Matrix3x6<f64>,
    /// Initial value of the bound covariance P.
    pub s1: Matrix6<f64>,
    /// Initial value of the auxiliary covariance P̃.
    pub s2: Matrix6<f64>,
}

pub const DEFAULT_EPSILON: f64 = 1e-8;

impl RobustParams {
    /// Zero uncertainty structure; the recursion then collapses to the
    /// Kalman filter as theta goes to zero.
    pub fn nominal(theta: f64, s1: f64, s2: f64) -> Self {
        Self {
            theta,
            alpha: 1.0,
            epsilon: DEFAULT_EPSILON,
            m1: Matrix6x3::zeros(),
            m2: Matrix3::zeros(),
            n: Matrix3x6::zeros(),
            s1: Matrix6::from_diagonal_element(s1),
            s2: Matrix6::from_diagonal_element(s2),
        }
    }

    /// Position-row uncertainty in F: `M1` spans the acceleration input
    /// directions and `N` selects position, both scaled by `delta`.
    pub fn with_position_uncertainty(
        theta: f64,
        alpha: f64,
        delta: f64,
        model: &MotionModel,
        s1: f64,
        s2: f64,
    ) -> Self {
        let mut m1 = Matrix6x3::zeros();
        for c in 0..3 {
            let col = model.b.column(c);
            let norm = col.norm();
            if norm > 0.0 {
                m1.column_mut(c).copy_from(&(col / norm * delta));
            }
        }
        let mut n = Matrix3x6::zeros();
        for i in 0..3 {
            n[(i, i)] = delta;
        }
        Self {
            theta,
            alpha,
            epsilon: DEFAULT_EPSILON,
            m1,
            m2: Matrix3::zeros(),
            n,
            s1: Matrix6::from_diagonal_element(s1),
            s2: Matrix6::from_diagonal_element(s2),
        }
    }
}

/// A concrete admissible uncertainty: a contraction `Γ` with `ΓᵀΓ ≤ I`.
///
/// Only simulators and tests use this, to perturb the true dynamics within
/// the structure the filter is told about; the filter itself never sees Γ.
#[derive(Clone, Debug)]
pub struct UncertaintyRealization {
    gamma: Matrix3<f64>,
}

impl UncertaintyRealization {
    /// Fails when the largest singular value exceeds one.
    pub fn new(gamma: Matrix3<f64>) -> Result<Self, TrackerError> {
        let sv_max = gamma.svd(false, false).singular_values.max();
        if sv_max > 1.0 + 1e-12 {
            return Err(TrackerError::Numerical("uncertainty is not a contraction"));
        }
        Ok(Self { gamma })
    }

    /// Perturbation of the state transition, `ΔF = M1 Γ N`.
    pub fn delta_f(&self, params: &RobustParams) -> Matrix6<f64> {
        params.m1 * self.gamma * params.n
    }

    /// Perturbation of the observation, `ΔH = M2 Γ N`.
    pub fn delta_h(&self, params: &RobustParams) -> Matrix3x6<f64> {
        params.m2 * self.gamma * params.n
    }
}

/// State of the robust estimator: the recursion state plus both Riccati
/// covariances.
#[derive(Clone, Debug)]
pub struct RobustState {
    pub x: Vector6<f64>,
    /// RMS-bound covariance: the estimation error satisfies `E(ee^T) < p`.
    pub p: Matrix6<f64>,
    /// Auxiliary Riccati covariance.
    pub p_tilde: Matrix6<f64>,
    pub step: u64,
}

impl RobustState {
    pub fn from_position(z: &Vector3<f64>, params: &RobustParams) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(z);
        Self {
            x,
            p: params.s1,
            p_tilde: params.s2,
            step: 0,
        }
    }
}

/// Result of one robust step: the advanced recursion state and the
/// measurement-corrected estimate for the current frame.
#[derive(Clone, Debug)]
pub struct RfStep {
    pub state: RobustState,
    /// Corrected current state; the recursion state itself is the one-step
    /// prediction of this.
    pub estimate: Vector6<f64>,
}

fn symmetrize6(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

fn is_pd6(m: &Matrix6<f64>) -> bool {
    Cholesky::new(*m).is_some()
}

fn check_feasibility(
    p: &Matrix6<f64>,
    p_tilde: &Matrix6<f64>,
    params: &RobustParams,
) -> Result<(), TrackerError> {
    let bound = Matrix6::from_diagonal_element(1.0 / (params.theta * params.theta));
    if !is_pd6(&(bound - p)) {
        return Err(TrackerError::InfeasibleTheta);
    }
    let slack = Matrix3::from_diagonal_element(params.alpha)
        - params.n * p_tilde * params.n.transpose();
    if Cholesky::new(slack).is_none() {
        return Err(TrackerError::InfeasibleAlpha);
    }
    Ok(())
}

/// One step of the robust mixed Kalman/H∞ recursion.
///
/// Advances both Riccati covariances, forms the gain, and applies the
/// estimator update. A missing measurement zeroes the gain, so the state
/// propagates through the modified transition alone and the covariances keep
/// growing. Feasibility of both covariances is verified on entry and after
/// the update.
pub fn rf_step(
    state: &RobustState,
    model: &MotionModel,
    params: &RobustParams,
    z: Option<&Vector3<f64>>,
) -> Result<RfStep, TrackerError> {
    check_feasibility(&state.p, &state.p_tilde, params)?;

    let alpha = params.alpha;
    let r11 = model.q + params.m1 * params.m1.transpose() * alpha;
    let r12 = params.m1 * params.m2.transpose() * alpha;
    let r22 = model.r + params.m2 * params.m2.transpose() * alpha;

    let pt_inv = Cholesky::new(state.p_tilde)
        .ok_or(TrackerError::Numerical("P-tilde inverse"))?
        .inverse();
    // G^{-1} = P̃^{-1} - NᵀN/α is positive definite while the alpha
    // feasibility condition holds
    let g_inv = pt_inv - params.n.transpose() * params.n / alpha;

    let f_inv = model
        .f
        .try_inverse()
        .ok_or(TrackerError::Numerical("state transition inverse"))?;
    // R1^{-1} = F^{-T} G^{-1}, and R2 = R1^{-1} G R1^{-T} simplifies to
    // F^{-T} G^{-1} F^{-1}
    let r1_inv = f_inv.transpose() * g_inv;
    let r2 = r1_inv * f_inv;

    let p_inv = Cholesky::new(state.p)
        .ok_or(TrackerError::Numerical("P inverse"))?
        .inverse();
    let t_inner = p_inv - Matrix6::from_diagonal_element(params.theta * params.theta);
    let t = Cholesky::new(symmetrize6(&t_inner))
        .ok_or(TrackerError::InfeasibleTheta)?
        .inverse();

    let f1 = model.f + r11 * r1_inv;
    let h1 = model.h + r12.transpose() * r1_inv;

    // innovation covariance of the robust gain
    let rt = h1 * t * h1.transpose() + r12.transpose() * r2 * r12 + r22;
    let rt_inv = Cholesky::new(rt)
        .ok_or(TrackerError::Numerical("robust innovation covariance"))?
        .inverse();
    let cross = f1 * t * h1.transpose() + r11 * r2 * r12;
    let gain = cross * rt_inv;

    let growth = f1 * t * f1.transpose()
        + r11
        + r11 * r2 * r11.transpose()
        + Matrix6::from_diagonal_element(params.epsilon);
    // The quadratic reduction sandwiches the innovation covariance, matching
    // the gain equation; it applies only when a measurement arrived.
    let p_next = match z {
        Some(_) => symmetrize6(&(growth - gain * rt * gain.transpose())),
        None => symmetrize6(&growth),
    };

    let slack_inv = Cholesky::new(
        Matrix3::from_diagonal_element(alpha) - params.n * state.p_tilde * params.n.transpose(),
    )
    .ok_or(TrackerError::InfeasibleAlpha)?
    .inverse();
    let fp = model.f * state.p_tilde;
    let pt_next = symmetrize6(
        &(fp * model.f.transpose()
            + fp * params.n.transpose() * slack_inv * params.n * fp.transpose()
            + r11
            + Matrix6::from_diagonal_element(params.epsilon)),
    );

    // estimator update: x' = (F1 - K H1) x + K y, reported for the current
    // frame as the corrected state F1^{-1} x'
    let (estimate, x_next) = match z {
        Some(y) => {
            let f1_inv = f1
                .try_inverse()
                .ok_or(TrackerError::Numerical("modified transition inverse"))?;
            let corrected = state.x + f1_inv * gain * (y - h1 * state.x);
            (corrected, f1 * corrected)
        }
        None => (state.x, f1 * state.x),
    };

    check_feasibility(&p_next, &pt_next, params)?;

    Ok(RfStep {
        state: RobustState {
            x: x_next,
            p: p_next,
            p_tilde: pt_next,
            step: state.step + 1,
        },
        estimate,
    })
}

/// Position estimate a tracker emits for one frame.
#[derive(Clone, Copy, Debug)]
pub struct TrackOutput {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Position block of the tracker covariance.
    pub p_position: Matrix3<f64>,
    /// No measurement contributed this frame.
    pub prediction_only: bool,
}

/// Robust tracker for one marker: initialization from the first measurement,
/// per-frame stepping, and automatic alpha escalation when the feasibility
/// condition trips.
#[derive(Clone, Debug)]
pub struct RobustMarkerTracker {
    model: MotionModel,
    params: RobustParams,
    state: Option<RobustState>,
    alpha_doublings: u32,
}

const MAX_ALPHA_DOUBLINGS: u32 = 3;

impl RobustMarkerTracker {
    pub fn new(model: MotionModel, params: RobustParams) -> Self {
        Self {
            model,
            params,
            state: None,
            alpha_doublings: 0,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    pub fn state(&self) -> Option<&RobustState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, z: Option<&Vector3<f64>>) -> Result<Option<TrackOutput>, TrackerError> {
        let Some(state) = self.state.as_ref() else {
            return match z {
                None => Ok(None),
                Some(z) => {
                    let state = RobustState::from_position(z, &self.params);
                    let out = TrackOutput {
                        position: *z,
                        velocity: Vector3::zeros(),
                        p_position: top_left3(&state.p),
                        prediction_only: false,
                    };
                    self.state = Some(state);
                    Ok(Some(out))
                }
            };
        };

        loop {
            match rf_step(state, &self.model, &self.params, z) {
                Ok(step) => {
                    let out = TrackOutput {
                        position: step.estimate.fixed_rows::<3>(0).into_owned(),
                        velocity: step.estimate.fixed_rows::<3>(3).into_owned(),
                        p_position: top_left3(&step.state.p),
                        prediction_only: z.is_none(),
                    };
                    self.state = Some(step.state);
                    return Ok(Some(out));
                }
                Err(TrackerError::InfeasibleAlpha) if self.alpha_doublings < MAX_ALPHA_DOUBLINGS => {
                    self.params.alpha *= 2.0;
                    self.alpha_doublings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Kalman tracker with the same lifecycle, for the baseline lane.
#[derive(Clone, Debug)]
pub struct KalmanMarkerTracker {
    model: MotionModel,
    p0: Matrix6<f64>,
    state: Option<KalmanState>,
}

impl KalmanMarkerTracker {
    pub fn new(model: MotionModel, p0: Matrix6<f64>) -> Self {
        Self {
            model,
            p0,
            state: None,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    pub fn step(&mut self, z: Option<&Vector3<f64>>) -> Result<Option<TrackOutput>, TrackerError> {
        let Some(state) = self.state.as_ref() else {
            return match z {
                None => Ok(None),
                Some(z) => {
                    let state = KalmanState::from_position(z, self.p0);
                    let out = TrackOutput {
                        position: *z,
                        velocity: Vector3::zeros(),
                        p_position: top_left3(&state.p),
                        prediction_only: false,
                    };
                    self.state = Some(state);
                    Ok(Some(out))
                }
            };
        };
        let next = kf_step(state, &self.model, z)?;
        let out = TrackOutput {
            position: next.x.fixed_rows::<3>(0).into_owned(),
            velocity: next.x.fixed_rows::<3>(3).into_owned(),
            p_position: top_left3(&next.p),
            prediction_only: z.is_none(),
        };
        self.state = Some(next);
        Ok(Some(out))
    }
}

fn top_left3(m: &Matrix6<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

/// Run one robust tracker over a measurement sequence with gaps.
pub fn track_marker_sequence(
    measurements: &[Option<Vector3<f64>>],
    model: &MotionModel,
    params: &RobustParams,
) -> Result<Vec<Option<TrackOutput>>, TrackerError> {
    let mut tracker = RobustMarkerTracker::new(model.clone(), params.clone());
    measurements
        .iter()
        .map(|z| tracker.step(z.as_ref()))
        .collect()
}
