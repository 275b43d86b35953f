//! Pose and ego-motion estimation from terrain-anchored optical flow.
//!
//! Twelve parameters are estimated: camera position and Euler attitude at the
//! first frame plus the translation and Euler rotation to the second. Each
//! tracked feature contributes one three-component constraint comparing its
//! observed second-frame ray with the ray predicted from the feature's
//! DTM-anchored ground point; the weighted sum of squared constraints is
//! minimized by Gauss-Newton with an M-estimator, falling back to
//! Levenberg-Marquardt when Gauss-Newton stalls.

mod residual;
mod robust;
mod solve;

pub use residual::{anchor_features, jacobian, residual_single, residual_stack, ResidualStack};
pub use robust::mestimator_weights;
pub use solve::solve;

use alloc::vec::Vec;
use nalgebra::Vector3;

use crate::flow::FlowFeature;
use crate::geometry::{CameraIntrinsics, EulerAngles, Pose, RelativeMotion, GIMBAL_LOCK_LIMIT_RAD};
use crate::terrain::Dtm;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("only {available} features survive anchoring; at least 6 are required")]
    InsufficientConstraints { available: usize },
    #[error("feature ray grazes the tangent plane")]
    DegenerateFeature,
    #[error("predicted feature direction has vanishing norm")]
    DegenerateGeometry,
    #[error("residual became non-finite while differentiating")]
    JacobianEvaluation,
    #[error("all robust weights collapsed to zero")]
    RobustCollapse,
    #[error("solver produced a non-finite objective or step")]
    NumericalFailure,
    #[error("invalid solver configuration: {0}")]
    InvalidConfiguration(&'static str),
}

/// The 12 unknowns: first-frame pose and frame-to-frame motion. The flat
/// ordering is `(p1.x, p1.y, p1.z, roll1, pitch1, yaw1, p12.x, p12.y, p12.z,
/// roll12, pitch12, yaw12)`, positions in meters and angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector {
    pub pose: Pose,
    pub motion: RelativeMotion,
}

impl ParameterVector {
    pub fn new(pose: Pose, motion: RelativeMotion) -> Self {
        Self { pose, motion }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let p = self.pose.position;
        let a = self.pose.attitude;
        let t = self.motion.translation;
        let d = self.motion.attitude_delta;
        [
            p.x, p.y, p.z, a.roll, a.pitch, a.yaw, t.x, t.y, t.z, d.roll, d.pitch, d.yaw,
        ]
    }

    pub fn from_array(v: &[f64; 12]) -> Self {
        Self {
            pose: Pose::new(
                Vector3::new(v[0], v[1], v[2]),
                EulerAngles::new(v[3], v[4], v[5]),
            ),
            motion: RelativeMotion::new(
                Vector3::new(v[6], v[7], v[8]),
                EulerAngles::new(v[9], v[10], v[11]),
            ),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
            && self.pose.attitude.pitch.abs() < GIMBAL_LOCK_LIMIT_RAD
            && self.motion.attitude_delta.pitch.abs() < GIMBAL_LOCK_LIMIT_RAD
    }
}

/// Robust reweighting of feature residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MEstimator {
    None,
    Huber { k: f64 },
    Tukey { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_gn_iters: usize,
    /// Gauss-Newton steps without sufficient decrease before the permanent
    /// switch to Levenberg-Marquardt.
    pub gn_switch_iters: usize,
    pub max_lm_iters: usize,
    pub lm_lambda0: f64,
    pub lm_lambda_factor: f64,
    /// Convergence threshold on the scaled step norm (meters; angle
    /// components counted at 1000 m per radian). With noisy measurements the
    /// robust reweighting keeps the iterate wandering within a small
    /// neighborhood of the minimum, so this is calibrated to the meter scale
    /// of the navigation problem rather than to machine precision.
    pub step_tol: f64,
    pub residual_tol: f64,
    pub mestimator: MEstimator,
    /// Accepted steps between re-intersections of the ground anchors.
    pub reanchor_every: usize,
    /// Trust-region-style cap on the scaled step norm. Steps beyond it are
    /// rejected, which drives the damping up instead of letting a wild early
    /// step jump into a mirror basin (most prominently the one with doubled
    /// height above ground and doubled translation, which explains optical
    /// flow over weak relief almost as well as the truth).
    pub max_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_gn_iters: 30,
            gn_switch_iters: 5,
            max_lm_iters: 60,
            lm_lambda0: 1e-3,
            lm_lambda_factor: 10.0,
            step_tol: 1e-2,
            residual_tol: 1e-18,
            mestimator: MEstimator::Huber { k: 1.345 },
            reanchor_every: 3,
            max_step: 400.0,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self) -> Result<(), EstimatorError> {
        if self.max_gn_iters < 1 || self.max_lm_iters < 1 || self.gn_switch_iters < 1 {
            return Err(EstimatorError::InvalidConfiguration(
                "iteration counts must be >= 1",
            ));
        }
        if self.reanchor_every < 1 {
            return Err(EstimatorError::InvalidConfiguration(
                "reanchor_every must be >= 1",
            ));
        }
        if !(self.step_tol > 0.0) || !(self.residual_tol > 0.0) {
            return Err(EstimatorError::InvalidConfiguration(
                "tolerances must be > 0",
            ));
        }
        if !(self.lm_lambda0 > 0.0) || !(self.lm_lambda_factor > 1.0) {
            return Err(EstimatorError::InvalidConfiguration(
                "lambda parameters must be positive with factor > 1",
            ));
        }
        if !(self.max_step > 0.0) {
            return Err(EstimatorError::InvalidConfiguration("max_step must be > 0"));
        }
        Ok(())
    }
}

/// The data side of the problem: terrain, camera, tracked flow, and the
/// initial parameter guess. Lost features are dropped on construction.
#[derive(Debug, Clone)]
pub struct EstimationProblem<'a> {
    pub dtm: &'a Dtm,
    pub intrinsics: CameraIntrinsics,
    pub features: Vec<FlowFeature>,
    pub initial_guess: ParameterVector,
}

impl<'a> EstimationProblem<'a> {
    pub fn new(
        dtm: &'a Dtm,
        intrinsics: CameraIntrinsics,
        features: impl IntoIterator<Item = FlowFeature>,
        initial_guess: ParameterVector,
    ) -> Result<Self, EstimatorError> {
        let features: Vec<FlowFeature> =
            features.into_iter().filter(|f| f.is_tracked()).collect();
        if features.len() < 6 {
            return Err(EstimatorError::InsufficientConstraints {
                available: features.len(),
            });
        }
        Ok(Self {
            dtm,
            intrinsics,
            features,
            initial_guess,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    GaussNewton,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta: ParameterVector,
    /// Final weighted objective: sum of w_i * |f_i|^2.
    pub objective: f64,
    pub per_feature_residuals: Vec<Vector3<f64>>,
    pub per_feature_weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub method_used: SolveMethod,
    /// Objective after each accepted step, under that step's weights.
    pub objective_history: Vec<f64>,
}
