//! JSON descriptions of estimation problems and results. Positions are in
//! meters and angles in degrees on disk; radians internally.

use serde::{Deserialize, Serialize};

use nalgebra::Vector3;
use terranav_core::estimator::{EstimateResult, MEstimator, SolveMethod, SolverConfig};
use terranav_core::geometry::{CameraIntrinsics, EulerAngles, Pose, RelativeMotion};
use terranav_core::ParameterVector;

use crate::FormatError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicsFile {
    pub width_px: u32,
    pub height_px: u32,
    pub fov_long_deg: f64,
    pub fov_short_deg: f64,
}

impl IntrinsicsFile {
    pub fn to_core(&self) -> Result<CameraIntrinsics, FormatError> {
        CameraIntrinsics::new(
            self.width_px,
            self.height_px,
            self.fov_long_deg,
            self.fov_short_deg,
        )
        .map_err(|e| FormatError::Invalid(e.to_string()))
    }

    pub fn from_core(intr: &CameraIntrinsics) -> Self {
        Self {
            width_px: intr.width_px,
            height_px: intr.height_px,
            fov_long_deg: intr.fov_long_deg,
            fov_short_deg: intr.fov_short_deg,
        }
    }
}

/// The 12 estimated parameters: first-frame pose plus frame-to-frame motion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaFile {
    pub position_m: [f64; 3],
    /// Roll, pitch, yaw.
    pub attitude_deg: [f64; 3],
    pub translation_m: [f64; 3],
    /// Relative roll, pitch, yaw.
    pub rotation_deg: [f64; 3],
}

impl ThetaFile {
    pub fn to_core(&self) -> ParameterVector {
        let p = self.position_m;
        let a = self.attitude_deg;
        let t = self.translation_m;
        let r = self.rotation_deg;
        ParameterVector::new(
            Pose::new(
                Vector3::new(p[0], p[1], p[2]),
                EulerAngles::new(
                    a[0].to_radians(),
                    a[1].to_radians(),
                    a[2].to_radians(),
                ),
            ),
            RelativeMotion::new(
                Vector3::new(t[0], t[1], t[2]),
                EulerAngles::new(
                    r[0].to_radians(),
                    r[1].to_radians(),
                    r[2].to_radians(),
                ),
            ),
        )
    }

    pub fn from_core(theta: &ParameterVector) -> Self {
        let p = theta.pose.position;
        let a = theta.pose.attitude;
        let t = theta.motion.translation;
        let r = theta.motion.attitude_delta;
        Self {
            position_m: [p.x, p.y, p.z],
            attitude_deg: [
                a.roll.to_degrees(),
                a.pitch.to_degrees(),
                a.yaw.to_degrees(),
            ],
            translation_m: [t.x, t.y, t.z],
            rotation_deg: [
                r.roll.to_degrees(),
                r.pitch.to_degrees(),
                r.yaw.to_degrees(),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MEstimatorFile {
    None,
    Huber { k: f64 },
    Tukey { c: f64 },
}

impl MEstimatorFile {
    pub fn to_core(&self) -> MEstimator {
        match *self {
            MEstimatorFile::None => MEstimator::None,
            MEstimatorFile::Huber { k } => MEstimator::Huber { k },
            MEstimatorFile::Tukey { c } => MEstimator::Tukey { c },
        }
    }
}

/// Solver settings; omitted fields take the library defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverFile {
    pub max_gn_iters: Option<usize>,
    pub gn_switch_iters: Option<usize>,
    pub max_lm_iters: Option<usize>,
    pub lm_lambda0: Option<f64>,
    pub lm_lambda_factor: Option<f64>,
    pub step_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub mestimator: Option<MEstimatorFile>,
    pub reanchor_every: Option<usize>,
    pub max_step: Option<f64>,
}

impl SolverFile {
    pub fn to_core(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            max_gn_iters: self.max_gn_iters.unwrap_or(d.max_gn_iters),
            gn_switch_iters: self.gn_switch_iters.unwrap_or(d.gn_switch_iters),
            max_lm_iters: self.max_lm_iters.unwrap_or(d.max_lm_iters),
            lm_lambda0: self.lm_lambda0.unwrap_or(d.lm_lambda0),
            lm_lambda_factor: self.lm_lambda_factor.unwrap_or(d.lm_lambda_factor),
            step_tol: self.step_tol.unwrap_or(d.step_tol),
            residual_tol: self.residual_tol.unwrap_or(d.residual_tol),
            mestimator: self
                .mestimator
                .as_ref()
                .map(|m| m.to_core())
                .unwrap_or(d.mestimator),
            reanchor_every: self.reanchor_every.unwrap_or(d.reanchor_every),
            max_step: self.max_step.unwrap_or(d.max_step),
        }
    }
}

/// Sidecar JSON consumed by `terranav estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub intrinsics: IntrinsicsFile,
    pub initial_guess: ThetaFile,
    #[serde(default)]
    pub solver: SolverFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub theta: ThetaFile,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method_used: String,
    pub per_feature_weights: Vec<f64>,
    pub per_feature_residual_norms: Vec<f64>,
}

impl ResultFile {
    pub fn from_core(result: &EstimateResult) -> Self {
        Self {
            theta: ThetaFile::from_core(&result.theta),
            objective: result.objective,
            iterations: result.iterations,
            converged: result.converged,
            method_used: match result.method_used {
                SolveMethod::GaussNewton => "gauss-newton".into(),
                SolveMethod::LevenbergMarquardt => "levenberg-marquardt".into(),
            },
            per_feature_weights: result.per_feature_weights.clone(),
            per_feature_residual_norms: result
                .per_feature_residuals
                .iter()
                .map(|f| f.norm())
                .collect(),
        }
    }
}

pub fn read_problem(path: &std::path::Path) -> Result<ProblemFile, FormatError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| FormatError::parse(path, e.line(), e.to_string()))
}

pub fn write_result(path: &std::path::Path, result: &ResultFile) -> Result<(), FormatError> {
    let text = serde_json::to_string_pretty(result).map_err(|e| FormatError::Invalid(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}
