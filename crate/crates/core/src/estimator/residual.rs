//! The per-feature constraint, its stacking, and numeric differentiation.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Vector3};

use crate::geometry::{camera_ray_to_world, pixel_to_ray, ImageRay};
use crate::terrain::GroundAnchor;

use super::{EstimationProblem, EstimatorError, ParameterVector};

/// Rays are considered to graze the tangent plane when the denominator of
/// the depth map falls below this fraction of the rotated ray norm.
const GRAZING_EPS: f64 = 1e-9;

/// Finite-difference step for position parameters, meters.
const POSITION_STEP: f64 = 1e-3;
/// Finite-difference step for angle parameters, radians.
const ANGLE_STEP: f64 = 1e-6;

/// First- and second-frame rays of a feature, fixed data independent of the
/// parameter vector. `None` when either pixel cannot be back-projected.
pub(super) fn prepare_rays(problem: &EstimationProblem<'_>) -> Vec<Option<(ImageRay, ImageRay)>> {
    problem
        .features
        .iter()
        .map(|f| {
            let q1 = pixel_to_ray(&problem.intrinsics, f.u1).ok()?;
            let q2 = pixel_to_ray(&problem.intrinsics, f.u2).ok()?;
            Some((q1, q2))
        })
        .collect()
}

pub(super) fn anchor_prepared(
    problem: &EstimationProblem<'_>,
    rays: &[Option<(ImageRay, ImageRay)>],
    theta: &ParameterVector,
) -> Result<Vec<Option<GroundAnchor>>, EstimatorError> {
    let pose = theta.pose;
    let anchors: Vec<Option<GroundAnchor>> = rays
        .iter()
        .map(|pair| {
            let (q1, _) = pair.as_ref()?;
            let dir = camera_ray_to_world(&pose, q1);
            problem.dtm.ray_intersect(pose.position, dir).ok()
        })
        .collect();
    let available = anchors.iter().filter(|a| a.is_some()).count();
    if available < 6 {
        return Err(EstimatorError::InsufficientConstraints { available });
    }
    Ok(anchors)
}

/// Intersects each feature's first-frame ray with the DTM at the pose given
/// by `theta`. Features whose rays miss the hull (or whose pixels cannot be
/// back-projected) are recorded as `None`.
pub fn anchor_features(
    problem: &EstimationProblem<'_>,
    theta: &ParameterVector,
) -> Result<Vec<Option<GroundAnchor>>, EstimatorError> {
    let rays = prepare_rays(problem);
    anchor_prepared(problem, &rays, theta)
}

/// One feature's constraint. The anchor's tangent plane maps the world
/// offset to the first-frame depth vector along `q1`; the predicted position
/// in the second frame is compared directionally against the observed ray:
///
/// `f = (I - q2 q2^T / (q2^T q2)) v / |v|`, `v = p12 + R12 L (Q_E - p1)`,
/// `L = q1 N^T / (N^T R1 q1)`.
///
/// The result vanishes exactly when prediction and observation are parallel.
pub fn residual_single(
    theta: &ParameterVector,
    anchor: &GroundAnchor,
    q1: &ImageRay,
    q2: &ImageRay,
) -> Result<Vector3<f64>, EstimatorError> {
    let r1 = theta.pose.rotation();
    let r12 = theta.motion.rotation();
    let q1v = q1.vector();
    let rotated = r1 * q1v;
    let denom = anchor.normal.dot(&rotated);
    if denom.abs() < GRAZING_EPS * rotated.norm() {
        return Err(EstimatorError::DegenerateFeature);
    }
    let offset = anchor.point - theta.pose.position;
    let depth_vec = q1v * (anchor.normal.dot(&offset) / denom);
    let v = theta.motion.translation + r12 * depth_vec;
    let norm = v.norm();
    if norm < 1e-9 {
        return Err(EstimatorError::DegenerateGeometry);
    }
    let unit = v / norm;
    let q2v = q2.vector();
    Ok(unit - q2v * (q2v.dot(&unit) / q2v.norm_squared()))
}

/// Stacked residuals and bookkeeping for one evaluation of the constraint
/// set at a given parameter vector.
#[derive(Debug, Clone)]
pub struct ResidualStack {
    /// Concatenated per-feature residuals, 3 rows per feature; degenerate
    /// features contribute zeros.
    pub stacked: DVector<f64>,
    pub per_feature: Vec<Vector3<f64>>,
    /// False where the feature had no anchor or was degenerate at `theta`.
    pub active: Vec<bool>,
}

impl ResidualStack {
    pub fn objective(&self, weights: &[f64]) -> f64 {
        self.per_feature
            .iter()
            .zip(weights)
            .map(|(f, w)| w * f.norm_squared())
            .sum()
    }
}

pub(super) fn stack_prepared(
    rays: &[Option<(ImageRay, ImageRay)>],
    theta: &ParameterVector,
    anchors: &[Option<GroundAnchor>],
) -> ResidualStack {
    let n = rays.len();
    let mut stacked = DVector::zeros(3 * n);
    let mut per_feature = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    for (i, (pair, anchor)) in rays.iter().zip(anchors).enumerate() {
        let value = match (pair, anchor) {
            (Some((q1, q2)), Some(anchor)) => residual_single(theta, anchor, q1, q2).ok(),
            _ => None,
        };
        match value {
            Some(f) => {
                stacked.fixed_rows_mut::<3>(3 * i).copy_from(&f);
                per_feature.push(f);
                active.push(true);
            }
            None => {
                per_feature.push(Vector3::zeros());
                active.push(false);
            }
        }
    }
    ResidualStack {
        stacked,
        per_feature,
        active,
    }
}

/// Concatenation of all feature constraints at `theta` with the given
/// anchors. Anchors must be index-aligned with the problem's features.
pub fn residual_stack(
    problem: &EstimationProblem<'_>,
    theta: &ParameterVector,
    anchors: &[Option<GroundAnchor>],
) -> ResidualStack {
    let rays = prepare_rays(problem);
    stack_prepared(&rays, theta, anchors)
}

pub(super) fn jacobian_prepared(
    rays: &[Option<(ImageRay, ImageRay)>],
    theta: &ParameterVector,
    anchors: &[Option<GroundAnchor>],
    base: &ResidualStack,
) -> Result<DMatrix<f64>, EstimatorError> {
    let n = rays.len();
    let mut j = DMatrix::zeros(3 * n, 12);
    let base_arr = theta.to_array();
    for col in 0..12 {
        let h = if (3..6).contains(&col) || col >= 9 {
            ANGLE_STEP
        } else {
            POSITION_STEP
        };
        let mut probe = base_arr;
        probe[col] += h;
        let shifted = stack_prepared(rays, &ParameterVector::from_array(&probe), anchors);
        for row in 0..3 * n {
            let d = (shifted.stacked[row] - base.stacked[row]) / h;
            if !d.is_finite() {
                return Err(EstimatorError::JacobianEvaluation);
            }
            j[(row, col)] = d;
        }
    }
    Ok(j)
}

/// Forward finite differences of the stacked residual with per-component
/// steps (1e-3 m positions, 1e-6 rad angles). Anchors are held fixed across
/// the differentiation pass.
pub fn jacobian(
    problem: &EstimationProblem<'_>,
    theta: &ParameterVector,
    anchors: &[Option<GroundAnchor>],
) -> Result<DMatrix<f64>, EstimatorError> {
    let rays = prepare_rays(problem);
    let base = stack_prepared(&rays, theta, anchors);
    jacobian_prepared(&rays, theta, anchors, &base)
}
