//! M-estimator weighting of feature residuals.

use alloc::vec::Vec;
use nalgebra::Vector3;

use super::{EstimatorError, MEstimator};

/// Per-feature robust weights in (0, 1] from the residual norms.
///
/// The scale is the MAD-style estimate `s = 1.4826 * median(|f_i|)`. Huber
/// weights are `min(1, k s / r)`; Tukey weights are `(1 - (r / (c s))^2)^2`
/// inside the cutoff and 0 beyond it. With a zero scale (all residuals at
/// the solution) every feature is an inlier and weights are 1.
pub fn mestimator_weights(
    residuals: &[Vector3<f64>],
    kind: MEstimator,
) -> Result<Vec<f64>, EstimatorError> {
    let norms: Vec<f64> = residuals.iter().map(|f| f.norm()).collect();
    weights_from_norms(&norms, kind)
}

pub(super) fn weights_from_norms(
    norms: &[f64],
    kind: MEstimator,
) -> Result<Vec<f64>, EstimatorError> {
    if norms.is_empty() {
        return Err(EstimatorError::InvalidConfiguration(
            "weights require at least one residual",
        ));
    }
    if matches!(kind, MEstimator::None) {
        return Ok(alloc::vec![1.0; norms.len()]);
    }
    let scale = 1.4826 * median(norms);
    if scale <= 0.0 {
        return Ok(alloc::vec![1.0; norms.len()]);
    }
    let weights: Vec<f64> = norms
        .iter()
        .map(|&r| match kind {
            MEstimator::None => 1.0,
            MEstimator::Huber { k } => {
                if r <= k * scale {
                    1.0
                } else {
                    k * scale / r
                }
            }
            MEstimator::Tukey { c } => {
                let cutoff = c * scale;
                if r < cutoff {
                    let t = 1.0 - (r / cutoff) * (r / cutoff);
                    t * t
                } else {
                    0.0
                }
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(EstimatorError::RobustCollapse);
    }
    Ok(weights)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
