//! Robust Gauss-Newton iteration with Levenberg-Marquardt fallback.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::terrain::GroundAnchor;

use super::residual::{
    anchor_prepared, jacobian_prepared, prepare_rays, stack_prepared, ResidualStack,
};
use super::robust::weights_from_norms;
use super::{
    EstimateResult, EstimationProblem, EstimatorError, MEstimator, ParameterVector, SolveMethod,
    SolverConfig,
};

/// Angle parameters are exchanged against positions at this rate when
/// conditioning the normal equations; the scaled step norm is in meters.
const ANGLE_SCALE: f64 = 1000.0;

/// Relative objective decrease below which a Gauss-Newton step counts as
/// stalled.
const SUFFICIENT_DECREASE: f64 = 1e-4;

/// Damping ceiling: Levenberg-Marquardt gives up once lambda exceeds this.
const LAMBDA_MAX: f64 = 1e8;

/// Iteration budget of the final re-anchored polish pass.
const POLISH_ITERS: usize = 5;

type Normal = SMatrix<f64, 12, 12>;
type Gradient = SVector<f64, 12>;

fn scale_of(index: usize) -> f64 {
    if (3..6).contains(&index) || index >= 9 {
        ANGLE_SCALE
    } else {
        1.0
    }
}

/// Column-scaled weighted normal equations `A = S^-1 J^T W J S^-1`,
/// `g = S^-1 J^T W F`, with one weight per feature applied to its 3 rows.
fn scaled_normal(j: &DMatrix<f64>, f: &DVector<f64>, weights: &[f64]) -> (Normal, Gradient) {
    let mut a = Normal::zeros();
    let mut g = Gradient::zeros();
    for (i, &wi) in weights.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for r in 0..3 {
            let row = 3 * i + r;
            for c in 0..12 {
                let jc = j[(row, c)];
                if jc == 0.0 {
                    continue;
                }
                g[c] += wi * jc * f[row];
                for c2 in c..12 {
                    a[(c, c2)] += wi * jc * j[(row, c2)];
                }
            }
        }
    }
    for c in 0..12 {
        for c2 in 0..c {
            a[(c, c2)] = a[(c2, c)];
        }
    }
    for r in 0..12 {
        g[r] /= scale_of(r);
        for c in 0..12 {
            a[(r, c)] /= scale_of(r) * scale_of(c);
        }
    }
    (a, g)
}

fn apply_scaled_step(theta: &ParameterVector, delta: &Gradient) -> ParameterVector {
    let mut arr = theta.to_array();
    for (k, value) in arr.iter_mut().enumerate() {
        *value += delta[k] / scale_of(k);
    }
    ParameterVector::from_array(&arr)
}

fn solve_normal(a: &Normal, g: &Gradient, max_step: f64) -> Option<Gradient> {
    let delta = a.col_piv_qr().solve(&(-g))?;
    if delta.iter().all(|x| x.is_finite()) && delta.norm() <= max_step {
        Some(delta)
    } else {
        None
    }
}

fn damped(a: &Normal, lambda: f64) -> Normal {
    let max_diag = (0..12).map(|k| a[(k, k)]).fold(0.0f64, f64::max);
    let floor = 1e-12 * max_diag.max(1e-300);
    let mut out = *a;
    for k in 0..12 {
        out[(k, k)] += lambda * a[(k, k)].max(floor);
    }
    out
}

/// Robust weights over active features, zero elsewhere. Errors if fewer than
/// six features remain active.
fn active_weights(stack: &ResidualStack, kind: MEstimator) -> Result<Vec<f64>, EstimatorError> {
    let active_norms: Vec<f64> = stack
        .per_feature
        .iter()
        .zip(&stack.active)
        .filter(|(_, &a)| a)
        .map(|(f, _)| f.norm())
        .collect();
    if active_norms.len() < 6 {
        return Err(EstimatorError::InsufficientConstraints {
            available: active_norms.len(),
        });
    }
    let dense = weights_from_norms(&active_norms, kind)?;
    let mut weights = Vec::with_capacity(stack.active.len());
    let mut k = 0;
    for &active in &stack.active {
        if active {
            weights.push(dense[k]);
            k += 1;
        } else {
            weights.push(0.0);
        }
    }
    Ok(weights)
}

struct LoopState {
    theta: ParameterVector,
    anchors: Vec<Option<GroundAnchor>>,
    method: SolveMethod,
    lambda: f64,
    gn_fail_streak: usize,
    iterations: usize,
    accepted_since_anchor: usize,
    history: Vec<f64>,
}

/// Minimizes the weighted stacked constraint over the 12 parameters.
///
/// Each outer step fixes the anchors and the robust weights, computes the
/// numeric Jacobian and takes a Gauss-Newton step on the column-scaled
/// weighted normal equations; a step is accepted only if it lowers the
/// objective under the step's own weights. After `gn_switch_iters` stalled
/// or rejected Gauss-Newton steps the iteration switches permanently to
/// Levenberg-Marquardt damping. Anchors are re-intersected every
/// `reanchor_every` accepted steps and once more for a final polish after
/// convergence.
pub fn solve(
    problem: &EstimationProblem<'_>,
    config: &SolverConfig,
) -> Result<EstimateResult, EstimatorError> {
    config.validate()?;
    if !problem.initial_guess.is_valid() {
        return Err(EstimatorError::NumericalFailure);
    }
    let rays = prepare_rays(problem);
    let mut state = LoopState {
        theta: problem.initial_guess,
        anchors: anchor_prepared(problem, &rays, &problem.initial_guess)?,
        method: SolveMethod::GaussNewton,
        lambda: config.lm_lambda0,
        gn_fail_streak: 0,
        iterations: 0,
        accepted_since_anchor: 0,
        history: Vec::new(),
    };

    let mut converged = run_loop(
        problem,
        config,
        &rays,
        &mut state,
        config.max_gn_iters,
        config.max_lm_iters,
    )?;

    if converged {
        // Final polish: re-intersect the anchors at the solution and confirm
        // the fixed point (or nudge onto it).
        if let Ok(anchors) = anchor_prepared(problem, &rays, &state.theta) {
            state.anchors = anchors;
        }
        converged = run_loop(problem, config, &rays, &mut state, POLISH_ITERS, POLISH_ITERS)?;
    }

    let stack = stack_prepared(&rays, &state.theta, &state.anchors);
    let weights = active_weights(&stack, config.mestimator)
        .unwrap_or_else(|_| alloc::vec![0.0; stack.active.len()]);
    let objective = stack.objective(&weights);
    if !objective.is_finite() {
        return Err(EstimatorError::NumericalFailure);
    }
    Ok(EstimateResult {
        theta: state.theta,
        objective,
        per_feature_residuals: stack.per_feature,
        per_feature_weights: weights,
        iterations: state.iterations,
        converged,
        method_used: state.method,
        objective_history: state.history,
    })
}

fn run_loop(
    problem: &EstimationProblem<'_>,
    config: &SolverConfig,
    rays: &[Option<(crate::geometry::ImageRay, crate::geometry::ImageRay)>],
    state: &mut LoopState,
    gn_budget: usize,
    lm_budget: usize,
) -> Result<bool, EstimatorError> {
    let mut gn_spent = 0;
    let mut lm_spent = 0;
    loop {
        let stack = stack_prepared(rays, &state.theta, &state.anchors);
        // A collapsed active set leaves nothing to iterate on; report the
        // best parameters found instead of failing.
        let Ok(weights) = active_weights(&stack, config.mestimator) else {
            return Ok(false);
        };
        let objective = stack.objective(&weights);
        if !objective.is_finite() {
            return Err(EstimatorError::NumericalFailure);
        }
        if objective <= config.residual_tol {
            return Ok(true);
        }
        match state.method {
            SolveMethod::GaussNewton if gn_spent >= gn_budget => {
                state.method = SolveMethod::LevenbergMarquardt;
            }
            SolveMethod::LevenbergMarquardt if lm_spent >= lm_budget => {
                return Ok(false);
            }
            _ => {}
        }

        let jac = jacobian_prepared(rays, &state.theta, &state.anchors, &stack)?;
        let (a, g) = scaled_normal(&jac, &stack.stacked, &weights);

        let mut accepted: Option<(ParameterVector, f64, f64)> = None;
        match state.method {
            SolveMethod::GaussNewton => {
                gn_spent += 1;
                state.iterations += 1;
                if let Some(delta) = solve_normal(&a, &g, config.max_step) {
                    let candidate = apply_scaled_step(&state.theta, &delta);
                    let trial = stack_prepared(rays, &candidate, &state.anchors);
                    let trial_obj = trial.objective(&weights);
                    if trial_obj.is_finite() && trial_obj < objective {
                        if objective - trial_obj >= SUFFICIENT_DECREASE * objective {
                            state.gn_fail_streak = 0;
                        } else {
                            state.gn_fail_streak += 1;
                        }
                        accepted = Some((candidate, trial_obj, delta.norm()));
                    } else {
                        state.gn_fail_streak += 1;
                    }
                } else {
                    state.gn_fail_streak += 1;
                }
                if state.gn_fail_streak >= config.gn_switch_iters {
                    state.method = SolveMethod::LevenbergMarquardt;
                }
            }
            SolveMethod::LevenbergMarquardt => {
                lm_spent += 1;
                state.iterations += 1;
                loop {
                    if let Some(delta) = solve_normal(&damped(&a, state.lambda), &g, config.max_step) {
                        let candidate = apply_scaled_step(&state.theta, &delta);
                        let trial = stack_prepared(rays, &candidate, &state.anchors);
                        let trial_obj = trial.objective(&weights);
                        if trial_obj.is_finite() && trial_obj < objective {
                            state.lambda =
                                (state.lambda / config.lm_lambda_factor).max(1e-12);
                            accepted = Some((candidate, trial_obj, delta.norm()));
                            break;
                        }
                    }
                    state.lambda *= config.lm_lambda_factor;
                    if state.lambda > LAMBDA_MAX {
                        // Rejected at every damping level: report the best
                        // parameters found rather than failing.
                        return Ok(false);
                    }
                }
            }
        }

        if let Some((candidate, trial_obj, step_norm)) = accepted {
            state.theta = candidate;
            state.history.push(trial_obj);
            state.accepted_since_anchor += 1;
            if step_norm <= config.step_tol {
                return Ok(true);
            }
            if state.accepted_since_anchor % config.reanchor_every == 0 {
                // If the parameters have wandered somewhere the rays miss the
                // terrain, keep the previous anchors; damping will pull the
                // iteration back.
                if let Ok(anchors) = anchor_prepared(problem, rays, &state.theta) {
                    state.anchors = anchors;
                }
            }
        }
    }
}
