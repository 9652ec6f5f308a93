//! Damped least squares inverse kinematics.
//!
//! Each iteration builds the 6-component pose error, maps it through the
//! damped inverse of the Jacobian, limits the largest joint increment to the
//! step threshold and projects the result back into the joint limits.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix6, Matrix6xX, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{fk_and_jacobian, JointVector, KinematicsError};
use crate::liegroup::{log_so3, RigidTransform};
use crate::robot_model::RobotModel;

/// Lower bound applied by [`damping_schedule`].
pub const ALPHA_MIN: f64 = 1e-4;

/// Pose error `(Δx, Δy, Δz, Δα, Δβ, Δγ)` in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError(pub Vector6<f64>);

impl PoseError {
    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn rotation(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn within(&self, tolerance: &[f64; 6]) -> bool {
        self.0.iter().zip(tolerance).all(|(e, t)| e.abs() <= *t)
    }
}

/// Translation difference plus the rotation vector of `R_target · R_currentᵀ`.
pub fn pose_error(target: &RigidTransform, current: &RigidTransform) -> PoseError {
    let dp = target.translation - current.translation;
    let dr = log_so3(&(target.rotation * current.rotation.transpose()));
    PoseError(Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Damping {
    /// Recompute α every iteration from the translation error.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlsParams {
    pub damping: Damping,
    /// Task-space weight W₁; `None` is the identity.
    pub task_weight: Option<Matrix6<f64>>,
    /// Largest joint increment per iteration, radians.
    pub step_threshold: f64,
    /// Per-component convergence tolerance.
    pub tolerance: [f64; 6],
    pub max_iterations: usize,
    /// Wall-time cap per solve; `None` disables it.
    pub max_time: Option<Duration>,
    pub local_min_window: usize,
    /// Relative error-norm improvement over the window below which the
    /// solve is declared stuck.
    pub local_min_improvement: f64,
    /// Perturb and continue instead of stopping at a local minimum.
    pub restart_on_local_minimum: bool,
    pub restart_perturbation: f64,
    pub max_restarts: usize,
    pub restart_seed: u64,
    /// Drop joints that sit on a limit and would be pushed past it from the
    /// Jacobian and recompute the step for the others.
    pub lock_saturated_joints: bool,
}

impl Default for DlsParams {
    fn default() -> Self {
        Self {
            damping: Damping::Auto,
            task_weight: None,
            step_threshold: 5f64.to_radians(),
            tolerance: [0.01; 6],
            max_iterations: 500,
            max_time: Some(Duration::from_millis(100)),
            local_min_window: 20,
            local_min_improvement: 1e-10,
            restart_on_local_minimum: false,
            restart_perturbation: 5f64.to_radians(),
            max_restarts: 5,
            restart_seed: 0,
            lock_saturated_joints: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IkStatus {
    Converged,
    LocalMinimum,
    TimedOut,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkOutcome {
    pub status: IkStatus,
    pub q: JointVector,
    pub error: PoseError,
    pub iterations: usize,
    /// Error norm at the start of every iteration, plus the final one.
    pub error_history: Vec<f64>,
    /// Largest absolute joint increment applied in each iteration.
    pub step_history: Vec<f64>,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error(transparent)]
    Dimension(#[from] KinematicsError),
    #[error("non-finite input to the damped least squares step")]
    NonFinite,
    #[error("invalid solver parameters: {0}")]
    InvalidParams(&'static str),
}

/// Damped least squares joint increment.
///
/// Unweighted: `Δθ = Jᵀ (J Jᵀ + α² I)⁻¹ e`. With a task weight:
/// `Δθ = (Jᵀ W₁ J + α² I)⁻¹ Jᵀ W₁ e`, which coincides with the unweighted
/// form for `W₁ = I`.
pub fn dls_step(
    jacobian: &Matrix6xX<f64>,
    error: &PoseError,
    alpha: f64,
    task_weight: Option<&Matrix6<f64>>,
) -> Result<DVector<f64>, IkError> {
    if !(alpha.is_finite() && alpha >= 0.0)
        || !jacobian.iter().all(|x| x.is_finite())
        || !error.0.iter().all(|x| x.is_finite())
    {
        return Err(IkError::NonFinite);
    }
    let j = DMatrix::from_column_slice(6, jacobian.ncols(), jacobian.as_slice());
    let e = DVector::from_column_slice(error.0.as_slice());
    let a2 = alpha * alpha;
    let step = match task_weight {
        None => {
            let mut m = &j * j.transpose();
            for i in 0..6 {
                m[(i, i)] += a2;
            }
            j.transpose() * solve_spd(m, &e)
        }
        Some(w) => {
            if !w.iter().all(|x| x.is_finite()) {
                return Err(IkError::NonFinite);
            }
            let w = DMatrix::from_column_slice(6, 6, w.as_slice());
            let jtw = j.transpose() * w;
            let mut m = &jtw * &j;
            for i in 0..m.nrows() {
                m[(i, i)] += a2;
            }
            solve_spd(m, &(jtw * e))
        }
    };
    if step.iter().all(|x| x.is_finite()) {
        Ok(step)
    } else {
        Err(IkError::NonFinite)
    }
}

/// Solve `m x = b` for symmetric positive semi-definite `m`, falling back to
/// the minimum-norm pseudo-inverse solution when `m` is singular.
fn solve_spd(m: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    match m.clone().cholesky() {
        Some(ch) => ch.solve(b),
        None => m
            .svd(true, true)
            .solve(b, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(b.len())),
    }
}

/// Scale a joint increment so no component exceeds `threshold`:
/// `β_h = threshold / max(threshold, maxᵢ |Δθᵢ|)`, result `β · β_h · Δθ`.
pub fn clamp_step(delta: &DVector<f64>, threshold: f64, beta: f64) -> DVector<f64> {
    let largest = delta.amax();
    let beta_h = threshold / threshold.max(largest);
    delta * (beta * beta_h)
}

/// `α = ‖e_translation‖ · c` with `c` one hundredth of the base-to-end-effector
/// segment sum, floored at [`ALPHA_MIN`].
pub fn damping_schedule(model: &RobotModel, error: &PoseError) -> f64 {
    let c = 0.01 * model.links.segment_sum();
    (error.translation().norm() * c).max(ALPHA_MIN)
}

fn validate(params: &DlsParams) -> Result<(), IkError> {
    if !(params.step_threshold > 0.0) {
        return Err(IkError::InvalidParams("step threshold must be positive"));
    }
    if !params.tolerance.iter().all(|t| *t > 0.0) {
        return Err(IkError::InvalidParams("tolerances must be positive"));
    }
    if params.max_iterations == 0 {
        return Err(IkError::InvalidParams("max_iterations must be at least 1"));
    }
    if let Damping::Fixed(a) = params.damping {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(IkError::InvalidParams("damping must be non-negative"));
        }
    }
    Ok(())
}

/// Iterate `e → J → Δθ → clamp → θ` until one of the stopping rules fires:
/// every error component within tolerance, stalled progress over the
/// local-minimum window, wall time exceeded, or the iteration cap.
///
/// The seed is projected into the joint limits before the first iteration.
pub fn solve_ik(
    model: &RobotModel,
    target: &RigidTransform,
    seed: &JointVector,
    params: &DlsParams,
) -> Result<IkOutcome, IkError> {
    validate(params)?;
    if seed.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: seed.len(),
        }
        .into());
    }
    let started = Instant::now();
    let mut q = seed.clone();
    model.clamp_to_limits(&mut q);
    let mut error_history = Vec::new();
    let mut step_history = Vec::new();
    let mut restarts = 0;
    let mut window_start = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.restart_seed);

    for iteration in 0..params.max_iterations {
        let (pose, jac) = fk_and_jacobian(model, &q)?;
        let err = pose_error(target, &pose);
        let norm = err.norm();
        error_history.push(norm);
        let finish = |status, q: JointVector, eh, sh, restarts| IkOutcome {
            status,
            q,
            error: err,
            iterations: iteration,
            error_history: eh,
            step_history: sh,
            restarts,
        };
        if err.within(&params.tolerance) {
            return Ok(finish(IkStatus::Converged, q, error_history, step_history, restarts));
        }
        if params.max_time.is_some_and(|t| started.elapsed() > t) {
            return Ok(finish(IkStatus::TimedOut, q, error_history, step_history, restarts));
        }
        let k = error_history.len() - 1;
        if k >= window_start + params.local_min_window {
            let before = error_history[k - params.local_min_window];
            if before - norm <= params.local_min_improvement * before {
                if params.restart_on_local_minimum && restarts < params.max_restarts {
                    restarts += 1;
                    window_start = k + 1;
                    let p = params.restart_perturbation;
                    for x in q.iter_mut() {
                        *x += rng.random_range(-p..=p);
                    }
                    model.clamp_to_limits(&mut q);
                    step_history.push(p);
                    continue;
                }
                return Ok(finish(IkStatus::LocalMinimum, q, error_history, step_history, restarts));
            }
        }
        let alpha = match params.damping {
            Damping::Auto => damping_schedule(model, &err),
            Damping::Fixed(a) => a,
        };
        let mut j = jac.at_point(&pose.translation);
        let mut raw = dls_step(&j, &err, alpha, params.task_weight.as_ref())?;
        if params.lock_saturated_joints {
            let mut locked = vec![false; q.len()];
            loop {
                let mut changed = false;
                for (i, joint) in model.joints.iter().enumerate() {
                    let pushing_out =
                        (q[i] <= joint.lower && raw[i] < 0.0) || (q[i] >= joint.upper && raw[i] > 0.0);
                    if !locked[i] && pushing_out {
                        locked[i] = true;
                        j.column_mut(i).fill(0.0);
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
                raw = dls_step(&j, &err, alpha, params.task_weight.as_ref())?;
            }
        }
        let step = clamp_step(&raw, params.step_threshold, 1.0);
        step_history.push(step.amax());
        q += step;
        model.clamp_to_limits(&mut q);
    }

    let (pose, _) = fk_and_jacobian(model, &q)?;
    let err = pose_error(target, &pose);
    error_history.push(err.norm());
    let status = if err.within(&params.tolerance) {
        IkStatus::Converged
    } else {
        IkStatus::MaxIterations
    };
    Ok(IkOutcome {
        status,
        q,
        error: err,
        iterations: params.max_iterations,
        error_history,
        step_history,
        restarts,
    })
}

/// Joint vector halfway between the limits, wrapped into `(−π, π]` for
/// revolute joints whose range exceeds a full turn.
pub fn mid_range_seed(model: &RobotModel) -> JointVector {
    model.mid_posture().map(|x| if x.abs() > PI { x.signum() * PI } else { x })
}
