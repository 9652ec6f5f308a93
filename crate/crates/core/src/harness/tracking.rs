use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ik::{pose_error, solve_ik};
use crate::kinematics::{forward_kinematics, JointVector};
use crate::liegroup::RigidTransform;
use crate::metrics::evaluate;
use crate::planner::{goal_from_pose, plan_detailed, time_parameterize, FreeSpace};
use crate::pose::{PlanarPoseEstimate, PoseEstimator};
use crate::robot_model::resolve_model;

use super::report::{pose6, PhaseSpan, PlannerSummary, Summary, TickRecord, TrackingReport};
use super::{synth_frame, tick_rng, HarnessError, Scenario};

/// Seconds after the servo phase starts before steady-state statistics
/// begin.
const TRANSIENT_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Servo,
}

struct Observation {
    estimate: Option<PlanarPoseEstimate>,
    failure: Option<String>,
}

/// Observe the object at `tick`. Occluded ticks still render (so the
/// random streams do not depend on the occlusion script) but the estimate
/// is dropped before it reaches the filter.
fn observe(
    scenario: &Scenario,
    estimator: &mut PoseEstimator,
    truth: &RigidTransform,
    tick: usize,
    t: f64,
) -> Observation {
    let mut rng = tick_rng(scenario.seed, tick);
    let frame = match synth_frame(scenario, truth, tick, &mut rng) {
        Ok(f) => f.frame,
        Err(e) => {
            return Observation {
                estimate: None,
                failure: Some(e.to_string()),
            }
        }
    };
    if scenario.occluded(t) {
        return Observation {
            estimate: None,
            failure: Some("occluded".into()),
        };
    }
    estimator.params.ransac.seed = scenario.seed ^ (tick as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let est = estimator.estimate(&frame);
    if est.valid {
        Observation {
            estimate: Some(est),
            failure: None,
        }
    } else {
        Observation {
            failure: est.debug.failure.clone().or(Some("invalid estimate".into())),
            estimate: None,
        }
    }
}

/// Simulate the two-phase tracking run described by `scenario`.
pub fn run_tracking(scenario: &Scenario) -> Result<TrackingReport, HarnessError> {
    scenario.validate()?;
    let model = resolve_model(&scenario.model)?;
    let dof = model.dof();
    let dt = scenario.period();
    let ticks = scenario.ticks();
    let offset = scenario.standoff.offset();
    let tol_m = scenario.tracking_tolerance_mm / 1000.0;

    let start_deg = &scenario.approach.start_deg;
    if start_deg.len() != dof {
        return Err(HarnessError::Scenario(format!(
            "approach.start_deg has {} entries, model has {dof} joints",
            start_deg.len()
        )));
    }
    let start = DVector::from_iterator(dof, start_deg.iter().map(|d| d.to_radians()));
    if !model.within_limits(&start) {
        return Err(HarnessError::Scenario("approach start violates joint limits".into()));
    }

    let mut estimator = PoseEstimator::new(scenario.pose.clone());
    let truth0 = scenario.object.motion.pose_at(0.0)?;
    let first = observe(scenario, &mut estimator, &truth0, 0, 0.0);
    let Some(initial) = first.estimate.clone() else {
        return Err(HarnessError::InitialDetection(first.failure.unwrap_or_default()));
    };

    // Phase 1: one plan from the first estimate.
    let approach_target = initial.pose * offset;
    let goal = goal_from_pose(&model, &approach_target, &start, &scenario.solver.params(scenario.seed)?)?;
    let mut planner_params = scenario.planner.clone();
    planner_params.seed = planner_params.seed.wrapping_add(scenario.seed);
    let mut planner_calls = 0usize;
    planner_calls += 1;
    let plan = plan_detailed(&model, &start, &goal, &planner_params, &FreeSpace)?;
    let trajectory = time_parameterize(&plan.path, dt, scenario.approach.speed_rad_s)?;
    let approach_ticks = trajectory.rows.len().min(ticks);

    let servo_params = scenario.servo.params(scenario.seed)?;
    let mut records = Vec::with_capacity(ticks);
    let mut q: JointVector = start.clone();
    let mut target = approach_target;

    for tick in 0..ticks {
        let t = tick as f64 * dt;
        let truth = scenario.object.motion.pose_at(t)?;
        let obs = if tick == 0 {
            first.estimate.clone().map_or(
                Observation {
                    estimate: None,
                    failure: first.failure.clone(),
                },
                |e| Observation {
                    estimate: Some(e),
                    failure: None,
                },
            )
        } else {
            observe(scenario, &mut estimator, &truth, tick, t)
        };

        let (phase, ik) = if tick < approach_ticks {
            q = trajectory.rows[tick].clone();
            (Phase::Approach, None)
        } else {
            if let Some(est) = &obs.estimate {
                target = est.pose * offset;
            }
            let out = solve_ik(&model, &target, &q, &servo_params)?;
            q = out.q;
            let max_step = out.step_history.iter().copied().fold(0.0, f64::max);
            (Phase::Servo, Some((out.status, out.iterations, max_step)))
        };

        let ee = forward_kinematics(&model, &q)?;
        let desired = truth * offset;
        let err = pose_error(&desired, &ee);
        let est_err = obs
            .estimate
            .as_ref()
            .map(|e| (e.pose.translation - truth.translation).norm());
        records.push(TickRecord {
            tick,
            t_s: t,
            phase,
            estimate_valid: obs.estimate.is_some(),
            tracking_valid: est_err.is_some_and(|d| d <= tol_m),
            failure: obs.failure,
            target: pose6(&target),
            estimated: obs.estimate.as_ref().map(|e| pose6(&e.pose)),
            truth: pose6(&truth),
            desired: pose6(&desired),
            q: q.iter().copied().collect(),
            ee: pose6(&ee),
            error: err.0.into(),
            estimate_error_m: est_err,
            ik_status: ik.map(|(s, _, _)| s),
            ik_iterations: ik.map(|(_, n, _)| n),
            ik_max_step_rad: ik.map(|(_, _, m)| m),
        });
    }

    let summary = Summary::from_records(&records, approach_ticks as f64 * dt + TRANSIENT_S);
    let mut report = TrackingReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        model: model.name.clone(),
        rate_hz: scenario.servo_rate_hz,
        dt_s: dt,
        ticks,
        approach: PhaseSpan {
            start_tick: 0,
            end_tick: approach_ticks,
        },
        servo: PhaseSpan {
            start_tick: approach_ticks,
            end_tick: ticks,
        },
        planner: PlannerSummary {
            calls: planner_calls,
            goal: goal.iter().copied().collect(),
            path_cost: plan.path.cost(),
            waypoints: plan.path.waypoints.len(),
            tree_size: plan.tree_size,
            trajectory_ticks: trajectory.rows.len(),
        },
        summary,
        metrics: None,
        records,
    };
    if report.servo.end_tick - report.servo.start_tick >= 2 {
        let (actual, desired, joints) = report.traces();
        report.metrics = Some(evaluate(&actual, &desired, Some(&joints))?);
    }
    Ok(report)
}
