//! RRT* from a start configuration to the IK solution of a pose, then a
//! constant-speed resampling at 13 Hz.

use nalgebra::{DVector, Matrix3, Vector3};
use servokin::ik::DlsParams;
use servokin::liegroup::RigidTransform;
use servokin::planner::{goal_from_pose, plan_detailed, time_parameterize, FreeSpace, PlannerParams};
use servokin::robot_model::default_iiwa14;

fn main() {
    let model = default_iiwa14();
    let start = DVector::from_vec([0.0, 30.0, 0.0, -60.0, 0.0, 60.0, 0.0].map(f64::to_radians).to_vec());
    // Tool pointing along +x, 0.95 m in front of the base.
    let facing = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let target = RigidTransform::new(facing, Vector3::new(0.95, 0.0, 0.7));
    let ik = DlsParams {
        max_time: None,
        ..DlsParams::default()
    };
    let goal = goal_from_pose(&model, &target, &start, &ik).expect("reachable pose");

    let params = PlannerParams {
        max_iterations: 3000,
        seed: 1,
        ..PlannerParams::default()
    };
    let report = plan_detailed(&model, &start, &goal, &params, &FreeSpace).expect("free space");
    println!(
        "path cost {:.4} rad (straight line {:.4}), {} waypoints, tree {}",
        report.path.cost(),
        (&goal - &start).norm(),
        report.path.waypoints.len(),
        report.tree_size
    );
    let traj = time_parameterize(&report.path, 1.0 / 13.0, 0.5).expect("valid path");
    println!("{} ticks, {:.2} s at 0.5 rad/s", traj.rows.len(), traj.duration());
}
