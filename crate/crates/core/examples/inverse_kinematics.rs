//! Damped least squares IK to the pose of a known configuration.

use nalgebra::DVector;
use servokin::ik::{mid_range_seed, solve_ik, DlsParams};
use servokin::kinematics::forward_kinematics;
use servokin::robot_model::default_iiwa14;

fn main() {
    let model = default_iiwa14();
    let truth = DVector::from_vec([40.0, 35.0, -20.0, -80.0, 30.0, 60.0, 10.0].map(f64::to_radians).to_vec());
    let target = forward_kinematics(&model, &truth).expect("seven joints");

    let out = solve_ik(&model, &target, &mid_range_seed(&model), &DlsParams::default()).expect("valid input");
    println!("status {:?} after {} iterations", out.status, out.iterations);
    println!("final error {:.2e}", out.error.norm());
    println!("largest step {:.3} deg", out.step_history.iter().copied().fold(0.0, f64::max).to_degrees());
    let deg: Vec<String> = out.q.iter().map(|x| format!("{:.1}", x.to_degrees())).collect();
    println!("q (deg) {}", deg.join(" "));
}
