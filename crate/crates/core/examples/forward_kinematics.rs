//! End-effector pose and space Jacobian of the bundled arm.

use nalgebra::DVector;
use servokin::kinematics::{forward_kinematics, space_jacobian};
use servokin::robot_model::default_iiwa14;

fn main() {
    let model = default_iiwa14();
    let q = DVector::from_vec([10.0, -30.0, 20.0, -60.0, 15.0, 45.0, 0.0].map(f64::to_radians).to_vec());
    let pose = forward_kinematics(&model, &q).expect("seven joints");
    let e = pose.euler();
    println!("position  {:.4} {:.4} {:.4} m", pose.translation.x, pose.translation.y, pose.translation.z);
    println!("euler     {:.4} {:.4} {:.4} rad", e.roll, e.pitch, e.yaw);

    let jac = space_jacobian(&model, &q).expect("seven joints");
    println!("space Jacobian (rows vx vy vz wx wy wz):{:.4}", jac.matrix());
    println!("singular values {:?}", jac.singular_values());
}
