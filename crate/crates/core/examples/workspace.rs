//! Monte-Carlo reach and voxel volume of the arm's workspace.

use servokin::kinematics::sample_workspace;
use servokin::robot_model::default_iiwa14;

fn main() {
    let model = default_iiwa14();
    for voxel in [0.1, 0.05, 0.025] {
        let r = sample_workspace(&model, 200_000, voxel, 42);
        println!(
            "voxel {:>5.3} m: reach {:.3} m, volume {:.3} m³ over {} voxels",
            voxel, r.max_reach, r.volume, r.occupied_voxels
        );
    }
}
