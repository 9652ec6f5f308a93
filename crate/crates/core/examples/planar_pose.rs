//! Planar-object pose from a synthetic RGB-D frame with noise and outliers.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use servokin::liegroup::{exp_so3, log_so3, RigidTransform};
use servokin::pose::{
    estimate_pose, render_frame, CameraIntrinsics, NoiseModel, PlanarTarget, PoseParams, SceneSpec,
};

fn main() {
    let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let object = RigidTransform::new(flip * exp_so3(&Vector3::new(0.2, -0.15, 0.3)), Vector3::new(0.05, -0.02, 0.9));
    let spec = SceneSpec {
        intrinsics: CameraIntrinsics {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
        },
        camera: RigidTransform::identity(),
        object,
        target: PlanarTarget {
            size_px: [400.0, 300.0],
            size_m: [0.24, 0.18],
        },
        noise: NoiseModel {
            pixel_sigma: 1.0,
            depth_sigma: 0.002,
            outlier_fraction: 0.3,
        },
        grid: 12,
        timestamp_s: 0.0,
    };
    let frame = render_frame(&spec, &mut ChaCha8Rng::seed_from_u64(9)).expect("object in view");
    let est = estimate_pose(&frame.frame, &PoseParams::default());
    println!("valid {} with {}/{} inliers", est.valid, est.inliers, est.matches);
    println!("depth sources {:?}", est.debug.depth_sources);
    println!(
        "translation error {:.2} mm, rotation error {:.3} deg",
        (est.pose.translation - object.translation).norm() * 1e3,
        log_so3(&(object.rotation.transpose() * est.pose.rotation)).norm().to_degrees()
    );
}
