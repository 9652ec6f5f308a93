//! RANSAC homography on matches with 30% random outliers.

use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use servokin::pose::{project, ransac_homography, Correspondence, Homography, RansacParams};

fn main() {
    let truth = Homography::new(Matrix3::new(0.9, 0.1, 120.0, -0.05, 1.1, 80.0, 1e-4, -2e-4, 1.0)).expect("invertible");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut matches = Vec::new();
    for _ in 0..70 {
        let t = Vector2::new(rng.random_range(0.0..400.0), rng.random_range(0.0..300.0));
        let i = project(&truth, &t).expect("finite");
        matches.push(Correspondence::new(t.x, t.y, i.x, i.y));
    }
    for _ in 0..30 {
        matches.push(Correspondence::new(
            rng.random_range(0.0..400.0),
            rng.random_range(0.0..300.0),
            rng.random_range(0.0..640.0),
            rng.random_range(0.0..480.0),
        ));
    }
    let result = ransac_homography(&matches, &RansacParams::default()).expect("consensus");
    println!("{} inliers after {} trials", result.inlier_count(), result.trials);
    let worst = matches[..70]
        .iter()
        .map(|m| (project(&result.homography, &m.template).unwrap() - m.image).norm())
        .fold(0.0, f64::max);
    println!("worst inlier reprojection {worst:.2e} px");
}
