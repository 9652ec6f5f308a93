//! Smoothness, RMSE and derivative profiles of a noisy minimum-jerk motion.

use nalgebra::{DVector, Vector3};
use servokin::metrics::{evaluate, metrics_csv, CartesianTrace};

fn main() {
    let n = 131;
    let dt = 1.0 / 13.0;
    let quintic = |s: f64| 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
    let desired: Vec<Vector3<f64>> = (0..n)
        .map(|k| Vector3::new(0.3, 0.2, 0.1) * quintic(k as f64 / (n - 1) as f64))
        .collect();
    let actual: Vec<Vector3<f64>> = desired
        .iter()
        .enumerate()
        .map(|(k, p)| p + Vector3::new(1e-3 * (k as f64 * 0.7).sin(), 0.0, 5e-4))
        .collect();
    let flat = vec![Vector3::zeros(); n];
    let trace = |positions| CartesianTrace {
        t0: 0.0,
        dt,
        positions,
        orientations: flat.clone(),
    };
    let joints: Vec<DVector<f64>> = (0..n)
        .map(|k| DVector::from_element(7, quintic(k as f64 / (n - 1) as f64)))
        .collect();
    let report = evaluate(&trace(actual), &trace(desired), Some(&joints)).expect("matching traces");
    print!("{}", metrics_csv(&report));
}
