//! Acceptance suite: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Matrix3, Matrix4, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use servokin::harness::{run_tracking, Scenario};
use servokin::ik::{dls_step, mid_range_seed, pose_error, solve_ik, DlsParams, IkStatus};
use servokin::kinematics::{forward_kinematics, space_jacobian};
use servokin::liegroup::{exp_so3, log_so3, RigidTransform};
use servokin::metrics::{
    derivative_profiles, rmse_orientation, rmse_position, smoothness, trajectory_length,
};
use servokin::planner::{plan, PlannerParams};
use servokin::pose::{
    estimate_homography_dlt, estimate_pose, project, ransac_homography, render_frame, CameraIntrinsics,
    Correspondence, Homography, NoiseModel, PlanarTarget, PoseParams, RansacParams, SceneSpec, VisionError,
};
use servokin::robot_model::{default_iiwa14, RobotModel};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_q(model: &RobotModel, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(
        model.dof(),
        model.joints.iter().map(|j| rng.random_range(j.lower..=j.upper)),
    )
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"));
    Scenario::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// `e^M` by its power series, summed until the terms vanish.
fn series_exp(m: &Matrix4<f64>) -> Matrix4<f64> {
    let mut sum = Matrix4::<f64>::identity();
    let mut term = Matrix4::<f64>::identity();
    for k in 1..200 {
        term = term * m / k as f64;
        sum += term;
        if term.abs().max() < 1e-20 {
            break;
        }
    }
    sum
}

fn screw_matrix(omega: &Vector3<f64>, v: &Vector3<f64>, theta: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = -omega.z;
    m[(0, 2)] = omega.y;
    m[(1, 0)] = omega.z;
    m[(1, 2)] = -omega.x;
    m[(2, 0)] = -omega.y;
    m[(2, 1)] = omega.x;
    m[(0, 3)] = v.x;
    m[(1, 3)] = v.y;
    m[(2, 3)] = v.z;
    m * theta
}

fn criterion_1() -> Verdict {
    let model = default_iiwa14();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst_t, mut worst_r) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let q = random_q(&model, &mut rng);
        let fk = forward_kinematics(&model, &q).unwrap();
        let mut oracle = Matrix4::<f64>::identity();
        for (j, th) in model.joints.iter().zip(q.iter()) {
            oracle *= series_exp(&screw_matrix(&j.screw.omega, &j.screw.v, *th));
        }
        oracle *= model.home.to_homogeneous();
        let r: Matrix3<f64> = oracle.fixed_view::<3, 3>(0, 0).into_owned();
        let p: Vector3<f64> = oracle.fixed_view::<3, 1>(0, 3).into_owned();
        worst_t = worst_t.max((fk.translation - p).norm());
        worst_r = worst_r.max(log_so3(&(fk.rotation.transpose() * r)).norm());
    }
    let elapsed = start.elapsed();
    check(
        worst_t <= 1e-9 && worst_r <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("max |Δp| {worst_t:.2e} m, max |Δθ| {worst_r:.2e} rad, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Verdict {
    let model = default_iiwa14();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut first_column_exact = true;
    for _ in 0..200 {
        let q = random_q(&model, &mut rng);
        let jac = space_jacobian(&model, &q).unwrap();
        let t_inv = forward_kinematics(&model, &q).unwrap().inverse().to_homogeneous();
        for i in 0..model.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let tp = forward_kinematics(&model, &qp).unwrap().to_homogeneous();
            let tm = forward_kinematics(&model, &qm).unwrap().to_homogeneous();
            let twist = (tp - tm) / (2.0 * h) * t_inv;
            let numeric = [
                twist[(0, 3)],
                twist[(1, 3)],
                twist[(2, 3)],
                twist[(2, 1)],
                twist[(0, 2)],
                twist[(1, 0)],
            ];
            for (r, n) in numeric.iter().enumerate() {
                worst = worst.max((jac.0[(r, i)] - n).abs());
            }
        }
        let s1 = &model.joints[0].screw;
        let expected = [s1.v.x, s1.v.y, s1.v.z, s1.omega.x, s1.omega.y, s1.omega.z];
        first_column_exact &= (0..6).all(|r| jac.0[(r, 0)] == expected[r]);
    }
    check(
        worst <= 1e-5 && first_column_exact,
        format!("max entry deviation {worst:.2e}, first column equals S1: {first_column_exact}"),
    )
}

fn criterion_3() -> Verdict {
    let model = default_iiwa14();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = DlsParams::default();
    let seed = mid_range_seed(&model);
    let clamp = params.step_threshold + 1e-12;
    let mut converged = 0;
    let mut clamp_ok = true;
    let mut times = Vec::new();
    for _ in 0..100 {
        let target = forward_kinematics(&model, &random_q(&model, &mut rng)).unwrap();
        let start = Instant::now();
        let out = solve_ik(&model, &target, &seed, &params).unwrap();
        times.push(start.elapsed());
        if out.status == IkStatus::Converged && out.error.within(&params.tolerance) {
            converged += 1;
        }
        clamp_ok &= out.step_history.iter().all(|s| *s <= clamp);
    }
    times.sort();
    let median = times[times.len() / 2];
    check(
        converged >= 95 && clamp_ok && median < Duration::from_millis(10),
        format!(
            "{converged}/100 converged, steps within 5°: {clamp_ok}, median {:.2} ms",
            median.as_secs_f64() * 1e3
        ),
    )
}

fn criterion_4() -> Verdict {
    let model = default_iiwa14();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = DlsParams::default();
    let mut found = 0;
    let mut ok = true;
    let mut smallest = 0.0f64;
    while found < 20 {
        let mut q = random_q(&model, &mut rng);
        // Shoulder straight: joints 1 and 3 become coaxial.
        q[1] = 0.0;
        if found % 2 == 1 {
            q[3] = 0.0;
        }
        let sv = space_jacobian(&model, &q).unwrap().singular_values();
        let s_min = *sv.last().unwrap();
        if s_min >= 1e-6 {
            continue;
        }
        found += 1;
        smallest = smallest.max(s_min);
        let target = forward_kinematics(&model, &random_q(&model, &mut rng)).unwrap();
        let pose = forward_kinematics(&model, &q).unwrap();
        let jac = space_jacobian(&model, &q).unwrap().at_point(&pose.translation);
        let e = pose_error(&target, &pose);
        let raw = dls_step(&jac, &e, 1e-4, None).unwrap();
        ok &= raw.iter().all(|x| x.is_finite());
        let out = solve_ik(&model, &target, &q, &params);
        match out {
            Ok(out) => {
                ok &= out.q.iter().all(|x| x.is_finite());
                ok &= out.step_history.iter().all(|s| s.is_finite() && *s <= params.step_threshold + 1e-12);
                ok &= matches!(
                    out.status,
                    IkStatus::Converged | IkStatus::LocalMinimum | IkStatus::TimedOut | IkStatus::MaxIterations
                );
            }
            Err(_) => ok = false,
        }
    }
    check(
        ok,
        format!("{found} configurations with σ_min < 1e-6 (largest {smallest:.1e}); finite clamped steps: {ok}"),
    )
}

fn criterion_5() -> Verdict {
    let model = default_iiwa14();
    let start = DVector::from_vec(vec![0.0, 0.3, 0.0, -1.2, 0.0, 0.8, 0.0]);
    let goal = DVector::from_vec(vec![0.9, 0.6, -0.4, -0.7, 0.3, 1.1, 0.5]);
    let straight = (&goal - &start).norm();
    let params = |n| PlannerParams {
        max_iterations: n,
        seed: 5,
        ..PlannerParams::default()
    };
    let short = plan(&model, &start, &goal, &params(2000)).map_err(|e| e.to_string())?;
    let rerun = plan(&model, &start, &goal, &params(2000)).map_err(|e| e.to_string())?;
    let long = plan(&model, &start, &goal, &params(20_000)).map_err(|e| e.to_string())?;
    let (c2, c20) = (short.cost(), long.cost());
    let ratio = c20 / straight;
    check(
        c20 <= c2 && ratio <= 1.05 && short == rerun,
        format!(
            "cost 2k {c2:.6}, 20k {c20:.6}, straight {straight:.6}, ratio {ratio:.4}, deterministic {}",
            short == rerun
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut recall_sum = 0.0;
    let mut worst_reproj = 0.0f64;
    let mut accepted_outliers = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let m = Matrix3::new(
            rng.random_range(0.8..1.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(50.0..150.0),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.8..1.2),
            rng.random_range(50.0..150.0),
            rng.random_range(-3e-4..3e-4),
            rng.random_range(-3e-4..3e-4),
            1.0,
        );
        let h = Homography::new(m).map_err(|e| e.to_string())?;
        let mut matches = Vec::new();
        for _ in 0..70 {
            let t = Vector2::new(rng.random_range(0.0..400.0), rng.random_range(0.0..300.0));
            let i = project(&h, &t).unwrap();
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
        let params = RansacParams {
            threshold_px: 2.0,
            seed: trial,
            ..RansacParams::default()
        };
        let res = ransac_homography(&matches, &params).map_err(|e| e.to_string())?;
        recall_sum += res.inliers[..70].iter().filter(|b| **b).count() as f64 / 70.0;
        accepted_outliers += res.inliers[70..].iter().filter(|b| **b).count();
        for m in &matches[..70] {
            let p = project(&res.homography, &m.template).unwrap();
            worst_reproj = worst_reproj.max((p - m.image).norm());
        }
    }
    let recall = recall_sum / 100.0;
    let three = [
        Correspondence::new(0.0, 0.0, 1.0, 1.0),
        Correspondence::new(1.0, 0.0, 2.0, 1.0),
        Correspondence::new(0.0, 1.0, 1.0, 2.0),
    ];
    let collinear: Vec<_> = (0..6)
        .map(|k| Correspondence::new(k as f64, 2.0 * k as f64, k as f64 + 1.0, 2.0 * k as f64))
        .collect();
    let rejects = matches!(
        ransac_homography(&three, &RansacParams::default()),
        Err(VisionError::InsufficientMatches(3))
    ) && estimate_homography_dlt(&collinear).is_err()
        && estimate_homography_dlt(&collinear[..4]).is_err();
    check(
        recall >= 0.99 && worst_reproj < 1e-6 && rejects,
        format!(
            "recall {recall:.4}, max inlier reprojection {worst_reproj:.2e} px, outliers accepted {accepted_outliers}, degenerate rejected: {rejects}"
        ),
    )
}

fn criterion_7() -> Verdict {
    let intrinsics = CameraIntrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
    };
    let target = PlanarTarget {
        size_px: [400.0, 300.0],
        size_m: [0.24, 0.18],
    };
    let noise = NoiseModel {
        pixel_sigma: 1.0,
        depth_sigma: 0.002,
        outlier_fraction: 0.3,
    };
    let flip = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tilt = Normal::new(0.0, 0.25).unwrap();
    let mut errors = Vec::new();
    let mut invalid = 0;
    for k in 0..200u64 {
        let axis = Vector3::new(tilt.sample(&mut rng), tilt.sample(&mut rng), rng.random_range(-0.5..0.5));
        let object = RigidTransform::new(
            flip * exp_so3(&axis),
            Vector3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.08..0.08),
                rng.random_range(0.6..1.2),
            ),
        );
        let spec = SceneSpec {
            intrinsics,
            camera: RigidTransform::identity(),
            object,
            target,
            noise,
            grid: 12,
            timestamp_s: k as f64,
        };
        let frame = render_frame(&spec, &mut rng).map_err(|e| e.to_string())?;
        let params = PoseParams {
            ransac: RansacParams {
                seed: k,
                ..RansacParams::default()
            },
            ..PoseParams::default()
        };
        let est = estimate_pose(&frame.frame, &params);
        if est.valid {
            errors.push((est.pose.translation - object.translation).norm());
        } else {
            invalid += 1;
        }
    }
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64 * 1e3;
    let max = errors.iter().copied().fold(0.0, f64::max) * 1e3;
    check(
        mean <= 8.0 && invalid == 0,
        format!("mean translation error {mean:.3} mm, max {max:.2} mm, invalid {invalid}/200"),
    )
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let report = run_tracking(&scenario("static")).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let m = report.metrics.as_ref().ok_or("no servo phase")?;
    let axes_mm = m.rmse_axes_m.map(|x| x * 1e3);
    let o = &m.rmse_orientation_rad;
    let rot_deg = [o.roll, o.pitch, o.yaw].map(f64::to_degrees);
    check(
        axes_mm.iter().all(|x| *x <= 2.0) && rot_deg.iter().all(|x| *x <= 2.0) && elapsed < Duration::from_secs(30),
        format!(
            "RMSE x/y/z {:.3}/{:.3}/{:.3} mm, roll/pitch/yaw {:.3}/{:.3}/{:.3} deg, {:.2} s (scenario proxy)",
            axes_mm[0],
            axes_mm[1],
            axes_mm[2],
            rot_deg[0],
            rot_deg[1],
            rot_deg[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_9() -> Verdict {
    let s = scenario("moving");
    let a = run_tracking(&s).map_err(|e| e.to_string())?;
    let b = run_tracking(&s).map_err(|e| e.to_string())?;
    let fraction = a.summary.tracking_valid_fraction;
    let same = a.to_json() == b.to_json();
    check(
        fraction >= 0.95 && same && a.ticks == 130,
        format!(
            "tracking-valid fraction {fraction:.4} over {} ticks at {} Hz, deterministic {same}",
            a.ticks, a.rate_hz
        ),
    )
}

fn random_trace(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    let mut p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    (0..n)
        .map(|_| {
            p += Vector3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
            p
        })
        .collect()
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut exact = true;
    for _ in 0..100 {
        let n = rng.random_range(6..80);
        let dt = rng.random_range(0.01..0.2);
        let a = random_trace(&mut rng, n);
        let d = random_trace(&mut rng, n);

        let mut len = 0.0;
        for k in 1..n {
            let (dx, dy, dz) = (a[k].x - a[k - 1].x, a[k].y - a[k - 1].y, a[k].z - a[k - 1].z);
            len += (dx * dx + dy * dy + dz * dz).sqrt();
        }
        exact &= trajectory_length(&a).to_bits() == len.to_bits();

        let mut sq = 0.0;
        for k in 0..n {
            let (dx, dy, dz) = (a[k].x - d[k].x, a[k].y - d[k].y, a[k].z - d[k].z);
            sq += dx * dx + dy * dy + dz * dz;
        }
        exact &= rmse_position(&a, &d).unwrap().to_bits() == (sq / n as f64).sqrt().to_bits();

        let small = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let ea: Vec<_> = (0..n).map(|_| small(&mut rng)).collect();
        let ed: Vec<_> = (0..n).map(|_| small(&mut rng)).collect();
        let got = rmse_orientation(&ea, &ed).unwrap();
        for (axis, value) in [got.roll, got.pitch, got.yaw].iter().enumerate() {
            let mut s = 0.0;
            for k in 0..n {
                let e = ea[k][axis] - ed[k][axis];
                s += e * e;
            }
            exact &= value.to_bits() == (s / n as f64).sqrt().to_bits();
        }

        let rows: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_iterator(7, (0..7).map(|_| rng.random_range(-2.0..2.0))))
            .collect();
        let profiles = derivative_profiles(&rows, dt).unwrap();
        for (j, prof) in profiles.joints.iter().enumerate() {
            let th: Vec<f64> = rows.iter().map(|r| r[j].to_degrees()).collect();
            let v: Vec<f64> = (1..th.len()).map(|k| (th[k] - th[k - 1]) / dt).collect();
            let acc: Vec<f64> = (1..v.len()).map(|k| (v[k] - v[k - 1]) / dt).collect();
            let jerk: Vec<f64> = (1..acc.len()).map(|k| (acc[k] - acc[k - 1]) / dt).collect();
            let snap: Vec<f64> = (1..jerk.len()).map(|k| (jerk[k] - jerk[k - 1]) / dt).collect();
            let vc: Vec<f64> = (1..v.len()).map(|k| v[k] - v[k - 1]).collect();
            let mx = |x: &[f64]| x.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            exact &= prof.velocity_continuity.to_bits() == mx(&vc).to_bits()
                && prof.acceleration.to_bits() == mx(&acc).to_bits()
                && prof.jerk.to_bits() == mx(&jerk).to_bits()
                && prof.snap.to_bits() == mx(&snap).to_bits();
        }
    }

    // Minimum-jerk quintic along a line: ∫ x‴² dt = 720 L² / T⁵, so the
    // smoothness is 1/√360 whatever the length and duration.
    let analytic = 1.0 / 360f64.sqrt();
    let mut worst = 0.0f64;
    for (len, dur, n) in [(0.3, 2.0, 401usize), (1.2, 5.0, 1001), (0.05, 0.8, 201)] {
        let dir = Vector3::new(1.0, -2.0, 0.5).normalize();
        let dt = dur / (n - 1) as f64;
        let pts: Vec<_> = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                dir * (len * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5)))
            })
            .collect();
        let got = smoothness(&pts, dt).unwrap().value();
        worst = worst.max((got - analytic).abs() / analytic);
    }
    check(
        exact && worst <= 0.01,
        format!("bitwise oracle agreement {exact}, quintic smoothness relative error {worst:.2e}"),
    )
}

fn criterion_11() -> Verdict {
    let scenario = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/moving.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_servokin"))
            .args(["track", scenario.to_str().unwrap(), "--out", d.path().to_str().unwrap(), "--seed", "11"])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
    }
    let mut same = true;
    for name in ["report.json", "trace.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        same &= a == b;
    }
    check(same, format!("report.json and trace.csv byte-identical across reruns: {same}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("kinematics oracle equivalence", criterion_1),
        ("Jacobian correctness", criterion_2),
        ("DLS convergence", criterion_3),
        ("near-singular stability", criterion_4),
        ("RRT* anytime property", criterion_5),
        ("homography/RANSAC", criterion_6),
        ("pose-pipeline accuracy", criterion_7),
        ("static tracking parity", criterion_8),
        ("moving tracking-valid fraction", criterion_9),
        ("metrics oracle equivalence", criterion_10),
        ("end-to-end determinism", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1)
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
