use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::{back_project, corner_depth_with_source, CameraIntrinsics, DepthImage, DepthSource};
use super::frame::{camera_to_base, fit_object_frame, PoseFilter};
use super::homography::{
    locate_reference_points, project, ransac_homography, Correspondence, Homography, RansacParams,
};
use super::VisionError;
use crate::liegroup::{euler_from_rotation, EulerAngles, RigidTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseParams {
    pub ransac: RansacParams,
    /// Radius of the nearest-valid-depth search, pixels.
    pub patch_radius: usize,
    /// Depths beyond this are treated as missing, meters.
    pub max_range_m: f64,
    /// Weight of the incoming sample in the temporal filter.
    pub smoothing: f64,
    /// Fit a plane to the depth inside the object outline when the patch
    /// search fails.
    pub plane_fallback: bool,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self {
            ransac: RansacParams::default(),
            patch_radius: 5,
            max_range_m: 10.0,
            smoothing: 0.6,
            plane_fallback: true,
        }
    }
}

/// One camera observation of the planar object.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub timestamp_s: f64,
    /// Template width and height, pixels.
    pub object_size_px: [f64; 2],
    pub intrinsics: CameraIntrinsics,
    /// Camera pose in the robot base frame.
    pub extrinsics: RigidTransform,
    pub matches: Vec<Correspondence>,
    pub depth: DepthImage,
}

/// Intermediate quantities kept for inspection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateDebug {
    pub reference_px: Vec<[f64; 2]>,
    pub corners_px: Vec<[f64; 2]>,
    pub depths_m: Vec<f64>,
    pub depth_sources: Vec<DepthSource>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoseEstimate {
    /// Object pose in the robot base frame.
    pub pose: RigidTransform,
    /// Object pose in the camera frame, before filtering.
    pub camera_pose: RigidTransform,
    pub euler: EulerAngles,
    pub inliers: usize,
    pub matches: usize,
    pub valid: bool,
    pub timestamp_s: f64,
    pub debug: EstimateDebug,
}

impl PlanarPoseEstimate {
    /// A valid estimate carrying only a pose.
    pub fn from_pose(pose: RigidTransform, timestamp_s: f64) -> Self {
        Self {
            pose,
            camera_pose: pose,
            euler: euler_from_rotation(&pose.rotation),
            inliers: 4,
            matches: 4,
            valid: true,
            timestamp_s,
            debug: EstimateDebug::default(),
        }
    }

    fn invalid(timestamp_s: f64, matches: usize, inliers: usize, debug: EstimateDebug, why: String) -> Self {
        let mut out = Self::from_pose(RigidTransform::identity(), timestamp_s);
        out.valid = false;
        out.matches = matches;
        out.inliers = inliers;
        out.debug = EstimateDebug {
            failure: Some(why),
            ..debug
        };
        out
    }
}

fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Sign of the corner winding when the quadrilateral is convex and no
/// three corners are nearly collinear.
fn convex_winding(corners: &[Vector2<f64>; 4]) -> Option<f64> {
    let min_sin = 1e-3f64.sin();
    let mut sign = 0.0;
    for i in 0..4 {
        let a = corners[(i + 3) % 4];
        let b = corners[i];
        let c = corners[(i + 1) % 4];
        let (u, v) = (b - a, c - b);
        let z = cross2(&u, &v);
        if z.abs() <= min_sin * u.norm() * v.norm() {
            return None;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return None;
        }
    }
    Some(sign)
}

/// Least-squares fit of inverse depth, affine in pixel coordinates, over
/// the valid samples inside the projected object outline. Returns the
/// coefficients `(a, b, c)` of `1/d = a·u + b·v + c`.
fn fit_depth_plane(
    depth: &DepthImage,
    corners: &[Vector2<f64>; 4],
    winding: f64,
    max_range: f64,
) -> Option<Vector3<f64>> {
    let lo = corners.iter().fold(Vector2::repeat(f64::INFINITY), |m, c| m.inf(c));
    let hi = corners.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |m, c| m.sup(c));
    let c0 = lo.x.ceil().max(0.0) as usize;
    let r0 = lo.y.ceil().max(0.0) as usize;
    let c1 = (hi.x.floor().max(-1.0) as i64).min(depth.width as i64 - 1);
    let r1 = (hi.y.floor().max(-1.0) as i64).min(depth.height as i64 - 1);
    if c1 < c0 as i64 || r1 < r0 as i64 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    let mut count = 0usize;
    for row in r0..=r1 as usize {
        for col in c0..=c1 as usize {
            let p = Vector2::new(col as f64, row as f64);
            let inside = (0..4).all(|i| {
                let a = corners[i];
                let b = corners[(i + 1) % 4];
                winding * cross2(&(b - a), &(p - a)) >= 0.0
            });
            if !inside {
                continue;
            }
            let Some(d) = depth.valid(col, row, max_range) else {
                continue;
            };
            let x = Vector3::new(p.x, p.y, 1.0);
            ata += x * x.transpose();
            atb += x / d;
            count += 1;
        }
    }
    if count < 3 {
        return None;
    }
    ata.lu().solve(&atb).filter(|s| s.iter().all(|v| v.is_finite()))
}

/// Single-frame pose estimate (no temporal filtering).
///
/// Failures of any stage produce an estimate with `valid == false` and the
/// reason in `debug.failure`.
pub fn estimate_pose(frame: &Frame, params: &PoseParams) -> PlanarPoseEstimate {
    let ts = frame.timestamp_s;
    let total = frame.matches.len();
    let mut debug = EstimateDebug::default();
    if let Err(e) = frame.intrinsics.validate() {
        return PlanarPoseEstimate::invalid(ts, total, 0, debug, e.to_string());
    }
    if frame.depth.width != frame.intrinsics.width || frame.depth.height != frame.intrinsics.height {
        return PlanarPoseEstimate::invalid(ts, total, 0, debug, "depth size differs from intrinsics".into());
    }
    let consensus = match ransac_homography(&frame.matches, &params.ransac) {
        Ok(r) => r,
        Err(e) => return PlanarPoseEstimate::invalid(ts, total, 0, debug, e.to_string()),
    };
    let inliers = consensus.inlier_count();
    let h: Homography = consensus.homography;
    let [w, ht] = frame.object_size_px;

    let corner_px: Result<Vec<_>, _> = [(0.0, 0.0), (w, 0.0), (w, ht), (0.0, ht)]
        .iter()
        .map(|&(u, v)| project(&h, &Vector2::new(u, v)))
        .collect();
    let corners = match corner_px {
        Ok(c) => [c[0], c[1], c[2], c[3]],
        Err(e) => return PlanarPoseEstimate::invalid(ts, total, inliers, debug, e.to_string()),
    };
    debug.corners_px = corners.iter().map(|c| [c.x, c.y]).collect();
    let Some(winding) = convex_winding(&corners) else {
        return PlanarPoseEstimate::invalid(ts, total, inliers, debug, "nearly collinear corners".into());
    };

    let refs = match locate_reference_points(w, ht, &h) {
        Ok(r) => r,
        Err(e) => return PlanarPoseEstimate::invalid(ts, total, inliers, debug, e.to_string()),
    };
    debug.reference_px = refs.iter().map(|c| [c.x, c.y]).collect();

    let mut plane: Option<Option<Vector3<f64>>> = None;
    let mut points = Vec::with_capacity(3);
    for px in &refs {
        let direct = corner_depth_with_source(&frame.depth, px, params.patch_radius, params.max_range_m);
        let (d, source) = match direct {
            Ok(found) => found,
            Err(VisionError::NoValidDepthInPatch(..)) if params.plane_fallback => {
                let coeffs = *plane.get_or_insert_with(|| {
                    fit_depth_plane(&frame.depth, &corners, winding, params.max_range_m)
                });
                let d = coeffs.map(|c| 1.0 / (c.x * px.x + c.y * px.y + c.z));
                match d {
                    Some(d) if d > 0.0 && d.is_finite() && d <= params.max_range_m => (d, DepthSource::PlaneFit),
                    _ => {
                        return PlanarPoseEstimate::invalid(ts, total, inliers, debug, "no depth for reference point".into())
                    }
                }
            }
            Err(e) => return PlanarPoseEstimate::invalid(ts, total, inliers, debug, e.to_string()),
        };
        debug.depths_m.push(d);
        debug.depth_sources.push(source);
        match back_project(px, d, &frame.intrinsics) {
            Ok(p) => points.push(p),
            Err(e) => return PlanarPoseEstimate::invalid(ts, total, inliers, debug, e.to_string()),
        }
    }

    let camera_pose = match fit_object_frame(&points[0], &points[1], &points[2]) {
        Ok(t) => t,
        Err(e) => return PlanarPoseEstimate::invalid(ts, total, inliers, debug, e.to_string()),
    };
    let pose = camera_to_base(&camera_pose, &frame.extrinsics);
    PlanarPoseEstimate {
        pose,
        camera_pose,
        euler: euler_from_rotation(&pose.rotation),
        inliers,
        matches: total,
        valid: true,
        timestamp_s: ts,
        debug,
    }
}

/// Frame-by-frame estimator with temporal filtering.
#[derive(Debug, Clone)]
pub struct PoseEstimator {
    pub params: PoseParams,
    filter: PoseFilter,
}

impl PoseEstimator {
    pub fn new(params: PoseParams) -> Self {
        let filter = PoseFilter::new(params.smoothing);
        Self { params, filter }
    }

    /// Estimate and filter. Invalid frames are returned flagged and leave
    /// the filter state unchanged.
    pub fn estimate(&mut self, frame: &Frame) -> PlanarPoseEstimate {
        let raw = estimate_pose(frame, &self.params);
        self.filter.update(&raw)
    }

    pub fn last_valid(&self) -> Option<&PlanarPoseEstimate> {
        self.filter.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{exp_so3, log_so3};
    use crate::pose::synthetic::{render_frame, NoiseModel, PlanarTarget, SceneSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(object_in_camera: RigidTransform) -> SceneSpec {
        SceneSpec {
            intrinsics: CameraIntrinsics {
                fx: 525.0,
                fy: 525.0,
                cx: 319.5,
                cy: 239.5,
                width: 640,
                height: 480,
            },
            camera: RigidTransform::identity(),
            object: object_in_camera,
            target: PlanarTarget {
                size_px: [400.0, 300.0],
                size_m: [0.2, 0.15],
            },
            noise: NoiseModel::default(),
            grid: 12,
            timestamp_s: 0.0,
        }
    }

    /// Object facing the camera: object z toward the camera, x along image u.
    fn facing(t: Vector3<f64>, tilt: Vector3<f64>) -> RigidTransform {
        let base = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        RigidTransform::new(base * exp_so3(&tilt), t)
    }

    fn errors(a: &RigidTransform, b: &RigidTransform) -> (f64, f64) {
        (
            (a.translation - b.translation).norm(),
            log_so3(&(a.rotation.transpose() * b.rotation)).norm(),
        )
    }

    #[test]
    fn exact_fronto_parallel_frame() {
        let truth = facing(Vector3::new(0.0, 0.0, 0.6), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let syn = render_frame(&spec(truth), &mut rng).unwrap();
        let est = estimate_pose(&syn.frame, &PoseParams::default());
        assert!(est.valid, "{:?}", est.debug.failure);
        let (dt, dr) = errors(&est.pose, &truth);
        assert!(dt < 1e-6 && dr < 1e-6, "{dt} {dr}");
    }

    #[test]
    fn exact_tilted_frames_are_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = (0.0f64, 0.0f64);
        for tilt in [Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.0, -0.4, 0.2), Vector3::new(0.25, 0.25, -1.0)] {
            let truth = facing(Vector3::new(0.03, -0.02, 0.7), tilt);
            let syn = render_frame(&spec(truth), &mut rng).unwrap();
            let est = estimate_pose(&syn.frame, &PoseParams::default());
            assert!(est.valid, "{:?}", est.debug.failure);
            let (dt, dr) = errors(&est.pose, &truth);
            worst = (worst.0.max(dt), worst.1.max(dr));
        }
        assert!(worst.0 < 1e-3 && worst.1 < 1e-2, "{worst:?}");
    }

    #[test]
    fn all_invalid_depth_is_flagged() {
        let truth = facing(Vector3::new(0.0, 0.0, 0.6), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut syn = render_frame(&spec(truth), &mut rng).unwrap();
        syn.frame.depth.data.fill(f64::NAN);
        let est = estimate_pose(&syn.frame, &PoseParams::default());
        assert!(!est.valid);
        assert!(est.debug.failure.is_some());
    }

    #[test]
    fn too_few_matches_is_flagged() {
        let truth = facing(Vector3::new(0.0, 0.0, 0.6), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut syn = render_frame(&spec(truth), &mut rng).unwrap();
        syn.frame.matches.truncate(3);
        assert!(!estimate_pose(&syn.frame, &PoseParams::default()).valid);
    }

    #[test]
    fn camera_motion_equivariance() {
        let truth = facing(Vector3::new(0.02, 0.01, 0.65), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = render_frame(&spec(truth), &mut rng).unwrap();
        let a = estimate_pose(&base.frame, &PoseParams::default());
        for x in [
            RigidTransform::new(exp_so3(&Vector3::new(0.0, 0.0, 0.4)), Vector3::new(0.01, -0.02, 0.05)),
            RigidTransform::from_translation(Vector3::new(-0.03, 0.0, -0.1)),
        ] {
            let mut s = spec(truth);
            s.camera = x;
            let moved = render_frame(&s, &mut rng).unwrap();
            let b = estimate_pose(&moved.frame, &PoseParams::default());
            let (dt, dr) = errors(&b.camera_pose, &(x.inverse() * a.camera_pose));
            assert!(dt < 1e-6 && dr < 1e-6, "{dt} {dr}");
        }
    }

    #[test]
    fn out_of_view_is_rejected() {
        let behind = facing(Vector3::new(0.0, 0.0, -0.6), Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(render_frame(&spec(behind), &mut rng).map(|_| ()), Err(VisionError::ObjectOutOfView));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let truth = facing(Vector3::new(0.0, 0.0, 0.6), Vector3::new(0.1, 0.0, 0.0));
        let mut s = spec(truth);
        s.noise = NoiseModel {
            pixel_sigma: 1.0,
            depth_sigma: 0.002,
            outlier_fraction: 0.3,
        };
        let a = render_frame(&s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = render_frame(&s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plane_fallback_covers_missing_reference_depth() {
        let truth = facing(Vector3::new(0.0, 0.0, 0.6), Vector3::new(0.2, 0.1, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut syn = render_frame(&spec(truth), &mut rng).unwrap();
        let clean = estimate_pose(&syn.frame, &PoseParams::default());
        let [cu, cv] = clean.debug.reference_px[0];
        for row in 0..480usize {
            for col in 0..640usize {
                if (col as f64 - cu).abs() < 12.0 && (row as f64 - cv).abs() < 12.0 {
                    syn.frame.depth.set(col, row, 0.0);
                }
            }
        }
        let est = estimate_pose(&syn.frame, &PoseParams::default());
        assert!(est.valid);
        assert_eq!(est.debug.depth_sources[0], DepthSource::PlaneFit);
        let (dt, _) = errors(&est.pose, &truth);
        assert!(dt < 1e-3, "{dt}");
        let strict = PoseParams {
            plane_fallback: false,
            ..PoseParams::default()
        };
        assert!(!estimate_pose(&syn.frame, &strict).valid);
    }
}
