use nalgebra::{Matrix3, Vector3};

use super::estimator::PlanarPoseEstimate;
use super::VisionError;
use crate::liegroup::{euler_from_rotation, exp_so3, log_so3, RigidTransform};

/// Smallest accepted angle between the two in-plane directions, radians.
const MIN_AXIS_ANGLE: f64 = 1e-3;

/// Object frame from the centre point and the two in-plane reference points.
///
/// `i` follows `p_x − p_c`, `k` is the normal `(p_x − p_c) × (p_y − p_c)` and
/// `j = k × i`, so the rotation is orthonormal even when the measured
/// directions are not perpendicular.
pub fn fit_object_frame(
    p_c: &Vector3<f64>,
    p_x: &Vector3<f64>,
    p_y: &Vector3<f64>,
) -> Result<RigidTransform, VisionError> {
    let x = p_x - p_c;
    let y = p_y - p_c;
    let (nx, ny) = (x.norm(), y.norm());
    if !(nx > 0.0 && ny > 0.0) || !nx.is_finite() || !ny.is_finite() {
        return Err(VisionError::CollinearPoints);
    }
    let normal = x.cross(&y);
    let sin = normal.norm() / (nx * ny);
    if !(sin > MIN_AXIS_ANGLE.sin()) {
        return Err(VisionError::CollinearPoints);
    }
    let i = x / nx;
    let k = normal.normalize();
    let j = k.cross(&i);
    Ok(RigidTransform::new(Matrix3::from_columns(&[i, j, k]), *p_c))
}

/// `T_base = E · T_camera`.
pub fn camera_to_base(pose: &RigidTransform, extrinsics: &RigidTransform) -> RigidTransform {
    extrinsics * pose
}

/// Exponential smoothing of translation and geodesic (slerp) smoothing of
/// rotation with weight `lambda` on the incoming sample. The first sample
/// passes through unchanged; invalid samples leave the state untouched.
pub fn temporal_filter(
    previous: Option<&PlanarPoseEstimate>,
    incoming: &PlanarPoseEstimate,
    lambda: f64,
) -> PlanarPoseEstimate {
    let Some(prev) = previous.filter(|p| p.valid) else {
        return incoming.clone();
    };
    if !incoming.valid {
        return incoming.clone();
    }
    let mut out = incoming.clone();
    out.pose = blend(&prev.pose, &incoming.pose, lambda);
    out.euler = euler_from_rotation(&out.pose.rotation);
    out
}

fn blend(old: &RigidTransform, new: &RigidTransform, lambda: f64) -> RigidTransform {
    let translation = new.translation * lambda + old.translation * (1.0 - lambda);
    let delta = log_so3(&(old.rotation.transpose() * new.rotation));
    RigidTransform::new(old.rotation * exp_so3(&(delta * lambda)), translation)
}

/// Per-stream filter state.
#[derive(Debug, Clone)]
pub struct PoseFilter {
    pub lambda: f64,
    last: Option<PlanarPoseEstimate>,
}

impl PoseFilter {
    pub fn new(lambda: f64) -> Self {
        assert!((0.0..=1.0).contains(&lambda), "smoothing must lie in [0, 1]");
        Self { lambda, last: None }
    }

    /// Filter one sample. Invalid samples are returned as-is and do not
    /// disturb the state.
    pub fn update(&mut self, incoming: &PlanarPoseEstimate) -> PlanarPoseEstimate {
        let out = temporal_filter(self.last.as_ref(), incoming, self.lambda);
        if out.valid {
            self.last = Some(out.clone());
        }
        out
    }

    pub fn last(&self) -> Option<&PlanarPoseEstimate> {
        self.last.as_ref()
    }

    pub fn reset(&mut self) {
        self.last = None;
    }
}
