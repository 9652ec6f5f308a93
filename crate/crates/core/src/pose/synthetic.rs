use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{CameraIntrinsics, DepthImage};
use super::estimator::Frame;
use super::homography::Correspondence;
use super::VisionError;
use crate::liegroup::RigidTransform;

/// Planar textured rectangle. Template pixel `(u, v)` sits at
/// `(sₓ(u − w/2), −s_y(v − h/2), 0)` in the object frame, so the object
/// x axis points toward increasing `u`, y toward decreasing `v` and z out of
/// the textured face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarTarget {
    pub size_px: [f64; 2],
    pub size_m: [f64; 2],
}

impl PlanarTarget {
    pub fn template_to_object(&self, u: f64, v: f64) -> Vector3<f64> {
        let sx = self.size_m[0] / self.size_px[0];
        let sy = self.size_m[1] / self.size_px[1];
        Vector3::new(sx * (u - self.size_px[0] / 2.0), -sy * (v - self.size_px[1] / 2.0), 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Gaussian noise on matched image coordinates, pixels.
    pub pixel_sigma: f64,
    /// Gaussian noise on every valid depth sample, meters.
    pub depth_sigma: f64,
    /// Fraction of all matches that are uniformly random outliers.
    pub outlier_fraction: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            depth_sigma: 0.0,
            outlier_fraction: 0.0,
        }
    }
}

/// Everything needed to render one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose in the base frame.
    pub camera: RigidTransform,
    /// Object pose in the base frame.
    pub object: RigidTransform,
    pub target: PlanarTarget,
    pub noise: NoiseModel,
    /// Template grid points per side.
    pub grid: usize,
    pub timestamp_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub frame: Frame,
    /// `true` for matches generated from the object, `false` for outliers.
    pub inlier_labels: Vec<bool>,
    /// Object pose in the camera frame.
    pub object_in_camera: RigidTransform,
}

/// Render matches and a depth image of the planar target. The background
/// carries no depth return.
pub fn render_frame(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<SyntheticFrame, VisionError> {
    spec.intrinsics.validate()?;
    let k = &spec.intrinsics;
    let t_co = spec.camera.inverse() * spec.object;
    let centre = t_co.translation;
    if centre.z <= 0.0 || k.project(&centre).is_none_or(|p| !inside(k, &p)) {
        return Err(VisionError::ObjectOutOfView);
    }
    let pixel_noise = normal(spec.noise.pixel_sigma)?;
    let depth_noise = normal(spec.noise.depth_sigma)?;

    let [w, h] = spec.target.size_px;
    let n = spec.grid.max(2);
    let mut matches = Vec::new();
    let mut labels = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let u = w * (a as f64 + 0.5) / n as f64;
            let v = h * (b as f64 + 0.5) / n as f64;
            let p = t_co.transform_point(&spec.target.template_to_object(u, v));
            let Some(px) = k.project(&p) else { continue };
            let px = px + Vector2::new(pixel_noise.sample(rng), pixel_noise.sample(rng));
            if !inside(k, &px) {
                continue;
            }
            matches.push(Correspondence::new(u, v, px.x, px.y));
            labels.push(true);
        }
    }
    if matches.len() < 4 {
        return Err(VisionError::ObjectOutOfView);
    }
    let f = spec.noise.outlier_fraction.clamp(0.0, 0.95);
    let outliers = (matches.len() as f64 * f / (1.0 - f)).round() as usize;
    for _ in 0..outliers {
        matches.push(Correspondence::new(
            rng.random_range(0.0..w),
            rng.random_range(0.0..h),
            rng.random_range(0.0..k.width as f64),
            rng.random_range(0.0..k.height as f64),
        ));
        labels.push(false);
    }

    let normal_c = t_co.rotation.column(2).into_owned();
    let offset = normal_c.dot(&centre);
    let half = [spec.target.size_m[0] / 2.0, spec.target.size_m[1] / 2.0];
    let eps = 1e-12;
    let mut depth = DepthImage::filled(k.width, k.height, 0.0);
    for row in 0..k.height {
        for col in 0..k.width {
            let ray = k.ray(&Vector2::new(col as f64, row as f64));
            let denom = normal_c.dot(&ray);
            if denom.abs() < 1e-12 {
                continue;
            }
            let d = offset / denom;
            if d <= 0.0 {
                continue;
            }
            let local = t_co.rotation.transpose() * (ray * d - centre);
            if local.x.abs() <= half[0] + eps && local.y.abs() <= half[1] + eps {
                depth.set(col, row, d + depth_noise.sample(rng));
            }
        }
    }

    Ok(SyntheticFrame {
        frame: Frame {
            timestamp_s: spec.timestamp_s,
            object_size_px: spec.target.size_px,
            intrinsics: *k,
            extrinsics: spec.camera,
            matches,
            depth,
        },
        inlier_labels: labels,
        object_in_camera: t_co,
    })
}

fn inside(k: &CameraIntrinsics, p: &Vector2<f64>) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (k.width - 1) as f64 && p.y <= (k.height - 1) as f64
}

fn normal(sigma: f64) -> Result<Normal<f64>, VisionError> {
    Normal::new(0.0, sigma.max(0.0)).map_err(|e| VisionError::Format(e.to_string()))
}
