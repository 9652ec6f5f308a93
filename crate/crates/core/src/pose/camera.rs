use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::VisionError;

/// Pinhole intrinsics for rectified images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), VisionError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(VisionError::InvalidCamera("focal lengths must be positive".into()));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        if !(self.cx >= 0.0 && self.cx <= w && self.cy >= 0.0 && self.cy <= h) {
            return Err(VisionError::InvalidCamera("principal point outside the image".into()));
        }
        Ok(())
    }

    /// Pixel of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        (p.z > 0.0).then(|| Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Unit-depth ray through a pixel.
    pub fn ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy, 1.0)
    }
}

/// `((u − cx)·d/fx, (v − cy)·d/fy, d)`.
pub fn back_project(
    pixel: &Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, VisionError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(VisionError::InvalidDepth(depth));
    }
    Ok(k.ray(pixel) * depth)
}

/// Row-major depth map in meters. Zero and NaN mark missing samples; the
/// value at integer index `(col, row)` is the depth along the ray through
/// pixel `(u, v) = (col, row)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, VisionError> {
        if data.len() != width * height {
            return Err(VisionError::Format(format!(
                "depth has {} samples, expected {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Depth at integer pixel when present and within `max_range`.
    pub fn valid(&self, col: usize, row: usize, max_range: f64) -> Option<f64> {
        let d = self.get(col, row);
        (d > 0.0 && d.is_finite() && d <= max_range).then_some(d)
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }
}

/// Depth at a subpixel location.
///
/// When the four surrounding samples are valid, inverse depth is
/// interpolated bilinearly (exact on planar surfaces, where inverse depth is
/// affine in pixel coordinates). Otherwise the nearest valid sample within
/// a square patch of the given radius is used, ties broken by smaller row,
/// then smaller column.
pub fn recover_corner_depth(
    depth: &DepthImage,
    pixel: &Vector2<f64>,
    radius: usize,
    max_range: f64,
) -> Result<f64, VisionError> {
    corner_depth_with_source(depth, pixel, radius, max_range).map(|(d, _)| d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthSource {
    Interpolated,
    Patch,
    PlaneFit,
}

pub(crate) fn corner_depth_with_source(
    depth: &DepthImage,
    pixel: &Vector2<f64>,
    radius: usize,
    max_range: f64,
) -> Result<(f64, DepthSource), VisionError> {
    if !depth.contains(pixel) || !pixel.x.is_finite() || !pixel.y.is_finite() {
        return Err(VisionError::PixelOutOfImage(pixel.x, pixel.y));
    }
    if let Some(d) = bilinear_inverse_depth(depth, pixel, max_range) {
        return Ok((d, DepthSource::Interpolated));
    }
    let (c0, r0) = (pixel.x.round() as i64, pixel.y.round() as i64);
    let r = radius as i64;
    let mut best: Option<(i64, i64, i64, f64)> = None;
    for row in (r0 - r).max(0)..=(r0 + r).min(depth.height as i64 - 1) {
        for col in (c0 - r).max(0)..=(c0 + r).min(depth.width as i64 - 1) {
            let Some(d) = depth.valid(col as usize, row as usize, max_range) else {
                continue;
            };
            let d2 = (col - c0).pow(2) + (row - r0).pow(2);
            let key = (d2, row, col);
            if best.is_none_or(|(bd, br, bc, _)| key < (bd, br, bc)) {
                best = Some((d2, row, col, d));
            }
        }
    }
    best.map(|b| (b.3, DepthSource::Patch))
        .ok_or(VisionError::NoValidDepthInPatch(pixel.x, pixel.y))
}

fn bilinear_inverse_depth(depth: &DepthImage, pixel: &Vector2<f64>, max_range: f64) -> Option<f64> {
    let x0 = pixel.x.floor().max(0.0) as usize;
    let y0 = pixel.y.floor().max(0.0) as usize;
    let x1 = (x0 + 1).min(depth.width - 1);
    let y1 = (y0 + 1).min(depth.height - 1);
    let fx = (pixel.x - x0 as f64).clamp(0.0, 1.0);
    let fy = (pixel.y - y0 as f64).clamp(0.0, 1.0);
    let z00 = depth.valid(x0, y0, max_range)?;
    let z10 = depth.valid(x1, y0, max_range)?;
    let z01 = depth.valid(x0, y1, max_range)?;
    let z11 = depth.valid(x1, y1, max_range)?;
    let inv = (1.0 - fy) * ((1.0 - fx) / z00 + fx / z10) + fy * ((1.0 - fx) / z01 + fx / z11);
    Some(1.0 / inv)
}
