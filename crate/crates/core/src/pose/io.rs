use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::{CameraIntrinsics, DepthImage};
use super::estimator::Frame;
use super::homography::Correspondence;
use super::VisionError;
use crate::liegroup::RigidTransform;

/// On-disk frame description; the depth map lives in a separate CSV whose
/// path is relative to the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDoc {
    pub timestamp_s: f64,
    pub object_size_px: [f64; 2],
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: ExtrinsicsDoc,
    pub matches: Vec<[f64; 4]>,
    pub depth: DepthRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicsDoc {
    pub rotation: [[f64; 3]; 3],
    pub translation_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthRef {
    pub encoding: String,
    pub path: String,
}

pub const DEPTH_ENCODING: &str = "csv-f32";

impl ExtrinsicsDoc {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let r = &t.rotation;
        Self {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation_m: [t.translation.x, t.translation.y, t.translation.z],
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform, VisionError> {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        RigidTransform::try_new(r, Vector3::from(self.translation_m))
            .map_err(|_| VisionError::Format("extrinsics rotation is not orthonormal".into()))
    }
}

/// Parse a row-major, comma-separated depth map in meters. Values are read
/// at single precision; `NaN` marks missing samples.
pub fn parse_depth_csv(text: &str, width: usize, height: usize) -> Result<DepthImage, VisionError> {
    let mut data = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        rows += 1;
        let before = data.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| VisionError::Format(format!("depth line {}: bad value {field:?}", line_no + 1)))?;
            data.push(v as f64);
        }
        if data.len() - before != width {
            return Err(VisionError::Format(format!(
                "depth line {} has {} values, expected {width}",
                line_no + 1,
                data.len() - before
            )));
        }
    }
    if rows != height {
        return Err(VisionError::Format(format!("depth has {rows} rows, expected {height}")));
    }
    DepthImage::new(width, height, data)
}

pub fn write_depth_csv(depth: &DepthImage) -> String {
    let mut out = String::with_capacity(depth.data.len() * 8);
    for row in depth.data.chunks(depth.width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&(*v as f32).to_string());
        }
        out.push('\n');
    }
    out
}

/// Read a frame JSON and its depth CSV.
pub fn load_frame(path: &Path) -> Result<Frame, VisionError> {
    let text = fs::read_to_string(path)
        .map_err(|e| VisionError::Format(format!("{}: {e}", path.display())))?;
    let doc: FrameDoc =
        serde_json::from_str(&text).map_err(|e| VisionError::Format(format!("{}: {e}", path.display())))?;
    if doc.depth.encoding != DEPTH_ENCODING {
        return Err(VisionError::Format(format!("unsupported depth encoding {:?}", doc.depth.encoding)));
    }
    let depth_path: PathBuf = path.parent().unwrap_or(Path::new(".")).join(&doc.depth.path);
    let depth_text = fs::read_to_string(&depth_path)
        .map_err(|e| VisionError::Format(format!("{}: {e}", depth_path.display())))?;
    let depth = parse_depth_csv(&depth_text, doc.intrinsics.width, doc.intrinsics.height)?;
    Ok(Frame {
        timestamp_s: doc.timestamp_s,
        object_size_px: doc.object_size_px,
        intrinsics: doc.intrinsics,
        extrinsics: doc.extrinsics.to_transform()?,
        matches: doc
            .matches
            .iter()
            .map(|m| Correspondence::new(m[0], m[1], m[2], m[3]))
            .collect(),
        depth,
    })
}

/// Write `<stem>.json` and `<stem>_depth.csv` into `dir`; returns the JSON
/// path.
pub fn save_frame(frame: &Frame, dir: &Path, stem: &str) -> std::io::Result<PathBuf> {
    let depth_name = format!("{stem}_depth.csv");
    let doc = FrameDoc {
        timestamp_s: frame.timestamp_s,
        object_size_px: frame.object_size_px,
        intrinsics: frame.intrinsics,
        extrinsics: ExtrinsicsDoc::from_transform(&frame.extrinsics),
        matches: frame
            .matches
            .iter()
            .map(|m| [m.template.x, m.template.y, m.image.x, m.image.y])
            .collect(),
        depth: DepthRef {
            encoding: DEPTH_ENCODING.into(),
            path: depth_name.clone(),
        },
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join(&depth_name), write_depth_csv(&frame.depth))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?)?;
    Ok(json)
}
