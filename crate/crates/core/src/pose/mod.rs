//! Planar-object pose recovery from feature matches and a depth image.

mod camera;
mod estimator;
mod frame;
mod homography;
mod io;
mod synthetic;

pub use camera::{back_project, recover_corner_depth, CameraIntrinsics, DepthImage, DepthSource};
pub use estimator::{
    estimate_pose, EstimateDebug, Frame, PlanarPoseEstimate, PoseEstimator,
    PoseParams,
};
pub use frame::{camera_to_base, fit_object_frame, temporal_filter, PoseFilter};
pub use homography::{
    estimate_homography_dlt, locate_reference_points, project, ransac_homography,
    symmetric_transfer_error, Correspondence, Homography, RansacParams, RansacResult,
};
pub use io::{load_frame, parse_depth_csv, save_frame, write_depth_csv, DepthRef, ExtrinsicsDoc, FrameDoc};
pub use synthetic::{render_frame, NoiseModel, PlanarTarget, SceneSpec, SyntheticFrame};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisionError {
    #[error("degenerate point configuration")]
    DegenerateConfiguration,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("need at least 4 matches, got {0}")]
    InsufficientMatches(usize),
    #[error("no consensus: best inlier set has {0} matches")]
    NoConsensus(usize),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("no valid depth in the patch around ({0}, {1})")]
    NoValidDepthInPatch(f64, f64),
    #[error("pixel ({0}, {1}) lies outside the image")]
    PixelOutOfImage(f64, f64),
    #[error("reference points are collinear")]
    CollinearPoints,
    #[error("object is not in the camera's field of view")]
    ObjectOutOfView,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid frame file: {0}")]
    Format(String),
}
