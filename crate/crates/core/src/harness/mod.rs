//! Scenario-driven closed-loop simulator: RRT* approach, then DLS visual
//! servoing at a fixed rate against a synthetic camera.

mod report;
mod scenario;
mod synth;
mod tracking;

pub use report::{round_sig9, trace_csv, write_outputs, Pose6, Summary, TickRecord, TrackingReport};
pub use scenario::{
    ApproachDoc, CameraDoc, DampingDoc, ExtrinsicsSpec, Keyframe, LookAt, Motion, ObjectDoc, PoseDoc, Scenario,
    SolverDoc, StandoffDoc,
};
pub use synth::{synth_frame, tick_rng};
pub use tracking::{run_tracking, Phase};

use thiserror::Error;

use crate::ik::IkError;
use crate::kinematics::KinematicsError;
use crate::metrics::MetricsError;
use crate::planner::PlanError;
use crate::pose::VisionError;
use crate::robot_model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial object detection failed: {0}")]
    InitialDetection(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
