use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::time::Duration;

use crate::ik::{Damping, DlsParams};
use crate::liegroup::{exp_so3, log_so3, RigidTransform};
use crate::planner::PlannerParams;
use crate::pose::{CameraIntrinsics, NoiseModel, PlanarTarget, PoseParams};

use super::HarnessError;

/// Closed-loop tracking scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// `iiwa14`, `builtin:iiwa14` or a model file path.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub servo_rate_hz: f64,
    #[serde(default)]
    pub standoff: StandoffDoc,
    pub camera: CameraDoc,
    pub object: ObjectDoc,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Time windows `[start, end)` in seconds during which estimates are
    /// dropped.
    #[serde(default)]
    pub occlusions: Vec<[f64; 2]>,
    #[serde(default)]
    pub approach: ApproachDoc,
    #[serde(default)]
    pub solver: SolverDoc,
    #[serde(default = "SolverDoc::servo")]
    pub servo: SolverDoc,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub pose: PoseParams,
    /// Estimates farther than this from the true object position do not
    /// count as tracked, millimeters.
    #[serde(default = "default_tracking_tolerance")]
    pub tracking_tolerance_mm: f64,
}

fn default_model() -> String {
    "iiwa14".into()
}

fn default_rate() -> f64 {
    13.0
}

fn default_tracking_tolerance() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandoffDoc {
    pub distance_m: f64,
    /// Offset direction in the object frame; the tool z axis is placed
    /// anti-parallel to it.
    pub axis: [f64; 3],
}

impl Default for StandoffDoc {
    fn default() -> Self {
        Self {
            distance_m: 0.15,
            axis: [0.0, 0.0, 1.0],
        }
    }
}

impl StandoffDoc {
    /// Offset transform from the object frame to the grasp-ready tool pose.
    pub fn offset(&self) -> RigidTransform {
        let a = Vector3::from(self.axis).normalize();
        let target = -a;
        let z = Vector3::z();
        let rotation = if (target + z).norm() < 1e-9 {
            // Half turn about x keeps the tool x axis on the object x axis.
            Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
        } else {
            let axis = z.cross(&target);
            let angle = axis.norm().atan2(z.dot(&target));
            if axis.norm() < 1e-12 {
                Matrix3::identity()
            } else {
                exp_so3(&(axis.normalize() * angle))
            }
        };
        RigidTransform::new(rotation, a * self.distance_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: ExtrinsicsSpec,
}

/// Camera pose in the base frame, either explicit or as a look-at.
/// Camera axes follow the optical convention: z forward, x right, y down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExtrinsicsSpec {
    LookAt { look_at: LookAt },
    Explicit {
        rotation: [[f64; 3]; 3],
        translation_m: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookAt {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl ExtrinsicsSpec {
    pub fn transform(&self) -> Result<RigidTransform, HarnessError> {
        match self {
            ExtrinsicsSpec::LookAt { look_at } => {
                let eye = Vector3::from(look_at.eye);
                let fwd = Vector3::from(look_at.target) - eye;
                let up = Vector3::from(look_at.up);
                let right = fwd.cross(&up);
                if fwd.norm() < 1e-9 || right.norm() < 1e-9 * fwd.norm() * up.norm() {
                    return Err(HarnessError::Scenario("look_at: degenerate eye/target/up".into()));
                }
                let z = fwd.normalize();
                let x = right.normalize();
                let y = z.cross(&x);
                Ok(RigidTransform::new(Matrix3::from_columns(&[x, y, z]), eye))
            }
            ExtrinsicsSpec::Explicit {
                rotation,
                translation_m,
            } => RigidTransform::try_new(Matrix3::from_fn(|i, j| rotation[i][j]), Vector3::from(*translation_m))
                .map_err(|_| HarnessError::Scenario("extrinsics rotation is not orthonormal".into())),
        }
    }

    pub fn translated(&self, by: &Vector3<f64>) -> Self {
        let add = |p: &[f64; 3]| [p[0] + by.x, p[1] + by.y, p[2] + by.z];
        match self {
            ExtrinsicsSpec::LookAt { look_at } => ExtrinsicsSpec::LookAt {
                look_at: LookAt {
                    eye: add(&look_at.eye),
                    target: add(&look_at.target),
                    up: look_at.up,
                },
            },
            ExtrinsicsSpec::Explicit {
                rotation,
                translation_m,
            } => ExtrinsicsSpec::Explicit {
                rotation: *rotation,
                translation_m: add(translation_m),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub size_px: [f64; 2],
    pub size_m: [f64; 2],
    /// Template feature grid points per side.
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub motion: Motion,
}

fn default_grid() -> usize {
    12
}

impl ObjectDoc {
    pub fn target(&self) -> PlanarTarget {
        PlanarTarget {
            size_px: self.size_px,
            size_m: self.size_m,
        }
    }
}

/// Pose in the base frame. Orientation is given by `rotation` rows or a
/// rotation vector in degrees; neither means identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDoc {
    pub translation_m: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotvec_deg: Option<[f64; 3]>,
}

impl PoseDoc {
    pub fn transform(&self) -> Result<RigidTransform, HarnessError> {
        let t = Vector3::from(self.translation_m);
        match (&self.rotation, &self.rotvec_deg) {
            (Some(_), Some(_)) => Err(HarnessError::Scenario("give either rotation or rotvec_deg, not both".into())),
            (Some(r), None) => RigidTransform::try_new(Matrix3::from_fn(|i, j| r[i][j]), t)
                .map_err(|_| HarnessError::Scenario("object rotation is not orthonormal".into())),
            (None, Some(v)) => Ok(RigidTransform::new(exp_so3(&(Vector3::from(*v) * (PI / 180.0))), t)),
            (None, None) => Ok(RigidTransform::from_translation(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t_s: f64,
    #[serde(flatten)]
    pub pose: PoseDoc,
}

/// Object motion script in the base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    /// Piecewise-linear translation and geodesic rotation between
    /// keyframes; held constant outside the keyed span.
    Keyframes { keyframes: Vec<Keyframe> },
    /// `center + amplitude · sin(2π f t + phase)` with fixed orientation.
    Sinusoid {
        center: PoseDoc,
        amplitude_m: [f64; 3],
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
}

impl Motion {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            Motion::Keyframes { keyframes } => {
                if keyframes.is_empty() {
                    return Err(HarnessError::Scenario("motion needs at least one keyframe".into()));
                }
                if keyframes.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                    return Err(HarnessError::Scenario("keyframe times must increase".into()));
                }
                for k in keyframes {
                    k.pose.transform()?;
                }
            }
            Motion::Sinusoid { center, frequency_hz, .. } => {
                center.transform()?;
                if !(*frequency_hz >= 0.0) {
                    return Err(HarnessError::Scenario("frequency must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// True object pose at time `t`.
    pub fn pose_at(&self, t: f64) -> Result<RigidTransform, HarnessError> {
        match self {
            Motion::Keyframes { keyframes } => {
                let first = &keyframes[0];
                if t <= first.t_s || keyframes.len() == 1 {
                    return first.pose.transform();
                }
                let last = &keyframes[keyframes.len() - 1];
                if t >= last.t_s {
                    return last.pose.transform();
                }
                let i = keyframes.windows(2).position(|w| t < w[1].t_s).unwrap_or(0);
                let (a, b) = (&keyframes[i], &keyframes[i + 1]);
                let (ta, tb) = (a.pose.transform()?, b.pose.transform()?);
                let u = (t - a.t_s) / (b.t_s - a.t_s);
                let delta = log_so3(&(ta.rotation.transpose() * tb.rotation));
                Ok(RigidTransform::new(
                    ta.rotation * exp_so3(&(delta * u)),
                    ta.translation + (tb.translation - ta.translation) * u,
                ))
            }
            Motion::Sinusoid {
                center,
                amplitude_m,
                frequency_hz,
                phase_rad,
            } => {
                let c = center.transform()?;
                let s = (2.0 * PI * frequency_hz * t + phase_rad).sin();
                Ok(RigidTransform::new(c.rotation, c.translation + Vector3::from(*amplitude_m) * s))
            }
        }
    }

    pub fn translated(&self, by: &Vector3<f64>) -> Self {
        let shift = |p: &PoseDoc| PoseDoc {
            translation_m: [p.translation_m[0] + by.x, p.translation_m[1] + by.y, p.translation_m[2] + by.z],
            ..p.clone()
        };
        match self {
            Motion::Keyframes { keyframes } => Motion::Keyframes {
                keyframes: keyframes
                    .iter()
                    .map(|k| Keyframe {
                        t_s: k.t_s,
                        pose: shift(&k.pose),
                    })
                    .collect(),
            },
            Motion::Sinusoid {
                center,
                amplitude_m,
                frequency_hz,
                phase_rad,
            } => Motion::Sinusoid {
                center: shift(center),
                amplitude_m: *amplitude_m,
                frequency_hz: *frequency_hz,
                phase_rad: *phase_rad,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproachDoc {
    /// Initial joint configuration, degrees.
    pub start_deg: Vec<f64>,
    /// Joint-space path speed during the approach, rad/s.
    pub speed_rad_s: f64,
}

impl Default for ApproachDoc {
    fn default() -> Self {
        Self {
            start_deg: vec![0.0, 30.0, 0.0, -60.0, 0.0, 60.0, 0.0],
            speed_rad_s: 0.5,
        }
    }
}

/// Damping: `"auto"` or a fixed number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DampingDoc {
    Auto(AutoTag),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Solver block: `damping_alpha`, `step_threshold_deg`, `tol`, `max_iters`,
/// `max_ms` (null disables the wall-time cap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverDoc {
    pub damping_alpha: DampingDoc,
    pub step_threshold_deg: f64,
    pub tol: [f64; 6],
    pub max_iters: usize,
    pub max_ms: Option<f64>,
    pub restart_on_local_minimum: bool,
}

impl Default for SolverDoc {
    fn default() -> Self {
        Self {
            damping_alpha: DampingDoc::Auto(AutoTag::Auto),
            step_threshold_deg: 5.0,
            tol: [0.01; 6],
            max_iters: 500,
            max_ms: None,
            restart_on_local_minimum: false,
        }
    }
}

impl SolverDoc {
    /// Per-tick servo budget.
    pub fn servo() -> Self {
        Self {
            tol: [1e-4; 6],
            max_iters: 25,
            ..Self::default()
        }
    }

    pub fn params(&self, restart_seed: u64) -> Result<DlsParams, HarnessError> {
        let damping = match self.damping_alpha {
            DampingDoc::Auto(_) => Damping::Auto,
            DampingDoc::Fixed(a) if a >= 0.0 && a.is_finite() => Damping::Fixed(a),
            DampingDoc::Fixed(_) => return Err(HarnessError::Scenario("damping_alpha must be >= 0".into())),
        };
        let max_time = match self.max_ms {
            None => None,
            Some(ms) if ms > 0.0 && ms.is_finite() => Some(Duration::from_secs_f64(ms / 1000.0)),
            Some(_) => return Err(HarnessError::Scenario("max_ms must be positive".into())),
        };
        Ok(DlsParams {
            damping,
            step_threshold: self.step_threshold_deg.to_radians(),
            tolerance: self.tol,
            max_iterations: self.max_iters,
            max_time,
            restart_on_local_minimum: self.restart_on_local_minimum,
            restart_seed,
            ..DlsParams::default()
        })
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Scenario(m.into()));
        if !(self.servo_rate_hz > 0.0) || !self.servo_rate_hz.is_finite() {
            return bad("servo_rate_hz must be positive");
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return bad("duration_s must be positive");
        }
        if !(self.standoff.distance_m > 0.0) || Vector3::from(self.standoff.axis).norm() < 1e-9 {
            return bad("standoff distance must be positive and its axis non-zero");
        }
        if !(self.approach.speed_rad_s > 0.0) {
            return bad("approach speed must be positive");
        }
        if !(0.0..=1.0).contains(&self.pose.smoothing) {
            return bad("pose smoothing must lie in [0, 1]");
        }
        if self.occlusions.iter().any(|w| !(w[1] >= w[0])) {
            return bad("occlusion windows must be [start, end] with end >= start");
        }
        if !(self.object.size_px.iter().chain(&self.object.size_m).all(|v| *v > 0.0)) {
            return bad("object sizes must be positive");
        }
        self.camera.intrinsics.validate().map_err(|e| HarnessError::Scenario(e.to_string()))?;
        self.camera.extrinsics.transform()?;
        self.object.motion.validate()?;
        self.solver.params(0)?;
        self.servo.params(0)?;
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.servo_rate_hz
    }

    /// Number of control ticks, `round(duration · rate)`, at least 1.
    pub fn ticks(&self) -> usize {
        ((self.duration_s * self.servo_rate_hz).round() as usize).max(1)
    }

    pub fn occluded(&self, t: f64) -> bool {
        self.occlusions.iter().any(|w| t >= w[0] && t < w[1])
    }

    /// The same scene shifted rigidly by `by` (object script and camera).
    pub fn translated(&self, by: &Vector3<f64>) -> Self {
        let mut s = self.clone();
        s.camera.extrinsics = self.camera.extrinsics.translated(by);
        s.object.motion = self.object.motion.translated(by);
        s
    }
}
