use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ik::IkStatus;
use crate::liegroup::{euler_from_rotation, RigidTransform};
use crate::metrics::{derivative_series, fmt9, metrics_csv, trajectory_csv, CartesianTrace, MetricsReport};

use super::{HarnessError, Phase};

/// `[x, y, z]` meters then `[roll, pitch, yaw]` radians.
pub type Pose6 = [f64; 6];

pub(crate) fn pose6(t: &RigidTransform) -> Pose6 {
    let e = euler_from_rotation(&t.rotation);
    [t.translation.x, t.translation.y, t.translation.z, e.roll, e.pitch, e.yaw]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub t_s: f64,
    pub phase: Phase,
    pub estimate_valid: bool,
    /// Valid estimate within the tracking tolerance of the true object.
    pub tracking_valid: bool,
    pub failure: Option<String>,
    /// Commanded tool pose.
    pub target: Pose6,
    /// Filtered object estimate, base frame.
    pub estimated: Option<Pose6>,
    /// True object pose.
    pub truth: Pose6,
    /// Standoff pose computed from the true object.
    pub desired: Pose6,
    pub q: Vec<f64>,
    pub ee: Pose6,
    /// Pose error of the end effector against `desired` (translation, then
    /// rotation vector).
    pub error: [f64; 6],
    pub estimate_error_m: Option<f64>,
    pub ik_status: Option<IkStatus>,
    pub ik_iterations: Option<usize>,
    /// Largest single-iteration joint increment during the tick's solve.
    pub ik_max_step_rad: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub start_tick: usize,
    /// Exclusive.
    pub end_tick: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    /// Planner invocations over the whole run.
    pub calls: usize,
    pub goal: Vec<f64>,
    pub path_cost: f64,
    pub waypoints: usize,
    pub tree_size: usize,
    pub trajectory_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub valid_estimates: usize,
    /// Share of all ticks whose estimate is valid and accurate.
    pub tracking_valid_fraction: f64,
    pub tracking_valid_fraction_servo: Option<f64>,
    pub mean_estimate_error_mm: Option<f64>,
    pub max_estimate_error_mm: Option<f64>,
    /// Largest absolute error components after the servo transient.
    pub steady_state_max_error: Option<[f64; 6]>,
    pub steady_state_ticks: usize,
    pub final_error: [f64; 6],
    pub servo_ik_converged: usize,
}

impl Summary {
    pub(crate) fn from_records(records: &[TickRecord], steady_from_s: f64) -> Self {
        let n = records.len().max(1) as f64;
        let valid = records.iter().filter(|r| r.estimate_valid).count();
        let tracked = records.iter().filter(|r| r.tracking_valid).count();
        let servo: Vec<_> = records.iter().filter(|r| r.phase == Phase::Servo).collect();
        let errs: Vec<f64> = records.iter().filter_map(|r| r.estimate_error_m).collect();
        let steady: Vec<_> = servo.iter().filter(|r| r.t_s >= steady_from_s - 1e-9).collect();
        let steady_max = (!steady.is_empty()).then(|| {
            let mut m = [0.0f64; 6];
            for r in &steady {
                for (k, e) in r.error.iter().enumerate() {
                    m[k] = m[k].max(e.abs());
                }
            }
            m
        });
        Self {
            valid_estimates: valid,
            tracking_valid_fraction: tracked as f64 / n,
            tracking_valid_fraction_servo: (!servo.is_empty())
                .then(|| servo.iter().filter(|r| r.tracking_valid).count() as f64 / servo.len() as f64),
            mean_estimate_error_mm: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64 * 1e3),
            max_estimate_error_mm: errs.iter().copied().reduce(f64::max).map(|e| e * 1e3),
            steady_state_max_error: steady_max,
            steady_state_ticks: steady.len(),
            final_error: records.last().map_or([0.0; 6], |r| r.error),
            servo_ik_converged: servo
                .iter()
                .filter(|r| r.ik_status == Some(IkStatus::Converged))
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub scenario: String,
    pub seed: u64,
    pub model: String,
    pub rate_hz: f64,
    pub dt_s: f64,
    pub ticks: usize,
    pub approach: PhaseSpan,
    pub servo: PhaseSpan,
    pub planner: PlannerSummary,
    pub summary: Summary,
    /// Servo-phase metrics against the standoff of the true object.
    pub metrics: Option<MetricsReport>,
    pub records: Vec<TickRecord>,
}

impl TrackingReport {
    pub fn servo_records(&self) -> &[TickRecord] {
        &self.records[self.servo.start_tick..self.servo.end_tick]
    }

    pub(crate) fn traces(&self) -> (CartesianTrace, CartesianTrace, Vec<DVector<f64>>) {
        let servo = self.servo_records();
        let trace = |f: fn(&TickRecord) -> Pose6| CartesianTrace {
            t0: servo.first().map_or(0.0, |r| r.t_s),
            dt: self.dt_s,
            positions: servo.iter().map(f).map(|p| [p[0], p[1], p[2]].into()).collect(),
            orientations: servo.iter().map(f).map(|p| [p[3], p[4], p[5]].into()).collect(),
        };
        let joints = servo.iter().map(|r| DVector::from_column_slice(&r.q)).collect();
        (trace(|r| r.ee), trace(|r| r.desired), joints)
    }

    /// Pretty JSON with every float rounded to nine significant digits.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        round_sig9(&mut v);
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Round every float in a JSON tree to nine significant digits.
pub fn round_sig9(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(0.0);
            let r: f64 = fmt9(x).parse().unwrap_or(x);
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_sig9),
        Value::Object(o) => o.values_mut().for_each(round_sig9),
        _ => {}
    }
}

fn pose_header(prefix: &str) -> String {
    ["x", "y", "z", "roll", "pitch", "yaw"]
        .iter()
        .map(|a| format!("{prefix}_{a}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Per-tick CSV: `tick,t_s,phase,valid`, commanded target pose, estimated
/// object pose (NaN when invalid), joints, end-effector pose and the six
/// error components. `phase` is 0 for approach, 1 for servo.
pub fn trace_csv(report: &TrackingReport) -> String {
    let dof = report.records.first().map_or(0, |r| r.q.len());
    let mut header = vec![
        "tick".to_string(),
        "t_s".into(),
        "phase".into(),
        "valid".into(),
        pose_header("target"),
        pose_header("est"),
    ];
    header.extend((1..=dof).map(|i| format!("q{i}")));
    header.push(pose_header("ee"));
    header.push("err_x,err_y,err_z,err_rx,err_ry,err_rz".into());
    let mut out = header.join(",");
    out.push('\n');
    for r in &report.records {
        let mut cells = vec![
            r.tick.to_string(),
            fmt9(r.t_s),
            if r.phase == Phase::Servo { "1" } else { "0" }.into(),
            (r.estimate_valid as u8).to_string(),
        ];
        cells.extend(r.target.iter().map(|v| fmt9(*v)));
        cells.extend(r.estimated.unwrap_or([f64::NAN; 6]).iter().map(|v| fmt9(*v)));
        cells.extend(r.q.iter().map(|v| fmt9(*v)));
        cells.extend(r.ee.iter().map(|v| fmt9(*v)));
        cells.extend(r.error.iter().map(|v| fmt9(*v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `tick,t_s,q1..qn` where row `k` of an order-`n` series is stamped with
/// the last tick it spans.
fn series_csv(series: &[Vec<f64>], order: usize, dt: f64) -> String {
    let dof = series.len();
    let mut out = String::from("tick,t_s");
    for i in 1..=dof {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    let len = series.first().map_or(0, |s| s.len());
    for k in 0..len {
        let tick = k + order;
        let mut cells = vec![tick.to_string(), fmt9(tick as f64 * dt)];
        cells.extend(series.iter().map(|s| fmt9(s[k])));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write the report and its plot data into `dir`; returns the file paths.
pub fn write_outputs(report: &TrackingReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), HarnessError> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.push(p);
        Ok(())
    };
    put("report.json", report.to_json())?;
    put("trace.csv", trace_csv(report))?;
    if let Some(m) = &report.metrics {
        put("metrics.csv", metrics_csv(m))?;
    }
    let (actual, desired, joints) = report.traces();
    put("actual.csv", trajectory_csv(&actual, Some(&joints)))?;
    put("desired.csv", trajectory_csv(&desired, None))?;

    let all: Vec<DVector<f64>> = report.records.iter().map(|r| DVector::from_column_slice(&r.q)).collect();
    let s = derivative_series(&all, report.dt_s)?;
    put("velocity.csv", series_csv(&s.velocity, 1, report.dt_s))?;
    put("acceleration.csv", series_csv(&s.acceleration, 2, report.dt_s))?;
    put("jerk.csv", series_csv(&s.jerk, 3, report.dt_s))?;
    put("snap.csv", series_csv(&s.snap, 4, report.dt_s))?;
    Ok(files)
}
