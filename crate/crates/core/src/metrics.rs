//! Trajectory-quality metrics: smoothness, path length, Cartesian RMSE and
//! per-axis maxima, and per-joint velocity/acceleration/jerk/snap profiles.
//!
//! Every operation is a plain left-to-right reduction so results are
//! reproducible bit for bit.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::wrap_angle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("sequence lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("trajectory has zero length")]
    ZeroLength,
    #[error("sample period must be positive and finite")]
    InvalidPeriod,
    #[error("malformed trajectory file: {0}")]
    Format(String),
}

/// Uniformly sampled end-effector trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianTrace {
    pub t0: f64,
    pub dt: f64,
    pub positions: Vec<Vector3<f64>>,
    /// `(roll, pitch, yaw)` per sample, radians.
    pub orientations: Vec<Vector3<f64>>,
}

impl CartesianTrace {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }
}

/// `Σ √(Δx² + Δy² + Δz²)`.
pub fn trajectory_length(points: &[Vector3<f64>]) -> f64 {
    let mut total = 0.0;
    for w in points.windows(2) {
        let dx = w[1].x - w[0].x;
        let dy = w[1].y - w[0].y;
        let dz = w[1].z - w[0].z;
        total += (dx * dx + dy * dy + dz * dz).sqrt();
    }
    total
}

/// Result of the smoothness metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Smoothness {
    Value(f64),
    /// The jerk integral vanished; the motion is as smooth as possible.
    ZeroJerk,
}

impl Smoothness {
    /// Numeric value, `+∞` for the zero-jerk case.
    pub fn value(&self) -> f64 {
        match self {
            Smoothness::Value(v) => *v,
            Smoothness::ZeroJerk => f64::INFINITY,
        }
    }
}

/// Third derivative of uniformly sampled data. Interior points use the
/// five-point central stencil; the two samples at each end use second-order
/// one-sided stencils.
pub fn third_derivative(f: &[f64], h: f64) -> Result<Vec<f64>, MetricsError> {
    let n = f.len();
    if n < 5 {
        return Err(MetricsError::TooShort { need: 5, got: n });
    }
    let h3 = 2.0 * h * h * h;
    let forward = |i: usize| {
        (-5.0 * f[i] + 18.0 * f[i + 1] - 24.0 * f[i + 2] + 14.0 * f[i + 3] - 3.0 * f[i + 4]) / h3
    };
    let backward = |i: usize| {
        (5.0 * f[i] - 18.0 * f[i - 1] + 24.0 * f[i - 2] - 14.0 * f[i - 3] + 3.0 * f[i - 4]) / h3
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i < 2 {
            forward(i)
        } else if i + 2 >= n {
            backward(i)
        } else {
            (f[i + 2] - 2.0 * f[i + 1] + 2.0 * f[i - 1] - f[i - 2]) / h3
        };
        out.push(d);
    }
    Ok(out)
}

/// `S = 1 / √( ½ ∫ (x‴² + y‴² + z‴²) dt · (t₂ − t₁)⁵ / l² )` with the
/// integral taken by the trapezoid rule.
pub fn smoothness(positions: &[Vector3<f64>], dt: f64) -> Result<Smoothness, MetricsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MetricsError::InvalidPeriod);
    }
    let n = positions.len();
    if n < 5 {
        return Err(MetricsError::TooShort { need: 5, got: n });
    }
    let l = trajectory_length(positions);
    if l == 0.0 {
        return Err(MetricsError::ZeroLength);
    }
    let axis = |k: usize| positions.iter().map(|p| p[k]).collect::<Vec<_>>();
    let jx = third_derivative(&axis(0), dt)?;
    let jy = third_derivative(&axis(1), dt)?;
    let jz = third_derivative(&axis(2), dt)?;
    let g: Vec<f64> = (0..n).map(|i| jx[i] * jx[i] + jy[i] * jy[i] + jz[i] * jz[i]).collect();
    let mut integral = 0.0;
    for w in g.windows(2) {
        integral += 0.5 * (w[0] + w[1]) * dt;
    }
    if integral < 1e-18 {
        return Ok(Smoothness::ZeroJerk);
    }
    let span = dt * (n - 1) as f64;
    let cost = 0.5 * integral * span.powi(5) / (l * l);
    Ok(Smoothness::Value(1.0 / cost.sqrt()))
}

fn same_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::TooShort { need: 1, got: 0 });
    }
    Ok(())
}

/// `√((Σ (Δx² + Δy² + Δz²)) / N)`.
pub fn rmse_position(actual: &[Vector3<f64>], desired: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    same_len(actual.len(), desired.len())?;
    let mut sum = 0.0;
    for (a, d) in actual.iter().zip(desired) {
        let dx = a.x - d.x;
        let dy = a.y - d.y;
        let dz = a.z - d.z;
        sum += dx * dx + dy * dy + dz * dz;
    }
    Ok((sum / actual.len() as f64).sqrt())
}

/// Per-axis RMSE of positions, same units as the input.
pub fn rmse_axes(actual: &[Vector3<f64>], desired: &[Vector3<f64>]) -> Result<[f64; 3], MetricsError> {
    same_len(actual.len(), desired.len())?;
    let mut sums = [0.0; 3];
    for (a, d) in actual.iter().zip(desired) {
        for k in 0..3 {
            let e = a[k] - d[k];
            sums[k] += e * e;
        }
    }
    Ok(sums.map(|s| (s / actual.len() as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationRmse {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// `√((roll² + pitch² + yaw²) / 3)`.
    pub combined: f64,
}

/// RMSE of wrapped roll/pitch/yaw differences, radians.
pub fn rmse_orientation(
    actual: &[Vector3<f64>],
    desired: &[Vector3<f64>],
) -> Result<OrientationRmse, MetricsError> {
    same_len(actual.len(), desired.len())?;
    let mut sums = [0.0; 3];
    for (a, d) in actual.iter().zip(desired) {
        for k in 0..3 {
            let e = wrap_angle(a[k] - d[k]);
            sums[k] += e * e;
        }
    }
    let n = actual.len() as f64;
    let [r, p, y] = sums.map(|s| (s / n).sqrt());
    Ok(OrientationRmse {
        roll: r,
        pitch: p,
        yaw: y,
        combined: ((r * r + p * p + y * y) / 3.0).sqrt(),
    })
}

/// Largest absolute error per axis: `[x, y, z]` in millimeters and
/// `[roll, pitch, yaw]` in degrees (angles wrapped before differencing).
pub fn max_axis_errors(actual: &CartesianTrace, desired: &CartesianTrace) -> Result<[f64; 6], MetricsError> {
    same_len(actual.len(), desired.len())?;
    same_len(actual.orientations.len(), desired.orientations.len())?;
    let mut out = [0.0f64; 6];
    for (a, d) in actual.positions.iter().zip(&desired.positions) {
        for k in 0..3 {
            out[k] = out[k].max(((a[k] - d[k]) * 1000.0).abs());
        }
    }
    for (a, d) in actual.orientations.iter().zip(&desired.orientations) {
        for k in 0..3 {
            out[3 + k] = out[3 + k].max(wrap_angle(a[k] - d[k]).to_degrees().abs());
        }
    }
    Ok(out)
}

/// Per-joint maxima of the finite-difference ladder, in degrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JointProfile {
    /// `max |v(k+1) − v(k)|`, deg/s.
    pub velocity_continuity: f64,
    /// `max |a|`, deg/s².
    pub acceleration: f64,
    /// `max |j|`, deg/s³.
    pub jerk: f64,
    /// `max |s|`, deg/s⁴.
    pub snap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeProfiles {
    pub joints: Vec<JointProfile>,
    /// Fewer than five ticks: unavailable entries are reported as zero.
    pub short_trace: bool,
}

fn diff(x: &[f64], dt: f64) -> Vec<f64> {
    x.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Nested finite differences of each joint column (radians in, degrees
/// out): `v = Δθ/dt`, `a = Δv/dt`, `j = Δa/dt`, `s = Δj/dt`, with
/// `VC = max |Δv|`. Angles are converted with `to_degrees` before
/// differencing.
pub fn derivative_profiles(rows: &[nalgebra::DVector<f64>], dt: f64) -> Result<DerivativeProfiles, MetricsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MetricsError::InvalidPeriod);
    }
    if rows.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: rows.len() });
    }
    let dof = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dof) {
        return Err(MetricsError::LengthMismatch(dof, bad.len()));
    }
    let joints = (0..dof)
        .map(|i| {
            let theta: Vec<f64> = rows.iter().map(|r| r[i].to_degrees()).collect();
            let v = diff(&theta, dt);
            let vc = max_abs(&v.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>());
            let a = diff(&v, dt);
            let j = diff(&a, dt);
            let s = diff(&j, dt);
            JointProfile {
                velocity_continuity: vc,
                acceleration: max_abs(&a),
                jerk: max_abs(&j),
                snap: max_abs(&s),
            }
        })
        .collect();
    Ok(DerivativeProfiles {
        joints,
        short_trace: rows.len() < 5,
    })
}

/// Full nested-difference series per joint, degrees. Entry `k` of the
/// order-`n` series spans ticks `k..=k+n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSeries {
    pub velocity: Vec<Vec<f64>>,
    pub acceleration: Vec<Vec<f64>>,
    pub jerk: Vec<Vec<f64>>,
    pub snap: Vec<Vec<f64>>,
}

pub fn derivative_series(rows: &[nalgebra::DVector<f64>], dt: f64) -> Result<DerivativeSeries, MetricsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MetricsError::InvalidPeriod);
    }
    let dof = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != dof) {
        return Err(MetricsError::LengthMismatch(dof, bad.len()));
    }
    let mut out = DerivativeSeries {
        velocity: Vec::new(),
        acceleration: Vec::new(),
        jerk: Vec::new(),
        snap: Vec::new(),
    };
    for i in 0..dof {
        let theta: Vec<f64> = rows.iter().map(|r| r[i].to_degrees()).collect();
        let v = diff(&theta, dt);
        let a = diff(&v, dt);
        let j = diff(&a, dt);
        let s = diff(&j, dt);
        out.velocity.push(v);
        out.acceleration.push(a);
        out.jerk.push(j);
        out.snap.push(s);
    }
    Ok(out)
}

/// Smoothness of each joint angle treated as a one-dimensional trace.
/// Joints that do not move report `None`.
pub fn joint_smoothness(rows: &[nalgebra::DVector<f64>], dt: f64) -> Result<Vec<Option<Smoothness>>, MetricsError> {
    let dof = rows.first().map_or(0, |r| r.len());
    (0..dof)
        .map(|i| {
            let pts: Vec<_> = rows.iter().map(|r| Vector3::new(r[i], 0.0, 0.0)).collect();
            match smoothness(&pts, dt) {
                Ok(s) => Ok(Some(s)),
                Err(MetricsError::ZeroLength) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Full summary of a tracked motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub trajectory_length_m: f64,
    pub smoothness: Option<Smoothness>,
    pub rmse_position_m: f64,
    pub rmse_axes_m: [f64; 3],
    pub rmse_orientation_rad: OrientationRmse,
    /// `[x, y, z]` mm, `[roll, pitch, yaw]` deg.
    pub max_errors_mm_deg: [f64; 6],
    pub profiles: Option<DerivativeProfiles>,
    pub joint_smoothness: Vec<Option<Smoothness>>,
}

/// Compare an achieved trace with its reference; joint rows (radians) are
/// optional and feed the per-joint profiles.
pub fn evaluate(
    actual: &CartesianTrace,
    desired: &CartesianTrace,
    joints: Option<&[nalgebra::DVector<f64>]>,
) -> Result<MetricsReport, MetricsError> {
    let smooth = match smoothness(&actual.positions, actual.dt) {
        Ok(s) => Some(s),
        Err(MetricsError::ZeroLength | MetricsError::TooShort { .. }) => None,
        Err(e) => return Err(e),
    };
    let (profiles, joint_smooth) = match joints {
        Some(rows) if rows.len() >= 2 => {
            let js = if rows.len() >= 5 { joint_smoothness(rows, actual.dt)? } else { Vec::new() };
            (Some(derivative_profiles(rows, actual.dt)?), js)
        }
        _ => (None, Vec::new()),
    };
    Ok(MetricsReport {
        samples: actual.len(),
        trajectory_length_m: trajectory_length(&actual.positions),
        smoothness: smooth,
        rmse_position_m: rmse_position(&actual.positions, &desired.positions)?,
        rmse_axes_m: rmse_axes(&actual.positions, &desired.positions)?,
        rmse_orientation_rad: rmse_orientation(&actual.orientations, &desired.orientations)?,
        max_errors_mm_deg: max_axis_errors(actual, desired)?,
        profiles,
        joint_smoothness: joint_smooth,
    })
}

/// Nine significant digits.
pub fn fmt9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

/// Table-shaped CSV: one row per metric, columns per Cartesian axis and per
/// joint, blank where a metric does not apply.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let dof = report.profiles.as_ref().map_or(0, |p| p.joints.len());
    let mut out = String::from("metric,unit,x,y,z,roll,pitch,yaw");
    for i in 1..=dof {
        out.push_str(&format!(",q{i}"));
    }
    out.push_str(",overall\n");
    let mut row = |name: &str, unit: &str, cart: Option<[f64; 6]>, joints: Option<Vec<f64>>, overall: Option<f64>| {
        out.push_str(name);
        out.push(',');
        out.push_str(unit);
        for k in 0..6 {
            out.push(',');
            if let Some(c) = cart {
                out.push_str(&fmt9(c[k]));
            }
        }
        for k in 0..dof {
            out.push(',');
            if let Some(j) = &joints {
                out.push_str(&fmt9(j[k]));
            }
        }
        out.push(',');
        if let Some(o) = overall {
            out.push_str(&fmt9(o));
        }
        out.push('\n');
    };
    let o = report.rmse_orientation_rad;
    let ax = report.rmse_axes_m;
    row("max_error", "mm/deg", Some(report.max_errors_mm_deg), None, None);
    row(
        "rmse",
        "mm/deg",
        Some([
            ax[0] * 1000.0,
            ax[1] * 1000.0,
            ax[2] * 1000.0,
            o.roll.to_degrees(),
            o.pitch.to_degrees(),
            o.yaw.to_degrees(),
        ]),
        None,
        None,
    );
    row("rmse_position", "mm", None, None, Some(report.rmse_position_m * 1000.0));
    row("rmse_orientation", "deg", None, None, Some(o.combined.to_degrees()));
    row("trajectory_length", "m", None, None, Some(report.trajectory_length_m));
    row(
        "smoothness_cartesian",
        "1",
        None,
        None,
        Some(report.smoothness.map_or(f64::NAN, |s| s.value())),
    );
    if let Some(p) = &report.profiles {
        let col = |f: fn(&JointProfile) -> f64| Some(p.joints.iter().map(f).collect::<Vec<_>>());
        row("velocity_continuity", "deg/s", None, col(|j| j.velocity_continuity), None);
        row("acceleration_profile", "deg/s^2", None, col(|j| j.acceleration), None);
        row("jerk", "deg/s^3", None, col(|j| j.jerk), None);
        row("snap", "deg/s^4", None, col(|j| j.snap), None);
        if report.joint_smoothness.len() == dof {
            let js = report
                .joint_smoothness
                .iter()
                .map(|s| s.map_or(f64::NAN, |s| s.value()))
                .collect();
            row("smoothness", "1", None, Some(js), None);
        }
    }
    out
}

/// Trajectory CSV with header `t_s,x_m,y_m,z_m,roll_rad,pitch_rad,yaw_rad`
/// followed by optional joint columns `q1..qn`.
pub fn trajectory_csv(trace: &CartesianTrace, joints: Option<&[nalgebra::DVector<f64>]>) -> String {
    let dof = joints.and_then(|j| j.first()).map_or(0, |r| r.len());
    let mut out = String::from("t_s,x_m,y_m,z_m,roll_rad,pitch_rad,yaw_rad");
    for i in 1..=dof {
        out.push_str(&format!(",q{i}"));
    }
    out.push('\n');
    for k in 0..trace.len() {
        let t = trace.t0 + trace.dt * k as f64;
        let p = trace.positions[k];
        let e = trace.orientations[k];
        let mut cells = vec![fmt9(t), fmt9(p.x), fmt9(p.y), fmt9(p.z), fmt9(e.x), fmt9(e.y), fmt9(e.z)];
        if let Some(j) = joints {
            cells.extend(j[k].iter().map(|v| fmt9(*v)));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Joint vectors, one per sample.
pub type JointRows = Vec<nalgebra::DVector<f64>>;

/// Parse a trajectory CSV written by [`trajectory_csv`]. Returns the trace
/// and the joint rows when joint columns are present.
pub fn parse_trajectory_csv(
    text: &str,
) -> Result<(CartesianTrace, Option<JointRows>), MetricsError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| MetricsError::Format("empty file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let want = ["t_s", "x_m", "y_m", "z_m", "roll_rad", "pitch_rad", "yaw_rad"];
    let idx: Vec<usize> = want
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == w)
                .ok_or_else(|| MetricsError::Format(format!("missing column {w}")))
        })
        .collect::<Result<_, _>>()?;
    let mut q_idx = Vec::new();
    while let Some(p) = header.iter().position(|h| *h == format!("q{}", q_idx.len() + 1)) {
        q_idx.push(p);
    }
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut orientations = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| MetricsError::Format(format!("row {}: {e}", n + 1)))?;
        if cells.len() != header.len() {
            return Err(MetricsError::Format(format!("row {} has {} cells", n + 1, cells.len())));
        }
        times.push(cells[idx[0]]);
        positions.push(Vector3::new(cells[idx[1]], cells[idx[2]], cells[idx[3]]));
        orientations.push(Vector3::new(cells[idx[4]], cells[idx[5]], cells[idx[6]]));
        if !q_idx.is_empty() {
            rows.push(nalgebra::DVector::from_iterator(q_idx.len(), q_idx.iter().map(|&i| cells[i])));
        }
    }
    if times.len() < 2 {
        return Err(MetricsError::TooShort { need: 2, got: times.len() });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(MetricsError::InvalidPeriod);
    }
    for (k, t) in times.iter().enumerate() {
        if (t - (times[0] + dt * k as f64)).abs() > 1e-6 * dt.max(1.0) {
            return Err(MetricsError::Format("samples are not uniformly spaced".into()));
        }
    }
    let trace = CartesianTrace {
        t0: times[0],
        dt,
        positions,
        orientations,
    };
    Ok((trace, (!rows.is_empty()).then_some(rows)))
}
