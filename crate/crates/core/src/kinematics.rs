//! Product-of-exponentials forward kinematics, the screw-theory space
//! Jacobian and Monte-Carlo workspace sampling.

use std::collections::HashSet;
use std::io::{self, Write};

use nalgebra::{DVector, Matrix6xX, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liegroup::{adjoint, skew, twist_exp_unchecked, RigidTransform};
use crate::robot_model::RobotModel;

/// Joint angles in radians, one entry per joint.
pub type JointVector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// 6×n space Jacobian with rows ordered (linear x, y, z; angular x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceJacobian(pub Matrix6xX<f64>);

/// Screw coordinates are (ω; v) everywhere else in the crate; Jacobian rows
/// are (v; ω). This is the only place the two conventions meet.
fn screw_to_rows(s: &Vector6<f64>) -> Vector6<f64> {
    Vector6::new(s[3], s[4], s[5], s[0], s[1], s[2])
}

impl SpaceJacobian {
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Matrix6xX<f64> {
        &self.0
    }

    /// Jacobian mapping joint rates to `(ṗ, ω)` of a point `p` fixed to the
    /// end effector, with `p` expressed in the base frame:
    /// `ṗ = v_s + ω × p`.
    pub fn at_point(&self, p: &Vector3<f64>) -> Matrix6xX<f64> {
        let mut out = self.0.clone();
        let shift = skew(p);
        for c in 0..out.ncols() {
            let w = Vector3::new(self.0[(3, c)], self.0[(4, c)], self.0[(5, c)]);
            let dv = shift * w;
            for r in 0..3 {
                out[(r, c)] -= dv[r];
            }
        }
        out
    }

    /// Singular values, largest first.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Yoshikawa manipulability `√det(J Jᵀ)`.
    pub fn manipulability(&self) -> f64 {
        let jjt = &self.0 * self.0.transpose();
        jjt.determinant().max(0.0).sqrt()
    }
}

/// Base-frame end-effector twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianTwist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

fn check_len(model: &RobotModel, q: &JointVector) -> Result<(), KinematicsError> {
    if q.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: model.dof(),
            got: q.len(),
        });
    }
    Ok(())
}

/// `T(θ) = e^[S₁]θ₁ ⋯ e^[Sₙ]θₙ · N`.
pub fn forward_kinematics(
    model: &RobotModel,
    q: &JointVector,
) -> Result<RigidTransform, KinematicsError> {
    check_len(model, q)?;
    let chain = model
        .joints
        .iter()
        .zip(q.iter())
        .fold(RigidTransform::identity(), |acc, (j, &th)| {
            acc * twist_exp_unchecked(&j.screw, th)
        });
    Ok(chain * model.home)
}

/// Column `i` is `Ad(e^[S₁]θ₁ ⋯ e^[S_{i−1}]θ_{i−1}) Sᵢ`, reordered to
/// (linear; angular) rows.
pub fn space_jacobian(
    model: &RobotModel,
    q: &JointVector,
) -> Result<SpaceJacobian, KinematicsError> {
    check_len(model, q)?;
    let mut jac = Matrix6xX::zeros(model.dof());
    let mut prefix = RigidTransform::identity();
    for (i, (joint, &th)) in model.joints.iter().zip(q.iter()).enumerate() {
        let col = if i == 0 {
            joint.screw.to_vector()
        } else {
            adjoint(&prefix) * joint.screw.to_vector()
        };
        jac.set_column(i, &screw_to_rows(&col));
        prefix = prefix * twist_exp_unchecked(&joint.screw, th);
    }
    Ok(SpaceJacobian(jac))
}

/// Forward kinematics and Jacobian from a single pass over the chain.
pub fn fk_and_jacobian(
    model: &RobotModel,
    q: &JointVector,
) -> Result<(RigidTransform, SpaceJacobian), KinematicsError> {
    check_len(model, q)?;
    let mut jac = Matrix6xX::zeros(model.dof());
    let mut prefix = RigidTransform::identity();
    for (i, (joint, &th)) in model.joints.iter().zip(q.iter()).enumerate() {
        let col = adjoint(&prefix) * joint.screw.to_vector();
        jac.set_column(i, &screw_to_rows(&col));
        prefix = prefix * twist_exp_unchecked(&joint.screw, th);
    }
    Ok((prefix * model.home, SpaceJacobian(jac)))
}

/// `V = J · q̇`.
pub fn ee_twist(
    jacobian: &SpaceJacobian,
    qdot: &DVector<f64>,
) -> Result<CartesianTwist, KinematicsError> {
    if qdot.len() != jacobian.ncols() {
        return Err(KinematicsError::DimensionMismatch {
            expected: jacobian.ncols(),
            got: qdot.len(),
        });
    }
    let v = &jacobian.0 * qdot;
    Ok(CartesianTwist {
        linear: Vector3::new(v[0], v[1], v[2]),
        angular: Vector3::new(v[3], v[4], v[5]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceReport {
    pub samples: usize,
    /// Largest end-effector distance from the base origin, meters.
    pub max_reach: f64,
    /// Occupied voxel count times voxel volume, cubic meters.
    pub volume: f64,
    pub occupied_voxels: usize,
    pub voxel_edge: f64,
    pub seed: u64,
}

/// Samples per RNG substream. Substream `k` is seeded with `seed + k`, so
/// the sample sequence does not depend on how many workers run it.
const WORKSPACE_CHUNK: usize = 4096;

/// Draw `samples` joint vectors uniformly inside the limits and collect the
/// end-effector positions in sample order.
pub fn sample_workspace_points(model: &RobotModel, samples: usize, seed: u64) -> Vec<Vector3<f64>> {
    let chunks = samples.div_ceil(WORKSPACE_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let n = WORKSPACE_CHUNK.min(samples - k * WORKSPACE_CHUNK);
            let mut q = DVector::zeros(model.dof());
            (0..n)
                .map(|_| {
                    for (x, j) in q.iter_mut().zip(&model.joints) {
                        *x = j.lower + (j.upper - j.lower) * rng.random::<f64>();
                    }
                    forward_kinematics(model, &q)
                        .expect("length matches dof")
                        .translation
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect()
}

/// Summarize a point cloud by max reach and voxelized volume.
pub fn summarize_workspace(
    points: &[Vector3<f64>],
    voxel_edge: f64,
    seed: u64,
) -> WorkspaceReport {
    let voxels: HashSet<(i64, i64, i64)> = points
        .iter()
        .map(|p| {
            (
                (p.x / voxel_edge).floor() as i64,
                (p.y / voxel_edge).floor() as i64,
                (p.z / voxel_edge).floor() as i64,
            )
        })
        .collect();
    WorkspaceReport {
        samples: points.len(),
        max_reach: points.iter().map(|p| p.norm()).fold(0.0, f64::max),
        volume: voxels.len() as f64 * voxel_edge.powi(3),
        occupied_voxels: voxels.len(),
        voxel_edge,
        seed,
    }
}

/// Monte-Carlo workspace characterization, uniform in joint space.
///
/// Panics if `samples == 0` or `voxel_edge <= 0`.
pub fn sample_workspace(
    model: &RobotModel,
    samples: usize,
    voxel_edge: f64,
    seed: u64,
) -> WorkspaceReport {
    assert!(samples >= 1, "at least one sample required");
    assert!(voxel_edge > 0.0, "voxel edge must be positive");
    let points = sample_workspace_points(model, samples, seed);
    summarize_workspace(&points, voxel_edge, seed)
}

/// Point cloud as CSV with columns `x_m,y_m,z_m`.
pub fn write_point_cloud_csv<W: Write>(points: &[Vector3<f64>], mut out: W) -> io::Result<()> {
    writeln!(out, "x_m,y_m,z_m")?;
    for p in points {
        writeln!(out, "{:.6},{:.6},{:.6}", p.x, p.y, p.z)?;
    }
    Ok(())
}
