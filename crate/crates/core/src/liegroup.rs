//! Rotation and rigid-transform algebra built on exponential coordinates.
//!
//! Screw coordinates are stored as (angular; linear). Rotations are plain
//! 3x3 matrices that are expected to stay in SO(3); constructors that take
//! untrusted input validate that, the algebra itself does not re-check.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3x3 rotation matrix in SO(3).
pub type Rotation = Matrix3<f64>;

/// Tolerance used when checking unit-norm axes.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    #[error("axis is not unit length (norm {norm})")]
    NonUnitAxis { norm: f64 },
    #[error("invalid screw axis: {0}")]
    InvalidScrew(String),
    #[error("matrix is not a rotation (orthonormality/determinant check failed)")]
    NotARotation,
}

/// Skew-symmetric matrix `[w]` such that `[w] x = w × x`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`skew`] applied to the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// True when `r` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.iter().all(|x| x.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
}

fn check_unit(axis: &Vector3<f64>) -> Result<(), LieError> {
    let norm = axis.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(LieError::NonUnitAxis { norm });
    }
    Ok(())
}

/// Rodrigues' formula: `I + sinθ [ω] + (1 − cosθ) [ω]²`.
pub fn rodrigues_exp(axis: &Vector3<f64>, angle: f64) -> Result<Rotation, LieError> {
    check_unit(axis)?;
    Ok(rodrigues_unchecked(axis, angle))
}

fn rodrigues_unchecked(axis: &Vector3<f64>, angle: f64) -> Rotation {
    let w = skew(axis);
    Matrix3::identity() + w * angle.sin() + w * w * (1.0 - angle.cos())
}

/// Rotation for a rotation vector (axis scaled by angle).
pub fn exp_so3(rotvec: &Vector3<f64>) -> Rotation {
    let angle = rotvec.norm();
    if angle < 1e-15 {
        return Matrix3::identity();
    }
    rodrigues_unchecked(&(rotvec / angle), angle)
}

/// Axis-angle logarithm of a rotation. The angle lies in `[0, π]`; at zero
/// angle the axis is reported as `(0, 0, 1)`.
pub fn rotation_log(r: &Rotation) -> (Vector3<f64>, f64) {
    let skew_part = vee(r);
    let sin = skew_part.norm();
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = sin.atan2(cos);
    if angle < 1e-12 {
        return (Vector3::z(), 0.0);
    }
    if sin > 1e-4 || cos > 0.0 {
        return (skew_part / sin, angle);
    }
    // Near π the skew part vanishes; recover ωωᵀ from the symmetric part
    // using the largest diagonal entry.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos) / (1.0 - cos);
    let k = (0..3)
        .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
        .unwrap_or(2);
    let wk = outer[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::new(outer[(k, 0)], outer[(k, 1)], outer[(k, 2)]) / wk;
    axis[k] = wk;
    axis.normalize_mut();
    if axis.dot(&skew_part) < 0.0 {
        axis = -axis;
    }
    (axis, angle)
}

/// Rotation vector (axis times angle) of `r`.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let (axis, angle) = rotation_log(r);
    axis * angle
}

/// Map an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Zero-pitch (revolute) or pure-translation (prismatic) screw axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScrewAxis {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl ScrewAxis {
    /// Validating constructor.
    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Result<Self, LieError> {
        let s = Self { omega, v };
        s.validate()?;
        Ok(s)
    }

    /// Revolute joint about unit axis `omega` passing through `point`.
    pub fn revolute(omega: Vector3<f64>, point: Vector3<f64>) -> Result<Self, LieError> {
        check_unit(&omega)?;
        Ok(Self {
            omega,
            v: -omega.cross(&point),
        })
    }

    pub fn prismatic(direction: Vector3<f64>) -> Result<Self, LieError> {
        check_unit(&direction)?;
        Ok(Self {
            omega: Vector3::zeros(),
            v: direction,
        })
    }

    pub fn is_prismatic(&self) -> bool {
        self.omega.norm() == 0.0
    }

    pub fn validate(&self) -> Result<(), LieError> {
        if !self.omega.iter().chain(self.v.iter()).all(|x| x.is_finite()) {
            return Err(LieError::InvalidScrew("non-finite component".into()));
        }
        let wn = self.omega.norm();
        if wn == 0.0 {
            if (self.v.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(LieError::InvalidScrew(format!(
                    "prismatic direction norm {} is not 1",
                    self.v.norm()
                )));
            }
        } else if (wn - 1.0).abs() > UNIT_TOLERANCE {
            return Err(LieError::InvalidScrew(format!(
                "angular part norm {wn} is neither 0 nor 1"
            )));
        } else if self.omega.dot(&self.v).abs() > 1e-9 {
            return Err(LieError::InvalidScrew("non-zero pitch".into()));
        }
        Ok(())
    }

    /// Screw coordinates as (ω; v).
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        )
    }

    pub fn from_vector(s: &Vector6<f64>) -> Self {
        Self {
            omega: Vector3::new(s[0], s[1], s[2]),
            v: Vector3::new(s[3], s[4], s[5]),
        }
    }
}

/// Rigid-body transform: `x ↦ R x + p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(p: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), p)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Validating constructor for untrusted rotation input.
    pub fn try_new(rotation: Rotation, translation: Vector3<f64>) -> Result<Self, LieError> {
        if !is_rotation(&rotation, 1e-6) || !translation.iter().all(|x| x.is_finite()) {
            return Err(LieError::NotARotation);
        }
        Ok(Self::new(rotation, translation))
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn euler(&self) -> EulerAngles {
        euler_from_rotation(&self.rotation)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Exponential of a screw motion: rotation by Rodrigues, translation
/// `(Iθ + (1 − cosθ)[ω] + (θ − sinθ)[ω]²) v`; prismatic screws translate by `vθ`.
pub fn twist_exp(screw: &ScrewAxis, angle: f64) -> Result<RigidTransform, LieError> {
    screw.validate()?;
    Ok(twist_exp_unchecked(screw, angle))
}

pub(crate) fn twist_exp_unchecked(screw: &ScrewAxis, angle: f64) -> RigidTransform {
    if screw.is_prismatic() {
        return RigidTransform::from_translation(screw.v * angle);
    }
    let w = skew(&screw.omega);
    let w2 = w * w;
    let (s, c) = angle.sin_cos();
    let rotation = Matrix3::identity() + w * s + w2 * (1.0 - c);
    let g = Matrix3::identity() * angle + w * (1.0 - c) + w2 * (angle - s);
    RigidTransform::new(rotation, g * screw.v)
}

/// Adjoint map `((R, 0), ([p] R, R))` acting on (ω; v) screw coordinates.
pub fn adjoint(t: &RigidTransform) -> Matrix6<f64> {
    let mut ad = Matrix6::zeros();
    let r = &t.rotation;
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    ad.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(skew(&t.translation) * r));
    ad
}

/// Orientation angles with `pitch = atan(j_z)`, `roll = asin(−i_z)` and
/// `yaw = atan2(i_y, i_x)`, where `i, j` are the first two columns of the
/// rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when `|i_z| ≈ 1`; yaw is then pinned to zero and the in-plane
    /// rotation is carried by `pitch`.
    #[serde(default)]
    pub degenerate: bool,
}

impl EulerAngles {
    pub fn to_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

const GIMBAL_TOLERANCE: f64 = 1e-9;

pub fn euler_from_rotation(r: &Rotation) -> EulerAngles {
    let (ix, iy, iz) = (r[(0, 0)], r[(1, 0)], r[(2, 0)]);
    let (jx, jy, jz) = (r[(0, 1)], r[(1, 1)], r[(2, 1)]);
    let roll = wrap_angle((-iz).clamp(-1.0, 1.0).asin());
    if 1.0 - iz.abs() < GIMBAL_TOLERANCE {
        return EulerAngles {
            roll,
            pitch: wrap_angle((-iz * jx).atan2(jy)),
            yaw: 0.0,
            degenerate: true,
        };
    }
    EulerAngles {
        roll,
        pitch: wrap_angle(jz.atan()),
        yaw: wrap_angle(iy.atan2(ix)),
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    /// Truncated power series of a square matrix exponential.
    fn series_exp3(a: &Matrix3<f64>) -> Matrix3<f64> {
        let mut sum = Matrix3::identity();
        let mut term = Matrix3::identity();
        for k in 1..30 {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn series_exp4(a: &Matrix4<f64>) -> Matrix4<f64> {
        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..30 {
            term = term * a / k as f64;
            sum += term;
        }
        sum
    }

    fn max_abs<const R: usize, const C: usize>(
        m: &nalgebra::SMatrix<f64, R, C>,
    ) -> f64 {
        m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    #[test]
    fn rodrigues_examples() {
        let z = Vector3::z();
        assert_eq!(rodrigues_exp(&z, 0.0).unwrap(), Matrix3::identity());
        let r = rodrigues_exp(&z, PI / 2.0).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(max_abs(&(r - expected)) < 1e-15);
        assert!(matches!(
            rodrigues_exp(&Vector3::new(0.0, 0.0, 0.9), 1.0),
            Err(LieError::NonUnitAxis { .. })
        ));
    }

    #[test]
    fn rodrigues_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w = random_unit(&mut rng);
            let th = rng.random_range(-PI..PI);
            let r = rodrigues_exp(&w, th).unwrap();
            let oracle = series_exp3(&(skew(&w) * th));
            assert!(max_abs(&(r - oracle)) < 1e-9);
            let back = rodrigues_exp(&w, -th).unwrap();
            assert!(max_abs(&(r * back - Matrix3::identity())) < 1e-9);
            assert!(is_rotation(&r, 1e-9));
        }
    }

    #[test]
    fn twist_exp_examples() {
        let s = ScrewAxis::prismatic(Vector3::z()).unwrap();
        let t = twist_exp(&s, 0.5).unwrap();
        assert_eq!(t.rotation, Matrix3::identity());
        assert!((t.translation - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-15);

        let q = Vector3::new(0.3, -0.2, 0.7);
        let s = ScrewAxis::revolute(Vector3::new(0.0, 1.0, 0.0), q).unwrap();
        for th in [-2.0, 0.3, 1.7] {
            let moved = twist_exp(&s, th).unwrap().transform_point(&q);
            assert!((moved - q).norm() < 1e-12);
        }
    }

    #[test]
    fn twist_exp_matches_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let w = random_unit(&mut rng);
            let q = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let s = ScrewAxis::revolute(w, q).unwrap();
            let th = rng.random_range(-PI..PI);
            let mut se3 = Matrix4::zeros();
            se3.fixed_view_mut::<3, 3>(0, 0).copy_from(&(skew(&s.omega) * th));
            se3.fixed_view_mut::<3, 1>(0, 3).copy_from(&(s.v * th));
            let oracle = series_exp4(&se3);
            let t = twist_exp(&s, th).unwrap().to_homogeneous();
            assert!(max_abs(&(t - oracle)) < 1e-9);
        }
    }

    #[test]
    fn twist_exp_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = ScrewAxis::revolute(random_unit(&mut rng), Vector3::new(0.1, 0.5, -0.4))
                .unwrap();
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = twist_exp(&s, a).unwrap() * twist_exp(&s, b).unwrap();
            let rhs = twist_exp(&s, a + b).unwrap();
            assert!(max_abs(&(lhs.to_homogeneous() - rhs.to_homogeneous())) < 1e-9);
        }
    }

    #[test]
    fn invalid_screws_rejected() {
        assert!(ScrewAxis::new(Vector3::new(0.0, 0.0, 0.9), Vector3::zeros()).is_err());
        assert!(ScrewAxis::new(Vector3::zeros(), Vector3::new(0.0, 0.5, 0.0)).is_err());
        assert!(ScrewAxis::new(Vector3::z(), Vector3::new(0.0, 0.0, 1.0)).is_err());
        let bad = ScrewAxis {
            omega: Vector3::new(2.0, 0.0, 0.0),
            v: Vector3::zeros(),
        };
        assert!(twist_exp(&bad, 1.0).is_err());
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(adjoint(&RigidTransform::identity()), Matrix6::identity());
        let t = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let s = Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(adjoint(&t) * s, s);
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let w = random_unit(rng);
        RigidTransform::new(
            rodrigues_exp(&w, rng.random_range(-PI..PI)).unwrap(),
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
        )
    }

    #[test]
    fn adjoint_matches_geometric_axis_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let t = random_transform(&mut rng);
            let w = random_unit(&mut rng);
            let q = Vector3::new(0.2, -0.3, 0.9);
            let s = ScrewAxis::revolute(w, q).unwrap();
            // Move the axis direction and a point on it, then rebuild the screw.
            let moved = ScrewAxis::revolute(t.rotation * w, t.transform_point(&q)).unwrap();
            let mapped = adjoint(&t) * s.to_vector();
            assert!((mapped - moved.to_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let lhs = adjoint(&(a * b));
            let rhs = adjoint(&a) * adjoint(&b);
            assert!(max_abs(&(lhs - rhs)) < 1e-12);
            let inv = adjoint(&a.inverse());
            let oracle = adjoint(&a).try_inverse().unwrap();
            assert!(max_abs(&(inv - oracle)) < 1e-8);
        }
    }

    #[test]
    fn rotation_log_examples() {
        let (_, angle) = rotation_log(&Matrix3::identity());
        assert_eq!(angle, 0.0);
        let r = rodrigues_exp(&Vector3::x(), 0.3).unwrap();
        let (axis, angle) = rotation_log(&r);
        assert!((axis - Vector3::x()).norm() < 1e-12);
        assert!((angle - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rotation_log_round_trip_including_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..2000 {
            let w = random_unit(&mut rng);
            let th = if i % 2 == 0 {
                rng.random_range(0.0..PI)
            } else {
                PI - 10f64.powf(rng.random_range(-12.0..-1.0))
            };
            let r = rodrigues_exp(&w, th).unwrap();
            let (axis, angle) = rotation_log(&r);
            assert!((0.0..=PI).contains(&angle));
            let back = rodrigues_exp(&axis, angle).unwrap();
            assert!(max_abs(&(back - r)) < 1e-8, "th={th}");
            if th < PI - 1e-6 {
                assert!((axis - w).norm() < 1e-6);
            }
        }
        let r = rodrigues_exp(&random_unit(&mut rng), PI).unwrap();
        let (axis, angle) = rotation_log(&r);
        assert!(max_abs(&(rodrigues_exp(&axis, angle).unwrap() - r)) < 1e-8);
    }

    #[test]
    fn euler_examples() {
        let e = euler_from_rotation(&Matrix3::identity());
        assert_eq!((e.roll, e.pitch, e.yaw), (0.0, 0.0, 0.0));
        let e = euler_from_rotation(&rodrigues_exp(&Vector3::z(), PI / 2.0).unwrap());
        assert!((e.yaw - PI / 2.0).abs() < 1e-15);
        assert!(e.roll.abs() < 1e-15 && e.pitch.abs() < 1e-15);
        assert!(!e.degenerate);
    }

    #[test]
    fn euler_convention_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let r = random_transform(&mut rng).rotation;
            if 1.0 - r[(2, 0)].abs() < 1e-3 {
                continue;
            }
            let e = euler_from_rotation(&r);
            // Recompose the first column from (roll, yaw) and j_z from pitch.
            let i = Vector3::new(
                e.roll.cos() * e.yaw.cos(),
                e.roll.cos() * e.yaw.sin(),
                -e.roll.sin(),
            );
            let jz = e.pitch.tan();
            assert!((i.y / i.x - r[(1, 0)] / r[(0, 0)]).abs() < 1e-9 * (1.0 + (i.y / i.x).abs()));
            assert!((i - r.column(0)).norm() < 1e-9);
            assert!((jz - r[(2, 1)]).abs() < 1e-9);
        }
    }

    #[test]
    fn euler_gimbal_is_flagged() {
        let r = rodrigues_exp(&Vector3::y(), PI / 2.0).unwrap()
            * rodrigues_exp(&Vector3::x(), 0.4).unwrap();
        let e = euler_from_rotation(&r);
        assert!(e.degenerate);
        assert_eq!(e.yaw, 0.0);
        assert!((e.pitch - 0.4).abs() < 1e-9);
        assert!((e.roll - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_angle(0.2 + 4.0 * PI) - 0.2).abs() < 1e-12);
    }
}
