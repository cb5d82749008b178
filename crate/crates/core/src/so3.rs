//! Orientation trajectories as unit quaternions.
//!
//! Quaternions are scalar-first, `q = [v, u]`. Orientation demonstrations are
//! moved into a goal-anchored tangent space (`r_t = Log(q̄_t ∗ q_goal)`), learned
//! there as ordinary 3-D trajectories, and mapped back afterwards.
//!
//! The maps here use the half-angle convention: `Exp(r) = [cos‖r‖, sin‖r‖ r/‖r‖]`,
//! so a rotation by angle φ has a rotation vector of norm φ/2.

use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::Trajectory;

const ZERO_AXIS: f64 = 1e-12;
const ANTIPODAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    v: f64,
    u: [f64; 3],
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        v: 1.0,
        u: [0.0, 0.0, 0.0],
    };

    /// Builds a quaternion and renormalizes it.
    pub fn new(v: f64, u: [f64; 3]) -> Result<Self> {
        let norm = (v * v + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Domain(format!("cannot normalize quaternion of norm {norm}")));
        }
        Ok(Self {
            v: v / norm,
            u: [u[0] / norm, u[1] / norm, u[2] / norm],
        })
    }

    /// Parses `[v, x, y, z]`, rejecting inputs whose norm is off by more than
    /// `tolerance`.
    pub fn from_array_checked(q: [f64; 4], tolerance: f64) -> Result<Self> {
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > tolerance {
            return Err(Error::Domain(format!("quaternion norm {norm} is not unit")));
        }
        Self::new(q[0], [q[1], q[2], q[3]])
    }

    /// Rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self> {
        let n = norm3(axis);
        if n < ZERO_AXIS {
            return Err(Error::Domain("rotation axis has zero length".into()));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        Self::new(c, [s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
    }

    pub fn scalar(&self) -> f64 {
        self.v
    }

    pub fn vector(&self) -> [f64; 3] {
        self.u
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.v, self.u[0], self.u[1], self.u[2]]
    }

    pub fn conj(&self) -> Self {
        Self {
            v: self.v,
            u: [-self.u[0], -self.u[1], -self.u[2]],
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            v: -self.v,
            u: [-self.u[0], -self.u[1], -self.u[2]],
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.v * other.v + self.u[0] * other.u[0] + self.u[1] * other.u[1] + self.u[2] * other.u[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotation angle in `[0, 2π]`.
    pub fn angle(&self) -> f64 {
        2.0 * norm3(self.u).atan2(self.v)
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product.
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self, rhs);
        let v = a.v * b.v - (a.u[0] * b.u[0] + a.u[1] * b.u[1] + a.u[2] * b.u[2]);
        let c = cross(a.u, b.u);
        let u = [
            a.v * b.u[0] + b.v * a.u[0] + c[0],
            a.v * b.u[1] + b.v * a.u[1] + c[1],
            a.v * b.u[2] + b.v * a.u[2] + c[2],
        ];
        // Product of unit quaternions; renormalize to stop drift.
        let n = (v * v + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        UnitQuaternion {
            v: v / n,
            u: [u[0] / n, u[1] / n, u[2] / n],
        }
    }
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Tangent-space vector, `‖r‖ < π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationVector(pub [f64; 3]);

impl RotationVector {
    pub fn norm(&self) -> f64 {
        norm3(self.0)
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

/// `Log(q) = arccos(v) · u/‖u‖`, or zero when `‖u‖` vanishes.
///
/// Evaluated as `atan2(‖u‖, v)`, which equals `arccos(v)` on unit
/// quaternions and keeps full precision near the identity.
pub fn log_map(q: &UnitQuaternion) -> Result<RotationVector> {
    let n = norm3(q.u);
    if ((q.v + 1.0).powi(2) + n * n).sqrt() < ANTIPODAL_TOL {
        return Err(Error::Domain("log of the negated identity is undefined".into()));
    }
    if n < ZERO_AXIS {
        return Ok(RotationVector([0.0; 3]));
    }
    let theta = n.atan2(q.v);
    Ok(RotationVector([theta * q.u[0] / n, theta * q.u[1] / n, theta * q.u[2] / n]))
}

/// `Exp(r) = [cos‖r‖, sin‖r‖ · r/‖r‖]`, or the identity for `r = 0`.
pub fn exp_map(r: &RotationVector) -> Result<UnitQuaternion> {
    let n = r.norm();
    if !n.is_finite() || n >= std::f64::consts::PI {
        return Err(Error::Domain(format!("rotation vector norm {n} is not below π")));
    }
    if n == 0.0 {
        return Ok(UnitQuaternion::IDENTITY);
    }
    let (s, c) = n.sin_cos();
    UnitQuaternion::new(c, [s * r.0[0] / n, s * r.0[1] / n, s * r.0[2] / n])
}

/// Flips signs so every consecutive pair lies in the same hemisphere.
pub fn canonicalize(quats: &mut [UnitQuaternion]) {
    for i in 1..quats.len() {
        if quats[i].dot(&quats[i - 1]) < 0.0 {
            quats[i] = quats[i].neg();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionTrajectory {
    quats: Vec<UnitQuaternion>,
    timestamps: Vec<f64>,
}

impl QuaternionTrajectory {
    /// Validates the shape and hemisphere-aligns the sequence.
    pub fn new(mut quats: Vec<UnitQuaternion>, timestamps: Vec<f64>) -> Result<Self> {
        if quats.len() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "needs at least 2 quaternions, got {}",
                quats.len()
            )));
        }
        if quats.len() != timestamps.len() {
            return Err(Error::InvalidTrajectory(format!(
                "{} quaternions but {} timestamps",
                quats.len(),
                timestamps.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTimestamps(i + 1));
        }
        canonicalize(&mut quats);
        Ok(Self { quats, timestamps })
    }

    pub fn quats(&self) -> &[UnitQuaternion] {
        &self.quats
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.quats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quats.is_empty()
    }

    pub fn goal(&self) -> UnitQuaternion {
        *self.quats.last().expect("non-empty by construction")
    }
}

/// `r_t = Log(q̄_t ∗ q_goal)`; the final point is exactly the origin.
pub fn to_tangent_trajectory(qt: &QuaternionTrajectory) -> Result<Trajectory> {
    let goal = qt.goal();
    let last = qt.len() - 1;
    let rows = qt
        .quats
        .iter()
        .enumerate()
        .map(|(t, q)| {
            if t == last {
                Ok(vec![0.0; 3])
            } else {
                log_map(&(q.conj() * goal)).map(|r| r.0.to_vec())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_rows(&rows, qt.timestamps.clone())
}

/// Maps a tangent trajectory back onto orientations anchored at `goal`.
///
/// Inverse of [`to_tangent_trajectory`]: from `Exp(r_t) = q̄_t ∗ q_goal` it
/// follows that `q_t = q_goal ∗ conj(Exp(r_t))`.
pub fn from_tangent_trajectory(rt: &Trajectory, goal: &UnitQuaternion) -> Result<QuaternionTrajectory> {
    if rt.dim() != 3 {
        return Err(Error::DimensionMismatch {
            context: "tangent trajectory",
            expected: 3,
            got: rt.dim(),
        });
    }
    let quats = rt
        .points()
        .outer_iter()
        .map(|p| exp_map(&RotationVector([p[0], p[1], p[2]])).map(|e| *goal * e.conj()))
        .collect::<Result<Vec<_>>>()?;
    QuaternionTrajectory::new(quats, rt.timestamps().to_vec())
}

/// `e_q = 2 · Log(q1 ∗ q̄2)`.
pub fn quat_error(q1: &UnitQuaternion, q2: &UnitQuaternion) -> Result<RotationVector> {
    log_map(&(*q1 * q2.conj())).map(|r| r.scaled(2.0))
}

/// `E_q = 1/(3T) · Σ_t ‖e_q(q_t, q̂_t)‖₁`.
pub fn quat_traj_error(gt: &QuaternionTrajectory, pred: &QuaternionTrajectory) -> Result<f64> {
    if gt.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "trajectories have {} and {} quaternions",
            gt.len(),
            pred.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in gt.quats.iter().zip(&pred.quats) {
        total += quat_error(a, b)?.l1();
    }
    Ok(total / (3.0 * gt.len() as f64))
}
