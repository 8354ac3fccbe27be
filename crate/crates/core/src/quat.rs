//! Hamilton quaternions stored as `(w, x, y, z)`.
//!
//! Unit quaternions encode rotations; pure quaternions (`w == 0`) encode
//! 3-vectors. The 4x4 matrix forms turn products into matrix-vector products
//! and are what the network layers lower to.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Result};
use crate::series;
use crate::vec3::{Mat3, Vec3};

/// Tolerance used when a unit quaternion is a precondition.
pub const UNIT_TOLERANCE: f64 = 1e-9;

pub type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: Vec3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_parts(w: f64, v: Vec3) -> Self {
        Self::new(w, v.x, v.y, v.z)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn is_pure(&self) -> bool {
        self.w == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, o: &Quaternion) -> f64 {
        self.to_array()
            .iter()
            .zip(o.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return degenerate("cannot normalize a zero or non-finite quaternion");
        }
        Ok(*self * (1.0 / n))
    }

    /// Rotation by `theta` radians about the unit axis `axis`.
    pub fn from_axis_angle(axis: Vec3, theta: f64) -> Result<Self> {
        if (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return degenerate(format!("rotation axis has norm {}", axis.norm()));
        }
        let half = 0.5 * theta;
        Ok(Self::from_parts(half.cos(), axis * half.sin()))
    }

    /// `q p q*` for a pure quaternion `p`.
    pub fn rotate_point(&self, p: Quaternion) -> Result<Quaternion> {
        if !self.is_unit(UNIT_TOLERANCE) {
            return degenerate(format!("rotation quaternion has norm {}", self.norm()));
        }
        if !p.is_pure() {
            return degenerate("rotated point must be a pure quaternion");
        }
        let mut r = *self * p * self.conj();
        r.w = 0.0;
        Ok(r)
    }

    /// Vector convenience wrapper around [`Quaternion::rotate_point`].
    pub fn rotate(&self, v: Vec3) -> Result<Vec3> {
        Ok(self.rotate_point(Quaternion::pure(v))?.vector())
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rotation_matrix(&self) -> Mat3 {
        let Quaternion { w, x, y, z } = *self;
        Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// `[[q]]_L` with `[[p]]_L vec(q) == vec(p q)`.
    pub fn left_matrix(&self) -> Mat4 {
        let Quaternion { w, x, y, z } = *self;
        [[w, -x, -y, -z], [x, w, -z, y], [y, z, w, -x], [z, -y, x, w]]
    }

    /// `[[q]]_R` with `[[q]]_R vec(p) == vec(p q)`.
    pub fn right_matrix(&self) -> Mat4 {
        let Quaternion { w, x, y, z } = *self;
        [[w, -x, -y, -z], [x, w, z, -y], [y, -z, w, x], [z, y, -x, w]]
    }

    /// `[[q]]_L^*`, the left matrix of the conjugate.
    pub fn left_conj_matrix(&self) -> Mat4 {
        let Quaternion { w, x, y, z } = *self;
        [[w, x, y, z], [-x, w, z, -y], [-y, -z, w, x], [-z, y, -x, w]]
    }

    /// `[[q]]_R^*`, the right matrix of the conjugate.
    pub fn right_conj_matrix(&self) -> Mat4 {
        let Quaternion { w, x, y, z } = *self;
        [[w, x, y, z], [-x, w, -z, y], [-y, z, w, -x], [-z, -y, x, w]]
    }

    /// `e^w (cos|v| + sin|v|/|v| v)`.
    pub fn exp(&self) -> Quaternion {
        let v = self.vector();
        let phi = v.norm();
        let scale = self.w.exp();
        Quaternion::from_parts(scale * phi.cos(), v * (scale * series::sinc(phi)))
    }

    /// Principal logarithm. Quaternions with negative scalar part are first
    /// mapped to their antipode, which encodes the same rotation.
    pub fn ln(&self) -> Result<Quaternion> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return degenerate("logarithm of a zero or non-finite quaternion");
        }
        let q = if self.w < 0.0 { -*self } else { *self };
        let v = q.vector();
        let vn = v.norm();
        let phi = vn.atan2(q.w);
        // phi / |v| == (phi / sin(phi)) / |Q|
        let k = if phi < series::TAYLOR_THRESHOLD {
            series::inv_sinc(phi) / n
        } else {
            phi / vn
        };
        Ok(Quaternion::from_parts(n.ln(), v * k))
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, q: Quaternion) -> Quaternion {
        let p = self;
        Quaternion::new(
            p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
            p.x * q.w + p.w * q.x - p.z * q.y + p.y * q.z,
            p.y * q.w + p.z * q.x + p.w * q.y - p.x * q.z,
            p.z * q.w - p.y * q.x + p.x * q.y + p.w * q.z,
        )
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// `m * v` for a 4x4 matrix.
pub fn mat4_mul_vec(m: &Mat4, v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

pub fn mat4_transpose(m: &Mat4) -> Mat4 {
    let mut t = [[0.0; 4]; 4];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}
