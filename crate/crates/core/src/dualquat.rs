//! Dual numbers and dual quaternions `Q + eps Q_eps` (with `eps^2 = 0`).
//!
//! Unit dual quaternions encode rigid transforms. Poses use the
//! rotation-then-translation convention `R + (eps/2) T R`; the
//! translation-then-rotation form `R + (eps/2) R T` is also provided.
//! The 8-vector order is `(real.w, real.x, real.y, real.z, dual.w, .., dual.z)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Error, Result};
use crate::quat::{Mat4, Quaternion, UNIT_TOLERANCE};
use crate::series;
use crate::vec3::Vec3;

pub type Mat8 = [[f64; 8]; 8];

/// `a + eps b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualNumber {
    pub a: f64,
    pub b: f64,
}

impl DualNumber {
    pub const fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn conj(&self) -> Self {
        Self::new(self.a, -self.b)
    }

    /// Principal square root; requires `a > 0` for a finite dual part.
    pub fn sqrt(&self) -> Self {
        let r = self.a.sqrt();
        Self::new(r, self.b / (2.0 * r))
    }
}

impl Add for DualNumber {
    type Output = DualNumber;
    fn add(self, o: DualNumber) -> DualNumber {
        DualNumber::new(self.a + o.a, self.b + o.b)
    }
}

impl Mul for DualNumber {
    type Output = DualNumber;
    fn mul(self, o: DualNumber) -> DualNumber {
        DualNumber::new(self.a * o.a, self.a * o.b + self.b * o.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 8]", into = "[f64; 8]")]
pub struct DualQuaternion {
    pub real: Quaternion,
    pub dual: Quaternion,
}

impl DualQuaternion {
    pub const IDENTITY: DualQuaternion = DualQuaternion::new(Quaternion::IDENTITY, Quaternion::ZERO);
    pub const ZERO: DualQuaternion = DualQuaternion::new(Quaternion::ZERO, Quaternion::ZERO);

    pub const fn new(real: Quaternion, dual: Quaternion) -> Self {
        Self { real, dual }
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self::new(
            Quaternion::new(a[0], a[1], a[2], a[3]),
            Quaternion::new(a[4], a[5], a[6], a[7]),
        )
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::from_array(s[..8].try_into().expect("slice of length 8"))
    }

    pub fn to_array(self) -> [f64; 8] {
        let r = self.real.to_array();
        let d = self.dual.to_array();
        [r[0], r[1], r[2], r[3], d[0], d[1], d[2], d[3]]
    }

    pub fn max_abs_diff(&self, o: &DualQuaternion) -> f64 {
        self.real.max_abs_diff(&o.real).max(self.dual.max_abs_diff(&o.dual))
    }

    pub fn is_finite(&self) -> bool {
        self.real.is_finite() && self.dual.is_finite()
    }

    /// `Q* + eps Q_eps*`.
    pub fn conj(&self) -> Self {
        Self::new(self.real.conj(), self.dual.conj())
    }

    /// `Q* - eps Q_eps*`.
    pub fn dual_conj(&self) -> Self {
        Self::new(self.real.conj(), -self.dual.conj())
    }

    /// Dual-number norm `(|Q|, Q.Q_eps / |Q|)`, whose square is
    /// `(Q.Q, 2 Q.Q_eps)`. Zero input yields `(0, 0)`.
    pub fn norm(&self) -> DualNumber {
        let n = self.real.norm();
        if n == 0.0 {
            return DualNumber::default();
        }
        DualNumber::new(n, self.real.dot(&self.dual) / n)
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        self.real.is_unit(tol) && self.real.dot(&self.dual).abs() <= tol
    }

    fn require_unit(&self, what: &str) -> Result<()> {
        if self.is_unit(UNIT_TOLERANCE) {
            Ok(())
        } else {
            degenerate(format!(
                "{what} is not a unit dual quaternion (|Q| = {}, Q.Qe = {})",
                self.real.norm(),
                self.real.dot(&self.dual)
            ))
        }
    }

    /// `Q := Q/|Q|`, `Q_eps := (I - Q Q^T / |Q|^2) Q_eps`.
    pub fn normalize(&self) -> Result<Self> {
        let n2 = self.real.norm_squared();
        if n2 == 0.0 || !n2.is_finite() {
            return degenerate("cannot normalize a dual quaternion with zero real part");
        }
        let dual = self.dual - self.real * (self.real.dot(&self.dual) / n2);
        Ok(Self::new(self.real * (1.0 / n2.sqrt()), dual))
    }

    /// Error dual quaternion `P* Q`, the identity iff `P == Q`.
    pub fn error(p: &DualQuaternion, q: &DualQuaternion) -> Result<Self> {
        p.require_unit("error operand")?;
        q.require_unit("error operand")?;
        Ok(p.conj() * *q)
    }

    /// `[[P_d]]_L` with `[[P_d]]_L vec8(Q_d) == vec8(P_d Q_d)`.
    pub fn left_matrix(&self) -> Mat8 {
        block_lower(&self.real.left_matrix(), &self.dual.left_matrix(), 1.0)
    }

    /// `[[Q_d]]_R` with `[[Q_d]]_R vec8(P_d) == vec8(P_d Q_d)`.
    pub fn right_matrix(&self) -> Mat8 {
        block_lower(&self.real.right_matrix(), &self.dual.right_matrix(), 1.0)
    }

    /// Left matrix of the conjugate `P_d*`.
    pub fn left_conj_matrix(&self) -> Mat8 {
        block_lower(&self.real.left_conj_matrix(), &self.dual.left_conj_matrix(), 1.0)
    }

    /// Right matrix of the conjugate `Q_d*`.
    pub fn right_conj_matrix(&self) -> Mat8 {
        block_lower(&self.real.right_conj_matrix(), &self.dual.right_conj_matrix(), 1.0)
    }

    /// Left matrix of the dual conjugate.
    pub fn left_dual_conj_matrix(&self) -> Mat8 {
        block_lower(&self.real.left_conj_matrix(), &self.dual.left_conj_matrix(), -1.0)
    }

    /// Right matrix of the dual conjugate.
    pub fn right_dual_conj_matrix(&self) -> Mat8 {
        block_lower(&self.real.right_conj_matrix(), &self.dual.right_conj_matrix(), -1.0)
    }

    /// Dual-quaternion exponential.
    ///
    /// The scalar parts form a dual number that commutes with everything, so
    /// `exp(Q_d) = e^{q0} (1 + eps q_eps0) exp(q + eps q_eps)`, where the
    /// second factor is the closed form with `phi = |q|` and `m = q . q_eps`.
    pub fn exp(&self) -> DualQuaternion {
        let q = self.real.vector();
        let qe = self.dual.vector();
        let phi = q.norm();
        let m = q.dot(qe);
        let s = series::sinc(phi);
        let c = series::cos_minus_sinc_over_sq(phi);
        let real = Quaternion::from_parts(phi.cos(), q * s);
        let dual = Quaternion::from_parts(-s * m, qe * s + q * (c * m));
        let scale = self.real.w.exp();
        let real_out = real * scale;
        let dual_out = (dual + real * self.dual.w) * scale;
        DualQuaternion::new(real_out, dual_out)
    }

    /// Principal logarithm, the inverse of [`DualQuaternion::exp`] for
    /// `real.w > 0`.
    pub fn ln(&self) -> Result<DualQuaternion> {
        let n = self.real.norm();
        if n == 0.0 || !n.is_finite() {
            return degenerate("logarithm of a dual quaternion with zero real part");
        }
        if self.real.w <= 0.0 {
            return Err(Error::BranchCut(format!(
                "real scalar part {} is not positive",
                self.real.w
            )));
        }
        // Split off the dual scalar e^{s}(1 + eps s_eps).
        let s = n.ln();
        let s_eps = self.real.dot(&self.dual) / (n * n);
        let ur = self.real * (1.0 / n);
        let ue = self.dual * (1.0 / n) - ur * s_eps;

        let u = ur.vector();
        let un = u.norm();
        let phi = un.atan2(ur.w);
        let k = if phi < series::TAYLOR_THRESHOLD {
            series::inv_sinc(phi)
        } else {
            phi / un
        };
        let theta = u * k;
        let sinc = series::sinc(phi);
        let c = series::cos_minus_sinc_over_sq(phi);
        let m = -ue.w / sinc;
        let theta_eps = (ue.vector() - theta * (c * m)) / sinc;
        Ok(DualQuaternion::new(
            Quaternion::from_parts(s, theta),
            Quaternion::from_parts(s_eps, theta_eps),
        ))
    }

    /// Pose `R + (eps/2) T R`: rotate first, then translate.
    pub fn from_rot_trans(r: Quaternion, t: Vec3) -> Result<Self> {
        if !r.is_unit(UNIT_TOLERANCE) {
            return degenerate(format!("rotation has norm {}", r.norm()));
        }
        Ok(Self::new(r, Quaternion::pure(t) * r * 0.5))
    }

    /// `R + (eps/2) R T`: translate first, then rotate.
    pub fn from_trans_rot(r: Quaternion, t: Vec3) -> Result<Self> {
        if !r.is_unit(UNIT_TOLERANCE) {
            return degenerate(format!("rotation has norm {}", r.norm()));
        }
        Ok(Self::new(r, r * Quaternion::pure(t) * 0.5))
    }

    /// Translation of a rotation-then-translation pose, `2 Q_eps Q*`.
    pub fn translation(&self) -> Result<Vec3> {
        self.require_unit("pose")?;
        Ok((self.dual * self.real.conj() * 2.0).vector())
    }

    /// Translation of a translation-then-rotation pose, `2 Q* Q_eps`.
    pub fn translation_trans_rot(&self) -> Result<Vec3> {
        self.require_unit("pose")?;
        Ok((self.real.conj() * self.dual * 2.0).vector())
    }

    /// Transforms a point lifted as `1 + eps P` by `Q_d P_d bar(Q_d)*`.
    pub fn transform_point(&self, p: Vec3) -> Result<Vec3> {
        self.require_unit("pose")?;
        let lifted = DualQuaternion::new(Quaternion::IDENTITY, Quaternion::pure(p));
        Ok((*self * lifted * self.dual_conj()).dual.vector())
    }
}

fn block_lower(diag: &Mat4, lower: &Mat4, lower_sign: f64) -> Mat8 {
    let mut m = [[0.0; 8]; 8];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = diag[i][j];
            m[i + 4][j + 4] = diag[i][j];
            m[i + 4][j] = lower_sign * lower[i][j];
        }
    }
    m
}

/// `m * v` for an 8x8 matrix.
pub fn mat8_mul_vec(m: &Mat8, v: [f64; 8]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

impl From<[f64; 8]> for DualQuaternion {
    fn from(a: [f64; 8]) -> Self {
        DualQuaternion::from_array(a)
    }
}

impl From<DualQuaternion> for [f64; 8] {
    fn from(q: DualQuaternion) -> Self {
        q.to_array()
    }
}

impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, q: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.real * q.real, self.real * q.dual + self.dual * q.real)
    }
}

impl Mul<f64> for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, s: f64) -> DualQuaternion {
        DualQuaternion::new(self.real * s, self.dual * s)
    }
}

impl Add for DualQuaternion {
    type Output = DualQuaternion;
    fn add(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.real + o.real, self.dual + o.dual)
    }
}

impl Sub for DualQuaternion {
    type Output = DualQuaternion;
    fn sub(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.real - o.real, self.dual - o.dual)
    }
}

impl Neg for DualQuaternion {
    type Output = DualQuaternion;
    fn neg(self) -> DualQuaternion {
        DualQuaternion::new(-self.real, -self.dual)
    }
}
