//! Rigid-body kinematics on unit dual quaternions: twists, exponential
//! pose integration and inertia rotation.

use serde::{Deserialize, Serialize};

use crate::dualquat::{DualQuaternion, Mat8};
use crate::error::{degenerate, Result};
use crate::quat::{Mat4, Quaternion, UNIT_TOLERANCE};
use crate::vec3::{Mat3, Vec3};

/// A unit dual quaternion `R + (eps/2) T R`.
pub type Pose = DualQuaternion;

/// Velocity screw `(0, omega) + eps (0, v')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Twist(pub DualQuaternion);

impl Twist {
    pub fn angular(&self) -> Vec3 {
        self.0.real.vector()
    }

    pub fn linear(&self) -> Vec3 {
        self.0.dual.vector()
    }
}

/// `omega + eps (v + p x omega)`.
pub fn twist_world(omega: Vec3, v: Vec3, p: Vec3) -> Twist {
    Twist(DualQuaternion::new(Quaternion::pure(omega), Quaternion::pure(v + p.cross(omega))))
}

/// `omega + eps (v + omega x p)`.
pub fn twist_body(omega: Vec3, v: Vec3, p: Vec3) -> Twist {
    Twist(DualQuaternion::new(Quaternion::pure(omega), Quaternion::pure(v + omega.cross(p))))
}

/// `exp((dt/2) xi) pose`, renormalized.
pub fn integrate_pose(pose: &Pose, xi: &Twist, dt: f64) -> Result<Pose> {
    if !pose.is_unit(UNIT_TOLERANCE) {
        return degenerate("pose is not a unit dual quaternion");
    }
    if !(dt > 0.0) {
        return degenerate(format!("time step must be positive, got {dt}"));
    }
    ((xi.0 * (0.5 * dt)).exp() * *pose).normalize()
}

/// `exp((dt/2) omega) q`, renormalized.
pub fn quat_kinematics_step(q: &Quaternion, omega_world: Vec3, dt: f64) -> Result<Quaternion> {
    if !q.is_unit(UNIT_TOLERANCE) {
        return degenerate("orientation is not a unit quaternion");
    }
    (Quaternion::pure(omega_world * (0.5 * dt)).exp() * *q).normalize()
}

fn check_moments(inertia_body: Vec3) -> Result<()> {
    if !(inertia_body.x > 0.0 && inertia_body.y > 0.0 && inertia_body.z > 0.0) {
        return degenerate(format!("principal moments must be positive, got {:?}", inertia_body));
    }
    Ok(())
}

/// Rotates every column of `m` as a quaternion, `O c O*`.
fn rotate_columns4(o: &Quaternion, m: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for j in 0..4 {
        let c = Quaternion::new(m[0][j], m[1][j], m[2][j], m[3][j]);
        let r = (*o * c * o.conj()).to_array();
        for i in 0..4 {
            out[i][j] = r[i];
        }
    }
    out
}

fn transpose<const N: usize>(m: &[[f64; N]; N]) -> [[f64; N]; N] {
    let mut t = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            t[i][j] = m[j][i];
        }
    }
    t
}

/// World-frame inertia `(O (O I O*)^T O*)^T`, rotating first the columns
/// and then the rows of the padded body inertia.
pub fn inertia_world_q(orientation: &Quaternion, inertia_body: Vec3) -> Result<Mat3> {
    if !orientation.is_unit(UNIT_TOLERANCE) {
        return degenerate("orientation is not a unit quaternion");
    }
    check_moments(inertia_body)?;
    let mut i4 = [[0.0; 4]; 4];
    i4[0][0] = 1.0;
    i4[1][1] = inertia_body.x;
    i4[2][2] = inertia_body.y;
    i4[3][3] = inertia_body.z;
    let cols = rotate_columns4(orientation, &i4);
    let full = transpose(&rotate_columns4(orientation, &transpose(&cols)));
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = full[i + 1][j + 1];
        }
    }
    Ok(Mat3(m))
}

/// The padded 8x8 body inertia `diag(1, I1, I2, I3, 1, 1, 1, 1)`.
pub fn inertia_body8(inertia_body: Vec3) -> Mat8 {
    let d = [1.0, inertia_body.x, inertia_body.y, inertia_body.z, 1.0, 1.0, 1.0, 1.0];
    let mut m = [[0.0; 8]; 8];
    for k in 0..8 {
        m[k][k] = d[k];
    }
    m
}

fn rotate_columns8(o: &DualQuaternion, m: &Mat8) -> Mat8 {
    let mut out = [[0.0; 8]; 8];
    let oc = o.conj();
    for j in 0..8 {
        let c = DualQuaternion::from_array(std::array::from_fn(|i| m[i][j]));
        let r = (*o * c * oc).to_array();
        for i in 0..8 {
            out[i][j] = r[i];
        }
    }
    out
}

/// Dual-quaternion version of [`inertia_world_q`] for an orientation with
/// zero dual part.
pub fn inertia_world_dq(orientation: &DualQuaternion, inertia_body8: &Mat8) -> Result<Mat8> {
    if orientation.dual != Quaternion::ZERO {
        return degenerate("orientation must have a zero dual part");
    }
    if !orientation.real.is_unit(UNIT_TOLERANCE) {
        return degenerate("orientation is not a unit dual quaternion");
    }
    let cols = rotate_columns8(orientation, inertia_body8);
    Ok(transpose(&rotate_columns8(orientation, &transpose(&cols))))
}

/// Solves `I_world omega = L`.
pub fn angular_velocity_from_momentum(l: Vec3, orientation: &Quaternion, inertia_body: Vec3) -> Result<Vec3> {
    let iw = inertia_world_q(orientation, inertia_body)?;
    match iw.solve(l) {
        Some(w) => Ok(w),
        None => degenerate("world inertia is singular"),
    }
}

/// `v = p / m`.
pub fn velocity_from_impulse(impulse: Vec3, mass: f64) -> Result<Vec3> {
    if !(mass > 0.0) {
        return degenerate(format!("mass must be positive, got {mass}"));
    }
    Ok(impulse / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub pose: Pose,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    pub momentum: Vec3,
    pub angular_momentum: Vec3,
    pub half_dims: Vec3,
    pub mass: f64,
    pub inertia_body: Vec3,
}

/// Principal moments of a solid cuboid.
pub fn cuboid_inertia(mass: f64, half_dims: Vec3) -> Vec3 {
    let h2 = Vec3::new(
        half_dims.x * half_dims.x,
        half_dims.y * half_dims.y,
        half_dims.z * half_dims.z,
    );
    Vec3::new(h2.y + h2.z, h2.x + h2.z, h2.x + h2.y) * (mass / 3.0)
}

impl RigidBodyState {
    /// Builds a consistent state from pose and velocities; momenta are
    /// derived.
    pub fn new(pose: Pose, velocity: Vec3, angular_velocity: Vec3, half_dims: Vec3, mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return degenerate(format!("mass must be positive, got {mass}"));
        }
        if !(half_dims.x > 0.0 && half_dims.y > 0.0 && half_dims.z > 0.0) {
            return degenerate("half dimensions must be positive");
        }
        if !pose.is_unit(UNIT_TOLERANCE) {
            return degenerate("pose is not a unit dual quaternion");
        }
        let inertia_body = cuboid_inertia(mass, half_dims);
        let mut s = RigidBodyState {
            pose,
            velocity,
            angular_velocity,
            momentum: Vec3::ZERO,
            angular_momentum: Vec3::ZERO,
            half_dims,
            mass,
            inertia_body,
        };
        s.sync_momenta()?;
        Ok(s)
    }

    pub fn orientation(&self) -> Quaternion {
        self.pose.real
    }

    pub fn position(&self) -> Vec3 {
        (self.pose.dual * self.pose.real.conj() * 2.0).vector()
    }

    pub fn inertia_world(&self) -> Result<Mat3> {
        inertia_world_q(&self.pose.real, self.inertia_body)
    }

    /// Recomputes `p = m v` and `L = I_world omega`.
    pub fn sync_momenta(&mut self) -> Result<()> {
        self.momentum = self.velocity * self.mass;
        self.angular_momentum = self.inertia_world()?.mul_vec(self.angular_velocity);
        Ok(())
    }

    pub fn twist(&self) -> Twist {
        twist_world(self.angular_velocity, self.velocity, self.position())
    }

    /// World-frame corners in the order of sign bits `(x, y, z)`.
    pub fn corners(&self) -> [Vec3; 8] {
        let r = self.orientation().to_rotation_matrix();
        let c = self.position();
        let h = self.half_dims;
        std::array::from_fn(|k| {
            let sx = if k & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if k & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if k & 4 == 0 { -1.0 } else { 1.0 };
            c + r.mul_vec(Vec3::new(sx * h.x, sy * h.y, sz * h.z))
        })
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.velocity.norm_squared() + 0.5 * self.angular_velocity.dot(self.angular_momentum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn vec3() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-2.0..2.0f64).prop_map(Vec3::from)
    }

    fn rotation() -> impl Strategy<Value = Quaternion> {
        prop::array::uniform4(-1.0..1.0f64)
            .prop_filter("non-degenerate", |a| Quaternion::from(*a).norm() > 1e-2)
            .prop_map(|a| Quaternion::from(a).normalize().unwrap())
    }

    fn moments() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(0.1..3.0f64).prop_map(Vec3::from)
    }

    /// R diag(I) R^T from the rotation matrix.
    fn inertia_oracle(q: &Quaternion, i: Vec3) -> Mat3 {
        let r = q.to_rotation_matrix();
        r.mul_mat(&Mat3::diag(i)).mul_mat(&r.transpose())
    }

    /// Characteristic polynomial coefficients (trace, sum of principal
    /// 2x2 minors, determinant) are rotation invariants.
    fn invariants(m: &Mat3) -> [f64; 3] {
        let a = m.0;
        let tr = a[0][0] + a[1][1] + a[2][2];
        let minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0]
            + a[1][1] * a[2][2]
            - a[1][2] * a[2][1];
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        [tr, minors, det]
    }

    #[test]
    fn twist_cases() {
        let p = Vec3::new(3.0, -1.0, 2.0);
        let t = twist_world(Vec3::ZERO, Vec3::X, p);
        assert_eq!(t.0.dual.to_array(), [0.0, 1.0, 0.0, 0.0]);
        let w = Vec3::new(0.1, 0.2, 0.3);
        let v = Vec3::new(1.0, -2.0, 0.5);
        assert_eq!(twist_world(w, v, Vec3::ZERO), twist_body(w, v, Vec3::ZERO));
        let t = twist_world(Vec3::Z, Vec3::ZERO, Vec3::X);
        assert_eq!(t.linear(), Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(twist_body(Vec3::Z, Vec3::ZERO, Vec3::X).linear(), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(t.0.real.w, 0.0);
        assert_eq!(t.0.dual.w, 0.0);
    }

    #[test]
    fn zero_twist_keeps_pose() {
        let p = DualQuaternion::from_rot_trans(
            Quaternion::from_axis_angle(Vec3::Y, 0.3).unwrap(),
            Vec3::new(0.1, 0.2, 0.3),
        )
        .unwrap();
        let out = integrate_pose(&p, &Twist(DualQuaternion::ZERO), 0.1).unwrap();
        assert!(out.max_abs_diff(&p) < 1e-15);
    }

    #[test]
    fn pure_translation_steps() {
        let xi = twist_world(Vec3::ZERO, Vec3::X, Vec3::ZERO);
        let mut p = DualQuaternion::IDENTITY;
        for _ in 0..10 {
            p = integrate_pose(&p, &xi, 0.1).unwrap();
        }
        assert!(p.translation().unwrap().max_abs_diff(Vec3::X) < 1e-12);
    }

    #[test]
    fn pure_rotation_step() {
        let xi = twist_world(Vec3::new(0.0, 0.0, 2.0 * PI), Vec3::ZERO, Vec3::ZERO);
        let p = integrate_pose(&DualQuaternion::IDENTITY, &xi, 0.5).unwrap();
        let expected = Quaternion::from_axis_angle(Vec3::Z, PI).unwrap();
        assert!(p.real.max_abs_diff(&expected) < 1e-12);
        assert!(p.translation().unwrap().norm() < 1e-12);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let xi = twist_world(Vec3::Z, Vec3::X, Vec3::ZERO);
        assert!(integrate_pose(&DualQuaternion::IDENTITY, &xi, 0.0).is_err());
        assert!(integrate_pose(&DualQuaternion::IDENTITY, &xi, -1.0).is_err());
        assert!(integrate_pose(&(DualQuaternion::IDENTITY * 2.0), &xi, 0.1).is_err());
        assert!(quat_kinematics_step(&Quaternion::new(2.0, 0.0, 0.0, 0.0), Vec3::Z, 0.1).is_err());
    }

    #[test]
    fn com_velocity_of_screw_motion() {
        // d/dt translation at t = 0 is v when the twist is built at the COM
        let w = Vec3::new(0.3, -1.0, 2.0);
        let v = Vec3::new(0.5, 0.1, -0.2);
        let p = Vec3::new(0.2, 0.4, -0.1);
        let pose = DualQuaternion::from_rot_trans(Quaternion::from_axis_angle(Vec3::X, 0.4).unwrap(), p).unwrap();
        let h = 1e-6;
        let next = integrate_pose(&pose, &twist_world(w, v, p), h).unwrap();
        let vel = (next.translation().unwrap() - p) / h;
        assert!(vel.max_abs_diff(v) < 1e-5);
        let body_w = pose.real.conj() * Quaternion::pure(w) * pose.real;
        let body_p = pose.real.conj() * Quaternion::pure(p) * pose.real;
        let body_v = pose.real.conj() * Quaternion::pure(v) * pose.real;
        let xb = twist_body(body_w.vector(), body_v.vector(), body_p.vector());
        // body twist is the world twist seen through the pose: Q xi_b Q* = xi_w
        let xw = pose * xb.0 * pose.conj();
        let direct = twist_world(w, v, p).0;
        assert!(xw.real.max_abs_diff(&direct.real) < 1e-12);
    }

    #[test]
    fn unit_drift_over_long_integration() {
        let xi = twist_world(Vec3::new(1.3, -0.7, 2.1), Vec3::new(0.4, 0.2, -0.3), Vec3::new(0.1, 0.0, 0.2));
        let mut p = DualQuaternion::IDENTITY;
        for _ in 0..100_000 {
            p = integrate_pose(&p, &xi, 1e-3).unwrap();
        }
        let n = p.norm();
        assert!((n.a - 1.0).abs() < 1e-6 && n.b.abs() < 1e-6);
        // and the result matches the single-step solution
        let one = integrate_pose(&DualQuaternion::IDENTITY, &xi, 100.0).unwrap();
        assert!(p.max_abs_diff(&one) < 1e-6);
    }

    #[test]
    fn quat_step_cases() {
        let q = Quaternion::from_axis_angle(Vec3::new(0.0, 0.6, 0.8), 1.0).unwrap();
        assert!(quat_kinematics_step(&q, Vec3::ZERO, 0.1).unwrap().max_abs_diff(&q) < 1e-15);
        let w = Vec3::new(0.5, -1.5, 0.25);
        let mut r = q;
        for _ in 0..100 {
            r = quat_kinematics_step(&r, w, 0.01).unwrap();
        }
        let closed = Quaternion::pure(w * 0.5).exp() * q;
        assert!(r.max_abs_diff(&closed) < 1e-9);
    }

    #[test]
    fn inertia_cases() {
        let i = Vec3::new(1.0, 2.0, 3.0);
        assert!(inertia_world_q(&Quaternion::IDENTITY, i).unwrap().max_abs_diff(&Mat3::diag(i)) < 1e-15);
        let q = Quaternion::from_axis_angle(Vec3::new(1.0, 2.0, 2.0) / 3.0, 0.8).unwrap();
        let iso = Vec3::new(0.7, 0.7, 0.7);
        assert!(inertia_world_q(&q, iso).unwrap().max_abs_diff(&Mat3::diag(iso)) < 1e-12);
        assert!(inertia_world_q(&(q * 2.0), i).is_err());
        assert!(inertia_world_q(&q, Vec3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn inertia8_cases() {
        let i = Vec3::new(1.0, 2.0, 3.0);
        let body = inertia_body8(i);
        assert_eq!(inertia_world_dq(&DualQuaternion::IDENTITY, &body).unwrap(), body);
        let q = Quaternion::from_axis_angle(Vec3::Y, 2.0).unwrap();
        let od = DualQuaternion::new(q, Quaternion::ZERO);
        let iso = inertia_body8(Vec3::new(1.0, 1.0, 1.0));
        let out = inertia_world_dq(&od, &iso).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert!((out[r][c] - iso[r][c]).abs() < 1e-12);
            }
        }
        let shifted = DualQuaternion::from_rot_trans(q, Vec3::X).unwrap();
        assert!(inertia_world_dq(&shifted, &body).is_err());
    }

    #[test]
    fn momentum_cases() {
        let i = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(angular_velocity_from_momentum(Vec3::ZERO, &Quaternion::IDENTITY, i).unwrap(), Vec3::ZERO);
        let w = angular_velocity_from_momentum(Vec3::new(1.0 * 0.7, 0.0, 0.0), &Quaternion::IDENTITY, i).unwrap();
        assert!(w.max_abs_diff(Vec3::new(0.7, 0.0, 0.0)) < 1e-15);
        assert_eq!(velocity_from_impulse(Vec3::new(2.0, 4.0, -6.0), 2.0).unwrap(), Vec3::new(1.0, 2.0, -3.0));
        assert!(velocity_from_impulse(Vec3::X, 0.0).is_err());
    }

    #[test]
    fn state_derives_momenta() {
        let pose = DualQuaternion::from_rot_trans(Quaternion::from_axis_angle(Vec3::Z, 0.5).unwrap(), Vec3::Y).unwrap();
        let s = RigidBodyState::new(pose, Vec3::X, Vec3::new(0.0, 1.0, 2.0), Vec3::new(0.1, 0.2, 0.3), 2.0).unwrap();
        assert_eq!(s.momentum, Vec3::new(2.0, 0.0, 0.0));
        assert!(s.position().max_abs_diff(Vec3::Y) < 1e-15);
        let w = angular_velocity_from_momentum(s.angular_momentum, &s.orientation(), s.inertia_body).unwrap();
        assert!(w.max_abs_diff(s.angular_velocity) < 1e-12);
        assert!(RigidBodyState::new(pose, Vec3::X, Vec3::X, Vec3::X, -1.0).is_err());
        // cube moments: m/3 (h^2 + h^2)
        let cube = cuboid_inertia(3.0, Vec3::new(0.5, 0.5, 0.5));
        assert!(cube.max_abs_diff(Vec3::new(0.5, 0.5, 0.5)) < 1e-15);
    }

    proptest! {
        #[test]
        fn n_steps_equal_one_long_step(w in vec3(), v in vec3(), p in vec3(), n in 1usize..20) {
            let xi = twist_world(w, v, p);
            let mut a = DualQuaternion::IDENTITY;
            for _ in 0..n {
                a = integrate_pose(&a, &xi, 0.01).unwrap();
            }
            let b = integrate_pose(&DualQuaternion::IDENTITY, &xi, 0.01 * n as f64).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-8);
            prop_assert!(a.is_unit(1e-9));
        }

        #[test]
        fn quat_step_matches_pose_rotation(q in rotation(), w in vec3(), t in vec3(), dt in 0.001..0.5f64) {
            let pose = DualQuaternion::from_rot_trans(q, t).unwrap();
            let next = integrate_pose(&pose, &twist_world(w, Vec3::ZERO, t), dt).unwrap();
            let r = quat_kinematics_step(&q, w, dt).unwrap();
            prop_assert!(next.real.max_abs_diff(&r) < 1e-10);
            prop_assert!((r.norm() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn inertia_matches_rotation_matrix(q in rotation(), i in moments()) {
            let m = inertia_world_q(&q, i).unwrap();
            prop_assert!(m.max_abs_diff(&inertia_oracle(&q, i)) < 1e-9);
            prop_assert!(m.max_abs_diff(&m.transpose()) < 1e-12);
            let a = invariants(&m);
            let b = invariants(&Mat3::diag(i));
            for k in 0..3 {
                prop_assert!((a[k] - b[k]).abs() < 1e-9 * (1.0 + b[k].abs()));
            }
        }

        #[test]
        fn inertia8_sub_block_matches(q in rotation(), i in moments()) {
            let out = inertia_world_dq(&DualQuaternion::new(q, Quaternion::ZERO), &inertia_body8(i)).unwrap();
            let m = inertia_world_q(&q, i).unwrap();
            prop_assert!((out[0][0] - 1.0).abs() < 1e-12);
            for r in 0..3 {
                for c in 0..3 {
                    prop_assert!((out[r + 1][c + 1] - m.0[r][c]).abs() < 1e-12);
                }
            }
            for k in 4..8 {
                prop_assert!((out[k][k] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn momentum_roundtrip(q in rotation(), i in moments(), l in vec3()) {
            let w = angular_velocity_from_momentum(l, &q, i).unwrap();
            let back = inertia_oracle(&q, i).mul_vec(w);
            prop_assert!(back.max_abs_diff(l) < 1e-9);
        }
    }
}
