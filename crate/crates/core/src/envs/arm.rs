//! Planar three-link arm: kinematics, rigid-body dynamics and penalty contact
//! with a horizontal table.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Spring-damper table contact with smoothed Coulomb friction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    pub enabled: bool,
    pub table_height: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub friction_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            enabled: true,
            table_height: 0.0,
            stiffness: 5000.0,
            damping: 50.0,
            friction: 0.5,
            friction_velocity: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmParams {
    pub link_lengths: [f64; 3],
    pub masses: [f64; 3],
    pub gravity: f64,
    pub torque_limits: [f64; 3],
    pub max_joint_velocity: f64,
    pub joint_damping: f64,
    pub dt: f64,
    pub substeps: usize,
    pub gravity_compensation: bool,
    pub contact: ContactParams,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            link_lengths: [1.0, 0.8, 0.4],
            masses: [2.0, 1.5, 1.0],
            gravity: 9.81,
            torque_limits: [30.0, 20.0, 10.0],
            max_joint_velocity: 20.0,
            joint_damping: 1.0,
            dt: 0.01,
            substeps: 5,
            gravity_compensation: true,
            contact: ContactParams::default(),
        }
    }
}

impl ArmParams {
    pub fn control_period(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub q: [f64; 3],
    pub qd: [f64; 3],
    /// End-effector contact force `(tangential x, normal y)`.
    pub force: [f64; 2],
}

impl ArmState {
    pub fn at_rest(q: [f64; 3]) -> Self {
        Self {
            q,
            qd: [0.0; 3],
            force: [0.0; 2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EePose {
    pub position: [f64; 2],
    pub orientation: f64,
}

struct Geometry {
    /// Joint origins, plus the end-effector as the fourth entry.
    origins: [[f64; 2]; 4],
    com: [[f64; 2]; 3],
}

fn geometry(p: &ArmParams, q: &[f64; 3]) -> Geometry {
    let mut origins = [[0.0; 2]; 4];
    let mut com = [[0.0; 2]; 3];
    let mut theta = 0.0;
    for i in 0..3 {
        theta += q[i];
        let (s, c) = theta.sin_cos();
        let l = p.link_lengths[i];
        com[i] = [origins[i][0] + 0.5 * l * c, origins[i][1] + 0.5 * l * s];
        origins[i + 1] = [origins[i][0] + l * c, origins[i][1] + l * s];
    }
    Geometry { origins, com }
}

pub fn forward_kinematics(p: &ArmParams, q: &[f64; 3]) -> EePose {
    let g = geometry(p, q);
    EePose {
        position: g.origins[3],
        orientation: q.iter().sum(),
    }
}

/// Task Jacobian with rows `(x, y, orientation)`.
pub fn jacobian(p: &ArmParams, q: &[f64; 3]) -> Matrix3<f64> {
    let g = geometry(p, q);
    let ee = g.origins[3];
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let r = [ee[0] - g.origins[k][0], ee[1] - g.origins[k][1]];
        j[(0, k)] = -r[1];
        j[(1, k)] = r[0];
        j[(2, k)] = 1.0;
    }
    j
}

pub fn ee_velocity(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3]) -> [f64; 2] {
    let v = jacobian(p, q) * Vector3::from(*qd);
    [v[0], v[1]]
}

fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Recursive Newton-Euler inverse dynamics: joint torques producing `qdd`
/// from `(q, qd)` under gravity `g`.
pub fn inverse_dynamics(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], qdd: &[f64; 3], g: f64) -> [f64; 3] {
    let geo = geometry(p, q);
    let mut alpha = [0.0; 3];
    let mut acc_com = [[0.0; 2]; 3];
    let (mut w, mut a) = (0.0, 0.0);
    // gravity enters as an upward acceleration of the base
    let mut acc_origin = [0.0, g];
    for i in 0..3 {
        if i > 0 {
            let r = [
                geo.origins[i][0] - geo.origins[i - 1][0],
                geo.origins[i][1] - geo.origins[i - 1][1],
            ];
            let pr = perp(r);
            acc_origin = [
                acc_origin[0] + a * pr[0] - w * w * r[0],
                acc_origin[1] + a * pr[1] - w * w * r[1],
            ];
        }
        w += qd[i];
        a += qdd[i];
        alpha[i] = a;
        let rho = [geo.com[i][0] - geo.origins[i][0], geo.com[i][1] - geo.origins[i][1]];
        let pr = perp(rho);
        acc_com[i] = [
            acc_origin[0] + a * pr[0] - w * w * rho[0],
            acc_origin[1] + a * pr[1] - w * w * rho[1],
        ];
    }
    let mut tau = [0.0; 3];
    let mut f_next = [0.0; 2];
    let mut n_next = 0.0;
    for i in (0..3).rev() {
        let m = p.masses[i];
        let l = p.link_lengths[i];
        let inertia = m * l * l / 12.0;
        let fi = [m * acc_com[i][0] + f_next[0], m * acc_com[i][1] + f_next[1]];
        let rho = [geo.com[i][0] - geo.origins[i][0], geo.com[i][1] - geo.origins[i][1]];
        let link = [
            geo.origins[i + 1][0] - geo.origins[i][0],
            geo.origins[i + 1][1] - geo.origins[i][1],
        ];
        let ni = inertia * alpha[i]
            + cross(rho, [m * acc_com[i][0], m * acc_com[i][1]])
            + n_next
            + cross(link, f_next);
        tau[i] = ni;
        f_next = fi;
        n_next = ni;
    }
    tau
}

pub fn mass_matrix(p: &ArmParams, q: &[f64; 3]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = inverse_dynamics(p, q, &[0.0; 3], &e, 0.0);
        for i in 0..3 {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Coriolis/centrifugal plus gravity torques `C(q, qd) qd + g(q)`.
pub fn bias_torques(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3]) -> [f64; 3] {
    inverse_dynamics(p, q, qd, &[0.0; 3], p.gravity)
}

pub fn gravity_torques(p: &ArmParams, q: &[f64; 3]) -> [f64; 3] {
    inverse_dynamics(p, q, &[0.0; 3], &[0.0; 3], p.gravity)
}

/// Total kinetic plus potential energy.
pub fn mechanical_energy(p: &ArmParams, s: &ArmState) -> f64 {
    let qd = Vector3::from(s.qd);
    let kinetic = 0.5 * (qd.transpose() * mass_matrix(p, &s.q) * qd)[(0, 0)];
    let geo = geometry(p, &s.q);
    let potential: f64 = (0..3).map(|i| p.masses[i] * p.gravity * geo.com[i][1]).sum();
    kinetic + potential
}

/// Penalty contact force `(tangential, normal)` at the end-effector.
pub fn contact_force(c: &ContactParams, position: [f64; 2], velocity: [f64; 2]) -> [f64; 2] {
    if !c.enabled {
        return [0.0; 2];
    }
    let depth = (c.table_height - position[1]).max(0.0);
    if depth <= 0.0 {
        return [0.0; 2];
    }
    let normal = (c.stiffness * depth - c.damping * velocity[1]).max(0.0);
    let tangential = -c.friction * normal * (velocity[0] / c.friction_velocity).tanh();
    [tangential, normal]
}

fn clamp_torques(p: &ArmParams, tau: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = tau[i].clamp(-p.torque_limits[i], p.torque_limits[i]);
    }
    out
}

/// Joint accelerations without the viscous joint damping, which is applied
/// implicitly by [`damp`].
fn joint_acceleration(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], tau: &[f64; 3]) -> Vector3<f64> {
    let bias = bias_torques(p, q, qd);
    let mut rhs = Vector3::zeros();
    let comp = if p.gravity_compensation {
        gravity_torques(p, q)
    } else {
        [0.0; 3]
    };
    for i in 0..3 {
        rhs[i] = tau[i] + comp[i] - bias[i];
    }
    solve(&mass_matrix(p, q), &rhs)
}

/// Backward-Euler step of `M qdd = -d qd` over `h`.
fn damp(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], h: f64) -> [f64; 3] {
    if p.joint_damping == 0.0 {
        return *qd;
    }
    let mass = mass_matrix(p, q);
    let lhs = mass + Matrix3::identity() * (h * p.joint_damping);
    let v = solve(&lhs, &(mass * Vector3::from(*qd)));
    [v[0], v[1], v[2]]
}

fn solve(m: &Matrix3<f64>, rhs: &Vector3<f64>) -> Vector3<f64> {
    m.cholesky()
        .map(|c| c.solve(rhs))
        .unwrap_or_else(|| m.lu().solve(rhs).unwrap_or_else(Vector3::zeros))
}

fn in_contact(p: &ArmParams, q: &[f64; 3]) -> bool {
    p.contact.enabled && forward_kinematics(p, q).position[1] < p.contact.table_height
}

fn clamp_velocity(p: &ArmParams, qd: &mut [f64; 3]) {
    for v in qd.iter_mut() {
        *v = v.clamp(-p.max_joint_velocity, p.max_joint_velocity);
    }
}

/// Contact-free step: implicit half-steps of joint damping around a
/// fourth-order Runge-Kutta step of the remaining dynamics.
fn free_substep(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], tau: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let qd = damp(p, q, qd, h / 2.0);
    let (qn, vn) = rk4_substep(p, q, &qd, tau, h);
    (qn, damp(p, &qn, &vn, h / 2.0))
}

fn rk4_substep(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], tau: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let deriv = |q: &[f64; 3], qd: &[f64; 3]| -> ([f64; 3], [f64; 3]) {
        let a = joint_acceleration(p, q, qd, tau);
        (*qd, [a[0], a[1], a[2]])
    };
    let axpy = |x: &[f64; 3], k: &[f64; 3], s: f64| -> [f64; 3] {
        [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]]
    };
    let (k1q, k1v) = deriv(q, qd);
    let (k2q, k2v) = deriv(&axpy(q, &k1q, h / 2.0), &axpy(qd, &k1v, h / 2.0));
    let (k3q, k3v) = deriv(&axpy(q, &k2q, h / 2.0), &axpy(qd, &k2v, h / 2.0));
    let (k4q, k4v) = deriv(&axpy(q, &k3q, h), &axpy(qd, &k3v, h));
    let mut qn = [0.0; 3];
    let mut vn = [0.0; 3];
    for i in 0..3 {
        qn[i] = q[i] + h / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
        vn[i] = qd[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
    (qn, vn)
}

/// Semi-implicit Euler step with the velocity-dependent contact terms
/// (normal damping and linearized friction) treated implicitly.
fn contact_substep(p: &ArmParams, q: &[f64; 3], qd: &[f64; 3], tau: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    let c = &p.contact;
    let mass = mass_matrix(p, q);
    let bias = bias_torques(p, q, qd);
    let comp = if p.gravity_compensation {
        gravity_torques(p, q)
    } else {
        [0.0; 3]
    };
    let jac = jacobian(p, q);
    let jp = jac.fixed_rows::<2>(0).into_owned();
    let pose = forward_kinematics(p, q);
    let vel = ee_velocity(p, q, qd);
    let depth = (c.table_height - pose.position[1]).max(0.0);
    let trial_normal = c.stiffness * depth - c.damping * vel[1];

    let mut rhs = Vector3::zeros();
    for i in 0..3 {
        rhs[i] = tau[i] + comp[i] - bias[i];
    }
    let mut lhs = mass + Matrix3::identity() * (h * p.joint_damping);
    if depth > 0.0 && trial_normal > 0.0 {
        let spring = nalgebra::Vector2::new(0.0, c.stiffness * depth);
        rhs += jp.transpose() * spring;
        let slip = vel[0] / c.friction_velocity;
        let secant = if slip.abs() < 1e-9 {
            1.0 / c.friction_velocity
        } else {
            slip.tanh() / vel[0]
        };
        let damping = nalgebra::Matrix2::new(c.friction * trial_normal * secant, 0.0, 0.0, c.damping);
        lhs += jp.transpose() * damping * jp * h;
    }
    let qd_vec = Vector3::from(*qd);
    let new_qd = solve(&lhs, &(mass * qd_vec + rhs * h));
    let mut vn = [new_qd[0], new_qd[1], new_qd[2]];
    clamp_velocity(p, &mut vn);
    let qn = [q[0] + h * vn[0], q[1] + h * vn[1], q[2] + h * vn[2]];
    (qn, vn)
}

/// Advances one control period holding the commanded torques.
///
/// Torques are clamped to the limits and gravity compensation is added when
/// enabled. Free flight uses RK4 substeps with implicit joint damping; a
/// substep that starts or ends below the table surface is taken with the
/// implicit-contact Euler scheme.
pub fn integrate(p: &ArmParams, s: &ArmState, tau: &[f64; 3], substeps: usize, dt: f64) -> ArmState {
    let tau = clamp_torques(p, tau);
    let (mut q, mut qd) = (s.q, s.qd);
    for _ in 0..substeps {
        let (mut qn, mut vn) = if in_contact(p, &q) {
            contact_substep(p, &q, &qd, &tau, dt)
        } else {
            let (qn, mut vn) = free_substep(p, &q, &qd, &tau, dt);
            clamp_velocity(p, &mut vn);
            (qn, vn)
        };
        if !in_contact(p, &q) && in_contact(p, &qn) {
            (qn, vn) = contact_substep(p, &q, &qd, &tau, dt);
        }
        q = qn;
        qd = vn;
    }
    let pose = forward_kinematics(p, &q);
    let vel = ee_velocity(p, &q, &qd);
    ArmState {
        q,
        qd,
        force: contact_force(&p.contact, pose.position, vel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_arm_along_x() {
        let pose = forward_kinematics(&ArmParams::default(), &[0.0; 3]);
        assert!((pose.position[0] - 2.2).abs() < 1e-12 && pose.position[1].abs() < 1e-12);
        assert_eq!(pose.orientation, 0.0);
    }

    #[test]
    fn rotated_arm_points_up() {
        let pose = forward_kinematics(&ArmParams::default(), &[FRAC_PI_2, 0.0, 0.0]);
        assert!(pose.position[0].abs() < 1e-12 && (pose.position[1] - 2.2).abs() < 1e-12);
        assert!((pose.orientation - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn elbow_configuration_hand_value() {
        // link 1 up (0, 1), links 2 and 3 along +x: (0.8 + 0.4, 1.0)
        let pose = forward_kinematics(&ArmParams::default(), &[FRAC_PI_2, -FRAC_PI_2, 0.0]);
        assert!((pose.position[0] - 1.2).abs() < 1e-12);
        assert!((pose.position[1] - 1.0).abs() < 1e-12);
        assert!(pose.orientation.abs() < 1e-15);
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let p = ArmParams::default();
        for q in [[0.0, 0.0, 0.0], [0.3, -1.2, 0.7], [2.0, 1.0, -2.5]] {
            let m = mass_matrix(&p, &q);
            assert!((m - m.transpose()).abs().max() < 1e-12);
            assert!(m.cholesky().is_some());
        }
    }

    #[test]
    fn gravity_torque_single_link_hand_value() {
        // Horizontal straight arm: joint 3 holds link 3's weight at half length.
        let p = ArmParams::default();
        let g = gravity_torques(&p, &[0.0; 3]);
        assert!((g[2] - 1.0 * 9.81 * 0.2).abs() < 1e-12);
        let expected0 = 9.81 * (2.0 * 0.5 + 1.5 * 1.4 + 1.0 * 2.0);
        assert!((g[0] - expected0).abs() < 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let p = ArmParams::default();
        let q = [0.4, -0.9, 0.3];
        let j = jacobian(&p, &q);
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += 1e-6;
            qm[k] -= 1e-6;
            let fp = forward_kinematics(&p, &qp).position;
            let fm = forward_kinematics(&p, &qm).position;
            for r in 0..2 {
                let num = (fp[r] - fm[r]) / 2e-6;
                assert!((num - j[(r, k)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn contact_force_examples() {
        let c = ContactParams::default();
        assert_eq!(contact_force(&c, [1.0, 0.01], [0.0, 0.0]), [0.0, 0.0]);
        let f = contact_force(&c, [1.0, -0.002], [0.0, 0.0]);
        assert!((f[1] - 10.0).abs() < 1e-9 && f[0] == 0.0);
        let f = contact_force(&c, [1.0, -0.002], [1.0, 0.0]);
        assert!((f[0] + 5.0).abs() < 1e-9);
    }

    #[test]
    fn contact_force_never_pulls() {
        let c = ContactParams::default();
        let f = contact_force(&c, [1.0, -0.001], [0.0, 10.0]);
        assert_eq!(f[1], 0.0);
    }
}
