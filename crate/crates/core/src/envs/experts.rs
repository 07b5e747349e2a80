//! Scripted controllers: near-optimal experts for every task family and
//! deliberately incomplete variants used when calibrating success thresholds.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::arm::{self, ArmParams};
use super::tasks::{circle_reference, slide_reference, wrap_angle, EnvKind, Task, TaskSpec};
use super::{decode_arm_obs, EnvConfig, Policy};

/// Outputs a zero action of fixed dimension.
#[derive(Clone, Copy, Debug)]
pub struct ZeroPolicy(pub usize);

impl Policy for ZeroPolicy {
    fn act(&self, _obs: &[f64]) -> Vec<f64> {
        vec![0.0; self.0]
    }
}

/// Heads straight for the goal and stops once within `tolerance`.
#[derive(Clone, Copy, Debug)]
pub struct PointMassExpert {
    pub goal: [f64; 2],
    pub tolerance: f64,
}

impl PointMassExpert {
    pub fn new(goal: [f64; 2]) -> Self {
        Self {
            goal,
            tolerance: 0.05,
        }
    }
}

impl Policy for PointMassExpert {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        let d = [self.goal[0] - obs[0], self.goal[1] - obs[1]];
        let n = d[0].hypot(d[1]);
        if n <= self.tolerance {
            vec![0.0, 0.0]
        } else {
            vec![d[0] / n, d[1] / n]
        }
    }
}

/// How closely an [`ArmController`] follows its task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlMode {
    /// Solves the task.
    Expert,
    /// Tracks the task's targets raised by the given height, never pressing.
    Hover(f64),
    /// Goes to the task's first target point and stays there, pressing if the task asks for force.
    Static,
    /// Solves the task with its goal geometry shifted horizontally.
    Shifted(f64),
}

/// Operational-space controller on the arm.
///
/// A PD law on end-effector position and orientation gives a desired task
/// acceleration, mapped to joint accelerations with a damped least-squares
/// inverse of the Jacobian and to torques through the mass matrix, plus
/// Coriolis terms and a feedforward contact force while pressing.
#[derive(Clone, Debug)]
pub struct ArmController {
    params: ArmParams,
    task: Task,
    table: f64,
    stiffness: f64,
    friction: f64,
    mode: ControlMode,
    pub kp: f64,
    pub kd: f64,
    pub max_accel: f64,
    pub damping: f64,
    /// Height above the table used while moving toward a contact target.
    pub approach_height: f64,
}

struct Target {
    position: [f64; 2],
    velocity: [f64; 2],
    accel: [f64; 2],
    orientation: f64,
    press: Option<f64>,
}

impl ArmController {
    pub fn new(params: &ArmParams, task: &Task, mode: ControlMode) -> Self {
        let omega: f64 = 6.0;
        let task = match mode {
            ControlMode::Shifted(dx) => shift_task(task, dx),
            _ => task.clone(),
        };
        Self {
            params: params.clone(),
            task,
            table: params.contact.table_height,
            stiffness: params.contact.stiffness,
            friction: params.contact.friction,
            mode,
            kp: omega * omega,
            kd: 2.0 * omega,
            max_accel: 6.0,
            damping: 0.05,
            approach_height: 0.04,
        }
    }

    fn contact_target(&self, goal: [f64; 2], p: [f64; 2], force: f64) -> ([f64; 2], Option<f64>) {
        let above = self.table + self.approach_height;
        if let ControlMode::Hover(h) = self.mode {
            return ([goal[0], goal[1].max(self.table) + h], None);
        }
        let touching = p[1] <= self.table;
        if (p[0] - goal[0]).abs() > 0.03 && !touching && p[1] > self.table + 0.005 {
            ([goal[0], above.max(goal[1])], None)
        } else {
            let press = if touching { Some(force) } else { None };
            ([goal[0], self.table - force / self.stiffness], press)
        }
    }

    fn target(&self, p: [f64; 2], v: [f64; 2]) -> Target {
        let still = |position, orientation, press| Target {
            position,
            velocity: [0.0; 2],
            accel: [0.0; 2],
            orientation,
            press,
        };
        let lift = match self.mode {
            ControlMode::Hover(h) => h,
            _ => 0.0,
        };
        match &self.task {
            Task::Reach { position, orientation } => {
                still([position[0], position[1] + lift], *orientation, None)
            }
            Task::ForceAt {
                position,
                orientation,
                force,
            } => {
                let (target, press) = self.contact_target(*position, p, *force);
                still(target, *orientation, press)
            }
            Task::Circle {
                center,
                radius,
                speed,
                orientation,
            } => {
                if self.mode == ControlMode::Static {
                    let start = [center[0] + radius, center[1]];
                    return still(start, *orientation, None);
                }
                let (nearest, v_ref) = circle_reference(*center, *radius, *speed, p);
                // centripetal feedforward toward the center
                let u = [(nearest[0] - center[0]) / radius, (nearest[1] - center[1]) / radius];
                let ac = speed * speed / radius;
                Target {
                    position: [nearest[0], nearest[1] + lift],
                    velocity: v_ref,
                    accel: [-ac * u[0], -ac * u[1]],
                    orientation: *orientation,
                    press: None,
                }
            }
            Task::SlideForce {
                start,
                end,
                speed,
                orientation,
                force,
            } => {
                if self.mode == ControlMode::Static {
                    let mid = [0.5 * (start[0] + end[0]), 0.5 * (start[1] + end[1])];
                    let (target, press) = self.contact_target(mid, p, *force);
                    return still(target, *orientation, press);
                }
                let (nearest, v_ref) = slide_reference(*start, *end, *speed, p, v);
                let (target, press) = self.contact_target(nearest, p, *force);
                let moving = press.is_some() || matches!(self.mode, ControlMode::Hover(_));
                Target {
                    position: target,
                    velocity: if moving { v_ref } else { [0.0; 2] },
                    accel: [0.0; 2],
                    orientation: *orientation,
                    press,
                }
            }
        }
    }

    /// Joint torques for the given arm state.
    pub fn torques(&self, s: &arm::ArmState) -> [f64; 3] {
        let p = &self.params;
        let pose = arm::forward_kinematics(p, &s.q);
        let jac = arm::jacobian(p, &s.q);
        let qd = Vector3::from(s.qd);
        let xd = jac * qd;
        let v = [xd[0], xd[1]];
        let target = self.target(pose.position, v);

        let mut a_lin = Vector2::new(
            target.accel[0]
                + self.kp * (target.position[0] - pose.position[0])
                + self.kd * (target.velocity[0] - v[0]),
            target.accel[1]
                + self.kp * (target.position[1] - pose.position[1])
                + self.kd * (target.velocity[1] - v[1]),
        );
        let n = a_lin.norm();
        if n > self.max_accel {
            a_lin *= self.max_accel / n;
        }
        let a_ang = (self.kp * wrap_angle(target.orientation - pose.orientation) - self.kd * xd[2])
            .clamp(-3.0 * self.max_accel, 3.0 * self.max_accel);
        let a_des = Vector3::new(a_lin[0], a_lin[1], a_ang);

        // J̇q̇ by a forward difference along the motion
        let eps = 1e-6;
        let q_ahead = [
            s.q[0] + eps * s.qd[0],
            s.q[1] + eps * s.qd[1],
            s.q[2] + eps * s.qd[2],
        ];
        let jdot_qd = (arm::jacobian(p, &q_ahead) - jac) / eps * qd;

        let jjt = jac * jac.transpose() + Matrix3::identity() * (self.damping * self.damping);
        let rhs = a_des - jdot_qd;
        let y = jjt.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(Vector3::zeros);
        let qdd = jac.transpose() * y;

        let mass = arm::mass_matrix(p, &s.q);
        let bias = arm::bias_torques(p, &s.q, &s.qd);
        let grav = arm::gravity_torques(p, &s.q);
        let mut tau = mass * qdd;
        for i in 0..3 {
            tau[i] += bias[i] - grav[i] + p.joint_damping * s.qd[i];
        }
        if !p.gravity_compensation {
            for i in 0..3 {
                tau[i] += grav[i];
            }
        }
        if let Some(f) = target.press {
            let jp = jac.fixed_rows::<2>(0).into_owned();
            // push into the table and cancel kinetic friction along the commanded motion
            let vt = target.velocity[0];
            let drag = if vt != 0.0 { self.friction * f * vt.signum() } else { 0.0 };
            let f_ff = Vector2::new(drag, -f);
            tau += jp.transpose() * f_ff;
        }
        [tau[0], tau[1], tau[2]]
    }
}

impl Policy for ArmController {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        let s = decode_arm_obs(obs);
        let tau = self.torques(&s);
        (0..3)
            .map(|i| (tau[i] / self.params.torque_limits[i]).clamp(-1.0, 1.0))
            .collect()
    }
}

fn shift_task(task: &Task, dx: f64) -> Task {
    let sh = |p: &[f64; 2]| [p[0] + dx, p[1]];
    match task {
        Task::Reach { position, orientation } => Task::Reach {
            position: sh(position),
            orientation: *orientation,
        },
        Task::ForceAt {
            position,
            orientation,
            force,
        } => Task::ForceAt {
            position: sh(position),
            orientation: *orientation,
            force: *force,
        },
        Task::Circle {
            center,
            radius,
            speed,
            orientation,
        } => Task::Circle {
            center: sh(center),
            radius: *radius,
            speed: *speed,
            orientation: *orientation,
        },
        Task::SlideForce {
            start,
            end,
            speed,
            orientation,
            force,
        } => Task::SlideForce {
            start: sh(start),
            end: sh(end),
            speed: *speed,
            orientation: *orientation,
            force: *force,
        },
    }
}

pub type BoxedPolicy = Box<dyn Policy + Send + Sync>;

/// Scripted expert solving `spec`.
pub fn expert_for(spec: &TaskSpec, config: &EnvConfig) -> BoxedPolicy {
    match (spec.env, &spec.task) {
        (EnvKind::PointMass, Task::Reach { position, .. }) => Box::new(PointMassExpert::new(*position)),
        (EnvKind::PointMass, _) => Box::new(ZeroPolicy(2)),
        (EnvKind::Arm, task) => Box::new(ArmController::new(&config.arm, task, ControlMode::Expert)),
    }
}

/// Policies that solve only part of `spec`, each with a short label.
///
/// For contact tasks these never touch the table, so the calibrated threshold
/// marks whether the contact part of the task is achieved.
pub fn partial_policies(spec: &TaskSpec, config: &EnvConfig) -> Vec<(&'static str, BoxedPolicy)> {
    let arm = |mode| -> BoxedPolicy { Box::new(ArmController::new(&config.arm, &spec.task, mode)) };
    match (spec.env, &spec.task) {
        (EnvKind::PointMass, Task::Reach { position, .. }) => vec![
            ("hold", Box::new(ZeroPolicy(2)) as BoxedPolicy),
            (
                "stop-short",
                Box::new(PointMassExpert {
                    goal: *position,
                    tolerance: 1.0,
                }),
            ),
        ],
        (EnvKind::PointMass, _) => vec![("hold", Box::new(ZeroPolicy(2)))],
        (EnvKind::Arm, Task::Reach { .. }) => vec![
            ("hold", Box::new(ZeroPolicy(3))),
            ("hover", arm(ControlMode::Hover(0.15))),
            ("shifted", arm(ControlMode::Shifted(0.15))),
        ],
        (EnvKind::Arm, Task::ForceAt { .. }) => vec![
            ("hold", Box::new(ZeroPolicy(3))),
            ("hover", arm(ControlMode::Hover(0.05))),
        ],
        (EnvKind::Arm, Task::Circle { .. }) => vec![
            ("hold", Box::new(ZeroPolicy(3))),
            ("static", arm(ControlMode::Static)),
            ("hover", arm(ControlMode::Hover(0.15))),
        ],
        (EnvKind::Arm, Task::SlideForce { .. }) => vec![
            ("hold", Box::new(ZeroPolicy(3))),
            ("hover", arm(ControlMode::Hover(0.05))),
        ],
    }
}
