//! Seedable simulated environments and task rewards.
//!
//! Two systems are provided: a point mass moving at fixed speed in the plane
//! and a torque-controlled three-link planar arm above a table. Episodes have
//! a fixed horizon; `done` is set only on the last step.

pub mod arm;
mod calibrate;
mod experts;
mod point_mass;
mod tasks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use arm::{contact_force, forward_kinematics, ArmParams, ArmState, ContactParams, EePose};
pub use calibrate::{calibrate, default_horizon, make_instances, sample_instances, Calibration, CalibrationConfig};
pub use experts::{expert_for, partial_policies, ArmController, BoxedPolicy, ControlMode, PointMassExpert, ZeroPolicy};
pub use point_mass::{point_mass_step, PointMassParams};
pub use tasks::{
    circle_reference, is_success, slide_reference, task_reward, wrap_angle, EeReading, EnvKind,
    RewardTerms, RewardWeights, Task, TaskFamily, TaskSpec,
};

/// Joint velocities are multiplied by this in observations.
pub const VELOCITY_OBS_SCALE: f64 = 0.1;
/// Contact forces are multiplied by this in observations.
pub const FORCE_OBS_SCALE: f64 = 0.02;

pub const ARM_OBS_DIM: usize = 8;
pub const ARM_ACTION_DIM: usize = 3;
pub const POINT_OBS_DIM: usize = 2;
pub const POINT_ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("unknown task `{name}`; valid tasks: {valid}")]
    UnknownTask { name: String, valid: String },
    #[error("action has {found} entries, expected {expected}")]
    ActionDim { expected: usize, found: usize },
    #[error("action contains non-finite values")]
    NonFiniteAction,
    #[error("episode already finished after {0} steps")]
    EpisodeOver(usize),
}

/// Physical parameters shared by every task of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub arm: ArmParams,
    pub point_mass: PointMassParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub contact: bool,
    pub terms: RewardTerms,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// A deterministic policy mapping observations to actions.
pub trait Policy {
    fn act(&self, obs: &[f64]) -> Vec<f64>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        (**self).act(obs)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        (**self).act(obs)
    }
}

#[derive(Clone, Debug)]
enum System {
    PointMass { params: PointMassParams, p: [f64; 2] },
    Arm { params: ArmParams, state: ArmState },
}

/// One environment instance bound to a task.
#[derive(Clone, Debug)]
pub struct Env {
    spec: TaskSpec,
    system: System,
    t: usize,
}

impl Env {
    pub fn new(spec: &TaskSpec, config: &EnvConfig) -> Result<Self, EnvError> {
        let system = match spec.env {
            EnvKind::PointMass => System::PointMass {
                params: config.point_mass,
                p: [0.0; 2],
            },
            EnvKind::Arm => System::Arm {
                params: config.arm.clone(),
                state: ArmState::at_rest([0.0; 3]),
            },
        };
        let reach = match &system {
            System::Arm { params, .. } => params.reach(),
            System::PointMass { params, .. } => params.half_extent * std::f64::consts::SQRT_2,
        };
        spec.validate(reach)?;
        Ok(Self {
            spec: spec.clone(),
            system,
            t: 0,
        })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn obs_dim(&self) -> usize {
        match self.system {
            System::PointMass { .. } => POINT_OBS_DIM,
            System::Arm { .. } => ARM_OBS_DIM,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self.system {
            System::PointMass { .. } => POINT_ACTION_DIM,
            System::Arm { .. } => ARM_ACTION_DIM,
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    /// Steps taken in the current episode.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn arm_state(&self) -> Option<&ArmState> {
        match &self.system {
            System::Arm { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn point_position(&self) -> Option<[f64; 2]> {
        match &self.system {
            System::PointMass { p, .. } => Some(*p),
            _ => None,
        }
    }

    /// Arm: `q` uniform in a configuration box with the end-effector at
    /// least 5 cm above the table, at rest. Point mass: uniform in the workspace.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        match &mut self.system {
            System::PointMass { params, p } => {
                let e = params.half_extent;
                *p = [rng.gen_range(-e..=e), rng.gen_range(-e..=e)];
            }
            System::Arm { params, state } => {
                let table = params.contact.table_height;
                loop {
                    let q = [
                        rng.gen_range(0.2..=1.5),
                        rng.gen_range(-2.0..=-0.3),
                        rng.gen_range(-1.5..=0.0),
                    ];
                    if forward_kinematics(params, &q).position[1] >= table + 0.05 {
                        *state = ArmState::at_rest(q);
                        break;
                    }
                }
            }
        }
        self.observation()
    }

    /// Restarts the episode from an explicit arm state.
    pub fn reset_to_arm_state(&mut self, s: ArmState) -> Vec<f64> {
        self.t = 0;
        if let System::Arm { state, .. } = &mut self.system {
            *state = s;
        }
        self.observation()
    }

    pub fn reset_to_point(&mut self, position: [f64; 2]) -> Vec<f64> {
        self.t = 0;
        if let System::PointMass { p, .. } = &mut self.system {
            *p = position;
        }
        self.observation()
    }

    pub fn observation(&self) -> Vec<f64> {
        match &self.system {
            System::PointMass { p, .. } => p.to_vec(),
            System::Arm { state, .. } => encode_arm_obs(state),
        }
    }

    /// Current end-effector reading (the point mass has no orientation or contact).
    pub fn reading(&self) -> EeReading {
        match &self.system {
            System::PointMass { p, .. } => EeReading {
                position: *p,
                orientation: 0.0,
                velocity: [0.0; 2],
                in_contact: false,
                normal_force: 0.0,
            },
            System::Arm { params, state } => arm_reading(params, state),
        }
    }

    /// Applies a normalized action. Arm actions are torques as fractions of
    /// the joint limits; point-mass actions are directions.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        if self.t >= self.spec.horizon {
            return Err(EnvError::EpisodeOver(self.t));
        }
        if action.len() != self.action_dim() {
            return Err(EnvError::ActionDim {
                expected: self.action_dim(),
                found: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        match &mut self.system {
            System::PointMass { params, p } => {
                *p = point_mass_step(params, *p, [action[0], action[1]]);
            }
            System::Arm { params, state } => {
                let tau = [
                    action[0] * params.torque_limits[0],
                    action[1] * params.torque_limits[1],
                    action[2] * params.torque_limits[2],
                ];
                *state = arm::integrate(params, state, &tau, params.substeps, params.dt);
            }
        }
        self.t += 1;
        let reading = self.reading();
        let (reward, terms) = task_reward(&self.spec, &reading);
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done: self.t == self.spec.horizon,
            info: StepInfo {
                contact: reading.in_contact,
                terms,
            },
        })
    }
}

pub fn encode_arm_obs(s: &ArmState) -> Vec<f64> {
    let mut obs = Vec::with_capacity(ARM_OBS_DIM);
    obs.extend_from_slice(&s.q);
    obs.extend(s.qd.iter().map(|v| v * VELOCITY_OBS_SCALE));
    obs.extend(s.force.iter().map(|f| f * FORCE_OBS_SCALE));
    obs
}

pub fn decode_arm_obs(obs: &[f64]) -> ArmState {
    ArmState {
        q: [obs[0], obs[1], obs[2]],
        qd: [
            obs[3] / VELOCITY_OBS_SCALE,
            obs[4] / VELOCITY_OBS_SCALE,
            obs[5] / VELOCITY_OBS_SCALE,
        ],
        force: [obs[6] / FORCE_OBS_SCALE, obs[7] / FORCE_OBS_SCALE],
    }
}

fn arm_reading(params: &ArmParams, state: &ArmState) -> EeReading {
    let pose = forward_kinematics(params, &state.q);
    EeReading {
        position: pose.position,
        orientation: pose.orientation,
        velocity: arm::ee_velocity(params, &state.q, &state.qd),
        in_contact: params.contact.enabled && pose.position[1] < params.contact.table_height,
        normal_force: state.force[1],
    }
}

/// Observations, actions and rewards of one episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub contacts: usize,
}

impl Rollout {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs `policy` without exploration for a full episode from `reset(seed)`.
///
/// `observations[t]` is the observation the action `actions[t]` was chosen from.
pub fn rollout(env: &mut Env, policy: &dyn Policy, seed: u64) -> Result<Rollout, EnvError> {
    let mut obs = env.reset(seed);
    let mut out = Rollout::default();
    loop {
        let action = policy.act(&obs);
        let step = env.step(&action)?;
        out.observations.push(std::mem::replace(&mut obs, step.obs));
        out.actions.push(action);
        out.rewards.push(step.reward);
        out.contacts += step.info.contact as usize;
        if step.done {
            return Ok(out);
        }
    }
}

/// Mean cumulative reward of noise-free rollouts from each seed.
pub fn evaluate(env: &mut Env, policy: &dyn Policy, seeds: &[u64]) -> Result<f64, EnvError> {
    let mut total = 0.0;
    for &s in seeds {
        total += rollout(env, policy, s)?.total_reward();
    }
    Ok(total / seeds.len() as f64)
}
