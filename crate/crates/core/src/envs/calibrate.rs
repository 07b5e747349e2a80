//! Task instance generation and success-threshold calibration.
//!
//! A threshold sits between the scripted expert's evaluation return and the
//! best return among policies that solve only part of the task.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::experts::{expert_for, partial_policies};
use super::tasks::{EnvKind, RewardWeights, Task, TaskFamily, TaskSpec};
use super::{evaluate, Env, EnvConfig, EnvError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// Reset seeds of the noise-free evaluation rollouts.
    pub eval_seeds: Vec<u64>,
    /// Position of the threshold between the best partial policy (0) and the expert (1).
    pub fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            eval_seeds: vec![1_000_001, 1_000_002, 1_000_003, 1_000_004, 1_000_005],
            fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub expert: f64,
    pub partial: Vec<(String, f64)>,
    pub threshold: f64,
}

/// Evaluates the expert and partial policies on `spec` and places the threshold.
pub fn calibrate(spec: &TaskSpec, config: &EnvConfig, cal: &CalibrationConfig) -> Result<Calibration, EnvError> {
    if cal.eval_seeds.is_empty() {
        return Err(EnvError::InvalidSpec("calibration needs at least one eval seed".into()));
    }
    if !(cal.fraction > 0.0 && cal.fraction < 1.0) {
        return Err(EnvError::InvalidSpec(format!(
            "calibration fraction {} outside (0, 1)",
            cal.fraction
        )));
    }
    let mut env = Env::new(spec, config)?;
    let expert = evaluate(&mut env, expert_for(spec, config).as_ref(), &cal.eval_seeds)?;
    let mut partial = Vec::new();
    for (label, policy) in partial_policies(spec, config) {
        partial.push((label.to_string(), evaluate(&mut env, policy.as_ref(), &cal.eval_seeds)?));
    }
    let best = partial.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if expert <= best {
        return Err(EnvError::InvalidSpec(format!(
            "{}: expert return {expert:.3} does not beat partial policies ({best:.3})",
            spec.id()
        )));
    }
    Ok(Calibration {
        expert,
        partial,
        threshold: best + cal.fraction * (expert - best),
    })
}

/// Default episode length of a family.
pub fn default_horizon(family: TaskFamily) -> usize {
    match family.env() {
        EnvKind::PointMass => 100,
        EnvKind::Arm => 200,
    }
}

/// Draws `count` goal instances of `family`, deterministically from `seed`.
/// Thresholds are left at zero.
pub fn sample_instances(family: TaskFamily, count: usize, seed: u64) -> Vec<TaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let down = -FRAC_PI_2;
    (0..count)
        .map(|i| {
            let task = match family {
                TaskFamily::PointReach => Task::Reach {
                    position: [rng.gen_range(-4.0..=4.0), rng.gen_range(-4.0..=4.0)],
                    orientation: 0.0,
                },
                TaskFamily::Reach => Task::Reach {
                    position: [rng.gen_range(0.9..=1.6), rng.gen_range(0.05..=0.8)],
                    orientation: down,
                },
                TaskFamily::ForceAt => Task::ForceAt {
                    position: [rng.gen_range(0.9..=1.6), 0.0],
                    orientation: down,
                    force: 10.0,
                },
                TaskFamily::Circle => Task::Circle {
                    center: [rng.gen_range(0.9..=1.2), rng.gen_range(0.3..=0.5)],
                    radius: rng.gen_range(0.15..=0.25),
                    speed: 0.5,
                    orientation: down,
                },
                TaskFamily::SlideForce => {
                    let x = rng.gen_range(0.9..=1.2);
                    Task::SlideForce {
                        start: [x, 0.0],
                        end: [x + 0.4, 0.0],
                        speed: 0.3,
                        orientation: down,
                        force: 10.0,
                    }
                }
            };
            TaskSpec {
                env: family.env(),
                task,
                weights: RewardWeights::default(),
                success_threshold: 0.0,
                horizon: default_horizon(family),
                instance: i as u64,
            }
        })
        .collect()
}

/// [`sample_instances`] followed by per-instance calibration.
pub fn make_instances(
    family: TaskFamily,
    count: usize,
    seed: u64,
    config: &EnvConfig,
    cal: &CalibrationConfig,
) -> Result<Vec<TaskSpec>, EnvError> {
    sample_instances(family, count, seed)
        .into_iter()
        .map(|mut spec| {
            spec.success_threshold = calibrate(&spec, config, cal)?.threshold;
            Ok(spec)
        })
        .collect()
}
