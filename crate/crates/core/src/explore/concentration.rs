//! Point-mass illustration of why the exploration model conditions on a
//! state history: pooled single-state actions of many goal-reaching policies
//! point everywhere, while actions after a consistent history agree.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    collect_trajectories, sample_subsequences, train_lep, ExploreError, GaussianSequenceModel,
    LepConfig, LepSampler, Source,
};
use crate::envs::{
    EnvConfig, EnvKind, Policy, PointMassExpert, RewardWeights, Task, TaskSpec,
};

/// `1 - |mean unit vector|`; zero-length vectors are skipped.
pub fn circular_variance(dirs: &[[f64; 2]]) -> f64 {
    let mut sum = [0.0, 0.0];
    let mut n = 0usize;
    for d in dirs {
        let len = d[0].hypot(d[1]);
        if len > 1e-12 {
            sum[0] += d[0] / len;
            sum[1] += d[1] / len;
            n += 1;
        }
    }
    if n == 0 {
        return 0.0;
    }
    1.0 - sum[0].hypot(sum[1]) / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrationConfig {
    pub goals: usize,
    pub probe: [f64; 2],
    /// Goals lie on an annulus around the probe state.
    pub goal_radius: [f64; 2],
    pub rollouts_per_goal: usize,
    /// Steps of straight-line motion fed before sampling at the probe.
    pub history: usize,
    pub samples: usize,
    pub lep: LepConfig,
    pub seed: u64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        Self {
            goals: 100,
            probe: [0.0, 0.0],
            goal_radius: [1.5, 3.5],
            rollouts_per_goal: 2,
            history: 10,
            samples: 500,
            lep: LepConfig {
                hidden: 32,
                horizon: 20,
                windows: 4000,
                epochs: 15,
                batch_size: 32,
                lr: 3e-3,
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub goals: Vec<[f64; 2]>,
    /// Action of every goal policy at the probe state.
    pub pooled_actions: Vec<[f64; 2]>,
    pub single_state_variance: f64,
    /// Positions of the conditioning history, ending at the probe.
    pub history: Vec<[f64; 2]>,
    /// LEP samples after the history.
    pub history_samples: Vec<[f64; 2]>,
    pub history_variance: f64,
    pub lep_loss: Vec<f64>,
}

fn goal_spec(goal: [f64; 2], instance: u64) -> TaskSpec {
    TaskSpec {
        env: EnvKind::PointMass,
        task: Task::Reach {
            position: goal,
            orientation: 0.0,
        },
        weights: RewardWeights::default(),
        success_threshold: 0.0,
        horizon: 100,
        instance,
    }
}

/// Trains an LEP on goal-reaching trajectories and measures both spreads.
pub fn conditioning_concentration(
    config: &ConcentrationConfig,
    env: &EnvConfig,
) -> Result<ConcentrationReport, ExploreError> {
    if config.goals == 0 || config.samples == 0 || config.rollouts_per_goal == 0 {
        return Err(ExploreError::Param("goals, samples and rollouts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.probe;
    let goals: Vec<[f64; 2]> = (0..config.goals)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(config.goal_radius[0]..=config.goal_radius[1]);
            [p[0] + r * a.cos(), p[1] + r * a.sin()]
        })
        .collect();

    let pooled_actions: Vec<[f64; 2]> = goals
        .iter()
        .map(|g| {
            let a = PointMassExpert::new(*g).act(&p);
            [a[0], a[1]]
        })
        .collect();

    let specs: Vec<TaskSpec> = goals
        .iter()
        .enumerate()
        .map(|(i, g)| goal_spec(*g, i as u64))
        .collect();
    let expert = |spec: &TaskSpec| -> Box<dyn Policy + Send + Sync> {
        match spec.task {
            Task::Reach { position, .. } => Box::new(PointMassExpert::new(position)),
            _ => unreachable!("point-mass specs are reach tasks"),
        }
    };
    let trajectories = collect_trajectories(
        &specs,
        &expert,
        Source::Scripted,
        config.rollouts_per_goal,
        config.seed.wrapping_mul(7919),
        env,
    )?;
    let ds = sample_subsequences(trajectories, config.lep.horizon, config.lep.windows, &mut rng)?;
    let mut model = GaussianSequenceModel::new(2, 2, config.lep.hidden, config.lep.horizon, &mut rng);
    let lep_loss = train_lep(&ds, &mut model, &config.lep, &mut rng)?;

    // straight approach to the probe, heading for the first goal
    let g = goals[0];
    let len = (g[0] - p[0]).hypot(g[1] - p[1]);
    let u = [(g[0] - p[0]) / len, (g[1] - p[1]) / len];
    let step = env.point_mass.speed * env.point_mass.dt;
    let history: Vec<[f64; 2]> = (0..=config.history)
        .rev()
        .map(|k| [p[0] - u[0] * step * k as f64, p[1] - u[1] * step * k as f64])
        .collect();
    let mut sampler = LepSampler::new(Arc::new(model));
    let mut dist = (vec![], vec![]);
    for (t, s) in history.iter().enumerate() {
        dist = sampler.distribution_at(t, s)?;
    }
    let (mean, std) = dist;
    let history_samples: Vec<[f64; 2]> = (0..config.samples)
        .map(|_| {
            let n0: f64 = rng.sample(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            [mean[0] + std[0] * n0, mean[1] + std[1] * n1]
        })
        .collect();

    Ok(ConcentrationReport {
        single_state_variance: circular_variance(&pooled_actions),
        history_variance: circular_variance(&history_samples),
        goals,
        pooled_actions,
        history,
        history_samples,
        lep_loss,
    })
}
