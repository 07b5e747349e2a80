use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::experiment::{run_experiment, Exploration, ExperimentPlan};
use super::PipelineError;
use crate::ddpg::{ActorPolicy, DdpgConfig};
use crate::envs::{evaluate, expert_for, is_success, BoxedPolicy, Env, EnvConfig, TaskSpec};
use crate::explore::{
    collect_trajectories, sample_subsequences, train_lep, GaussianSequenceModel, LepConfig, Source, Trajectory,
};
use crate::nn::Mlp;

#[derive(Clone, Debug)]
pub struct CurriculumConfig {
    pub env: EnvConfig,
    pub ddpg: DdpgConfig,
    pub lep: LepConfig,
    /// Training seeds per task instance in rounds after the first.
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub cadence: usize,
    pub eval_seeds: Vec<u64>,
    pub workers: usize,
    /// Noise-free rollouts collected from every kept policy.
    pub rollouts_per_policy: usize,
    pub collect_seed: u64,
    pub lep_seed: u64,
    pub config_hash: String,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            ddpg: DdpgConfig::default(),
            lep: LepConfig::default(),
            seeds: vec![0],
            budget: 300,
            cadence: 10,
            eval_seeds: (1_000_001..=1_000_005).collect(),
            workers: 1,
            rollouts_per_policy: 5,
            collect_seed: 0,
            lep_seed: 0,
            config_hash: String::new(),
        }
    }
}

/// A policy that passed its success test.
#[derive(Clone, Debug)]
pub struct PolicyRecord {
    pub task: TaskSpec,
    pub seed: u64,
    pub source: Source,
    pub eval_return: f64,
    /// `None` for scripted experts.
    pub actor: Option<Mlp>,
}

impl PolicyRecord {
    pub fn policy(&self, env: &EnvConfig) -> BoxedPolicy {
        match &self.actor {
            Some(a) => Box::new(ActorPolicy(a.clone())),
            None => expert_for(&self.task, env),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub tasks: Vec<String>,
    /// Candidate policies trained or evaluated this round.
    pub attempted: usize,
    pub kept: usize,
    pub trajectories_added: usize,
    pub dataset_size: usize,
    pub lep_loss: Vec<f64>,
    #[serde(skip)]
    pub policies: Vec<PolicyRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct CurriculumState {
    /// Rounds completed so far.
    pub round: usize,
    pub dataset: Vec<Trajectory>,
    pub model: Option<Arc<GaussianSequenceModel>>,
    pub history: Vec<RoundRecord>,
}

impl CurriculumState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of LEP models trained so far; the model in `model` is `v{version}`.
    pub fn model_version(&self) -> usize {
        self.history.len()
    }
}

/// One collect, retrain, solve step.
///
/// Round 0 (no model yet) evaluates the scripted experts of `specs`. Later
/// rounds train DDPG with the current LEP on every instance and seed. Policies
/// passing [`is_success`] contribute noise-free trajectories to the dataset
/// and the LEP is retrained from scratch on everything collected so far.
/// Returns the new state; `state` itself is never modified.
pub fn curriculum_round(
    state: &CurriculumState,
    specs: &[TaskSpec],
    config: &CurriculumConfig,
) -> Result<CurriculumState, PipelineError> {
    let round = state.round;
    if specs.is_empty() {
        return Err(PipelineError::Plan("a curriculum round needs at least one task".into()));
    }
    config.lep.validate()?;
    let abort = |reason: String| PipelineError::Aborted { round, reason };

    let (kept, attempted) = match &state.model {
        None => {
            let mut kept = Vec::new();
            for spec in specs {
                let mut env = Env::new(spec, &config.env)?;
                let expert = expert_for(spec, &config.env);
                let r = evaluate(&mut env, expert.as_ref(), &config.eval_seeds)?;
                if is_success(spec, r) {
                    kept.push(PolicyRecord {
                        task: spec.clone(),
                        seed: 0,
                        source: Source::Scripted,
                        eval_return: r,
                        actor: None,
                    });
                } else {
                    log::warn!("scripted expert for {} scores {r:.3}, below its threshold", spec.id());
                }
            }
            (kept, specs.len())
        }
        Some(model) => {
            let mut plan = ExperimentPlan::new(specs.to_vec(), vec![Exploration::Lep(Arc::clone(model))], config.seeds.clone());
            plan.budget = config.budget;
            plan.cadence = config.cadence;
            plan.eval_seeds = config.eval_seeds.clone();
            plan.ddpg = config.ddpg.clone();
            plan.env = config.env.clone();
            plan.workers = config.workers;
            plan.stop_on_success = true;
            plan.config_hash = config.config_hash.clone();
            let result = run_experiment(&plan, None)?;
            let attempted = result.runs.len();
            let kept = result
                .runs
                .into_iter()
                .zip(plan.specs.iter().flat_map(|s| plan.seeds.iter().map(move |_| s)))
                .filter(|(r, _)| r.succeeded())
                .map(|(r, spec)| PolicyRecord {
                    task: spec.clone(),
                    seed: r.seed,
                    source: Source::DdpgLep,
                    eval_return: r.final_eval().expect("successful runs have evaluations"),
                    actor: r.actor,
                })
                .collect::<Vec<_>>();
            (kept, attempted)
        }
    };
    if kept.is_empty() {
        return Err(abort(format!("none of {attempted} policies reached their success threshold")));
    }

    let mut added = Vec::new();
    for (p, record) in kept.iter().enumerate() {
        let seed = config.collect_seed + 1_000_000 * round as u64 + 1_000 * p as u64;
        let policy = |_: &TaskSpec| record.policy(&config.env);
        added.extend(collect_trajectories(
            std::slice::from_ref(&record.task),
            &policy,
            record.source,
            config.rollouts_per_policy,
            seed,
            &config.env,
        )?);
    }
    let mut dataset = state.dataset.clone();
    let trajectories_added = added.len();
    dataset.extend(added);

    let mut rng = ChaCha8Rng::seed_from_u64(config.lep_seed.wrapping_add(round as u64));
    let windows = sample_subsequences(dataset.clone(), config.lep.horizon, config.lep.windows, &mut rng)?;
    let mut model = GaussianSequenceModel::new(
        windows.state_dim(),
        windows.action_dim(),
        config.lep.hidden,
        config.lep.horizon,
        &mut rng,
    );
    let lep_loss = train_lep(&windows, &mut model, &config.lep, &mut rng)?;
    log::info!(
        "round {round}: kept {}/{attempted} policies, dataset {} trajectories, final LEP loss {:.4}",
        kept.len(),
        dataset.len(),
        lep_loss.last().copied().unwrap_or(f64::NAN)
    );

    let mut history = state.history.clone();
    history.push(RoundRecord {
        round,
        tasks: specs.iter().map(TaskSpec::id).collect(),
        attempted,
        kept: kept.len(),
        trajectories_added,
        dataset_size: dataset.len(),
        lep_loss,
        policies: kept,
    });
    Ok(CurriculumState {
        round: round + 1,
        dataset,
        model: Some(Arc::new(model)),
        history,
    })
}
