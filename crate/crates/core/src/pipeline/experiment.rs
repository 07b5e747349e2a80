use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::stats::{aggregate_curves, episodes_to_threshold, histogram};
use super::PipelineError;
use crate::ddpg::{DdpgAgent, DdpgConfig, ReplayBuffer};
use crate::envs::{evaluate, is_success, Env, EnvConfig, TaskSpec};
use crate::explore::{ExplorationProcess, GaussianNoise, GaussianSequenceModel, LepSampler, OuNoise, OuParams};
use crate::nn::Mlp;

/// Exploration variant and its parameters.
#[derive(Clone, Debug)]
pub enum Exploration {
    Gaussian { sigma: f64 },
    Ou(OuParams),
    Lep(Arc<GaussianSequenceModel>),
}

impl Exploration {
    /// Stable name used for output files and grouping.
    pub fn label(&self) -> String {
        match self {
            Self::Gaussian { sigma } => format!("gaussian-s{sigma}"),
            Self::Ou(p) => format!("ou-t{}-s{}", p.theta, p.sigma),
            Self::Lep(m) => format!("lep-h{}", m.horizon()),
        }
    }

    pub fn build(&self, action_dim: usize) -> Result<Box<dyn ExplorationProcess>, PipelineError> {
        Ok(match self {
            Self::Gaussian { sigma } => Box::new(GaussianNoise::new(*sigma, action_dim)?),
            Self::Ou(p) => Box::new(OuNoise::new(*p, action_dim)?),
            Self::Lep(m) => Box::new(LepSampler::new(Arc::clone(m))),
        })
    }

    /// Rejects variants that cannot drive `env`.
    pub fn check(&self, env: &Env) -> Result<(), PipelineError> {
        if let Self::Lep(m) = self {
            if m.state_dim() != env.obs_dim() || m.action_dim() != env.action_dim() {
                return Err(PipelineError::Plan(format!(
                    "LEP model is ({} states, {} actions) but {} is ({}, {})",
                    m.state_dim(),
                    m.action_dim(),
                    env.spec().id(),
                    env.obs_dim(),
                    env.action_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Everything one batch of training runs needs.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub specs: Vec<TaskSpec>,
    pub variants: Vec<Exploration>,
    pub seeds: Vec<u64>,
    /// Training episodes per run.
    pub budget: usize,
    /// Evaluate after every `cadence` completed episodes and after the last.
    pub cadence: usize,
    pub eval_seeds: Vec<u64>,
    pub ddpg: DdpgConfig,
    pub env: EnvConfig,
    pub workers: usize,
    /// End a run at its first successful evaluation.
    pub stop_on_success: bool,
    pub config_hash: String,
}

impl ExperimentPlan {
    pub fn new(specs: Vec<TaskSpec>, variants: Vec<Exploration>, seeds: Vec<u64>) -> Self {
        Self {
            specs,
            variants,
            seeds,
            budget: 300,
            cadence: 10,
            eval_seeds: (1_000_001..=1_000_005).collect(),
            ddpg: DdpgConfig::default(),
            env: EnvConfig::default(),
            workers: 1,
            stop_on_success: false,
            config_hash: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Plan(m.into()));
        if self.specs.is_empty() {
            return bad("at least one task instance is required");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.variants.is_empty() {
            return bad("at least one exploration variant is required");
        }
        if self.budget == 0 {
            return bad("episode budget must be at least 1");
        }
        if self.cadence == 0 {
            return bad("evaluation cadence must be at least 1");
        }
        if self.eval_seeds.is_empty() {
            return bad("at least one evaluation seed is required");
        }
        if self.workers == 0 {
            return bad("worker count must be at least 1");
        }
        self.ddpg.validate()?;
        Ok(())
    }

    pub fn run_count(&self) -> usize {
        self.specs.len() * self.variants.len() * self.seeds.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalPoint {
    /// Training episodes completed before this evaluation.
    pub episode: usize,
    pub train_return: f64,
    /// Mean cumulative reward of the noise-free evaluation rollouts.
    pub eval_return: f64,
    pub success: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LearningCurve {
    pub points: Vec<EvalPoint>,
}

/// One (variant, instance, seed) run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub variant: String,
    pub task: String,
    pub instance: u64,
    pub seed: u64,
    pub threshold: f64,
    pub curve: LearningCurve,
    pub error: Option<String>,
    /// Actor after the last evaluation.
    pub actor: Option<Mlp>,
}

impl RunRecord {
    pub fn final_eval(&self) -> Option<f64> {
        self.curve.points.last().map(|p| p.eval_return)
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.curve.points.last().is_some_and(|p| p.success)
    }

    pub fn episodes_to_threshold(&self) -> Option<usize> {
        episodes_to_threshold(&self.curve, self.threshold)
    }

    fn file_stem(&self) -> String {
        format!("{}-seed{}", self.task.replace('/', "-"), self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    /// Variant labels in plan order.
    pub variants: Vec<String>,
    /// Runs ordered by variant, then instance, then seed.
    pub runs: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn runs_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.variant == variant)
    }

    /// Episodes to threshold of every run of `variant`, `None` for runs that never got there.
    pub fn episodes_to_threshold(&self, variant: &str) -> Vec<Option<usize>> {
        self.runs_for(variant).map(|r| r.episodes_to_threshold()).collect()
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }
}

fn mix(seed: u64, instance: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(instance.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains a fresh agent on `spec` with `variant` for the plan's budget.
///
/// Agent initialization and episode resets depend only on `(seed, instance)`,
/// so every variant sees the same initial networks and start states.
pub fn run_single(
    spec: &TaskSpec,
    variant: &Exploration,
    seed: u64,
    plan: &ExperimentPlan,
) -> Result<(LearningCurve, Mlp), PipelineError> {
    let run_seed = mix(seed, spec.instance);
    let mut env = Env::new(spec, &plan.env)?;
    variant.check(&env)?;
    let mut eval_env = env.clone();
    let mut agent = DdpgAgent::new(env.obs_dim(), env.action_dim(), plan.ddpg.clone(), run_seed)?;
    let mut exploration = variant.build(env.action_dim())?;
    let mut buffer = ReplayBuffer::new(plan.ddpg.buffer_capacity);
    let mut curve = LearningCurve::default();
    for ep in 1..=plan.budget {
        let stats = agent.train_episode(
            &mut env,
            exploration.as_mut(),
            &mut buffer,
            run_seed.wrapping_add(ep as u64),
        )?;
        if ep % plan.cadence == 0 || ep == plan.budget {
            let eval_return = evaluate(&mut eval_env, &agent, &plan.eval_seeds)?;
            let success = is_success(spec, eval_return);
            log::debug!("{} {} seed {seed} episode {ep}: eval {eval_return:.3}", variant.label(), spec.id());
            curve.points.push(EvalPoint {
                episode: ep,
                train_return: stats.episode_return,
                eval_return,
                success,
            });
            if success && plan.stop_on_success {
                break;
            }
        }
    }
    Ok((curve, agent.actor().clone()))
}

/// Runs every (variant, instance, seed) combination on a pool of
/// `plan.workers` threads. A failing run is recorded with its error and the
/// others continue. With `out`, writes per-run CSVs, aggregate and histogram
/// CSVs per variant and `manifest.json`.
pub fn run_experiment(plan: &ExperimentPlan, out: Option<&Path>) -> Result<ExperimentResult, PipelineError> {
    plan.validate()?;
    let mut jobs = Vec::with_capacity(plan.run_count());
    for variant in &plan.variants {
        for spec in &plan.specs {
            for &seed in &plan.seeds {
                jobs.push((variant, spec, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| PipelineError::Plan(format!("worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(variant, spec, seed)| {
                let outcome = run_single(spec, variant, seed, plan);
                let mut record = RunRecord {
                    variant: variant.label(),
                    task: spec.id(),
                    instance: spec.instance,
                    seed,
                    threshold: spec.success_threshold,
                    curve: LearningCurve::default(),
                    error: None,
                    actor: None,
                };
                match outcome {
                    Ok((curve, actor)) => {
                        record.curve = curve;
                        record.actor = Some(actor);
                    }
                    Err(e) => {
                        log::error!("{} {} seed {seed} failed: {e}", record.variant, record.task);
                        record.error = Some(e.to_string());
                    }
                }
                log::info!(
                    "{} {} seed {seed}: threshold reached at {:?}",
                    record.variant,
                    record.task,
                    record.episodes_to_threshold()
                );
                record
            })
            .collect()
    });
    let mut variants: Vec<String> = Vec::new();
    for v in &plan.variants {
        let l = v.label();
        if !variants.contains(&l) {
            variants.push(l);
        }
    }
    let result = ExperimentResult { variants, runs };
    if let Some(dir) = out {
        write_outputs(plan, &result, dir)?;
    }
    Ok(result)
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    variant: &'a str,
    task: &'a str,
    seed: u64,
    threshold: f64,
    file: String,
    episodes_to_threshold: Option<usize>,
    final_eval: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    seeds: &'a [u64],
    eval_seeds: &'a [u64],
    budget: usize,
    cadence: usize,
    tasks: Vec<String>,
    variants: &'a [String],
    runs: Vec<ManifestRun<'a>>,
    histogram_bins: usize,
    files: BTreeMap<String, Vec<String>>,
}

const HISTOGRAM_BINS: usize = 10;

fn write_outputs(plan: &ExperimentPlan, result: &ExperimentResult, dir: &Path) -> Result<(), PipelineError> {
    let mut files: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut manifest_runs = Vec::new();
    for run in &result.runs {
        let rel = format!("runs/{}/{}.csv", run.variant, run.file_stem());
        let path = dir.join(&rel);
        fs::create_dir_all(path.parent().expect("nested path"))?;
        let mut w = csv::Writer::from_path(&path)?;
        for p in &run.curve.points {
            w.serialize(p)?;
        }
        if run.curve.points.is_empty() {
            w.write_record(["episode", "train_return", "eval_return", "success"])?;
        }
        w.flush()?;
        manifest_runs.push(ManifestRun {
            variant: &run.variant,
            task: &run.task,
            seed: run.seed,
            threshold: run.threshold,
            file: rel.clone(),
            episodes_to_threshold: run.episodes_to_threshold(),
            final_eval: run.final_eval(),
            error: run.error.as_deref(),
        });
        files.entry(run.variant.clone()).or_default().push(rel);
    }
    fs::create_dir_all(dir.join("aggregate"))?;
    fs::create_dir_all(dir.join("histogram"))?;
    for label in &result.variants {
        let curves: Vec<&LearningCurve> = result
            .runs_for(label)
            .filter(|r| r.error.is_none())
            .map(|r| &r.curve)
            .collect();
        let mut w = csv::Writer::from_path(dir.join(format!("aggregate/{label}.csv")))?;
        w.write_record(["episode", "mean", "variance", "std", "n"])?;
        for p in aggregate_curves(&curves) {
            w.serialize((p.episode, p.mean, p.variance, p.std, p.n))?;
        }
        w.flush()?;
        let finals: Vec<f64> = result.runs_for(label).filter_map(|r| r.final_eval()).collect();
        let mut w = csv::Writer::from_path(dir.join(format!("histogram/{label}.csv")))?;
        w.write_record(["bin_low", "bin_high", "count"])?;
        for b in histogram(&finals, HISTOGRAM_BINS) {
            w.serialize((b.bin_low, b.bin_high, b.count))?;
        }
        w.flush()?;
    }
    let manifest = Manifest {
        config_hash: &plan.config_hash,
        seeds: &plan.seeds,
        eval_seeds: &plan.eval_seeds,
        budget: plan.budget,
        cadence: plan.cadence,
        tasks: plan.specs.iter().map(TaskSpec::id).collect(),
        variants: &result.variants,
        runs: manifest_runs,
        histogram_bins: HISTOGRAM_BINS,
        files,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
