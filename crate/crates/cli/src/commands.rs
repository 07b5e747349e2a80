use std::path::{Path, PathBuf};
use std::sync::Arc;

use lep_core::ddpg::ACTOR_KIND;
use lep_core::envs::{expert_for, make_instances, sample_instances, Env, TaskFamily, TaskSpec};
use lep_core::explore::{
    collect_trajectories, conditioning_concentration, read_dataset, sample_subsequences, train_lep, write_dataset,
    DatasetHeader, GaussianSequenceModel, Source, DATASET_VERSION,
};
use lep_core::nn::{ModelFile, ModelMeta, Module};
use lep_core::pipeline::{
    curriculum_round, run_experiment, CurriculumConfig, CurriculumState, Exploration, ExperimentPlan,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::artifacts::{prepare_output, sidecar_for, write_checksums, write_dir_checksums, write_file};
use crate::config::Config;
use crate::error::CliError;
use crate::plot::{panels_svg, render, Panel, PlotSpec};

pub struct Ctx {
    pub config: Config,
    pub hash: String,
    pub force: bool,
}

fn family(name: &str) -> Result<TaskFamily, CliError> {
    Ok(name.parse::<TaskFamily>()?)
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Scripted-expert rollouts spread round-robin over the configured instances.
pub fn collect(ctx: &Ctx, task: &str, n: usize, out: &Path) -> Result<(), CliError> {
    let fam = family(task)?;
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    prepare_output(out, ctx.force, false)?;
    let c = &ctx.config;
    let specs = sample_instances(fam, c.tasks.instances.min(n), c.tasks.instance_seed);
    let mut trajectories = Vec::with_capacity(n);
    for (i, spec) in specs.iter().enumerate() {
        let count = n / specs.len() + usize::from(i < n % specs.len());
        trajectories.extend(collect_trajectories(
            std::slice::from_ref(spec),
            &|s| expert_for(s, &c.env),
            Source::Scripted,
            count,
            c.plan.collect_seed + 1_000_000 * i as u64,
            &c.env,
        )?);
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        state_dim: trajectories[0].state_dim,
        action_dim: trajectories[0].action_dim,
        config_hash: ctx.hash.clone(),
    };
    write_dataset(out, header, &trajectories)?;
    log::info!("wrote {} trajectories of {fam} to {}", trajectories.len(), out.display());
    Ok(())
}

fn loss_csv(curve: &[f64]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["epoch", "mean_nll"]).map_err(err)?;
    for (i, l) in curve.iter().enumerate() {
        w.serialize((i + 1, l)).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Maximum-likelihood LEP training on a dataset file.
pub fn train_lep_cmd(ctx: &Ctx, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let (_, trajectories) = read_dataset(dataset).map_err(|e| match e {
        lep_core::explore::ExploreError::Io(io) => CliError::io(dataset, io),
        other => other.into(),
    })?;
    prepare_output(out, ctx.force, false)?;
    let c = &ctx.config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.plan.lep_seed);
    let ds = sample_subsequences(trajectories, c.lep.horizon, c.lep.windows, &mut rng)?;
    let mut model = GaussianSequenceModel::new(ds.state_dim(), ds.action_dim(), c.lep.hidden, c.lep.horizon, &mut rng);
    let curve = train_lep(&ds, &mut model, &c.lep, &mut rng)?;
    model.save(out, &ctx.hash)?;
    let loss_path = out.with_extension("loss.csv");
    write_file(&loss_path, loss_csv(&curve)?)?;
    let base = out.parent().unwrap_or(Path::new(""));
    write_checksums(&sidecar_for(out), base, &[out, &loss_path], &ctx.hash)?;
    log::info!("final mean NLL {:.4}", curve.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn instances(ctx: &Ctx, fam: TaskFamily, count: usize, seed: u64) -> Result<Vec<TaskSpec>, CliError> {
    let c = &ctx.config;
    Ok(make_instances(fam, count, seed, &c.env, &c.tasks.calibration)?)
}

fn parse_exploration(ctx: &Ctx, choice: &str) -> Result<Vec<Exploration>, CliError> {
    let c = &ctx.config;
    match choice.split_once(':') {
        None if choice == "gaussian" => Ok(c.noise.gaussian_sigma.iter().map(|&sigma| Exploration::Gaussian { sigma }).collect()),
        None if choice == "ou" => Ok(c.noise.ou.iter().map(|&p| Exploration::Ou(p)).collect()),
        Some(("lep", path)) => {
            let path = Path::new(path);
            let model = GaussianSequenceModel::load(path).map_err(|e| match e {
                lep_core::explore::ExploreError::Io(io) => CliError::io(path, io),
                other => other.into(),
            })?;
            Ok(vec![Exploration::Lep(Arc::new(model))])
        }
        _ => Err(CliError::Usage(format!(
            "unknown exploration `{choice}`; use gaussian, ou or lep:<model path>"
        ))),
    }
}

#[derive(Serialize)]
struct TasksDoc<'a> {
    config_hash: &'a str,
    tasks: &'a [TaskSpec],
}

fn actor_file(actor: &lep_core::nn::Mlp, obs: usize, act: usize, hash: &str) -> ModelFile {
    let meta = ModelMeta {
        kind: ACTOR_KIND.into(),
        sizes: [("obs_dim".to_string(), obs), ("action_dim".to_string(), act)].into(),
        config_hash: hash.into(),
    };
    ModelFile::new(meta, &actor.to_named())
}

/// Multi-instance, multi-seed DDPG training with one exploration choice.
/// Returns the number of failed runs.
pub fn train(ctx: &Ctx, task: &str, exploration: &str, out: &Path) -> Result<usize, CliError> {
    let fam = family(task)?;
    let variants = parse_exploration(ctx, exploration)?;
    let c = &ctx.config;
    if c.plan.budget == 0 {
        return Err(CliError::Usage("invalid plan: episode budget must be at least 1".into()));
    }
    let probe = Env::new(&sample_instances(fam, 1, c.tasks.instance_seed)[0], &c.env)?;
    for v in &variants {
        v.check(&probe)?;
    }
    prepare_output(out, ctx.force, true)?;
    let specs = instances(ctx, fam, c.tasks.instances, c.tasks.instance_seed)?;
    let mut plan = ExperimentPlan::new(specs, variants, c.plan.seeds.clone());
    plan.budget = c.plan.budget;
    plan.cadence = c.plan.cadence;
    plan.eval_seeds = c.plan.eval_seeds.clone();
    plan.ddpg = c.ddpg.clone();
    plan.env = c.env.clone();
    plan.workers = ctx.config.workers();
    plan.stop_on_success = c.plan.stop_on_success;
    plan.config_hash = ctx.hash.clone();
    let result = run_experiment(&plan, Some(out))?;
    for run in &result.runs {
        if let Some(actor) = &run.actor {
            let path = out.join(format!(
                "checkpoints/{}/{}-seed{}-actor.json",
                run.variant,
                run.task.replace('/', "-"),
                run.seed
            ));
            let parent = path.parent().expect("nested path");
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            actor_file(actor, probe.obs_dim(), probe.action_dim(), &ctx.hash).write(&path)?;
        }
    }
    write_file(&out.join("tasks.json"), json(&TasksDoc { config_hash: &ctx.hash, tasks: &plan.specs })?)?;
    write_dir_checksums(out, &ctx.hash)?;
    Ok(result.failures())
}

#[derive(Serialize)]
struct PolicyDoc {
    task: String,
    seed: u64,
    source: Source,
    eval_return: f64,
    threshold: f64,
    checkpoint: Option<String>,
}

#[derive(Serialize)]
struct RoundDoc<'a> {
    config_hash: &'a str,
    round: usize,
    tasks: &'a [TaskSpec],
    attempted: usize,
    kept: usize,
    trajectories_added: usize,
    dataset_size: usize,
    lep_version: usize,
    lep_loss: &'a [f64],
    policies: Vec<PolicyDoc>,
}

/// Runs `rounds` curriculum rounds, storing each under `round-k/`.
pub fn curriculum(ctx: &Ctx, rounds: usize, out: &Path) -> Result<(), CliError> {
    let c = &ctx.config;
    if rounds == 0 || rounds > c.tasks.curriculum.len() {
        return Err(CliError::Usage(format!(
            "--rounds must be between 1 and {} (the rounds listed in tasks.curriculum)",
            c.tasks.curriculum.len()
        )));
    }
    prepare_output(out, ctx.force, true)?;
    let cc = CurriculumConfig {
        env: c.env.clone(),
        ddpg: c.ddpg.clone(),
        lep: c.lep.clone(),
        seeds: c.plan.seeds.clone(),
        budget: c.plan.budget,
        cadence: c.plan.cadence,
        eval_seeds: c.plan.eval_seeds.clone(),
        workers: c.workers(),
        rollouts_per_policy: c.plan.rollouts_per_policy,
        collect_seed: c.plan.collect_seed,
        lep_seed: c.plan.lep_seed,
        config_hash: ctx.hash.clone(),
    };
    let mut state = CurriculumState::new();
    for k in 0..rounds {
        let mut specs = Vec::new();
        for name in &c.tasks.curriculum[k] {
            specs.extend(instances(ctx, family(name)?, c.tasks.curriculum_instances, c.tasks.instance_seed + k as u64)?);
        }
        state = curriculum_round(&state, &specs, &cc)?;
        let dir = out.join(format!("round-{k}"));
        let rec = state.history.last().expect("round recorded");
        let header = DatasetHeader {
            version: DATASET_VERSION,
            state_dim: state.dataset[0].state_dim,
            action_dim: state.dataset[0].action_dim,
            config_hash: ctx.hash.clone(),
        };
        std::fs::create_dir_all(dir.join("policies")).map_err(|e| CliError::io(&dir, e))?;
        write_dataset(&dir.join("dataset.jsonl"), header, &state.dataset)?;
        state.model.as_ref().expect("model trained").save(&dir.join("lep.json"), &ctx.hash)?;
        let mut policies = Vec::new();
        for p in &rec.policies {
            let checkpoint = match &p.actor {
                Some(actor) => {
                    let env = Env::new(&p.task, &c.env)?;
                    let rel = format!("policies/{}-seed{}-actor.json", p.task.id().replace('/', "-"), p.seed);
                    actor_file(actor, env.obs_dim(), env.action_dim(), &ctx.hash).write(&dir.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            policies.push(PolicyDoc {
                task: p.task.id(),
                seed: p.seed,
                source: p.source,
                eval_return: p.eval_return,
                threshold: p.task.success_threshold,
                checkpoint,
            });
        }
        let doc = RoundDoc {
            config_hash: &ctx.hash,
            round: k,
            tasks: &specs,
            attempted: rec.attempted,
            kept: rec.kept,
            trajectories_added: rec.trajectories_added,
            dataset_size: rec.dataset_size,
            lep_version: state.model_version(),
            lep_loss: &rec.lep_loss,
            policies,
        };
        write_file(&dir.join("manifest.json"), json(&doc)?)?;
        write_dir_checksums(&dir, &ctx.hash)?;
        log::info!("round {k}: dataset holds {} trajectories", rec.dataset_size);
    }
    Ok(())
}

pub fn plot(ctx: &Ctx, spec: &PlotSpec, histogram: bool) -> Result<(), CliError> {
    let svg = render(spec, histogram, &ctx.hash)?;
    prepare_output(&spec.output, ctx.force, false)?;
    write_file(&spec.output, svg)
}

#[derive(Serialize)]
struct ToyDoc<'a> {
    config_hash: &'a str,
    goals: usize,
    single_state_circular_variance: f64,
    history_circular_variance: f64,
    report: &'a lep_core::explore::ConcentrationReport,
}

/// Pooled single-state action directions against history-conditioned LEP
/// samples on the point mass.
pub fn toy_fig1(ctx: &Ctx, out: &Path) -> Result<(f64, f64), CliError> {
    prepare_output(out, ctx.force, true)?;
    let c = &ctx.config;
    let report = conditioning_concentration(&c.toy, &c.env)?;
    let doc = ToyDoc {
        config_hash: &ctx.hash,
        goals: report.goals.len(),
        single_state_circular_variance: report.single_state_variance,
        history_circular_variance: report.history_variance,
        report: &report,
    };
    write_file(&out.join("report.json"), json(&doc)?)?;
    let probe = c.toy.probe;
    let shift = |v: &[[f64; 2]], by: [f64; 2]| -> Vec<[f64; 2]> { v.iter().map(|q| [q[0] + by[0], q[1] + by[1]]).collect() };
    let pooled = shift(&report.pooled_actions, probe);
    let samples = shift(&report.history_samples, probe);
    let panels = [
        Panel {
            title: "goals around the probe state",
            points: &report.goals,
            arrows_from: None,
            path: None,
            marker: Some(probe),
        },
        Panel {
            title: "pooled actions at the probe",
            points: &pooled,
            arrows_from: Some(probe),
            path: None,
            marker: Some(probe),
        },
        Panel {
            title: "conditioning history",
            points: &[],
            arrows_from: None,
            path: Some(&report.history),
            marker: Some(probe),
        },
        Panel {
            title: "LEP samples after the history",
            points: &samples,
            arrows_from: Some(probe),
            path: Some(&report.history),
            marker: Some(probe),
        },
    ];
    let caption = format!(
        "circular variance: single state {:.3}, history conditioned {:.3}",
        report.single_state_variance, report.history_variance
    );
    write_file(
        &out.join("fig1.svg"),
        panels_svg("Action distributions at one state", &panels, &caption, &ctx.hash),
    )?;
    write_dir_checksums(out, &ctx.hash)?;
    Ok((report.single_state_variance, report.history_variance))
}

/// Default output locations under `io.out_dir`.
pub fn default_out(ctx: &Ctx, name: &str) -> PathBuf {
    ctx.config.io.out_dir.join(name)
}
