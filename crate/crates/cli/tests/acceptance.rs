//! Acceptance suite. Every test prints one `criterion N: PASS|FAIL` line with
//! the measured value next to its pinned tolerance before asserting.
//!
//! Criteria 7 to 10 train hundreds of DDPG agents on the arm and are ignored
//! by default; run them with `cargo test -p lep-cli --test acceptance --
//! --ignored --nocapture --test-threads 1`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use lep_core::ddpg::DdpgConfig;
use lep_core::envs::arm::{integrate, mechanical_energy};
use lep_core::envs::{
    expert_for, make_instances, ArmParams, ArmState, CalibrationConfig, Env, EnvConfig, TaskFamily, TaskSpec,
};
use lep_core::explore::{
    collect_trajectories, conditioning_concentration, sample_subsequences, train_lep, ConcentrationConfig,
    ExplorationProcess, GaussianSequenceModel, LepConfig, LepSampler, OuParams, Source, Trajectory,
};
use lep_core::mathcore::{finite_diff_check_many, Array2, MathError};
use lep_core::nn::{gaussian_nll_node, Activation, Binding, GaussianHead, Lstm, Mlp, Module};
use lep_core::pipeline::{
    censored_median, curriculum_round, robustness_sweep, run_experiment, CurriculumConfig, CurriculumState,
    Exploration, ExperimentPlan, ExperimentResult,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRAD_TOL: f64 = 1e-4;
const GRAD_CASES_PER_CHAIN: usize = 35;
const DYNAMICS_STATE_TOL: f64 = 1e-3;
const ENERGY_DRIFT_TOL: f64 = 0.01;
const SINGLE_STATE_MIN_VARIANCE: f64 = 0.8;
const HISTORY_MAX_VARIANCE: f64 = 0.2;
const BASELINE_MIN_SOLVED: usize = 4;
const SPEEDUP_MAX_RATIO: f64 = 0.7;
const DISSIMILAR_MAX_RATIO: f64 = 1.3;
const POOLED_MAX_DEGRADATION: f64 = 0.2;

const ARM_BUDGET: usize = 300;
const CADENCE: usize = 10;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn random(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2 {
    Array2::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn nn_err(_: lep_core::nn::NnError) -> MathError {
    MathError::NonFinite { op: "module" }
}

/// DDPG settings used by every learning criterion.
fn desk_ddpg() -> DdpgConfig {
    DdpgConfig {
        hidden: vec![32, 32],
        batch_size: 64,
        actor_lr: 1e-3,
        reward_scale: 0.1,
        ..DdpgConfig::default()
    }
}

fn plan(specs: Vec<TaskSpec>, variants: Vec<Exploration>, seeds: u64, stop_on_success: bool) -> ExperimentPlan {
    let mut p = ExperimentPlan::new(specs, variants, (0..seeds).collect());
    p.budget = ARM_BUDGET;
    p.cadence = CADENCE;
    p.ddpg = desk_ddpg();
    p.stop_on_success = stop_on_success;
    p.workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    p
}

fn instances(family: TaskFamily, count: usize) -> Vec<TaskSpec> {
    make_instances(family, count, 0, &EnvConfig::default(), &CalibrationConfig::default()).unwrap()
}

fn reach_demonstrations() -> Vec<Trajectory> {
    let env = EnvConfig::default();
    let reach = make_instances(TaskFamily::Reach, 10, 100, &env, &CalibrationConfig::default()).unwrap();
    collect_trajectories(&reach, &|s| expert_for(s, &env), Source::Scripted, 5, 0, &env).unwrap()
}

/// LEP with horizon `h` trained on scripted Reach demonstrations.
fn reach_lep(h: usize) -> Arc<GaussianSequenceModel> {
    let trajs = reach_demonstrations();
    let cfg = LepConfig {
        hidden: 32,
        horizon: h,
        windows: 3000,
        epochs: 15,
        batch_size: 32,
        lr: 3e-3,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ds = sample_subsequences(trajs, h, cfg.windows, &mut rng).unwrap();
    let mut model = GaussianSequenceModel::new(ds.state_dim(), ds.action_dim(), cfg.hidden, h, &mut rng);
    train_lep(&ds, &mut model, &cfg, &mut rng).unwrap();
    Arc::new(model)
}

fn baselines(sigmas: &[f64], ou_sigmas: &[f64]) -> Vec<Exploration> {
    let mut v: Vec<Exploration> = sigmas.iter().map(|&sigma| Exploration::Gaussian { sigma }).collect();
    v.extend(ou_sigmas.iter().map(|&sigma| Exploration::Ou(OuParams { sigma, ..OuParams::default() })));
    v
}

/// Median episodes-to-threshold; runs that never cross count as one cadence past the budget.
fn median_episodes(result: &ExperimentResult, label: &str) -> f64 {
    censored_median(&result.episodes_to_threshold(label), ARM_BUDGET + CADENCE)
}

fn solved(result: &ExperimentResult, label: &str) -> usize {
    result.episodes_to_threshold(label).iter().filter(|e| e.is_some()).count()
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = [0.0_f64; 3];

    for _ in 0..GRAD_CASES_PER_CHAIN {
        let sizes = [rng.gen_range(1..5), rng.gen_range(2..7), rng.gen_range(2..7), rng.gen_range(1..4)];
        let output = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Linear };
        let mlp = Mlp::new(&sizes, output, &mut rng);
        let batch = rng.gen_range(1..5);
        let x = random(batch, sizes[0], 1.5, &mut rng);
        let y = random(batch, sizes[3], 1.0, &mut rng);
        let params: Vec<Array2> = mlp.tensors().into_iter().cloned().collect();
        let err = finite_diff_check_many(
            |tape, ids| {
                let b = Binding::from_nodes(tape, ids);
                let xi = tape.constant(x.clone());
                let out = mlp.forward(tape, &b, xi).map_err(nn_err)?;
                let t = tape.constant(y.clone());
                let d = tape.sub(out, t)?;
                let sq = tape.square(d)?;
                tape.mean(sq)
            },
            &params,
            1e-5,
        );
        worst[0] = worst[0].max(err);
    }

    for _ in 0..GRAD_CASES_PER_CHAIN {
        let (input, hidden, out) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..3));
        let lstm = Lstm::new(input, hidden, &mut rng);
        let head = GaussianHead::new(hidden, out, &mut rng);
        let batch = rng.gen_range(1..3);
        let xs: Vec<Array2> = (0..3).map(|_| random(batch, input, 1.0, &mut rng)).collect();
        let ys: Vec<Array2> = (0..3).map(|_| random(batch, out, 1.0, &mut rng)).collect();
        let mut params: Vec<Array2> = lstm.tensors().into_iter().cloned().collect();
        let split = params.len();
        params.extend(head.tensors().into_iter().cloned());
        let err = finite_diff_check_many(
            |tape, ids| {
                let lb = Binding::from_nodes(tape, &ids[..split]);
                let hb = Binding::from_nodes(tape, &ids[split..]);
                let mut st = lstm.initial_nodes(tape, batch);
                let mut total = None;
                for (x, y) in xs.iter().zip(&ys) {
                    let xi = tape.constant(x.clone());
                    st = lstm.step(tape, &lb, xi, st).map_err(nn_err)?;
                    let (mean, log_std) = head.forward(tape, &hb, st.h).map_err(nn_err)?;
                    let t = tape.constant(y.clone());
                    let nll = gaussian_nll_node(tape, mean, log_std, t).map_err(nn_err)?;
                    total = Some(match total {
                        None => nll,
                        Some(acc) => tape.add(acc, nll)?,
                    });
                }
                Ok(total.expect("three steps"))
            },
            &params,
            1e-5,
        );
        worst[1] = worst[1].max(err);
    }

    for _ in 0..GRAD_CASES_PER_CHAIN {
        let (obs, act, hidden) = (rng.gen_range(2..6), rng.gen_range(1..4), rng.gen_range(3..8));
        let actor = Mlp::new(&[obs, hidden, hidden, act], Activation::Tanh, &mut rng);
        let critic = Mlp::new(&[obs + act, hidden, hidden, 1], Activation::Linear, &mut rng);
        let s = random(rng.gen_range(1..6), obs, 1.0, &mut rng);
        let mut params: Vec<Array2> = actor.tensors().into_iter().cloned().collect();
        let split = params.len();
        params.extend(critic.tensors().into_iter().cloned());
        let err = finite_diff_check_many(
            |tape, ids| {
                let ab = Binding::from_nodes(tape, &ids[..split]);
                let cb = Binding::from_nodes(tape, &ids[split..]);
                let si = tape.constant(s.clone());
                let a = actor.forward(tape, &ab, si).map_err(nn_err)?;
                let sa = tape.concat_cols(si, a)?;
                let q = critic.forward(tape, &cb, sa).map_err(nn_err)?;
                let m = tape.mean(q)?;
                tape.neg(m)
            },
            &params,
            1e-5,
        );
        worst[2] = worst[2].max(err);
    }

    let max = worst.iter().cloned().fold(0.0, f64::max);
    report(
        1,
        max <= GRAD_TOL,
        format!(
            "{} cases; max relative error mlp {:.2e}, lstm+nll {:.2e}, actor-critic {:.2e} (tolerance {GRAD_TOL:.0e})",
            3 * GRAD_CASES_PER_CHAIN,
            worst[0],
            worst[1],
            worst[2]
        ),
    );
    assert!(max <= GRAD_TOL);
}

fn free_arm() -> ArmParams {
    let mut p = ArmParams::default();
    p.gravity_compensation = false;
    p.contact.enabled = false;
    p.joint_damping = 0.0;
    p
}

fn roll(p: &ArmParams, s0: ArmState, dt: f64, steps: usize) -> (ArmState, f64) {
    let mut s = s0;
    let mut peak = 0.0_f64;
    for _ in 0..steps {
        s = integrate(p, &s, &[0.0; 3], 1, dt);
        peak = s.qd.iter().fold(peak, |m, v| m.max(v.abs()));
    }
    (s, peak)
}

#[test]
fn criterion_02_free_arm_matches_finer_reference() {
    let p = free_arm();
    let unclamped = ArmParams {
        max_joint_velocity: f64::INFINITY,
        ..p.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_state, mut worst_drift) = (0.0_f64, 0.0_f64);
    let (mut accepted, mut rejected) = (0, 0);
    while accepted < 20 {
        let mut s0 = ArmState::at_rest([0.0; 3]);
        for i in 0..3 {
            s0.q[i] = rng.gen_range(-1.5..1.5);
            s0.qd[i] = rng.gen_range(-1.0..1.0);
        }
        // Starts that whip past the joint velocity limit leave the simulated regime.
        if roll(&unclamped, s0, 0.001, 1000).1 >= p.max_joint_velocity {
            rejected += 1;
            continue;
        }
        accepted += 1;
        let coarse = roll(&p, s0, 0.01, 100).0;
        let fine = roll(&p, s0, 0.001, 1000).0;
        let d = (0..3)
            .map(|i| (coarse.q[i] - fine.q[i]).powi(2) + (coarse.qd[i] - fine.qd[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let e0 = mechanical_energy(&p, &s0);
        let drift = (mechanical_energy(&p, &coarse) - e0).abs() / e0.abs();
        worst_state = worst_state.max(d);
        worst_drift = worst_drift.max(drift);
    }
    let pass = worst_state <= DYNAMICS_STATE_TOL && worst_drift <= ENERGY_DRIFT_TOL;
    report(
        2,
        pass,
        format!(
            "{accepted} starts over 1 s ({rejected} rejected for exceeding {} rad/s); max state error {worst_state:.2e} (tolerance {DYNAMICS_STATE_TOL:.0e}), max energy drift {:.3}% (tolerance {:.0}%)",
            p.max_joint_velocity,
            100.0 * worst_drift,
            100.0 * ENERGY_DRIFT_TOL
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_history_concentrates_action_directions() {
    let cfg = ConcentrationConfig::default();
    assert!(cfg.goals >= 20);
    let r = conditioning_concentration(&cfg, &EnvConfig::default()).unwrap();
    let pass = r.single_state_variance > SINGLE_STATE_MIN_VARIANCE && r.history_variance < HISTORY_MAX_VARIANCE;
    report(
        3,
        pass,
        format!(
            "{} goals; single-state circular variance {:.3} (> {SINGLE_STATE_MIN_VARIANCE}), history-conditioned {:.3} (< {HISTORY_MAX_VARIANCE})",
            cfg.goals, r.single_state_variance, r.history_variance
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_training_lowers_held_out_nll() {
    let env = EnvConfig::default();
    let cfg = LepConfig {
        hidden: 16,
        horizon: 20,
        windows: 1000,
        epochs: 5,
        batch_size: 32,
        lr: 3e-3,
    };
    let mut lines = Vec::new();
    let mut wins = 0;
    for seed in 0..5u64 {
        let specs = make_instances(TaskFamily::Reach, 20, 400 + seed, &env, &CalibrationConfig::default()).unwrap();
        let mut trajs = collect_trajectories(&specs, &|s| expert_for(s, &env), Source::Scripted, 2, seed, &env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        trajs.shuffle(&mut rng);
        let held = trajs.split_off(trajs.len() - trajs.len() / 10);
        let train = sample_subsequences(trajs, cfg.horizon, cfg.windows, &mut rng).unwrap();
        let test = sample_subsequences(held, cfg.horizon, cfg.windows / 9, &mut rng).unwrap();
        let mut model = GaussianSequenceModel::new(train.state_dim(), train.action_dim(), cfg.hidden, cfg.horizon, &mut rng);
        model.set_normalization(train.state_mean(), train.state_std()).unwrap();
        let before = model.mean_nll(&test).unwrap();
        train_lep(&train, &mut model, &cfg, &mut rng).unwrap();
        let after = model.mean_nll(&test).unwrap();
        if after < before {
            wins += 1;
        }
        lines.push(format!("{before:.3}->{after:.3}"));
    }
    report(4, wins == 5, format!("held-out NLL untrained->trained [{}]; {wins}/5 lower (need 5/5)", lines.join(", ")));
    assert_eq!(wins, 5);
}

#[test]
fn criterion_05_recurrent_state_resets_every_h_steps() {
    let h = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let model = Arc::new(GaussianSequenceModel::new(4, 2, 6, h, &mut rng));
    let init = model.initial_state();
    let mut sampler = LepSampler::new(model);
    sampler.reset(3);
    let mut resets = Vec::new();
    let mut bit_equal = true;
    for t in 0..3 * h + 1 {
        let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        sampler.sample(&s).unwrap();
        if sampler.reset_at_last_step() {
            resets.push(t);
            let st = sampler.input_state();
            let same = |a: &Array2, b: &Array2| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            bit_equal &= same(&st.h, &init.h) && same(&st.c, &init.c);
        }
    }
    let expected = vec![0, h, 2 * h, 3 * h];
    let pass = resets == expected && bit_equal;
    report(
        5,
        pass,
        format!("h = {h}, {} steps; resets at {resets:?} (expected {expected:?}); state bit-equal to init: {bit_equal}", 3 * h + 1),
    );
    assert!(pass);
}

#[test]
fn criterion_06_gaussian_ddpg_solves_point_reach() {
    let p = plan(instances(TaskFamily::PointReach, 1), vec![Exploration::Gaussian { sigma: 0.2 }], 5, true);
    let result = run_experiment(&p, None).unwrap();
    let label = p.variants[0].label();
    let hits = result.episodes_to_threshold(&label);
    let n = solved(&result, &label);
    report(
        6,
        n >= BASELINE_MIN_SOLVED,
        format!("episodes to threshold per seed {hits:?}; {n}/5 solved within {ARM_BUDGET} (need {BASELINE_MIN_SOLVED}/5)"),
    );
    assert!(n >= BASELINE_MIN_SOLVED);
}

#[test]
#[ignore = "trains 180 DDPG agents on the arm"]
fn criterion_07_lep_speeds_up_force_at() {
    let lep = Exploration::Lep(reach_lep(20));
    let mut variants = baselines(&[0.1, 0.2, 0.3], &[0.2, 0.3]);
    variants.push(lep.clone());
    let p = plan(instances(TaskFamily::ForceAt, 6), variants, 5, true);
    let result = run_experiment(&p, None).unwrap();
    let mut medians: BTreeMap<String, f64> = BTreeMap::new();
    for v in &p.variants {
        medians.insert(v.label(), median_episodes(&result, &v.label()));
    }
    let lep_label = lep.label();
    let (best_label, best) = medians
        .iter()
        .filter(|(l, _)| **l != lep_label)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(l, m)| (l.clone(), *m))
        .unwrap();
    let ratio = medians[&lep_label] / best;
    let solved_by: Vec<String> = p.variants.iter().map(|v| format!("{} {}/30", v.label(), solved(&result, &v.label()))).collect();
    report(
        7,
        ratio <= SPEEDUP_MAX_RATIO,
        format!(
            "median episodes {medians:?}; best baseline {best_label}; LEP/best = {ratio:.2} (need <= {SPEEDUP_MAX_RATIO}); solved [{}]",
            solved_by.join(", ")
        ),
    );
    assert!(ratio <= SPEEDUP_MAX_RATIO);
}

#[test]
#[ignore = "trains 60 DDPG agents on the arm"]
fn criterion_08_lep_is_not_detrimental_on_circle() {
    let lep = Exploration::Lep(reach_lep(20));
    let vanilla = Exploration::Gaussian { sigma: 0.2 };
    let p = plan(instances(TaskFamily::Circle, 6), vec![vanilla.clone(), lep.clone()], 5, true);
    let result = run_experiment(&p, None).unwrap();
    let (m_lep, m_van) = (median_episodes(&result, &lep.label()), median_episodes(&result, &vanilla.label()));
    let ratio = m_lep / m_van;
    report(
        8,
        ratio <= DISSIMILAR_MAX_RATIO,
        format!(
            "median episodes LEP {m_lep} ({}/30 solved), vanilla {m_van} ({}/30 solved); ratio {ratio:.2} (need <= {DISSIMILAR_MAX_RATIO})",
            solved(&result, &lep.label()),
            solved(&result, &vanilla.label())
        ),
    );
    assert!(ratio <= DISSIMILAR_MAX_RATIO);
}

#[test]
#[ignore = "trains 120 DDPG agents on the arm"]
fn criterion_09_pooled_lep_is_robust_on_slide_force() {
    let base = baselines(&[0.1, 0.2, 0.3], &[0.2, 0.3]);
    let leps: Vec<Exploration> = [10, 20, 40].iter().map(|&h| Exploration::Lep(reach_lep(h))).collect();
    let mut variants = base.clone();
    variants.extend(leps.iter().cloned());
    let p = plan(instances(TaskFamily::SlideForce, 3), variants, 5, false);
    let result = run_experiment(&p, None).unwrap();
    let labels = |v: &[Exploration]| v.iter().map(|e| e.label()).collect::<Vec<_>>();
    let lep = robustness_sweep(&result.runs, &labels(&leps), "lep-pooled");
    let ddpg = robustness_sweep(&result.runs, &labels(&base), "ddpg-pooled");
    let pass = lep.pooled.success_fraction > ddpg.pooled.success_fraction && lep.degradation <= POOLED_MAX_DEGRADATION;
    let per: Vec<String> = lep
        .variants
        .iter()
        .chain(&ddpg.variants)
        .map(|v| format!("{} median {:.1} success {:.2}", v.label, v.median_final, v.success_fraction))
        .collect();
    report(
        9,
        pass,
        format!(
            "pooled success LEP {:.2} vs DDPG {:.2} (need >); LEP pooled median {:.1} vs best {} {:.1}, degradation {:.1}% (need <= {:.0}%); [{}]",
            lep.pooled.success_fraction,
            ddpg.pooled.success_fraction,
            lep.pooled.median_final,
            lep.variants[lep.best].label,
            lep.variants[lep.best].median_final,
            100.0 * lep.degradation,
            100.0 * POOLED_MAX_DEGRADATION,
            per.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "runs a two-round curriculum with 20 DDPG agents"]
fn criterion_10_curriculum_round_trip() {
    let env = EnvConfig::default();
    let config = CurriculumConfig {
        ddpg: desk_ddpg(),
        lep: LepConfig {
            hidden: 32,
            horizon: 20,
            windows: 3000,
            epochs: 15,
            batch_size: 32,
            lr: 3e-3,
        },
        seeds: vec![0],
        budget: ARM_BUDGET,
        cadence: CADENCE,
        workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        ..CurriculumConfig::default()
    };
    let cal = CalibrationConfig::default();
    let round0 = make_instances(TaskFamily::Reach, 10, 0, &env, &cal).unwrap();
    let mut round1 = make_instances(TaskFamily::ForceAt, 10, 0, &env, &cal).unwrap();
    round1.extend(make_instances(TaskFamily::Circle, 10, 0, &env, &cal).unwrap());

    let s0 = CurriculumState::new();
    let s1 = curriculum_round(&s0, &round0, &config).unwrap();
    let s2 = curriculum_round(&s1, &round1, &config).unwrap();
    let v1 = s1.model.clone().unwrap();
    let v2 = s2.model.clone().unwrap();
    let record = &s2.history[1];

    // Fresh rollouts of the kept round-1 policies, never seen by either model.
    let mut held = Vec::new();
    for p in &record.policies {
        let spec = std::slice::from_ref(&p.task);
        held.extend(collect_trajectories(spec, &|_| p.policy(&env), p.source, 2, 9_000_000 + p.seed, &env).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let test = sample_subsequences(held, config.lep.horizon, 1000, &mut rng).unwrap();
    let (nll1, nll2) = (v1.mean_nll(&test).unwrap(), v2.mean_nll(&test).unwrap());
    let sizes = [s1.dataset.len(), s2.dataset.len()];
    let pass = sizes[1] > sizes[0] && nll2 < nll1;
    report(
        10,
        pass,
        format!(
            "dataset {} -> {} trajectories; round 1 kept {}/{} policies; held-out NLL on round-1 rollouts v1 {nll1:.3}, v2 {nll2:.3} (need v2 < v1)",
            sizes[0], sizes[1], record.kept, record.attempted
        ),
    );
    assert!(pass);
}

const TINY: &str = r#"
[tasks]
instances = 1
curriculum = [["point-reach"]]
curriculum_instances = 2

[ddpg]
hidden = [16, 16]
batch_size = 32
warmup = 100

[lep]
hidden = 8
horizon = 10
windows = 200
epochs = 3
batch_size = 32

[plan]
seeds = [0, 1]
budget = 20
eval_seeds = [1, 2]
rollouts_per_policy = 2

[toy]
goals = 20
samples = 100
"#;

fn lep_cmd(root: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_lep"))
        .current_dir(root)
        .args(["--config", "tiny.toml"])
        .args(args)
        .env("LEP_EXPLORE_LOG", "error")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn all_files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            all_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn pipeline_outputs(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::write(root.join("tiny.toml"), TINY).unwrap();
    lep_cmd(root, &["collect", "--task", "point-reach", "--n", "6", "--out", "out/data.jsonl"]);
    lep_cmd(root, &["train-lep", "--dataset", "out/data.jsonl", "--out", "out/lep.json"]);
    lep_cmd(root, &["train", "--task", "point-reach", "--exploration", "gaussian", "--out", "out/train-g"]);
    lep_cmd(root, &["train", "--task", "point-reach", "--exploration", "ou", "--out", "out/train-ou"]);
    lep_cmd(root, &["train", "--task", "point-reach", "--exploration", "lep:out/lep.json", "--out", "out/train-lep"]);
    lep_cmd(root, &["curriculum", "--rounds", "1", "--out", "out/curriculum"]);
    lep_cmd(root, &["toy-fig1", "--out", "out/toy"]);
    lep_cmd(root, &[
        "plot", "--input", "out/train-g/aggregate/gaussian-s0.2.csv", "--input", "out/train-lep/aggregate/lep-h10.csv",
        "--label", "gaussian", "--label", "lep", "--out", "out/curves.svg",
    ]);
    let mut files = Vec::new();
    all_files(&root.join("out"), &mut files);
    files
        .into_iter()
        .map(|p| (p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_11_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (pipeline_outputs(a.path()), pipeline_outputs(b.path()));
    let checked: Vec<&String> = fa
        .keys()
        .filter(|k| k.ends_with(".csv") || k.ends_with("manifest.json"))
        .collect();
    let differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != Some(&fa[*k])).collect();
    let pass = fa.len() == fb.len() && differing.is_empty() && checked.len() >= 10;
    report(
        11,
        pass,
        format!(
            "{} files from 8 commands ({} CSV or manifest); {} differ {differing:?}",
            fa.len(),
            checked.len(),
            differing.len()
        ),
    );
    assert!(pass);
}

#[test]
fn lep_reach_model_fits_arm_tasks() {
    // A Reach-trained LEP has to fit every arm task.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probe = GaussianSequenceModel::new(
        Env::new(&instances(TaskFamily::Reach, 1)[0], &EnvConfig::default()).unwrap().obs_dim(),
        3,
        4,
        10,
        &mut rng,
    );
    let lep = Exploration::Lep(Arc::new(probe));
    for family in [TaskFamily::ForceAt, TaskFamily::Circle, TaskFamily::SlideForce] {
        let spec = &instances(family, 1)[0];
        lep.check(&Env::new(spec, &EnvConfig::default()).unwrap()).unwrap();
    }
}
