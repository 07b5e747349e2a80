use lep_core::ddpg::{Batch, DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use lep_core::envs::{sample_instances, Env, EnvConfig, TaskFamily};
use lep_core::explore::{ExplorationProcess, GaussianNoise};
use lep_core::mathcore::Array2;
use lep_core::nn::{soft_update, Activation, Mlp, Module};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config() -> DdpgConfig {
    DdpgConfig {
        hidden: vec![16, 16],
        batch_size: 16,
        warmup: 50,
        ..DdpgConfig::default()
    }
}

fn transition(rng: &mut impl Rng, obs: usize, act: usize, done: bool) -> Transition {
    Transition {
        s: (0..obs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        a: (0..act).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        r: rng.gen_range(-1.0..1.0),
        s2: (0..obs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        done,
    }
}

fn batch_of(items: &[Transition]) -> Batch {
    Batch::from_transitions(&items.iter().collect::<Vec<_>>()).unwrap()
}

/// Linear critic `Q(s, a) = c` for every input.
fn constant_critic(inputs: usize, c: f64) -> Mlp {
    Mlp::from_layers(vec![(Array2::zeros(inputs, 1), Array2::scalar(c))], Activation::Linear).unwrap()
}

/// Critic peaked at `target` in every action dimension:
/// `Q = sum_d tanh(a_d - t_d + 1) - tanh(a_d - t_d - 1)`.
fn peaked_critic(obs: usize, target: &[f64]) -> Mlp {
    let ad = target.len();
    let mut w1 = Array2::zeros(obs + ad, 2 * ad);
    let mut b1 = Array2::zeros(1, 2 * ad);
    let mut w2 = Array2::zeros(2 * ad, 1);
    for (d, t) in target.iter().enumerate() {
        w1.set(obs + d, 2 * d, 1.0);
        w1.set(obs + d, 2 * d + 1, 1.0);
        b1.set(0, 2 * d, 1.0 - t);
        b1.set(0, 2 * d + 1, -1.0 - t);
        w2.set(2 * d, 0, 1.0);
        w2.set(2 * d + 1, 0, -1.0);
    }
    Mlp::from_layers(vec![(w1, b1), (w2, Array2::zeros(1, 1))], Activation::Linear).unwrap()
}

fn agent_with_critic(critic: Mlp, obs: usize, act: usize, seed: u64) -> DdpgAgent {
    let fresh = DdpgAgent::new(obs, act, config(), seed).unwrap();
    DdpgAgent::from_networks(fresh.actor().clone(), critic, config(), ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn select_action_adds_and_clamps() {
    let agent = DdpgAgent::new(4, 2, config(), 0).unwrap();
    let s = [0.1, -0.2, 0.3, 0.0];
    assert_eq!(agent.select_action(&s, &[0.0, 0.0]).unwrap(), agent.policy(&s).unwrap());
    assert_eq!(agent.select_action(&s, &[5.0, -5.0]).unwrap(), vec![1.0, -1.0]);
    assert!(agent.select_action(&s, &[0.0]).is_err());
}

/// Observations visited by random-torque rollouts of every family.
fn visited_observations() -> Vec<Vec<f64>> {
    let cfg = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = Vec::new();
    for family in TaskFamily::ALL {
        for spec in sample_instances(family, 2, 5) {
            let mut env = Env::new(&spec, &cfg).unwrap();
            for seed in 0..3 {
                out.push(env.reset(seed));
                for _ in 0..env.horizon() {
                    let a: Vec<f64> = (0..env.action_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let step = env.step(&a).unwrap();
                    out.push(step.obs);
                }
            }
        }
    }
    out
}

#[test]
fn fresh_actor_outputs_near_zero() {
    let cfg = DdpgConfig::default();
    let observations = visited_observations();
    let mut worst = 0.0_f64;
    for seed in 0..5 {
        // point mass (2 obs, 2 actions) and arm (8 obs, 3 actions)
        let agents = [
            DdpgAgent::new(2, 2, cfg.clone(), seed).unwrap(),
            DdpgAgent::new(8, 3, cfg.clone(), seed).unwrap(),
        ];
        for obs in &observations {
            let agent = agents.iter().find(|a| a.obs_dim() == obs.len()).unwrap();
            let a = agent.policy(obs).unwrap();
            worst = worst.max(a.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    assert!(worst < 0.01 * cfg.action_bound, "max ‖π(s)‖ = {worst}");
}

#[test]
fn targets_start_equal_to_online_networks() {
    let agent = DdpgAgent::new(3, 2, config(), 4).unwrap();
    assert_eq!(agent.actor(), agent.target_actor());
    assert_eq!(agent.critic(), agent.target_critic());
}

#[test]
fn bellman_target_examples() {
    let mut agent = agent_with_critic(constant_critic(3, 2.0), 2, 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut live = transition(&mut rng, 2, 1, false);
    live.r = 1.0;
    let mut terminal = live.clone();
    terminal.done = true;
    let y = agent.bellman_target(&batch_of(&[live.clone(), terminal])).unwrap();
    assert!((y[0] - 2.98).abs() < 1e-12);
    assert_eq!(y[1], 1.0);

    *agent.critic_mut() = constant_critic(3, 0.0);
    let zero = agent_with_critic(constant_critic(3, 0.0), 2, 1, 0);
    assert_eq!(zero.bellman_target(&batch_of(&[live])).unwrap(), vec![1.0]);
}

#[test]
fn critic_loss_matches_hand_value() {
    // Q(s, a) = 0.5 s - a + 0.25, target critic fixed at 0.4
    let critic = Mlp::from_layers(
        vec![(Array2::new(2, 1, vec![0.5, -1.0]).unwrap(), Array2::scalar(0.25))],
        Activation::Linear,
    )
    .unwrap();
    let mut agent = agent_with_critic(critic, 1, 1, 0);
    let t = Transition {
        s: vec![2.0],
        a: vec![0.5],
        r: 0.3,
        s2: vec![1.0],
        done: false,
    };
    let target_q = agent.q_values(&Array2::row(&t.s2), &Array2::row(&agent.policy(&t.s2).unwrap())).unwrap()[0];
    let y = 0.3 + 0.99 * target_q;
    let q = 0.5 * 2.0 - 0.5 + 0.25;
    let loss = agent.critic_update(&batch_of(&[t])).unwrap();
    assert!((loss - (q - y) * (q - y)).abs() < 1e-12);
}

#[test]
fn critic_at_target_is_unchanged() {
    let mut agent = agent_with_critic(constant_critic(3, 0.0), 2, 1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let items: Vec<Transition> = (0..8)
        .map(|_| {
            let mut t = transition(&mut rng, 2, 1, true);
            t.r = 0.0;
            t
        })
        .collect();
    let before = agent.critic().clone();
    let loss = agent.critic_update(&batch_of(&items)).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(agent.critic(), &before);
}

#[test]
fn critic_loss_falls_on_a_fixed_batch() {
    let mut agent = DdpgAgent::new(3, 2, config(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let items: Vec<Transition> = (0..32).map(|_| transition(&mut rng, 3, 2, true)).collect();
    let batch = batch_of(&items);
    let losses: Vec<f64> = (0..100).map(|_| agent.critic_update(&batch).unwrap()).collect();
    let first: f64 = losses[..10].iter().sum();
    let last: f64 = losses[90..].iter().sum();
    assert!(last < first, "loss {first} -> {last}");
    let falling = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(falling >= 90, "only {falling} of 99 updates lowered the loss");
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let mut agent = agent_with_critic(constant_critic(5, 1.5), 3, 2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let items: Vec<Transition> = (0..16).map(|_| transition(&mut rng, 3, 2, false)).collect();
    let batch = batch_of(&items);
    let before = agent.actor().clone();
    let objective = agent.actor_update(&batch).unwrap();
    assert_eq!(objective, 1.5);
    assert_eq!(agent.actor(), &before);
}

#[test]
fn actor_objective_is_mean_q_of_policy() {
    let target = [0.4, -0.3];
    let agent = agent_with_critic(peaked_critic(3, &target), 3, 2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let items: Vec<Transition> = (0..10).map(|_| transition(&mut rng, 3, 2, false)).collect();
    let batch = batch_of(&items);
    let actions = agent.actor().eval(&batch.s).unwrap();
    let q = agent.q_values(&batch.s, &actions).unwrap();
    let (objective, _) = agent.actor_gradients(&batch).unwrap();
    assert!((objective - q.iter().sum::<f64>() / 10.0).abs() < 1e-12);
}

#[test]
fn actor_moves_toward_critic_optimum() {
    let target = [0.5, -0.4];
    let mut cfg = config();
    cfg.actor_lr = 1e-3;
    let fresh = DdpgAgent::new(3, 2, cfg.clone(), 8).unwrap();
    let mut agent =
        DdpgAgent::from_networks(fresh.actor().clone(), peaked_critic(3, &target), cfg, ChaCha8Rng::seed_from_u64(8))
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let items: Vec<Transition> = (0..32).map(|_| transition(&mut rng, 3, 2, false)).collect();
    let batch = batch_of(&items);
    let distance = |agent: &DdpgAgent| {
        let a = agent.actor().eval(&batch.s).unwrap();
        (0..a.rows())
            .map(|r| a.row_slice(r).iter().zip(&target).map(|(x, t)| (x - t).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / a.rows() as f64
    };
    let before = distance(&agent);
    for _ in 0..500 {
        agent.actor_update(&batch).unwrap();
    }
    let after = distance(&agent);
    assert!(after <= 0.1 * before, "mean distance {before} -> {after}");
}

#[test]
fn actor_gradient_matches_finite_differences() {
    let agent = agent_with_critic(peaked_critic(4, &[0.2, -0.1, 0.05]), 4, 3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let items: Vec<Transition> = (0..6).map(|_| transition(&mut rng, 4, 3, false)).collect();
    let batch = batch_of(&items);
    let (_, grads) = agent.actor_gradients(&batch).unwrap();
    let objective = |actor: &Mlp| {
        let a = actor.eval(&batch.s).unwrap();
        agent.q_values(&batch.s, &a).unwrap().iter().sum::<f64>() / batch.len() as f64
    };
    let eps = 1e-5;
    let mut worst = 0.0_f64;
    let mut probe = agent.actor().clone();
    for (k, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + eps;
            let plus = objective(&probe);
            probe.tensors_mut()[k].data_mut()[i] = orig - eps;
            let minus = objective(&probe);
            probe.tensors_mut()[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max((g.data()[i] - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    assert!(worst <= 1e-4, "relative error {worst}");
}

#[test]
fn soft_update_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let zero = Mlp::from_layers(vec![(Array2::zeros(1, 1), Array2::zeros(1, 1))], Activation::Linear).unwrap();
    let one = Mlp::from_layers(vec![(Array2::scalar(1.0), Array2::scalar(1.0))], Activation::Linear).unwrap();
    let mut target = zero.clone();
    soft_update(&mut target, &one, 0.005);
    for t in target.tensors() {
        assert!((t.item() - 0.005).abs() < 1e-15);
    }
    let mut target = zero.clone();
    soft_update(&mut target, &one, 1.0);
    assert_eq!(target, one);

    let net = Mlp::new(&[3, 4, 2], Activation::Tanh, &mut rng);
    let mut same = net.clone();
    soft_update(&mut same, &net, 0.3);
    assert_eq!(same, net);
}

fn distance(a: &Mlp, b: &Mlp) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

#[test]
fn targets_contract_toward_frozen_online_networks() {
    let mut agent = DdpgAgent::new(3, 2, config(), 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let items: Vec<Transition> = (0..16).map(|_| transition(&mut rng, 3, 2, false)).collect();
    for _ in 0..20 {
        agent.critic_update(&batch_of(&items)).unwrap();
    }
    let tau = agent.config().tau;
    let mut prev = distance(agent.critic(), agent.target_critic());
    assert!(prev > 0.0);
    for _ in 0..50 {
        agent.soft_update();
        let d = distance(agent.critic(), agent.target_critic());
        assert!((d - (1.0 - tau) * prev).abs() <= 1e-9 * prev.max(1.0), "{d} vs {}", (1.0 - tau) * prev);
        prev = d;
    }
}

#[test]
fn replay_buffer_drops_oldest_sentinels() {
    let mut buf = ReplayBuffer::new(5);
    for k in 0..8 {
        buf.push(Transition {
            s: vec![k as f64],
            a: vec![0.0],
            r: k as f64,
            s2: vec![0.0],
            done: false,
        });
        assert!(buf.len() <= 5);
    }
    let mut rewards: Vec<f64> = buf.iter().map(|t| t.r).collect();
    rewards.sort_by(f64::total_cmp);
    assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = buf.sample(64, &mut rng).unwrap();
    assert!(batch.r.iter().all(|r| *r >= 3.0));
    assert!(ReplayBuffer::new(3).sample(4, &mut rng).is_none());
}

fn point_env() -> Env {
    let spec = sample_instances(TaskFamily::PointReach, 1, 3).remove(0);
    Env::new(&spec, &EnvConfig::default()).unwrap()
}

#[test]
fn no_updates_before_warmup() {
    let mut env = point_env();
    let mut cfg = config();
    cfg.warmup = 150;
    let mut agent = DdpgAgent::new(2, 2, cfg, 0).unwrap();
    let mut noise = GaussianNoise::new(0.2, 2).unwrap();
    let mut buf = ReplayBuffer::new(10_000);
    let first = agent.train_episode(&mut env, &mut noise, &mut buf, 1).unwrap();
    assert_eq!((first.transitions, first.updates), (100, 0));
    let second = agent.train_episode(&mut env, &mut noise, &mut buf, 2).unwrap();
    assert_eq!(second.updates, 51);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut env = point_env();
        let mut agent = DdpgAgent::new(2, 2, config(), 12).unwrap();
        let mut noise: Box<dyn ExplorationProcess> = Box::new(GaussianNoise::new(0.2, 2).unwrap());
        let mut buf = ReplayBuffer::new(10_000);
        let returns: Vec<f64> = (0..3)
            .map(|ep| agent.train_episode(&mut env, &mut noise, &mut buf, ep).unwrap().episode_return)
            .collect();
        (returns, agent.actor().clone())
    };
    let (r1, a1) = run();
    let (r2, a2) = run();
    assert_eq!(r1, r2);
    assert_eq!(a1, a2);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        DdpgConfig { gamma: 1.0, ..config() },
        DdpgConfig { tau: 0.0, ..config() },
        DdpgConfig { batch_size: 0, ..config() },
        DdpgConfig { hidden: vec![0], ..config() },
    ] {
        assert!(DdpgAgent::new(2, 2, cfg, 0).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn buffer_never_exceeds_capacity(capacity in 1usize..50, pushes in 0usize..200) {
        let mut buf = ReplayBuffer::new(capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(pushes as u64);
        for _ in 0..pushes {
            buf.push(transition(&mut rng, 2, 1, false));
            prop_assert!(buf.len() <= capacity);
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
    }

    #[test]
    fn selected_actions_stay_in_bounds(seed in any::<u64>(), e0 in -5.0f64..5.0, e1 in -5.0f64..5.0) {
        let agent = DdpgAgent::new(2, 2, config(), seed).unwrap();
        let a = agent.select_action(&[0.3, -0.3], &[e0, e1]).unwrap();
        prop_assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}
