use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, DdpgError, ReplayBuffer, Transition};
use crate::envs::{Env, Policy};
use crate::explore::ExplorationProcess;
use crate::mathcore::{Array2, NodeId, Tape};
use crate::nn::{soft_update, Activation, Adam, AdamConfig, Binding, Mlp, ModelFile, ModelMeta, Module, NnError};

pub const ACTOR_KIND: &str = "ddpg-actor";
pub const CRITIC_KIND: &str = "ddpg-critic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    /// Output layers start uniform in `±final_layer_init`.
    pub final_layer_init: f64,
    pub action_bound: f64,
    /// Gradient updates after each environment step.
    pub updates_per_step: usize,
    /// Multiplies rewards before they enter the replay buffer.
    pub reward_scale: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 128,
            buffer_capacity: 1_000_000,
            warmup: 1000,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            final_layer_init: 1e-3,
            action_bound: 1.0,
            updates_per_step: 1,
            reward_scale: 1.0,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch_size and buffer_capacity must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if !(self.final_layer_init > 0.0 && self.action_bound > 0.0) {
            return bad("final_layer_init and action_bound must be positive");
        }
        Ok(())
    }
}

/// Outcome of one training episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStats {
    pub episode_return: f64,
    pub transitions: usize,
    pub updates: usize,
}

/// Actor, critic, their target copies and optimizers.
#[derive(Clone, Debug)]
pub struct DdpgAgent {
    config: DdpgConfig,
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    /// Fresh agent; `seed` drives initialization and minibatch sampling.
    pub fn new(obs_dim: usize, action_dim: usize, config: DdpgConfig, seed: u64) -> Result<Self, DdpgError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, action_dim), Activation::Tanh, &mut rng)
            .with_final_layer_init(config.final_layer_init, &mut rng)
            .with_output_scale(config.action_bound);
        let critic = Mlp::new(&sizes(obs_dim + action_dim, 1), Activation::Linear, &mut rng)
            .with_final_layer_init(config.final_layer_init, &mut rng);
        Self::from_networks(actor, critic, config, rng)
    }

    /// Agent around given networks; targets start as copies.
    pub fn from_networks(actor: Mlp, critic: Mlp, config: DdpgConfig, rng: ChaCha8Rng) -> Result<Self, DdpgError> {
        config.validate()?;
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return Err(DdpgError::Dim(format!(
                "critic takes {} inputs with {} outputs; actor maps {} -> {}",
                critic.input_dim(),
                critic.output_dim(),
                actor.input_dim(),
                actor.output_dim()
            )));
        }
        Ok(Self {
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_lr)),
            critic_opt: Adam::new(AdamConfig::with_lr(config.critic_lr)),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            config,
            rng,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Deterministic policy output `pi(s)`.
    pub fn policy(&self, s: &[f64]) -> Result<Vec<f64>, DdpgError> {
        Ok(self.actor.eval_row(s)?)
    }

    /// `clamp(pi(s) + eps, -bound, bound)`.
    pub fn select_action(&self, s: &[f64], eps: &[f64]) -> Result<Vec<f64>, DdpgError> {
        if eps.len() != self.action_dim() {
            return Err(DdpgError::Dim(format!(
                "exploration sample has {} entries, actions have {}",
                eps.len(),
                self.action_dim()
            )));
        }
        let b = self.config.action_bound;
        Ok(self
            .policy(s)?
            .iter()
            .zip(eps)
            .map(|(a, e)| (a + e).clamp(-b, b))
            .collect())
    }

    /// `Q(s, a)` for every row.
    pub fn q_values(&self, s: &Array2, a: &Array2) -> Result<Vec<f64>, DdpgError> {
        Ok(self.critic.eval(&s.concat_cols(a).map_err(NnError::from)?)?.into_data())
    }

    /// `y = r + gamma (1 - done) Q'(s', pi'(s'))`.
    pub fn bellman_target(&self, batch: &Batch) -> Result<Vec<f64>, DdpgError> {
        if batch.is_empty() {
            return Err(DdpgError::EmptyBatch);
        }
        let a2 = self.target_actor.eval(&batch.s2)?;
        let x = batch.s2.concat_cols(&a2).map_err(NnError::from)?;
        let q2 = self.target_critic.eval(&x)?;
        Ok(batch
            .r
            .iter()
            .zip(&batch.done)
            .zip(q2.data())
            .map(|((r, &d), q)| if d { *r } else { r + self.config.gamma * q })
            .collect())
    }

    fn critic_node(&self, tape: &mut Tape, bind: &Binding, s: NodeId, a: NodeId) -> Result<NodeId, DdpgError> {
        let x = tape.concat_cols(s, a).map_err(NnError::from)?;
        Ok(self.critic.forward(tape, bind, x)?)
    }

    /// One Adam step on the mean squared Bellman error; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64, DdpgError> {
        let y = self.bellman_target(batch)?;
        let mut tape = Tape::new();
        let bind = Binding::new(&mut tape, &self.critic, true);
        let s = tape.constant(batch.s.clone());
        let a = tape.constant(batch.a.clone());
        let q = self.critic_node(&mut tape, &bind, s, a)?;
        let y = tape.constant(Array2::new(batch.len(), 1, y).map_err(NnError::from)?);
        let loss = (|| {
            let d = tape.sub(q, y)?;
            let sq = tape.square(d)?;
            tape.mean(sq)
        })()
        .map_err(NnError::from)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(DdpgError::NonFinite("critic loss"));
        }
        let grads = tape.backward(loss).map_err(NnError::from)?;
        self.critic_opt.step(self.critic.tensors_mut(), &bind.grads(&grads))?;
        Ok(value)
    }

    /// `mean Q(s, pi(s))` on the batch and its gradient with respect to the
    /// actor tensors, with the critic held fixed.
    pub fn actor_gradients(&self, batch: &Batch) -> Result<(f64, Vec<Array2>), DdpgError> {
        if batch.is_empty() {
            return Err(DdpgError::EmptyBatch);
        }
        let mut tape = Tape::new();
        let actor_bind = Binding::new(&mut tape, &self.actor, true);
        let critic_bind = Binding::new(&mut tape, &self.critic, false);
        let s = tape.constant(batch.s.clone());
        let a = self.actor.forward(&mut tape, &actor_bind, s)?;
        let q = self.critic_node(&mut tape, &critic_bind, s, a)?;
        let objective = tape.mean(q).map_err(NnError::from)?;
        let value = tape.value(objective).item();
        if !value.is_finite() {
            return Err(DdpgError::NonFinite("actor objective"));
        }
        let grads = tape.backward(objective).map_err(NnError::from)?;
        Ok((value, actor_bind.grads(&grads)))
    }

    /// One Adam ascent step on `mean Q(s, pi(s))` with the critic held fixed;
    /// returns the objective before the step.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64, DdpgError> {
        let (value, grads) = self.actor_gradients(batch)?;
        let descent: Vec<Array2> = grads.iter().map(|g| g.scale(-1.0)).collect();
        self.actor_opt.step(self.actor.tensors_mut(), &descent)?;
        Ok(value)
    }

    /// Polyak-averages both target networks toward the online ones.
    pub fn soft_update(&mut self) {
        soft_update(&mut self.target_actor, &self.actor, self.config.tau);
        soft_update(&mut self.target_critic, &self.critic, self.config.tau);
    }

    /// Critic update, actor update and soft update on one sampled minibatch.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<bool, DdpgError> {
        let Some(batch) = buffer.sample(self.config.batch_size, &mut self.rng) else {
            return Ok(false);
        };
        self.critic_update(&batch)?;
        self.actor_update(&batch)?;
        self.soft_update();
        Ok(true)
    }

    /// Runs one episode with exploration, storing transitions and updating
    /// after every step once the buffer holds `warmup` transitions.
    ///
    /// The environment resets from `seed` and the exploration process from a
    /// seed derived from it.
    pub fn train_episode(
        &mut self,
        env: &mut Env,
        exploration: &mut dyn ExplorationProcess,
        buffer: &mut ReplayBuffer,
        seed: u64,
    ) -> Result<EpisodeStats, DdpgError> {
        if env.horizon() == 0 {
            return Err(DdpgError::Config("episode horizon must be at least 1".into()));
        }
        if exploration.dim() != self.action_dim() || env.action_dim() != self.action_dim() || env.obs_dim() != self.obs_dim() {
            return Err(DdpgError::Dim(format!(
                "env ({} obs, {} actions), agent ({}, {}), exploration {}",
                env.obs_dim(),
                env.action_dim(),
                self.obs_dim(),
                self.action_dim(),
                exploration.dim()
            )));
        }
        exploration.reset(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut obs = env.reset(seed);
        let mut stats = EpisodeStats {
            episode_return: 0.0,
            transitions: 0,
            updates: 0,
        };
        loop {
            let eps = exploration.sample(&obs)?;
            let action = self.select_action(&obs, &eps)?;
            let step = env.step(&action)?;
            stats.episode_return += step.reward;
            stats.transitions += 1;
            buffer.push(Transition {
                s: std::mem::take(&mut obs),
                a: action,
                r: step.reward * self.config.reward_scale,
                s2: step.obs.clone(),
                done: step.done,
            });
            if buffer.len() >= self.config.warmup {
                for _ in 0..self.config.updates_per_step {
                    if self.train_step(buffer)? {
                        stats.updates += 1;
                    }
                }
            }
            obs = step.obs;
            if step.done {
                return Ok(stats);
            }
        }
    }

    fn meta(&self, kind: &str, config_hash: &str) -> ModelMeta {
        ModelMeta {
            kind: kind.into(),
            sizes: BTreeMap::from([
                ("obs_dim".to_string(), self.obs_dim()),
                ("action_dim".to_string(), self.action_dim()),
            ]),
            config_hash: config_hash.into(),
        }
    }

    /// Writes the online actor and critic as two model files.
    pub fn save(&self, actor_path: &Path, critic_path: &Path, config_hash: &str) -> Result<(), DdpgError> {
        ModelFile::new(self.meta(ACTOR_KIND, config_hash), &self.actor.to_named()).write(actor_path)?;
        ModelFile::new(self.meta(CRITIC_KIND, config_hash), &self.critic.to_named()).write(critic_path)?;
        Ok(())
    }
}

impl Policy for DdpgAgent {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.policy(obs).expect("observation dimension checked by the environment")
    }
}

/// Deterministic actor restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct ActorPolicy(pub Mlp);

impl ActorPolicy {
    /// Loads an actor file into a network of the given architecture.
    pub fn load(path: &Path, template: &Mlp) -> Result<Self, DdpgError> {
        let file = ModelFile::read(path)?;
        if file.metadata.kind != ACTOR_KIND {
            return Err(DdpgError::Config(format!("`{}` is not an actor file", path.display())));
        }
        let mut actor = template.clone();
        actor.load_tensors(&file.named()?)?;
        Ok(Self(actor))
    }
}

impl Policy for ActorPolicy {
    fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.0.eval_row(obs).expect("observation dimension checked by the environment")
    }
}
