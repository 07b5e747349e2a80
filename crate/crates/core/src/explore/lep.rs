use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExplorationProcess, ExploreError, SubsequenceDataset};
use crate::mathcore::{Array2, Tape};
use crate::nn::{
    gaussian_nll, gaussian_nll_node, Adam, AdamConfig, Binding, GaussianHead, Lstm, LstmState,
    ModelFile, ModelMeta, Module, NnError,
};

/// `kind` recorded in LEP model files.
pub const LEP_KIND: &str = "lep";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LepConfig {
    pub hidden: usize,
    /// Window length for training and recurrent-state reset period for sampling.
    pub horizon: usize,
    /// Number of windows drawn from the trajectories.
    pub windows: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for LepConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            horizon: 20,
            windows: 100_000,
            epochs: 50,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

impl LepConfig {
    pub fn validate(&self) -> Result<(), ExploreError> {
        if self.hidden == 0 || self.horizon == 0 || self.windows == 0 || self.batch_size == 0 {
            return Err(ExploreError::Param(
                "lep hidden, horizon, windows and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(ExploreError::Param(format!("lep lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// LSTM over normalized states with a diagonal Gaussian action head.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSequenceModel {
    lstm: Lstm,
    head: GaussianHead,
    state_mean: Vec<f64>,
    state_std: Vec<f64>,
    horizon: usize,
}

impl GaussianSequenceModel {
    pub fn new(state_dim: usize, action_dim: usize, hidden: usize, horizon: usize, rng: &mut impl Rng) -> Self {
        Self {
            lstm: Lstm::new(state_dim, hidden, rng),
            head: GaussianHead::new(hidden, action_dim, rng),
            state_mean: vec![0.0; state_dim],
            state_std: vec![1.0; state_dim],
            horizon,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.head.action_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_mean(&self) -> &[f64] {
        &self.state_mean
    }

    pub fn state_std(&self) -> &[f64] {
        &self.state_std
    }

    pub fn set_normalization(&mut self, mean: &[f64], std: &[f64]) -> Result<(), ExploreError> {
        let d = self.state_dim();
        if mean.len() != d || std.len() != d || std.iter().any(|s| !(*s > 0.0)) {
            return Err(ExploreError::Dim(format!(
                "normalization needs {d} means and positive stds"
            )));
        }
        self.state_mean = mean.to_vec();
        self.state_std = std.to_vec();
        Ok(())
    }

    pub fn normalize(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.state_mean)
            .zip(&self.state_std)
            .map(|((v, m), sd)| (v - m) / sd)
            .collect()
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(1, self.hidden_dim())
    }

    /// Feeds one raw state; returns the new recurrent state and `(mean, std)`.
    pub fn step(&self, state: &LstmState, s: &[f64]) -> Result<(LstmState, Vec<f64>, Vec<f64>), ExploreError> {
        if s.len() != self.state_dim() {
            return Err(ExploreError::Dim(format!(
                "state has {} entries, model expects {}",
                s.len(),
                self.state_dim()
            )));
        }
        let x = Array2::row(&self.normalize(s));
        let next = self.lstm.step_eval(&x, state)?;
        let (mean, std) = self.head.eval(&next.h)?;
        Ok((next, mean.into_data(), std.into_data()))
    }

    fn batch_inputs(&self, ds: &SubsequenceDataset, idx: &[usize], t: usize) -> (Array2, Array2) {
        let (sd, ad) = (self.state_dim(), self.action_dim());
        let mut xs = Vec::with_capacity(idx.len() * sd);
        let mut ys = Vec::with_capacity(idx.len() * ad);
        for &i in idx {
            let (states, actions) = ds.window(i);
            xs.extend(self.normalize(&states[t]));
            ys.extend_from_slice(&actions[t]);
        }
        (
            Array2::new(idx.len(), sd, xs).expect("batch shape"),
            Array2::new(idx.len(), ad, ys).expect("batch shape"),
        )
    }

    /// Mean per-step NLL over every window, evaluated from a zero state.
    pub fn mean_nll(&self, ds: &SubsequenceDataset) -> Result<f64, ExploreError> {
        self.check_dataset(ds)?;
        let mut total = 0.0;
        let all: Vec<usize> = (0..ds.len()).collect();
        for chunk in all.chunks(256) {
            let mut state = LstmState::zeros(chunk.len(), self.hidden_dim());
            for t in 0..ds.horizon() {
                let (x, y) = self.batch_inputs(ds, chunk, t);
                state = self.lstm.step_eval(&x, &state)?;
                let (mean, std) = self.head.eval(&state.h)?;
                for r in 0..chunk.len() {
                    total += gaussian_nll(mean.row_slice(r), std.row_slice(r), y.row_slice(r))?;
                }
            }
        }
        Ok(total / (ds.len() * ds.horizon()) as f64)
    }

    fn check_dataset(&self, ds: &SubsequenceDataset) -> Result<(), ExploreError> {
        if ds.is_empty() {
            return Err(ExploreError::Empty);
        }
        if ds.state_dim() != self.state_dim() || ds.action_dim() != self.action_dim() {
            return Err(ExploreError::Dim(format!(
                "dataset dims ({}, {}) vs model ({}, {})",
                ds.state_dim(),
                ds.action_dim(),
                self.state_dim(),
                self.action_dim()
            )));
        }
        Ok(())
    }

    fn metadata(&self, config_hash: &str) -> ModelMeta {
        let sizes = BTreeMap::from([
            ("state_dim".to_string(), self.state_dim()),
            ("action_dim".to_string(), self.action_dim()),
            ("hidden".to_string(), self.hidden_dim()),
            ("horizon".to_string(), self.horizon),
        ]);
        ModelMeta {
            kind: LEP_KIND.into(),
            sizes,
            config_hash: config_hash.into(),
        }
    }

    pub fn to_file(&self, config_hash: &str) -> ModelFile {
        let mut named = self.to_named();
        named.insert("norm.mean".into(), Array2::row(&self.state_mean));
        named.insert("norm.std".into(), Array2::row(&self.state_std));
        ModelFile::new(self.metadata(config_hash), &named)
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, ExploreError> {
        let meta = &file.metadata;
        if meta.kind != LEP_KIND {
            return Err(ExploreError::Param(format!("model kind `{}` is not `{LEP_KIND}`", meta.kind)));
        }
        let size = |k: &str| {
            meta.sizes
                .get(k)
                .copied()
                .ok_or_else(|| ExploreError::Param(format!("model metadata lacks `{k}`")))
        };
        let (sd, ad, hidden, horizon) = (size("state_dim")?, size("action_dim")?, size("hidden")?, size("horizon")?);
        if sd == 0 || ad == 0 || hidden == 0 || horizon == 0 {
            return Err(ExploreError::Param("model sizes must be positive".into()));
        }
        let mut model = Self::new(sd, ad, hidden, horizon, &mut ChaCha8Rng::seed_from_u64(0));
        let named = file.named()?;
        model.load_tensors(&named)?;
        let stat = |k: &str| -> Result<Vec<f64>, ExploreError> {
            let t = named.get(k).ok_or_else(|| NnError::MissingTensor(k.into()))?;
            Ok(t.data().to_vec())
        };
        model.set_normalization(&stat("norm.mean")?, &stat("norm.std")?)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), ExploreError> {
        Ok(self.to_file(config_hash).write(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ExploreError> {
        Self::from_file(&ModelFile::read(path)?)
    }
}

impl Module for GaussianSequenceModel {
    fn named_tensors(&self) -> Vec<(String, &Array2)> {
        let mut out: Vec<(String, &Array2)> = self
            .lstm
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("lstm.{n}"), t))
            .collect();
        out.extend(
            self.head
                .named_tensors()
                .into_iter()
                .map(|(n, t)| (format!("head.{n}"), t)),
        );
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2> {
        let mut out = self.lstm.tensors_mut();
        out.extend(self.head.tensors_mut());
        out
    }
}

/// Maximum-likelihood training on the dataset's windows.
///
/// Sets the model's normalization from the dataset, then for every epoch
/// visits all windows in shuffled minibatches: zero recurrent state, unroll
/// over the window, average the per-step NLL, one Adam step. Returns the mean
/// minibatch loss of each epoch.
pub fn train_lep(
    ds: &SubsequenceDataset,
    model: &mut GaussianSequenceModel,
    config: &LepConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, ExploreError> {
    config.validate()?;
    model.check_dataset(ds)?;
    model.set_normalization(ds.state_mean(), ds.state_std())?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let lb = Binding::new(&mut tape, &model.lstm, true);
            let hb = Binding::new(&mut tape, &model.head, true);
            let mut state = model.lstm.initial_nodes(&mut tape, chunk.len());
            let mut loss = None;
            for t in 0..ds.horizon() {
                let (x, y) = model.batch_inputs(ds, chunk, t);
                let x = tape.constant(x);
                let y = tape.constant(y);
                state = model.lstm.step(&mut tape, &lb, x, state)?;
                let (mean, log_std) = model.head.forward(&mut tape, &hb, state.h)?;
                let nll = gaussian_nll_node(&mut tape, mean, log_std, y)?;
                loss = Some(match loss {
                    None => nll,
                    Some(acc) => tape.add(acc, nll).map_err(NnError::from)?,
                });
            }
            let loss = tape
                .scale(loss.expect("horizon >= 1"), 1.0 / ds.horizon() as f64)
                .map_err(NnError::from)?;
            let value = tape.value(loss).item();
            let grads = tape.backward(loss).map_err(NnError::from)?;
            let mut g = lb.grads(&grads);
            g.extend(hb.grads(&grads));
            adam.step(model.tensors_mut(), &g)?;
            total += value * chunk.len() as f64;
        }
        curve.push(total / ds.len() as f64);
    }
    Ok(curve)
}

/// Per-episode sampling state of a shared model.
///
/// The recurrent state is reset to zeros whenever `t mod h = 0`, so each
/// sample is conditioned on the states since the last multiple of `h`.
#[derive(Clone, Debug)]
pub struct LepSampler {
    model: Arc<GaussianSequenceModel>,
    state: LstmState,
    input_state: LstmState,
    next_t: usize,
    reset_at_last_step: bool,
    rng: ChaCha8Rng,
}

impl LepSampler {
    pub fn new(model: Arc<GaussianSequenceModel>) -> Self {
        let zero = model.initial_state();
        Self {
            model,
            state: zero.clone(),
            input_state: zero,
            next_t: 0,
            reset_at_last_step: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn model(&self) -> &GaussianSequenceModel {
        &self.model
    }

    /// Step index the next call expects.
    pub fn next_t(&self) -> usize {
        self.next_t
    }

    /// Whether the most recent step started from a reset state.
    pub fn reset_at_last_step(&self) -> bool {
        self.reset_at_last_step
    }

    /// Recurrent state the most recent step started from.
    pub fn input_state(&self) -> &LstmState {
        &self.input_state
    }

    /// Advances on `s_t` and returns the action distribution `(mean, std)`.
    pub fn distribution_at(&mut self, t: usize, s: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ExploreError> {
        if t != self.next_t {
            return Err(ExploreError::OutOfOrder {
                expected: self.next_t,
                got: t,
            });
        }
        self.reset_at_last_step = t % self.model.horizon() == 0;
        if self.reset_at_last_step {
            self.state = self.model.initial_state();
        }
        let (next, mean, std) = self.model.step(&self.state, s)?;
        self.input_state = std::mem::replace(&mut self.state, next);
        self.next_t += 1;
        Ok((mean, std))
    }

    /// Advances on `s_t` and draws from the action distribution.
    pub fn sample_at(&mut self, t: usize, s: &[f64]) -> Result<Vec<f64>, ExploreError> {
        let (mean, std) = self.distribution_at(t, s)?;
        Ok(mean
            .iter()
            .zip(&std)
            .map(|(m, sd)| m + sd * self.rng.sample::<f64, _>(StandardNormal))
            .collect())
    }
}

impl ExplorationProcess for LepSampler {
    fn dim(&self) -> usize {
        self.model.action_dim()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.model.initial_state();
        self.input_state = self.state.clone();
        self.next_t = 0;
        self.reset_at_last_step = false;
    }

    fn sample(&mut self, state: &[f64]) -> Result<Vec<f64>, ExploreError> {
        self.sample_at(self.next_t, state)
    }
}
