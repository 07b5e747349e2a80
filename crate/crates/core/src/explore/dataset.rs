use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExploreError;
use crate::envs::{rollout, Env, EnvConfig, Policy, TaskSpec};

pub const DATASET_VERSION: u32 = 1;

/// Which kind of policy produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "scripted")]
    Scripted,
    #[serde(rename = "ddpg")]
    Ddpg,
    #[serde(rename = "ddpg+lep")]
    DdpgLep,
}

/// Time-aligned states and actions of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub task_id: String,
    pub instance_id: u64,
    pub source: Source,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.states.len() != self.actions.len() {
            return Err(format!(
                "{} states but {} actions",
                self.states.len(),
                self.actions.len()
            ));
        }
        for (t, (s, a)) in self.states.iter().zip(&self.actions).enumerate() {
            if s.len() != self.state_dim || a.len() != self.action_dim {
                return Err(format!("step {t}: wrong state or action length"));
            }
            if s.iter().chain(a).any(|v| !v.is_finite()) {
                return Err(format!("step {t}: non-finite value"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub state_dim: usize,
    pub action_dim: usize,
    #[serde(default)]
    pub config_hash: String,
}

/// Writes a header line followed by one JSON trajectory per line.
pub fn write_dataset(path: &Path, header: DatasetHeader, trajectories: &[Trajectory]) -> Result<(), ExploreError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", to_line(&header)?)?;
    for (i, t) in trajectories.iter().enumerate() {
        if t.state_dim != header.state_dim || t.action_dim != header.action_dim {
            return Err(ExploreError::Dim(format!(
                "trajectory {i} has dims ({}, {}), header says ({}, {})",
                t.state_dim, t.action_dim, header.state_dim, header.action_dim
            )));
        }
        writeln!(out, "{}", to_line(t)?)?;
    }
    out.flush()?;
    Ok(())
}

fn to_line<T: Serialize>(value: &T) -> Result<String, ExploreError> {
    serde_json::to_string(value).map_err(|e| ExploreError::Format {
        line: 0,
        reason: e.to_string(),
    })
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Trajectory>), ExploreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |line: usize, reason: String| ExploreError::Format { line, reason };
    let first = lines.next().ok_or_else(|| bad(1, "missing header".into()))??;
    let header: DatasetHeader = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.version != DATASET_VERSION {
        return Err(bad(1, format!("unsupported version {}", header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?;
        t.validate().map_err(|e| bad(n, e))?;
        if t.state_dim != header.state_dim || t.action_dim != header.action_dim {
            return Err(bad(n, "dimensions differ from header".into()));
        }
        out.push(t);
    }
    Ok((header, out))
}

/// Rolls out the policy of every spec `n` times without exploration noise.
///
/// Rollout `k` of spec `i` resets from seed `seed + 1000 i + k`.
pub fn collect_trajectories(
    specs: &[TaskSpec],
    policy_for: &dyn Fn(&TaskSpec) -> Box<dyn Policy + Send + Sync>,
    source: Source,
    n: usize,
    seed: u64,
    config: &EnvConfig,
) -> Result<Vec<Trajectory>, ExploreError> {
    if n == 0 {
        return Err(ExploreError::Param("need at least one rollout per task".into()));
    }
    let mut out = Vec::with_capacity(specs.len() * n);
    for (i, spec) in specs.iter().enumerate() {
        let mut env = Env::new(spec, config)?;
        let policy = policy_for(spec);
        for k in 0..n {
            let r = rollout(&mut env, policy.as_ref(), seed + 1000 * i as u64 + k as u64)?;
            out.push(Trajectory {
                task_id: spec.family().to_string(),
                instance_id: spec.instance,
                source,
                state_dim: env.obs_dim(),
                action_dim: env.action_dim(),
                states: r.observations,
                actions: r.actions,
            });
        }
    }
    Ok(out)
}

/// Windows of length `horizon` drawn from shared trajectories.
#[derive(Clone, Debug)]
pub struct SubsequenceDataset {
    horizon: usize,
    trajectories: Arc<Vec<Trajectory>>,
    items: Vec<(usize, usize)>,
    state_mean: Vec<f64>,
    state_std: Vec<f64>,
}

impl SubsequenceDataset {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories[0].state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.trajectories[0].action_dim
    }

    /// `(trajectory index, start offset)` of every window.
    pub fn items(&self) -> &[(usize, usize)] {
        &self.items
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// States and actions of window `i`.
    pub fn window(&self, i: usize) -> (&[Vec<f64>], &[Vec<f64>]) {
        let (t, s) = self.items[i];
        let tr = &self.trajectories[t];
        (&tr.states[s..s + self.horizon], &tr.actions[s..s + self.horizon])
    }

    pub fn state_mean(&self) -> &[f64] {
        &self.state_mean
    }

    /// Per-dimension scale; dimensions that never vary get 1.
    pub fn state_std(&self) -> &[f64] {
        &self.state_std
    }

    /// Keeps the windows selected by `keep`, preserving normalization statistics.
    pub fn filter(&self, keep: impl Fn(usize, (usize, usize)) -> bool) -> Self {
        let items = self
            .items
            .iter()
            .enumerate()
            .filter(|(i, it)| keep(*i, **it))
            .map(|(_, it)| *it)
            .collect();
        Self {
            items,
            ..self.clone()
        }
    }
}

/// Draws `count` windows uniformly over (trajectory, start) with `start ∈ [0, T - h]`.
pub fn sample_subsequences(
    trajectories: Vec<Trajectory>,
    horizon: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<SubsequenceDataset, ExploreError> {
    if trajectories.is_empty() || count == 0 {
        return Err(ExploreError::Empty);
    }
    if horizon == 0 {
        return Err(ExploreError::Param("horizon must be at least 1".into()));
    }
    let (sd, ad) = (trajectories[0].state_dim, trajectories[0].action_dim);
    for (index, t) in trajectories.iter().enumerate() {
        if t.len() < horizon {
            return Err(ExploreError::TooShort {
                index,
                len: t.len(),
                horizon,
            });
        }
        if t.state_dim != sd || t.action_dim != ad {
            return Err(ExploreError::Dim(format!("trajectory {index} has mismatched dims")));
        }
    }
    let items: Vec<(usize, usize)> = (0..count)
        .map(|_| {
            let t = rng.gen_range(0..trajectories.len());
            let s = rng.gen_range(0..=trajectories[t].len() - horizon);
            (t, s)
        })
        .collect();

    let mut sum = vec![0.0; sd];
    let mut sq = vec![0.0; sd];
    let n = (count * horizon) as f64;
    for &(t, s) in &items {
        for state in &trajectories[t].states[s..s + horizon] {
            for (k, v) in state.iter().enumerate() {
                sum[k] += v;
            }
        }
    }
    let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
    for &(t, s) in &items {
        for state in &trajectories[t].states[s..s + horizon] {
            for (k, v) in state.iter().enumerate() {
                sq[k] += (v - mean[k]).powi(2);
            }
        }
    }
    let std = sq
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 1e-8 {
                s
            } else {
                1.0
            }
        })
        .collect();
    Ok(SubsequenceDataset {
        horizon,
        trajectories: Arc::new(trajectories),
        items,
        state_mean: mean,
        state_std: std,
    })
}
