use serde::Serialize;

use super::experiment::{LearningCurve, RunRecord};

/// Episode of the first evaluation at or above `threshold`.
pub fn episodes_to_threshold(curve: &LearningCurve, threshold: f64) -> Option<usize> {
    curve
        .points
        .iter()
        .find(|p| p.eval_return >= threshold)
        .map(|p| p.episode)
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median where runs that never reached the threshold count as `censor`.
pub fn censored_median(values: &[Option<usize>], censor: usize) -> f64 {
    let v: Vec<f64> = values.iter().map(|e| e.unwrap_or(censor) as f64).collect();
    median(&v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregatePoint {
    pub episode: usize,
    pub mean: f64,
    pub variance: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and population variance of the evaluation returns at every episode
/// index that appears in any curve; `n` counts the curves reaching it.
pub fn aggregate_curves(curves: &[&LearningCurve]) -> Vec<AggregatePoint> {
    let mut episodes: Vec<usize> = curves.iter().flat_map(|c| c.points.iter().map(|p| p.episode)).collect();
    episodes.sort_unstable();
    episodes.dedup();
    episodes
        .into_iter()
        .map(|episode| {
            let vals: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.points.iter().find(|p| p.episode == episode))
                .map(|p| p.eval_return)
                .collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let variance = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            AggregatePoint {
                episode,
                mean,
                variance,
                std: variance.sqrt(),
                n,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Equal-width histogram over the range of `values`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![HistogramBin {
            bin_low: lo,
            bin_high: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            bin_low: lo + k as f64 * width,
            bin_high: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

/// Final-reward statistics of one parametrization or of a pooled grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariantStats {
    pub label: String,
    pub runs: usize,
    pub final_rewards: Vec<f64>,
    pub successes: usize,
    pub success_fraction: f64,
    pub median_final: f64,
    pub mean_final: f64,
}

impl VariantStats {
    fn from_runs(label: &str, runs: &[&RunRecord]) -> Self {
        let final_rewards: Vec<f64> = runs.iter().filter_map(|r| r.final_eval()).collect();
        let successes = runs.iter().filter(|r| r.succeeded()).count();
        let n = final_rewards.len();
        Self {
            label: label.to_string(),
            runs: runs.len(),
            successes,
            success_fraction: if runs.is_empty() { 0.0 } else { successes as f64 / runs.len() as f64 },
            median_final: if n == 0 { f64::NAN } else { median(&final_rewards) },
            mean_final: if n == 0 { f64::NAN } else { final_rewards.iter().sum::<f64>() / n as f64 },
            final_rewards,
        }
    }
}

/// Per-parametrization and pooled statistics of a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PooledStats {
    pub variants: Vec<VariantStats>,
    pub pooled: VariantStats,
    /// Index into `variants` of the parametrization with the highest median.
    pub best: usize,
    /// `(best median - pooled median) / |best median|`.
    pub degradation: f64,
}

/// Pools every run of the given parametrizations, not only the best one.
pub fn robustness_sweep(runs: &[RunRecord], labels: &[String], pooled_label: &str) -> PooledStats {
    assert!(labels.len() >= 2, "a robustness sweep needs at least two parametrizations");
    let variants: Vec<VariantStats> = labels
        .iter()
        .map(|l| {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| &r.variant == l).collect();
            VariantStats::from_runs(l, &rs)
        })
        .collect();
    let all: Vec<&RunRecord> = runs.iter().filter(|r| labels.contains(&r.variant)).collect();
    let pooled = VariantStats::from_runs(pooled_label, &all);
    let best = variants
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.median_final.total_cmp(&b.1.median_final))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let b = variants[best].median_final;
    PooledStats {
        degradation: (b - pooled.median_final) / b.abs(),
        variants,
        pooled,
        best,
    }
}
