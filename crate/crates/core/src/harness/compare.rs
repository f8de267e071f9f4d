//! Activation comparison on the toy task.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::emit;
use crate::harness::experiment::train_toy;

pub const COMPARISON_HEADER: [&str; 7] = [
    "activation",
    "seeds",
    "runs_reaching_target",
    "diverged",
    "median_epochs_to_target",
    "best_error",
    "median_final_error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub activation: String,
    pub seeds: Vec<u64>,
    pub runs_reaching_target: usize,
    pub diverged: usize,
    /// Median over all seeds, counting runs that never reach the target as infinitely slow.
    pub median_epochs_to_target: Option<f64>,
    pub best_error: f64,
    pub median_final_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct SeedResult {
    epochs_to_target: Option<usize>,
    best_error: f64,
    final_error: f64,
    diverged: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_one(base: &ExperimentConfig, activation: Activation, seed: u64) -> Result<SeedResult> {
    let cfg = ExperimentConfig {
        activation,
        seed,
        ..base.clone()
    };
    match train_toy(&cfg) {
        Ok(out) => {
            let target = base.compare.target_error;
            Ok(SeedResult {
                epochs_to_target: out.metrics.iter().find(|m| m.train_error <= target).map(|m| m.epoch),
                best_error: out.metrics.iter().map(|m| m.train_error).fold(f64::INFINITY, f64::min),
                final_error: out.metrics.last().map_or(f64::NAN, |m| m.train_error),
                diverged: false,
            })
        }
        Err(Error::Divergence { .. }) => Ok(SeedResult {
            epochs_to_target: None,
            best_error: f64::NAN,
            final_error: f64::NAN,
            diverged: true,
        }),
        Err(e) => Err(e),
    }
}

/// One row per activation in `cfg.compare.activations`, all trained on the same seeds.
pub fn compare_activations(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    let seeds = &cfg.compare.seeds;
    let jobs: Vec<(Activation, u64)> = cfg
        .compare
        .activations
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(a, s)| run_one(cfg, a, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .compare
        .activations
        .iter()
        .zip(results.chunks(seeds.len()))
        .map(|(a, runs)| {
            let finite: Vec<_> = runs.iter().filter(|r| !r.diverged).collect();
            let med = median(
                runs.iter()
                    .map(|r| r.epochs_to_target.map_or(f64::INFINITY, |e| e as f64))
                    .collect(),
            );
            ComparisonRow {
                activation: a.to_string(),
                seeds: seeds.clone(),
                runs_reaching_target: runs.iter().filter(|r| r.epochs_to_target.is_some()).count(),
                diverged: runs.len() - finite.len(),
                median_epochs_to_target: med.is_finite().then_some(med),
                best_error: finite.iter().map(|r| r.best_error).fold(f64::NAN, f64::min),
                median_final_error: if finite.is_empty() {
                    f64::NAN
                } else {
                    median(finite.iter().map(|r| r.final_error).collect())
                },
            }
        })
        .collect())
}

pub fn comparison_rows(rows: &[ComparisonRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.activation.clone(),
                r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
                r.runs_reaching_target.to_string(),
                r.diverged.to_string(),
                r.median_epochs_to_target.map_or("NA".into(), |v| v.to_string()),
                r.best_error.to_string(),
                r.median_final_error.to_string(),
            ]
        })
        .collect()
}

/// Runs the comparison and writes `comparison.csv` into `cfg.out_dir`.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    let rows = compare_activations(cfg)?;
    emit::prepare_dir(&cfg.out_dir)?;
    emit::write_csv(
        &cfg.out_dir.join("comparison.csv"),
        &COMPARISON_HEADER,
        comparison_rows(&rows),
    )?;
    Ok(rows)
}
