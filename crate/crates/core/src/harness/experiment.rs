//! The 2D toy classification run.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::dataset::{gen_toy_dataset, init_weights};
use crate::harness::emit;
use crate::interpret::{build_chain, forward_interpretable, hyperplanes};
use crate::network::{train_with_observer, LabeledBatch, Network, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub epochs: Vec<EpochRecord>,
    pub final_error: f64,
    pub artifacts: Vec<String>,
    /// Not written to report.json so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

/// Untrained network for a config.
pub fn initial_network(cfg: &ExperimentConfig) -> Result<Network> {
    let shapes = cfg.shapes();
    let mut acts = vec![cfg.activation; shapes.len() - 1];
    acts.push(cfg.output_activation);
    init_weights(&shapes, &acts, cfg.seed, cfg.init_scale)
}

pub fn toy_dataset(cfg: &ExperimentConfig) -> Result<LabeledBatch> {
    gen_toy_dataset(&cfg.dataset, cfg.dataset_seed())
}

/// Trains from a given network, calling `observer` at every epoch.
pub fn train_toy_from(
    cfg: &ExperimentConfig,
    net: Network,
    data: &LabeledBatch,
    observer: impl FnMut(usize, &Network),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_with_observer(net, data, &cfg.train_config(), observer)
}

/// Trains without writing anything.
pub fn train_toy(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let data = toy_dataset(cfg)?;
    train_toy_from(cfg, initial_network(cfg)?, &data, |_, _| {})
}

pub fn run_id(cfg: &ExperimentConfig) -> String {
    format!("{}-{}-s{}", cfg.activation, cfg.output_activation, cfg.seed)
}

/// Trains and writes trajectory.csv, hyperplanes.csv, metrics.csv, network.json and
/// report.json into `cfg.out_dir`.
///
/// Trajectory and hyperplane files need Goldilocks hidden layers and are skipped otherwise.
pub fn run_toy_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    emit::prepare_dir(dir)?;
    let data = toy_dataset(cfg)?;
    let net = initial_network(cfg)?;
    let interpretable = build_chain(&net).is_ok();
    let id = run_id(cfg);

    let mut traj_rows = Vec::new();
    let mut snapshot_err = None;
    let outcome = train_toy_from(cfg, net, &data, |epoch, net| {
        if !interpretable || snapshot_err.is_some() {
            return;
        }
        if epoch % cfg.snapshot_every == 0 || epoch == cfg.epochs {
            match build_chain(net).and_then(|c| forward_interpretable(&c, &data.inputs)) {
                Ok(t) => traj_rows.extend(emit::trajectory_rows(&id, epoch, &t)),
                Err(e) => snapshot_err = Some(e),
            }
        }
    })?;
    if let Some(e) = snapshot_err {
        return Err(e);
    }

    let mut artifacts = Vec::new();
    let mut record = |name: &str| {
        let p = emit::artifact(dir, name);
        artifacts.push(p.display().to_string());
        p
    };
    if interpretable {
        let path = record("trajectory.csv");
        emit::write_csv(&path, &emit::TRAJECTORY_HEADER, traj_rows)?;
        let chain = build_chain(&outcome.network)?;
        let mut planes = Vec::new();
        for layer in 0..chain.depth() {
            planes.extend(hyperplanes(&chain, layer)?);
        }
        let path = record("hyperplanes.csv");
        emit::write_csv(&path, &emit::hyperplane_header(chain.input_dim()), emit::hyperplane_rows(&planes))?;
    }
    let path = record("metrics.csv");
    emit::write_csv(&path, &emit::METRICS_HEADER, emit::metrics_rows(&outcome.metrics))?;
    let path = record("network.json");
    emit::write_json(&path, &outcome.network)?;
    let report_path = record("report.json");

    let report = RunReport {
        config: cfg.clone(),
        epochs: outcome
            .metrics
            .iter()
            .map(|m| EpochRecord {
                epoch: m.epoch,
                loss: m.loss,
                error: m.train_error,
            })
            .collect(),
        final_error: outcome.metrics.last().map_or(f64::NAN, |m| m.train_error),
        artifacts,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    emit::write_json(&report_path, &report)?;
    Ok(report)
}

pub fn load_network(path: &Path) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    let net: Network = serde_json::from_str(&text)?;
    net.validate()?;
    Ok(net)
}
