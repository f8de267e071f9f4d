//! File writers for the documented CSV and JSON schemas.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::interpret::{Arrow, Hyperplane, Trajectory};
use crate::network::EpochMetrics;

pub const TRAJECTORY_HEADER: [&str; 6] = ["run_id", "epoch", "layer", "point_id", "coord", "value"];
pub const METRICS_HEADER: [&str; 3] = ["epoch", "loss", "train_error"];
pub const PHASE_HEADER: [&str; 5] = ["layer", "start_0", "start_1", "end_0", "end_1"];

pub fn hyperplane_header(dim: usize) -> Vec<String> {
    let mut h = vec!["layer".to_string(), "neuron".to_string()];
    h.extend((0..dim).map(|i| format!("normal_{i}")));
    h.push("offset".into());
    h
}

fn num(v: f64) -> String {
    v.to_string()
}

pub(crate) fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes a header and rows of already formatted fields.
pub fn write_csv<H: AsRef<[u8]>>(path: &Path, header: &[H], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Long-form rows for one snapshot of a run.
pub fn trajectory_rows(run_id: &str, epoch: usize, traj: &Trajectory) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (layer, state) in traj.layers.iter().zip(&traj.states) {
        for (r, point) in traj.point_ids.iter().enumerate() {
            for (coord, v) in state.row(r).iter().enumerate() {
                rows.push(vec![
                    run_id.to_string(),
                    epoch.to_string(),
                    layer.to_string(),
                    point.to_string(),
                    coord.to_string(),
                    num(*v),
                ]);
            }
        }
    }
    rows
}

pub fn hyperplane_rows(planes: &[Hyperplane]) -> Vec<Vec<String>> {
    planes
        .iter()
        .map(|p| {
            let mut row = vec![p.layer.to_string(), p.neuron.to_string()];
            row.extend(p.normal.iter().map(|v| num(*v)));
            row.push(num(p.offset));
            row
        })
        .collect()
}

pub fn metrics_rows(metrics: &[EpochMetrics]) -> Vec<Vec<String>> {
    metrics
        .iter()
        .map(|m| vec![m.epoch.to_string(), num(m.loss), num(m.train_error)])
        .collect()
}

pub fn phase_rows(layer: usize, arrows: &[Arrow]) -> Vec<Vec<String>> {
    arrows
        .iter()
        .map(|a| {
            vec![
                layer.to_string(),
                num(a.start[0]),
                num(a.start[1]),
                num(a.end[0]),
                num(a.end[1]),
            ]
        })
        .collect()
}

pub(crate) fn artifact(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
