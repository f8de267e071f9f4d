//! Phase diagrams and backprojections of a network.

use std::path::Path;

use crate::error::Result;
use crate::harness::emit;
use crate::interpret::{build_chain, hyperplanes, output_archetypes, phase_diagram, Formulation, Grid2d};
use crate::network::Network;

/// Writes `phase_diagram.csv` with one block of arrows per layer in `layers`.
pub fn write_phase_diagram(
    net: &Network,
    grid: &Grid2d,
    layers: &[usize],
    formulation: Formulation,
    path: &Path,
) -> Result<usize> {
    let mut rows = Vec::new();
    for &layer in layers {
        rows.extend(emit::phase_rows(layer, &phase_diagram(net, grid, layer, formulation)?));
    }
    let n = rows.len();
    emit::write_csv(path, &emit::PHASE_HEADER, rows)?;
    Ok(n)
}

/// Writes `archetypes.csv` (output one-hot vectors in input coordinates) and
/// `hyperplanes.csv` for every layer into `dir`.
pub fn write_backprojection(net: &Network, dir: &Path) -> Result<Vec<String>> {
    emit::prepare_dir(dir)?;
    let chain = build_chain(net)?;
    let d = chain.input_dim();
    let mut header = vec!["output".to_string()];
    header.extend((0..d).map(|i| format!("coord_{i}")));
    header.push("lossy".into());
    let rows = output_archetypes(&chain)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let mut row = vec![i.to_string()];
            row.extend(b.coords.iter().map(|v| v.to_string()));
            row.push(b.lossy.to_string());
            row
        });
    let archetypes = dir.join("archetypes.csv");
    emit::write_csv(&archetypes, &header, rows)?;

    let mut planes = Vec::new();
    for layer in 0..chain.depth() {
        planes.extend(hyperplanes(&chain, layer)?);
    }
    let planes_path = dir.join("hyperplanes.csv");
    emit::write_csv(&planes_path, &emit::hyperplane_header(d), emit::hyperplane_rows(&planes))?;
    Ok(vec![archetypes.display().to_string(), planes_path.display().to_string()])
}
