#![allow(dead_code)]

use goldilocks::linalg::Matrix;
use goldilocks::network::{backward, forward, objective, Gradients, Layer, LossKind, Network};
use goldilocks::rng::SplitMix64;
use goldilocks::Activation;

pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-4)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn gaussian_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.normal())
}

/// Depth and widths drawn from the given ranges, weights `N(0, 1/in)`, biases `N(0, 0.25)`.
pub fn random_network(
    rng: &mut SplitMix64,
    depth: usize,
    widths: &[usize],
    hidden: Activation,
    output: Activation,
) -> Network {
    let layers = (0..depth)
        .map(|k| {
            let (rows, cols) = (widths[k + 1], widths[k]);
            let w = gaussian_matrix(rng, rows, cols, 1.0 / (cols as f64).sqrt());
            let b = (0..rows).map(|_| 0.5 * rng.normal()).collect();
            let act = if k + 1 == depth { output } else { hidden };
            Layer::new(w, b, act).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries: usize,
}

/// Compares `backward` against central differences of the objective for every
/// weight, bias and input entry.
pub fn check_gradients(
    net: &Network,
    inputs: &Matrix,
    targets: &Matrix,
    loss: LossKind,
    beta: f64,
) -> GradCheck {
    let trace = forward(net, inputs).unwrap();
    let g: Gradients = backward(net, &trace, loss, targets, beta).unwrap();
    let value = |n: &Network, x: &Matrix| {
        let t = forward(n, x).unwrap();
        objective(n, &t, loss, targets, beta).unwrap()
    };
    let mut max_rel_err: f64 = 0.0;
    let mut entries = 0;
    for k in 0..net.depth() {
        for idx in 0..net.layers()[k].weights.data().len() {
            let mut p = net.clone();
            let mut m = net.clone();
            p.layers_mut()[k].weights.data_mut()[idx] += FD_STEP;
            m.layers_mut()[k].weights.data_mut()[idx] -= FD_STEP;
            let fd = (value(&p, inputs) - value(&m, inputs)) / (2.0 * FD_STEP);
            max_rel_err = max_rel_err.max(rel_err(fd, g.weights[k].data()[idx]));
            entries += 1;
        }
        for idx in 0..net.layers()[k].bias.len() {
            let mut p = net.clone();
            let mut m = net.clone();
            p.layers_mut()[k].bias[idx] += FD_STEP;
            m.layers_mut()[k].bias[idx] -= FD_STEP;
            let fd = (value(&p, inputs) - value(&m, inputs)) / (2.0 * FD_STEP);
            max_rel_err = max_rel_err.max(rel_err(fd, g.biases[k][idx]));
            entries += 1;
        }
    }
    for idx in 0..inputs.data().len() {
        let mut p = inputs.clone();
        let mut m = inputs.clone();
        p.data_mut()[idx] += FD_STEP;
        m.data_mut()[idx] -= FD_STEP;
        let fd = (value(net, &p) - value(net, &m)) / (2.0 * FD_STEP);
        max_rel_err = max_rel_err.max(rel_err(fd, g.inputs.data()[idx]));
        entries += 1;
    }
    GradCheck { max_rel_err, entries }
}

/// Targets in (0, 1) so cross entropy is well defined.
pub fn random_targets(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(0.05, 0.95))
}
