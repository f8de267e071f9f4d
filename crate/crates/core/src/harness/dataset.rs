//! Toy data and weight initialization.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::harness::config::ToyDatasetSpec;
use crate::linalg::Matrix;
use crate::network::{LabeledBatch, Layer, Network};
use crate::rng::{self, SplitMix64};

/// Samples every component in order; targets are a single 0/1 column.
pub fn gen_toy_dataset(spec: &ToyDatasetSpec, seed: u64) -> Result<LabeledBatch> {
    spec.validate()?;
    let mut rng = SplitMix64::stream(seed, rng::DATA);
    let n: usize = spec.counts.iter().sum();
    let mut inputs = Vec::with_capacity(2 * n);
    let mut targets = Vec::with_capacity(n);
    for ((mean, &count), &label) in spec.means.iter().zip(&spec.counts).zip(&spec.labels) {
        for _ in 0..count {
            inputs.push(mean[0] + spec.std * rng.normal());
            inputs.push(mean[1] + spec.std * rng.normal());
            targets.push(label as f64);
        }
    }
    LabeledBatch::new(Matrix::new(n, 2, inputs)?, Matrix::new(n, 1, targets)?)
}

/// Every weight and bias i.i.d. uniform on `[-scale, scale]`, drawn layer by layer.
pub fn init_weights(
    shapes: &[(usize, usize)],
    activations: &[Activation],
    seed: u64,
    scale: f64,
) -> Result<Network> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("init scale {scale} must be > 0")));
    }
    if shapes.len() != activations.len() {
        return Err(Error::InvalidInput("one activation per layer required".into()));
    }
    let mut rng = SplitMix64::stream(seed, rng::WEIGHTS);
    let layers = shapes
        .iter()
        .zip(activations)
        .map(|(&(rows, cols), &act)| {
            let w = Matrix::from_fn(rows, cols, |_, _| rng.uniform(-scale, scale));
            let b = (0..rows).map(|_| rng.uniform(-scale, scale)).collect();
            Layer::new(w, b, act)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dataset() {
        let spec = ToyDatasetSpec::default();
        let d = gen_toy_dataset(&spec, 1).unwrap();
        assert_eq!(d.len(), 300);
        let ones = d.targets.data().iter().filter(|&&t| t == 1.0).count();
        assert_eq!((300 - ones, ones), (100, 200));
        for (k, mean) in spec.means.iter().enumerate() {
            for c in 0..2 {
                let m = (0..100).map(|r| d.inputs.get(100 * k + r, c)).sum::<f64>() / 100.0;
                assert!((m - mean[c]).abs() < 3.0 / 10.0, "component {k} coord {c}: {m}");
            }
        }
        assert_eq!(gen_toy_dataset(&spec, 1).unwrap(), d);
        assert_ne!(gen_toy_dataset(&spec, 2).unwrap(), d);
    }

    #[test]
    fn zero_std_collapses_to_means() {
        let spec = ToyDatasetSpec {
            std: 0.0,
            ..Default::default()
        };
        let d = gen_toy_dataset(&spec, 9).unwrap();
        for r in 0..300 {
            let m = spec.means[r / 100];
            assert_eq!(d.inputs.row(r), &m);
        }
    }

    #[test]
    fn init_bounds_and_determinism() {
        let shapes = [(2, 2), (2, 2), (1, 2)];
        let acts = [Activation::LORENTZ_BIASED, Activation::LORENTZ_BIASED, Activation::Sigmoid];
        let a = init_weights(&shapes, &acts, 3, 0.005).unwrap();
        let b = init_weights(&shapes, &acts, 3, 0.005).unwrap();
        assert_eq!(a, b);
        for l in a.layers() {
            assert!(l.weights.data().iter().chain(&l.bias).all(|v| v.abs() <= 0.005));
        }
        assert!(init_weights(&shapes, &acts, 3, 0.0).is_err());
    }

    #[test]
    fn init_mean_is_centered() {
        let net = init_weights(&[(100, 100)], &[Activation::Linear], 11, 0.005).unwrap();
        let w = net.layers()[0].weights.data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 3.0 * (0.005 / 3f64.sqrt()) / 100.0);
    }
}
