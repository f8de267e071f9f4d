//! Direct-formulation feed-forward networks.
//!
//! Each layer computes `x_{n+1} = A(W_n x_n + b_n)`; for Goldilocks
//! activations this is `z + g(z)`. Batches are matrices with one sample
//! per row.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::harness::metrics::batch_classification_error;
use crate::linalg::{dot, Matrix};
use crate::rng::{self, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let layer = Self {
            weights,
            bias,
            activation,
        };
        layer.validate(0)?;
        Ok(layer)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `W x + b` for a single sample.
    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.matvec(x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.pre_activation(x)
            .into_iter()
            .map(|z| self.activation.apply(z))
            .collect()
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.bias.len() != self.weights.rows() {
            return Err(Error::Shape(format!(
                "layer {index}: bias has {} entries for {} rows",
                self.bias.len(),
                self.weights.rows()
            )));
        }
        if !self.weights.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(format!("layer {index}: non-finite parameter")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate(k)?;
            if k > 0 && layer.in_dim() != self.layers[k - 1].out_dim() {
                return Err(Error::Shape(format!(
                    "layer {k} expects {} inputs but layer {} produces {}",
                    layer.in_dim(),
                    k - 1,
                    self.layers[k - 1].out_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for weight edits; shapes must be preserved.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.layers.iter().fold(x.to_vec(), |x, l| l.apply(&x)))
    }

    /// `Σ_n ‖W_n‖²_F`.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.frobenius_norm().powi(2))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    /// Index into [`ForwardTrace::states`] the mask was applied to.
    pub state: usize,
    /// Per-entry multipliers: `0` for dropped units, `1/(1-p)` for kept ones.
    pub mask: Matrix,
}

/// Every intermediate quantity of a batch forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `states[0]` are the inputs, `states[n+1] = A(pre[n])`; the last entry holds the outputs.
    pub states: Vec<Matrix>,
    /// Pre-activations `z_n = W_n x_n + b_n`.
    pub pre: Vec<Matrix>,
    pub dropout: Option<DropoutMask>,
}

impl ForwardTrace {
    pub fn outputs(&self) -> &Matrix {
        &self.states[self.states.len() - 1]
    }

    pub fn batch_size(&self) -> usize {
        self.states[0].rows()
    }
}

fn layer_forward(layer: &Layer, x: &Matrix) -> (Matrix, Matrix) {
    let batch = x.rows();
    let out = layer.out_dim();
    let mut z = Matrix::zeros(batch, out);
    let mut a = Matrix::zeros(batch, out);
    for s in 0..batch {
        let xs = x.row(s);
        for i in 0..out {
            let zi = dot(layer.weights.row(i), xs) + layer.bias[i];
            z.set(s, i, zi);
            a.set(s, i, layer.activation.apply(zi));
        }
    }
    (z, a)
}

fn check_inputs(net: &Network, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            net.input_dim()
        )));
    }
    if !inputs.is_finite() {
        return Err(Error::InvalidInput("non-finite input".into()));
    }
    net.validate()
}

pub fn forward(net: &Network, inputs: &Matrix) -> Result<ForwardTrace> {
    check_inputs(net, inputs)?;
    let mut states = Vec::with_capacity(net.depth() + 1);
    let mut pre = Vec::with_capacity(net.depth());
    states.push(inputs.clone());
    for layer in net.layers() {
        let (z, a) = layer_forward(layer, &states[states.len() - 1]);
        pre.push(z);
        states.push(a);
    }
    Ok(ForwardTrace {
        states,
        pre,
        dropout: None,
    })
}

/// Forward pass with inverted dropout on the last hidden layer's outputs.
///
/// With a single layer there is no hidden layer and no mask is drawn.
pub fn forward_with_dropout(
    net: &Network,
    inputs: &Matrix,
    drop_prob: f64,
    rng: &mut SplitMix64,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&drop_prob) {
        return Err(Error::InvalidInput(format!("dropout probability {drop_prob} not in [0, 1)")));
    }
    check_inputs(net, inputs)?;
    let depth = net.depth();
    let masked_state = if drop_prob > 0.0 && depth >= 2 {
        Some(depth - 1)
    } else {
        None
    };
    let keep_scale = 1.0 / (1.0 - drop_prob);
    let mut states = Vec::with_capacity(depth + 1);
    let mut pre = Vec::with_capacity(depth);
    let mut dropout = None;
    states.push(inputs.clone());
    for (k, layer) in net.layers().iter().enumerate() {
        let (z, mut a) = layer_forward(layer, &states[k]);
        if masked_state == Some(k + 1) {
            let mask = Matrix::from_fn(a.rows(), a.cols(), |_, _| {
                if rng.next_f64() < drop_prob {
                    0.0
                } else {
                    keep_scale
                }
            });
            for (v, m) in a.data_mut().iter_mut().zip(mask.data()) {
                *v *= m;
            }
            dropout = Some(DropoutMask { state: k + 1, mask });
        }
        pre.push(z);
        states.push(a);
    }
    Ok(ForwardTrace {
        states,
        pre,
        dropout,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SquaredError,
    BinaryCrossEntropy,
}

impl LossKind {
    /// Default pairing: cross entropy for sigmoid outputs, squared error otherwise.
    pub fn default_for(output: Activation) -> Self {
        match output {
            Activation::Sigmoid => LossKind::BinaryCrossEntropy,
            _ => LossKind::SquaredError,
        }
    }
}

const BCE_CLAMP: f64 = 1e-12;

fn check_same_shape(outputs: &Matrix, targets: &Matrix) -> Result<()> {
    if outputs.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "outputs {:?} vs targets {:?}",
            outputs.shape(),
            targets.shape()
        )));
    }
    if outputs.rows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    Ok(())
}

/// Mean per-sample loss.
pub fn loss_value(loss: LossKind, outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    check_same_shape(outputs, targets)?;
    let n = outputs.rows() as f64;
    let total: f64 = match loss {
        LossKind::SquaredError => outputs
            .data()
            .iter()
            .zip(targets.data())
            .map(|(o, t)| 0.5 * (o - t) * (o - t))
            .sum(),
        LossKind::BinaryCrossEntropy => outputs
            .data()
            .iter()
            .zip(targets.data())
            .map(|(o, t)| {
                let p = o.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum(),
    };
    Ok(total / n)
}

/// `∂loss/∂outputs` of [`loss_value`].
fn loss_gradient(loss: LossKind, outputs: &Matrix, targets: &Matrix) -> Matrix {
    let n = outputs.rows() as f64;
    Matrix::from_fn(outputs.rows(), outputs.cols(), |s, j| {
        let o = outputs.get(s, j);
        let t = targets.get(s, j);
        match loss {
            LossKind::SquaredError => (o - t) / n,
            LossKind::BinaryCrossEntropy => {
                if o <= BCE_CLAMP || o >= 1.0 - BCE_CLAMP {
                    0.0
                } else {
                    (-t / o + (1.0 - t) / (1.0 - o)) / n
                }
            }
        }
    })
}

/// `loss + β Σ‖W‖²`.
pub fn objective(
    net: &Network,
    trace: &ForwardTrace,
    loss: LossKind,
    targets: &Matrix,
    l2_beta: f64,
) -> Result<f64> {
    Ok(loss_value(loss, trace.outputs(), targets)? + l2_beta * net.weight_norm_sq())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// `∂objective/∂inputs`, one row per sample.
    pub inputs: Matrix,
}

/// Reverse-mode gradient of [`objective`].
///
/// The layer Jacobian is `diag(A'(z_n)) W_n`, so the sensitivity w.r.t.
/// `x_n` is `W_nᵀ (A'(z_n) ⊙ δ_{n+1})`.
pub fn backward(
    net: &Network,
    trace: &ForwardTrace,
    loss: LossKind,
    targets: &Matrix,
    l2_beta: f64,
) -> Result<Gradients> {
    let depth = net.depth();
    if trace.pre.len() != depth || trace.states.len() != depth + 1 {
        return Err(Error::InvalidState(format!(
            "trace has {} layers, network has {depth}",
            trace.pre.len()
        )));
    }
    for (k, layer) in net.layers().iter().enumerate() {
        if trace.states[k].cols() != layer.in_dim() || trace.pre[k].cols() != layer.out_dim() {
            return Err(Error::InvalidState(format!("trace shape mismatch at layer {k}")));
        }
    }
    check_same_shape(trace.outputs(), targets)?;

    let batch = trace.batch_size();
    let mut grad_w: Vec<Matrix> = Vec::with_capacity(depth);
    let mut grad_b: Vec<Vec<f64>> = Vec::with_capacity(depth);
    // Sensitivity w.r.t. states[k+1].
    let mut upstream = loss_gradient(loss, trace.outputs(), targets);

    for k in (0..depth).rev() {
        let layer = &net.layers()[k];
        if let Some(d) = &trace.dropout {
            if d.state == k + 1 {
                for (u, m) in upstream.data_mut().iter_mut().zip(d.mask.data()) {
                    *u *= m;
                }
            }
        }
        let (out, inp) = (layer.out_dim(), layer.in_dim());
        let x = &trace.states[k];
        let z = &trace.pre[k];
        let mut gw = layer.weights.scale(2.0 * l2_beta);
        let mut gb = vec![0.0; out];
        let mut down = Matrix::zeros(batch, inp);
        for s in 0..batch {
            let xs = x.row(s);
            for i in 0..out {
                let dz = upstream.get(s, i) * layer.activation.eval(z.get(s, i)).1;
                if dz == 0.0 {
                    continue;
                }
                gb[i] += dz;
                for (g, xj) in gw.row_mut(i).iter_mut().zip(xs) {
                    *g += dz * xj;
                }
                for (d, wij) in down.row_mut(s).iter_mut().zip(layer.weights.row(i)) {
                    *d += dz * wij;
                }
            }
        }
        grad_w.push(gw);
        grad_b.push(gb);
        upstream = down;
    }
    grad_w.reverse();
    grad_b.reverse();
    Ok(Gradients {
        weights: grad_w,
        biases: grad_b,
        inputs: upstream,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl LabeledBatch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.rows() != targets.rows() {
            return Err(Error::Shape(format!(
                "{} inputs vs {} targets",
                inputs.rows(),
                targets.rows()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    fn select(&self, idx: &[usize]) -> LabeledBatch {
        LabeledBatch {
            inputs: Matrix::from_fn(idx.len(), self.inputs.cols(), |r, c| {
                self.inputs.get(idx[r], c)
            }),
            targets: Matrix::from_fn(idx.len(), self.targets.cols(), |r, c| {
                self.targets.get(idx[r], c)
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    Full,
    MiniBatch(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_beta: f64,
    pub dropout_prob: f64,
    pub seed: u64,
    pub batch: BatchMode,
    pub loss: LossKind,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 100,
            l2_beta: 0.0,
            dropout_prob: 0.0,
            seed: 1,
            batch: BatchMode::Full,
            loss: LossKind::SquaredError,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(self.l2_beta >= 0.0 && self.l2_beta.is_finite()) {
            return Err(Error::Config(format!("l2 beta {} must be >= 0", self.l2_beta)));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Config(format!(
                "dropout probability {} not in [0, 1)",
                self.dropout_prob
            )));
        }
        if let BatchMode::MiniBatch(0) = self.batch {
            return Err(Error::Config("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Regularized objective on the full data set, dropout off.
    pub loss: f64,
    pub train_error: f64,
    /// `sqrt(Σ‖W‖²)`.
    pub weight_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Epoch 0 is the untrained network.
    pub metrics: Vec<EpochMetrics>,
}

/// Loss, error and weight norm of `net` on `data` without dropout.
pub fn evaluate(net: &Network, data: &LabeledBatch, cfg: &TrainConfig, epoch: usize) -> Result<EpochMetrics> {
    let trace = forward(net, &data.inputs)?;
    let loss = objective(net, &trace, cfg.loss, &data.targets, cfg.l2_beta)?;
    let train_error = batch_classification_error(trace.outputs(), &data.targets, cfg.threshold)?;
    Ok(EpochMetrics {
        epoch,
        loss,
        train_error,
        weight_norm: net.weight_norm_sq().sqrt(),
    })
}

fn sgd_step(net: &mut Network, grads: &Gradients, lr: f64) {
    for ((layer, gw), gb) in net.layers.iter_mut().zip(&grads.weights).zip(&grads.biases) {
        for (w, g) in layer.weights.data_mut().iter_mut().zip(gw.data()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
}

pub fn train(net: Network, data: &LabeledBatch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(net, data, cfg, |_, _| {})
}

/// Gradient descent; `observer(epoch, &net)` runs after every recorded epoch (including 0).
pub fn train_with_observer(
    mut net: Network,
    data: &LabeledBatch,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &Network),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("training data is empty".into()));
    }
    if data.targets.cols() != net.output_dim() {
        return Err(Error::Shape(format!(
            "targets have {} columns, network outputs {}",
            data.targets.cols(),
            net.output_dim()
        )));
    }
    let mut dropout_rng = SplitMix64::stream(cfg.seed, rng::DROPOUT);
    let mut data_rng = SplitMix64::stream(cfg.seed, rng::DATA);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut metrics = Vec::with_capacity(cfg.epochs + 1);
    let initial = evaluate(&net, data, cfg, 0)?;
    if !initial.loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, loss: initial.loss });
    }
    metrics.push(initial);
    observer(0, &net);

    for epoch in 1..=cfg.epochs {
        let batches: Vec<LabeledBatch> = match cfg.batch {
            BatchMode::Full => vec![data.clone()],
            BatchMode::MiniBatch(size) => {
                data_rng.shuffle(&mut order);
                order.chunks(size).map(|idx| data.select(idx)).collect()
            }
        };
        for batch in &batches {
            let trace = if cfg.dropout_prob > 0.0 {
                forward_with_dropout(&net, &batch.inputs, cfg.dropout_prob, &mut dropout_rng)?
            } else {
                forward(&net, &batch.inputs)?
            };
            let grads = backward(&net, &trace, cfg.loss, &batch.targets, cfg.l2_beta)?;
            sgd_step(&mut net, &grads, cfg.learning_rate);
        }
        if !net.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        let m = evaluate(&net, data, cfg, epoch)?;
        if !m.loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: m.loss });
        }
        metrics.push(m);
        observer(epoch, &net);
    }
    Ok(TrainOutcome {
        network: net,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::activate;
    use std::f64::consts::PI;

    fn single(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>, a: Activation) -> Network {
        Network::new(vec![Layer::new(Matrix::new(rows, cols, w).unwrap(), b, a).unwrap()]).unwrap()
    }

    fn batch(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn forward_examples() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::LORENTZ_UNBIASED);
        let t = forward(&net, &batch(&[vec![0.0, 0.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(t.outputs().row(0), &[0.0, 0.0]);
        assert!((t.outputs().get(1, 0) - 1.159_154_943_1).abs() < 1e-10);
        assert_eq!(t.outputs().get(1, 1), 0.0);

        let net = single(vec![0.0; 4], 2, 2, vec![1.0, 1.0], Activation::LORENTZ_BIASED);
        let t = forward(&net, &batch(&[vec![3.0, -7.0], vec![0.1, 0.2]])).unwrap();
        let expect = 1.0 + 1.0 / (2.0 * PI);
        for v in t.outputs().data() {
            assert!((v - expect).abs() < 1e-12);
        }
        assert!((expect - 1.159_154_9).abs() < 1e-7);
    }

    #[test]
    fn forward_shape_error() {
        let net = single(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0], Activation::Linear);
        assert!(matches!(
            forward(&net, &batch(&[vec![1.0, 2.0, 3.0]])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn network_rejects_bad_chain() {
        let l0 = Layer::new(Matrix::zeros(3, 2), vec![0.0; 3], Activation::Linear).unwrap();
        let l1 = Layer::new(Matrix::zeros(1, 2), vec![0.0], Activation::Linear).unwrap();
        assert!(matches!(Network::new(vec![l0, l1]), Err(Error::Shape(_))));
        assert!(Layer::new(Matrix::zeros(2, 2), vec![0.0], Activation::Linear).is_err());
    }

    #[test]
    fn loss_examples() {
        let o = batch(&[vec![0.3, 0.7]]);
        assert_eq!(loss_value(LossKind::SquaredError, &o, &o).unwrap(), 0.0);
        let bce = loss_value(LossKind::BinaryCrossEntropy, &batch(&[vec![0.5]]), &batch(&[vec![1.0]])).unwrap();
        assert!((bce - 0.693_147_2).abs() < 1e-7);
        let se = loss_value(LossKind::SquaredError, &batch(&[vec![1.0, 0.0]]), &batch(&[vec![0.0, 1.0]])).unwrap();
        assert_eq!(se, 1.0);
        assert!(matches!(
            loss_value(LossKind::SquaredError, &o, &batch(&[vec![1.0]])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_gradient_at_targets() {
        let net = single(vec![0.4, -0.2, 0.1, 0.9], 2, 2, vec![0.1, -0.3], Activation::GAUSS_UNBIASED);
        let x = batch(&[vec![0.5, -1.0], vec![2.0, 0.3]]);
        let t = forward(&net, &x).unwrap();
        let g = backward(&net, &t, LossKind::SquaredError, &t.outputs().clone(), 0.0).unwrap();
        assert!(g.weights.iter().all(|w| w.max_abs() == 0.0));
        assert!(g.biases.iter().flatten().all(|b| *b == 0.0));
        assert_eq!(g.inputs.max_abs(), 0.0);
    }

    #[test]
    fn hand_chain_rule_bias_gradient() {
        // g'(1) = 0 for lorentz-unbiased, so dL/db = -eps exactly at first order.
        let net = single(vec![1.0], 1, 1, vec![0.0], Activation::LORENTZ_UNBIASED);
        let eps = 1e-3;
        let (a1, d1) = activate(Activation::LORENTZ_UNBIASED, 1.0);
        assert!((d1 - 1.0).abs() < 1e-15);
        let t = forward(&net, &batch(&[vec![1.0]])).unwrap();
        let g = backward(&net, &t, LossKind::SquaredError, &batch(&[vec![a1 + eps]]), 0.0).unwrap();
        assert!((g.biases[0][0] + eps * d1).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = single(vec![1.0], 1, 1, vec![0.0], Activation::Linear);
        let b = single(vec![1.0, 2.0], 2, 1, vec![0.0, 0.0], Activation::Linear);
        let t = forward(&b, &batch(&[vec![1.0]])).unwrap();
        assert!(matches!(
            backward(&a, &t, LossKind::SquaredError, &batch(&[vec![0.0]]), 0.0),
            Err(Error::InvalidState(_))
        ));
    }

    fn xor_like() -> LabeledBatch {
        LabeledBatch::new(
            batch(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]),
            batch(&[vec![0.0], vec![1.0], vec![1.0], vec![1.0]]),
        )
        .unwrap()
    }

    fn small_net() -> Network {
        Network::new(vec![
            Layer::new(Matrix::new(2, 2, vec![0.3, -0.1, 0.2, 0.4]).unwrap(), vec![0.0, 0.1], Activation::LORENTZ_UNBIASED).unwrap(),
            Layer::new(Matrix::new(1, 2, vec![0.5, 0.5]).unwrap(), vec![0.0], Activation::Sigmoid).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let net = small_net();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 25,
            loss: LossKind::BinaryCrossEntropy,
            ..TrainConfig::default()
        };
        let out = train(net.clone(), &xor_like(), &cfg).unwrap();
        assert_eq!(out.network, net);
        assert_eq!(out.metrics.len(), 26);
        assert!(out.metrics.iter().all(|m| m.train_error == out.metrics[0].train_error));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 200,
            loss: LossKind::BinaryCrossEntropy,
            dropout_prob: 0.2,
            batch: BatchMode::MiniBatch(2),
            ..TrainConfig::default()
        };
        let a = train(small_net(), &xor_like(), &cfg).unwrap();
        let b = train(small_net(), &xor_like(), &cfg).unwrap();
        assert_eq!(a.network, b.network);
        let bits = |o: &TrainOutcome| o.metrics.iter().map(|m| m.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.metrics.last().unwrap().loss < a.metrics[0].loss);
    }

    #[test]
    fn dropout_mask_only_on_last_hidden_layer() {
        let net = small_net();
        let mut rng = SplitMix64::new(3);
        let x = batch(&vec![vec![1.0, 2.0]; 50]);
        let t = forward_with_dropout(&net, &x, 0.5, &mut rng).unwrap();
        let mask = t.dropout.as_ref().unwrap();
        assert_eq!(mask.state, 1);
        assert!(mask.mask.data().iter().all(|m| *m == 0.0 || *m == 2.0));
        assert!(mask.mask.data().iter().any(|m| *m == 0.0));
        // Inputs untouched; inference path has no mask.
        assert_eq!(t.states[0], x);
        assert!(forward(&net, &x).unwrap().dropout.is_none());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let net = single(vec![1.0], 1, 1, vec![0.0], Activation::Linear);
        let data = LabeledBatch::new(batch(&[vec![10.0]]), batch(&[vec![0.0]])).unwrap();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 1000,
            ..TrainConfig::default()
        };
        match train(net, &data, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig {
            dropout_prob: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(small_net(), &xor_like(), &bad), Err(Error::Config(_))));
    }
}
