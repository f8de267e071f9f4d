//! Numerical checks behind the `moments-check`, `ode` and `invert` subcommands.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, HumpKind, GoldilocksMode};
use crate::error::{Error, Result};
use crate::harness::config::{activation_name, activation_names};
use crate::interpret::build_chain;
use crate::linalg::Matrix;
use crate::moments::{
    check_against_oracle, mc_oracle, propagate_layer, propagate_neuron, EntryCheck, GaussianMoments,
    McEstimate, ORACLE_N_SE, ORACLE_REL_TOL,
};
use crate::network::{Layer, Network};
use crate::odeflow::{
    flow_forward, implicit_invariant, invert_layer_paper, invert_layer_paper_direct, invert_network_exact,
    unbiased_flow_first_integral, unbiased_flow_rate, FlowConfig, Integrator, PiecewiseFlow,
};
use crate::rng::SplitMix64;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- moments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsCheckConfig {
    #[serde(with = "activation_names")]
    pub activations: Vec<Activation>,
    pub weights: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub biases: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub n_se: f64,
    /// Also check a 2-neuron layer `w·R` with `R` a rotation, per grid cell.
    pub layer_cases: bool,
}

impl Default for MomentsCheckConfig {
    fn default() -> Self {
        Self {
            activations: Activation::GOLDILOCKS.to_vec(),
            weights: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            sigmas: vec![0.1, 0.3, 0.5],
            biases: vec![0.0, 0.5],
            samples: 1_000_000,
            seed: 1,
            rel_tol: ORACLE_REL_TOL,
            n_se: ORACLE_N_SE,
            layer_cases: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsCase {
    pub activation: String,
    pub kind: String,
    pub w: f64,
    pub sigma: f64,
    pub b: f64,
    pub input: GaussianMoments,
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub lemma: GaussianMoments,
    pub oracle: McEstimate,
    pub entries: Vec<EntryCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub config: MomentsCheckConfig,
    pub cases: Vec<MomentsCase>,
    pub passed: usize,
    pub failed: usize,
    pub pass: bool,
}

const ROTATION: [f64; 4] = [0.8, 0.6, -0.6, 0.8];

fn moments_case(
    cfg: &MomentsCheckConfig,
    act: Activation,
    layer: bool,
    (w, sigma, b): (f64, f64, f64),
    seed: u64,
) -> Result<MomentsCase> {
    let (input, weights, bias, lemma) = if layer {
        let input = GaussianMoments::isotropic(vec![0.0, 0.0], sigma * sigma)?;
        let weights = Matrix::new(2, 2, ROTATION.to_vec())?.scale(w);
        let bias = vec![b, b];
        let lemma = propagate_layer(&input, &weights, &bias, act)?;
        (input, weights, bias, lemma)
    } else {
        let input = GaussianMoments::isotropic(vec![0.0], sigma * sigma)?;
        let (m, v) = propagate_neuron(0.0, sigma * sigma, w, b, act)?;
        let lemma = GaussianMoments::new(vec![m], Matrix::new(1, 1, vec![v])?)?;
        (input, Matrix::new(1, 1, vec![w])?, vec![b], lemma)
    };
    let oracle = mc_oracle(&input, &weights, &bias, act, cfg.samples, seed)?;
    let entries = check_against_oracle(&lemma, &oracle, cfg.rel_tol, cfg.n_se);
    Ok(MomentsCase {
        activation: act.to_string(),
        kind: if layer { "layer" } else { "neuron" }.into(),
        w,
        sigma,
        b,
        pass: entries.iter().all(|e| e.pass),
        input,
        weights,
        bias,
        lemma,
        oracle,
        entries,
    })
}

/// Second-order propagation vs Monte-Carlo over the full grid; every case gets its own seed derived from `cfg.seed`.
pub fn moments_check(cfg: &MomentsCheckConfig) -> Result<MomentsReport> {
    let mut jobs = Vec::new();
    for &act in &cfg.activations {
        for layer in [false, true] {
            if layer && !cfg.layer_cases {
                continue;
            }
            for &w in &cfg.weights {
                for &s in &cfg.sigmas {
                    for &b in &cfg.biases {
                        jobs.push((act, layer, (w, s, b)));
                    }
                }
            }
        }
    }
    let mut seeder = SplitMix64::new(cfg.seed);
    let seeds: Vec<u64> = jobs.iter().map(|_| seeder.next_u64()).collect();
    let cases = jobs
        .par_iter()
        .zip(&seeds)
        .map(|(&(act, layer, cell), &seed)| moments_case(cfg, act, layer, cell, seed))
        .collect::<Result<Vec<_>>>()?;
    let passed = cases.iter().filter(|c| c.pass).count();
    Ok(MomentsReport {
        config: cfg.clone(),
        failed: cases.len() - passed,
        pass: passed == cases.len(),
        passed,
        cases,
    })
}

// ---------------------------------------------------------------- ode

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeCheckConfig {
    /// Unbiased Goldilocks activation of the scalar flow `dA/dn = g(A)`.
    #[serde(with = "activation_name")]
    pub activation: Activation,
    pub initial: f64,
    pub span: f64,
    pub step: f64,
}

impl Default for OdeCheckConfig {
    fn default() -> Self {
        Self {
            activation: Activation::LORENTZ_UNBIASED,
            initial: 0.1,
            span: PI,
            step: PI / 32.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeRun {
    pub step: f64,
    pub final_state: f64,
    pub invariant_change: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeReport {
    pub config: OdeCheckConfig,
    /// Rate at which the first integral grows along exact solutions.
    pub rate: f64,
    pub expected_change: f64,
    /// Change of `implicit_invariant` (ln A² + A² or Ei(A²)) over the span.
    pub implicit_invariant_change: f64,
    pub run: OdeRun,
    pub halved: OdeRun,
    /// `drift(step) / drift(step / 2)`; about 16 for a fourth-order method.
    pub halving_ratio: f64,
}

fn scalar_kind(act: Activation) -> Result<HumpKind> {
    match act {
        Activation::Goldilocks {
            kind,
            mode: GoldilocksMode::Unbiased,
        } => Ok(kind),
        other => Err(Error::UnsupportedActivation {
            activation: other.to_string(),
            operation: "scalar flow invariant",
        }),
    }
}

fn ode_run(flow: &PiecewiseFlow, kind: HumpKind, cfg: &OdeCheckConfig, step: f64) -> Result<OdeRun> {
    let fc = FlowConfig {
        integrator: Integrator::Rk4,
        step,
        span: (0.0, cfg.span),
    };
    let traj = flow_forward(flow, &[cfg.initial], &fc)?;
    let a1 = traj.last()[0];
    let change = unbiased_flow_first_integral(kind, a1)? - unbiased_flow_first_integral(kind, cfg.initial)?;
    Ok(OdeRun {
        step,
        final_state: a1,
        invariant_change: change,
        drift: (change - unbiased_flow_rate(kind) * cfg.span).abs(),
    })
}

/// Integrates the scalar flow `dA/dn = g(A)` (unit `V`, zero `c`) and measures invariant drift.
pub fn ode_check(cfg: &OdeCheckConfig) -> Result<OdeReport> {
    let kind = scalar_kind(cfg.activation)?;
    if !(cfg.span > 0.0) || !(cfg.step > 0.0) {
        return Err(Error::Config("span and step must be > 0".into()));
    }
    let flow = PiecewiseFlow::scalar(1.0, 0.0, cfg.activation)?;
    let run = ode_run(&flow, kind, cfg, cfg.step)?;
    let halved = ode_run(&flow, kind, cfg, cfg.step / 2.0)?;
    let implicit = implicit_invariant(kind, run.final_state)? - implicit_invariant(kind, cfg.initial)?;
    Ok(OdeReport {
        config: cfg.clone(),
        rate: unbiased_flow_rate(kind),
        expected_change: unbiased_flow_rate(kind) * cfg.span,
        implicit_invariant_change: implicit,
        halving_ratio: run.drift / halved.drift,
        run,
        halved,
    })
}

// ---------------------------------------------------------------- invert

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvertCheckConfig {
    #[serde(with = "activation_names")]
    pub activations: Vec<Activation>,
    pub networks: usize,
    pub depth: usize,
    pub max_width: usize,
    pub points: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Activation of the amplitude sweep; needs power-law tails.
    #[serde(with = "activation_name")]
    pub sweep_activation: Activation,
    /// Scales of `V`; each step of `√2` halves the amplitude in the tail regime.
    pub sweep_scales: Vec<f64>,
}

impl Default for InvertCheckConfig {
    fn default() -> Self {
        let s = std::f64::consts::SQRT_2;
        Self {
            activations: Activation::GOLDILOCKS.to_vec(),
            networks: 12,
            depth: 3,
            max_width: 4,
            points: 20,
            seed: 1,
            tol: 1e-12,
            max_iter: 100,
            sweep_activation: Activation::LORENTZ_UNBIASED,
            sweep_scales: vec![10.0, 10.0 * s, 20.0, 20.0 * s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub activation: String,
    pub width: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scale: f64,
    /// Largest displacement `|V⁻¹ g(V y + c)|` over the sweep points.
    pub amplitude: f64,
    pub first_order_error: f64,
    pub first_order_error_direct: f64,
    pub exact_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertReport {
    pub config: InvertCheckConfig,
    pub round_trips: Vec<RoundTrip>,
    pub max_round_trip_error: f64,
    pub sweep: Vec<SweepPoint>,
    /// `first_order_error[k] / first_order_error[k+1]` for consecutive sweep points.
    pub error_ratios: Vec<f64>,
    pub amplitude_ratios: Vec<f64>,
    pub rank_deficient_rejected: bool,
}

/// Square, well conditioned: `I + 0.3·N(0, 1)` weights, `N(0, 1)` biases.
pub fn random_square_network(
    rng: &mut SplitMix64,
    depth: usize,
    width: usize,
    activation: Activation,
) -> Result<Network> {
    let layers = (0..depth)
        .map(|_| {
            let w = Matrix::from_fn(width, width, |i, j| {
                let e = 0.3 * rng.normal();
                if i == j {
                    1.0 + e
                } else {
                    e
                }
            });
            let b = (0..width).map(|_| rng.normal()).collect();
            Layer::new(w, b, activation)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers)
}

const SWEEP_W: [f64; 4] = [1.0, 0.3, -0.2, 0.9];
const SWEEP_POINTS: [[f64; 2]; 4] = [[2.0, 1.0], [-1.5, 2.5], [3.0, -2.0], [-2.0, -2.5]];

fn sweep_point(cfg: &InvertCheckConfig, scale: f64) -> Result<SweepPoint> {
    let w = Matrix::new(2, 2, SWEEP_W.to_vec())?.scale(scale);
    let net = Network::new(vec![Layer::new(w, vec![0.0, 0.0], cfg.sweep_activation)?])?;
    let chain = build_chain(&net)?;
    let mut point = SweepPoint {
        scale,
        amplitude: 0.0,
        first_order_error: 0.0,
        first_order_error_direct: 0.0,
        exact_error: 0.0,
    };
    for y0 in SWEEP_POINTS {
        let x1 = net.predict(&y0)?;
        // Single layer: input coordinates of the output are W⁻¹ x1.
        let y1 = crate::interpret::to_input_coords(&chain, &x1, 1)?.coords;
        point.amplitude = point.amplitude.max(max_abs_diff(&y1, &y0));
        let back = invert_layer_paper(&chain, &y1, 0)?;
        point.first_order_error = point.first_order_error.max(max_abs_diff(&back, &y0));
        let back = invert_layer_paper_direct(&net, &x1, 0)?;
        point.first_order_error_direct = point.first_order_error_direct.max(max_abs_diff(&back, &y0));
        let back = invert_network_exact(&net, &x1, cfg.tol, cfg.max_iter)?;
        point.exact_error = point.exact_error.max(max_abs_diff(&back, &y0));
    }
    Ok(point)
}

pub fn invert_check(cfg: &InvertCheckConfig) -> Result<InvertReport> {
    if cfg.activations.is_empty() || cfg.networks == 0 || cfg.max_width == 0 {
        return Err(Error::Config("invert check needs activations, networks and widths".into()));
    }
    let mut rng = SplitMix64::stream(cfg.seed, crate::rng::WEIGHTS);
    let mut round_trips = Vec::new();
    for k in 0..cfg.networks {
        let act = cfg.activations[k % cfg.activations.len()];
        let width = 1 + k % cfg.max_width;
        let net = random_square_network(&mut rng, cfg.depth, width, act)?;
        let mut max_error: f64 = 0.0;
        for _ in 0..cfg.points {
            let x: Vec<f64> = (0..width).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let y = net.predict(&x)?;
            let back = invert_network_exact(&net, &y, cfg.tol, cfg.max_iter)?;
            max_error = max_error.max(max_abs_diff(&back, &x));
        }
        round_trips.push(RoundTrip {
            activation: act.to_string(),
            width,
            max_error,
        });
    }
    let sweep = cfg
        .sweep_scales
        .iter()
        .map(|&s| sweep_point(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let ratios = |f: fn(&SweepPoint) -> f64| -> Vec<f64> {
        sweep.windows(2).map(|p| f(&p[0]) / f(&p[1])).collect()
    };
    let singular = Network::new(vec![Layer::new(
        Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0])?,
        vec![0.0, 0.0],
        Activation::LORENTZ_BIASED,
    )?])?;
    let rank_deficient_rejected = matches!(
        invert_network_exact(&singular, &[0.3, 0.1], cfg.tol, cfg.max_iter),
        Err(Error::NotInvertible { .. })
    );
    Ok(InvertReport {
        config: cfg.clone(),
        max_round_trip_error: round_trips.iter().map(|r| r.max_error).fold(0.0, f64::max),
        round_trips,
        error_ratios: ratios(|p| p.first_order_error),
        amplitude_ratios: ratios(|p| p.amplitude),
        sweep,
        rank_deficient_rejected,
    })
}
