//! Continuous-depth limit and network inversion.
//!
//! Treating the layer index as continuous turns the interpretable recursion
//! into `dy/dn = V(n)⁻¹ g(V(n) y + c(n))`, with the adjoint
//! `dδ/dn = −g'(V(n) y + c(n)) ⊙ δ` in neuron coordinates. `(V, c)` are
//! piecewise constant: segment `k` covers `n ∈ [k, k+1)`, the first and
//! last segments extend to ±∞.

use serde::{Deserialize, Serialize};

use crate::activation::{Activation, HumpKind};
use crate::error::{Error, Result};
use crate::interpret::InterpretableChain;
use crate::linalg::{dot, numerical_rank, pseudoinverse, Matrix, DEFAULT_RANK_TOL};
use crate::network::{Layer, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub integrator: Integrator,
    pub step: f64,
    pub span: (f64, f64),
}

impl FlowConfig {
    pub fn rk4(step: f64, span: (f64, f64)) -> Self {
        Self {
            integrator: Integrator::Rk4,
            step,
            span,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidInput(format!("step {} must be > 0", self.step)));
        }
        if !(self.span.1 > self.span.0) || !self.span.0.is_finite() || !self.span.1.is_finite() {
            return Err(Error::InvalidInput(format!(
                "span ({}, {}) must satisfy start < end",
                self.span.0, self.span.1
            )));
        }
        Ok(())
    }

    /// Integration nodes: segment boundaries (integers `1..segments`) inside the
    /// span, refined so no interval exceeds `step`.
    fn nodes(&self, segments: usize) -> Vec<f64> {
        let (a, b) = self.span;
        let mut cuts = vec![a];
        cuts.extend((1..segments).map(|k| k as f64).filter(|&k| k > a && k < b));
        cuts.push(b);
        let mut nodes = vec![a];
        for w in cuts.windows(2) {
            let len = w[1] - w[0];
            let m = ((len / self.step) - 1e-9).ceil().max(1.0) as usize;
            for i in 1..=m {
                nodes.push(if i == m { w[1] } else { w[0] + len * i as f64 / m as f64 });
            }
        }
        nodes
    }
}

#[derive(Debug, Clone)]
pub struct FlowSegment {
    pub v: Matrix,
    pub v_inv: Matrix,
    pub c: Vec<f64>,
}

/// Piecewise-constant vector field `dy/dn = V⁻¹ g(V y + c)`.
#[derive(Debug, Clone)]
pub struct PiecewiseFlow {
    segments: Vec<FlowSegment>,
    activation: Activation,
}

impl PiecewiseFlow {
    pub fn new(segments: Vec<(Matrix, Vec<f64>)>, activation: Activation) -> Result<Self> {
        if !activation.is_goldilocks() {
            return Err(Error::UnsupportedActivation {
                activation: activation.to_string(),
                operation: "continuous flow",
            });
        }
        if segments.is_empty() {
            return Err(Error::InvalidInput("flow needs at least one segment".into()));
        }
        let dim = segments[0].0.cols();
        let segments = segments
            .into_iter()
            .enumerate()
            .map(|(k, (v, c))| {
                if !v.is_square() || v.cols() != dim || c.len() != dim {
                    return Err(Error::Shape(format!("segment {k}: flow needs square V of size {dim}")));
                }
                if numerical_rank(&v, DEFAULT_RANK_TOL)? < dim {
                    return Err(Error::SingularFlow { segment: k });
                }
                let v_inv = pseudoinverse(&v, DEFAULT_RANK_TOL)?;
                Ok(FlowSegment { v, v_inv, c })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            segments,
            activation,
        })
    }

    pub fn scalar(v: f64, c: f64, activation: Activation) -> Result<Self> {
        Self::new(vec![(Matrix::new(1, 1, vec![v])?, vec![c])], activation)
    }

    /// Uses the Goldilocks links of a chain; the chain's activations must all match.
    pub fn from_chain(chain: &InterpretableChain) -> Result<Self> {
        let links: Vec<_> = chain
            .links()
            .iter()
            .filter(|l| l.activation.is_goldilocks())
            .collect();
        let first = links.first().ok_or_else(|| {
            Error::InvalidInput("chain has no Goldilocks layers".into())
        })?;
        if links.iter().any(|l| l.activation != first.activation) {
            return Err(Error::InvalidInput("flow needs a single activation across layers".into()));
        }
        let act = first.activation;
        Self::new(
            links.iter().map(|l| (l.v.clone(), l.c.clone())).collect(),
            act,
        )
    }

    pub fn dim(&self) -> usize {
        self.segments[0].v.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn segment_index(&self, n: f64) -> usize {
        if n < 1.0 {
            0
        } else {
            (n.floor() as usize).min(self.segments.len() - 1)
        }
    }

    /// `A = V y + c` in the given segment.
    pub fn activation_state(&self, segment: usize, y: &[f64]) -> Vec<f64> {
        let s = &self.segments[segment];
        (0..s.v.rows()).map(|i| dot(s.v.row(i), y) + s.c[i]).collect()
    }

    fn velocity(&self, segment: usize, y: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = self
            .activation_state(segment, y)
            .into_iter()
            .map(|a| self.local(a).value)
            .collect();
        self.segments[segment].v_inv.matvec(&g)
    }

    fn local(&self, a: f64) -> crate::activation::Derivs {
        self.activation
            .local_nonlinearity(a)
            .expect("flow activation is Goldilocks")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub ns: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    /// `dy/dn` at each node, used for interpolation by the adjoint.
    pub velocities: Vec<Vec<f64>>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &[f64] {
        &self.ys[self.ys.len() - 1]
    }

    pub fn span(&self) -> (f64, f64) {
        (self.ns[0], self.ns[self.ns.len() - 1])
    }
}

fn add_scaled(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step(f: impl Fn(f64, &[f64]) -> Vec<f64>, n: f64, y: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(n, y);
    let k2 = f(n + 0.5 * h, &add_scaled(y, 0.5 * h, &k1));
    let k3 = f(n + 0.5 * h, &add_scaled(y, 0.5 * h, &k2));
    let k4 = f(n + h, &add_scaled(y, h, &k3));
    y.iter()
        .enumerate()
        .map(|(i, yi)| yi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

pub fn flow_forward(flow: &PiecewiseFlow, y0: &[f64], cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate()?;
    if y0.len() != flow.dim() {
        return Err(Error::Shape(format!(
            "initial state has {} entries, flow dimension is {}",
            y0.len(),
            flow.dim()
        )));
    }
    let nodes = cfg.nodes(flow.segments.len());
    let mut ys = vec![y0.to_vec()];
    for w in nodes.windows(2) {
        let seg = flow.segment_index(0.5 * (w[0] + w[1]));
        let h = w[1] - w[0];
        let y = &ys[ys.len() - 1];
        let next = match cfg.integrator {
            Integrator::Rk4 => rk4_step(|_, y| flow.velocity(seg, y), w[0], y, h),
            Integrator::Euler => add_scaled(y, h, &flow.velocity(seg, y)),
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("flow became non-finite at n = {}", w[1])));
        }
        ys.push(next);
    }
    // Velocity at each node from the segment of the interval it starts (last: ends).
    let velocities = nodes
        .iter()
        .zip(&ys)
        .enumerate()
        .map(|(i, (&n, y))| {
            let probe = if i + 1 < nodes.len() {
                0.5 * (n + nodes[i + 1])
            } else {
                0.5 * (nodes[i - 1] + n)
            };
            flow.velocity(flow.segment_index(probe), y)
        })
        .collect();
    Ok(FlowTrajectory {
        ns: nodes,
        ys,
        velocities,
    })
}

/// Cubic Hermite interpolation of the trajectory on interval `k` at fraction `t`.
fn hermite(traj: &FlowTrajectory, k: usize, t: f64) -> Vec<f64> {
    let h = traj.ns[k + 1] - traj.ns[k];
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    (0..traj.ys[k].len())
        .map(|i| {
            h00 * traj.ys[k][i]
                + h10 * h * traj.velocities[k][i]
                + h01 * traj.ys[k + 1][i]
                + h11 * h * traj.velocities[k + 1][i]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointTrajectory {
    /// Decreasing from `n_end` to `n_start`.
    pub ns: Vec<f64>,
    pub deltas: Vec<Vec<f64>>,
}

impl AdjointTrajectory {
    /// Sensitivity at `n_start`.
    pub fn initial(&self) -> &[f64] {
        &self.deltas[self.deltas.len() - 1]
    }
}

/// Integrates `dδ/dn = −g'(V y + c) ⊙ δ` from `δ(n_end) = delta_end` back to `n_start`.
pub fn adjoint_backward(
    flow: &PiecewiseFlow,
    traj: &FlowTrajectory,
    delta_end: &[f64],
    cfg: &FlowConfig,
) -> Result<AdjointTrajectory> {
    cfg.validate()?;
    let (a, b) = traj.span();
    if traj.ns.len() < 2 || (a - cfg.span.0).abs() > 1e-12 || (b - cfg.span.1).abs() > 1e-12 {
        return Err(Error::InvalidState(format!(
            "trajectory spans ({a}, {b}) but config spans ({}, {})",
            cfg.span.0, cfg.span.1
        )));
    }
    if delta_end.len() != flow.dim() {
        return Err(Error::Shape("adjoint terminal condition has wrong dimension".into()));
    }
    let gprime = |seg: usize, y: &[f64]| -> Vec<f64> {
        flow.activation_state(seg, y)
            .into_iter()
            .map(|z| flow.local(z).d1)
            .collect()
    };
    let mut ns = vec![b];
    let mut deltas = vec![delta_end.to_vec()];
    for k in (0..traj.ns.len() - 1).rev() {
        let seg = flow.segment_index(0.5 * (traj.ns[k] + traj.ns[k + 1]));
        let h = traj.ns[k + 1] - traj.ns[k];
        let d = &deltas[deltas.len() - 1];
        // Backward in n: step of −h with rhs −g'δ, i.e. δ' = δ + h ∫ g'δ.
        let rhs = |y: &[f64], d: &[f64]| -> Vec<f64> {
            gprime(seg, y).iter().zip(d).map(|(g, di)| g * di).collect()
        };
        let next = match cfg.integrator {
            Integrator::Euler => add_scaled(d, h, &rhs(&traj.ys[k + 1], d)),
            Integrator::Rk4 => {
                let y_end = &traj.ys[k + 1];
                let y_mid = hermite(traj, k, 0.5);
                let y_start = &traj.ys[k];
                let k1 = rhs(y_end, d);
                let k2 = rhs(&y_mid, &add_scaled(d, 0.5 * h, &k1));
                let k3 = rhs(&y_mid, &add_scaled(d, 0.5 * h, &k2));
                let k4 = rhs(y_start, &add_scaled(d, h, &k3));
                d.iter()
                    .enumerate()
                    .map(|(i, di)| di + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        ns.push(traj.ns[k]);
        deltas.push(next);
    }
    Ok(AdjointTrajectory { ns, deltas })
}

/// Exponential integral `Ei(x)` for `x > 0`.
///
/// Power series `γ + ln x + Σ xᵏ/(k·k!)` up to 30, asymptotic
/// `eˣ/x Σ k!/xᵏ` beyond.
pub fn exponential_integral(x: f64) -> Result<f64> {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidInput(format!("Ei needs finite x > 0, got {x}")));
    }
    if x <= 30.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..500 {
            term *= x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        Ok(EULER_GAMMA + x.ln() + sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let next = term * k as f64 / x;
            if next > term {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        Ok(x.exp() / x * sum)
    }
}

/// `ln A² + A²` (Lorentzian) or `Ei(A²)` (Gaussian).
pub fn implicit_invariant(kind: HumpKind, a: f64) -> Result<f64> {
    if a == 0.0 {
        return Err(Error::SingularPoint("invariant has a logarithmic singularity at A = 0".into()));
    }
    let a2 = a * a;
    match kind {
        HumpKind::Lorentzian => Ok(a2.ln() + a2),
        HumpKind::Gaussian => exponential_integral(a2),
    }
}

/// First integral of the scalar unbiased flow `dA/dn = A f(A)`: it grows
/// linearly in `n` at [`unbiased_flow_rate`].
///
/// Lorentzian: `ln A² + A²`; Gaussian: `Ei(A²/2)`.
pub fn unbiased_flow_first_integral(kind: HumpKind, a: f64) -> Result<f64> {
    match kind {
        HumpKind::Lorentzian => implicit_invariant(kind, a),
        HumpKind::Gaussian => {
            if a == 0.0 {
                return Err(Error::SingularPoint("first integral is singular at A = 0".into()));
            }
            exponential_integral(0.5 * a * a)
        }
    }
}

/// `2/π` (Lorentzian) or `2/√(2π)` (Gaussian).
pub fn unbiased_flow_rate(kind: HumpKind) -> f64 {
    match kind {
        HumpKind::Lorentzian => 2.0 / std::f64::consts::PI,
        HumpKind::Gaussian => 2.0 / (2.0 * std::f64::consts::PI).sqrt(),
    }
}

fn require_full_rank(w: &Matrix, layer: usize) -> Result<()> {
    let rank = numerical_rank(w, DEFAULT_RANK_TOL)?;
    let required = w.rows().max(w.cols());
    if !w.is_square() || rank < required {
        return Err(Error::NotInvertible {
            layer,
            rank,
            required,
        });
    }
    Ok(())
}

/// First-order inverse in input coordinates: `y_prev = y − V⁺ g(V y + c)` using the
/// chain link of `layer`.
pub fn invert_layer_paper(chain: &InterpretableChain, y_next: &[f64], layer: usize) -> Result<Vec<f64>> {
    let link = chain.link(layer)?;
    if !link.activation.is_goldilocks() {
        return Err(Error::UnsupportedActivation {
            activation: link.activation.to_string(),
            operation: "first-order inverse",
        });
    }
    require_full_rank(&link.v, layer)?;
    if y_next.len() != chain.input_dim() {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    let g: Vec<f64> = (0..link.v.rows())
        .map(|i| {
            let z = dot(link.v.row(i), y_next) + link.c[i];
            link.activation.local_nonlinearity(z).map_or(0.0, |d| d.value)
        })
        .collect();
    let dy = link.v_pinv.matvec(&g);
    Ok(y_next.iter().zip(dy).map(|(a, b)| a - b).collect())
}

/// The same first-order inverse in the layer's own coordinates:
/// `z ≈ x_next − g(x_next)`, `x_prev = W⁺ (z − b)`.
pub fn invert_layer_paper_direct(net: &Network, x_next: &[f64], layer: usize) -> Result<Vec<f64>> {
    let l = net.layers().get(layer).ok_or_else(|| {
        Error::InvalidInput(format!("layer {layer} out of range"))
    })?;
    if !l.activation.is_goldilocks() {
        return Err(Error::UnsupportedActivation {
            activation: l.activation.to_string(),
            operation: "first-order inverse",
        });
    }
    require_full_rank(&l.weights, layer)?;
    if x_next.len() != l.out_dim() {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    let u: Vec<f64> = x_next
        .iter()
        .zip(&l.bias)
        .map(|(&x, b)| x - l.activation.local_nonlinearity(x).map_or(0.0, |d| d.value) - b)
        .collect();
    Ok(pseudoinverse(&l.weights, DEFAULT_RANK_TOL)?.matvec(&u))
}

/// Solves `A(u) = target` for a strictly increasing activation.
///
/// Safeguarded Newton: iterates stay inside a sign-change bracket and fall
/// back to bisection when a Newton step leaves it. Converged when
/// `|A(u) − target| ≤ tol · max(1, |target|)`.
pub fn solve_activation(act: Activation, target: f64, tol: f64, max_iter: usize) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite target {target}")));
    }
    match act {
        Activation::Linear => return Ok(target),
        Activation::Goldilocks { .. } => {}
        other => {
            return Err(Error::UnsupportedActivation {
                activation: other.to_string(),
                operation: "exact inversion",
            })
        }
    }
    let scale = tol * target.abs().max(1.0);
    // |g| < 1/2 for every Goldilocks variant, so the root lies within ±1 of the target.
    let (mut lo, mut hi) = (target - 1.0, target + 1.0);
    let mut u = target - act.local_nonlinearity(target).map_or(0.0, |d| d.value);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let (a, da) = act.eval(u);
        residual = a - target;
        if residual.abs() <= scale {
            return Ok(u);
        }
        if residual > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let newton = u - residual / da;
        u = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual,
    })
}

/// Exact inverse of one layer: componentwise root-finding, then `W x = u − b`.
pub fn invert_layer_exact(layer: &Layer, x_next: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    invert_layer_exact_at(layer, x_next, tol, max_iter, 0)
}

fn invert_layer_exact_at(
    layer: &Layer,
    x_next: &[f64],
    tol: f64,
    max_iter: usize,
    index: usize,
) -> Result<Vec<f64>> {
    require_full_rank(&layer.weights, index)?;
    if x_next.len() != layer.out_dim() {
        return Err(Error::Shape("state dimension mismatch".into()));
    }
    let rhs = x_next
        .iter()
        .zip(&layer.bias)
        .map(|(&x, b)| Ok(solve_activation(layer.activation, x, tol, max_iter)? - b))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pseudoinverse(&layer.weights, DEFAULT_RANK_TOL)?.matvec(&rhs))
}

/// Inverts every layer from the output back to the input.
pub fn invert_network_exact(net: &Network, output: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let mut x = output.to_vec();
    for (k, layer) in net.layers().iter().enumerate().rev() {
        x = invert_layer_exact_at(layer, &x, tol, max_iter, k)?;
    }
    Ok(x)
}
