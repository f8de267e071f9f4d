//! Gaussian moment propagation through a Goldilocks layer.
//!
//! For `Y = A(W X + b)` with `X ~ N(μ, Σ)`, `S = W Σ Wᵀ`, `z = W μ + b` and
//! `U_i = S_ii`, the second-order approximation is
//!
//! ```text
//! μ_Y,i   ≈ z_i + g(z_i) + ½ g''(z_i) U_i
//! Σ_Y,ij  ≈ (1 + g'(z_i)) S_ij (1 + g'(z_j)) + ½ g''(z_i) g''(z_j) U_i U_j
//! ```
//!
//! [`mc_oracle`] estimates the same moments by sampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, Derivs};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, dot, Matrix};
use crate::rng::{self, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianMoments {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || !cov.is_square() {
            return Err(Error::Shape(format!(
                "mean of length {} with covariance {:?}",
                mean.len(),
                cov.shape()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) || !cov.is_finite() {
            return Err(Error::InvalidInput("non-finite moments".into()));
        }
        let asym = cov.sub(&cov.transpose()).max_abs();
        if asym > 1e-12 * cov.max_abs().max(1.0) {
            return Err(Error::InvalidInput(format!("covariance not symmetric ({asym:e})")));
        }
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, Matrix::identity(n).scale(variance))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn require_goldilocks(spec: Activation, op: &'static str) -> Result<()> {
    if spec.is_goldilocks() {
        Ok(())
    } else {
        Err(Error::UnsupportedActivation {
            activation: spec.to_string(),
            operation: op,
        })
    }
}

fn g_at(spec: Activation, z: f64) -> Derivs {
    spec.local_nonlinearity(z)
        .expect("caller checked the activation is Goldilocks")
}

/// Mean and variance of `A(w X + b)` for scalar `X` with mean `mu`, variance `sigma2`.
pub fn propagate_neuron(
    mu: f64,
    sigma2: f64,
    w: f64,
    b: f64,
    spec: Activation,
) -> Result<(f64, f64)> {
    require_goldilocks(spec, "moments propagation")?;
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("variance {sigma2} must be >= 0")));
    }
    let z = w * mu + b;
    let g = g_at(spec, z);
    let s = sigma2 * w * w;
    let mean = z + g.value + 0.5 * s * g.d2;
    let var = s + 2.0 * s * g.d1 + s * g.d1 * g.d1 + 0.5 * s * s * g.d2 * g.d2;
    Ok((mean, var))
}

pub fn propagate_layer(
    m: &GaussianMoments,
    w: &Matrix,
    b: &[f64],
    spec: Activation,
) -> Result<GaussianMoments> {
    require_goldilocks(spec, "moments propagation")?;
    if w.cols() != m.dim() || w.rows() != b.len() {
        return Err(Error::Shape(format!(
            "W is {:?}, mean has {} entries, b has {}",
            w.shape(),
            m.dim(),
            b.len()
        )));
    }
    let out = w.rows();
    let s = w.matmul(&m.cov).matmul(&w.transpose());
    let z: Vec<f64> = (0..out).map(|i| dot(w.row(i), &m.mean) + b[i]).collect();
    let g: Vec<Derivs> = z.iter().map(|&zi| g_at(spec, zi)).collect();
    let u: Vec<f64> = (0..out).map(|i| s.get(i, i)).collect();

    let mean = (0..out)
        .map(|i| z[i] + g[i].value + 0.5 * g[i].d2 * u[i])
        .collect();
    let cov = Matrix::from_fn(out, out, |i, j| {
        (1.0 + g[i].d1) * s.get(i, j) * (1.0 + g[j].d1) + 0.5 * g[i].d2 * g[j].d2 * u[i] * u[j]
    })
    .symmetrized();
    Ok(GaussianMoments { mean, cov })
}

/// Sample moments with per-entry standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub moments: GaussianMoments,
    pub mean_se: Vec<f64>,
    pub cov_se: Matrix,
    pub samples: usize,
}

const MC_BLOCK: usize = 1 << 15;
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Monte-Carlo estimate of the moments of `A(W X + b)`, `X ~ N(μ, Σ)`.
///
/// Deterministic for a given seed: samples are drawn in fixed-size blocks
/// whose generators are split from one `moments` stream in order.
pub fn mc_oracle(
    m: &GaussianMoments,
    w: &Matrix,
    b: &[f64],
    spec: Activation,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    if w.cols() != m.dim() || w.rows() != b.len() {
        return Err(Error::Shape("oracle layer shape mismatch".into()));
    }
    let chol = cholesky_psd(&m.cov)?;
    let d_in = m.dim();
    let d_out = w.rows();

    let mut master = SplitMix64::stream(seed, rng::MOMENTS);
    let blocks: Vec<(usize, SplitMix64)> = (0..n.div_ceil(MC_BLOCK))
        .map(|k| (MC_BLOCK.min(n - k * MC_BLOCK), master.split()))
        .collect();

    let chunks: Vec<Vec<f64>> = blocks
        .into_par_iter()
        .map(|(count, mut rng)| {
            let mut ys = Vec::with_capacity(count * d_out);
            let mut xi = vec![0.0; d_in];
            let mut x = vec![0.0; d_in];
            for _ in 0..count {
                for v in xi.iter_mut() {
                    *v = rng.normal();
                }
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr = m.mean[r] + dot(&chol.row(r)[..=r], &xi[..=r]);
                }
                for i in 0..d_out {
                    ys.push(spec.apply(dot(w.row(i), &x) + b[i]));
                }
            }
            ys
        })
        .collect();
    let ys: Vec<f64> = chunks.concat();

    // Sums are taken relative to the first sample, which keeps constant outputs exact.
    let nf = n as f64;
    let shift = ys[..d_out].to_vec();
    let mut offset = vec![0.0; d_out];
    for row in ys.chunks_exact(d_out) {
        for ((o, y), k) in offset.iter_mut().zip(row).zip(&shift) {
            *o += y - k;
        }
    }
    offset.iter_mut().for_each(|o| *o /= nf);
    let mean: Vec<f64> = shift.iter().zip(&offset).map(|(k, o)| k + o).collect();

    let mut cov = Matrix::zeros(d_out, d_out);
    let mut cov_sq = Matrix::zeros(d_out, d_out);
    for row in ys.chunks_exact(d_out) {
        for i in 0..d_out {
            let di = (row[i] - shift[i]) - offset[i];
            for j in 0..d_out {
                let p = di * ((row[j] - shift[j]) - offset[j]);
                cov.set(i, j, cov.get(i, j) + p);
                cov_sq.set(i, j, cov_sq.get(i, j) + p * p);
            }
        }
    }
    let cov_mean = cov.scale(1.0 / nf);
    let cov_se = Matrix::from_fn(d_out, d_out, |i, j| {
        let c = cov_mean.get(i, j);
        ((cov_sq.get(i, j) / nf - c * c).max(0.0) / nf).sqrt()
    });
    let cov = cov.scale(1.0 / (nf - 1.0)).symmetrized();
    let mean_se = (0..d_out).map(|i| (cov.get(i, i) / nf).sqrt()).collect();
    Ok(McEstimate {
        moments: GaussianMoments { mean, cov },
        mean_se,
        cov_se,
        samples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentEntry {
    Mean { i: usize },
    Cov { i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub entry: MomentEntry,
    pub lemma: f64,
    pub oracle: f64,
    pub standard_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Default agreement rule: within `max(5% relative, 3 standard errors)`.
pub const ORACLE_REL_TOL: f64 = 0.05;
pub const ORACLE_N_SE: f64 = 3.0;

/// Compares every mean and upper-triangular covariance entry.
pub fn check_against_oracle(
    lemma: &GaussianMoments,
    oracle: &McEstimate,
    rel_tol: f64,
    n_se: f64,
) -> Vec<EntryCheck> {
    let mut out = Vec::new();
    let mut push = |entry, lemma: f64, oracle: f64, se: f64| {
        let tolerance = (rel_tol * oracle.abs()).max(n_se * se);
        out.push(EntryCheck {
            entry,
            lemma,
            oracle,
            standard_error: se,
            tolerance,
            pass: (lemma - oracle).abs() <= tolerance,
        });
    };
    for i in 0..lemma.dim() {
        push(MomentEntry::Mean { i }, lemma.mean[i], oracle.moments.mean[i], oracle.mean_se[i]);
    }
    for i in 0..lemma.dim() {
        for j in i..lemma.dim() {
            push(
                MomentEntry::Cov { i, j },
                lemma.cov.get(i, j),
                oracle.moments.cov.get(i, j),
                oracle.cov_se.get(i, j),
            );
        }
    }
    out
}
