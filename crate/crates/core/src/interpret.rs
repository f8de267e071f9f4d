//! Interpretable formulation.
//!
//! With `V_n = W_n ⋯ W_0`, `c_0 = b_0`, `c_n = W_n c_{n-1} + b_n`, the direct
//! states satisfy `x_n = V_{n-1} y_n + c_{n-1}` where every `y_n` lives in
//! input coordinates and evolves as `y_{n+1} = y_n + V_n⁺ g(V_n y_n + c_n)`.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::{dot, numerical_rank, pseudoinverse, Matrix, DEFAULT_RANK_TOL};
use crate::network::Network;

#[derive(Debug, Clone)]
pub struct ChainLink {
    /// `out_n × d_0`.
    pub v: Matrix,
    pub c: Vec<f64>,
    pub v_pinv: Matrix,
    pub activation: Activation,
    /// `rank(V_n) < d_0`: mapping back to input coordinates loses information.
    pub lossy: bool,
}

/// Accumulated `(V_n, c_n)` sequence of a network, with pseudoinverses.
#[derive(Debug, Clone)]
pub struct InterpretableChain {
    links: Vec<ChainLink>,
    input_dim: usize,
}

impl InterpretableChain {
    pub fn links(&self) -> &[ChainLink] {
        &self.links
    }

    pub fn depth(&self) -> usize {
        self.links.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn link(&self, layer: usize) -> Result<&ChainLink> {
        self.links.get(layer).ok_or_else(|| {
            Error::InvalidInput(format!("layer {layer} out of range (depth {})", self.depth()))
        })
    }
}

pub fn build_chain(net: &Network) -> Result<InterpretableChain> {
    let depth = net.depth();
    for (k, layer) in net.layers().iter().enumerate().take(depth - 1) {
        if !layer.activation.is_goldilocks() {
            return Err(Error::UnsupportedActivation {
                activation: format!("{} (layer {k})", layer.activation),
                operation: "interpretable chain hidden layer",
            });
        }
    }
    let d0 = net.input_dim();
    let mut links: Vec<ChainLink> = Vec::with_capacity(depth);
    for layer in net.layers() {
        let (v, c) = match links.last() {
            None => (layer.weights.clone(), layer.bias.clone()),
            Some(prev) => {
                let v = layer.weights.matmul(&prev.v);
                let mut c = layer.weights.matvec(&prev.c);
                for (ci, bi) in c.iter_mut().zip(&layer.bias) {
                    *ci += bi;
                }
                (v, c)
            }
        };
        let v_pinv = pseudoinverse(&v, DEFAULT_RANK_TOL)?;
        let lossy = numerical_rank(&v, DEFAULT_RANK_TOL)? < d0;
        links.push(ChainLink {
            v,
            c,
            v_pinv,
            activation: layer.activation,
            lossy,
        });
    }
    Ok(InterpretableChain {
        links,
        input_dim: d0,
    })
}

/// One interpretable step through `link` for a single point.
pub fn interpretable_step(link: &ChainLink, y: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = (0..link.v.rows())
        .map(|i| dot(link.v.row(i), y) + link.c[i])
        .collect();
    match link.activation {
        Activation::Goldilocks { .. } => {
            let g: Vec<f64> = z
                .iter()
                .map(|&zi| link.activation.local_nonlinearity(zi).map_or(0.0, |d| d.value))
                .collect();
            let dy = link.v_pinv.matvec(&g);
            y.iter().zip(dy).map(|(a, b)| a + b).collect()
        }
        act => {
            let shifted: Vec<f64> = z
                .iter()
                .zip(&link.c)
                .map(|(&zi, ci)| act.apply(zi) - ci)
                .collect();
            link.v_pinv.matvec(&shifted)
        }
    }
}

/// States of a batch of points through the layers, in input coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Layer index of each stored state; `0` is the raw input.
    pub layers: Vec<usize>,
    /// `states[k]` is `batch × d_0` for layer `layers[k]`.
    pub states: Vec<Matrix>,
    pub point_ids: Vec<usize>,
    /// Per stored layer: whether reaching it went through a lossy projection.
    pub lossy: Vec<bool>,
}

impl Trajectory {
    pub fn state(&self, layer: usize) -> Option<&Matrix> {
        self.layers.iter().position(|&l| l == layer).map(|k| &self.states[k])
    }
}

pub fn forward_interpretable(chain: &InterpretableChain, y0: &Matrix) -> Result<Trajectory> {
    forward_interpretable_strided(chain, y0, 1)
}

/// Like [`forward_interpretable`] but only keeps every `stride`-th layer (plus the last).
pub fn forward_interpretable_strided(
    chain: &InterpretableChain,
    y0: &Matrix,
    stride: usize,
) -> Result<Trajectory> {
    if y0.cols() != chain.input_dim() {
        return Err(Error::Shape(format!(
            "points have dimension {}, chain input dimension is {}",
            y0.cols(),
            chain.input_dim()
        )));
    }
    let stride = stride.max(1);
    let depth = chain.depth();
    let mut traj = Trajectory {
        layers: vec![0],
        states: vec![y0.clone()],
        point_ids: (0..y0.rows()).collect(),
        lossy: vec![false],
    };
    let mut current = y0.clone();
    let mut lossy = false;
    for (n, link) in chain.links().iter().enumerate() {
        let mut next = Matrix::zeros(current.rows(), current.cols());
        for s in 0..current.rows() {
            next.row_mut(s)
                .copy_from_slice(&interpretable_step(link, current.row(s)));
        }
        lossy |= link.lossy;
        current = next;
        let layer = n + 1;
        if layer % stride == 0 || layer == depth {
            traj.layers.push(layer);
            traj.states.push(current.clone());
            traj.lossy.push(lossy);
        }
    }
    Ok(traj)
}

/// `x_n = V_{n-1} y + c_{n-1}` (layer ≥ 1).
pub fn from_input_coords(chain: &InterpretableChain, y: &[f64], layer: usize) -> Result<Vec<f64>> {
    if layer == 0 {
        return Ok(y.to_vec());
    }
    let link = chain.link(layer - 1)?;
    if y.len() != chain.input_dim() {
        return Err(Error::Shape("point dimension mismatch".into()));
    }
    let mut x = link.v.matvec(y);
    for (xi, ci) in x.iter_mut().zip(&link.c) {
        *xi += ci;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backprojection {
    pub coords: Vec<f64>,
    /// Least-norm solution of a rank-deficient system rather than an exact inverse.
    pub lossy: bool,
}

/// `y_n = V_{n-1}⁺ (x_n − c_{n-1})`.
pub fn to_input_coords(chain: &InterpretableChain, xn: &[f64], layer: usize) -> Result<Backprojection> {
    if layer == 0 {
        return Err(Error::InvalidInput("backprojection needs layer >= 1".into()));
    }
    let link = chain.link(layer - 1)?;
    if xn.len() != link.v.rows() {
        return Err(Error::Shape(format!(
            "state has {} entries, layer {layer} has width {}",
            xn.len(),
            link.v.rows()
        )));
    }
    let shifted: Vec<f64> = xn.iter().zip(&link.c).map(|(x, c)| x - c).collect();
    Ok(Backprojection {
        coords: link.v_pinv.matvec(&shifted),
        lossy: link.lossy,
    })
}

/// Backprojects the one-hot output vectors `e_0, e_1, …` to input coordinates.
pub fn output_archetypes(chain: &InterpretableChain) -> Result<Vec<Backprojection>> {
    let depth = chain.depth();
    let width = chain.link(depth - 1)?.v.rows();
    (0..width)
        .map(|i| {
            let mut e = vec![0.0; width];
            e[i] = 1.0;
            to_input_coords(chain, &e, depth)
        })
        .collect()
}

/// The locus `normal · y + offset = 0` around which one neuron deforms its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub layer: usize,
    pub neuron: usize,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    /// Signed distance from `y` to the plane.
    pub fn signed_distance(&self, y: &[f64]) -> f64 {
        (dot(&self.normal, y) + self.offset) / dot(&self.normal, &self.normal).sqrt()
    }
}

pub fn hyperplanes(chain: &InterpretableChain, layer: usize) -> Result<Vec<Hyperplane>> {
    let link = chain.link(layer)?;
    (0..link.v.rows())
        .map(|i| {
            let normal = link.v.row(i).to_vec();
            if normal.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidState(format!(
                    "neuron {i} of layer {layer} has a zero normal"
                )));
            }
            Ok(Hyperplane {
                layer,
                neuron: i,
                normal,
                offset: link.c[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    Direct,
    Interpretable,
}

/// Regular rectangular lattice in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2d {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub steps: [usize; 2],
}

impl Grid2d {
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            min: [lo, lo],
            max: [hi, hi],
            steps: [n, n],
        }
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        let axis = |k: usize| -> Vec<f64> {
            let n = self.steps[k];
            if n <= 1 {
                return vec![self.min[k]];
            }
            (0..n)
                .map(|i| self.min[k] + (self.max[k] - self.min[k]) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let xs = axis(0);
        let ys = axis(1);
        xs.iter()
            .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl Arrow {
    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }
}

/// Image of each grid point under one step of `layer`.
pub fn phase_diagram(
    net: &Network,
    grid: &Grid2d,
    layer: usize,
    formulation: Formulation,
) -> Result<Vec<Arrow>> {
    let l = net.layers().get(layer).ok_or_else(|| {
        Error::InvalidInput(format!("layer {layer} out of range (depth {})", net.depth()))
    })?;
    match formulation {
        Formulation::Direct => {
            for dim in [l.in_dim(), l.out_dim()] {
                if dim != 2 {
                    return Err(Error::UnsupportedDimension {
                        dim,
                        context: "direct phase diagram needs a 2 -> 2 layer",
                    });
                }
            }
            Ok(grid
                .points()
                .into_iter()
                .map(|p| {
                    let e = l.apply(&p);
                    Arrow {
                        start: p,
                        end: [e[0], e[1]],
                    }
                })
                .collect())
        }
        Formulation::Interpretable => {
            if net.input_dim() != 2 {
                return Err(Error::UnsupportedDimension {
                    dim: net.input_dim(),
                    context: "interpretable phase diagram needs 2-d inputs",
                });
            }
            let chain = build_chain(net)?;
            let link = chain.link(layer)?;
            Ok(grid
                .points()
                .into_iter()
                .map(|p| {
                    let e = interpretable_step(link, &p);
                    Arrow {
                        start: p,
                        end: [e[0], e[1]],
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, Layer};
    use std::f64::consts::PI;

    fn layer(w: &[f64], n: usize, b: &[f64], a: Activation) -> Layer {
        Layer::new(Matrix::new(b.len(), n, w.to_vec()).unwrap(), b.to_vec(), a).unwrap()
    }

    fn identity_net(depth: usize, a: Activation) -> Network {
        Network::new((0..depth).map(|_| layer(&[1.0, 0.0, 0.0, 1.0], 2, &[0.0, 0.0], a)).collect()).unwrap()
    }

    #[test]
    fn chain_base_case_and_products() {
        let net = Network::new(vec![layer(&[1.0, 2.0, 3.0, 4.0], 2, &[0.5, -1.0], Activation::LORENTZ_BIASED)]).unwrap();
        let chain = build_chain(&net).unwrap();
        assert_eq!(chain.links()[0].v, net.layers()[0].weights);
        assert_eq!(chain.links()[0].c, vec![0.5, -1.0]);

        let two = Network::new(vec![
            layer(&[2.0, 0.0, 0.0, 2.0], 2, &[0.0, 0.0], Activation::LORENTZ_UNBIASED),
            layer(&[2.0, 0.0, 0.0, 2.0], 2, &[0.0, 0.0], Activation::LORENTZ_UNBIASED),
        ])
        .unwrap();
        let chain = build_chain(&two).unwrap();
        assert_eq!(chain.links()[1].v, Matrix::identity(2).scale(4.0));
        assert_eq!(chain.links()[1].c, vec![0.0, 0.0]);

        let chain = build_chain(&identity_net(5, Activation::GAUSS_BIASED)).unwrap();
        for link in chain.links() {
            assert_eq!(link.v, Matrix::identity(2));
            assert_eq!(link.c, vec![0.0, 0.0]);
            assert!(!link.lossy);
        }
    }

    #[test]
    fn hidden_layers_must_be_goldilocks() {
        let net = Network::new(vec![
            layer(&[1.0], 1, &[0.0], Activation::Relu),
            layer(&[1.0], 1, &[0.0], Activation::Sigmoid),
        ])
        .unwrap();
        assert!(matches!(build_chain(&net), Err(Error::UnsupportedActivation { .. })));
    }

    #[test]
    fn identity_chain_step() {
        let chain = build_chain(&identity_net(1, Activation::LORENTZ_UNBIASED)).unwrap();
        let t = forward_interpretable(&chain, &Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap()).unwrap();
        let y1 = t.state(1).unwrap();
        assert!((y1.get(0, 0) - (1.0 + 1.0 / (2.0 * PI))).abs() < 1e-14);
        assert_eq!(y1.get(0, 1), 0.0);
    }

    #[test]
    fn tails_leave_points_in_place() {
        let chain = build_chain(&identity_net(6, Activation::LORENTZ_UNBIASED)).unwrap();
        let y0 = Matrix::from_rows(&[vec![1e4, -2e4], vec![5e3, 8e3]]).unwrap();
        let t = forward_interpretable(&chain, &y0).unwrap();
        for s in &t.states {
            assert!(s.sub(&y0).max_abs() < 1e-2);
        }
    }

    #[test]
    fn square_chain_matches_direct() {
        let net = Network::new(vec![
            layer(&[1.2, 0.3, -0.4, 0.9], 2, &[0.1, -0.2], Activation::LORENTZ_UNBIASED),
            layer(&[0.7, -0.5, 0.6, 1.1], 2, &[0.3, 0.0], Activation::GAUSS_BIASED),
            layer(&[1.0, 0.2, 0.1, 0.8], 2, &[-0.1, 0.2], Activation::LORENTZ_BIASED),
        ])
        .unwrap();
        let chain = build_chain(&net).unwrap();
        let y0 = Matrix::from_rows(&[vec![0.3, -0.7], vec![1.5, 0.2]]).unwrap();
        let direct = forward(&net, &y0).unwrap();
        let interp = forward_interpretable(&chain, &y0).unwrap();
        for n in 1..=net.depth() {
            for s in 0..2 {
                let x = from_input_coords(&chain, interp.state(n).unwrap().row(s), n).unwrap();
                for (a, b) in x.iter().zip(direct.states[n].row(s)) {
                    assert!((a - b).abs() < 1e-12);
                }
                let back = to_input_coords(&chain, direct.states[n].row(s), n).unwrap();
                assert!(!back.lossy);
                for (a, b) in back.coords.iter().zip(interp.state(n).unwrap().row(s)) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn backprojection_examples() {
        let chain = build_chain(&identity_net(1, Activation::LORENTZ_BIASED)).unwrap();
        let b = to_input_coords(&chain, &[0.25, -3.0], 1).unwrap();
        assert_eq!(b.coords, vec![0.25, -3.0]);
        assert!(to_input_coords(&chain, &[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn rectangular_output_is_lossy() {
        let net = Network::new(vec![
            layer(&[1.0, 0.5, -0.3, 1.0], 2, &[0.0, 0.0], Activation::LORENTZ_BIASED),
            layer(&[1.0, -1.0], 2, &[0.2], Activation::Sigmoid),
        ])
        .unwrap();
        let chain = build_chain(&net).unwrap();
        let arche = output_archetypes(&chain).unwrap();
        assert_eq!(arche.len(), 1);
        assert!(arche[0].lossy);
        assert_eq!(arche[0].coords.len(), 2);
        // Least-norm solution reproduces the target through V, c.
        let x = from_input_coords(&chain, &arche[0].coords, 2).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hyperplane_examples() {
        let net = Network::new(vec![layer(&[1.0, 0.0, 0.0, 2.0], 2, &[0.0, -2.0], Activation::LORENTZ_UNBIASED)]).unwrap();
        let chain = build_chain(&net).unwrap();
        let hs = hyperplanes(&chain, 0).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(hs[0].normal, vec![1.0, 0.0]);
        assert_eq!(hs[0].offset, 0.0);
        // 2 y2 - 2 = 0  <=>  y2 = 1
        assert_eq!(hs[1].signed_distance(&[7.0, 1.0]), 0.0);
        assert_eq!(hs[1].signed_distance(&[0.0, 3.0]), 2.0);
        assert!(hyperplanes(&chain, 1).is_err());
    }

    #[test]
    fn phase_diagram_examples() {
        let grid = Grid2d::square(-2.0, 2.0, 5);
        let zero = Network::new(vec![layer(&[0.0; 4], 2, &[1.0, 1.0], Activation::LORENTZ_BIASED)]).unwrap();
        let arrows = phase_diagram(&zero, &grid, 0, Formulation::Direct).unwrap();
        assert_eq!(arrows.len(), 25);
        let e = 1.0 + 1.0 / (2.0 * PI);
        assert!(arrows.iter().all(|a| (a.end[0] - e).abs() < 1e-15 && (a.end[1] - e).abs() < 1e-15));

        let id = identity_net(2, Activation::LORENTZ_UNBIASED);
        for f in [Formulation::Direct, Formulation::Interpretable] {
            let arrows = phase_diagram(&id, &grid, 1, f).unwrap();
            let origin = arrows.iter().find(|a| a.start == [0.0, 0.0]).unwrap();
            assert_eq!(origin.length(), 0.0);
            let far = phase_diagram(&id, &Grid2d::square(500.0, 900.0, 4), 0, f).unwrap();
            assert!(far.iter().all(|a| a.length() < 1e-2));
        }

        let wide = Network::new(vec![layer(&[1.0; 6], 3, &[0.0, 0.0], Activation::LORENTZ_BIASED)]).unwrap();
        for f in [Formulation::Direct, Formulation::Interpretable] {
            assert!(matches!(
                phase_diagram(&wide, &grid, 0, f),
                Err(Error::UnsupportedDimension { dim: 3, .. })
            ));
        }
    }

    #[test]
    fn strided_trajectory_keeps_ends() {
        let chain = build_chain(&identity_net(7, Activation::LORENTZ_UNBIASED)).unwrap();
        let y0 = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let t = forward_interpretable_strided(&chain, &y0, 3).unwrap();
        assert_eq!(t.layers, vec![0, 3, 6, 7]);
        assert_eq!(t.states.len(), 4);
    }
}
