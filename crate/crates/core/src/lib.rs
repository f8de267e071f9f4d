//! Goldilocks residual networks.
//!
//! Activations of the form `A(x) = x + g(x)` with a localized `g`, networks
//! built from them in the direct and the interpretable (input-coordinate)
//! formulation, Gaussian moments propagation, the continuous-depth flow with
//! its adjoint, and exact inversion.

pub mod activation;
pub mod error;
pub mod harness;
pub mod interpret;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod odeflow;
pub mod rng;

pub use activation::{activate, Activation, GoldilocksMode, HumpKind};
pub use error::{Error, Result};
pub use linalg::{pseudoinverse, svd, Matrix};
pub use network::{Layer, Network, TrainConfig};
