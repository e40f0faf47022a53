//! nalm-lab: training and evaluation lab for neural arithmetic
//! multiplication units.
//!
//! The crate implements, from small parts upward:
//!
//! - a reverse-mode autodiff tape over dense f64 matrices ([`tape`]),
//! - arithmetic layers: additive units, multiplicative units, a stochastic
//!   denoising multiplicative unit, and an MLP baseline ([`layers`]),
//! - stochastic training variants: annealed gradient noise and stochastic
//!   gates with an L0 penalty ([`stochastic`]),
//! - synthetic multiplication tasks with disjoint interpolation and
//!   extrapolation sampling ranges ([`tasks`]),
//! - an Adam training loop with discretisation regularisation and
//!   checkpoint selection by validation error ([`trainer`]),
//! - success metrics built on a simulated epsilon-perfect error threshold,
//!   with Wilson / Gamma / Beta confidence intervals ([`metrics`]),
//! - loss-landscape and function-surface exports plus closed-form gradient
//!   oracles used to cross-check the tape ([`analysis`]).
//!
//! Everything is deterministic given a seed: random streams are derived per
//! purpose ([`rng`]), so results are identical across reruns and worker
//! counts.

pub mod analysis;
pub mod error;
pub mod layers;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod stats;
pub mod stochastic;
pub mod tape;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tape::{Bindings, Gradients, NodeId, Tape};
