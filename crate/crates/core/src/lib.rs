//! Path-normalized optimization for ReLU networks with shared weights.
//!
//! A network is a DAG whose edge weights are looked up in a shared parameter
//! vector (`w_e = p[param_of_edge[e]]`). Recurrent networks are built by
//! unrolling through time, so every time step reads the same recurrent
//! matrix. On top of that representation the crate provides:
//!
//! * forward evaluation and exact reverse-mode gradients ([`compute`], with a
//!   dense fast path for unrolled RNNs in [`dense`]),
//! * the path regularizer and its per-parameter curvature `kappa`, split into
//!   the single-edge term and the shared-edge interaction term
//!   ([`pathnorm`]), each with a brute-force oracle,
//! * node-wise rescalings and their feasibility ([`invariance`]),
//! * SGD, Path-SGD and Path-Adam updates plus a training loop ([`optim`],
//!   [`train`]),
//! * the synthetic tasks used to exercise all of the above ([`tasks`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod error;
mod math;

pub mod compute;
pub mod dense;
pub mod graph;
pub mod init;
pub mod invariance;
pub mod optim;
pub mod pathnorm;
pub mod rng;
pub mod tasks;
pub mod train;
pub mod verify;

pub use compute::{Activation, Example, ParamVector, Target};
pub use error::{Error, Result};
pub use graph::{NodeKind, Readout, RnnSpec, SharedWeightNet, Violation};
pub use invariance::NodeScaling;
pub use optim::{KappaMode, OptimizerConfig, OptimizerKind, OptimizerState};
pub use pathnorm::KappaVector;
