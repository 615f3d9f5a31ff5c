//! Learning Ising models from low-order moment tables.
//!
//! The crate estimates couplings and fields of a pairwise binary graphical
//! model using only empirical moments `E[prod_{i in K} sigma_i]` up to a fixed
//! degree, by running projected gradient descent on a Taylor-truncated
//! interaction screening objective.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod generate;
pub mod hadamard;
pub mod known_structure;
pub mod model;
pub mod moments;
pub mod optimizer;
pub mod pipeline;
pub mod polyexpand;
pub mod rng;
pub mod sampling;
pub mod screening;
pub mod structure;
pub mod verify;

pub use error::{Error, Result};
pub use model::{IsingModel, LocalParams, SpinConfig};
pub use moments::{MomentTable, MonomialKey};
pub use sampling::{Dataset, SamplerKind};
