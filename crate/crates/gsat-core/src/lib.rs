//! Spiking graph attention: edge attention computed by an integrate-and-fire
//! spiking module over Poisson-encoded node features, plus a classical GAT
//! attention baseline, sparse CSR aggregation, reverse-mode training and the
//! robustness / efficiency / sparsity experiment machinery.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core stays free of
//! IO; file formats and the command-line driver live in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adam;
pub mod attack;
pub mod error;
pub mod experiment;
pub mod flops;
pub mod gat;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod spiking;
pub mod tape;

pub use error::CoreError;
pub use matrix::DenseMatrix;
pub use rng::Rng;
