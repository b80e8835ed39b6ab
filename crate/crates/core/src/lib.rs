//! Hypergraph convolution and hypergraph attention for graph neural networks.
//!
//! This crate is `no_std` + `alloc`. It carries everything that is pure
//! computation: the hypergraph data model and its constructions, CSR sparse
//! kernels and the normalized transition operators, a small reverse-mode
//! differentiation tape, the layer zoo, and the full-batch training loop.
//! File formats, the parallel trial runner and the CLI live in the `hgnn`
//! crate.
//!
//! The main propagation rule is
//!
//! ```text
//! X' = σ(D^{-1/2} H W B^{-1} Hᵀ D^{-1/2} X P)        (symmetric)
//! X' = σ(D^{-1} H W B^{-1} Hᵀ X P)                    (row-normalized)
//! ```
//!
//! where `H` is the N×M incidence matrix, `W` the hyperedge weights and `D`,
//! `B` the vertex and hyperedge degrees.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod dataset;
pub mod dense;
mod error;
pub mod hypergraph;
pub mod layers;
pub mod math;
pub mod optim;
pub mod random;
pub mod rng;
pub mod sparse;
pub mod train;
pub mod transition;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use hypergraph::{DegreePair, Hypergraph, PairwiseGraph};
pub use sparse::SparseMatrix;
pub use transition::{TransitionKind, TransitionOperator};
