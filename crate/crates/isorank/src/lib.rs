//! Estimation of the hidden row order of a noisy, partially observed matrix
//! whose columns are nondecreasing once the rows are sorted correctly.
//!
//! The crate provides the full pipeline: Poisson-sampled observation streams
//! ([`sampling`]), the iterative ranking procedure built from repeated
//! soft-local-ranking passes ([`slr`], [`isr`]), matrix reconstruction by
//! isotonic projection ([`reconstruct`]), synthetic instance generators
//! including the hard packed-strip family ([`synth`]), baselines, losses, and
//! sweep drivers ([`bench`]), and serialization ([`io`]).

pub mod compgraph;
pub mod bench;
pub mod eig;
pub mod error;
pub mod io;
pub mod isr;
pub mod perm;
pub mod reconstruct;
pub mod synth;
pub mod rng;
pub mod sampling;
pub mod slr;

pub use error::{Error, Result};
pub use perm::Permutation;
