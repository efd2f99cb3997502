//! Erlang weighted tree laboratory.
//!
//! A rooted random tree in which every vertex carries a potential descendant
//! count and an Erlang-distributed threshold, and a potential edge survives
//! iff its uniform cost falls below the child's threshold. The library
//! computes the extinction probability (smallest fixed point of a monotone
//! integral operator), the growth rate β₀ (leading eigenvalue of the kernel
//! `min(x,z)·g₂(z)` obtained as the largest zero of an alternating series),
//! exact generation moments, second-moment limits, and Monte Carlo
//! observables — plus the finite bilateral nearest-neighbor graph whose local
//! limit the tree is.
//!
//! Everything is deterministic given a seed; see [`rng`] for the exact
//! hashing scheme.

pub mod error;
pub mod ewt;
pub mod extinction;
pub mod kgraph;
pub mod numerics;
pub mod observables;
pub mod rng;
pub mod second_moment;
pub mod spectral;

pub use error::{Error, Result};
pub use numerics::{DegreePmf, GridFn, GridSpec};
