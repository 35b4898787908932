//! Super-structure-guided causal discovery.
//!
//! The crate decomposes an empirical precision matrix into a sparse component
//! `S` and a low-rank component `L` with an ADMM solver, turns the combined
//! support of the pair into an undirected super-structure, and uses that
//! structure as a hard edge mask inside a continuous (NOTEARS-style) DAG
//! learner. A synthetic SCM generator and structure metrics round out a
//! benchmark pipeline.
//!
//! Modules:
//! - [`graphs`]: random DAG generation, moralization, latent marginalization.
//! - [`scm`]: linear-SCM sampling, noise families, empirical covariance.
//! - [`admm`]: the sparse + low-rank precision decomposition solver.
//! - [`superstructure`]: mask assembly, thresholding and validation.
//! - [`dcd`]: acyclicity constraints, masked score, augmented-Lagrangian fit.
//! - [`metrics`]: precision / recall / F1 over directed or skeleton edges.

pub mod admm;
pub mod dcd;
pub mod error;
pub mod graphs;
pub mod linalg;
pub mod metrics;
pub mod scm;
pub mod seed;
pub mod superstructure;

pub use error::Error;

/// Matrix types used throughout the public API, re-exported so downstream
/// crates stay on the same version.
pub use nalgebra;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
