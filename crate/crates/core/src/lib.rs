//! Exact and Monte Carlo engines for Gaussian / local-time isomorphism
//! identities on finite-state symmetric (and some non-symmetric) Markov
//! chains.
//!
//! The crate is organized as a stack:
//!
//! - [`model`]: chain models (states, reference measure, jump and killing
//!   rates) with schema validation and the generator matrix.
//! - [`kernels`]: transition densities and the potential kernels
//!   u^alpha, u, the hitting kernel u_{T0}, and the inverse-local-time kernel.
//! - [`combinat`]: pairings, set partitions, cyclic permutations, and the
//!   cycle / chain / permanent functionals evaluated over a kernel.
//! - [`moments`]: closed-form moment engines for Gaussian squares, local
//!   times, loop and excursion measures, occupation fields, and
//!   interlacement functionals, all by direct enumeration.
//! - [`mgf`]: determinant-based generating functionals; an independent
//!   analytic engine for the same quantities.
//! - [`sample`]: seeded Monte Carlo samplers (third engine).
//! - [`verify`]: the harness pairing engines against each other and emitting
//!   structured reports.
//!
//! Verification never compares an engine to itself: each identity is checked
//! moments vs generating functionals, analytic vs sampled, or enumeration vs
//! a frozen brute-force oracle.

pub mod combinat;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod mgf;
pub mod model;
pub mod moments;
pub mod sample;
pub mod tol;
pub mod verify;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelKind};
pub use model::{ChainModel, MODEL_SCHEMA};
pub use verify::{VerificationReport, REPORT_SCHEMA};
