//! Numerical toolkit for almost-Euclidean sections of finite-dimensional
//! normed spaces.
//!
//! The modules build on each other bottom-up:
//!
//! * [`norms`]: closed-form norms and their comparison constants with `ℓ₂`;
//! * [`random`]: reproducible streams, sphere/Haar/subspace sampling;
//! * [`nets`]: ε-nets, covering checks and net-to-sphere amplification;
//! * [`concentration`]: spherical means, Levy tails, Gaussian moments;
//! * [`sections`]: Dvoretzky–Rogers bases and randomized section search;
//! * [`linf`]: `ℓ∞` basis constants, James iteration, block selection;
//! * [`experiments`]: scaling experiments with CSV/JSON/SVG output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod error;
pub mod experiments;
pub mod linf;
pub mod nets;
pub mod norms;
pub mod random;
pub mod sections;
pub mod stats;

pub use error::{Error, Result};
pub use norms::{ComparisonConstants, Exponent, NormSpec};
pub use random::{OrthoFrame, RandomSource};
