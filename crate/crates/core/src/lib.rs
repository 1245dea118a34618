//! Nonlinear semigroup calculus for finite-state Markov jump processes.
//!
//! For a generator `Q` the crate computes
//!
//! - the nonlinear generator `Hf = e^{-f} Q e^{f}` ([`nonlinear::apply_h`]),
//! - the log-Laplace semigroup `V(t)f = log e^{tQ} e^{f}` ([`nonlinear::nonlinear_semigroup`]),
//! - the resolvent `R(λ)h` solving `f − λHf = h` ([`resolvent::fixed_point_resolvent`]),
//! - the entropy-penalized value of exponentially tilted path laws
//!   ([`resolvent::variational_value`]),
//!
//! together with checks of the identities tying them together, relative
//! entropy tools ([`entropy`]), exponential clocks ([`clock`]) and a
//! large-deviation pipeline for density-scaled birth–death chains ([`ldp`]).

pub mod cli;
pub mod clock;
pub mod config;
pub mod entropy;
pub mod error;
pub mod ldp;
pub mod markov;
pub mod nonlinear;
pub mod quadrature;
pub mod resolvent;

pub use error::{Error, GeneratorError, Result};
pub use markov::{Distribution, Generator, StateFunction, StateSpace};
