//! Tikhonov-regularized Krasnoselskii-Mann, forward-backward and
//! Douglas-Rachford iterations, together with computable rates of
//! asymptotic regularity and metastability and a harness that checks them
//! against simulated trajectories.

pub mod config;
pub mod error;
pub mod experiment;
pub mod iterations;
pub mod moduli;
pub mod nat;
pub mod natfn;
pub mod ops;
pub mod rates;
pub mod vector;
pub mod verify;

pub use error::{Error, Result};
pub use moduli::{QuantitativeModuli, Schedule, Sequence};
pub use nat::{BoundedNat, Cap};
pub use natfn::{MonotoneFn, NatFunction};
pub use ops::{AveragedOp, CocoerciveOp, NonexpansiveOp, ResolventOp};
pub use vector::Vector;

/// Absolute slack for floating-point comparisons against certified bounds.
pub const SLACK: f64 = 1e-9;
