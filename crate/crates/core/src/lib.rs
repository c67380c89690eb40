//! Deterministic single-process simulator of data-parallel SGD with `M` logical
//! workers.
//!
//! Besides plain DP-SGD the step engine supports gradient noise convolution
//! (each worker evaluates its shard gradient at a point displaced by the
//! deviation of its previous shard gradient from the merged gradient), random
//! noise convolution (the same with centered uniform noise) and a schedule that
//! switches from the former to the latter. The [`diagnostics`] module measures
//! noise anisotropy, full-gradient predictiveness, worker loss spread and the
//! loss-smoothness triad; [`harness`] drives reproducible runs and method
//! comparisons.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod objectives;
pub mod optim;

pub use error::{Error, Result};
