//! Flat-vector arithmetic, deterministic random streams, parameter partitions
//! and the symmetric eigen-solver used for noise-covariance analysis.
//!
//! Every reduction here (sums, dot products, norms) runs sequentially in index
//! order, so results are bit-identical across runs and thread counts.

mod eigen;
mod partition;
mod rng;
mod vector;

pub use eigen::{
    condition_at_rank, condition_number, covariance_spectrum, gram_eigenvalues, gram_spectrum, symmetric_eigenvalues, EigenResult,
};
pub use partition::{filter_norms, FilterPartition, GroupingLevel, ParamGroup, ParamVector};
pub use rng::{streams, uniform_noise, Rng};
pub use vector::{axpy, cosine_similarity, dot, mean_of, norm, sub};
