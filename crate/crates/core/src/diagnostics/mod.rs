//! Read-only measurements over optimizer snapshots: noise anisotropy,
//! full-gradient similarity, worker loss spread and smoothness probes.

mod anisotropy;
mod probe;
mod similarity;

pub use anisotropy::{anisotropy, sample_anisotropy, percentile, AnisotropyReport, GroupAnisotropy};
pub use probe::{probe_multipliers, smoothness_probe, ProbeMode, SmoothnessProbe, PROBE_STEPS};
pub use similarity::{fg_similarity, worker_spread, WorkerSpread};
