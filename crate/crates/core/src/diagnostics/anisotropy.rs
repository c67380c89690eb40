use crate::numerics::{
    condition_at_rank, covariance_spectrum, gram_spectrum, FilterPartition, GroupingLevel,
};
use crate::optim::NoiseBank;
use crate::{Error, Result};

/// Centering tolerance on `‖Σ ω^i‖ / max ‖ω^i‖` for banks handed to
/// [`anisotropy`].
const CENTERING_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupAnisotropy {
    pub name: String,
    /// `None` when the spectrum is degenerate.
    pub kappa: Option<f64>,
    /// Requested percentiles of the attainable spectrum, non-decreasing.
    pub percentiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnisotropyReport {
    pub level: GroupingLevel,
    pub percentile_points: Vec<f64>,
    pub groups: Vec<GroupAnisotropy>,
}

/// Per-group condition numbers and eigenvalue percentiles of the noise
/// covariance `(1/M) Ω Ω^T` of a centered bank.
pub fn anisotropy(
    bank: &NoiseBank,
    partition: &FilterPartition,
    level: GroupingLevel,
    percentiles: &[f64],
) -> Result<AnisotropyReport> {
    if bank.workers() < 3 {
        return Err(Error::invalid(format!(
            "anisotropy needs at least 3 workers, got {}",
            bank.workers()
        )));
    }
    if bank.zero_sum_residual() > CENTERING_TOL {
        return Err(Error::invalid(format!(
            "noise bank is not centered (residual {:e})",
            bank.zero_sum_residual()
        )));
    }
    sample_anisotropy(bank.columns(), partition, level, percentiles)
}

/// As [`anisotropy`] over an arbitrary set of centered samples, e.g. banks
/// accumulated across iterations.
///
/// `N` centered samples span at most `r = min(l_g, N - 1)` dimensions of a
/// group of size `l_g`, so `κ = λ_1 / λ_r` and the percentiles run over those
/// `r` leading eigenvalues. The spectrum comes from the `N x N` Gram matrix
/// when `l_g >= N` and from the dense `l_g x l_g` covariance otherwise.
pub fn sample_anisotropy(
    columns: &[Vec<f64>],
    partition: &FilterPartition,
    level: GroupingLevel,
    percentiles: &[f64],
) -> Result<AnisotropyReport> {
    let n = columns.len();
    if n < 3 {
        return Err(Error::invalid(format!("anisotropy needs at least 3 samples, got {n}")));
    }
    if columns.iter().any(|c| c.len() != partition.len()) {
        return Err(Error::invalid("noise dimension does not match the partition"));
    }
    if let Some(p) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let groups = partition.at_level(level);
    let mut out = Vec::with_capacity(groups.groups().len());
    for g in groups.groups() {
        let rows: Vec<&[f64]> = columns.iter().map(|c| &c[g.range.clone()]).collect();
        let lg = g.len();
        let eigs = if lg >= n {
            gram_spectrum(&rows)?
        } else {
            covariance_spectrum(&rows)?
        };
        let rank = lg.min(n - 1);
        let kappa = if rank >= 2 {
            condition_at_rank(&eigs, rank)?
        } else {
            None
        };
        let top = &eigs.values()[eigs.len() - rank.max(1)..];
        out.push(GroupAnisotropy {
            name: g.name.clone(),
            kappa,
            percentiles: percentiles.iter().map(|&p| percentile(top, p)).collect(),
        });
    }
    Ok(AnisotropyReport {
        level,
        percentile_points: percentiles.to_vec(),
        groups: out,
    })
}

/// Linearly interpolated percentile `p` of the ascending slice `sorted`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}
