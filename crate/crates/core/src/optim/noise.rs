use crate::numerics::{mean_of, norm, sub, uniform_noise, Rng};
use crate::{Error, Result};

/// The `M` noise vectors of one iteration, one column per worker.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseBank {
    dim: usize,
    columns: Vec<Vec<f64>>,
}

impl NoiseBank {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let dim = columns
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("noise bank needs at least one column"))?;
        if columns.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("noise columns differ in length"));
        }
        Ok(Self { dim, columns })
    }

    pub fn zeros(workers: usize, dim: usize) -> Self {
        Self {
            dim,
            columns: vec![vec![0.0; dim]; workers.max(1)],
        }
    }

    pub fn workers(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    /// `‖Σ_i ω^i‖`, summed in worker order.
    pub fn sum_norm(&self) -> f64 {
        let mut s = vec![0.0; self.dim];
        for c in &self.columns {
            for (a, b) in s.iter_mut().zip(c) {
                *a += b;
            }
        }
        norm(&s)
    }

    pub fn max_norm(&self) -> f64 {
        self.columns.iter().map(|c| norm(c)).fold(0.0, f64::max)
    }

    pub fn mean_norm(&self) -> f64 {
        self.columns.iter().map(|c| norm(c)).sum::<f64>() / self.workers() as f64
    }

    /// `‖Σ ω^i‖ / max_i ‖ω^i‖`, or 0 for an all-zero bank.
    pub fn zero_sum_residual(&self) -> f64 {
        let m = self.max_norm();
        if m == 0.0 {
            0.0
        } else {
            self.sum_norm() / m
        }
    }
}

/// GNC noise `ω^i = g_{t-1}^i - g̃_{t-1}`. Without a previous iteration the
/// bank is zero.
pub fn gnc_noise(prev_grads: Option<&[Vec<f64>]>, workers: usize, dim: usize) -> Result<NoiseBank> {
    let Some(prev) = prev_grads else {
        return Ok(NoiseBank::zeros(workers, dim));
    };
    if prev.len() != workers {
        return Err(Error::InternalState(format!(
            "{} stored gradients for {workers} workers",
            prev.len()
        )));
    }
    let merged = mean_of(prev)?;
    NoiseBank::new(prev.iter().map(|g| sub(g, &merged)).collect())
}

/// Centered uniform noise. Columns `1..M` are `u^i - ū`; the last column is
/// the negated sum of the others so that the bank sums to exactly zero when
/// accumulated in worker order.
pub fn rnc_noise(workers: usize, dim: usize, rng: &Rng) -> Result<NoiseBank> {
    if workers < 2 {
        return Err(Error::invalid("centered random noise needs at least two workers"));
    }
    let raw: Vec<Vec<f64>> = (0..workers)
        .map(|i| uniform_noise(dim, &rng.derive(i as u64)))
        .collect();
    let mean = mean_of(&raw)?;
    let mut columns: Vec<Vec<f64>> = raw[..workers - 1].iter().map(|u| sub(u, &mean)).collect();
    let mut last = vec![0.0; dim];
    for c in &columns {
        for (a, b) in last.iter_mut().zip(c) {
            *a += b;
        }
    }
    for v in &mut last {
        *v = -*v;
    }
    columns.push(last);
    NoiseBank::new(columns)
}
