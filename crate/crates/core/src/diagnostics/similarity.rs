use crate::numerics::{cosine_similarity, norm};
use crate::objectives::{full_grad, loss, Batch, Dataset, Objective};
use crate::{Error, Result};

/// Cosine between the unperturbed full-dataset gradient at `x` and the
/// gradient the method actually used. `None` when either vector is zero.
pub fn fg_similarity(obj: &dyn Objective, data: &Dataset, x: &[f64], g_used: &[f64]) -> Result<Option<f64>> {
    let full = full_grad(obj, data, x)?;
    if norm(&full) == 0.0 || norm(g_used) == 0.0 {
        return Ok(None);
    }
    cosine_similarity(&full, g_used).map(Some)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerSpread {
    /// Loss of the large batch at the unperturbed point.
    pub center_loss: f64,
    /// Loss of each worker's shard at its perturbed point.
    pub worker_losses: Vec<f64>,
}

impl WorkerSpread {
    pub fn min(&self) -> f64 {
        self.worker_losses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.worker_losses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn worker_spread<P: AsRef<[f64]>>(
    obj: &dyn Objective,
    data: &Dataset,
    batch: &Batch,
    shards: &[Batch],
    x: &[f64],
    points: &[P],
) -> Result<WorkerSpread> {
    if shards.len() != points.len() {
        return Err(Error::invalid(format!(
            "{} shards for {} worker points",
            shards.len(),
            points.len()
        )));
    }
    let center_loss = loss(obj, data, &batch.indices, x)?;
    let worker_losses = shards
        .iter()
        .zip(points)
        .map(|(s, p)| loss(obj, data, &s.indices, p.as_ref()))
        .collect::<Result<_>>()?;
    Ok(WorkerSpread { center_loss, worker_losses })
}
