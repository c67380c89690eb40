//! Differentiable objectives with analytic gradients, synthetic data and
//! deterministic mini-batch sharding.

mod container;
mod dataset;
mod logistic;
mod mlp;
mod quadratic;
mod sampler;

use std::sync::Arc;

pub use container::{read_dataset, write_dataset, DatasetMeta};
pub use dataset::{gaussian_blobs, quadratic_data, Batch, Dataset};
pub use logistic::Logistic;
pub use mlp::Mlp;
pub use quadratic::QuadraticEnsemble;
pub use sampler::{sample_batches, BatchSampler, Iteration};

use crate::numerics::{FilterPartition, Rng};
use crate::{Error, Result};

/// A per-example loss `f(z; x)` with its analytic gradient.
pub trait Objective: Send + Sync {
    /// Parameter dimension `l`.
    fn dim(&self) -> usize;

    /// Per-filter partition of the parameters; layers are its coarsening.
    fn partition(&self) -> Arc<FilterPartition>;

    /// Number of reals in one dataset record.
    fn record_width(&self) -> usize;

    /// Checks that every record of `data` is valid input for this objective.
    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.width() != self.record_width() {
            return Err(Error::invalid(format!(
                "dataset records have width {}, objective expects {}",
                data.width(),
                self.record_width()
            )));
        }
        Ok(())
    }

    /// Loss of one example. When `grad` is given, the example's gradient is
    /// added into it.
    fn example_loss(&self, z: &[f64], x: &[f64], grad: Option<&mut [f64]>) -> f64;

    /// Mean loss over `indices`, writing the mean gradient into `grad` when
    /// given. Examples are visited in index order.
    fn batch_loss(
        &self,
        data: &Dataset,
        indices: &[usize],
        x: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        for &i in indices {
            total += self.example_loss(data.record(i), x, grad.as_deref_mut());
        }
        let n = indices.len() as f64;
        if let Some(g) = grad {
            for v in g.iter_mut() {
                *v /= n;
            }
        }
        total / n
    }
}

fn check_batch(obj: &dyn Objective, data: &Dataset, indices: &[usize], x: &[f64]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(Error::invalid(format!(
            "example index {i} out of range for {} records",
            data.n()
        )));
    }
    if x.len() != obj.dim() {
        return Err(Error::invalid(format!(
            "{} parameters, objective has {}",
            x.len(),
            obj.dim()
        )));
    }
    if data.width() != obj.record_width() {
        return Err(Error::invalid("dataset does not match objective"));
    }
    Ok(())
}

/// Mean per-example loss of the batch.
pub fn loss(obj: &dyn Objective, data: &Dataset, batch: &[usize], x: &[f64]) -> Result<f64> {
    check_batch(obj, data, batch, x)?;
    Ok(obj.batch_loss(data, batch, x, None))
}

/// Mean per-example gradient of the batch.
pub fn grad(obj: &dyn Objective, data: &Dataset, batch: &[usize], x: &[f64]) -> Result<Vec<f64>> {
    check_batch(obj, data, batch, x)?;
    let mut g = vec![0.0; obj.dim()];
    obj.batch_loss(data, batch, x, Some(&mut g));
    Ok(g)
}

pub fn loss_and_grad(
    obj: &dyn Objective,
    data: &Dataset,
    batch: &[usize],
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_batch(obj, data, batch, x)?;
    let mut g = vec![0.0; obj.dim()];
    let l = obj.batch_loss(data, batch, x, Some(&mut g));
    Ok((l, g))
}

/// Gradient over the whole dataset.
pub fn full_grad(obj: &dyn Objective, data: &Dataset, x: &[f64]) -> Result<Vec<f64>> {
    if data.n() == 0 {
        return Err(Error::invalid("full gradient of an empty dataset"));
    }
    let all: Vec<usize> = (0..data.n()).collect();
    grad(obj, data, &all, x)
}

/// The model zoo behind a single type.
#[derive(Clone, Debug)]
pub enum Model {
    Quadratic(QuadraticEnsemble),
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Model {
    pub fn init(&self, rng: &Rng) -> Vec<f64> {
        match self {
            Model::Quadratic(q) => q.init(rng),
            Model::Logistic(l) => l.init(rng),
            Model::Mlp(m) => m.init(rng),
        }
    }

    /// Classification accuracy; `None` for the quadratic family.
    pub fn accuracy(&self, data: &Dataset, x: &[f64]) -> Option<f64> {
        match self {
            Model::Quadratic(_) => None,
            Model::Logistic(l) => Some(l.accuracy(data, x)),
            Model::Mlp(m) => Some(m.accuracy(data, x)),
        }
    }

    fn inner(&self) -> &dyn Objective {
        match self {
            Model::Quadratic(q) => q,
            Model::Logistic(l) => l,
            Model::Mlp(m) => m,
        }
    }
}

impl Objective for Model {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn partition(&self) -> Arc<FilterPartition> {
        self.inner().partition()
    }

    fn record_width(&self) -> usize {
        self.inner().record_width()
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        self.inner().check_dataset(data)
    }

    fn example_loss(&self, z: &[f64], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        self.inner().example_loss(z, x, grad)
    }

    fn batch_loss(&self, data: &Dataset, indices: &[usize], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        self.inner().batch_loss(data, indices, x, grad)
    }
}

/// Softmax cross-entropy of `logits` against `label`; when `dlogits` is given
/// it receives `softmax - onehot`.
pub(crate) fn softmax_xent(logits: &[f64], label: usize, dlogits: Option<&mut [f64]>) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    let log_z = max + sum.ln();
    if let Some(d) = dlogits {
        for (k, (dk, &z)) in d.iter_mut().zip(logits).enumerate() {
            *dk = (z - log_z).exp() - if k == label { 1.0 } else { 0.0 };
        }
    }
    log_z - logits[label]
}

pub(crate) fn check_labels(data: &Dataset, features: usize, classes: usize) -> Result<()> {
    for i in 0..data.n() {
        let y = data.record(i)[features];
        if !(y >= 0.0 && y < classes as f64 && y.fract() == 0.0) {
            return Err(Error::invalid(format!(
                "record {i} has label {y}, expected an integer in [0, {classes})"
            )));
        }
    }
    Ok(())
}
