use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::numerics::Rng;
use crate::{Error, Result};

/// `n` records of `width` reals, row-major.
///
/// Classification records carry the features followed by the class label as a
/// real; quadratic-ensemble records are the centers `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    width: usize,
    records: Vec<f64>,
}

impl Dataset {
    pub fn new(width: usize, records: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid("dataset records must have positive width"));
        }
        if records.is_empty() || records.len() % width != 0 {
            return Err(Error::invalid(format!(
                "{} reals do not form a non-empty set of width-{width} records",
                records.len()
            )));
        }
        if records.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self { width, records })
    }

    pub fn n(&self) -> usize {
        self.records.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn record(&self, i: usize) -> &[f64] {
        &self.records[i * self.width..(i + 1) * self.width]
    }

    /// The first `n` records and the rest.
    pub fn split(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n > self.n() {
            return Err(Error::invalid(format!("cannot split {} records at {n}", self.n())));
        }
        let (a, b) = self.records.split_at(n * self.width);
        Ok((
            Dataset { width: self.width, records: a.to_vec() },
            Dataset { width: self.width, records: b.to_vec() },
        ))
    }

    pub fn raw(&self) -> &[f64] {
        &self.records
    }

    /// Coordinate-wise mean of the records, in index order.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.width];
        for i in 0..self.n() {
            for (a, v) in acc.iter_mut().zip(self.record(i)) {
                *a += v;
            }
        }
        let n = self.n() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Indices into a dataset, optionally tagged with the `(iteration, worker)`
/// shard they form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub shard_of: Option<(u64, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Centers `z = mean + std * N(0, I)` for the quadratic ensemble.
pub fn quadratic_data(n: usize, mean: &[f64], std: f64, rng: &Rng) -> Result<Dataset> {
    if n == 0 || mean.is_empty() {
        return Err(Error::invalid("quadratic data needs n >= 1 and dim >= 1"));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::invalid(format!("noise scale {std} must be finite and >= 0")));
    }
    let mut g = rng.generator();
    let mut records = Vec::with_capacity(n * mean.len());
    for _ in 0..n {
        for &m in mean {
            let e: f64 = g.sample(StandardNormal);
            records.push(m + std * e);
        }
    }
    Dataset::new(mean.len(), records)
}

/// Gaussian class blobs: class `c` has center `separation * N(0, I)` and its
/// examples add unit Gaussian noise. Labels cycle `0, 1, .., classes - 1`.
pub fn gaussian_blobs(
    n: usize,
    features: usize,
    classes: usize,
    separation: f64,
    rng: &Rng,
) -> Result<Dataset> {
    if n == 0 || features == 0 || classes < 2 {
        return Err(Error::invalid(
            "blob data needs n >= 1, features >= 1, classes >= 2",
        ));
    }
    let mut g = rng.generator();
    let centers: Vec<f64> = (0..classes * features)
        .map(|_| separation * g.sample::<f64, _>(StandardNormal))
        .collect();
    let mut records = Vec::with_capacity(n * (features + 1));
    for i in 0..n {
        let c = i % classes;
        for f in 0..features {
            let e: f64 = g.sample(StandardNormal);
            records.push(centers[c * features + f] + e);
        }
        records.push(c as f64);
    }
    Dataset::new(features + 1, records)
}
