use std::sync::Arc;

use super::{Dataset, Mlp, Objective};
use crate::numerics::{FilterPartition, Rng};
use crate::Result;

/// Multinomial logistic regression: a classifier without hidden layers.
#[derive(Clone, Debug)]
pub struct Logistic(Mlp);

impl Logistic {
    pub fn new(features: usize, classes: usize) -> Result<Self> {
        Mlp::new(features, &[], classes).map(Logistic)
    }

    pub fn init(&self, rng: &Rng) -> Vec<f64> {
        self.0.init(rng)
    }

    pub fn accuracy(&self, data: &Dataset, x: &[f64]) -> f64 {
        self.0.accuracy(data, x)
    }

    pub fn classes(&self) -> usize {
        self.0.classes()
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn partition(&self) -> Arc<FilterPartition> {
        self.0.partition()
    }

    fn record_width(&self) -> usize {
        self.0.record_width()
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        self.0.check_dataset(data)
    }

    fn example_loss(&self, z: &[f64], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        self.0.example_loss(z, x, grad)
    }
}
