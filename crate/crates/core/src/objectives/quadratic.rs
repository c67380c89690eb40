use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Dataset, Objective};
use crate::numerics::{dot, norm, FilterPartition, Rng};
use crate::{Error, Result};

/// `f(z; x) = 1/2 (x - z)^T A (x - z)` with `A = sum_k λ_k q_k q_k^T`.
///
/// `A` is kept in its eigenbasis. Without an explicit basis it is diagonal,
/// which keeps gradient evaluation linear in `l`.
#[derive(Clone, Debug)]
pub struct QuadraticEnsemble {
    eigenvalues: Vec<f64>,
    /// Row-major `l x l`, row `k` is the unit eigenvector of `eigenvalues[k]`.
    basis: Option<Vec<f64>>,
    partition: Arc<FilterPartition>,
}

impl QuadraticEnsemble {
    pub fn diagonal(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("quadratic needs at least one dimension"));
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("curvatures must be finite and non-negative"));
        }
        let partition = Arc::new(FilterPartition::single("x", eigenvalues.len())?);
        Ok(Self {
            eigenvalues,
            basis: None,
            partition,
        })
    }

    /// Geometric spectrum from `lambda_max` down to `lambda_max / cond`.
    pub fn with_condition(dim: usize, lambda_max: f64, cond: f64) -> Result<Self> {
        if !(cond >= 1.0 && lambda_max > 0.0) {
            return Err(Error::invalid("need cond >= 1 and lambda_max > 0"));
        }
        let eigs = (0..dim)
            .map(|k| {
                if dim == 1 {
                    lambda_max
                } else {
                    lambda_max * cond.powf(-(k as f64) / (dim - 1) as f64)
                }
            })
            .collect();
        Self::diagonal(eigs)
    }

    /// Replaces the eigenbasis by a random orthonormal one (Gram-Schmidt on a
    /// Gaussian matrix).
    pub fn rotated(mut self, rng: &Rng) -> Result<Self> {
        let l = self.dim();
        let mut g = rng.generator();
        let mut q: Vec<f64> = (0..l * l).map(|_| g.sample(StandardNormal)).collect();
        for k in 0..l {
            for _pass in 0..2 {
                for j in 0..k {
                    let (head, tail) = q.split_at_mut(k * l);
                    let qj = &head[j * l..(j + 1) * l];
                    let qk = &mut tail[..l];
                    let c = dot(qj, qk);
                    for (a, b) in qk.iter_mut().zip(qj) {
                        *a -= c * b;
                    }
                }
            }
            let row = &mut q[k * l..(k + 1) * l];
            let n = norm(row);
            if n < 1e-8 {
                return Err(Error::Numerical("degenerate random basis".into()));
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        self.basis = Some(q);
        Ok(self)
    }

    /// Starting point uniform on `[-1, 1]^l`.
    pub fn init(&self, rng: &Rng) -> Vec<f64> {
        let mut g = rng.generator();
        (0..self.dim()).map(|_| g.random_range(-1.0..=1.0)).collect()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unit eigenvector of eigenvalue `k`.
    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let l = self.dim();
        match &self.basis {
            Some(q) => q[k * l..(k + 1) * l].to_vec(),
            None => {
                let mut e = vec![0.0; l];
                e[k] = 1.0;
                e
            }
        }
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn condition(&self) -> f64 {
        let min = self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        self.lambda_max() / min
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => self.eigenvalues.iter().zip(v).map(|(l, x)| l * x).collect(),
            Some(q) => {
                let l = self.dim();
                let mut out = vec![0.0; l];
                for (k, &lam) in self.eigenvalues.iter().enumerate() {
                    let row = &q[k * l..(k + 1) * l];
                    let c = lam * dot(row, v);
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += c * r;
                    }
                }
                out
            }
        }
    }

    /// `1/2 d^T A d`.
    pub fn energy(&self, d: &[f64]) -> f64 {
        match &self.basis {
            None => 0.5 * self.eigenvalues.iter().zip(d).fold(0.0, |a, (l, x)| a + l * x * x),
            Some(q) => {
                let l = self.dim();
                0.5 * self.eigenvalues.iter().enumerate().fold(0.0, |a, (k, lam)| {
                    let c = dot(&q[k * l..(k + 1) * l], d);
                    a + lam * c * c
                })
            }
        }
    }
}

impl Objective for QuadraticEnsemble {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn partition(&self) -> Arc<FilterPartition> {
        Arc::clone(&self.partition)
    }

    fn record_width(&self) -> usize {
        self.dim()
    }

    fn example_loss(&self, z: &[f64], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
        if let Some(g) = grad {
            for (gi, ad) in g.iter_mut().zip(self.apply(&d)) {
                *gi += ad;
            }
        }
        self.energy(&d)
    }

    /// Loss is the per-example mean; the gradient uses the closed form
    /// `A (x - mean z)`.
    fn batch_loss(&self, data: &Dataset, indices: &[usize], x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let l = self.dim();
        let n = indices.len() as f64;
        let mut total = 0.0;
        let mut center = vec![0.0; l];
        let mut d = vec![0.0; l];
        for &i in indices {
            let z = data.record(i);
            for ((dk, xk), zk) in d.iter_mut().zip(x).zip(z) {
                *dk = xk - zk;
            }
            total += self.energy(&d);
            for (c, zk) in center.iter_mut().zip(z) {
                *c += zk;
            }
        }
        if let Some(g) = grad {
            let offset: Vec<f64> = x.iter().zip(&center).map(|(xk, c)| xk - c / n).collect();
            g.copy_from_slice(&self.apply(&offset));
        }
        total / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::streams;
    use crate::objectives::testing::{assert_close, finite_difference};
    use crate::objectives::{full_grad, grad, loss, quadratic_data};

    #[test]
    fn loss_examples() {
        let q = QuadraticEnsemble::diagonal(vec![1.0, 1.0]).unwrap();
        let data = Dataset::new(2, vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(loss(&q, &data, &[1], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss(&q, &data, &[0], &[3.0, 4.0]).unwrap(), 12.5);
        assert!(loss(&q, &data, &[2], &[0.0, 0.0]).is_err());
        assert!(loss(&q, &data, &[], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn gradient_vanishes_at_batch_mean() {
        let q = QuadraticEnsemble::with_condition(3, 2.0, 10.0)
            .unwrap()
            .rotated(&Rng::new(1, streams::BASIS))
            .unwrap();
        let data = Dataset::new(3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        let g = grad(&q, &data, &[0, 1], &[0.0, 1.0, 2.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_is_linear_in_x() {
        let q = QuadraticEnsemble::with_condition(4, 3.0, 30.0)
            .unwrap()
            .rotated(&Rng::new(2, streams::BASIS))
            .unwrap();
        let data = quadratic_data(6, &[0.5; 4], 1.0, &Rng::new(2, streams::DATA)).unwrap();
        let x = [0.1, -0.2, 0.3, 0.7];
        let delta = [1.0, 0.5, -2.0, 0.25];
        let xd: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let batch = [0, 2, 5];
        let g0 = grad(&q, &data, &batch, &x).unwrap();
        let g1 = grad(&q, &data, &batch, &xd).unwrap();
        let ad = q.apply(&delta);
        for k in 0..4 {
            assert!(((g1[k] - g0[k]) - ad[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_per_example_accumulation() {
        let q = QuadraticEnsemble::with_condition(5, 1.0, 100.0)
            .unwrap()
            .rotated(&Rng::new(4, streams::BASIS))
            .unwrap();
        let data = quadratic_data(40, &[1.0; 5], 2.0, &Rng::new(4, streams::DATA)).unwrap();
        let x = [0.3, 0.1, -0.4, 2.0, 1.5];
        let closed = full_grad(&q, &data, &x).unwrap();
        let mut brute = vec![0.0; 5];
        for i in 0..data.n() {
            q.example_loss(data.record(i), &x, Some(&mut brute));
        }
        brute.iter_mut().for_each(|v| *v /= data.n() as f64);
        let oracle = q.apply(&x.iter().zip(data.mean()).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert_close(&closed, &brute, 1e-12, 1e-12);
        assert_close(&closed, &oracle, 1e-12, 1e-12);
    }

    #[test]
    fn matches_finite_differences() {
        let q = QuadraticEnsemble::with_condition(6, 4.0, 50.0)
            .unwrap()
            .rotated(&Rng::new(9, streams::BASIS))
            .unwrap();
        let data = quadratic_data(12, &[0.0; 6], 1.0, &Rng::new(9, streams::DATA)).unwrap();
        let x = [1.0, -1.0, 0.5, 0.25, -2.0, 3.0];
        let batch: Vec<usize> = (0..12).collect();
        let g = grad(&q, &data, &batch, &x).unwrap();
        assert_close(&g, &finite_difference(&q, &data, &batch, &x), 1e-5, 1e-6);
    }

    #[test]
    fn rotated_basis_is_orthonormal() {
        let q = QuadraticEnsemble::with_condition(5, 1.0, 10.0)
            .unwrap()
            .rotated(&Rng::new(11, streams::BASIS))
            .unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = dot(&q.eigenvector(i), &q.eigenvector(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-14);
            }
        }
        let top = q.eigenvector(0);
        let at = q.apply(&top);
        for k in 0..5 {
            assert!((at[k] - q.lambda_max() * top[k]).abs() < 1e-14);
        }
        assert!((q.condition() - 10.0).abs() < 1e-12);
    }
}
