use gncsim::diagnostics::{
    fg_similarity, percentile, probe_multipliers, sample_anisotropy, smoothness_probe, worker_spread, ProbeMode,
};
use gncsim::numerics::{norm, streams, GroupingLevel, ParamVector, Rng};
use gncsim::objectives::{quadratic_data, Batch, BatchSampler, Dataset, Objective, QuadraticEnsemble};
use gncsim::optim::{NoiseBank, NoiseKind, NoiseScaling};
use proptest::prelude::*;

fn quad(dim: usize, cond: f64, seed: u64) -> QuadraticEnsemble {
    QuadraticEnsemble::with_condition(dim, 1.0, cond)
        .unwrap()
        .rotated(&Rng::new(seed, streams::BASIS))
        .unwrap()
}

fn batch(indices: Vec<usize>) -> Batch {
    Batch { indices, shard_of: None }
}

#[test]
fn gradient_noise_covariance_recovers_squared_condition() {
    // Per-example gradients A (x - z) with z ~ N(0, I) have covariance A^2.
    let q = quad(16, 100.0, 3);
    let n = 10_000;
    let data = quadratic_data(n, &[0.0; 16], 1.0, &Rng::new(4, streams::DATA)).unwrap();
    let x = vec![0.25; 16];
    let mut grads: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut g = vec![0.0; 16];
            q.example_loss(data.record(i), &x, Some(&mut g));
            g
        })
        .collect();
    let mean: Vec<f64> = (0..16).map(|j| grads.iter().map(|g| g[j]).sum::<f64>() / n as f64).collect();
    for g in &mut grads {
        for (v, m) in g.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let r = sample_anisotropy(&grads, &q.partition(), GroupingLevel::PerLayer, &[50.0]).unwrap();
    let kappa = r.groups[0].kappa.unwrap();
    assert!((5e3..=2e4).contains(&kappa), "kappa = {kappa}");
}

#[test]
fn worker_spread_ratio_follows_the_spectrum() {
    let q = quad(8, 40.0, 5);
    let data = quadratic_data(4, &[0.0; 8], 0.0, &Rng::new(6, streams::DATA)).unwrap();
    let x = vec![0.0; 8];
    let eps = 1e-2;
    let top: Vec<f64> = q.eigenvector(7).iter().map(|v| eps * v).collect();
    let bottom: Vec<f64> = q.eigenvector(0).iter().map(|v| eps * v).collect();
    let shards = [batch(vec![0, 1]), batch(vec![2, 3])];
    let s = worker_spread(&q, &data, &batch(vec![0, 1, 2, 3]), &shards, &x, &[top, bottom]).unwrap();
    assert_eq!(s.center_loss, 0.0);
    let ratio = s.worker_losses[0] / s.worker_losses[1];
    let expect = q.eigenvalues()[7] / q.eigenvalues()[0];
    assert!((ratio - expect).abs() <= 1e-9 * expect, "{ratio} vs {expect}");
}

#[test]
fn worker_spread_permutes_with_workers() {
    let q = quad(5, 10.0, 7);
    let data = quadratic_data(32, &[0.3; 5], 1.0, &Rng::new(8, streams::DATA)).unwrap();
    let sampler = BatchSampler::new(32, 4, 4, Rng::new(9, streams::SAMPLER)).unwrap();
    let it = &sampler.epoch(0)[0];
    let x = q.init(&Rng::new(10, streams::INIT));
    let points: Vec<Vec<f64>> = (0..4).map(|i| q.init(&Rng::new(20 + i, streams::INIT))).collect();
    let a = worker_spread(&q, &data, &it.batch, &it.shards, &x, &points).unwrap();
    let perm = [2, 0, 3, 1];
    let shards: Vec<Batch> = perm.iter().map(|&i| it.shards[i].clone()).collect();
    let pts: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
    let b = worker_spread(&q, &data, &it.batch, &shards, &x, &pts).unwrap();
    assert_eq!(a.center_loss, b.center_loss);
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b.worker_losses[k], a.worker_losses[i]);
    }
    assert_eq!((a.min(), a.max()), (b.min(), b.max()));
}

#[test]
fn full_batch_gradient_has_unit_similarity() {
    let q = quad(6, 20.0, 11);
    let data = quadratic_data(50, &[1.0; 6], 1.0, &Rng::new(12, streams::DATA)).unwrap();
    let x = q.init(&Rng::new(13, streams::INIT));
    let all: Vec<usize> = (0..50).collect();
    let g = gncsim::objectives::grad(&q, &data, &all, &x).unwrap();
    let c = fg_similarity(&q, &data, &x, &g).unwrap().unwrap();
    assert!((c - 1.0).abs() <= 1e-12);
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    assert!((fg_similarity(&q, &data, &x, &neg).unwrap().unwrap() + 1.0).abs() <= 1e-12);
    assert_eq!(fg_similarity(&q, &data, &x, &[0.0; 6]).unwrap(), None);
}

fn centered_data(dim: usize) -> Dataset {
    quadratic_data(16, &vec![0.0; dim], 1.0, &Rng::new(30, streams::DATA)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn probe_beta_is_the_rayleigh_stretch(seed in any::<u64>(), lr in 1e-3f64..1.0) {
        let q = quad(7, 50.0, seed);
        let data = centered_data(7);
        let x = ParamVector::new(q.init(&Rng::new(seed, streams::INIT)), q.partition()).unwrap();
        let u: Vec<f64> = q.init(&Rng::new(seed, 77));
        let p = smoothness_probe(&q, &data, &batch((0..16).collect()), &x, &u, lr, ProbeMode::Plain).unwrap();
        let expect = norm(&q.apply(&u)) / norm(&u);
        prop_assert!((p.beta - expect).abs() <= 1e-6 * expect);
        for (s, m) in p.step_lengths.iter().zip(probe_multipliers()) {
            prop_assert_eq!(*s, m * lr);
        }
    }

    #[test]
    fn percentile_is_monotone_and_bounded(mut v in prop::collection::vec(0.0f64..1e3, 1..30), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(percentile(&v, lo) <= percentile(&v, hi));
        prop_assert_eq!(percentile(&v, 0.0), v[0]);
        prop_assert_eq!(percentile(&v, 100.0), v[v.len() - 1]);
    }
}

#[test]
fn convolved_probe_with_zero_noise_matches_plain() {
    let q = quad(5, 30.0, 40);
    let data = centered_data(5);
    let x = ParamVector::new(q.init(&Rng::new(41, streams::INIT)), q.partition()).unwrap();
    let all = batch((0..16).collect());
    let shards: Vec<Batch> = (0..4).map(|i| batch((4 * i..4 * i + 4).collect())).collect();
    let g = gncsim::objectives::grad(&q, &data, &all.indices, x.as_slice()).unwrap();
    let bank = NoiseBank::zeros(4, 5);
    let plain = smoothness_probe(&q, &data, &all, &x, &g, 0.2, ProbeMode::Plain).unwrap();
    for scaling in [NoiseScaling::Plain, NoiseScaling::FilterWise] {
        let conv = smoothness_probe(
            &q,
            &data,
            &all,
            &x,
            &g,
            0.2,
            ProbeMode::Convolved { bank: &bank, shards: &shards, alpha: 0.5, kind: NoiseKind::Gnc, scaling },
        )
        .unwrap();
        assert!((conv.base_loss - plain.base_loss).abs() <= 1e-12);
        for k in 0..8 {
            assert!((conv.losses[k] - plain.losses[k]).abs() <= 1e-12);
            assert!((conv.grad_distances[k] - plain.grad_distances[k]).abs() <= 1e-12);
        }
    }
}
