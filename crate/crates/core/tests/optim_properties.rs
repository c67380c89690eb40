use std::sync::Arc;

use gncsim::numerics::{
    covariance_spectrum, gram_spectrum, symmetric_eigenvalues, streams, FilterPartition, GroupingLevel,
    ParamGroup, ParamVector, Rng,
};
use gncsim::objectives::{gaussian_blobs, quadratic_data, BatchSampler, Mlp, Objective, QuadraticEnsemble};
use gncsim::optim::{
    gnc_noise, lr_at, merged_grad, perturb, rnc_noise, step, Collapse, Decay, Method, NoiseKind,
    NoiseScaling, OptimConfig, OptimizerState, ScheduleSpec, Warmup,
};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn optim(method: Method, workers: usize, shard: usize, ipe: u64) -> OptimConfig {
    OptimConfig {
        method,
        workers,
        shard_size: shard,
        alpha: 0.5,
        alpha_rnc: 0.5,
        switch_epoch: Some(1),
        momentum: 0.9,
        weight_decay: 1e-4,
        lars: None,
        noise_scaling: NoiseScaling::FilterWise,
        schedule: ScheduleSpec::constant(0.05, ipe),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rnc_bank_sums_to_zero(m in 2usize..40, l in 1usize..60, seed in any::<u64>()) {
        let b = rnc_noise(m, l, &Rng::new(seed, streams::RNC)).unwrap();
        prop_assert_eq!(b.sum_norm(), 0.0);
    }

    #[test]
    fn gnc_bank_sums_to_zero(m in 1usize..20, l in 1usize..40, seed in any::<u64>()) {
        let r = Rng::new(seed, 9);
        let grads: Vec<Vec<f64>> = (0..m)
            .map(|i| gncsim::numerics::uniform_noise(l, &r.derive(i as u64)).iter().map(|v| 1e3 * (v - 0.3)).collect())
            .collect();
        let b = gnc_noise(Some(&grads), m, l).unwrap();
        prop_assert!(b.sum_norm() <= 1e-10 * b.max_norm().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn gram_matches_dense_covariance(m in 2usize..9, l in 1usize..33, seed in any::<u64>()) {
        let r = Rng::new(seed, 4);
        let cols: Vec<Vec<f64>> = (0..m).map(|i| gncsim::numerics::uniform_noise(l, &r.derive(i as u64))).collect();
        let gram = gram_spectrum(&cols).unwrap();
        let dense = DMatrix::from_fn(l, l, |i, j| cols.iter().map(|c| c[i] * c[j]).sum::<f64>() / m as f64);
        let mut oracle: Vec<f64> = SymmetricEigen::new(dense).eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        let ours: Vec<f64> = gram.values().iter().rev().copied().collect();
        let ours_dense: Vec<f64> = covariance_spectrum(&cols).unwrap().values().iter().rev().copied().collect();
        for i in 0..l.min(m) {
            prop_assert!((ours[i] - oracle[i]).abs() <= 1e-8 * oracle[0]);
            prop_assert!((ours_dense[i] - oracle[i]).abs() <= 1e-8 * oracle[0]);
        }
    }

    #[test]
    fn jacobi_matches_nalgebra(n in 1usize..12, seed in any::<u64>()) {
        let v = gncsim::numerics::uniform_noise(n * n, &Rng::new(seed, 5));
        let a = DMatrix::from_fn(n, n, |i, j| v[i * n + j] + v[j * n + i] - 1.0);
        let flat: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
        let mut ours = symmetric_eigenvalues(&flat, n).unwrap();
        ours.sort_by(f64::total_cmp);
        let mut oracle: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for (x, y) in ours.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn perturbation_leaves_parameters_alone(alpha in 0.0f64..2.0, lr in 0.0f64..1.0, seed in any::<u64>()) {
        let p = Arc::new(FilterPartition::new(
            vec![ParamGroup::new("a/0", "a", 0..3), ParamGroup::new("a/1", "a", 3..5), ParamGroup::new("b", "b", 5..6)],
            GroupingLevel::PerFilter,
        ).unwrap());
        let x = ParamVector::new(gncsim::numerics::uniform_noise(6, &Rng::new(seed, 1)), p).unwrap();
        let before = x.clone();
        let w = gncsim::numerics::uniform_noise(6, &Rng::new(seed, 2));
        for scaling in [NoiseScaling::Plain, NoiseScaling::FilterWise] {
            for kind in [NoiseKind::Gnc, NoiseKind::Rnc] {
                let y = perturb(&x, &w, alpha, lr, scaling, kind);
                prop_assert_eq!(y.len(), 6);
            }
        }
        prop_assert_eq!(x, before);
    }
}

fn mlp_setup() -> (Mlp, gncsim::objectives::Dataset, BatchSampler) {
    let mlp = Mlp::new(5, &[7], 3).unwrap();
    let data = gaussian_blobs(256, 5, 3, 2.0, &Rng::new(1, streams::DATA)).unwrap();
    let sampler = BatchSampler::new(256, 8, 4, Rng::new(2, streams::SAMPLER)).unwrap();
    (mlp, data, sampler)
}

#[test]
fn merge_does_not_depend_on_thread_count() {
    let (mlp, data, sampler) = mlp_setup();
    let it = &sampler.epoch(0)[0];
    let points: Vec<Vec<f64>> = (0..4).map(|i| mlp.init(&Rng::new(i, streams::INIT))).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| merged_grad(&mlp, &data, &it.shards, &points).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.merged.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), many.merged.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(one.losses, many.losses);
}

#[test]
fn step_evaluates_around_unmodified_parameters() {
    let (mlp, data, sampler) = mlp_setup();
    for method in [Method::Baseline, Method::Gnc, Method::Rnc, Method::GncToRnc] {
        let cfg = optim(method, 4, 8, sampler.iterations_per_epoch() as u64);
        let x0 = ParamVector::new(mlp.init(&Rng::new(3, streams::INIT)), mlp.partition()).unwrap();
        let mut state = OptimizerState::new(x0, 4);
        for epoch in 0..2 {
            for it in sampler.epoch(epoch) {
                let before = state.x.clone();
                let velocity = state.velocity.clone();
                let tr = step(&mut state, &cfg, &mlp, &data, &it, &Rng::new(4, streams::RNC)).unwrap();
                assert_eq!(tr.x, before);
                // With all-zero noise every worker sits exactly at x_t.
                if tr.bank.as_ref().is_none_or(|b| b.max_norm() == 0.0) {
                    assert!(tr.points.iter().all(|p| p == &before.values));
                }
                let expected: Vec<f64> = velocity
                    .iter()
                    .zip(&tr.eval.merged)
                    .zip(&before.values)
                    .map(|((v, g), x)| 0.9 * v - 0.05 * (g + 1e-4 * x))
                    .collect();
                assert_eq!(state.velocity, expected);
            }
        }
        assert_eq!(state.t, 2 * sampler.iterations_per_epoch() as u64);
    }
}

#[test]
fn gnc_noise_is_zero_on_the_first_iteration() {
    let (mlp, data, sampler) = mlp_setup();
    let cfg = optim(Method::Gnc, 4, 8, 8);
    let x0 = ParamVector::new(mlp.init(&Rng::new(3, streams::INIT)), mlp.partition()).unwrap();
    let mut state = OptimizerState::new(x0, 4);
    let its = sampler.epoch(0);
    let first = step(&mut state, &cfg, &mlp, &data, &its[0], &Rng::new(4, streams::RNC)).unwrap();
    assert_eq!(first.bank.unwrap().max_norm(), 0.0);
    let second = step(&mut state, &cfg, &mlp, &data, &its[1], &Rng::new(4, streams::RNC)).unwrap();
    let bank = second.bank.unwrap();
    for (i, col) in bank.columns().iter().enumerate() {
        let want: Vec<f64> = first.eval.grads[i].iter().zip(&first.eval.merged).map(|(g, m)| g - m).collect();
        assert_eq!(col, &want);
    }
}

fn cifar_oracle(t: u64, ipe: u64) -> f64 {
    let warm = 10 * ipe;
    if t <= warm {
        return 0.025 + (3.2 - 0.025) * (t - 1) as f64 / (warm - 1) as f64;
    }
    let e = (t - 1) / ipe;
    3.2 * 0.1f64.powi((e >= 80) as i32 + (e >= 120) as i32)
}

fn poly_oracle(t: u64, ipe: u64, total: u64) -> f64 {
    let warm = 5 * ipe;
    if t <= warm {
        return 1.0 + 22.0 * (t - 1) as f64 / (warm - 1) as f64;
    }
    let g = 23.0 * (1.0 - t as f64 / total as f64).powi(2);
    if (t - 1) / ipe >= 80 {
        g / 5.0
    } else {
        g
    }
}

#[test]
fn schedules_match_closed_forms_everywhere() {
    let ipe = 12;
    let cifar = ScheduleSpec {
        base_lr: 3.2,
        warmup: Some(Warmup { epochs: 10, start_lr: 0.025 }),
        decay: Decay::Step { milestones: vec![80, 120], factor: 0.1 },
        iters_per_epoch: ipe,
    };
    for t in 1..=160 * ipe {
        assert_eq!(lr_at(&cifar, t), cifar_oracle(t, ipe), "t = {t}");
    }
    let ipe = 39;
    let total = 90 * ipe;
    let poly = ScheduleSpec {
        base_lr: 23.0,
        warmup: Some(Warmup { epochs: 5, start_lr: 1.0 }),
        decay: Decay::Polynomial { total, power: 2, collapse: Some(Collapse { epoch: 80, divisor: 5.0 }) },
        iters_per_epoch: ipe,
    };
    for t in 1..=total {
        assert_eq!(lr_at(&poly, t), poly_oracle(t, ipe, total), "t = {t}");
    }
}

#[test]
fn quadratic_merge_matches_brute_force() {
    let q = QuadraticEnsemble::with_condition(6, 3.0, 50.0).unwrap().rotated(&Rng::new(8, streams::BASIS)).unwrap();
    let data = quadratic_data(64, &[0.5; 6], 1.0, &Rng::new(9, streams::DATA)).unwrap();
    let sampler = BatchSampler::new(64, 4, 4, Rng::new(10, streams::SAMPLER)).unwrap();
    let it = &sampler.epoch(0)[0];
    let x = q.init(&Rng::new(11, streams::INIT));
    let e = merged_grad(&q, &data, &it.shards, &vec![x.clone(); 4]).unwrap();
    let mut brute = vec![0.0; 6];
    for &i in &it.batch.indices {
        q.example_loss(data.record(i), &x, Some(&mut brute));
    }
    for (b, m) in brute.iter_mut().zip(&e.merged) {
        *b /= 16.0;
        assert!((*b - m).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn config_rejects_inconsistent_switch() {
    let mut c = optim(Method::GncToRnc, 4, 8, 8);
    c.switch_epoch = None;
    assert!(c.validate(Some(10)).is_err());
}
