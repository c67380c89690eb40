use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{NoiseKind, OptimConfig};
use super::noise::{gnc_noise, rnc_noise, NoiseBank};
use super::schedule::lr_at;
use super::update::{apply_update, perturb};
use crate::numerics::{mean_of, ParamVector, Rng};
use crate::objectives::{loss_and_grad, Batch, Dataset, Iteration, Objective};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerSlot {
    pub id: usize,
    /// Shard gradient of the previous iteration, the GNC noise source.
    pub prev_grad: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub x: ParamVector,
    pub velocity: Vec<f64>,
    pub workers: Vec<WorkerSlot>,
    /// Completed iterations.
    pub t: u64,
}

impl OptimizerState {
    pub fn new(x: ParamVector, workers: usize) -> Self {
        let l = x.len();
        Self {
            x,
            velocity: vec![0.0; l],
            workers: (0..workers).map(|id| WorkerSlot { id, prev_grad: None }).collect(),
            t: 0,
        }
    }

    fn prev_grads(&self) -> Option<Vec<Vec<f64>>> {
        self.workers.iter().map(|w| w.prev_grad.clone()).collect()
    }

    /// SHA-256 over everything that influences future iterations.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.t.to_le_bytes());
        for v in self.x.values.iter().chain(&self.velocity) {
            h.update(v.to_le_bytes());
        }
        for w in &self.workers {
            match &w.prev_grad {
                None => h.update([0u8]),
                Some(g) => {
                    h.update([1u8]);
                    for v in g {
                        h.update(v.to_le_bytes());
                    }
                }
            }
        }
        h.finalize().into()
    }
}

/// Shard losses and gradients at the worker points, and their mean gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerEval {
    pub losses: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
    pub merged: Vec<f64>,
}

/// Evaluates every worker in parallel; the merge runs in worker order so the
/// result does not depend on the thread count.
pub fn merged_grad<P: AsRef<[f64]> + Sync>(
    obj: &dyn Objective,
    data: &Dataset,
    shards: &[Batch],
    points: &[P],
) -> Result<WorkerEval> {
    if shards.len() != points.len() || shards.is_empty() {
        return Err(Error::invalid(format!(
            "{} shards for {} worker points",
            shards.len(),
            points.len()
        )));
    }
    let evals: Vec<(f64, Vec<f64>)> = shards
        .par_iter()
        .zip(points.par_iter())
        .map(|(s, p)| loss_and_grad(obj, data, &s.indices, p.as_ref()))
        .collect::<Result<_>>()?;
    let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = evals.into_iter().unzip();
    let merged = mean_of(&grads)?;
    Ok(WorkerEval { losses, grads, merged })
}

/// What one iteration saw, for diagnostics.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub t: u64,
    pub epoch: u64,
    pub lr: f64,
    /// Parameters before the update.
    pub x: ParamVector,
    pub noise: Option<(NoiseKind, f64)>,
    /// `None` for plain DP-SGD.
    pub bank: Option<NoiseBank>,
    pub points: Vec<Vec<f64>>,
    pub eval: WorkerEval,
    pub lars_skipped: Vec<String>,
}

/// Runs iteration `state.t + 1` on the shards of `it`. Random noise for
/// iteration `t` is drawn from `rnc.derive(t)`.
pub fn step(
    state: &mut OptimizerState,
    config: &OptimConfig,
    obj: &dyn Objective,
    data: &Dataset,
    it: &Iteration,
    rnc: &Rng,
) -> Result<StepTrace> {
    let m = config.workers;
    if it.shards.len() != m || state.workers.len() != m {
        return Err(Error::InternalState(format!(
            "{} shards and {} worker slots for {m} workers",
            it.shards.len(),
            state.workers.len()
        )));
    }
    let l = state.x.len();
    let t = state.t + 1;
    let epoch = (t - 1) / config.schedule.iters_per_epoch;
    let lr = lr_at(&config.schedule, t);
    let noise = config.noise_source(epoch);

    let (bank, points) = match noise {
        None => (None, vec![state.x.values.clone(); m]),
        Some((kind, alpha)) => {
            let bank = match kind {
                NoiseKind::Gnc => gnc_noise(state.prev_grads().as_deref(), m, l)?,
                NoiseKind::Rnc => rnc_noise(m, l, &rnc.derive(t))?,
            };
            let points = bank
                .columns()
                .iter()
                .map(|w| perturb(&state.x, w, alpha, lr, config.noise_scaling, kind))
                .collect();
            (Some(bank), points)
        }
    };

    let eval = merged_grad(obj, data, &it.shards, &points)?;
    let x_before = state.x.clone();
    for (slot, g) in state.workers.iter_mut().zip(&eval.grads) {
        slot.prev_grad = Some(g.clone());
    }
    let report = apply_update(&mut state.x, &mut state.velocity, &eval.merged, config, lr);
    state.t = t;

    Ok(StepTrace {
        t,
        epoch,
        lr,
        x: x_before,
        noise,
        bank,
        points,
        eval,
        lars_skipped: report.lars_skipped,
    })
}
