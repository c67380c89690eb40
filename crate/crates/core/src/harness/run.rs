use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, FgCadence, ObjectiveSpec};
use super::metrics::{Header, MetricsWriter, Status, StepRecord, TerminalRecord};
use crate::diagnostics::{anisotropy, fg_similarity, smoothness_probe, worker_spread, ProbeMode};
use crate::numerics::{norm, streams, ParamVector, Rng};
use crate::objectives::{
    gaussian_blobs, loss, quadratic_data, read_dataset, write_dataset, BatchSampler, Dataset,
    DatasetMeta, Iteration, Logistic, Mlp, Model, Objective, QuadraticEnsemble,
};
use crate::optim::{step, OptimizerState, StepTrace, WorkerSlot};
use crate::{Error, Result};

/// Losses above this, or non-finite, count towards divergence.
pub const DIVERGENCE_LOSS: f64 = 1e12;
/// Consecutive bad iterations that end a run.
pub const DIVERGENCE_PATIENCE: u32 = 3;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const DIGEST_FILE: &str = "metrics.sha256";
pub const CONFIG_FILE: &str = "config.txt";
pub const DATASET_FILE: &str = "dataset.gnc";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Everything a run derives from its configuration before the first step.
pub struct Setup {
    pub model: Model,
    pub train: Dataset,
    pub eval: Option<Dataset>,
    pub meta: DatasetMeta,
    pub x0: ParamVector,
    pub sampler: BatchSampler,
    pub rnc: Rng,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let seeds = cfg.seeds;
    let data_rng = Rng::new(seeds.data, streams::DATA);
    let model = match &cfg.objective {
        ObjectiveSpec::Quadratic { dim, cond, lambda_max, rotate } => {
            let mut q = QuadraticEnsemble::with_condition(*dim, *lambda_max, *cond)?;
            if *rotate {
                q = q.rotated(&Rng::new(seeds.data, streams::BASIS))?;
            }
            Model::Quadratic(q)
        }
        ObjectiveSpec::Logistic => Model::Logistic(Logistic::new(cfg.data.features, cfg.data.classes)?),
        ObjectiveSpec::Mlp { hidden } => Model::Mlp(Mlp::new(cfg.data.features, hidden, cfg.data.classes)?),
    };

    let (train, eval, meta) = match &cfg.data.path {
        Some(p) => {
            let (d, meta) = read_dataset(p)?;
            (d, None, meta)
        }
        None => {
            let d = &cfg.data;
            let total = d.n + d.eval_n;
            let (all, meta) = match &cfg.objective {
                ObjectiveSpec::Quadratic { dim, .. } => (
                    quadratic_data(total, &vec![0.0; *dim], d.noise, &data_rng)?,
                    DatasetMeta::with_family("quadratic", [("dim", dim.to_string()), ("noise", d.noise.to_string())]),
                ),
                _ => (
                    gaussian_blobs(total, d.features, d.classes, d.separation, &data_rng)?,
                    DatasetMeta::with_family(
                        "blobs",
                        [
                            ("features", d.features.to_string()),
                            ("classes", d.classes.to_string()),
                            ("separation", d.separation.to_string()),
                        ],
                    ),
                ),
            };
            let (train, eval) = all.split(d.n)?;
            (train, (d.eval_n > 0).then_some(eval), meta)
        }
    };
    model.check_dataset(&train)?;
    if let Some(e) = &eval {
        model.check_dataset(e)?;
    }
    let x0 = ParamVector::new(model.init(&Rng::new(seeds.init, streams::INIT)), model.partition())?;
    let sampler = BatchSampler::new(
        train.n(),
        cfg.optim.shard_size,
        cfg.optim.workers,
        Rng::new(seeds.sampler, streams::SAMPLER),
    )?;
    Ok(Setup {
        model,
        train,
        eval,
        meta,
        x0,
        sampler,
        rnc: Rng::new(seeds.rnc, streams::RNC),
    })
}

/// Which diagnostics to compute for one record.
#[derive(Clone, Copy, Debug, Default)]
pub struct Due {
    pub anisotropy: bool,
    pub spread: bool,
    pub probe: bool,
    pub fg: bool,
}

impl Due {
    pub fn all() -> Self {
        Due { anisotropy: true, spread: true, probe: true, fg: true }
    }

    fn at(cfg: &ExperimentConfig, t: u64, epoch_end: bool) -> Self {
        let d = &cfg.diag;
        let periodic = d.every > 0 && t % d.every == 0;
        Due {
            anisotropy: periodic && d.anisotropy,
            spread: periodic && d.spread,
            probe: periodic && d.probe,
            fg: match d.fg {
                FgCadence::Off => false,
                FgCadence::Epoch => epoch_end,
                FgCadence::Every(k) => t % k == 0,
            },
        }
    }
}

/// Step record for `trace` with the diagnostics in `due`. Diagnostics only
/// read the trace, the iteration and the datasets.
pub fn diagnose(
    cfg: &ExperimentConfig,
    setup: &Setup,
    it: &Iteration,
    trace: &StepTrace,
    train_loss: f64,
    due: Due,
) -> Result<StepRecord> {
    let obj = &setup.model;
    let x = trace.x.as_slice();
    let mut rec = StepRecord {
        t: trace.t,
        epoch: trace.epoch,
        lr: trace.lr,
        train_loss: Some(train_loss).filter(|v| v.is_finite()),
        lars_skipped: trace.lars_skipped.len() as u64,
        ..Default::default()
    };
    if let Some(bank) = &trace.bank {
        rec.noise_mean_norm = Some(bank.mean_norm());
        rec.noise_max_norm = Some(bank.max_norm());
        rec.noise_zero_sum = Some(bank.zero_sum_residual());
    }
    let finite = x.iter().all(|v| v.is_finite()) && train_loss.is_finite();
    if !finite {
        return Ok(rec);
    }
    if due.anisotropy {
        if let Some(bank) = trace.bank.as_ref().filter(|b| b.workers() >= 3) {
            let r = anisotropy(bank, setup.x0.partition(), cfg.diag.grouping, &cfg.diag.percentiles)?;
            rec.kappa = Some(r.groups.iter().map(|g| g.kappa).collect());
            rec.eig_percentiles = Some(r.groups.into_iter().map(|g| g.percentiles).collect());
        }
    }
    if due.spread {
        let s = worker_spread(obj, &setup.train, &it.batch, &it.shards, x, &trace.points)?;
        rec.spread_center = Some(s.center_loss);
        rec.spread_min = Some(s.min());
        rec.spread_max = Some(s.max());
    }
    if due.fg {
        rec.fg_cosine = fg_similarity(obj, &setup.train, x, &trace.eval.merged)?;
    }
    if due.probe && norm(&trace.eval.merged) > 0.0 && trace.lr > 0.0 {
        let mode = match (&trace.bank, trace.noise) {
            (Some(bank), Some((kind, alpha))) => ProbeMode::Convolved {
                bank,
                shards: &it.shards,
                alpha,
                kind,
                scaling: cfg.optim.noise_scaling,
            },
            _ => ProbeMode::Plain,
        };
        let p = smoothness_probe(obj, &setup.train, &it.batch, &trace.x, &trace.eval.merged, trace.lr, mode)?;
        rec.probe_loss_range = Some(p.loss_range());
        rec.probe_grad_range = Some(p.grad_range());
        rec.probe_beta = Some(p.beta);
    }
    Ok(rec)
}

/// Optimizer state at an epoch boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub x: Vec<f64>,
    pub velocity: Vec<f64>,
    pub prev_grads: Option<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn of(state: &OptimizerState) -> Self {
        Checkpoint {
            t: state.t,
            x: state.x.values.clone(),
            velocity: state.velocity.clone(),
            prev_grads: state.workers.iter().map(|w| w.prev_grad.clone()).collect(),
        }
    }

    pub fn restore(&self, x0: &ParamVector, workers: usize) -> Result<OptimizerState> {
        let l = x0.len();
        let grads_ok = self
            .prev_grads
            .as_ref()
            .is_none_or(|g| g.len() == workers && g.iter().all(|v| v.len() == l));
        if self.x.len() != l || self.velocity.len() != l || !grads_ok {
            return Err(Error::invalid("checkpoint does not match the configured model"));
        }
        Ok(OptimizerState {
            x: ParamVector::new(self.x.clone(), x0.partition().clone())?,
            velocity: self.velocity.clone(),
            workers: (0..workers)
                .map(|id| WorkerSlot {
                    id,
                    prev_grad: self.prev_grads.as_ref().map(|g| g[id].clone()),
                })
                .collect(),
            t: self.t,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::InternalState(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_owned(), reason: e.to_string() })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    /// Hex SHA-256 of the metrics file.
    pub digest: String,
    pub terminal: TerminalRecord,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.terminal.record == Status::Diverged
    }
}

fn is_bad(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

/// Runs the configured experiment into `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let s = setup(cfg)?;
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, cfg.map().canonical()).map_err(|e| Error::io(&config_path, e))?;
    write_dataset(&dir.join(DATASET_FILE), &s.train, &s.meta)?;

    let groups = s.x0.partition().at_level(cfg.diag.grouping);
    let header = Header::new(
        groups.groups().iter().map(|g| g.name.clone()).collect(),
        cfg.diag.percentiles.clone(),
    );
    let metrics_path = dir.join(METRICS_FILE);
    let mut writer = MetricsWriter::create(&metrics_path, &header)?;

    let mut state = OptimizerState::new(s.x0.clone(), cfg.optim.workers);
    let mut trajectory = Sha256::new();
    hash_params(&mut trajectory, &state.x.values);
    let ipe = cfg.iterations_per_epoch();
    let mut bad = 0;
    let mut status = Status::Finished;
    let mut last_eval = (None, None);

    'epochs: for epoch in 0..cfg.epochs {
        let iterations = s.sampler.epoch(epoch);
        for (k, it) in iterations.iter().enumerate() {
            let train_loss = loss(&s.model, &s.train, &it.batch.indices, state.x.as_slice())?;
            let trace = step(&mut state, &cfg.optim, &s.model, &s.train, it, &s.rnc)?;
            hash_params(&mut trajectory, &state.x.values);
            bad = if is_bad(train_loss) { bad + 1 } else { 0 };
            let epoch_end = k as u64 + 1 == ipe;
            let diverged = bad >= DIVERGENCE_PATIENCE;
            if trace.t % cfg.log_every == 0 || epoch_end || diverged {
                let mut rec = diagnose(cfg, &s, it, &trace, train_loss, Due::at(cfg, trace.t, epoch_end))?;
                if epoch_end && !diverged {
                    last_eval = evaluate(&s, state.x.as_slice())?;
                    (rec.eval_loss, rec.eval_accuracy) = last_eval;
                }
                writer.step(&rec)?;
            }
            if diverged {
                status = Status::Diverged;
                break 'epochs;
            }
        }
        let done = epoch + 1;
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.epochs {
            Checkpoint::of(&state).save(&dir.join(format!("checkpoint-epoch{done}.json")))?;
        }
    }

    let finite = state.x.values.iter().all(|v| v.is_finite());
    let final_train_loss = if finite {
        let all: Vec<usize> = (0..s.train.n()).collect();
        Some(loss(&s.model, &s.train, &all, state.x.as_slice())?).filter(|v| v.is_finite())
    } else {
        None
    };
    if status == Status::Finished && finite {
        Checkpoint::of(&state).save(&dir.join(CHECKPOINT_FILE))?;
    }
    let terminal = TerminalRecord {
        record: status,
        t: state.t,
        final_train_loss,
        final_eval_loss: if status == Status::Finished { last_eval.0 } else { None },
        final_eval_accuracy: if status == Status::Finished { last_eval.1 } else { None },
        trajectory_digest: hex::encode(trajectory.finalize()),
    };
    let digest = writer.finish(&terminal)?;
    let digest_path = dir.join(DIGEST_FILE);
    fs::write(&digest_path, format!("{digest}  {METRICS_FILE}\n")).map_err(|e| Error::io(&digest_path, e))?;
    Ok(RunOutcome { dir, metrics: metrics_path, digest, terminal })
}

fn hash_params(h: &mut Sha256, x: &[f64]) {
    for v in x {
        h.update(v.to_le_bytes());
    }
}

fn evaluate(s: &Setup, x: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
    let Some(eval) = &s.eval else {
        return Ok((None, None));
    };
    let all: Vec<usize> = (0..eval.n()).collect();
    let l = loss(&s.model, eval, &all, x)?;
    Ok((Some(l).filter(|v| v.is_finite()), s.model.accuracy(eval, x)))
}

/// Recomputes every diagnostic for the iteration that follows `checkpoint`,
/// without advancing the saved state.
pub fn probe_checkpoint(cfg: &ExperimentConfig, checkpoint: &Checkpoint) -> Result<StepRecord> {
    let s = setup(cfg)?;
    let mut state = checkpoint.restore(&s.x0, cfg.optim.workers)?;
    let ipe = cfg.iterations_per_epoch();
    let epoch = state.t / ipe;
    let k = (state.t % ipe) as usize;
    let iterations = s.sampler.epoch(epoch);
    let it = &iterations[k];
    let train_loss = loss(&s.model, &s.train, &it.batch.indices, state.x.as_slice())?;
    let trace = step(&mut state, &cfg.optim, &s.model, &s.train, it, &s.rnc)?;
    diagnose(cfg, &s, it, &trace, train_loss, Due::all())
}
