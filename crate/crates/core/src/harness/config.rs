//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted (`optim.alpha`), one per line; `#` starts a comment. Every
//! key has a default, unknown keys are rejected and a key may appear once per
//! source. The resolved configuration is rendered canonically (all keys,
//! sorted) for the run directory snapshot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::numerics::GroupingLevel;
use crate::objectives::read_dataset;
use crate::optim::{Collapse, Decay, OptimConfig, ScheduleSpec, Warmup};
use crate::{Error, Result};

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("objective.family", "mlp", "quadratic | logistic | mlp"),
    ("objective.dim", "16", "quadratic: parameter dimension"),
    ("objective.cond", "100", "quadratic: condition number of A"),
    ("objective.lambda_max", "1", "quadratic: largest curvature"),
    ("objective.rotate", "false", "quadratic: random eigenbasis instead of the axes"),
    ("objective.hidden", "16", "mlp: comma-separated hidden widths (up to two, may be empty)"),
    ("data.path", "", "dataset container to load instead of generating data"),
    ("data.n", "2048", "generated training examples"),
    ("data.eval_n", "512", "generated evaluation examples, 0 disables evaluation"),
    ("data.features", "8", "blobs: feature count"),
    ("data.classes", "4", "blobs: class count"),
    ("data.separation", "2", "blobs: scale of the class centers"),
    ("data.noise", "1", "quadratic: standard deviation of the centers z"),
    ("optim.method", "baseline", "baseline | rnc | gnc | gnc-to-rnc"),
    ("optim.workers", "8", "worker count M"),
    ("optim.shard_size", "16", "examples per worker per iteration"),
    ("optim.alpha", "0.1", "noise coefficient (GNC phase for gnc-to-rnc)"),
    ("optim.alpha_rnc", "4", "noise coefficient of the RNC phase of gnc-to-rnc"),
    ("optim.switch_epoch", "none", "first RNC epoch of gnc-to-rnc (0-based)"),
    ("optim.momentum", "0.9", "momentum coefficient"),
    ("optim.weight_decay", "0.0001", "L2 coefficient added to the merged gradient"),
    ("optim.lars", "false", "layer-wise adaptive rate scaling"),
    ("optim.lars_coef", "0.001", "LARS trust coefficient"),
    ("optim.noise_scaling", "filter-wise", "plain | filter-wise"),
    ("schedule.base_lr", "0.1", "peak learning rate"),
    ("schedule.warmup_epochs", "0", "linear warmup length"),
    ("schedule.warmup_start_lr", "0", "learning rate of the first warmup iteration"),
    ("schedule.decay", "constant", "constant | step | poly"),
    ("schedule.milestones", "", "step: comma-separated epochs (0-based) at which to decay"),
    ("schedule.factor", "0.1", "step: multiplier per milestone"),
    ("schedule.poly_total", "0", "poly: total iterations T, 0 means the whole run"),
    ("schedule.poly_power", "2", "poly: exponent"),
    ("schedule.collapse_epoch", "none", "poly: epoch from which the rate is divided"),
    ("schedule.collapse_divisor", "5", "poly: divisor applied from collapse_epoch"),
    ("run.epochs", "10", "training epochs"),
    ("run.output", "out/run", "output directory"),
    ("run.log_every", "1", "iterations between metrics records"),
    ("run.checkpoint_every", "0", "epochs between checkpoints, 0 keeps only the final one"),
    ("seeds.init", "11", "parameter initialization seed"),
    ("seeds.sampler", "12", "mini-batch sampling seed"),
    ("seeds.rnc", "13", "random-noise seed"),
    ("seeds.data", "14", "synthetic data seed"),
    ("diag.every", "10", "iterations between diagnostics, 0 disables them"),
    ("diag.fg_every", "epoch", "full-gradient similarity cadence: epoch | off | iteration count"),
    ("diag.anisotropy", "true", "noise condition numbers and eigenvalue percentiles"),
    ("diag.spread", "true", "worker loss spread"),
    ("diag.probe", "false", "loss-stability / gradient-predictiveness / beta probe"),
    ("diag.grouping", "per-layer", "per-layer | per-filter"),
    ("diag.percentiles", "0,25,50,75,100", "eigenvalue percentiles"),
];

/// Pinned `(init, sampler, rnc)` seed tuples selected by `--seed-set`.
pub const SEED_SETS: &[(u64, u64, u64)] = &[
    (101, 201, 301),
    (102, 202, 302),
    (103, 203, 303),
    (104, 204, 304),
    (105, 205, 305),
    (106, 206, 306),
    (107, 207, 307),
    (108, 208, 308),
    (109, 209, 309),
    (110, 210, 310),
];

/// Raw key/value pairs over the defaults.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl Default for ConfigMap {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ConfigMap {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = Self::default();
        map.merge_text(&text)?;
        Ok(map)
    }

    /// Applies `key = value` lines.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            let k = k.trim();
            if seen.insert(k.to_string(), n + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
            self.set(k, v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, message(e))))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{pair}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key '{key}'"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    /// Selects the `k`-th pinned seed tuple.
    pub fn apply_seed_set(&mut self, k: usize) -> Result<()> {
        let (init, sampler, rnc) = *SEED_SETS.get(k).ok_or_else(|| {
            Error::Config(format!("seed set {k} out of range 0..{}", SEED_SETS.len()))
        })?;
        self.set("seeds.init", &init.to_string())?;
        self.set("seeds.sampler", &sampler.to_string())?;
        self.set("seeds.rnc", &rnc.to_string())
    }

    /// Every key, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::Config(format!("{key} = '{v}': {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            "" | "none" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| Error::Config(format!("{key}: '{s}': {e}")))
            })
            .collect()
    }
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveSpec {
    Quadratic { dim: usize, cond: f64, lambda_max: f64, rotate: bool },
    Logistic,
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub path: Option<PathBuf>,
    pub n: usize,
    pub eval_n: usize,
    pub features: usize,
    pub classes: usize,
    pub separation: f64,
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub init: u64,
    pub sampler: u64,
    pub rnc: u64,
    pub data: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FgCadence {
    Off,
    Epoch,
    Every(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagConfig {
    /// Iterations between diagnostics; 0 disables them.
    pub every: u64,
    pub fg: FgCadence,
    pub anisotropy: bool,
    pub spread: bool,
    pub probe: bool,
    pub grouping: GroupingLevel,
    pub percentiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub data: DataSpec,
    pub optim: OptimConfig,
    pub epochs: u64,
    pub seeds: Seeds,
    pub diag: DiagConfig,
    pub output: PathBuf,
    pub log_every: u64,
    pub checkpoint_every: u64,
    map: ConfigMap,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &[String], seed_set: Option<usize>) -> Result<Self> {
        let mut map = match path {
            Some(p) => ConfigMap::from_file(p)?,
            None => ConfigMap::default(),
        };
        if let Some(k) = seed_set {
            map.apply_seed_set(k)?;
        }
        for o in overrides {
            map.set_pair(o)?;
        }
        Self::from_map(map)
    }

    /// Types and validates `map`. A configured dataset file is read to learn
    /// its size.
    pub fn from_map(map: ConfigMap) -> Result<Self> {
        let objective = match map.get("objective.family") {
            "quadratic" => ObjectiveSpec::Quadratic {
                dim: map.parse("objective.dim")?,
                cond: map.parse("objective.cond")?,
                lambda_max: map.parse("objective.lambda_max")?,
                rotate: map.parse("objective.rotate")?,
            },
            "logistic" => ObjectiveSpec::Logistic,
            "mlp" => ObjectiveSpec::Mlp { hidden: map.list("objective.hidden")? },
            other => {
                return Err(Error::Config(format!(
                    "objective.family = '{other}' (quadratic, logistic, mlp)"
                )))
            }
        };
        let path: Option<PathBuf> = map.optional("data.path")?;
        let mut data = DataSpec {
            n: map.parse("data.n")?,
            eval_n: map.parse("data.eval_n")?,
            features: map.parse("data.features")?,
            classes: map.parse("data.classes")?,
            separation: map.parse("data.separation")?,
            noise: map.parse("data.noise")?,
            path,
        };
        if let Some(p) = &data.path {
            data.n = read_dataset(p)?.0.n();
        }

        let workers: usize = map.parse("optim.workers")?;
        let shard_size: usize = map.parse("optim.shard_size")?;
        let large = workers.saturating_mul(shard_size);
        if large == 0 {
            return Err(Error::Config("optim.workers and optim.shard_size must be positive".into()));
        }
        if large > data.n {
            return Err(Error::Config(format!(
                "b * M <= n violated: optim.shard_size * optim.workers = {shard_size} * {workers} = {large} > data.n = {}",
                data.n
            )));
        }
        let ipe = (data.n / large) as u64;
        let epochs: u64 = map.parse("run.epochs")?;
        if epochs == 0 {
            return Err(Error::Config("run.epochs must be positive".into()));
        }

        let schedule = schedule(&map, ipe, epochs)?;
        let optim = OptimConfig {
            method: map.parse("optim.method")?,
            workers,
            shard_size,
            alpha: map.parse("optim.alpha")?,
            alpha_rnc: map.parse("optim.alpha_rnc")?,
            switch_epoch: map.optional("optim.switch_epoch")?,
            momentum: map.parse("optim.momentum")?,
            weight_decay: map.parse("optim.weight_decay")?,
            lars: if map.parse("optim.lars")? { Some(map.parse("optim.lars_coef")?) } else { None },
            noise_scaling: map.parse("optim.noise_scaling")?,
            schedule,
        };
        optim.validate(Some(epochs))?;

        let fg = match map.get("diag.fg_every") {
            "off" => FgCadence::Off,
            "epoch" => FgCadence::Epoch,
            _ => match map.parse::<u64>("diag.fg_every")? {
                0 => FgCadence::Off,
                k => FgCadence::Every(k),
            },
        };
        let grouping = match map.get("diag.grouping") {
            "per-layer" => GroupingLevel::PerLayer,
            "per-filter" => GroupingLevel::PerFilter,
            other => return Err(Error::Config(format!("diag.grouping = '{other}' (per-layer, per-filter)"))),
        };
        let percentiles: Vec<f64> = map.list("diag.percentiles")?;
        if percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return Err(Error::Config("diag.percentiles must lie in [0, 100]".into()));
        }
        let diag = DiagConfig {
            every: map.parse("diag.every")?,
            fg,
            anisotropy: map.parse("diag.anisotropy")?,
            spread: map.parse("diag.spread")?,
            probe: map.parse("diag.probe")?,
            grouping,
            percentiles,
        };
        let log_every: u64 = map.parse("run.log_every")?;
        if log_every == 0 {
            return Err(Error::Config("run.log_every must be positive".into()));
        }
        if let ObjectiveSpec::Quadratic { dim, .. } = objective {
            if dim == 0 {
                return Err(Error::Config("objective.dim must be positive".into()));
            }
        }

        Ok(Self {
            objective,
            data,
            optim,
            epochs,
            seeds: Seeds {
                init: map.parse("seeds.init")?,
                sampler: map.parse("seeds.sampler")?,
                rnc: map.parse("seeds.rnc")?,
                data: map.parse("seeds.data")?,
            },
            diag,
            output: PathBuf::from(map.get("run.output")),
            log_every,
            checkpoint_every: map.parse("run.checkpoint_every")?,
            map,
        })
    }

    pub fn map(&self) -> &ConfigMap {
        &self.map
    }

    pub fn iterations_per_epoch(&self) -> u64 {
        self.optim.schedule.iters_per_epoch
    }

    pub fn total_iterations(&self) -> u64 {
        self.epochs * self.iterations_per_epoch()
    }

    /// Copy with `overrides` applied, re-validated.
    pub fn with(&self, overrides: &[(&str, String)]) -> Result<Self> {
        let mut map = self.map.clone();
        for (k, v) in overrides {
            map.set(k, v)?;
        }
        Self::from_map(map)
    }
}

fn schedule(map: &ConfigMap, ipe: u64, epochs: u64) -> Result<ScheduleSpec> {
    let warmup_epochs: u64 = map.parse("schedule.warmup_epochs")?;
    let warmup = (warmup_epochs > 0).then(|| -> Result<Warmup> {
        Ok(Warmup { epochs: warmup_epochs, start_lr: map.parse("schedule.warmup_start_lr")? })
    });
    let decay = match map.get("schedule.decay") {
        "constant" => Decay::Constant,
        "step" => Decay::Step {
            milestones: map.list("schedule.milestones")?,
            factor: map.parse("schedule.factor")?,
        },
        "poly" => {
            let total: u64 = map.parse("schedule.poly_total")?;
            let collapse = match map.optional::<u64>("schedule.collapse_epoch")? {
                Some(epoch) => Some(Collapse { epoch, divisor: map.parse("schedule.collapse_divisor")? }),
                None => None,
            };
            Decay::Polynomial {
                total: if total == 0 { epochs * ipe } else { total },
                power: map.parse("schedule.poly_power")?,
                collapse,
            }
        }
        other => return Err(Error::Config(format!("schedule.decay = '{other}' (constant, step, poly)"))),
    };
    Ok(ScheduleSpec {
        base_lr: map.parse("schedule.base_lr")?,
        warmup: warmup.transpose()?,
        decay,
        iters_per_epoch: ipe,
    })
}
