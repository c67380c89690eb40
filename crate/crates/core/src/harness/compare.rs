use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ObjectiveSpec, SEED_SETS};
use super::metrics::Status;
use super::run::{run_experiment, RunOutcome};
use crate::optim::{AlphaPreset, Method};
use crate::{Error, Result};

pub const SUMMARY_TSV: &str = "summary.tsv";
pub const SUMMARY_MD: &str = "summary.md";
pub const CELLS_TSV: &str = "cells.tsv";

/// Noise coefficients for one method: `alpha` and, for gnc-to-rnc, the RNC
/// phase coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaOverride {
    pub alpha: f64,
    pub alpha_rnc: Option<f64>,
}

impl AlphaOverride {
    /// Parses `method=alpha` or `method=alpha:alpha_rnc`.
    pub fn parse(text: &str) -> Result<(Method, AlphaOverride)> {
        let bad = || Error::Config(format!("alpha override '{text}' is not method=value[:value]"));
        let (m, v) = text.split_once('=').ok_or_else(bad)?;
        let method: Method = m.trim().parse()?;
        let (a, r) = match v.split_once(':') {
            Some((a, r)) => (a, Some(r)),
            None => (v, None),
        };
        let alpha = a.trim().parse().map_err(|_| bad())?;
        let alpha_rnc = r.map(|r| r.trim().parse()).transpose().map_err(|_| bad())?;
        Ok((method, AlphaOverride { alpha, alpha_rnc }))
    }

    pub fn from_preset(preset: &AlphaPreset, method: Method) -> AlphaOverride {
        let (alpha, rnc) = preset.for_method(method);
        AlphaOverride { alpha, alpha_rnc: (method == Method::GncToRnc).then_some(rnc) }
    }
}

/// Methods × replications sharing init and sampler seeds within a replication.
#[derive(Clone, Debug)]
pub struct ComparisonPlan {
    pub base: ExperimentConfig,
    pub methods: Vec<Method>,
    pub runs: usize,
    /// Replication `r` uses seed set `first_seed_set + r`.
    pub first_seed_set: usize,
    pub alpha: BTreeMap<Method, AlphaOverride>,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Finished,
    Diverged { t: u64 },
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub run: usize,
    pub method: Method,
    pub status: CellStatus,
    pub value: Option<f64>,
    pub digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub values: Vec<f64>,
    pub diverged: usize,
    pub failed: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single value.
    pub std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub metric: String,
    pub setting: String,
    pub cells: Vec<Cell>,
    pub methods: Vec<MethodSummary>,
}

impl ComparisonPlan {
    /// The fully resolved configuration of every cell, replication-major.
    pub fn cells(&self) -> Result<Vec<(usize, Method, ExperimentConfig)>> {
        if self.methods.is_empty() || self.runs == 0 {
            return Err(Error::Config("a comparison needs at least one method and one run".into()));
        }
        if self.first_seed_set + self.runs > SEED_SETS.len() {
            return Err(Error::Config(format!(
                "{} runs from seed set {} exceed the {} pinned seed sets",
                self.runs,
                self.first_seed_set,
                SEED_SETS.len()
            )));
        }
        let mut out = Vec::new();
        for r in 0..self.runs {
            let (init, sampler, rnc) = SEED_SETS[self.first_seed_set + r];
            for &m in &self.methods {
                let mut o = vec![
                    ("optim.method", m.to_string()),
                    ("seeds.init", init.to_string()),
                    ("seeds.sampler", sampler.to_string()),
                    ("seeds.rnc", rnc.to_string()),
                    ("run.output", self.output.join(format!("run-{r}")).join(m.as_str()).display().to_string()),
                ];
                if let Some(a) = self.alpha.get(&m) {
                    o.push(("optim.alpha", a.alpha.to_string()));
                    if let Some(r) = a.alpha_rnc {
                        o.push(("optim.alpha_rnc", r.to_string()));
                    }
                }
                let cfg = self
                    .base
                    .with(&o)
                    .map_err(|e| Error::Config(format!("{m}: {}", message(e))))?;
                out.push((r, m, cfg));
            }
        }
        Ok(out)
    }
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Reported value of a finished run: eval accuracy in percent for
/// classifiers, otherwise eval loss, otherwise final training loss.
fn metric(cfg: &ExperimentConfig) -> &'static str {
    let eval = cfg.data.path.is_none() && cfg.data.eval_n > 0;
    match (&cfg.objective, eval) {
        (ObjectiveSpec::Quadratic { .. }, true) => "eval loss",
        (ObjectiveSpec::Quadratic { .. }, false) => "train loss",
        (_, true) => "eval accuracy (%)",
        (_, false) => "train loss",
    }
}

fn value_of(o: &RunOutcome, metric: &str) -> Option<f64> {
    let t = &o.terminal;
    match metric {
        "eval accuracy (%)" => t.final_eval_accuracy.map(|a| 100.0 * a),
        "eval loss" => t.final_eval_loss,
        _ => t.final_train_loss,
    }
}

fn setting(cfg: &ExperimentConfig) -> String {
    let family = match &cfg.objective {
        ObjectiveSpec::Quadratic { .. } => "quadratic",
        ObjectiveSpec::Logistic => "logistic",
        ObjectiveSpec::Mlp { .. } => "mlp",
    };
    let (m, b) = (cfg.optim.workers, cfg.optim.shard_size);
    format!("{family}, batch {} ({m} x {b})", m * b)
}

/// Runs every cell (in parallel) and writes the summary files. Diverged or
/// failed cells are recorded and excluded from the statistics; I/O errors
/// abort.
pub fn compare_methods(plan: &ComparisonPlan) -> Result<ComparisonSummary> {
    let cells = plan.cells()?;
    fs::create_dir_all(&plan.output).map_err(|e| Error::io(&plan.output, e))?;
    let metric = metric(&plan.base);
    let results: Vec<Result<Cell>> = cells
        .par_iter()
        .map(|(r, m, cfg)| {
            let cell = |status, value, digest| Cell { run: *r, method: *m, status, value, digest };
            match run_experiment(cfg) {
                Ok(o) if o.terminal.record == Status::Diverged => {
                    Ok(cell(CellStatus::Diverged { t: o.terminal.t }, None, Some(o.digest)))
                }
                Ok(o) => match value_of(&o, metric) {
                    Some(v) => Ok(cell(CellStatus::Finished, Some(v), Some(o.digest))),
                    None => Ok(cell(CellStatus::Failed(format!("no final {metric}")), None, Some(o.digest))),
                },
                Err(e @ Error::Io { .. }) => Err(e),
                Err(e) => Ok(cell(CellStatus::Failed(e.to_string()), None, None)),
            }
        })
        .collect();
    let cells: Vec<Cell> = results.into_iter().collect::<Result<_>>()?;

    let methods = plan
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.method == method).collect();
            let values: Vec<f64> = mine.iter().filter_map(|c| c.value).collect();
            let (mean, std) = mean_std(&values);
            MethodSummary {
                method,
                diverged: mine.iter().filter(|c| matches!(c.status, CellStatus::Diverged { .. })).count(),
                failed: mine.iter().filter(|c| matches!(c.status, CellStatus::Failed(_))).count(),
                values,
                mean,
                std,
            }
        })
        .collect();
    let summary = ComparisonSummary { metric: metric.to_string(), setting: setting(&plan.base), cells, methods };
    write_summary(plan, &summary)?;
    Ok(summary)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn write_summary(plan: &ComparisonPlan, s: &ComparisonSummary) -> Result<()> {
    let mut tsv = String::from("method\tmetric\tn\tmean\tstd\tdiverged\tfailed\tvalues\n");
    for m in &s.methods {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let values: Vec<String> = m.values.iter().map(f64::to_string).collect();
        writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.method,
            s.metric,
            m.values.len(),
            opt(m.mean),
            opt(m.std),
            m.diverged,
            m.failed,
            values.join(",")
        )
        .unwrap();
    }

    let mut md = format!("Final {} over {} runs (mean ± std).\n\n| Setting |", s.metric, plan.runs);
    for m in &s.methods {
        write!(md, " {} |", m.method.title()).unwrap();
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(s.methods.len()));
    write!(md, "\n| {} |", s.setting).unwrap();
    for m in &s.methods {
        let mut cell = match (m.mean, m.std) {
            (Some(mean), Some(std)) => format!("{mean:.2} ± {std:.2}"),
            _ => "n/a".to_string(),
        };
        if m.diverged > 0 {
            write!(cell, " ({} diverged)", m.diverged).unwrap();
        }
        if m.failed > 0 {
            write!(cell, " ({} failed)", m.failed).unwrap();
        }
        write!(md, " {cell} |").unwrap();
    }
    md.push('\n');

    let mut cells = String::from("run\tmethod\tstatus\tvalue\tdigest\n");
    for c in &s.cells {
        let status = match &c.status {
            CellStatus::Finished => "finished".to_string(),
            CellStatus::Diverged { t } => format!("diverged@{t}"),
            CellStatus::Failed(e) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
        };
        let value = c.value.map_or_else(|| "NA".to_string(), |v| v.to_string());
        writeln!(cells, "{}\t{}\t{}\t{}\t{}", c.run, c.method, status, value, c.digest.as_deref().unwrap_or("NA")).unwrap();
    }

    for (name, text) in [(SUMMARY_TSV, tsv), (SUMMARY_MD, md), (CELLS_TSV, cells)] {
        let p = plan.output.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_statistics() {
        assert_eq!(mean_std(&[]), (None, None));
        assert_eq!(mean_std(&[2.0]), (Some(2.0), Some(0.0)));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m, Some(3.0));
        assert!((s.unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn alpha_override_syntax() {
        let (m, a) = AlphaOverride::parse("gnc-to-rnc=0.1:4").unwrap();
        assert_eq!(m, Method::GncToRnc);
        assert_eq!(a, AlphaOverride { alpha: 0.1, alpha_rnc: Some(4.0) });
        assert_eq!(AlphaOverride::parse("gnc=0.5").unwrap().1.alpha_rnc, None);
        assert!(AlphaOverride::parse("gnc").is_err());
        assert!(AlphaOverride::parse("sgd=1").is_err());
    }
}
