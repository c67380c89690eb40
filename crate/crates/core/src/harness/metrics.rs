//! Line-delimited JSON metrics.
//!
//! The first line is a header naming the schema, version, diagnostic groups
//! and the step-record fields. Every following line is a step record, and the
//! last one is a terminal record (`finished` or `diverged`). Missing values are
//! written as `null`; numbers use shortest round-trip formatting.
//!
//! Records go to `<file>.partial`, which is renamed into place only after the
//! terminal record is flushed, so a metrics file on disk is always complete.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const SCHEMA: &str = "gncsim-metrics";
pub const VERSION: u32 = 1;

pub const STEP_FIELDS: &[&str] = &[
    "t",
    "epoch",
    "lr",
    "train_loss",
    "eval_loss",
    "eval_accuracy",
    "noise_mean_norm",
    "noise_max_norm",
    "noise_zero_sum",
    "kappa",
    "eig_percentiles",
    "fg_cosine",
    "spread_center",
    "spread_min",
    "spread_max",
    "probe_loss_range",
    "probe_grad_range",
    "probe_beta",
    "lars_skipped",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub record: String,
    pub schema: String,
    pub version: u32,
    pub groups: Vec<String>,
    pub percentiles: Vec<f64>,
    pub fields: Vec<String>,
}

impl Header {
    pub fn new(groups: Vec<String>, percentiles: Vec<f64>) -> Self {
        Self {
            record: "header".into(),
            schema: SCHEMA.into(),
            version: VERSION,
            groups,
            percentiles,
            fields: STEP_FIELDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// One logged iteration. Losses refer to the parameters before the update of
/// iteration `t`; evaluation values are taken after the last iteration of an
/// epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub noise_mean_norm: Option<f64>,
    pub noise_max_norm: Option<f64>,
    /// `‖Σ ω^i‖ / max ‖ω^i‖`.
    pub noise_zero_sum: Option<f64>,
    /// Per diagnostic group; inner `null` marks a degenerate spectrum.
    pub kappa: Option<Vec<Option<f64>>>,
    pub eig_percentiles: Option<Vec<Vec<f64>>>,
    pub fg_cosine: Option<f64>,
    pub spread_center: Option<f64>,
    pub spread_min: Option<f64>,
    pub spread_max: Option<f64>,
    pub probe_loss_range: Option<f64>,
    pub probe_grad_range: Option<f64>,
    pub probe_beta: Option<f64>,
    pub lars_skipped: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Finished,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub record: Status,
    /// Last completed iteration.
    pub t: u64,
    pub final_train_loss: Option<f64>,
    pub final_eval_loss: Option<f64>,
    pub final_eval_accuracy: Option<f64>,
    /// SHA-256 over the parameter bytes after every iteration.
    pub trajectory_digest: String,
}

#[derive(Serialize)]
struct Tagged<'a> {
    record: &'static str,
    #[serde(flatten)]
    step: &'a StepRecord,
}

pub struct MetricsWriter {
    path: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, header: &Header) -> Result<Self> {
        let mut partial = path.as_os_str().to_owned();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        if path.exists() {
            fs::remove_file(path).map_err(|e| Error::io(path, e))?;
        }
        let file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        let mut w = Self { path: path.to_owned(), partial, out: BufWriter::new(file) };
        w.line(header)?;
        Ok(w)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string(value).map_err(|e| Error::InternalState(e.to_string()))?;
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.partial, e))
    }

    pub fn step(&mut self, record: &StepRecord) -> Result<()> {
        self.line(&Tagged { record: "step", step: record })
    }

    /// Writes the terminal record and moves the file into place. Returns the
    /// hex SHA-256 of the final file.
    pub fn finish(mut self, terminal: &TerminalRecord) -> Result<String> {
        self.line(terminal)?;
        let file = self.out.into_inner().map_err(|e| Error::io(&self.partial, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&self.partial, e))?;
        drop(file);
        fs::rename(&self.partial, &self.path).map_err(|e| Error::io(&self.path, e))?;
        file_digest(&self.path)
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parsed metrics file.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub header: Header,
    pub steps: Vec<StepRecord>,
    pub terminal: TerminalRecord,
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let bad = |reason: String| Error::Format { path: path.to_owned(), reason };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 2 {
        return Err(bad("missing header or terminal record".into()));
    }
    let header: Header = serde_json::from_str(lines[0]).map_err(|e| bad(format!("header: {e}")))?;
    if header.schema != SCHEMA || header.version != VERSION {
        return Err(bad(format!("unsupported schema {} v{}", header.schema, header.version)));
    }
    let steps = lines[1..lines.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", i + 2))))
        .collect::<Result<_>>()?;
    let terminal = serde_json::from_str(lines[lines.len() - 1]).map_err(|e| bad(format!("terminal record: {e}")))?;
    Ok(Metrics { header, steps, terminal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_atomic_rename() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let mut w = MetricsWriter::create(&path, &Header::new(vec!["x".into()], vec![50.0])).unwrap();
        let rec = StepRecord { t: 1, lr: 0.1, train_loss: Some(1.0 / 3.0), ..Default::default() };
        w.step(&rec).unwrap();
        assert!(!path.exists());
        let term = TerminalRecord {
            record: Status::Finished,
            t: 1,
            final_train_loss: Some(0.5),
            final_eval_loss: None,
            final_eval_accuracy: None,
            trajectory_digest: "00".into(),
        };
        let digest = w.finish(&term).unwrap();
        assert_eq!(digest, file_digest(&path).unwrap());
        let m = read_metrics(&path).unwrap();
        assert_eq!(m.steps, vec![rec]);
        assert_eq!(m.terminal, term);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"eval_loss\":null"));
    }
}
