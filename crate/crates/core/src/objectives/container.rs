//! Binary dataset container.
//!
//! ```text
//! offset  size       field
//! 0       8          magic  b"GNCDATA\0"
//! 8       4          version (u32 LE, currently 1)
//! 12      8          n      (u64 LE, record count)
//! 20      8          width  (u64 LE, reals per record)
//! 28      8*n*width  payload, row-major f64 LE
//! ```
//!
//! A text sidecar (`<file>.meta`) holds `key = value` lines describing the
//! family that produced the records; `family` is always present.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GNCDATA\0";
const VERSION: u32 = 1;
const HEADER: usize = 28;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetMeta {
    pub family: String,
    pub entries: BTreeMap<String, String>,
}

impl DatasetMeta {
    pub fn with_family<const N: usize>(family: &str, entries: [(&str, String); N]) -> Self {
        Self {
            family: family.to_string(),
            entries: entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_dataset(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut bytes = Vec::with_capacity(HEADER + 8 * data.raw().len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(data.n() as u64).to_le_bytes());
    bytes.extend_from_slice(&(data.width() as u64).to_le_bytes());
    for v in data.raw() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let mut text = format!("family = {}\n", meta.family);
    for (k, v) in &meta.entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let side = sidecar(path);
    fs::write(&side, text).map_err(|e| Error::io(side, e))
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_owned(),
        reason: reason.to_owned(),
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(bad("not a dataset container"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let width = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(width)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() - HEADER != expected {
        return Err(bad("payload length does not match header"));
    }
    let records = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Dataset::new(width, records).map_err(|e| bad(&e.to_string()))?;

    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let mut meta = DatasetMeta::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
            path: side.clone(),
            reason: format!("expected 'key = value', got '{line}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "family" {
            meta.family = v.to_owned();
        } else {
            meta.entries.insert(k.to_owned(), v.to_owned());
        }
    }
    if meta.family.is_empty() {
        return Err(Error::Format {
            path: side,
            reason: "missing 'family'".into(),
        });
    }
    Ok((data, meta))
}
