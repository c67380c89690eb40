use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::vector::norm;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingLevel {
    PerFilter,
    PerLayer,
}

/// A contiguous slice of the flat parameter vector.
///
/// `layer` names the enclosing layer; in a per-layer partition it equals
/// `name`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub layer: String,
    pub range: Range<usize>,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, layer: impl Into<String>, range: Range<usize>) -> Self {
        Self {
            name: name.into(),
            layer: layer.into(),
            range,
        }
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Disjoint, sorted, exhaustive cover of `[0, len)` by named groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterPartition {
    groups: Vec<ParamGroup>,
    level: GroupingLevel,
    len: usize,
}

impl FilterPartition {
    pub fn new(groups: Vec<ParamGroup>, level: GroupingLevel) -> Result<Self> {
        let mut cursor = 0;
        for g in &groups {
            if g.range.start != cursor || g.range.end <= g.range.start {
                return Err(Error::invalid(format!(
                    "group '{}' covers {:?}, expected a non-empty range starting at {}",
                    g.name, g.range, cursor
                )));
            }
            cursor = g.range.end;
        }
        if cursor == 0 {
            return Err(Error::invalid("partition must cover at least one index"));
        }
        // Layers must be contiguous runs so that coarsening is well defined.
        for (i, g) in groups.iter().enumerate() {
            let reappears = groups[..i]
                .iter()
                .rposition(|p| p.layer == g.layer)
                .is_some_and(|j| j + 1 != i);
            if reappears {
                return Err(Error::invalid(format!(
                    "layer '{}' is split by another layer",
                    g.layer
                )));
            }
            if level == GroupingLevel::PerLayer && g.name != g.layer {
                return Err(Error::invalid(format!(
                    "per-layer group '{}' names layer '{}'",
                    g.name, g.layer
                )));
            }
        }
        Ok(Self {
            groups,
            level,
            len: cursor,
        })
    }

    /// One group spanning everything.
    pub fn single(name: &str, len: usize) -> Result<Self> {
        Self::new(
            vec![ParamGroup::new(name, name, 0..len)],
            GroupingLevel::PerLayer,
        )
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn level(&self) -> GroupingLevel {
        self.level
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    /// Merges consecutive groups of the same layer.
    pub fn coarsen(&self) -> FilterPartition {
        let mut merged: Vec<ParamGroup> = Vec::new();
        for g in &self.groups {
            match merged.last_mut() {
                Some(last) if last.layer == g.layer => last.range.end = g.range.end,
                _ => merged.push(ParamGroup::new(&g.layer, &g.layer, g.range.clone())),
            }
        }
        FilterPartition {
            groups: merged,
            level: GroupingLevel::PerLayer,
            len: self.len,
        }
    }

    /// The partition at `level`. Refining a per-layer partition is not
    /// possible, so asking for per-filter groups of one returns it unchanged.
    pub fn at_level(&self, level: GroupingLevel) -> FilterPartition {
        match (self.level, level) {
            (GroupingLevel::PerFilter, GroupingLevel::PerLayer) => self.coarsen(),
            _ => self.clone(),
        }
    }

    pub fn slices<'a>(&'a self, v: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.groups.iter().map(move |g| &v[g.range.clone()])
    }
}

/// Flat parameter vector with its partition.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    partition: Arc<FilterPartition>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, partition: Arc<FilterPartition>) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::invalid(format!(
                "{} parameters for a partition of {}",
                values.len(),
                partition.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(Self { values, partition })
    }

    /// Same partition, new values. Finiteness is not rechecked so that a
    /// diverging trajectory can still be observed.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            partition: Arc::clone(&self.partition),
        }
    }

    pub fn partition(&self) -> &Arc<FilterPartition> {
        &self.partition
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Euclidean norm of each group's slice, in partition order.
pub fn filter_norms(x: &ParamVector) -> Vec<f64> {
    x.partition.slices(&x.values).map(norm).collect()
}
