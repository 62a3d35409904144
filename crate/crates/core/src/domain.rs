//! Domain types shared across the crate, plus report canonicalization and
//! cross-sample alignment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Voltage / frequency / corner triple a model or report was produced at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OperatingPoint<T> {
    pub voltage: T,
    pub freq_mhz: T,
    pub corner: String,
}

impl<T: Scalar> OperatingPoint<T> {
    pub fn new(voltage: T, freq_mhz: T, corner: impl Into<String>) -> Result<Self> {
        let op = OperatingPoint { voltage, freq_mhz, corner: corner.into() };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.voltage.is_finite() || !self.freq_mhz.is_finite() {
            return Err(Error::rejected("operating point has non-finite field"));
        }
        if self.freq_mhz <= T::zero() {
            return Err(Error::rejected("operating point frequency must be > 0"));
        }
        Ok(())
    }
}

/// Compiler-visible activity counts for one activity realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EventVector<T> {
    names: Vec<String>,
    counts: Vec<T>,
}

impl<T: Scalar> EventVector<T> {
    pub fn new(names: Vec<String>, counts: Vec<T>) -> Result<Self> {
        if names.len() != counts.len() {
            return Err(Error::rejected(format!(
                "event vector has {} names but {} counts",
                names.len(),
                counts.len()
            )));
        }
        if !all_finite(&counts) {
            return Err(Error::rejected("event counts must be finite"));
        }
        if counts.iter().any(|&c| c < T::zero()) {
            return Err(Error::rejected("event counts must be nonnegative"));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::rejected("event names must be unique"));
        }
        Ok(EventVector { names, counts })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, T)>) -> Result<Self> {
        let (names, counts): (Vec<String>, Vec<T>) = pairs.into_iter().map(|(n, c)| (n.into(), c)).unzip();
        Self::new(names, counts)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn counts(&self) -> &[T] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.counts[i])
    }

    /// Re-expresses the vector over `order`. Events missing here count as
    /// zero; events present here but absent from `order` are an error.
    pub fn reorder_to(&self, order: &[String]) -> Result<Self> {
        let lookup: BTreeMap<&str, T> = self.names.iter().map(String::as_str).zip(self.counts.iter().copied()).collect();
        if let Some(extra) = self.names.iter().find(|n| !order.contains(n)) {
            return Err(Error::rejected(format!("unknown event '{extra}'")));
        }
        let counts = order.iter().map(|n| lookup.get(n.as_str()).copied().unwrap_or_else(T::zero)).collect();
        Ok(EventVector { names: order.to_vec(), counts })
    }
}

/// One row of a gate-level power report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PowerRow<T> {
    pub path: String,
    pub power_mw: T,
}

/// Canonical per-row power report: unique paths, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PowerReport<T> {
    rows: Vec<PowerRow<T>>,
    op: OperatingPoint<T>,
}

impl<T: Scalar> PowerReport<T> {
    pub fn rows(&self) -> &[PowerRow<T>] {
        &self.rows
    }

    pub fn op(&self) -> &OperatingPoint<T> {
        &self.op
    }

    pub fn total(&self) -> T {
        self.rows.iter().map(|r| r.power_mw).sum()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.path.as_str())
    }

    pub fn powers(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.power_mw).collect()
    }
}

/// Merges duplicate paths by summation and sorts rows by path.
pub fn canonicalize_report<T: Scalar, S: Into<String>>(
    raw_rows: impl IntoIterator<Item = (S, T)>,
    op: OperatingPoint<T>,
) -> Result<PowerReport<T>> {
    op.validate()?;
    let mut merged: BTreeMap<String, T> = BTreeMap::new();
    for (path, power) in raw_rows {
        let path = path.into();
        if !power.is_finite() {
            return Err(Error::rejected(format!("row '{path}' has non-finite power")));
        }
        if power < T::zero() {
            return Err(Error::rejected(format!("row '{path}' has negative power")));
        }
        *merged.entry(path).or_insert_with(T::zero) += power;
    }
    let rows = merged.into_iter().map(|(path, power_mw)| PowerRow { path, power_mw }).collect();
    Ok(PowerReport { rows, op })
}

/// One (events, report) pair observed for a kernel variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActivitySample<T> {
    pub kernel: String,
    pub variant: String,
    pub events: EventVector<T>,
    pub report: PowerReport<T>,
}

impl<T: Scalar> ActivitySample<T> {
    pub fn new(
        kernel: impl Into<String>,
        variant: impl Into<String>,
        events: EventVector<T>,
        report: PowerReport<T>,
    ) -> Result<Self> {
        let kernel = kernel.into();
        if kernel.is_empty() {
            return Err(Error::rejected("sample kernel label must be non-empty"));
        }
        Ok(ActivitySample { kernel, variant: variant.into(), events, report })
    }
}

/// Samples expressed over one shared event order and row order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSamples<T> {
    pub event_names: Vec<String>,
    pub row_paths: Vec<String>,
    pub samples: Vec<ActivitySample<T>>,
}

impl<T: Scalar> AlignedSamples<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct kernel labels, sorted.
    pub fn kernels(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.samples.iter().map(|s| &s.kernel).collect();
        set.into_iter().cloned().collect()
    }

    /// Subset keeping the shared orders.
    pub fn subset(&self, keep: impl Fn(&ActivitySample<T>) -> bool) -> AlignedSamples<T> {
        AlignedSamples {
            event_names: self.event_names.clone(),
            row_paths: self.row_paths.clone(),
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }
}

/// Aligns samples onto the sorted union of event names and row paths,
/// zero-filling missing counts and rows.
pub fn align_features<T: Scalar>(samples: &[ActivitySample<T>]) -> Result<AlignedSamples<T>> {
    if samples.is_empty() {
        return Err(Error::rejected("cannot align an empty sample list"));
    }
    let events: BTreeSet<&str> = samples.iter().flat_map(|s| s.events.names().iter().map(String::as_str)).collect();
    let rows: BTreeSet<&str> = samples.iter().flat_map(|s| s.report.paths()).collect();
    let event_names: Vec<String> = events.into_iter().map(str::to_owned).collect();
    let row_paths: Vec<String> = rows.into_iter().map(str::to_owned).collect();
    align_to(samples, &event_names, &row_paths)
}

/// Aligns samples onto explicit orders, which must cover every name present.
pub fn align_to<T: Scalar>(
    samples: &[ActivitySample<T>],
    event_names: &[String],
    row_paths: &[String],
) -> Result<AlignedSamples<T>> {
    let mut aligned = Vec::with_capacity(samples.len());
    for s in samples {
        let events = s.events.reorder_to(event_names)?;
        let lookup: BTreeMap<&str, T> = s.report.rows.iter().map(|r| (r.path.as_str(), r.power_mw)).collect();
        if let Some(extra) = s.report.paths().find(|p| !row_paths.iter().any(|r| r == p)) {
            return Err(Error::rejected(format!("unknown report row '{extra}'")));
        }
        let rows = row_paths
            .iter()
            .map(|p| PowerRow { path: p.clone(), power_mw: lookup.get(p.as_str()).copied().unwrap_or_else(T::zero) })
            .collect();
        aligned.push(ActivitySample {
            kernel: s.kernel.clone(),
            variant: s.variant.clone(),
            events,
            report: PowerReport { rows, op: s.report.op.clone() },
        });
    }
    Ok(AlignedSamples { event_names: event_names.to_vec(), row_paths: row_paths.to_vec(), samples: aligned })
}

/// One candidate produced by the post-PnR pipelining loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PnrConfiguration<T> {
    pub graph_id: String,
    pub iteration: u64,
    pub freq_mhz: T,
    pub ii: u32,
    pub events: EventVector<T>,
    pub features: Vec<T>,
}

impl<T: Scalar> PnrConfiguration<T> {
    pub fn new(
        graph_id: impl Into<String>,
        iteration: u64,
        freq_mhz: T,
        ii: u32,
        events: EventVector<T>,
        features: Vec<T>,
    ) -> Result<Self> {
        if !freq_mhz.is_finite() || freq_mhz <= T::zero() {
            return Err(Error::rejected("configuration frequency must be finite and > 0"));
        }
        if ii < 1 {
            return Err(Error::rejected("initiation interval must be >= 1"));
        }
        if !all_finite(&features) {
            return Err(Error::rejected("configuration features must be finite"));
        }
        Ok(PnrConfiguration { graph_id: graph_id.into(), iteration, freq_mhz, ii, events, features })
    }
}

/// Content hash of a canonical routed-graph serialization, as 16 hex digits.
pub fn graph_id_of(canonical_snapshot: &str) -> String {
    let digest = Sha256::digest(canonical_snapshot.as_bytes());
    hex::encode(&digest[..8])
}
