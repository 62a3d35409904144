//! Split-conformal upper bounds learned from calibration residuals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{select_with_bounds, PlannerKnobs, PlannerMode, PlannerResult};
use crate::domain::PnrConfiguration;
use crate::error::{Error, Result};
use crate::predict::PowerPredictor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationSample<T> {
    pub ptpx_mw: T,
    pub pred_mw: T,
    pub group: String,
    pub freq_mhz: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConformalConfig<T> {
    pub alpha_anchor: T,
    pub alpha_spec: T,
    /// Compute per-group quantiles in addition to the global one.
    pub by_group: bool,
    pub scale_with_freq: bool,
    pub f_ref_mhz: T,
    /// Minimum calibration points for a group quantile to be used.
    pub n_min: usize,
}

impl<T: Scalar> Default for ConformalConfig<T> {
    fn default() -> Self {
        ConformalConfig {
            alpha_anchor: T::lit(0.005),
            alpha_spec: T::lit(0.05),
            by_group: false,
            scale_with_freq: true,
            f_ref_mhz: T::lit(100.0),
            n_min: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GroupQuantiles<T> {
    pub n: usize,
    /// `+∞` when the calibration set is too small for the requested level.
    pub q_anchor: T,
    pub q_spec: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QuantileTable<T> {
    pub config: ConformalConfig<T>,
    pub global: GroupQuantiles<T>,
    pub groups: BTreeMap<String, GroupQuantiles<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Anchor,
    Spec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetBound {
    Union,
    Product,
}

/// The `⌈(1−α)(n+1)⌉`-th smallest score, or `+∞` when that index exceeds `n`.
pub fn conformal_quantile<T: Scalar>(scores: &[T], alpha: T) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::rejected("quantile of an empty score set"));
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::rejected("alpha must lie in (0, 1)"));
    }
    let n = scores.len();
    let level = (1.0 - alpha.to_f64_lossy()) * (n as f64 + 1.0);
    // Guard against products such as 0.9 * 10 landing just above an integer.
    let k = (level - 1e-9).ceil().max(1.0) as usize;
    if k > n {
        return Ok(T::infinity());
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(sorted[k - 1])
}

fn frequency_scale<T: Scalar>(config: &ConformalConfig<T>, freq_mhz: T) -> T {
    if config.scale_with_freq {
        T::one().max(freq_mhz / config.f_ref_mhz)
    } else {
        T::one()
    }
}

fn quantiles<T: Scalar>(scores: &[T], config: &ConformalConfig<T>) -> Result<GroupQuantiles<T>> {
    Ok(GroupQuantiles {
        n: scores.len(),
        q_anchor: conformal_quantile(scores, config.alpha_anchor)?,
        q_spec: conformal_quantile(scores, config.alpha_spec)?,
    })
}

/// One-sided residuals `max(0, ptpx − pred)`, optionally divided by
/// `max(1, f / f_ref)`, summarized per group and globally.
pub fn calibrate_conformal<T: Scalar>(cal: &[CalibrationSample<T>], config: &ConformalConfig<T>) -> Result<QuantileTable<T>> {
    if cal.is_empty() {
        return Err(Error::rejected("calibration set is empty"));
    }
    for a in [config.alpha_anchor, config.alpha_spec] {
        if !(a > T::zero() && a < T::one()) {
            return Err(Error::rejected("alpha must lie in (0, 1)"));
        }
    }
    if !(config.f_ref_mhz > T::zero() && config.f_ref_mhz.is_finite()) {
        return Err(Error::rejected("f_ref must be finite and > 0"));
    }
    for s in cal {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        if !ok(s.ptpx_mw) || !ok(s.pred_mw) || !(s.freq_mhz > T::zero() && s.freq_mhz.is_finite()) {
            return Err(Error::rejected("calibration powers must be finite and >= 0, frequencies > 0"));
        }
    }
    let scores: Vec<T> = cal
        .iter()
        .map(|s| (s.ptpx_mw - s.pred_mw).max(T::zero()) / frequency_scale(config, s.freq_mhz))
        .collect();
    let global = quantiles(&scores, config)?;
    let mut groups = BTreeMap::new();
    if config.by_group {
        let mut by: BTreeMap<&str, Vec<T>> = BTreeMap::new();
        for (s, &r) in cal.iter().zip(&scores) {
            by.entry(s.group.as_str()).or_default().push(r);
        }
        for (g, rs) in by {
            groups.insert(g.to_string(), quantiles(&rs, config)?);
        }
    }
    Ok(QuantileTable { config: config.clone(), global, groups })
}

/// `U = P̂ + ρ(f) q`, using the group quantile when the group has at least
/// `n_min` calibration points and the global one otherwise.
pub fn conformal_upper_bound<T: Scalar>(
    table: &QuantileTable<T>,
    pred_mw: T,
    freq_mhz: T,
    group: Option<&str>,
    mode: BoundMode,
) -> T {
    let q = group
        .and_then(|g| table.groups.get(g))
        .filter(|g| g.n >= table.config.n_min)
        .unwrap_or(&table.global);
    let q = match mode {
        BoundMode::Anchor => q.q_anchor,
        BoundMode::Spec => q.q_spec,
    };
    pred_mw + frequency_scale(&table.config, freq_mhz) * q
}

/// Per-candidate miscoverage that yields set-level confidence `1 − ε` over
/// `k` candidates.
pub fn map_set_confidence<T: Scalar>(epsilon: T, k: usize, mode: SetBound) -> Result<T> {
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::rejected("epsilon must lie in (0, 1)"));
    }
    if k == 0 {
        return Err(Error::rejected("k must be >= 1"));
    }
    let kf = T::from_usize_lossy(k);
    Ok(match mode {
        SetBound::Union => epsilon / kf,
        SetBound::Product => T::one() - (T::one() - epsilon).powf(T::one() / kf),
    })
}

/// The guardband selection loop with conformal bounds. `group` labels the
/// whole stream (typically the kernel).
pub fn plan_conformal<T: Scalar>(
    stream: &[PnrConfiguration<T>],
    knobs: &PlannerKnobs<T>,
    table: &QuantileTable<T>,
    group: Option<&str>,
    predictor: &dyn PowerPredictor<T>,
) -> Result<PlannerResult<T>> {
    let bounds = |x: &PnrConfiguration<T>, mu: T| {
        (
            conformal_upper_bound(table, mu, x.freq_mhz, group, BoundMode::Anchor),
            conformal_upper_bound(table, mu, x.freq_mhz, group, BoundMode::Spec),
        )
    };
    let mut result = select_with_bounds(stream, knobs, predictor, &bounds, PlannerMode::Conformal)?;
    let probe = conformal_upper_bound(table, T::zero(), T::one(), group, BoundMode::Anchor);
    if probe.is_infinite() {
        result.notes.push("anchor quantile is unbounded: too few calibration points for alpha_anchor".into());
    }
    Ok(result)
}
