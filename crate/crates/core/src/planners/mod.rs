//! Cap-aware selection over a stream of routed candidates.
//!
//! Guardband and conformal planners share one selection loop (an anchor plus
//! a diversity-scored speculative set, stopping at the first candidate whose
//! speculative bound exceeds the cap); they differ only in how the two upper
//! bounds are computed. The bounded-error planner searches a grid of
//! per-event error models instead.

mod bounded;
mod conformal;

pub use bounded::{enumerate_error_models, error_grid, plan_bounded_error, ErrorBounds, DEFAULT_MODEL_BUDGET};
pub use conformal::{
    calibrate_conformal, conformal_upper_bound, conformal_quantile, map_set_confidence, plan_conformal,
    BoundMode, CalibrationSample, ConformalConfig, GroupQuantiles, QuantileTable, SetBound,
};

use serde::{Deserialize, Serialize};

use crate::domain::PnrConfiguration;
use crate::error::{Error, Result};
use crate::linalg::cosine;
use crate::predict::PowerPredictor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PlannerKnobs<T> {
    pub cap_mw: T,
    pub k: usize,
    pub gamma_anchor: T,
    pub gamma_spec: T,
    pub diversity_lambda: T,
    pub min_freq_step_mhz: T,
}

impl<T: Scalar> PlannerKnobs<T> {
    /// Knobs with the default margins (30% speculative, 45% anchor) and K = 4.
    pub fn with_cap(cap_mw: T) -> Self {
        PlannerKnobs {
            cap_mw,
            k: 4,
            gamma_anchor: T::lit(0.45),
            gamma_spec: T::lit(0.30),
            diversity_lambda: T::zero(),
            min_freq_step_mhz: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap_mw > T::zero()) || self.cap_mw.is_nan() {
            return Err(Error::rejected("cap must be > 0"));
        }
        if self.k == 0 {
            return Err(Error::rejected("k must be >= 1"));
        }
        let nonneg = |v: T| v.is_finite() && v >= T::zero();
        if !nonneg(self.gamma_anchor) || !nonneg(self.gamma_spec) {
            return Err(Error::rejected("guardbands must be finite and >= 0"));
        }
        if self.gamma_spec > self.gamma_anchor {
            return Err(Error::rejected("gamma_spec must not exceed gamma_anchor"));
        }
        if !nonneg(self.diversity_lambda) || !nonneg(self.min_freq_step_mhz) {
            return Err(Error::rejected("diversity weight and frequency step must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Guardband,
    Conformal,
    BoundedError,
    Baseline,
}

impl PlannerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMode::Guardband => "guardband",
            PlannerMode::Conformal => "conformal",
            PlannerMode::BoundedError => "bounded_error",
            PlannerMode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Anchor,
    Speculative,
    /// Returned without any power check.
    Unchecked,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Anchor => "anchor",
            Role::Speculative => "speculative",
            Role::Unchecked => "unchecked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Selected<T> {
    pub config: PnrConfiguration<T>,
    pub pred_mw: Option<T>,
    pub upper_bound_mw: Option<T>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PlannerResult<T> {
    pub mode: PlannerMode,
    pub selected: Vec<Selected<T>>,
    /// Iteration of the candidate that triggered the stop, if any.
    pub stopped_at_iteration: Option<u64>,
    pub notes: Vec<String>,
    /// Error models searched (bounded-error planner only).
    pub models_evaluated: usize,
    /// Error models with no candidate under the cap (bounded-error only).
    pub infeasible_models: usize,
}

impl<T: Scalar> PlannerResult<T> {
    fn empty(mode: PlannerMode) -> Self {
        PlannerResult {
            mode,
            selected: vec![],
            stopped_at_iteration: None,
            notes: vec![],
            models_evaluated: 0,
            infeasible_models: 0,
        }
    }

    pub fn anchor(&self) -> Option<&Selected<T>> {
        self.selected.iter().find(|s| s.role == Role::Anchor)
    }
}

/// `f(x) − λ Σ_y cos(φ(x), φ(y))`; a zero feature vector has cosine 0.
pub fn score_candidate<T: Scalar>(freq_mhz: T, phi: &[T], set: &[&[T]], lambda: T) -> T {
    let penalty: T = set.iter().map(|y| cosine(phi, y)).sum();
    freq_mhz - lambda * penalty
}

/// Diversity features standardized to zero mean and unit variance over the
/// stream; constant features become 0.
pub fn standardized_features<T: Scalar>(stream: &[PnrConfiguration<T>]) -> Result<Vec<Vec<T>>> {
    let Some(first) = stream.first() else { return Ok(vec![]) };
    let d = first.features.len();
    if stream.iter().any(|c| c.features.len() != d) {
        return Err(Error::rejected("all candidates must have the same number of features"));
    }
    let n = T::from_usize_lossy(stream.len());
    let mut out: Vec<Vec<T>> = stream.iter().map(|c| c.features.clone()).collect();
    for j in 0..d {
        let mean = stream.iter().map(|c| c.features[j]).sum::<T>() / n;
        let var = stream.iter().map(|c| (c.features[j] - mean) * (c.features[j] - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        for row in &mut out {
            row[j] = if sd > T::zero() { (row[j] - mean) / sd } else { T::zero() };
        }
    }
    Ok(out)
}

fn check_stream<T: Scalar>(stream: &[PnrConfiguration<T>]) -> Result<()> {
    if stream.windows(2).any(|w| w[1].freq_mhz < w[0].freq_mhz) {
        return Err(Error::rejected("candidate stream must be in non-decreasing frequency"));
    }
    Ok(())
}

/// Upper bounds `(U_anchor, U_spec)` for a candidate with prediction `mu`.
pub(crate) type BoundFn<'a, T> = dyn Fn(&PnrConfiguration<T>, T) -> (T, T) + 'a;

struct Member<T> {
    idx: usize,
    pred: T,
    bound: T,
}

/// The anchor/speculative selection loop shared by the guardband and
/// conformal planners.
pub(crate) fn select_with_bounds<T: Scalar>(
    stream: &[PnrConfiguration<T>],
    knobs: &PlannerKnobs<T>,
    predictor: &dyn PowerPredictor<T>,
    bounds: &BoundFn<'_, T>,
    mode: PlannerMode,
) -> Result<PlannerResult<T>> {
    knobs.validate()?;
    check_stream(stream)?;
    let mut result = PlannerResult::empty(mode);
    if stream.is_empty() {
        result.notes.push("empty candidate stream".into());
        return Ok(result);
    }
    let phi = standardized_features(stream)?;
    let cap = knobs.cap_mw;
    // The pool keeps K members so the returned set still reaches K when the
    // anchor is itself one of them.
    let capacity = knobs.k;
    let score = |i: usize, others: &[&Member<T>]| -> T {
        let set: Vec<&[T]> = others.iter().map(|m| phi[m.idx].as_slice()).collect();
        score_candidate(stream[i].freq_mhz, &phi[i], &set, knobs.diversity_lambda)
    };

    let mut anchor: Option<Member<T>> = None;
    let mut spec: Vec<Member<T>> = Vec::new();
    let mut f_prev = T::zero();
    for (i, x) in stream.iter().enumerate() {
        if x.freq_mhz < f_prev + knobs.min_freq_step_mhz {
            continue;
        }
        let mu = predictor.predict_power(x)?;
        let (u_anc, u_spec) = bounds(x, mu);
        if u_anc <= cap {
            anchor = Some(Member { idx: i, pred: mu, bound: u_anc });
        }
        if u_spec <= cap {
            if spec.len() < capacity {
                spec.push(Member { idx: i, pred: mu, bound: u_spec });
            } else {
                // Both scores are taken against the set that remains if the
                // lowest-scoring member is removed.
                let score_in_place = |j: usize| {
                    let others: Vec<&Member<T>> = spec.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, m)| m).collect();
                    (score(spec[j].idx, &others), others)
                };
                let mut worst = 0;
                let (mut worst_score, _) = score_in_place(0);
                for j in 1..spec.len() {
                    let (s, _) = score_in_place(j);
                    if s < worst_score {
                        worst = j;
                        worst_score = s;
                    }
                }
                let (_, others) = score_in_place(worst);
                if score(i, &others) > worst_score {
                    spec[worst] = Member { idx: i, pred: mu, bound: u_spec };
                }
            }
        } else {
            result.stopped_at_iteration = Some(x.iteration);
            break;
        }
        f_prev = x.freq_mhz;
    }

    let anchor_id = anchor.as_ref().map(|a| stream[a.idx].graph_id.clone());
    match &anchor {
        Some(a) => result.selected.push(Selected {
            config: stream[a.idx].clone(),
            pred_mw: Some(a.pred),
            upper_bound_mw: Some(a.bound),
            role: Role::Anchor,
        }),
        None => result.notes.push("no candidate passed the anchor bound".into()),
    }
    // Rank the pool by score against the rest of the pool, then fill up to K.
    let mut ranked: Vec<(T, &Member<T>)> = spec
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let others: Vec<&Member<T>> = spec.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, o)| o).collect();
            (score(m.idx, &others), m)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| stream[b.1.idx].freq_mhz.partial_cmp(&stream[a.1.idx].freq_mhz).unwrap())
            .then_with(|| stream[a.1.idx].graph_id.cmp(&stream[b.1.idx].graph_id))
    });
    let mut chosen: Vec<&Member<T>> = Vec::new();
    for (_, m) in ranked {
        let id = &stream[m.idx].graph_id;
        if result.selected.len() + chosen.len() >= knobs.k {
            break;
        }
        if Some(id) == anchor_id.as_ref() || chosen.iter().any(|c| &stream[c.idx].graph_id == id) {
            continue;
        }
        chosen.push(m);
    }
    chosen.sort_by(|a, b| {
        stream[b.idx]
            .freq_mhz
            .partial_cmp(&stream[a.idx].freq_mhz)
            .unwrap()
            .then_with(|| stream[a.idx].graph_id.cmp(&stream[b.idx].graph_id))
    });
    for m in chosen {
        result.selected.push(Selected {
            config: stream[m.idx].clone(),
            pred_mw: Some(m.pred),
            upper_bound_mw: Some(m.bound),
            role: Role::Speculative,
        });
    }
    Ok(result)
}

/// Fixed multiplicative margins: `U = (1 + γ) μ`.
pub fn plan_guardband<T: Scalar>(
    stream: &[PnrConfiguration<T>],
    knobs: &PlannerKnobs<T>,
    predictor: &dyn PowerPredictor<T>,
) -> Result<PlannerResult<T>> {
    let (ga, gs) = (knobs.gamma_anchor, knobs.gamma_spec);
    let bounds = move |_: &PnrConfiguration<T>, mu: T| ((T::one() + ga) * mu, (T::one() + gs) * mu);
    select_with_bounds(stream, knobs, predictor, &bounds, PlannerMode::Guardband)
}

/// No power check: returns the last (highest-frequency) candidate.
pub fn plan_baseline<T: Scalar>(stream: &[PnrConfiguration<T>]) -> PlannerResult<T> {
    let mut result = PlannerResult::empty(PlannerMode::Baseline);
    if let Some(last) = stream.last() {
        result.selected.push(Selected { config: last.clone(), pred_mw: None, upper_bound_mw: None, role: Role::Unchecked });
    } else {
        result.notes.push("empty candidate stream".into());
    }
    result
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn stream(powers: &[f64]) -> Vec<PnrConfiguration<f64>> {
        powers
            .iter()
            .enumerate()
            .map(|(t, &p)| candidate(t as u64, 100.0 + 10.0 * t as f64, p, vec![t as f64, 1.0]))
            .collect()
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_candidate(250.0, &[1.0, 0.0], &[], 10.0), 250.0);
        assert_eq!(score_candidate(250.0, &[1.0, 2.0], &[&[1.0, 2.0]], 10.0), 240.0);
        assert_eq!(score_candidate(250.0, &[1.0, 0.0], &[&[0.0, 3.0]], 10.0), 250.0);
        assert_eq!(score_candidate(250.0, &[0.0, 0.0], &[&[1.0, 3.0]], 10.0), 250.0);
    }

    #[test]
    fn boundary_is_admissible() {
        let s = stream(&[100.0]);
        let knobs = PlannerKnobs { cap_mw: 130.0, gamma_anchor: 0.30, ..PlannerKnobs::with_cap(130.0) };
        let r = plan_guardband(&s, &knobs, &unit_predictor).unwrap();
        assert_eq!(r.selected.len(), 1);
        assert_eq!(r.selected[0].upper_bound_mw, Some(130.0));
    }

    #[test]
    fn unbounded_cap_returns_latest() {
        let s = stream(&[10.0, 20.0, 30.0, 40.0, 50.0, 60.0]);
        let r = plan_guardband(&s, &PlannerKnobs::with_cap(1e12), &unit_predictor).unwrap();
        assert_eq!(r.anchor().unwrap().config.iteration, 5);
        assert_eq!(r.selected.len(), 4);
        let ids: Vec<u64> = r.selected.iter().map(|s| s.config.iteration).collect();
        assert_eq!(ids, vec![5, 4, 3, 2]);
        let short = plan_guardband(&s[..2], &PlannerKnobs::with_cap(1e12), &unit_predictor).unwrap();
        assert_eq!(short.selected.len(), 2);
        assert_eq!(r.stopped_at_iteration, None);
    }

    #[test]
    fn break_on_first_spec_violation() {
        let s = stream(&[10.0, 20.0, 90.0, 30.0]);
        let r = plan_guardband(&s, &PlannerKnobs::with_cap(50.0), &unit_predictor).unwrap();
        assert_eq!(r.stopped_at_iteration, Some(2));
        assert!(r.selected.iter().all(|x| x.config.iteration < 2));
    }

    #[test]
    fn no_anchor_is_reported() {
        let s = stream(&[36.0]);
        // spec bound 46.8 passes, anchor bound 52.2 does not.
        let r = plan_guardband(&s, &PlannerKnobs::with_cap(50.0), &unit_predictor).unwrap();
        assert!(r.anchor().is_none());
        assert_eq!(r.selected.len(), 1);
        assert_eq!(r.selected[0].role, Role::Speculative);
        assert!(!r.notes.is_empty());
    }

    #[test]
    fn empty_stream() {
        let r = plan_guardband(&[], &PlannerKnobs::with_cap(50.0), &unit_predictor).unwrap();
        assert!(r.selected.is_empty());
        assert_eq!(r.mode, PlannerMode::Guardband);
        assert!(plan_baseline::<f64>(&[]).selected.is_empty());
    }

    #[test]
    fn baseline_returns_last() {
        let s = stream(&[1.0, 2.0, 3.0]);
        let r = plan_baseline(&s);
        assert_eq!(r.selected.len(), 1);
        assert_eq!(r.selected[0].config.iteration, 2);
        assert_eq!(plan_baseline(&s[..1]).selected[0].config.iteration, 0);
    }

    #[test]
    fn frequency_step_filter() {
        let s = stream(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let knobs = PlannerKnobs { min_freq_step_mhz: 15.0, k: 5, ..PlannerKnobs::with_cap(1e9) };
        let r = plan_guardband(&s, &knobs, &unit_predictor).unwrap();
        let mut f: Vec<f64> = r.selected.iter().map(|x| x.config.freq_mhz).collect();
        f.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(f, vec![100.0, 120.0, 140.0]);
    }

    #[test]
    fn rejects_bad_knobs_and_order() {
        let s = stream(&[1.0]);
        let knobs = PlannerKnobs { gamma_spec: 0.5, gamma_anchor: 0.3, ..PlannerKnobs::with_cap(10.0) };
        assert!(plan_guardband(&s, &knobs, &unit_predictor).is_err());
        let knobs = PlannerKnobs { k: 0, ..PlannerKnobs::with_cap(10.0) };
        assert!(plan_guardband(&s, &knobs, &unit_predictor).is_err());
        let mut s = stream(&[1.0, 2.0]);
        s[1].freq_mhz = 50.0;
        assert!(plan_guardband(&s, &PlannerKnobs::with_cap(10.0), &unit_predictor).is_err());
    }

    #[test]
    fn standardization_zeroes_constant_features() {
        let s = stream(&[1.0, 2.0, 3.0]);
        let phi = standardized_features(&s).unwrap();
        assert!(phi.iter().all(|p| p[1] == 0.0));
        let mean: f64 = phi.iter().map(|p| p[0]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
    }
}
