//! Exhaustive search over a grid of per-event error models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PlannerMode, PlannerResult, Role, Selected};
use crate::domain::PnrConfiguration;
use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::predict::ModelPredictor;
use crate::scalar::Scalar;

pub const DEFAULT_MODEL_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ErrorBounds<T> {
    /// `(lo, hi)` multiplicative factor range per event, in model order.
    pub per_event: Vec<(T, T)>,
    pub steps_per_event: usize,
    pub budget: usize,
}

impl<T: Scalar> ErrorBounds<T> {
    /// The same `(lo, hi)` range for all `events` events.
    pub fn uniform(events: usize, lo: T, hi: T, steps_per_event: usize) -> Self {
        ErrorBounds { per_event: vec![(lo, hi); events], steps_per_event, budget: DEFAULT_MODEL_BUDGET }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps_per_event == 0 {
            return Err(Error::rejected("steps_per_event must be >= 1"));
        }
        for &(lo, hi) in &self.per_event {
            if !(lo.is_finite() && hi.is_finite() && lo > T::zero() && lo <= T::one() && T::one() <= hi) {
                return Err(Error::rejected("error bounds need 0 < lo <= 1 <= hi"));
            }
            if lo < hi && self.steps_per_event < 2 {
                return Err(Error::rejected("a non-degenerate range needs steps_per_event >= 2"));
            }
        }
        Ok(())
    }

    /// Number of models in the grid, saturating at `usize::MAX`.
    pub fn model_count(&self) -> usize {
        self.per_event
            .iter()
            .map(|&(lo, hi)| if lo < hi { self.steps_per_event } else { 1 })
            .fold(1usize, |acc, s| acc.saturating_mul(s))
    }

    fn levels(&self) -> Vec<Vec<T>> {
        self.per_event
            .iter()
            .map(|&(lo, hi)| {
                if lo < hi {
                    let last = T::from_usize_lossy(self.steps_per_event - 1);
                    (0..self.steps_per_event)
                        .map(|i| if i + 1 == self.steps_per_event { hi } else { lo + (hi - lo) * T::from_usize_lossy(i) / last })
                        .collect()
                } else {
                    vec![lo]
                }
            })
            .collect()
    }
}

/// Factor tuples of the grid in lexicographic order (last event fastest).
pub fn error_grid<T: Scalar>(bounds: &ErrorBounds<T>) -> Result<Vec<Vec<T>>> {
    bounds.validate()?;
    let count = bounds.model_count();
    if count > bounds.budget {
        return Err(Error::rejected(format!(
            "error grid has {count} models, above the budget of {}; raise the budget to at least {count}",
            bounds.budget
        )));
    }
    let levels = bounds.levels();
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; levels.len()];
    loop {
        out.push(idx.iter().zip(&levels).map(|(&i, l)| l[i]).collect());
        let mut d = levels.len();
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < levels[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// One model per grid point, with each event's cost scaled by its factor.
pub fn enumerate_error_models<T: Scalar>(base: &EnergyModel<T>, bounds: &ErrorBounds<T>) -> Result<Vec<EnergyModel<T>>> {
    if bounds.per_event.len() != base.num_events() {
        return Err(Error::rejected("bounds must list one range per model event"));
    }
    error_grid(bounds)?.iter().map(|f| base.with_scaled_alpha(f)).collect()
}

/// For each error model, the candidate with the highest predicted power that
/// stays under the cap; returns the union of those picks.
///
/// Ties in predicted power go to the higher frequency, then the earlier
/// iteration. The pick under the all-`hi` model (the most pessimistic corner)
/// is labeled the anchor.
pub fn plan_bounded_error<T: Scalar>(
    candidates: &[PnrConfiguration<T>],
    base: &EnergyModel<T>,
    bounds: &ErrorBounds<T>,
    cap_mw: T,
) -> Result<PlannerResult<T>> {
    if !(cap_mw > T::zero()) || cap_mw.is_nan() {
        return Err(Error::rejected("cap must be > 0"));
    }
    if bounds.per_event.len() != base.num_events() {
        return Err(Error::rejected("bounds must list one range per model event"));
    }
    let grid = error_grid(bounds)?;
    let predictor = ModelPredictor::new(base.clone());
    // Per-candidate dynamic contributions at the candidate's own frequency.
    let contrib: Vec<Vec<T>> = candidates
        .iter()
        .map(|c| {
            let scale = c.freq_mhz / base.train_op().freq_mhz;
            Ok(predictor.contributions(&c.events)?.into_iter().map(|v| v * scale).collect())
        })
        .collect::<Result<_>>()?;
    let leak = base.leak_mw();
    let base_pred: Vec<T> = contrib.iter().map(|c| c.iter().copied().sum::<T>() + leak).collect();

    let better = |a: usize, pa: T, b: usize, pb: T| -> bool {
        if pa != pb {
            return pa > pb;
        }
        let (ca, cb) = (&candidates[a], &candidates[b]);
        if ca.freq_mhz != cb.freq_mhz {
            return ca.freq_mhz > cb.freq_mhz;
        }
        ca.iteration < cb.iteration
    };
    let picks: Vec<Option<(usize, T)>> = grid
        .par_iter()
        .map(|factors| {
            let mut best: Option<(usize, T)> = None;
            for (j, c) in contrib.iter().enumerate() {
                let p = c.iter().zip(factors).map(|(&v, &f)| v * f).sum::<T>() + leak;
                if p <= cap_mw && best.is_none_or(|(b, pb)| better(j, p, b, pb)) {
                    best = Some((j, p));
                }
            }
            best
        })
        .collect();

    let mut result = PlannerResult::empty(PlannerMode::BoundedError);
    result.models_evaluated = grid.len();
    result.infeasible_models = picks.iter().filter(|p| p.is_none()).count();
    if result.infeasible_models > 0 {
        result.notes.push(format!("{} error models have no candidate under the cap", result.infeasible_models));
    }
    // Upper bound for a pick: the largest prediction among models choosing it.
    let mut chosen: Vec<(usize, T)> = Vec::new();
    for &(j, p) in picks.iter().flatten() {
        let key = (&candidates[j].graph_id, candidates[j].freq_mhz);
        match chosen.iter_mut().find(|(i, _)| (&candidates[*i].graph_id, candidates[*i].freq_mhz) == key) {
            Some(entry) => entry.1 = entry.1.max(p),
            None => chosen.push((j, p)),
        }
    }
    chosen.sort_by(|a, b| {
        let (ca, cb) = (&candidates[a.0], &candidates[b.0]);
        ca.freq_mhz.partial_cmp(&cb.freq_mhz).unwrap().then_with(|| ca.graph_id.cmp(&cb.graph_id))
    });
    let anchor = picks.last().copied().flatten().map(|(j, _)| j);
    for (j, ub) in chosen {
        let same_as_anchor = anchor.is_some_and(|a| {
            candidates[a].graph_id == candidates[j].graph_id && candidates[a].freq_mhz == candidates[j].freq_mhz
        });
        result.selected.push(Selected {
            config: candidates[j].clone(),
            pred_mw: Some(base_pred[j]),
            upper_bound_mw: Some(ub),
            role: if same_as_anchor { Role::Anchor } else { Role::Speculative },
        });
    }
    Ok(result)
}
