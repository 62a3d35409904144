//! Fitting the energy model from row-level power supervision.
//!
//! The hierarchical fit minimizes
//!
//! ```text
//! Σ_k ‖y_k − W diag(α) x_k‖² + λ_W ‖W‖₁ + λ_α ‖α‖²,   W, α ≥ 0
//! ```
//!
//! by alternating an exact `W` block update (one independent NNLS per report
//! row, since row `r` of the prediction depends only on row `r` of `W`), a
//! column rescale that moves each column's L1 norm into `α`, and an exact
//! nonnegative ridge update of `α`.
//!
//! The rescale leaves predictions unchanged but not the penalty terms. An
//! outer iteration whose rescaled result would raise the objective falls back
//! to the un-rescaled `W` for that iteration; the model is canonicalized once
//! more on export. This keeps the recorded objective trace monotone.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{align_to, AlignedSamples, OperatingPoint};
use crate::error::{Error, Result};
use crate::eval::mape;
use crate::linalg::Matrix;
use crate::model::{rescale_columns, EnergyModel, ModelKind, AGGREGATE_ROW, LEAKAGE_ROW};
use crate::nnls::{nnls_solve, solve_gram};
use crate::predict::predict_total;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitOptions<T> {
    pub lambda_w: T,
    pub lambda_alpha: T,
    pub max_outer_iters: usize,
    pub rel_tol: T,
    /// Recorded for provenance; the alternating scheme itself is deterministic.
    pub seed: u64,
    pub fit_leakage: bool,
    /// Early-stopping patience in outer iterations (validated fits only).
    pub patience: usize,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            lambda_w: T::lit(1e-4),
            lambda_alpha: T::lit(1e-6),
            max_outer_iters: 200,
            rel_tol: T::lit(1e-6),
            seed: 0,
            fit_leakage: false,
            patience: 5,
        }
    }
}

impl<T: Scalar> FitOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite() && v >= T::zero();
        if !ok(self.lambda_w) || !ok(self.lambda_alpha) {
            return Err(Error::rejected("regularization weights must be finite and >= 0"));
        }
        if !(self.rel_tol > T::zero() && self.rel_tol < T::one()) {
            return Err(Error::rejected("rel_tol must lie in (0, 1)"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::rejected("max_outer_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitReport<T> {
    /// Objective at initialization followed by one value per outer iteration.
    pub objective_trace: Vec<T>,
    pub converged: bool,
    pub iters_used: usize,
    /// Outer iterations that kept the un-rescaled `W` to stay monotone.
    pub rescale_skips: usize,
    /// Objective of the exported (canonical) model.
    pub final_objective: T,
    /// Iteration whose parameters were returned, for validated fits.
    pub best_iteration: Option<usize>,
}

/// Dense view of aligned samples, plus an optional constant leakage column.
struct Problem<T> {
    x: Matrix<T>,
    y: Matrix<T>,
    leak_col: Option<usize>,
    event_names: Vec<String>,
    row_paths: Vec<String>,
    train_op: OperatingPoint<T>,
}

impl<T: Scalar> Problem<T> {
    fn new(data: &AlignedSamples<T>, fit_leakage: bool) -> Result<Self> {
        let e = data.event_names.len();
        let r = data.row_paths.len();
        if e == 0 || r == 0 {
            return Err(Error::rejected("need at least one event and one report row"));
        }
        let first = data.samples.first().ok_or_else(|| Error::rejected("no samples to fit"))?;
        let train_op = first.report.op().clone();
        if data.samples.iter().any(|s| s.report.op() != &train_op) {
            return Err(Error::rejected("all samples must share one operating point"));
        }
        let cols = e + usize::from(fit_leakage);
        let mut x = Matrix::zeros(data.len(), cols);
        let mut y = Matrix::zeros(data.len(), r);
        for (k, s) in data.samples.iter().enumerate() {
            if s.events.names() != data.event_names.as_slice() || s.report.rows().len() != r {
                return Err(Error::rejected("samples are not aligned to the shared orders"));
            }
            x.row_mut(k)[..e].copy_from_slice(s.events.counts());
            if fit_leakage {
                x[(k, e)] = T::one();
            }
            y.row_mut(k).copy_from_slice(&s.report.powers());
        }
        Ok(Problem {
            x,
            y,
            leak_col: fit_leakage.then_some(e),
            event_names: data.event_names.clone(),
            row_paths: data.row_paths.clone(),
            train_op,
        })
    }

    fn rows(&self) -> usize {
        self.y.cols()
    }

    fn cols(&self) -> usize {
        self.x.cols()
    }

    fn totals(&self) -> Vec<T> {
        (0..self.y.rows()).map(|k| self.y.row(k).iter().copied().sum()).collect()
    }

    fn ridge_weight(&self, e: usize, lambda_alpha: T) -> T {
        if Some(e) == self.leak_col {
            T::zero()
        } else {
            lambda_alpha
        }
    }
}

#[derive(Debug, Clone)]
struct State<T> {
    w: Matrix<T>,
    alpha: Vec<T>,
}

fn objective<T: Scalar>(p: &Problem<T>, s: &State<T>, opts: &FitOptions<T>) -> T {
    let mut fit = T::zero();
    for k in 0..p.x.rows() {
        let scaled: Vec<T> = p.x.row(k).iter().zip(&s.alpha).map(|(&x, &a)| x * a).collect();
        let pred = s.w.mul_vec(&scaled);
        fit += pred.iter().zip(p.y.row(k)).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    let l1: T = s.w.as_slice().iter().copied().sum();
    let l2: T = s.alpha.iter().enumerate().map(|(e, &a)| p.ridge_weight(e, opts.lambda_alpha) * a * a).sum();
    fit + opts.lambda_w * l1 + l2
}

/// Exact minimization over `W` with `α` fixed: one NNLS per report row.
fn w_step<T: Scalar>(p: &Problem<T>, s: &mut State<T>, lambda_w: T) {
    let k = p.x.rows();
    let cols = p.cols();
    // Design D[k, e] = α_e x_ke, restricted to columns that can be identified.
    let active: Vec<usize> =
        (0..cols).filter(|&e| s.alpha[e] > T::zero() && (0..k).any(|i| p.x[(i, e)] > T::zero())).collect();
    if active.is_empty() {
        return;
    }
    let mut d = Matrix::zeros(k, active.len());
    for i in 0..k {
        for (j, &e) in active.iter().enumerate() {
            d[(i, j)] = s.alpha[e] * p.x[(i, e)];
        }
    }
    let q = d.gram();
    let half_l1 = T::lit(0.5) * lambda_w;
    let rows: Vec<Vec<T>> = (0..p.rows())
        .into_par_iter()
        .map(|r| {
            let target = p.y.column(r);
            let c: Vec<T> = d.tr_mul_vec(&target).into_iter().map(|v| v - half_l1).collect();
            solve_gram(&q, &c)
        })
        .collect();
    for (r, sol) in rows.into_iter().enumerate() {
        for (j, &e) in active.iter().enumerate() {
            s.w[(r, e)] = sol[j];
        }
    }
}

/// Exact minimization over `α` with `W` fixed (nonnegative ridge).
fn alpha_step<T: Scalar>(p: &Problem<T>, s: &mut State<T>, lambda_alpha: T) {
    let cols = p.cols();
    let g = s.w.gram();
    let xg = p.x.gram();
    let mut q = Matrix::zeros(cols, cols);
    for i in 0..cols {
        for j in 0..cols {
            q[(i, j)] = xg[(i, j)] * g[(i, j)];
        }
        q[(i, i)] += p.ridge_weight(i, lambda_alpha);
    }
    let mut c = vec![T::zero(); cols];
    for k in 0..p.x.rows() {
        let wy = s.w.tr_mul_vec(p.y.row(k));
        for e in 0..cols {
            c[e] += p.x[(k, e)] * wy[e];
        }
    }
    s.alpha = solve_gram(&q, &c);
}

fn init_state<T: Scalar>(p: &Problem<T>) -> Result<State<T>> {
    let r = p.rows();
    let w = Matrix::filled(r, p.cols(), T::one() / T::from_usize_lossy(r));
    let alpha = nnls_solve(&p.x, &p.totals(), T::zero())?;
    Ok(State { w, alpha })
}

fn export<T: Scalar>(p: &Problem<T>, s: &State<T>, kind: ModelKind) -> Result<EnergyModel<T>> {
    let mut s = s.clone();
    rescale_columns(&mut s.w, &mut s.alpha);
    let e = p.event_names.len();
    let leak = p.leak_col.map_or(T::zero(), |c| s.alpha[c] * s.w.col_sum(c));
    let mut row_paths = p.row_paths.clone();
    let extra = usize::from(p.leak_col.is_some());
    let mut w = Matrix::zeros(p.rows() + extra, e);
    for r in 0..p.rows() {
        w.row_mut(r).copy_from_slice(&s.w.row(r)[..e]);
    }
    if extra == 1 {
        row_paths.push(LEAKAGE_ROW.to_string());
    }
    EnergyModel::new(p.event_names.clone(), row_paths, w, s.alpha[..e].to_vec(), leak, p.train_op.clone(), kind)
}

/// Inverse of [`export`] for a model already expressed over `p`'s orders.
fn import<T: Scalar>(p: &Problem<T>, model: &EnergyModel<T>) -> State<T> {
    let e = p.event_names.len();
    let r = p.rows();
    let mut w = Matrix::zeros(r, p.cols());
    for row in 0..r {
        w.row_mut(row)[..e].copy_from_slice(model.w().row(row));
    }
    let mut alpha = model.alpha().to_vec();
    if let Some(c) = p.leak_col {
        for row in 0..r {
            w[(row, c)] = T::one() / T::from_usize_lossy(r);
        }
        alpha.push(model.leak_mw());
    }
    State { w, alpha }
}

/// Uniform `W` (each column sums to one) and `α` from an NNLS fit of the
/// event counts to total power.
pub fn init_model<T: Scalar>(data: &AlignedSamples<T>, opts: &FitOptions<T>) -> Result<EnergyModel<T>> {
    opts.validate()?;
    let p = Problem::new(data, opts.fit_leakage)?;
    let s = init_state(&p)?;
    export(&p, &s, ModelKind::Hierarchical)
}

struct OuterOutcome<T> {
    state: State<T>,
    objective: T,
    skipped_rescale: bool,
}

fn outer_step<T: Scalar>(p: &Problem<T>, s: &State<T>, opts: &FitOptions<T>, prev: T) -> OuterOutcome<T> {
    let mut after_w = s.clone();
    w_step(p, &mut after_w, opts.lambda_w);

    let mut rescaled = after_w.clone();
    rescale_columns(&mut rescaled.w, &mut rescaled.alpha);
    alpha_step(p, &mut rescaled, opts.lambda_alpha);
    let j = objective(p, &rescaled, opts);
    if j <= prev + T::lit(1e-12) * (T::one() + prev.abs()) {
        return OuterOutcome { state: rescaled, objective: j, skipped_rescale: false };
    }
    alpha_step(p, &mut after_w, opts.lambda_alpha);
    let j = objective(p, &after_w, opts);
    OuterOutcome { state: after_w, objective: j, skipped_rescale: true }
}

fn relative_change<T: Scalar>(prev: T, cur: T) -> T {
    (prev - cur).abs() / prev.abs().max(T::min_positive_value())
}

fn trace_f64<T: Scalar>(trace: &[T]) -> Vec<f64> {
    trace.iter().map(|v| v.to_f64_lossy()).collect()
}

/// Runs up to `iters` outer iterations from `state`.
fn alternate<T: Scalar>(
    p: &Problem<T>,
    mut state: State<T>,
    opts: &FitOptions<T>,
    iters: usize,
    stop_on_convergence: bool,
    mut on_iter: impl FnMut(usize, &State<T>) -> bool,
) -> Result<(State<T>, FitReport<T>)> {
    let mut prev = objective(p, &state, opts);
    // Below this the objective is rounding noise and its direction means nothing.
    let floor = T::epsilon() * T::lit(1e3) * prev.abs();
    let mut trace = vec![prev];
    let mut converged = false;
    let mut increases = 0;
    let mut skips = 0;
    let mut used = 0;
    for it in 1..=iters {
        let out = outer_step(p, &state, opts, prev);
        used = it;
        if !out.objective.is_finite() {
            trace.push(out.objective);
            return Err(Error::Fit { reason: "objective became non-finite".into(), trace: trace_f64(&trace) });
        }
        if out.objective - prev > opts.rel_tol * prev.abs() && out.objective > floor {
            increases += 1;
        } else {
            increases = 0;
        }
        trace.push(out.objective);
        if increases >= 3 {
            return Err(Error::Fit {
                reason: "objective increased for 3 consecutive outer iterations".into(),
                trace: trace_f64(&trace),
            });
        }
        skips += usize::from(out.skipped_rescale);
        let change = relative_change(prev, out.objective);
        state = out.state;
        prev = out.objective;
        let stop = on_iter(it, &state);
        if stop_on_convergence && (change < opts.rel_tol || prev <= floor) {
            converged = true;
            break;
        }
        if stop {
            break;
        }
    }
    let report = FitReport {
        objective_trace: trace,
        converged,
        iters_used: used,
        rescale_skips: skips,
        final_objective: T::nan(),
        best_iteration: None,
    };
    Ok((state, report))
}

fn finish<T: Scalar>(
    p: &Problem<T>,
    s: &State<T>,
    opts: &FitOptions<T>,
    mut report: FitReport<T>,
) -> Result<(EnergyModel<T>, FitReport<T>)> {
    let mut canonical = s.clone();
    rescale_columns(&mut canonical.w, &mut canonical.alpha);
    report.final_objective = objective(p, &canonical, opts);
    Ok((export(p, s, ModelKind::Hierarchical)?, report))
}

/// Fits `(W, α)` by alternating nonnegative updates.
pub fn fit_hierarchical<T: Scalar>(
    data: &AlignedSamples<T>,
    opts: &FitOptions<T>,
) -> Result<(EnergyModel<T>, FitReport<T>)> {
    opts.validate()?;
    let p = Problem::new(data, opts.fit_leakage)?;
    let s0 = init_state(&p)?;
    let (s, report) = alternate(&p, s0, opts, opts.max_outer_iters, true, |_, _| false)?;
    finish(&p, &s, opts, report)
}

/// Hierarchical fit with early stopping on held-out total-power MAPE.
///
/// Returns the parameters from the iteration with the lowest validation
/// error; stops after `opts.patience` iterations without improvement.
pub fn fit_hierarchical_validated<T: Scalar>(
    train: &AlignedSamples<T>,
    validation: &AlignedSamples<T>,
    opts: &FitOptions<T>,
) -> Result<(EnergyModel<T>, FitReport<T>)> {
    opts.validate()?;
    if validation.event_names != train.event_names || validation.row_paths != train.row_paths {
        return Err(Error::rejected("validation samples must share the training orders"));
    }
    if validation.is_empty() {
        return Err(Error::rejected("validation set is empty"));
    }
    let p = Problem::new(train, opts.fit_leakage)?;
    let val = Problem::new(validation, opts.fit_leakage)?;
    let val_truth = val.totals();
    let score = |s: &State<T>| -> T {
        let beta: Vec<T> = (0..s.alpha.len()).map(|e| s.alpha[e] * s.w.col_sum(e)).collect();
        let pred: Vec<T> = (0..val.x.rows()).map(|k| crate::linalg::dot(val.x.row(k), &beta)).collect();
        mape(&pred, &val_truth).unwrap_or_else(|_| T::infinity())
    };
    let s0 = init_state(&p)?;
    let mut best = (score(&s0), 0usize, s0.clone());
    let patience = opts.patience.max(1);
    let (_, mut report) = alternate(&p, s0, opts, opts.max_outer_iters, true, |it, s| {
        let v = score(s);
        if v < best.0 {
            best = (v, it, s.clone());
        }
        it - best.1 >= patience
    })?;
    report.best_iteration = Some(best.1);
    finish(&p, &best.2, opts, report)
}

/// Scalar-aggregate baseline: `P = Σ_e α_e x_e (+ leak)` fitted to totals by
/// nonnegative ridge. The leakage intercept is not penalized.
pub fn fit_aggregate<T: Scalar>(data: &AlignedSamples<T>, opts: &FitOptions<T>) -> Result<EnergyModel<T>> {
    opts.validate()?;
    let p = Problem::new(data, opts.fit_leakage)?;
    let mut q = p.x.gram();
    for e in 0..p.cols() {
        q[(e, e)] += p.ridge_weight(e, opts.lambda_alpha);
    }
    let c = p.x.tr_mul_vec(&p.totals());
    let coef = solve_gram(&q, &c);
    let e = p.event_names.len();
    let leak = p.leak_col.map_or(T::zero(), |col| coef[col]);
    let mut row_paths = vec![AGGREGATE_ROW.to_string()];
    let mut w = Matrix::filled(1, e, T::one());
    if p.leak_col.is_some() {
        row_paths.push(LEAKAGE_ROW.to_string());
        let mut padded = Matrix::zeros(2, e);
        padded.row_mut(0).copy_from_slice(w.row(0));
        w = padded;
    }
    EnergyModel::new(
        p.event_names.clone(),
        row_paths,
        w,
        coef[..e].to_vec(),
        leak,
        p.train_op.clone(),
        ModelKind::Aggregate,
    )
}

/// Fits either model kind with the same options.
pub fn fit_kind<T: Scalar>(data: &AlignedSamples<T>, opts: &FitOptions<T>, kind: ModelKind) -> Result<EnergyModel<T>> {
    match kind {
        ModelKind::Hierarchical => fit_hierarchical(data, opts).map(|(m, _)| m),
        ModelKind::Aggregate => fit_aggregate(data, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HyperparameterChoice<T> {
    pub lambda_w: T,
    pub lambda_alpha: T,
    /// `(λ_W, λ_α, held-out MAPE %)` for every grid point, in grid order.
    pub scores: Vec<(T, T, T)>,
}

/// Held-out total-power MAPE over kernel-wise leave-one-out splits.
pub(crate) fn kernelwise_holdout_mape<T: Scalar>(
    data: &AlignedSamples<T>,
    opts: &FitOptions<T>,
    kind: ModelKind,
) -> Result<T> {
    let kernels = data.kernels();
    if kernels.len() < 2 {
        return Err(Error::rejected("kernel-wise validation needs at least 2 kernels"));
    }
    let folds: Vec<Result<(Vec<T>, Vec<T>)>> = kernels
        .par_iter()
        .map(|g| {
            let train = data.subset(|s| &s.kernel != g);
            let model = fit_kind(&train, opts, kind)?;
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for s in data.samples.iter().filter(|s| &s.kernel == g) {
                pred.push(predict_total(&model, &s.events)?);
                truth.push(s.report.total());
            }
            Ok((pred, truth))
        })
        .collect();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for f in folds {
        let (p, t) = f?;
        pred.extend(p);
        truth.extend(t);
    }
    mape(&pred, &truth)
}

/// Picks the grid point with the lowest kernel-wise held-out MAPE. Near-ties
/// go to the larger `λ_W`, then the larger `λ_α`.
pub fn select_hyperparameters<T: Scalar>(
    data: &AlignedSamples<T>,
    grid: &[(T, T)],
    base: &FitOptions<T>,
) -> Result<HyperparameterChoice<T>> {
    if grid.is_empty() {
        return Err(Error::rejected("hyperparameter grid is empty"));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &(lw, la) in grid {
        let opts = FitOptions { lambda_w: lw, lambda_alpha: la, ..base.clone() };
        scores.push((lw, la, kernelwise_holdout_mape(data, &opts, ModelKind::Hierarchical)?));
    }
    Ok(pick_best(scores))
}

fn pick_best<T: Scalar>(scores: Vec<(T, T, T)>) -> HyperparameterChoice<T> {
    let mut best = 0;
    for i in 1..scores.len() {
        let (lw, la, s) = scores[i];
        let (blw, bla, bs) = scores[best];
        let tol = T::lit(1e-12) * (T::one() + bs.abs());
        let better = if (s - bs).abs() <= tol { lw > blw || (lw == blw && la > bla) } else { s < bs };
        if better {
            best = i;
        }
    }
    let (lambda_w, lambda_alpha, _) = scores[best];
    HyperparameterChoice { lambda_w, lambda_alpha, scores }
}

/// Re-expresses `model` over larger event and row orders. New events get a
/// uniform column and zero cost; new rows start with zero weight.
pub fn extend_model<T: Scalar>(
    model: &EnergyModel<T>,
    event_names: &[String],
    row_paths: &[String],
) -> Result<EnergyModel<T>> {
    let old_rows = &model.row_paths()[..model.report_row_count()];
    if let Some(e) = model.event_names().iter().find(|e| !event_names.contains(e)) {
        return Err(Error::rejected(format!("extended event order drops '{e}'")));
    }
    if let Some(r) = old_rows.iter().find(|r| !row_paths.contains(r)) {
        return Err(Error::rejected(format!("extended row order drops '{r}'")));
    }
    let r_new = row_paths.len();
    let extra = usize::from(model.has_leakage_row());
    let mut w = Matrix::zeros(r_new + extra, event_names.len());
    let mut alpha = vec![T::zero(); event_names.len()];
    for (j, name) in event_names.iter().enumerate() {
        match model.event_names().iter().position(|n| n == name) {
            Some(old_j) => {
                alpha[j] = model.alpha()[old_j];
                for (i, path) in row_paths.iter().enumerate() {
                    if let Some(old_i) = old_rows.iter().position(|p| p == path) {
                        w[(i, j)] = model.w()[(old_i, old_j)];
                    }
                }
            }
            None => {
                for i in 0..r_new {
                    w[(i, j)] = T::one() / T::from_usize_lossy(r_new);
                }
            }
        }
    }
    let mut paths = row_paths.to_vec();
    if extra == 1 {
        paths.push(LEAKAGE_ROW.to_string());
    }
    EnergyModel::new(
        event_names.to_vec(),
        paths,
        w,
        alpha,
        model.leak_mw(),
        model.train_op().clone(),
        model.kind(),
    )
}

/// Continues fitting from `model` on `history ∪ new_samples` for exactly
/// `steps` outer iterations. Event and row sets may grow.
pub fn warm_start_update<T: Scalar>(
    model: &EnergyModel<T>,
    history: &[crate::domain::ActivitySample<T>],
    new_samples: &[crate::domain::ActivitySample<T>],
    steps: usize,
    opts: &FitOptions<T>,
) -> Result<(EnergyModel<T>, FitReport<T>)> {
    if steps == 0 {
        let report = FitReport {
            objective_trace: vec![],
            converged: false,
            iters_used: 0,
            rescale_skips: 0,
            final_objective: T::nan(),
            best_iteration: None,
        };
        return Ok((model.clone(), report));
    }
    if model.kind() != ModelKind::Hierarchical {
        return Err(Error::rejected("warm start applies to hierarchical models"));
    }
    opts.validate()?;
    let all: Vec<_> = history.iter().chain(new_samples).cloned().collect();
    if all.is_empty() {
        return Err(Error::rejected("warm start needs samples"));
    }
    if all.iter().any(|s| s.report.op() != model.train_op()) {
        return Err(Error::rejected("samples must match the model's training operating point"));
    }
    let events: BTreeSet<&str> = model
        .event_names()
        .iter()
        .map(String::as_str)
        .chain(all.iter().flat_map(|s| s.events.names().iter().map(String::as_str)))
        .collect();
    let rows: BTreeSet<&str> = model.row_paths()[..model.report_row_count()]
        .iter()
        .map(String::as_str)
        .chain(all.iter().flat_map(|s| s.report.paths()))
        .collect();
    let events: Vec<String> = events.into_iter().map(str::to_owned).collect();
    let rows: Vec<String> = rows.into_iter().map(str::to_owned).collect();
    let data = align_to(&all, &events, &rows)?;
    let extended = extend_model(model, &events, &rows)?;
    let p = Problem::new(&data, model.has_leakage_row())?;
    let s0 = import(&p, &extended);
    let (s, report) = alternate(&p, s0, opts, steps, false, |_, _| false)?;
    finish(&p, &s, opts, report)
}

/// Objective of `model` on `data` under `opts` (leakage handled as in fitting).
pub fn model_objective<T: Scalar>(model: &EnergyModel<T>, data: &AlignedSamples<T>, opts: &FitOptions<T>) -> Result<T> {
    if model.event_names() != data.event_names.as_slice()
        || &model.row_paths()[..model.report_row_count()] != data.row_paths.as_slice()
    {
        return Err(Error::rejected("model and samples use different orders"));
    }
    let p = Problem::new(data, model.has_leakage_row())?;
    Ok(objective(&p, &import(&p, model), opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{align_features, canonicalize_report, ActivitySample, EventVector};

    fn op() -> OperatingPoint<f64> {
        OperatingPoint::new(0.8, 100.0, "tt").unwrap()
    }

    fn sample(kernel: &str, events: &[(&str, f64)], rows: &[(&str, f64)]) -> ActivitySample<f64> {
        ActivitySample::new(
            kernel,
            "v",
            EventVector::from_pairs(events.iter().copied()).unwrap(),
            canonicalize_report(rows.iter().copied(), op()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn init_uniform_weights() {
        let s = vec![sample("k", &[("a", 1.0), ("b", 2.0)], &[("r0", 1.0), ("r1", 1.0), ("r2", 1.0), ("r3", 1.0)])];
        let m = init_model(&align_features(&s).unwrap(), &FitOptions::default()).unwrap();
        assert!(m.w().as_slice().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn init_single_sample_alpha() {
        let s = vec![sample("k", &[("a", 2.0)], &[("r", 10.0)])];
        let m = init_model(&align_features(&s).unwrap(), &FitOptions::default()).unwrap();
        assert!((m.alpha()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn init_matches_enumerated_active_sets() {
        // 3 samples, 2 events: the NNLS optimum is the best of the 4 active
        // sets' unconstrained solutions that are feasible.
        let s = vec![
            sample("k1", &[("a", 1.0), ("b", 2.0)], &[("r", 4.0)]),
            sample("k2", &[("a", 2.0), ("b", 1.0)], &[("r", 1.0)]),
            sample("k3", &[("a", 3.0), ("b", 3.0)], &[("r", 2.0)]),
        ];
        let m = init_model(&align_features(&s).unwrap(), &FitOptions::default()).unwrap();
        let x = [[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]];
        let y = [4.0, 1.0, 2.0];
        let obj = |a: f64, b: f64| -> f64 { (0..3).map(|k| (x[k][0] * a + x[k][1] * b - y[k]).powi(2)).sum() };
        let mut cands = vec![(0.0, 0.0)];
        let saa: f64 = (0..3).map(|k| x[k][0] * x[k][0]).sum();
        let sbb: f64 = (0..3).map(|k| x[k][1] * x[k][1]).sum();
        let sab: f64 = (0..3).map(|k| x[k][0] * x[k][1]).sum();
        let say: f64 = (0..3).map(|k| x[k][0] * y[k]).sum();
        let sby: f64 = (0..3).map(|k| x[k][1] * y[k]).sum();
        cands.push((say / saa, 0.0));
        cands.push((0.0, sby / sbb));
        let det = saa * sbb - sab * sab;
        cands.push(((sbb * say - sab * sby) / det, (saa * sby - sab * say) / det));
        let best = cands
            .into_iter()
            .filter(|&(a, b)| a >= 0.0 && b >= 0.0)
            .min_by(|p, q| obj(p.0, p.1).partial_cmp(&obj(q.0, q.1)).unwrap())
            .unwrap();
        assert!((m.alpha()[0] - best.0).abs() < 1e-9, "{:?} vs {best:?}", m.alpha());
        assert!((m.alpha()[1] - best.1).abs() < 1e-9);
    }

    #[test]
    fn init_rejects_empty_dimensions() {
        let s = vec![sample("k", &[], &[("r", 1.0)])];
        assert!(init_model(&align_features(&s).unwrap(), &FitOptions::default()).is_err());
        let s = vec![sample("k", &[("a", 1.0)], &[])];
        assert!(init_model(&align_features(&s).unwrap(), &FitOptions::default()).is_err());
    }

    #[test]
    fn scalar_regression_recovers_ratio() {
        let s = vec![sample("k1", &[("a", 2.0)], &[("r", 7.0)]), sample("k2", &[("a", 4.0)], &[("r", 14.0)])];
        let opts = FitOptions { lambda_w: 0.0, lambda_alpha: 0.0, ..FitOptions::default() };
        let (m, rep) = fit_hierarchical(&align_features(&s).unwrap(), &opts).unwrap();
        let beta = crate::predict::effective_beta(&m);
        assert!((beta[0] - 3.5).abs() < 1e-12, "{beta:?}");
        assert!(rep.converged);
    }

    #[test]
    fn aggregate_simple_ratio() {
        let s = vec![sample("k1", &[("a", 1.0)], &[("r", 2.0)]), sample("k2", &[("a", 2.0)], &[("r", 4.0)])];
        let opts = FitOptions { lambda_alpha: 0.0, ..FitOptions::default() };
        let m = fit_aggregate(&align_features(&s).unwrap(), &opts).unwrap();
        assert!((m.alpha()[0] - 2.0).abs() < 1e-12);
        assert_eq!(m.kind(), ModelKind::Aggregate);
    }

    #[test]
    fn aggregate_leak_absorbs_mean() {
        let s = vec![
            sample("k1", &[("a", 0.0)], &[("r", 3.0)]),
            sample("k2", &[("a", 0.0)], &[("r", 5.0)]),
            sample("k3", &[("a", 0.0)], &[("r", 7.0)]),
        ];
        let opts = FitOptions { fit_leakage: true, ..FitOptions::default() };
        let m = fit_aggregate(&align_features(&s).unwrap(), &opts).unwrap();
        assert!((m.leak_mw() - 5.0).abs() < 1e-12);
        assert_eq!(m.alpha()[0], 0.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let s = vec![sample("k1", &[("a", 1.0)], &[("r", 2.0)]), sample("k2", &[("a", 2.0)], &[("r", 4.0)])];
        assert!(select_hyperparameters(&align_features(&s).unwrap(), &[], &FitOptions::default()).is_err());
    }

    #[test]
    fn single_grid_point_returned() {
        let s = vec![sample("k1", &[("a", 1.0)], &[("r", 2.0)]), sample("k2", &[("a", 2.0)], &[("r", 4.0)])];
        let c = select_hyperparameters(&align_features(&s).unwrap(), &[(0.5, 0.25)], &FitOptions::default()).unwrap();
        assert_eq!((c.lambda_w, c.lambda_alpha), (0.5, 0.25));
    }

    #[test]
    fn ties_prefer_larger_regularization() {
        let c = pick_best(vec![(0.0, 1.0, 3.0), (1.0, 0.0, 3.0), (1.0, 0.5, 3.0), (0.5, 9.0, 4.0)]);
        assert_eq!((c.lambda_w, c.lambda_alpha), (1.0, 0.5));
    }

    #[test]
    fn warm_start_zero_steps_is_identity() {
        let s = vec![sample("k1", &[("a", 1.0)], &[("r", 2.0)]), sample("k2", &[("a", 2.0)], &[("r", 4.0)])];
        let (m, _) = fit_hierarchical(&align_features(&s).unwrap(), &FitOptions::default()).unwrap();
        let extra = vec![sample("k3", &[("a", 3.0), ("b", 1.0)], &[("r", 9.0)])];
        let (m2, _) = warm_start_update(&m, &s, &extra, 0, &FitOptions::default()).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn extend_adds_uniform_column() {
        let s = vec![sample("k1", &[("a", 1.0)], &[("r0", 1.0), ("r1", 1.0)])];
        let (m, _) = fit_hierarchical(&align_features(&s).unwrap(), &FitOptions::default()).unwrap();
        let ext = extend_model(&m, &["a".into(), "b".into()], &["r0".into(), "r1".into()]).unwrap();
        assert_eq!(ext.num_events(), 2);
        assert_eq!(ext.w().column(1), vec![0.5, 0.5]);
        assert_eq!(ext.alpha()[1], 0.0);
    }

    #[test]
    fn options_validation() {
        let bad = FitOptions { rel_tol: 1.0, ..FitOptions::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = FitOptions { max_outer_iters: 0, ..FitOptions::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = FitOptions { lambda_w: -1.0, ..FitOptions::<f64>::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mixed_operating_points_rejected() {
        let mut s = vec![sample("k1", &[("a", 1.0)], &[("r", 2.0)])];
        let other = OperatingPoint::new(0.8, 200.0, "tt").unwrap();
        s.push(
            ActivitySample::new(
                "k2",
                "v",
                EventVector::from_pairs([("a", 1.0)]).unwrap(),
                canonicalize_report([("r", 2.0)], other).unwrap(),
            )
            .unwrap(),
        );
        assert!(fit_hierarchical(&align_features(&s).unwrap(), &FitOptions::default()).is_err());
    }
}
