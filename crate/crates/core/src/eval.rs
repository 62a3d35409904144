//! Model quality: MAPE, R², and leave-one-kernel-out cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{align_features, ActivitySample};
use crate::error::{Error, Result};
use crate::learn::{fit_kind, FitOptions};
use crate::linalg::cosine;
use crate::model::{EnergyModel, ModelKind};
use crate::predict::{predict_rows, predict_total};
use crate::scalar::Scalar;

/// Mean absolute percentage error, in percent.
pub fn mape<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::rejected("mape needs two non-empty lists of equal length"));
    }
    if truth.iter().any(|&t| !(t > T::zero())) {
        return Err(Error::rejected("mape needs strictly positive truth values"));
    }
    let sum: T = pred.iter().zip(truth).map(|(&p, &t)| (p - t).abs() / t).sum();
    Ok(T::lit(100.0) * sum / T::from_usize_lossy(pred.len()))
}

/// Coefficient of determination. `None` when the truth has no spread and the
/// residuals are not all zero.
pub fn r2<T: Scalar>(pred: &[T], truth: &[T]) -> Result<Option<T>> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::rejected("r2 needs two non-empty lists of equal length"));
    }
    let n = T::from_usize_lossy(truth.len());
    let mean = truth.iter().copied().sum::<T>() / n;
    let ss_res: T = pred.iter().zip(truth).map(|(&p, &t)| (t - p) * (t - p)).sum();
    let ss_tot: T = truth.iter().map(|&t| (t - mean) * (t - mean)).sum();
    if ss_tot == T::zero() {
        return Ok((ss_res == T::zero()).then(T::one));
    }
    Ok(Some(T::one() - ss_res / ss_tot))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelScore<T> {
    pub kernel: String,
    pub loocv_mape_pct: T,
    pub loocv_r2: Option<T>,
    /// Mean L2 distance between predicted and reported rows; hierarchical only.
    pub mean_row_l2_mw: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub kind: ModelKind,
    /// Sorted by kernel.
    pub per_kernel: Vec<KernelScore<T>>,
    pub insample_mape_pct: T,
    /// MAPE over all held-out predictions pooled together.
    pub pooled_loocv_mape_pct: T,
    pub pooled_loocv_r2: Option<T>,
    /// Mean pairwise cosine similarity of the fold models' canonical `W`.
    pub w_stability: T,
}

struct Fold<T> {
    kernel: String,
    pred: Vec<T>,
    truth: Vec<T>,
    row_l2: Vec<T>,
    model: EnergyModel<T>,
}

/// Leave-one-kernel-out evaluation. Samples are aligned once over the full
/// set so every fold model shares the same event and row orders.
pub fn loocv<T: Scalar>(samples: &[ActivitySample<T>], opts: &FitOptions<T>, kind: ModelKind) -> Result<EvalReport<T>> {
    let data = align_features(samples)?;
    let kernels = data.kernels();
    if kernels.len() < 2 {
        return Err(Error::rejected("leave-one-kernel-out needs at least 2 kernels"));
    }
    let folds: Vec<Result<Fold<T>>> = kernels
        .par_iter()
        .map(|g| {
            let model = fit_kind(&data.subset(|s| &s.kernel != g), opts, kind)?;
            let mut fold = Fold { kernel: g.clone(), pred: vec![], truth: vec![], row_l2: vec![], model };
            for s in data.samples.iter().filter(|s| &s.kernel == g) {
                fold.pred.push(predict_total(&fold.model, &s.events)?);
                fold.truth.push(s.report.total());
                if kind == ModelKind::Hierarchical {
                    let rows = predict_rows(&fold.model, &s.events)?;
                    let d: T = rows.iter().zip(s.report.powers()).map(|(&p, t)| (p - t) * (p - t)).sum();
                    fold.row_l2.push(d.sqrt());
                }
            }
            Ok(fold)
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;

    let mut per_kernel = Vec::with_capacity(folds.len());
    let mut all_pred = vec![];
    let mut all_truth = vec![];
    for f in &folds {
        let mean_row_l2_mw = (!f.row_l2.is_empty())
            .then(|| f.row_l2.iter().copied().sum::<T>() / T::from_usize_lossy(f.row_l2.len()));
        per_kernel.push(KernelScore {
            kernel: f.kernel.clone(),
            loocv_mape_pct: mape(&f.pred, &f.truth)?,
            loocv_r2: r2(&f.pred, &f.truth)?,
            mean_row_l2_mw,
        });
        all_pred.extend_from_slice(&f.pred);
        all_truth.extend_from_slice(&f.truth);
    }

    let full = fit_kind(&data, opts, kind)?;
    let insample_pred = data.samples.iter().map(|s| predict_total(&full, &s.events)).collect::<Result<Vec<_>>>()?;
    let insample_truth: Vec<T> = data.samples.iter().map(|s| s.report.total()).collect();

    Ok(EvalReport {
        kind,
        per_kernel,
        insample_mape_pct: mape(&insample_pred, &insample_truth)?,
        pooled_loocv_mape_pct: mape(&all_pred, &all_truth)?,
        pooled_loocv_r2: r2(&all_pred, &all_truth)?,
        w_stability: w_stability(&folds.iter().map(|f| &f.model).collect::<Vec<_>>()),
    })
}

/// Mean pairwise cosine similarity of canonical `W` matrices (leakage row
/// excluded). Models must share orders.
pub fn w_stability<T: Scalar>(models: &[&EnergyModel<T>]) -> T {
    let flat: Vec<Vec<T>> = models
        .iter()
        .map(|m| {
            let c = m.rescaled();
            let rows = c.report_row_count();
            c.w().as_slice()[..rows * c.num_events()].to_vec()
        })
        .collect();
    let mut sum = T::zero();
    let mut pairs = 0usize;
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            sum += cosine(&flat[i], &flat[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        T::one()
    } else {
        sum / T::from_usize_lossy(pairs)
    }
}
