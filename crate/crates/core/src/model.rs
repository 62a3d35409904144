//! The learned energy model: event-to-row allocation `W`, per-event costs
//! `alpha`, and a static leakage term.

use serde::{Deserialize, Serialize};

use crate::domain::OperatingPoint;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{all_finite, Scalar};

/// Synthetic row that carries the leakage term in row-level predictions.
pub const LEAKAGE_ROW: &str = "<leakage>";
/// Single row used by aggregate models, which predict totals only.
pub const AGGREGATE_ROW: &str = "<total>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hierarchical,
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EnergyModel<T> {
    event_names: Vec<String>,
    row_paths: Vec<String>,
    w: Matrix<T>,
    alpha: Vec<T>,
    leak_mw: T,
    train_op: OperatingPoint<T>,
    kind: ModelKind,
}

impl<T: Scalar> EnergyModel<T> {
    /// Validates and assembles a model. When `row_paths` ends with
    /// [`LEAKAGE_ROW`], that row of `w` must be zero.
    pub fn new(
        event_names: Vec<String>,
        row_paths: Vec<String>,
        w: Matrix<T>,
        alpha: Vec<T>,
        leak_mw: T,
        train_op: OperatingPoint<T>,
        kind: ModelKind,
    ) -> Result<Self> {
        train_op.validate()?;
        if w.rows() != row_paths.len() || w.cols() != event_names.len() || alpha.len() != event_names.len() {
            return Err(Error::rejected(format!(
                "model shape mismatch: W is {}x{}, {} rows, {} events, {} coefficients",
                w.rows(),
                w.cols(),
                row_paths.len(),
                event_names.len(),
                alpha.len()
            )));
        }
        if !all_finite(w.as_slice()) || !all_finite(&alpha) || !leak_mw.is_finite() {
            return Err(Error::rejected("model parameters must be finite"));
        }
        if w.as_slice().iter().chain(&alpha).any(|&v| v < T::zero()) || leak_mw < T::zero() {
            return Err(Error::rejected("model parameters must be nonnegative"));
        }
        let model = EnergyModel { event_names, row_paths, w, alpha, leak_mw, train_op, kind };
        if let Some(r) = model.leak_row_index() {
            if model.w.row(r).iter().any(|&v| v != T::zero()) {
                return Err(Error::rejected("leakage row of W must be zero"));
            }
        } else if leak_mw > T::zero() {
            return Err(Error::rejected("nonzero leakage requires a leakage row"));
        }
        Ok(model)
    }

    pub fn event_names(&self) -> &[String] {
        &self.event_names
    }

    pub fn row_paths(&self) -> &[String] {
        &self.row_paths
    }

    pub fn w(&self) -> &Matrix<T> {
        &self.w
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn leak_mw(&self) -> T {
        self.leak_mw
    }

    pub fn train_op(&self) -> &OperatingPoint<T> {
        &self.train_op
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn num_events(&self) -> usize {
        self.event_names.len()
    }

    pub fn leak_row_index(&self) -> Option<usize> {
        match self.row_paths.last() {
            Some(p) if p == LEAKAGE_ROW => Some(self.row_paths.len() - 1),
            _ => None,
        }
    }

    pub fn has_leakage_row(&self) -> bool {
        self.leak_row_index().is_some()
    }

    /// Rows that correspond to report rows (excludes the leakage row).
    pub fn report_row_count(&self) -> usize {
        self.row_paths.len() - usize::from(self.has_leakage_row())
    }

    /// Scales every nonzero column of `W` to unit L1 norm and moves the scale
    /// into `alpha`. Row-level predictions are unchanged.
    pub fn rescaled(&self) -> Self {
        let mut out = self.clone();
        rescale_columns(&mut out.w, &mut out.alpha);
        out
    }

    /// Returns a copy with `alpha` multiplied elementwise by `factors`.
    pub fn with_scaled_alpha(&self, factors: &[T]) -> Result<Self> {
        if factors.len() != self.alpha.len() {
            return Err(Error::rejected("factor count does not match event count"));
        }
        if factors.iter().any(|&f| !f.is_finite() || f < T::zero()) {
            return Err(Error::rejected("scaling factors must be finite and nonnegative"));
        }
        let mut out = self.clone();
        for (a, &f) in out.alpha.iter_mut().zip(factors) {
            *a *= f;
        }
        Ok(out)
    }

    /// Builds a hierarchical model whose columns put all of each event's
    /// energy on one row; handy for fixtures and synthetic truth models.
    pub fn from_beta(
        event_names: Vec<String>,
        beta: Vec<T>,
        leak_mw: T,
        train_op: OperatingPoint<T>,
    ) -> Result<Self> {
        let e = event_names.len();
        let mut row_paths: Vec<String> = event_names.iter().map(|n| format!("{n}/row")).collect();
        let mut w = Matrix::zeros(e + usize::from(leak_mw > T::zero()), e);
        for i in 0..e {
            w[(i, i)] = T::one();
        }
        if leak_mw > T::zero() {
            row_paths.push(LEAKAGE_ROW.to_string());
        }
        EnergyModel::new(event_names, row_paths, w, beta, leak_mw, train_op, ModelKind::Hierarchical)
    }
}

/// Column rescale shared with the fitting loop.
pub(crate) fn rescale_columns<T: Scalar>(w: &mut Matrix<T>, alpha: &mut [T]) {
    for (e, a) in alpha.iter_mut().enumerate() {
        let s = w.col_sum(e);
        if s > T::zero() {
            for r in 0..w.rows() {
                w[(r, e)] /= s;
            }
            *a *= s;
        }
    }
}
