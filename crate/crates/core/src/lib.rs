//! Compile-time power modeling and power-capped bitstream selection for
//! coarse-grained reconfigurable arrays.
//!
//! An energy model maps compiler-visible event counts to per-row power of a
//! gate-level report (`ŷ = W diag(α) x`) and collapses to a per-event cost
//! vector for fast total-power estimates. Three planners use those estimates
//! to pick frequency-maximizing configurations under a power cap, with a fixed
//! guardband, a conformal margin, or an exhaustive search over bounded model
//! error.
//!
//! Everything is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`); the aliases at the crate root fix it to `f64`.

pub mod domain;
pub mod error;
pub mod eval;
pub mod harness;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod nnls;
pub mod planners;
pub mod predict;
pub mod scalar;

pub use domain::{
    align_features, align_to, canonicalize_report, graph_id_of, ActivitySample, AlignedSamples, EventVector,
    OperatingPoint, PnrConfiguration, PowerReport, PowerRow,
};
pub use error::{Error, Result};
pub use eval::{loocv, mape, r2, EvalReport, KernelScore};
pub use learn::{
    extend_model, fit_aggregate, fit_hierarchical, fit_hierarchical_validated, fit_kind, init_model,
    model_objective, select_hyperparameters, warm_start_update, FitOptions, FitReport, HyperparameterChoice,
};
pub use linalg::Matrix;
pub use model::{EnergyModel, ModelKind, AGGREGATE_ROW, LEAKAGE_ROW};
pub use nnls::{kkt_residual, nnls_objective, nnls_solve, ridge_nonneg_solve};
pub use predict::{effective_beta, predict, predict_power_at, predict_rows, predict_total, ModelPredictor, PowerPredictor, Prediction};
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type OperatingPoint64 = OperatingPoint<f64>;
pub type EventVector64 = EventVector<f64>;
pub type PowerReport64 = PowerReport<f64>;
pub type ActivitySample64 = ActivitySample<f64>;
pub type AlignedSamples64 = AlignedSamples<f64>;
pub type PnrConfiguration64 = PnrConfiguration<f64>;
pub type EnergyModel64 = EnergyModel<f64>;
pub type FitOptions64 = FitOptions<f64>;
pub type FitReport64 = FitReport<f64>;
pub type EvalReport64 = EvalReport<f64>;
pub type Prediction64 = Prediction<f64>;
pub type ModelPredictor64 = ModelPredictor<f64>;
pub type PlannerKnobs64 = planners::PlannerKnobs<f64>;
pub type PlannerResult64 = planners::PlannerResult<f64>;
pub type QuantileTable64 = planners::QuantileTable<f64>;
pub type ErrorBounds64 = planners::ErrorBounds<f64>;
pub type HarnessParams64 = harness::HarnessParams<f64>;
