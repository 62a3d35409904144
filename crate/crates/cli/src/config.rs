//! Declarative run configuration: one TOML file, every key optional, unknown
//! keys rejected. Flags override file values.

use std::collections::BTreeMap;
use std::path::Path;

use powercap::planners::{ConformalConfig, ErrorBounds, PlannerKnobs, DEFAULT_MODEL_BUDGET};
use powercap::{FitOptions, ModelKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fit: FitSection,
    pub planner: PlannerSection,
    pub conformal: ConformalSection,
    pub bounded: BoundedSection,
    pub suite: SuiteSection,
    pub simulate: SimulateSection,
    pub gen: GenSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub kind: ModelKind,
    pub lambda_w: f64,
    pub lambda_alpha: f64,
    pub max_outer_iters: usize,
    pub rel_tol: f64,
    pub fit_leakage: bool,
    pub patience: usize,
    /// `(lambda_w, lambda_alpha)` pairs; when non-empty, `train` picks the
    /// pair with the lowest kernel-held-out MAPE before the final fit.
    pub hyper_grid: Vec<(f64, f64)>,
}

impl Default for FitSection {
    fn default() -> Self {
        let d = FitOptions::<f64>::default();
        FitSection {
            kind: ModelKind::Hierarchical,
            lambda_w: d.lambda_w,
            lambda_alpha: d.lambda_alpha,
            max_outer_iters: d.max_outer_iters,
            rel_tol: d.rel_tol,
            fit_leakage: d.fit_leakage,
            patience: d.patience,
            hyper_grid: vec![],
        }
    }
}

impl FitSection {
    pub fn options(&self, seed: u64) -> FitOptions<f64> {
        FitOptions {
            lambda_w: self.lambda_w,
            lambda_alpha: self.lambda_alpha,
            max_outer_iters: self.max_outer_iters,
            rel_tol: self.rel_tol,
            seed,
            fit_leakage: self.fit_leakage,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub cap_mw: Option<f64>,
    pub k: usize,
    pub gamma_anchor: f64,
    pub gamma_spec: f64,
    pub diversity_lambda: f64,
    pub min_freq_step_mhz: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        let d = PlannerKnobs::<f64>::with_cap(1.0);
        PlannerSection {
            cap_mw: None,
            k: d.k,
            gamma_anchor: d.gamma_anchor,
            gamma_spec: d.gamma_spec,
            diversity_lambda: d.diversity_lambda,
            min_freq_step_mhz: d.min_freq_step_mhz,
        }
    }
}

impl PlannerSection {
    pub fn knobs(&self) -> CliResult<PlannerKnobs<f64>> {
        let cap_mw = self.cap_mw.ok_or_else(|| CliError::usage("a power cap is required (--cap or [planner] cap_mw)"))?;
        let knobs = PlannerKnobs {
            cap_mw,
            k: self.k,
            gamma_anchor: self.gamma_anchor,
            gamma_spec: self.gamma_spec,
            diversity_lambda: self.diversity_lambda,
            min_freq_step_mhz: self.min_freq_step_mhz,
        };
        knobs.validate()?;
        Ok(knobs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConformalSection {
    pub alpha_anchor: f64,
    pub alpha_spec: f64,
    pub by_group: bool,
    pub scale_with_freq: bool,
    pub f_ref_mhz: f64,
    pub n_min: usize,
}

impl Default for ConformalSection {
    fn default() -> Self {
        let d = ConformalConfig::<f64>::default();
        ConformalSection {
            alpha_anchor: d.alpha_anchor,
            alpha_spec: d.alpha_spec,
            by_group: d.by_group,
            scale_with_freq: d.scale_with_freq,
            f_ref_mhz: d.f_ref_mhz,
            n_min: d.n_min,
        }
    }
}

impl ConformalSection {
    pub fn config(&self) -> ConformalConfig<f64> {
        ConformalConfig {
            alpha_anchor: self.alpha_anchor,
            alpha_spec: self.alpha_spec,
            by_group: self.by_group,
            scale_with_freq: self.scale_with_freq,
            f_ref_mhz: self.f_ref_mhz,
            n_min: self.n_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundedSection {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub budget: usize,
    /// Per-event `(lo, hi)` overriding the uniform range.
    pub per_event: BTreeMap<String, (f64, f64)>,
}

impl Default for BoundedSection {
    fn default() -> Self {
        BoundedSection { lo: 0.7, hi: 1.5, steps: 3, budget: DEFAULT_MODEL_BUDGET, per_event: BTreeMap::new() }
    }
}

impl BoundedSection {
    pub fn bounds(&self, event_names: &[String]) -> CliResult<ErrorBounds<f64>> {
        if let Some(unknown) = self.per_event.keys().find(|k| !event_names.contains(k)) {
            return Err(CliError::usage(format!("[bounded.per_event] names unknown event '{unknown}'")));
        }
        let per_event = event_names.iter().map(|n| self.per_event.get(n).copied().unwrap_or((self.lo, self.hi))).collect();
        let bounds = ErrorBounds { per_event, steps_per_event: self.steps, budget: self.budget };
        bounds.validate()?;
        Ok(bounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub noise_rel: f64,
    pub iterations: usize,
    pub cap_fractions: Vec<f64>,
}

impl Default for SuiteSection {
    fn default() -> Self {
        let d = powercap::harness::DefaultSuiteOptions::default();
        SuiteSection { noise_rel: d.noise_rel, iterations: d.iterations, cap_fractions: d.cap_fractions }
    }
}

/// Synthetic pipelining loop for `plan --simulate`; the model is the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub kernel: String,
    pub iterations: usize,
    pub f0_mhz: f64,
    pub f_max_mhz: f64,
    pub tau: f64,
    pub registers_per_iter: f64,
    pub interconnect_growth_rate: f64,
    pub noise_rel: f64,
    pub ii: u32,
    /// Starting event counts; events the model knows but this omits start at
    /// `default_count`.
    pub base_events: BTreeMap<String, f64>,
    pub default_count: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            kernel: "simulated".into(),
            iterations: 40,
            f0_mhz: 100.0,
            f_max_mhz: 500.0,
            tau: 10.0,
            registers_per_iter: 20.0,
            interconnect_growth_rate: 0.01,
            noise_rel: 0.05,
            ii: 1,
            base_events: BTreeMap::new(),
            default_count: 10.0,
        }
    }
}

/// Planted dataset for `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    pub kernels: usize,
    pub variants: usize,
    pub events: usize,
    pub rows: usize,
    pub noise_rel: f64,
    pub leak_mw: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        GenSection { kernels: 6, variants: 2, events: 6, rows: 20, noise_rel: 0.0, leak_mw: 0.0 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the resolved configuration's canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
