//! Synthetic post-PnR pipelining loop with a hidden ground-truth power
//! oracle, and end-to-end planner evaluation.
//!
//! Each pipelining iteration `t` raises the achieved frequency along a
//! saturating curve, adds pipeline registers, and grows interconnect usage, so
//! true power rises monotonically with `t` when the oracle is noiseless.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{graph_id_of, EventVector, OperatingPoint, PnrConfiguration};
use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::planners::{
    calibrate_conformal, plan_baseline, plan_bounded_error, plan_conformal, plan_guardband, CalibrationSample,
    ConformalConfig, ErrorBounds, PlannerKnobs, PlannerMode, PlannerResult, QuantileTable, Role,
};
use crate::predict::{ModelPredictor, PowerPredictor};
use crate::scalar::Scalar;

/// Event that gains `registers_per_iter` counts per pipelining iteration.
pub const REGISTER_EVENT: &str = "registers";
/// Events with this prefix grow by `interconnect_growth_rate` per iteration.
pub const INTERCONNECT_PREFIX: &str = "ic_";
/// Event whose count stands in for PE ports used in the diversity features.
pub const PORT_EVENT: &str = "ic_port";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HarnessParams<T> {
    pub seed: u64,
    pub kernel: String,
    pub iterations: usize,
    pub f0_mhz: T,
    pub f_max_mhz: T,
    pub tau: T,
    pub base_events: EventVector<T>,
    pub registers_per_iter: T,
    pub interconnect_growth_rate: T,
    pub truth_model: EnergyModel<T>,
    pub noise_rel: T,
    pub ii: u32,
}

impl<T: Scalar> HarnessParams<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.f0_mhz, self.f_max_mhz, self.tau, self.registers_per_iter, self.interconnect_growth_rate, self.noise_rel];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::rejected("harness parameters must be finite"));
        }
        if !(self.f0_mhz > T::zero() && self.f0_mhz < self.f_max_mhz) {
            return Err(Error::rejected("need 0 < f0 < f_max"));
        }
        if self.iterations == 0 {
            return Err(Error::rejected("iterations must be >= 1"));
        }
        if !(self.tau > T::zero()) {
            return Err(Error::rejected("tau must be > 0"));
        }
        if self.registers_per_iter < T::zero() || self.interconnect_growth_rate < T::zero() || self.noise_rel < T::zero() {
            return Err(Error::rejected("growth rates and noise must be >= 0"));
        }
        if self.registers_per_iter > T::zero() && self.base_events.get(REGISTER_EVENT).is_none() {
            return Err(Error::rejected(format!("base events need a '{REGISTER_EVENT}' entry")));
        }
        if self.ii == 0 {
            return Err(Error::rejected("initiation interval must be >= 1"));
        }
        Ok(())
    }
}

/// Frequency after `t` iterations: `f0 + (f_max − f0)(1 − e^{−t/τ})`.
pub fn frequency_at<T: Scalar>(params: &HarnessParams<T>, t: usize) -> T {
    let x = T::from_usize_lossy(t) / params.tau;
    params.f0_mhz + (params.f_max_mhz - params.f0_mhz) * (T::one() - (-x).exp())
}

fn events_at<T: Scalar>(params: &HarnessParams<T>, t: usize) -> Result<EventVector<T>> {
    let tf = T::from_usize_lossy(t);
    let counts = params
        .base_events
        .names()
        .iter()
        .zip(params.base_events.counts())
        .map(|(name, &c)| {
            if name == REGISTER_EVENT {
                c + tf * params.registers_per_iter
            } else if name.starts_with(INTERCONNECT_PREFIX) {
                c * (T::one() + params.interconnect_growth_rate * tf)
            } else {
                c
            }
        })
        .collect();
    EventVector::new(params.base_events.names().to_vec(), counts)
}

/// Diversity features: total interconnect usage, ports used, and the
/// frequency rounded to 10 MHz.
pub fn diversity_features<T: Scalar>(events: &EventVector<T>, freq_mhz: T) -> Vec<T> {
    let ic: T = events
        .names()
        .iter()
        .zip(events.counts())
        .filter(|(n, _)| n.starts_with(INTERCONNECT_PREFIX))
        .map(|(_, &c)| c)
        .sum();
    let ports = events.get(PORT_EVENT).unwrap_or_else(T::zero);
    let ten = T::lit(10.0);
    vec![ic, ports, (freq_mhz / ten).round() * ten]
}

fn snapshot<T: Scalar>(params: &HarnessParams<T>, t: usize, events: &EventVector<T>, freq: T) -> String {
    let body: Vec<String> = events.names().iter().zip(events.counts()).map(|(n, c)| format!("{n}={c}")).collect();
    format!("{}|seed={}|t={t}|f={freq}|ii={}|{}", params.kernel, params.seed, params.ii, body.join(";"))
}

/// Candidates `t = 0..iterations` in non-decreasing frequency.
pub fn generate_pipeline_sequence<T: Scalar>(params: &HarnessParams<T>) -> Result<Vec<PnrConfiguration<T>>> {
    params.validate()?;
    (0..params.iterations)
        .map(|t| {
            let freq = frequency_at(params, t);
            let events = events_at(params, t)?;
            let features = diversity_features(&events, freq);
            let id = graph_id_of(&snapshot(params, t, &events, freq));
            PnrConfiguration::new(id, t as u64, freq, params.ii, events, features)
        })
        .collect()
}

fn noise_rng<T: Scalar>(seed: u64, config: &PnrConfiguration<T>) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(config.graph_id.as_bytes());
    h.update(config.freq_mhz.to_f64_lossy().to_bits().to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
}

/// True power of `config`: the truth model's prediction times `1 + η`, with
/// `η` uniform in `[−3σ, 3σ]` and fixed by `(seed, graph_id, frequency)`.
pub fn oracle_power<T: Scalar>(
    truth: &ModelPredictor<T>,
    config: &PnrConfiguration<T>,
    noise_rel: T,
    seed: u64,
) -> Result<T> {
    let p = truth.power_at(&config.events, config.freq_mhz)?;
    if noise_rel == T::zero() {
        return Ok(p);
    }
    let u: f64 = noise_rng(seed, config).random_range(-1.0..=1.0);
    let eta = T::lit(3.0) * noise_rel * T::lit(u);
    Ok(p * (T::one() + eta))
}

/// Cap headroom `(C − P) / C · 100`.
pub fn delta_cap<T: Scalar>(cap_mw: T, power_mw: T) -> T {
    (cap_mw - power_mw) / cap_mw * T::lit(100.0)
}

/// Divides both frequency and power by `factor`.
pub fn throttle<T: Scalar>(freq_mhz: T, power_mw: T, factor: T) -> Result<(T, T)> {
    if !(factor > T::zero() && factor.is_finite()) {
        return Err(Error::rejected("throttle factor must be finite and > 0"));
    }
    Ok((freq_mhz / factor, power_mw / factor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CellOutcome<T> {
    pub success: bool,
    /// Whether the anchor alone meets the cap; `None` without an anchor.
    pub anchor_success: Option<bool>,
    /// Headroom of the chosen (highest-frequency feasible) candidate.
    pub dcap_pct: Option<T>,
    /// Chosen frequency over the baseline frequency; without a feasible
    /// member, the highest returned frequency is used.
    pub norm_freq: Option<T>,
    pub k_returned: usize,
    /// Every returned candidate with a declared bound has bound ≤ cap.
    pub bounds_respected: bool,
    /// Best speculative frequency over the anchor frequency.
    pub spec_uplift: Option<T>,
}

/// Scores a planner result against the hidden oracle.
pub fn evaluate_planner<T: Scalar>(
    result: &PlannerResult<T>,
    oracle: &dyn Fn(&PnrConfiguration<T>) -> Result<T>,
    cap_mw: T,
    baseline_freq_mhz: T,
) -> Result<CellOutcome<T>> {
    let mut best: Option<(T, T)> = None;
    let mut anchor_success = None;
    for s in &result.selected {
        let p = oracle(&s.config)?;
        let ok = p <= cap_mw;
        if s.role == Role::Anchor {
            anchor_success = Some(ok);
        }
        if ok && best.is_none_or(|(f, _)| s.config.freq_mhz > f) {
            best = Some((s.config.freq_mhz, p));
        }
    }
    let top_freq = result.selected.iter().map(|s| s.config.freq_mhz).fold(None, |a: Option<T>, f| Some(a.map_or(f, |a| a.max(f))));
    let anchor_freq = result.anchor().map(|a| a.config.freq_mhz);
    let spec_freq = result
        .selected
        .iter()
        .filter(|s| s.role == Role::Speculative)
        .map(|s| s.config.freq_mhz)
        .fold(None, |a: Option<T>, f| Some(a.map_or(f, |a| a.max(f))));
    Ok(CellOutcome {
        success: best.is_some(),
        anchor_success,
        dcap_pct: best.map(|(_, p)| delta_cap(cap_mw, p)),
        norm_freq: best.map(|(f, _)| f).or(top_freq).map(|f| f / baseline_freq_mhz),
        k_returned: result.selected.len(),
        bounds_respected: result.selected.iter().all(|s| s.upper_bound_mw.is_none_or(|u| u <= cap_mw)),
        spec_uplift: anchor_freq.zip(spec_freq).map(|(a, s)| s.max(a) / a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SuiteKernel<T> {
    pub params: HarnessParams<T>,
    pub caps_mw: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SuiteSpec<T> {
    pub kernels: Vec<SuiteKernel<T>>,
    /// The compile-time model the planners consult.
    pub predictor: EnergyModel<T>,
    /// Shared knobs; `cap_mw` is replaced per cell.
    pub knobs: PlannerKnobs<T>,
    pub conformal: Option<QuantileTable<T>>,
    /// Look up conformal quantiles by kernel name.
    pub conformal_by_kernel: bool,
    pub bounds: Option<ErrorBounds<T>>,
    pub modes: Vec<PlannerMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CellRecord<T> {
    pub kernel: String,
    pub cap_mw: T,
    pub mode: PlannerMode,
    pub baseline_freq_mhz: T,
    pub stopped_at_iteration: Option<u64>,
    pub outcome: CellOutcome<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalSummary<T> {
    pub mode: PlannerMode,
    pub cells: usize,
    pub success_rate_pct: T,
    /// Over successful cells only.
    pub median_dcap_pct: Option<T>,
    pub p95_dcap_pct: Option<T>,
    pub avg_norm_freq: Option<T>,
    pub avg_k_returned: T,
    pub anchor_success_rate_pct: Option<T>,
    pub avg_spec_uplift: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SuiteReport<T> {
    pub cells: Vec<CellRecord<T>>,
    pub summaries: Vec<EvalSummary<T>>,
}

/// Linear-interpolation percentile of a non-empty list, `p` in `[0, 100]`.
pub fn percentile<T: Scalar>(values: &[T], p: T) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p / T::lit(100.0) * T::from_usize_lossy(v.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(v.len() - 1);
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - T::from_usize_lossy(lo);
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    (!values.is_empty()).then(|| values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len()))
}

/// Aggregates cell outcomes of one planner mode.
pub fn summarize<T: Scalar>(mode: PlannerMode, cells: &[&CellRecord<T>]) -> EvalSummary<T> {
    let n = cells.len();
    let successes = cells.iter().filter(|c| c.outcome.success).count();
    let dcaps: Vec<T> = cells.iter().filter_map(|c| c.outcome.dcap_pct).collect();
    let freqs: Vec<T> = cells.iter().filter_map(|c| c.outcome.norm_freq).collect();
    let anchors: Vec<bool> = cells.iter().filter_map(|c| c.outcome.anchor_success).collect();
    let uplift: Vec<T> = cells.iter().filter_map(|c| c.outcome.spec_uplift).collect();
    let ks: Vec<T> = cells.iter().map(|c| T::from_usize_lossy(c.outcome.k_returned)).collect();
    let pct = |num: usize, den: usize| T::lit(100.0) * T::from_usize_lossy(num) / T::from_usize_lossy(den.max(1));
    EvalSummary {
        mode,
        cells: n,
        success_rate_pct: pct(successes, n),
        median_dcap_pct: percentile(&dcaps, T::lit(50.0)),
        p95_dcap_pct: percentile(&dcaps, T::lit(95.0)),
        avg_norm_freq: mean(&freqs),
        avg_k_returned: mean(&ks).unwrap_or_else(T::zero),
        anchor_success_rate_pct: (!anchors.is_empty()).then(|| pct(anchors.iter().filter(|&&a| a).count(), anchors.len())),
        avg_spec_uplift: mean(&uplift),
    }
}

fn run_cell<T: Scalar>(
    spec: &SuiteSpec<T>,
    predictor: &ModelPredictor<T>,
    kernel: &SuiteKernel<T>,
    stream: &[PnrConfiguration<T>],
    cap: T,
    mode: PlannerMode,
) -> Result<CellRecord<T>> {
    let knobs = PlannerKnobs { cap_mw: cap, ..spec.knobs.clone() };
    let p = &kernel.params;
    let result = match mode {
        PlannerMode::Guardband => plan_guardband(stream, &knobs, predictor)?,
        PlannerMode::Conformal => {
            let table = spec.conformal.as_ref().ok_or_else(|| Error::rejected("conformal mode needs a quantile table"))?;
            let group = spec.conformal_by_kernel.then_some(p.kernel.as_str());
            plan_conformal(stream, &knobs, table, group, predictor)?
        }
        PlannerMode::BoundedError => {
            let bounds = spec.bounds.as_ref().ok_or_else(|| Error::rejected("bounded-error mode needs error bounds"))?;
            plan_bounded_error(stream, &spec.predictor, bounds, cap)?
        }
        PlannerMode::Baseline => plan_baseline(stream),
    };
    let truth = ModelPredictor::new(p.truth_model.clone());
    let oracle = |c: &PnrConfiguration<T>| oracle_power(&truth, c, p.noise_rel, p.seed);
    let baseline_freq = stream.last().map_or_else(T::one, |c| c.freq_mhz);
    Ok(CellRecord {
        kernel: p.kernel.clone(),
        cap_mw: cap,
        mode,
        baseline_freq_mhz: baseline_freq,
        stopped_at_iteration: result.stopped_at_iteration,
        outcome: evaluate_planner(&result, &oracle, cap, baseline_freq)?,
    })
}

/// Runs every (kernel, cap, mode) cell; cells are independent and evaluated
/// in parallel, and the report lists them in kernel, cap, mode order.
pub fn run_suite<T: Scalar>(spec: &SuiteSpec<T>) -> Result<SuiteReport<T>> {
    let predictor = ModelPredictor::new(spec.predictor.clone());
    let streams: Vec<Vec<PnrConfiguration<T>>> =
        spec.kernels.iter().map(|k| generate_pipeline_sequence(&k.params)).collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (ki, k) in spec.kernels.iter().enumerate() {
        for &cap in &k.caps_mw {
            for &mode in &spec.modes {
                jobs.push((ki, cap, mode));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(ki, cap, mode)| run_cell(spec, &predictor, &spec.kernels[ki], &streams[ki], cap, mode))
        .collect::<Result<Vec<_>>>()?;
    let summaries = spec
        .modes
        .iter()
        .map(|&m| summarize(m, &cells.iter().filter(|c| c.mode == m).collect::<Vec<_>>()))
        .collect();
    Ok(SuiteReport { cells, summaries })
}

/// Calibration tuples from each kernel's stream, with the oracle noise drawn
/// under `noise_seed` instead of the kernel's own seed.
pub fn calibration_samples<T: Scalar>(
    kernels: &[SuiteKernel<T>],
    predictor: &EnergyModel<T>,
    noise_seed: u64,
) -> Result<Vec<CalibrationSample<T>>> {
    let predictor = ModelPredictor::new(predictor.clone());
    let mut out = Vec::new();
    for k in kernels {
        let p = HarnessParams { seed: noise_seed, ..k.params.clone() };
        let truth = ModelPredictor::new(p.truth_model.clone());
        for c in generate_pipeline_sequence(&p)? {
            out.push(CalibrationSample {
                ptpx_mw: oracle_power(&truth, &c, p.noise_rel, noise_seed)?,
                pred_mw: predictor.predict_power(&c)?,
                group: p.kernel.clone(),
                freq_mhz: c.freq_mhz,
            });
        }
    }
    Ok(out)
}

/// Mixed into the suite seed to draw calibration noise independently of the
/// evaluation noise.
pub const CALIBRATION_SEED_SALT: u64 = 0x5eed_ca1b;

/// Workload names used by the default suite.
pub const DEFAULT_KERNELS: [&str; 8] =
    ["vec_elemadd", "tensor3_ttv", "sddmm", "inner_prod", "mat_elemmul", "gaussian", "harris", "camera_pipeline"];

const DEFAULT_EVENTS: [(&str, f64, f64); 7] = [
    // (event, base count, predictor cost in mW per count at 100 MHz)
    ("ic_port", 120.0, 0.05),
    ("ic_rmux", 150.0, 0.03),
    ("ic_sb", 300.0, 0.04),
    ("io_tiles", 16.0, 0.3),
    ("mem_tiles", 8.0, 1.5),
    ("pe_tiles", 40.0, 1.0),
    ("registers", 100.0, 0.05),
];

/// Knobs for [`default_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultSuiteOptions {
    pub seed: u64,
    pub noise_rel: f64,
    pub iterations: usize,
    pub cap_fractions: Vec<f64>,
}

impl Default for DefaultSuiteOptions {
    fn default() -> Self {
        DefaultSuiteOptions { seed: 7, noise_rel: 0.05, iterations: 40, cap_fractions: vec![0.5, 0.65, 0.8] }
    }
}

/// Eight synthetic kernels × three caps with a shared compile-time model.
///
/// Each kernel's truth model scales the predictor's per-event costs by a
/// seeded factor from {0.9, 1.0, 1.1}. Caps are fractions of the kernel's
/// noiseless true power at its final iteration, so the unchecked baseline
/// always exceeds them.
pub fn default_suite(opts: &DefaultSuiteOptions) -> Result<SuiteSpec<f64>> {
    let op = OperatingPoint::new(0.8, 100.0, "tt")?;
    let names: Vec<String> = DEFAULT_EVENTS.iter().map(|e| e.0.to_string()).collect();
    let beta: Vec<f64> = DEFAULT_EVENTS.iter().map(|e| e.2).collect();
    let leak = 5.0;
    let predictor = EnergyModel::from_beta(names.clone(), beta, leak, op)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut kernels = Vec::with_capacity(DEFAULT_KERNELS.len());
    for (i, kernel) in DEFAULT_KERNELS.iter().enumerate() {
        let factors: Vec<f64> = (0..names.len()).map(|_| [0.9, 1.0, 1.1][rng.random_range(0..3)]).collect();
        let truth_model = predictor.with_scaled_alpha(&factors)?;
        let counts: Vec<f64> = DEFAULT_EVENTS.iter().map(|e| (e.1 * rng.random_range(0.7..1.3)).round()).collect();
        let params = HarnessParams {
            seed: opts.seed.wrapping_add(i as u64),
            kernel: kernel.to_string(),
            iterations: opts.iterations,
            f0_mhz: 100.0,
            f_max_mhz: rng.random_range(420.0..560.0f64).round(),
            tau: rng.random_range(8.0..14.0),
            base_events: EventVector::new(names.clone(), counts)?,
            registers_per_iter: rng.random_range(15.0..25.0f64).round(),
            interconnect_growth_rate: 0.01,
            truth_model,
            noise_rel: opts.noise_rel,
            ii: 1,
        };
        let last = generate_pipeline_sequence(&params)?.pop().expect("iterations >= 1");
        let p_final = ModelPredictor::new(params.truth_model.clone()).power_at(&last.events, last.freq_mhz)?;
        let caps_mw = opts.cap_fractions.iter().map(|f| (f * p_final * 10.0).round() / 10.0).collect();
        kernels.push(SuiteKernel { params, caps_mw });
    }
    let cal = calibration_samples(&kernels, &predictor, opts.seed ^ CALIBRATION_SEED_SALT)?;
    let conformal = calibrate_conformal(&cal, &ConformalConfig::default())?;
    let bounds = ErrorBounds::uniform(names.len(), 0.7, 1.5, 3);
    Ok(SuiteSpec {
        kernels,
        predictor,
        knobs: PlannerKnobs::with_cap(1.0),
        conformal: Some(conformal),
        conformal_by_kernel: false,
        bounds: Some(bounds),
        modes: vec![PlannerMode::Guardband, PlannerMode::Conformal, PlannerMode::BoundedError, PlannerMode::Baseline],
    })
}
