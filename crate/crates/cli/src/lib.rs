//! Command-line workflows over the `powercap` library: ingest power reports,
//! fit and evaluate energy models, predict, plan under a cap, and run the
//! synthetic controller suite.
//!
//! Every output file carries a header (tool version, seed, config hash) and
//! no timestamps, so identical inputs give byte-identical outputs.

pub mod config;
pub mod error;
pub mod formats;
pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use powercap::harness::{
    calibration_samples, default_suite, evaluate_planner, generate_pipeline_sequence, oracle_power, run_suite,
    CellOutcome, DefaultSuiteOptions, EvalSummary, HarnessParams, CALIBRATION_SEED_SALT, REGISTER_EVENT,
};
use powercap::planners::{
    calibrate_conformal, plan_baseline, plan_bounded_error, plan_conformal, plan_guardband, GroupQuantiles,
    PlannerMode, PlannerResult, QuantileTable,
};
use powercap::{
    align_features, fit_aggregate, fit_hierarchical, loocv, mape, predict_rows, predict_total, select_hyperparameters,
    EnergyModel, EventVector, HyperparameterChoice, ModelKind, ModelPredictor, PnrConfiguration, LEAKAGE_ROW,
};
use serde::Serialize;

use config::RunConfig;
use error::{CliError, CliResult};
use formats::{opt, Header, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "powercap", version, about = "Power modeling and power-capped candidate selection")]
pub struct Cli {
    /// Seed for data generation, simulation, and suite noise.
    #[arg(long, global = true, env = "POWERCAP_SEED", default_value_t = 0)]
    pub seed: u64,
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true, env = "POWERCAP_CONFIG")]
    pub config: Option<PathBuf>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, env = "POWERCAP_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Hierarchical,
    Aggregate,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Hierarchical => ModelKind::Hierarchical,
            KindArg::Aggregate => ModelKind::Aggregate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Guardband,
    Conformal,
    Bounded,
    Baseline,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a dataset directory; writes model.json and fit_report.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Fit a leakage term.
        #[arg(long)]
        leakage: bool,
    },
    /// Leave-one-kernel-out evaluation; writes eval_report.json and eval_kernels.csv.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long)]
        leakage: bool,
    },
    /// Predict total and per-row power for an events file (JSON `{name: count}`).
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        events: PathBuf,
        /// Defaults to the model's training frequency.
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Select candidates under a power cap; writes plan.csv and plan.json.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "simulate", required_unless_present = "simulate")]
        candidates: Option<PathBuf>,
        /// Generate the candidate stream with a synthetic pipelining loop that
        /// uses the model as ground truth, and score the result.
        #[arg(long)]
        simulate: bool,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        cap: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Calibration CSV (conformal mode).
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Conformal group label for the whole stream.
        #[arg(long)]
        group: Option<String>,
    },
    /// Run the synthetic controller suite; writes suite_cells.csv,
    /// suite_summary.csv and suite.json.
    Suite,
    /// Write a planted dataset (data/) and its generating model.
    GenData {
        #[arg(long)]
        noise: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Plan { .. } => "plan",
            Command::Suite => "suite",
            Command::GenData { .. } => "gen-data",
        }
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{}: no such file", path.display())))
    }
}

fn require_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{}: no such directory", path.display())))
    }
}

/// Checks input paths and folds flag overrides into the configuration.
fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    if let Some(c) = &cli.config {
        require_file(c)?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Train { data, kind, leakage } | Command::Eval { data, kind, leakage } => {
            require_dir(data)?;
            if let Some(k) = kind {
                cfg.fit.kind = (*k).into();
            }
            cfg.fit.fit_leakage |= *leakage;
        }
        Command::Predict { model, events, freq } => {
            require_file(model)?;
            require_file(events)?;
            if freq.is_some_and(|f| !(f.is_finite() && f > 0.0)) {
                return Err(CliError::usage("--freq must be finite and > 0"));
            }
        }
        Command::Plan { model, candidates, mode, cap, k, calibration, .. } => {
            require_file(model)?;
            if let Some(c) = candidates {
                require_file(c)?;
            }
            match (mode, calibration) {
                (ModeArg::Conformal, None) => return Err(CliError::usage("conformal mode needs --calibration")),
                (_, Some(c)) => require_file(c)?,
                _ => {}
            }
            if cap.is_some() {
                cfg.planner.cap_mw = *cap;
            }
            if let Some(k) = k {
                cfg.planner.k = *k;
            }
        }
        Command::Suite => {}
        Command::GenData { noise } => {
            if let Some(n) = noise {
                cfg.gen.noise_rel = *n;
            }
        }
    }
    Ok(cfg)
}

/// Runs one command and returns the files it wrote.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let cfg = resolve(cli)?;
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let ctx = Ctx { header: Header::new(cli.command.name(), cli.seed, cfg.hash()), out_dir: &cli.out_dir, seed: cli.seed, cfg: &cfg, written: vec![] };
    match &cli.command {
        Command::Train { data, .. } => cmd_train(ctx, data),
        Command::Eval { data, .. } => cmd_eval(ctx, data),
        Command::Predict { model, events, freq } => cmd_predict(ctx, model, events, *freq),
        Command::Plan { model, candidates, mode, calibration, group, .. } => {
            cmd_plan(ctx, model, candidates.as_deref(), *mode, calibration.as_deref(), group.as_deref())
        }
        Command::Suite => cmd_suite(ctx),
        Command::GenData { .. } => cmd_gen_data(ctx),
    }
}

struct Ctx<'a> {
    header: Header,
    out_dir: &'a Path,
    seed: u64,
    cfg: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.out_dir.join(name);
        formats::write_file(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> CliResult<()> {
        let bytes = formats::with_header(&self.header, body);
        self.write(name, &bytes)
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    kind: ModelKind,
    samples: usize,
    kernels: Vec<String>,
    options: &'a powercap::FitOptions<f64>,
    hyperparameters: Option<HyperparameterChoice<f64>>,
    insample_mape_pct: f64,
    report: Option<powercap::FitReport<f64>>,
}

fn cmd_train(mut ctx: Ctx<'_>, data: &Path) -> CliResult<Vec<PathBuf>> {
    let samples = formats::read_dataset(data)?;
    let aligned = align_features(&samples)?;
    let mut opts = ctx.cfg.fit.options(ctx.seed);
    opts.validate()?;
    let kind = ctx.cfg.fit.kind;
    let mut hyper = None;
    if !ctx.cfg.fit.hyper_grid.is_empty() {
        if kind != ModelKind::Hierarchical {
            return Err(CliError::usage("[fit] hyper_grid applies to hierarchical models only"));
        }
        let choice = select_hyperparameters(&aligned, &ctx.cfg.fit.hyper_grid, &opts)?;
        opts.lambda_w = choice.lambda_w;
        opts.lambda_alpha = choice.lambda_alpha;
        hyper = Some(choice);
    }
    let (model, report) = match kind {
        ModelKind::Hierarchical => {
            let (m, r) = fit_hierarchical(&aligned, &opts)?;
            (m, Some(r))
        }
        ModelKind::Aggregate => (fit_aggregate(&aligned, &opts)?, None),
    };
    let pred: Vec<f64> = aligned.samples.iter().map(|s| predict_total(&model, &s.events)).collect::<Result<_, _>>()?;
    let truth: Vec<f64> = aligned.samples.iter().map(|s| s.report.total()).collect();
    let summary = TrainSummary {
        kind,
        samples: aligned.len(),
        kernels: aligned.kernels(),
        options: &opts,
        hyperparameters: hyper,
        insample_mape_pct: mape(&pred, &truth)?,
        report,
    };
    let model_file = ModelFile::from_model(&model, ctx.header.clone());
    ctx.write("model.json", &formats::pretty(&model_file))?;
    ctx.write_json("fit_report.json", &summary)?;
    println!("trained {} model on {} samples: in-sample MAPE {:.3}%", kind_str(kind), summary.samples, summary.insample_mape_pct);
    Ok(ctx.written)
}

fn kind_str(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Hierarchical => "hierarchical",
        ModelKind::Aggregate => "aggregate",
    }
}

fn cmd_eval(mut ctx: Ctx<'_>, data: &Path) -> CliResult<Vec<PathBuf>> {
    let samples = formats::read_dataset(data)?;
    let opts = ctx.cfg.fit.options(ctx.seed);
    let report = loocv(&samples, &opts, ctx.cfg.fit.kind)?;
    let rows: Vec<Vec<String>> = report
        .per_kernel
        .iter()
        .map(|k| vec![k.kernel.clone(), k.loocv_mape_pct.to_string(), opt(k.loocv_r2), opt(k.mean_row_l2_mw)])
        .collect();
    let csv = formats::table_csv(&ctx.header, &["kernel", "loocv_mape_pct", "loocv_r2", "mean_row_l2_mw"], &rows);
    ctx.write("eval_kernels.csv", csv.as_bytes())?;
    ctx.write_json("eval_report.json", &report)?;
    println!(
        "{} LOOCV over {} kernels: pooled MAPE {:.3}%, in-sample {:.3}%",
        kind_str(report.kind),
        report.per_kernel.len(),
        report.pooled_loocv_mape_pct,
        report.insample_mape_pct
    );
    Ok(ctx.written)
}

#[derive(Serialize)]
struct RowPower {
    path: String,
    power_mw: f64,
}

#[derive(Serialize)]
struct PredictionRecord {
    freq_mhz: f64,
    total_mw: f64,
    dynamic_mw: f64,
    leak_mw: f64,
    rows: Vec<RowPower>,
}

/// Maps a `{name: count}` file onto the model's event order; absent events
/// count zero, unknown ones are rejected.
fn model_events(model: &EnergyModel<f64>, path: &Path) -> CliResult<EventVector<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
    let map: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    if let Some(unknown) = map.keys().find(|k| !model.event_names().contains(k)) {
        return Err(CliError::invalid(format!("{}: event '{unknown}' is not in the model", path.display())));
    }
    let counts = model.event_names().iter().map(|n| map.get(n).copied().unwrap_or(0.0)).collect();
    Ok(EventVector::new(model.event_names().to_vec(), counts)?)
}

fn cmd_predict(mut ctx: Ctx<'_>, model_path: &Path, events: &Path, freq: Option<f64>) -> CliResult<Vec<PathBuf>> {
    let (model, _) = formats::read_model(model_path)?;
    let events = model_events(&model, events)?;
    let f_train = model.train_op().freq_mhz;
    let freq = freq.unwrap_or(f_train);
    let scale = freq / f_train;
    let rows: Vec<RowPower> = model
        .row_paths()
        .iter()
        .zip(predict_rows(&model, &events)?)
        .map(|(p, y)| RowPower { path: p.clone(), power_mw: if p == LEAKAGE_ROW { y } else { y * scale } })
        .collect();
    let total_mw = ModelPredictor::new(model.clone()).power_at(&events, freq)?;
    let record = PredictionRecord { freq_mhz: freq, total_mw, dynamic_mw: total_mw - model.leak_mw(), leak_mw: model.leak_mw(), rows };
    ctx.write_json("prediction.json", &record)?;
    println!("predicted {total_mw} mW at {freq} MHz");
    Ok(ctx.written)
}

/// JSON-safe quantile: unbounded values are written as the string "inf".
#[derive(Serialize)]
#[serde(untagged)]
enum Quantile {
    Finite(f64),
    Unbounded(&'static str),
}

fn quantile(v: f64) -> Quantile {
    if v.is_finite() {
        Quantile::Finite(v)
    } else {
        Quantile::Unbounded("inf")
    }
}

#[derive(Serialize)]
struct QuantileRecord {
    n: usize,
    q_anchor: Quantile,
    q_spec: Quantile,
}

impl From<&GroupQuantiles<f64>> for QuantileRecord {
    fn from(g: &GroupQuantiles<f64>) -> Self {
        QuantileRecord { n: g.n, q_anchor: quantile(g.q_anchor), q_spec: quantile(g.q_spec) }
    }
}

#[derive(Serialize)]
struct QuantilesRecord {
    global: QuantileRecord,
    groups: BTreeMap<String, QuantileRecord>,
}

fn quantiles_record(t: &QuantileTable<f64>) -> QuantilesRecord {
    QuantilesRecord { global: (&t.global).into(), groups: t.groups.iter().map(|(k, v)| (k.clone(), v.into())).collect() }
}

#[derive(Serialize)]
struct SelectedRecord {
    role: &'static str,
    graph_id: String,
    iteration: u64,
    freq_mhz: f64,
    pred_mw: Option<f64>,
    upper_bound_mw: Option<f64>,
}

#[derive(Serialize)]
struct PlanRecord {
    mode: PlannerMode,
    cap_mw: f64,
    candidates: usize,
    selected: Vec<SelectedRecord>,
    stopped_at_iteration: Option<u64>,
    notes: Vec<String>,
    models_evaluated: usize,
    infeasible_models: usize,
    quantiles: Option<QuantilesRecord>,
    /// Scored against the simulated ground truth (`--simulate` only).
    evaluation: Option<CellOutcome<f64>>,
}

fn simulate_stream(ctx: &Ctx<'_>, model: &EnergyModel<f64>, notes: &mut Vec<String>) -> CliResult<HarnessParams<f64>> {
    let sim = &ctx.cfg.simulate;
    if let Some(unknown) = sim.base_events.keys().find(|k| !model.event_names().contains(k)) {
        return Err(CliError::usage(format!("[simulate.base_events] names unknown event '{unknown}'")));
    }
    let counts = model.event_names().iter().map(|n| sim.base_events.get(n).copied().unwrap_or(sim.default_count)).collect();
    let mut registers_per_iter = sim.registers_per_iter;
    if registers_per_iter > 0.0 && !model.event_names().iter().any(|n| n == REGISTER_EVENT) {
        notes.push(format!("model has no '{REGISTER_EVENT}' event; register growth disabled"));
        registers_per_iter = 0.0;
    }
    Ok(HarnessParams {
        seed: ctx.seed,
        kernel: sim.kernel.clone(),
        iterations: sim.iterations,
        f0_mhz: sim.f0_mhz,
        f_max_mhz: sim.f_max_mhz,
        tau: sim.tau,
        base_events: EventVector::new(model.event_names().to_vec(), counts)?,
        registers_per_iter,
        interconnect_growth_rate: sim.interconnect_growth_rate,
        truth_model: model.clone(),
        noise_rel: sim.noise_rel,
        ii: sim.ii,
    })
}

fn cmd_plan(
    mut ctx: Ctx<'_>,
    model_path: &Path,
    candidates: Option<&Path>,
    mode: ModeArg,
    calibration: Option<&Path>,
    group: Option<&str>,
) -> CliResult<Vec<PathBuf>> {
    let (model, _) = formats::read_model(model_path)?;
    let knobs = ctx.cfg.planner.knobs()?;
    let mut notes = vec![];
    let (stream, sim): (Vec<PnrConfiguration<f64>>, Option<HarnessParams<f64>>) = match candidates {
        Some(path) => (formats::read_candidates(path)?, None),
        None => {
            let params = simulate_stream(&ctx, &model, &mut notes)?;
            (generate_pipeline_sequence(&params)?, Some(params))
        }
    };
    if sim.is_some() {
        let csv = formats::candidates_csv(&ctx.header, &stream);
        ctx.write("candidates.csv", csv.as_bytes())?;
    }
    let predictor = ModelPredictor::new(model.clone());
    let mut table = None;
    let result: PlannerResult<f64> = match mode {
        ModeArg::Guardband => plan_guardband(&stream, &knobs, &predictor)?,
        ModeArg::Conformal => {
            let path = calibration.expect("checked in resolve");
            let cal = formats::read_calibration(path)?;
            let t = calibrate_conformal(&cal, &ctx.cfg.conformal.config())?;
            let r = plan_conformal(&stream, &knobs, &t, group, &predictor)?;
            table = Some(t);
            r
        }
        ModeArg::Bounded => {
            let bounds = ctx.cfg.bounded.bounds(model.event_names())?;
            plan_bounded_error(&stream, &model, &bounds, knobs.cap_mw)?
        }
        ModeArg::Baseline => plan_baseline(&stream),
    };
    let evaluation = match &sim {
        Some(params) => {
            let truth = ModelPredictor::new(params.truth_model.clone());
            let oracle = |c: &PnrConfiguration<f64>| oracle_power(&truth, c, params.noise_rel, params.seed);
            let baseline_freq = stream.last().map_or(1.0, |c| c.freq_mhz);
            Some(evaluate_planner(&result, &oracle, knobs.cap_mw, baseline_freq)?)
        }
        None => None,
    };
    notes.extend(result.notes.iter().cloned());
    let record = PlanRecord {
        mode: result.mode,
        cap_mw: knobs.cap_mw,
        candidates: stream.len(),
        selected: result
            .selected
            .iter()
            .map(|s| SelectedRecord {
                role: s.role.as_str(),
                graph_id: s.config.graph_id.clone(),
                iteration: s.config.iteration,
                freq_mhz: s.config.freq_mhz,
                pred_mw: s.pred_mw,
                upper_bound_mw: s.upper_bound_mw,
            })
            .collect(),
        stopped_at_iteration: result.stopped_at_iteration,
        notes,
        models_evaluated: result.models_evaluated,
        infeasible_models: result.infeasible_models,
        quantiles: table.as_ref().map(quantiles_record),
        evaluation,
    };
    let csv = formats::plan_csv(&ctx.header, &result);
    ctx.write("plan.csv", csv.as_bytes())?;
    ctx.write_json("plan.json", &record)?;
    println!("{}: {} of {} candidates selected under {} mW", result.mode.as_str(), result.selected.len(), stream.len(), knobs.cap_mw);
    Ok(ctx.written)
}

#[derive(Serialize)]
struct SuiteRecord<'a> {
    options: DefaultSuiteOptions,
    summaries: &'a [EvalSummary<f64>],
}

fn cmd_suite(mut ctx: Ctx<'_>) -> CliResult<Vec<PathBuf>> {
    let s = &ctx.cfg.suite;
    let opts = DefaultSuiteOptions { seed: ctx.seed, noise_rel: s.noise_rel, iterations: s.iterations, cap_fractions: s.cap_fractions.clone() };
    let mut spec = default_suite(&opts)?;
    let p = &ctx.cfg.planner;
    spec.knobs.k = p.k;
    spec.knobs.gamma_anchor = p.gamma_anchor;
    spec.knobs.gamma_spec = p.gamma_spec;
    spec.knobs.diversity_lambda = p.diversity_lambda;
    spec.knobs.min_freq_step_mhz = p.min_freq_step_mhz;
    let cal = calibration_samples(&spec.kernels, &spec.predictor, ctx.seed ^ CALIBRATION_SEED_SALT)?;
    spec.conformal = Some(calibrate_conformal(&cal, &ctx.cfg.conformal.config())?);
    spec.conformal_by_kernel = ctx.cfg.conformal.by_group;
    spec.bounds = Some(ctx.cfg.bounded.bounds(spec.predictor.event_names())?);
    let report = run_suite(&spec)?;

    let b = |v: bool| v.to_string();
    let cell_rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|c| {
            let o = &c.outcome;
            vec![
                c.kernel.clone(),
                c.cap_mw.to_string(),
                c.mode.as_str().to_string(),
                c.baseline_freq_mhz.to_string(),
                c.stopped_at_iteration.map_or(String::new(), |i| i.to_string()),
                b(o.success),
                o.anchor_success.map_or(String::new(), b),
                opt(o.dcap_pct),
                opt(o.norm_freq),
                o.k_returned.to_string(),
                b(o.bounds_respected),
                opt(o.spec_uplift),
            ]
        })
        .collect();
    let cells_csv = formats::table_csv(
        &ctx.header,
        &[
            "kernel", "cap_mw", "mode", "baseline_freq_mhz", "stopped_at_iteration", "success", "anchor_success",
            "dcap_pct", "norm_freq", "k_returned", "bounds_respected", "spec_uplift",
        ],
        &cell_rows,
    );
    let summary_rows: Vec<Vec<String>> = report
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.mode.as_str().to_string(),
                s.cells.to_string(),
                s.success_rate_pct.to_string(),
                opt(s.median_dcap_pct),
                opt(s.p95_dcap_pct),
                opt(s.avg_norm_freq),
                s.avg_k_returned.to_string(),
                opt(s.anchor_success_rate_pct),
                opt(s.avg_spec_uplift),
            ]
        })
        .collect();
    let summary_columns = [
        "mode", "cells", "success_rate_pct", "median_dcap_pct", "p95_dcap_pct", "avg_norm_freq", "avg_k_returned",
        "anchor_success_rate_pct", "avg_spec_uplift",
    ];
    let summary_csv = formats::table_csv(&ctx.header, &summary_columns, &summary_rows);
    ctx.write("suite_cells.csv", cells_csv.as_bytes())?;
    ctx.write("suite_summary.csv", summary_csv.as_bytes())?;
    ctx.write_json("suite.json", &SuiteRecord { options: opts, summaries: &report.summaries })?;

    println!("{:<14} {:>9} {:>12} {:>10} {:>8}", "mode", "success%", "median dcap", "norm freq", "avg k");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    for s in &report.summaries {
        println!(
            "{:<14} {:>9.1} {:>12} {:>10} {:>8.2}",
            s.mode.as_str(),
            s.success_rate_pct,
            fmt(s.median_dcap_pct),
            fmt(s.avg_norm_freq),
            s.avg_k_returned
        );
    }
    Ok(ctx.written)
}

fn cmd_gen_data(mut ctx: Ctx<'_>) -> CliResult<Vec<PathBuf>> {
    let gen = &ctx.cfg.gen;
    if gen.events == 0 || gen.rows == 0 || gen.kernels == 0 || gen.variants == 0 {
        return Err(CliError::usage("[gen] events, rows, kernels and variants must be >= 1"));
    }
    if !(gen.noise_rel.is_finite() && (0.0..1.0).contains(&gen.noise_rel)) {
        return Err(CliError::usage("[gen] noise_rel must lie in [0, 1)"));
    }
    if !(gen.leak_mw.is_finite() && gen.leak_mw >= 0.0) {
        return Err(CliError::usage("[gen] leak_mw must be finite and >= 0"));
    }
    let model = synth::planted_model(gen, ctx.seed)?;
    let samples = synth::planted_samples(gen, &model, ctx.seed)?;
    let data_dir = ctx.out_dir.join("data");
    fs::create_dir_all(&data_dir).map_err(|e| CliError::io(&data_dir, e))?;
    for s in &samples {
        let stem = format!("{}_{}", s.kernel, s.variant);
        formats::write_sample(&data_dir, &stem, s)?;
        ctx.written.push(data_dir.join(format!("{stem}.csv")));
        ctx.written.push(data_dir.join(format!("{stem}.json")));
    }
    let model_file = ModelFile::from_model(&model, ctx.header.clone());
    ctx.write("truth_model.json", &formats::pretty(&model_file))?;
    println!("wrote {} samples to {}", samples.len(), data_dir.display());
    Ok(ctx.written)
}
