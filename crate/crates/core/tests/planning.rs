mod common;

use common::{op, power_stream, reference_guardband, rng, unit_power};
use powercap::planners::{
    calibrate_conformal, conformal_quantile, conformal_upper_bound, error_grid, plan_bounded_error, plan_conformal,
    plan_guardband, BoundMode, CalibrationSample, ConformalConfig, ErrorBounds, PlannerKnobs, Role,
};
use powercap::{EnergyModel, EventVector, ModelPredictor, PnrConfiguration, PowerPredictor, Result};
use proptest::prelude::*;
use rand::Rng;

fn unit(c: &PnrConfiguration<f64>) -> Result<f64> {
    Ok(unit_power(c))
}

/// Mean/population-variance standardization, written out independently.
fn standardize(stream: &[PnrConfiguration<f64>]) -> Vec<Vec<f64>> {
    let n = stream.len() as f64;
    let d = stream[0].features.len();
    let mut out: Vec<Vec<f64>> = stream.iter().map(|c| c.features.clone()).collect();
    for j in 0..d {
        let mean = stream.iter().map(|c| c.features[j]).sum::<f64>() / n;
        let sd = (stream.iter().map(|c| (c.features[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for row in &mut out {
            row[j] = if sd > 0.0 { (row[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

#[test]
fn guardband_matches_reference_interpreter() {
    let mut r = rng(21);
    for case in 0..300 {
        let n = r.random_range(1..40);
        let stream = power_stream(&mut r, n, case % 3 != 0);
        let mut knobs = PlannerKnobs::with_cap(r.random_range(20.0..150.0));
        knobs.k = r.random_range(1..6);
        knobs.diversity_lambda = [0.0, 1.0, 25.0][case % 3];
        knobs.min_freq_step_mhz = [0.0, 0.0, 5.0, 15.0][case % 4];
        let got = plan_guardband(&stream, &knobs, &unit).unwrap();
        let got: Vec<(String, bool)> =
            got.selected.iter().map(|s| (s.config.graph_id.clone(), s.role == Role::Anchor)).collect();
        let want = reference_guardband(&stream, &knobs, &unit_power, &standardize(&stream));
        assert_eq!(got, want, "case {case}");
    }
}

#[test]
fn monotone_stream_anchor_is_last_safe_candidate() {
    let mut r = rng(22);
    for _ in 0..100 {
        let stream = power_stream(&mut r, 30, true);
        let knobs = PlannerKnobs::with_cap(r.random_range(20.0..120.0));
        let res = plan_guardband(&stream, &knobs, &unit).unwrap();
        let want = stream.iter().rev().find(|c| 1.45 * unit_power(c) <= knobs.cap_mw);
        assert_eq!(res.anchor().map(|a| a.config.graph_id.clone()), want.map(|c| c.graph_id.clone()));
    }
}

fn stream_strategy() -> impl Strategy<Value = (u64, usize, bool, f64, usize, f64)> {
    (any::<u64>(), 0usize..40, any::<bool>(), 5.0f64..200.0, 1usize..6, prop_oneof![Just(0.0), 0.0f64..50.0])
}

proptest! {
    #[test]
    fn guardband_never_returns_over_bound((seed, n, mono, cap, k, lambda) in stream_strategy()) {
        let stream = power_stream(&mut rng(seed), n, mono);
        let mut knobs = PlannerKnobs::with_cap(cap);
        knobs.k = k;
        knobs.diversity_lambda = lambda;
        let res = plan_guardband(&stream, &knobs, &unit).unwrap();
        prop_assert!(res.selected.len() <= k);
        let mut ids: Vec<&str> = res.selected.iter().map(|s| s.config.graph_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), res.selected.len());
        for s in &res.selected {
            let mu = unit_power(&s.config);
            let gamma = if s.role == Role::Anchor { knobs.gamma_anchor } else { knobs.gamma_spec };
            prop_assert!((1.0 + gamma) * mu <= cap);
            prop_assert!(s.upper_bound_mw.unwrap() <= cap);
        }
        prop_assert!(res.selected.iter().filter(|s| s.role == Role::Anchor).count() <= 1);
    }

    #[test]
    fn quantile_is_monotone_in_alpha(scores in prop::collection::vec(0.0f64..100.0, 1..200), a in 0.001f64..0.999, b in 0.001f64..0.999) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        // Smaller miscoverage means a larger (or equal) quantile.
        prop_assert!(conformal_quantile(&scores, lo).unwrap() >= conformal_quantile(&scores, hi).unwrap());
    }

    #[test]
    fn conformal_respects_declared_bounds((seed, n, mono, cap, k, _) in stream_strategy(), q in 0.0f64..30.0) {
        let stream = power_stream(&mut rng(seed), n, mono);
        let cal: Vec<CalibrationSample<f64>> = (0..50)
            .map(|i| CalibrationSample { ptpx_mw: 10.0 + q * (i as f64 / 49.0), pred_mw: 10.0, group: "g".into(), freq_mhz: 100.0 })
            .collect();
        let table = calibrate_conformal(&cal, &ConformalConfig::default()).unwrap();
        let mut knobs = PlannerKnobs::with_cap(cap);
        knobs.k = k;
        let res = plan_conformal(&stream, &knobs, &table, None, &unit).unwrap();
        for s in &res.selected {
            let mode = if s.role == Role::Anchor { BoundMode::Anchor } else { BoundMode::Spec };
            let u = conformal_upper_bound(&table, unit_power(&s.config), s.config.freq_mhz, None, mode);
            prop_assert!(u <= cap);
            prop_assert_eq!(s.upper_bound_mw.unwrap(), u);
        }
    }
}

#[test]
fn conformal_coverage_monte_carlo() {
    // Exchangeable residuals: P(y ≤ pred + q) ≥ 1 − α.
    let alpha = 0.05;
    let mut r = rng(31);
    let trials = 2000;
    let mut covered = 0;
    for _ in 0..trials {
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> (f64, f64) {
            let pred = r.random_range(10.0..100.0);
            (pred * (1.0 + 0.2 * r.random_range(-1.0..1.0f64).powi(3)), pred)
        };
        let cal: Vec<CalibrationSample<f64>> = (0..400)
            .map(|_| {
                let (y, p) = draw(&mut r);
                CalibrationSample { ptpx_mw: y, pred_mw: p, group: "g".into(), freq_mhz: 100.0 }
            })
            .collect();
        let config = ConformalConfig { alpha_spec: alpha, scale_with_freq: false, ..ConformalConfig::default() };
        let table = calibrate_conformal(&cal, &config).unwrap();
        let (y, p) = draw(&mut r);
        if y <= conformal_upper_bound(&table, p, 100.0, None, BoundMode::Spec) {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    assert!(rate >= 0.93, "coverage {rate}");
}

fn random_problem(r: &mut rand_chacha::ChaCha8Rng, e: usize, n: usize) -> (EnergyModel<f64>, Vec<PnrConfiguration<f64>>) {
    let names: Vec<String> = (0..e).map(|i| format!("e{i}")).collect();
    let beta: Vec<f64> = (0..e).map(|_| r.random_range(0.1..2.0)).collect();
    let base = EnergyModel::from_beta(names.clone(), beta, r.random_range(0.0..5.0), op()).unwrap();
    let mut f = 100.0;
    let cands = (0..n)
        .map(|t| {
            f += r.random_range(0.0..30.0);
            let counts: Vec<f64> = (0..e).map(|_| r.random_range(0.0..30.0)).collect();
            PnrConfiguration::new(format!("c{t}"), t as u64, f, 1, EventVector::new(names.clone(), counts).unwrap(), vec![])
                .unwrap()
        })
        .collect();
    (base, cands)
}

#[test]
fn bounded_error_covers_any_model_on_the_grid() {
    let mut r = rng(41);
    for trial in 0..50 {
        let e = r.random_range(1..4);
        let n = r.random_range(1..25);
        let (base, cands) = random_problem(&mut r, e, n);
        let bounds = ErrorBounds::uniform(e, 0.7, 1.4, 3);
        let cap = r.random_range(10.0..200.0);
        let res = plan_bounded_error(&cands, &base, &bounds, cap).unwrap();
        let grid = error_grid(&bounds).unwrap();
        assert_eq!(res.models_evaluated, grid.len());
        // Choose the "true" model from the grid and brute-force its best pick.
        let factors = &grid[r.random_range(0..grid.len())];
        let truth = ModelPredictor::new(base.with_scaled_alpha(factors).unwrap());
        let feasible: Vec<(f64, f64)> = cands
            .iter()
            .map(|c| (truth.predict_power(c).unwrap(), c.freq_mhz))
            .filter(|(p, _)| *p <= cap)
            .collect();
        if feasible.is_empty() {
            continue;
        }
        let hit = res.selected.iter().any(|s| truth.predict_power(&s.config).unwrap() <= cap);
        assert!(hit, "trial {trial}: no feasible member for factors {factors:?}");
        // The most pessimistic corner's pick stays under the cap for every grid model.
        if let Some(a) = res.anchor() {
            for f in &grid {
                let m = ModelPredictor::new(base.with_scaled_alpha(f).unwrap());
                assert!(m.predict_power(&a.config).unwrap() <= cap * (1.0 + 1e-12));
            }
        }
        for s in &res.selected {
            assert!(s.upper_bound_mw.unwrap() <= cap);
        }
    }
}

#[test]
fn bounded_error_is_deterministic() {
    let mut r = rng(42);
    let (base, cands) = random_problem(&mut r, 3, 20);
    let bounds = ErrorBounds::uniform(3, 0.8, 1.2, 4);
    let a = plan_bounded_error(&cands, &base, &bounds, 60.0).unwrap();
    let b = plan_bounded_error(&cands, &base, &bounds, 60.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bounded_error_budget_is_enforced() {
    let mut r = rng(43);
    let (base, cands) = random_problem(&mut r, 3, 5);
    let mut bounds = ErrorBounds::uniform(3, 0.8, 1.2, 50);
    bounds.budget = 1000;
    assert!(plan_bounded_error(&cands, &base, &bounds, 60.0).is_err());
}
