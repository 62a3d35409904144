//! Planted datasets for trying the train/eval workflow without real reports.

use powercap::{
    canonicalize_report, predict_rows, ActivitySample, EnergyModel, EventVector, Matrix, ModelKind, OperatingPoint,
    Result, LEAKAGE_ROW,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::GenSection;

/// A row-structured model: each row is driven by one primary event and,
/// with probability 0.3, a second one.
pub fn planted_model(gen: &GenSection, seed: u64) -> Result<EnergyModel<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (e, r) = (gen.events, gen.rows);
    let events: Vec<String> = (0..e).map(|i| format!("ev{i:02}")).collect();
    let mut rows: Vec<String> = (0..r).map(|i| format!("top/tile{:02}/unit{i:03}", i % 16)).collect();
    let leak_row = gen.leak_mw > 0.0;
    if leak_row {
        rows.push(LEAKAGE_ROW.into());
    }
    let mut w = Matrix::zeros(rows.len(), e);
    for row in 0..r {
        w[(row, row % e.max(1))] = rng.random_range(0.5..1.5);
        if rng.random_bool(0.3) {
            let other = rng.random_range(0..e);
            w[(row, other)] += rng.random_range(0.1..0.4);
        }
    }
    let alpha: Vec<f64> = (0..e).map(|_| rng.random_range(0.5..3.0)).collect();
    let op = OperatingPoint::new(0.8, 100.0, "tt")?;
    Ok(EnergyModel::new(events, rows, w, alpha, gen.leak_mw, op, ModelKind::Hierarchical)?.rescaled())
}

/// Samples `y = W diag(α) x` with per-row relative noise in `±noise_rel`.
pub fn planted_samples(gen: &GenSection, model: &EnergyModel<f64>, seed: u64) -> Result<Vec<ActivitySample<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Vec::with_capacity(gen.kernels * gen.variants);
    for k in 0..gen.kernels {
        for v in 0..gen.variants {
            let counts: Vec<f64> = (0..model.num_events()).map(|_| rng.random_range(1.0..20.0f64).round()).collect();
            let events = EventVector::new(model.event_names().to_vec(), counts)?;
            let rows = predict_rows(model, &events)?;
            let noisy: Vec<(String, f64)> = model
                .row_paths()
                .iter()
                .zip(rows)
                .map(|(p, y)| (p.clone(), y * (1.0 + gen.noise_rel * rng.random_range(-1.0..1.0))))
                .collect();
            let report = canonicalize_report(noisy, model.train_op().clone())?;
            out.push(ActivitySample::new(format!("kernel{k:02}"), format!("v{v}"), events, report)?);
        }
    }
    Ok(out)
}
