//! Independent reference implementations and data generators shared by the
//! integration tests and the acceptance suite.
#![allow(dead_code)]

use powercap::planners::PlannerKnobs;
use powercap::{
    canonicalize_report, ActivitySample, EnergyModel, EventVector, Matrix, ModelKind, OperatingPoint,
    PnrConfiguration,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn op() -> OperatingPoint<f64> {
    OperatingPoint::new(0.8, 100.0, "tt").unwrap()
}

pub fn random_matrix(r: &mut ChaCha8Rng, m: usize, n: usize, lo: f64, hi: f64) -> Matrix<f64> {
    Matrix::from_vec(m, n, (0..m * n).map(|_| r.random_range(lo..hi)).collect())
}

fn objective(a: &Matrix<f64>, b: &[f64], l1: f64, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        let p: f64 = (0..a.cols()).map(|j| a[(i, j)] * x[j]).sum();
        s += (p - b[i]).powi(2);
    }
    s + l1 * x.iter().sum::<f64>()
}

/// Accelerated projected gradient (FISTA with adaptive restart) for
/// `min ‖Ax − b‖² + l1·Σx, x ≥ 0`. Returns the best iterate's objective.
pub fn projected_gradient(a: &Matrix<f64>, b: &[f64], l1: f64, steps: usize) -> (Vec<f64>, f64) {
    let (m, n) = (a.rows(), a.cols());
    // Lipschitz constant of the gradient: 2·‖A‖₂² ≤ 2·‖A‖_F².
    let fro: f64 = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
    let step = 1.0 / (2.0 * fro.max(1e-300));
    let grad = |x: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>() - b[i]).collect();
        (0..n).map(|j| 2.0 * (0..m).map(|i| a[(i, j)] * r[i]).sum::<f64>() + l1).collect()
    };
    let mut x = vec![0.0; n];
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut best = (x.clone(), objective(a, b, l1, &x));
    let mut prev_obj = best.1;
    for _ in 0..steps {
        let g = grad(&y);
        let x_new: Vec<f64> = (0..n).map(|j| (y[j] - step * g[j]).max(0.0)).collect();
        let obj = objective(a, b, l1, &x_new);
        if obj > prev_obj {
            // Restart momentum.
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = (0..n).map(|j| x_new[j] + (t - 1.0) / t_new * (x_new[j] - x[j])).collect();
        x = x_new;
        t = t_new;
        prev_obj = obj;
        if obj < best.1 {
            best = (x.clone(), obj);
        }
    }
    best
}

/// Row prediction by an explicit triple loop over rows, events, and samples.
pub fn dense_rows(model: &EnergyModel<f64>, counts: &[f64]) -> Vec<f64> {
    let w = model.w();
    let mut out = vec![0.0; w.rows()];
    for (r, o) in out.iter_mut().enumerate() {
        for e in 0..w.cols() {
            *o += w[(r, e)] * model.alpha()[e] * counts[e];
        }
    }
    if let Some(r) = model.leak_row_index() {
        out[r] += model.leak_mw();
    }
    out
}

pub fn event_names(e: usize) -> Vec<String> {
    (0..e).map(|i| format!("ev{i:02}")).collect()
}

pub fn row_names(r: usize) -> Vec<String> {
    (0..r).map(|i| format!("top/row{i:03}")).collect()
}

/// A planted model whose rows are each driven by one or two events.
pub fn planted_model(r: &mut ChaCha8Rng, e: usize, rows: usize) -> EnergyModel<f64> {
    let mut w = Matrix::zeros(rows, e);
    for row in 0..rows {
        let primary = row % e;
        w[(row, primary)] = r.random_range(0.5..1.5);
        if r.random_bool(0.3) {
            let other = r.random_range(0..e);
            w[(row, other)] += r.random_range(0.1..0.4);
        }
    }
    let alpha: Vec<f64> = (0..e).map(|_| r.random_range(0.5..3.0)).collect();
    EnergyModel::new(event_names(e), row_names(rows), w, alpha, 0.0, op(), ModelKind::Hierarchical)
        .unwrap()
        .rescaled()
}

/// Samples `y = W diag(α) x · (1 + noise)` with independent per-row noise,
/// `variants` samples per kernel.
pub fn planted_samples(
    r: &mut ChaCha8Rng,
    model: &EnergyModel<f64>,
    kernels: usize,
    variants: usize,
    noise: f64,
) -> Vec<ActivitySample<f64>> {
    let e = model.num_events();
    let mut out = Vec::new();
    for k in 0..kernels {
        for v in 0..variants {
            let counts: Vec<f64> = (0..e).map(|_| r.random_range(1.0..20.0)).collect();
            let rows = dense_rows(model, &counts);
            let noisy: Vec<(String, f64)> = model
                .row_paths()
                .iter()
                .zip(rows)
                .map(|(p, y)| (p.clone(), y * (1.0 + noise * r.random_range(-1.0..1.0))))
                .collect();
            out.push(
                ActivitySample::new(
                    format!("kernel{k}"),
                    format!("v{v}"),
                    EventVector::new(model.event_names().to_vec(), counts).unwrap(),
                    canonicalize_report(noisy, op()).unwrap(),
                )
                .unwrap(),
            );
        }
    }
    out
}

/// Straight transcription of the anchor/speculative loop: a pool of up to
/// K candidates, replacement of the lowest-scoring member, break on the
/// first speculative violation, output anchor plus the best other members.
pub fn reference_guardband(
    stream: &[PnrConfiguration<f64>],
    knobs: &PlannerKnobs<f64>,
    power: &dyn Fn(&PnrConfiguration<f64>) -> f64,
    phi: &[Vec<f64>],
) -> Vec<(String, bool)> {
    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            d / (na * nb)
        }
    };
    let score = |i: usize, set: &[usize]| -> f64 {
        stream[i].freq_mhz - knobs.diversity_lambda * set.iter().map(|&j| cos(&phi[i], &phi[j])).sum::<f64>()
    };
    let mut anchor: Option<usize> = None;
    let mut pool: Vec<usize> = vec![];
    let mut f_prev = 0.0;
    for (i, x) in stream.iter().enumerate() {
        if x.freq_mhz < f_prev + knobs.min_freq_step_mhz {
            continue;
        }
        let mu = power(x);
        if (1.0 + knobs.gamma_anchor) * mu <= knobs.cap_mw {
            anchor = Some(i);
        }
        if (1.0 + knobs.gamma_spec) * mu > knobs.cap_mw {
            break;
        }
        if pool.len() < knobs.k {
            pool.push(i);
        } else {
            let without = |j: usize| -> Vec<usize> { pool.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v).collect() };
            let mut worst = 0;
            for j in 1..pool.len() {
                if score(pool[j], &without(j)) < score(pool[worst], &without(worst)) {
                    worst = j;
                }
            }
            let rest = without(worst);
            if score(i, &rest) > score(pool[worst], &rest) {
                pool[worst] = i;
            }
        }
        f_prev = x.freq_mhz;
    }
    let mut out = vec![];
    if let Some(a) = anchor {
        out.push((stream[a].graph_id.clone(), true));
    }
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            let rest: Vec<usize> = pool.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v).collect();
            (score(i, &rest), i)
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(stream[b.1].freq_mhz.partial_cmp(&stream[a.1].freq_mhz).unwrap())
            .then(stream[a.1].graph_id.cmp(&stream[b.1].graph_id))
    });
    let mut spec: Vec<usize> = vec![];
    for (_, i) in ranked {
        if out.len() + spec.len() >= knobs.k {
            break;
        }
        if Some(stream[i].graph_id.clone()) == anchor.map(|a| stream[a].graph_id.clone()) {
            continue;
        }
        spec.push(i);
    }
    spec.sort_by(|&a, &b| {
        stream[b].freq_mhz.partial_cmp(&stream[a].freq_mhz).unwrap().then(stream[a].graph_id.cmp(&stream[b].graph_id))
    });
    out.extend(spec.into_iter().map(|i| (stream[i].graph_id.clone(), false)));
    out
}

/// A stream whose single event `p` equals the unit-cost predicted power.
pub fn power_stream(r: &mut ChaCha8Rng, n: usize, monotone: bool) -> Vec<PnrConfiguration<f64>> {
    let mut f = 100.0;
    let mut p = 10.0;
    (0..n)
        .map(|t| {
            f += r.random_range(0.0..20.0);
            p = if monotone { p + r.random_range(0.1..5.0) } else { r.random_range(5.0..100.0) };
            let features = vec![r.random_range(0.0..10.0), r.random_range(0.0..10.0), f];
            PnrConfiguration::new(
                format!("{t:04x}"),
                t as u64,
                f,
                1,
                EventVector::from_pairs([("p", p)]).unwrap(),
                features,
            )
            .unwrap()
        })
        .collect()
}

pub fn unit_power(c: &PnrConfiguration<f64>) -> f64 {
    c.events.get("p").unwrap()
}
