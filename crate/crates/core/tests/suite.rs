use powercap::harness::{default_suite, generate_pipeline_sequence, run_suite, DefaultSuiteOptions};
use powercap::planners::PlannerMode;

fn small() -> DefaultSuiteOptions {
    DefaultSuiteOptions { iterations: 20, ..DefaultSuiteOptions::default() }
}

#[test]
fn cells_are_ordered_and_complete() {
    let spec = default_suite(&small()).unwrap();
    let report = run_suite(&spec).unwrap();
    let mut expected = vec![];
    for k in &spec.kernels {
        for &c in &k.caps_mw {
            for &m in &spec.modes {
                expected.push((k.params.kernel.clone(), c, m));
            }
        }
    }
    let got: Vec<_> = report.cells.iter().map(|c| (c.kernel.clone(), c.cap_mw, c.mode)).collect();
    assert_eq!(got, expected);
    assert_eq!(report.summaries.len(), spec.modes.len());
}

#[test]
fn runs_are_reproducible() {
    let spec = default_suite(&small()).unwrap();
    assert_eq!(run_suite(&spec).unwrap(), run_suite(&spec).unwrap());
    assert_eq!(default_suite(&small()).unwrap(), spec);
}

#[test]
fn kernel_order_does_not_change_cells() {
    let spec = default_suite(&small()).unwrap();
    let mut reversed = spec.clone();
    reversed.kernels.reverse();
    let a = run_suite(&spec).unwrap();
    let b = run_suite(&reversed).unwrap();
    for cell in &a.cells {
        assert!(b.cells.contains(cell));
    }
}

#[test]
fn generous_caps_always_succeed() {
    let mut spec = default_suite(&small()).unwrap();
    spec.modes = vec![PlannerMode::Guardband, PlannerMode::Conformal, PlannerMode::BoundedError];
    for k in &mut spec.kernels {
        k.caps_mw = vec![1e6];
    }
    let report = run_suite(&spec).unwrap();
    for c in &report.cells {
        assert!(c.outcome.success, "{c:?}");
        assert!((c.outcome.norm_freq.unwrap() - 1.0).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn sequences_have_rising_frequency_and_stable_ids() {
    let spec = default_suite(&small()).unwrap();
    for k in &spec.kernels {
        let s = generate_pipeline_sequence(&k.params).unwrap();
        assert_eq!(s.len(), k.params.iterations);
        assert!(s.windows(2).all(|w| w[1].freq_mhz >= w[0].freq_mhz));
        assert_eq!(s, generate_pipeline_sequence(&k.params).unwrap());
        let mut ids: Vec<_> = s.iter().map(|c| c.graph_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), s.len());
    }
}
