mod common;

use std::f64::consts::PI;

use common::telegraph;
use omsync_core::phase::*;
use omsync_core::rng;
use proptest::prelude::*;
use rand::Rng;

fn uniform_series(n: usize, seed: u64) -> PhaseSeries {
    let mut r = rng::stream(seed, 0);
    let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 2.0 * PI - PI).collect();
    PhaseSeries::from_raw((0..n).map(|k| k as f64).collect(), &raw)
}

#[test]
fn uniform_phases_give_a_flat_histogram() {
    let n = 200_000;
    let ps = uniform_series(n, 21);
    let h = histogram(&ps, 32).unwrap();
    let p = 1.0 / 32.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in h.counts.iter().enumerate() {
        assert!(
            (c as f64 - n as f64 * p).abs() < 4.0 * sigma,
            "bin {i}: {c}"
        );
    }
    let m = sync_measure(&ps);
    let bound = 3.0 * (0.5 / n as f64).sqrt();
    assert!(
        m.mean_cos.abs() < bound && m.mean_sin.abs() < bound,
        "{m:?}"
    );
}

#[test]
fn histogram_measure_agrees_with_series_measure() {
    let ps = telegraph::series(100.0, 50.0, 0.4, 0.5, 2e5, 3);
    let direct = sync_measure(&ps);
    let binned = histogram(&ps, 1024).unwrap().sync_measure();
    assert!((direct.mean_cos - binned.mean_cos).abs() < 1e-3);
    assert!((direct.mean_sin - binned.mean_sin).abs() < 1e-3);
}

#[test]
fn symmetric_jitter_has_no_sine_component() {
    let ps = telegraph::series(100.0, 50.0, 0.3, 0.5, 1e6, 4);
    let m = sync_measure(&ps);
    let se = sync_measure_stderr(&ps, 20);
    assert!(m.mean_sin.abs() < 3.0 * se.mean_sin + 1e-3, "{m:?} {se:?}");
}

#[test]
fn telegraph_histogram_is_bimodal() {
    let ps = telegraph::series(100.0, 50.0, 0.3, 0.5, 5e5, 5);
    let b = bimodality(&histogram(&ps, DEFAULT_BINS).unwrap(), PI / 8.0);
    assert!(b.is_bimodal(0.0), "{b:?}");
    assert!(b.zero_peak.0.abs() < PI / 8.0);
    assert!(PI - b.pi_peak.0.abs() < PI / 8.0);
    assert!((b.zero_mass - 2.0 / 3.0).abs() < 0.05, "{b:?}");
}

#[test]
fn pooling_runs_adds_their_switches() {
    let cfg = ResidenceConfig::for_frequency(1.0);
    let a = telegraph::series(100.0, 50.0, 0.1, 0.5, 2e5, 6);
    let b = telegraph::series(100.0, 50.0, 0.1, 0.5, 2e5, 7);
    let ra = residence_times(&a, &cfg);
    let rb = residence_times(&b, &cfg);
    let pooled = residence_times_pooled(&[a, b], &cfg);
    assert_eq!(pooled.switch_count, ra.switch_count + rb.switch_count);
    assert_eq!(
        pooled.intervals.len(),
        ra.intervals.len() + rb.intervals.len()
    );
    assert_eq!(
        pooled.fitted_dwells(SyncState::Zero).len(),
        ra.fitted_dwells(SyncState::Zero).len() + rb.fitted_dwells(SyncState::Zero).len()
    );
    let p = pooled.p_zero;
    assert!(p > ra.p_zero.min(rb.p_zero) - 1e-12 && p < ra.p_zero.max(rb.p_zero) + 1e-12);
}

#[test]
fn pinned_series_is_trapped() {
    let raw: Vec<f64> = (0..5000).map(|k| PI + 0.05 * (k as f64).sin()).collect();
    let ps = PhaseSeries::from_raw((0..5000).map(|k| k as f64).collect(), &raw);
    let r = residence_times(&ps, &ResidenceConfig::for_frequency(1.0));
    assert!(r.is_monostable());
    assert_eq!(r.pi, DwellFit::Trapped);
    assert_eq!(r.zero, DwellFit::NoData);
}

#[test]
fn ks_accepts_exponential_and_rejects_uniform() {
    let mut r = rng::stream(8, 0);
    let exp: Vec<f64> = (0..2000)
        .map(|_| -30.0 * (1.0 - r.random::<f64>()).ln())
        .collect();
    assert!(ks_exponential(&exp, 30.0).p_value > 0.01);
    let flat: Vec<f64> = (0..2000).map(|_| 60.0 * r.random::<f64>()).collect();
    assert!(ks_exponential(&flat, 30.0).p_value < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn measure_lies_in_unit_disk(raw in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let ps = PhaseSeries::from_raw((0..raw.len()).map(|k| k as f64).collect(), &raw);
        let m = sync_measure(&ps);
        prop_assert!(m.mean_cos.hypot(m.mean_sin) <= 1.0 + 1e-12);
    }

    #[test]
    fn global_rotation_by_pi_flips_cosine(raw in prop::collection::vec(-4.0f64..4.0, 1..200)) {
        let t: Vec<f64> = (0..raw.len()).map(|k| k as f64).collect();
        let shifted: Vec<f64> = raw.iter().map(|x| x + PI).collect();
        let a = sync_measure(&PhaseSeries::from_raw(t.clone(), &raw));
        let b = sync_measure(&PhaseSeries::from_raw(t, &shifted));
        prop_assert!((a.mean_cos + b.mean_cos).abs() < 1e-9);
        prop_assert!((a.mean_sin + b.mean_sin).abs() < 1e-9);
    }

    #[test]
    fn debounced_dwells_alternate_and_tile_the_record(seed in 0u64..1000, tau in 20.0f64..200.0) {
        let ps = telegraph::series(tau, 0.5 * tau, 0.2, 0.5, 2e4, seed);
        let cfg = ResidenceConfig::for_frequency(1.0);
        let r = residence_times(&ps, &cfg);
        for w in r.intervals.windows(2) {
            prop_assert!(w[0].state != w[1].state);
            prop_assert!((w[0].end - w[1].start).abs() < 1e-9);
        }
        for iv in r.intervals.iter().filter(|iv| !iv.censored) {
            prop_assert!(iv.duration() >= cfg.debounce - 1e-9);
        }
        prop_assert!((r.p_zero + r.p_pi - 1.0).abs() < 1e-9);
    }
}
