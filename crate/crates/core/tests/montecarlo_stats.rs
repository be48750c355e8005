use rand::Rng;
use rayon::ThreadPoolBuilder;

use sfwm_core::detection::{count_coincidences, summarize};
use sfwm_core::montecarlo::{simulate_counts, sweep_power, RunConfig, SimulationMode, SweepMethod};
use sfwm_core::numeric::ols_slope;
use sfwm_core::presets;
use sfwm_core::rng::stream_rng;

/// Reference device driven to μ = 0.05 into 10 dB channels: a few thousand
/// coincidences per million gates.
fn bright(n_pulses: u64, seed: u64, mode: SimulationMode) -> RunConfig {
    let mut cfg = presets::paper_counting().with_power(0.23 * (0.05f64 / 0.006).sqrt());
    for ch in [&mut cfg.channels.signal, &mut cfg.channels.idler] {
        ch.total_loss_db = 10.0;
        ch.noise_per_gate = 1e-3;
    }
    cfg.run.n_pulses = n_pulses;
    cfg.run.seed = seed;
    cfg.run.mode = mode;
    cfg
}

#[test]
fn results_are_identical_across_worker_counts() {
    for mode in [SimulationMode::PerPulse, SimulationMode::Aggregate] {
        let n = if mode == SimulationMode::PerPulse { 1_000_003 } else { 200_000_017 };
        let cfg = bright(n, 11, mode);
        let runs: Vec<_> = [1, 2, 4]
            .iter()
            .map(|&threads| {
                ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .unwrap()
                    .install(|| simulate_counts(&cfg).unwrap())
            })
            .collect();
        assert_eq!(runs[0], runs[1], "{mode:?}");
        assert_eq!(runs[0], runs[2], "{mode:?}");
        assert_eq!(simulate_counts(&cfg).unwrap(), runs[0]);
        assert_eq!(runs[0].n_gates, n);
    }
}

#[test]
fn different_seeds_differ() {
    let a = simulate_counts(&bright(100_000, 1, SimulationMode::PerPulse)).unwrap();
    let b = simulate_counts(&bright(100_000, 2, SimulationMode::PerPulse)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn aggregate_agrees_with_per_pulse() {
    let n = 1_000_000;
    let (mut pp_c, mut ag_c, mut pp_a, mut ag_a) = (0.0, 0.0, 0.0, 0.0);
    let (mut pp_s, mut ag_s) = (0.0, 0.0);
    for seed in 0..20 {
        let pp = simulate_counts(&bright(n, seed, SimulationMode::PerPulse)).unwrap();
        let ag = simulate_counts(&bright(n, 1000 + seed, SimulationMode::Aggregate)).unwrap();
        pp_c += pp.coincidences_raw as f64;
        ag_c += ag.coincidences_raw as f64;
        pp_a += pp.accidentals_delayed as f64;
        ag_a += ag.accidentals_delayed as f64;
        pp_s += pp.singles_s as f64;
        ag_s += ag.singles_s as f64;
    }
    for (what, x, y) in [("c_raw", pp_c, ag_c), ("a", pp_a, ag_a), ("singles", pp_s, ag_s)] {
        let sigma = (x + y).sqrt();
        assert!((x - y).abs() <= 3.0 * sigma, "{what}: per-pulse {x} aggregate {y}");
    }
}

#[test]
fn car_standard_error_shrinks_as_inverse_root_n() {
    let spread = |n: u64| {
        let cars: Vec<f64> = (0..200)
            .map(|seed| {
                let s = simulate_counts(&bright(n, seed, SimulationMode::Aggregate)).unwrap();
                summarize(&s, 5e6).car.unwrap()
            })
            .collect();
        let mean = cars.iter().sum::<f64>() / cars.len() as f64;
        (cars.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (cars.len() - 1) as f64).sqrt()
    };
    let ratio = spread(1_000_000) / spread(100_000_000);
    // Expected 10; each 200-sample spread carries about 5% error.
    assert!((7.0..14.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sweep_without_absorption_is_quadratic() {
    let cfg = presets::paper_counting();
    let powers: Vec<f64> = (1..=8).map(|k| 0.05 * f64::from(k)).collect();
    let rows: Vec<_> = sweep_power(&cfg, &powers, SweepMethod::Analytic)
        .unwrap()
        .into_iter()
        .map(|p| p.outcome.unwrap())
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.power_w.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.c_net.ln()).collect();
    let slope = ols_slope(&xs, &ys);
    assert!((slope - 2.0).abs() <= 0.02, "slope {slope}");
}

#[test]
fn independent_streams_have_product_coincidences() {
    let n = 1_000_000;
    let (p_s, p_i) = (0.03, 0.05);
    let mut rng_s = stream_rng(99, 0);
    let mut rng_i = stream_rng(99, 1);
    let s: Vec<bool> = (0..n).map(|_| rng_s.random::<f64>() < p_s).collect();
    let i: Vec<bool> = (0..n).map(|_| rng_i.random::<f64>() < p_i).collect();
    let sum = count_coincidences(&s, &i).unwrap();
    let ps = sum.singles_s as f64 / n as f64;
    let pi = sum.singles_i as f64 / n as f64;
    for (what, observed, pairs) in [
        ("same gate", sum.coincidences_raw, n as f64),
        ("delayed", sum.accidentals_delayed, (n - 1) as f64),
    ] {
        let mean = pairs * ps * pi;
        assert!(
            (observed as f64 - mean).abs() <= 3.0 * mean.sqrt(),
            "{what}: {observed} vs {mean}"
        );
    }
}
