mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use specsep::chirpsep::{
    build_diagram, fit_segment, merge_pieces, ChirpEstimate, EstimateStatus, SnippetPlan, SsoConfig, SsoOperator,
    SsoPoint,
};
use specsep::experiments::{run_experiment, ExperimentSpec, ResultRow};
use specsep::multirec::{mean_std, sample_schedule, ProjectionBasis};
use specsep::synth::{
    add_noise, complex_normal, sample_chirps, sample_exponential, ChirpComponent, ChirpTrain, ExponentialModel,
    NoiseSpec, PointSource, SampleSeries,
};
use specsep::unirec::{spectrum, SpectrumOperator};
use specsep::{Complex64, KernelConfig};

fn ok(c: common::Check) {
    match c {
        Ok(msg) => println!("{msg}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn kernel_localization_bound() {
    ok(common::kernel_localization());
}

#[test]
fn hbar_within_bounds() {
    ok(common::hbar_bounds());
}

#[test]
fn euler_maclaurin_sums() {
    ok(common::euler_maclaurin());
}

#[test]
fn fft_agrees_with_direct_sum() {
    ok(common::fft_vs_direct(11));
}

#[test]
fn noiseless_cluster_conditions() {
    ok(common::cluster_conditions(25, 2024));
}

#[test]
fn dbscan_matches_brute_force() {
    ok(common::dbscan_equivalence(50));
}

#[test]
fn snr_roundtrip() {
    ok(common::snr_roundtrip(100, 5));
}

#[test]
fn reruns_are_byte_identical() {
    ok(common::deterministic_reruns());
}

fn tone_series(n: usize, f: f64, a: Complex64) -> SampleSeries {
    let m = ExponentialModel::new(1, vec![PointSource { amplitude: a, freq: vec![f] }]).unwrap();
    sample_exponential(&m, &[1.0], &[0.0], n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn filter_shape(t in -2.0f64..2.0) {
        let h = common::bump();
        let v = h.eval(t);
        prop_assert_eq!(v, h.eval(-t));
        prop_assert!((0.0..=1.0).contains(&v));
        if t.abs() <= 0.5 { prop_assert_eq!(v, 1.0); }
        if t.abs() >= 1.0 { prop_assert_eq!(v, 0.0); }
    }

    #[test]
    fn kernel_even_with_unit_peak(n in 1usize..400, x in -PI..PI) {
        let k = KernelConfig::new(n, common::bump()).unwrap();
        prop_assert!((k.eval(0.0) - 1.0).abs() < 1e-12);
        prop_assert!((k.eval(x) - k.eval(-x)).abs() < 1e-12);
        prop_assert!((k.eval(x) - common::phi_direct(k.filter(), n, x)).abs() < 1e-12);
    }

    #[test]
    fn kernel_grid_matches_direct(n in 1usize..300, picks in prop::collection::vec(any::<prop::sample::Index>(), 8)) {
        let k = KernelConfig::new(n, common::bump()).unwrap();
        let g = k.grid();
        for p in picks {
            let j = p.index(g.grid_size());
            let v = g.values()[j];
            prop_assert!((v.re - k.eval(g.x(j))).abs() <= 1e-10);
            prop_assert!(v.im.abs() <= 1e-12);
        }
        let mags = g.magnitudes();
        let top = mags.iter().cloned().fold(0.0, f64::max);
        prop_assert!((top - 1.0).abs() < 1e-10);
        prop_assert!((mags[g.grid_size() / 2] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectrum_is_linear(n in 2usize..300, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let k = KernelConfig::new(n, common::bump()).unwrap();
        let op = SpectrumOperator::new(k);
        let s1 = complex_normal(2 * n - 1, &NoiseSpec::new(0.0, seed));
        let s2 = complex_normal(2 * n - 1, &NoiseSpec::trial(0.0, seed, 1));
        let mix: Vec<Complex64> = s1.iter().zip(&s2).map(|(x, y)| x * a + y * b).collect();
        let p1 = op.apply(&SampleSeries::moments(n, s1).unwrap()).unwrap();
        let p2 = op.apply(&SampleSeries::moments(n, s2).unwrap()).unwrap();
        let pm = op.apply(&SampleSeries::moments(n, mix).unwrap()).unwrap();
        for j in 0..pm.grid_size() {
            let expect = p1.values()[j] * a + p2.values()[j] * b;
            prop_assert!((pm.values()[j] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn shift_moves_peak(n in 16usize..256, f in -3.0f64..3.0, c in -3.0f64..3.0) {
        let k = KernelConfig::new(n, common::bump()).unwrap();
        let s = tone_series(n, f, Complex64::new(1.0, 0.0));
        let shifted: Vec<Complex64> = s
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, -((i as f64) - (n as f64 - 1.0)) * c))
            .collect();
        let p0 = spectrum(&s, &k).unwrap();
        let p1 = spectrum(&SampleSeries::moments(n, shifted).unwrap(), &k).unwrap();
        let argmax = |m: Vec<f64>| (0..m.len()).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
        let (x0, x1) = (p0.x(argmax(p0.magnitudes())), p1.x(argmax(p1.magnitudes())));
        let d = (x1 - x0 - c).rem_euclid(2.0 * PI);
        prop_assert!(d.min(2.0 * PI - d) <= 1.01 * p0.step());
    }

    #[test]
    fn noise_streams(seed in any::<u64>()) {
        let a = complex_normal(4096, &NoiseSpec::new(0.0, seed));
        prop_assert_eq!(&a, &complex_normal(4096, &NoiseSpec::new(0.0, seed)));
        let b = complex_normal(4096, &NoiseSpec::new(0.0, seed.wrapping_add(1)));
        let re = |v: &[Complex64]| v.iter().map(|z| z.re).collect::<Vec<_>>();
        let (x, y) = (re(&a), re(&b));
        let (mx, my) = (x.iter().sum::<f64>() / 4096.0, y.iter().sum::<f64>() / 4096.0);
        let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum();
        let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
        prop_assert!((cov / (vx * vy).sqrt()).abs() < 0.1);
    }

    #[test]
    fn real_dc_moments_are_symmetric(n in 1usize..200, amps in prop::collection::vec(0.1f64..5.0, 1..4)) {
        let comps = amps.iter().map(|&a| PointSource { amplitude: Complex64::new(a, 0.0), freq: vec![0.0] }).collect();
        let m = ExponentialModel::new(1, comps).unwrap();
        let s = sample_exponential(&m, &[1.0], &[0.0], n).unwrap();
        let v = s.values();
        for i in 0..v.len() {
            prop_assert_eq!(v[i], v[v.len() - 1 - i]);
        }
    }

    #[test]
    fn chirp_magnitude_on_support(amp in 0.2f64..3.0, t0 in 0.0f64..4e-5, d in 5e-6f64..4e-5) {
        let train = ChirpTrain::new(
            vec![ChirpComponent { amplitude: amp, omega: 1e9, bandwidth: 1e7, duration: d, t0, pri: 0.0, pulses: 1 }],
            1e-4,
        ).unwrap();
        let rate = 5e7;
        let s = sample_chirps(&train, rate, 1e-4).unwrap();
        for (k, v) in s.values().iter().enumerate() {
            let t = k as f64 / rate;
            if t > t0 + 1e-12 && t < t0 + d - 1e-12 {
                prop_assert!((v.norm() - amp).abs() < 1e-9);
            } else if t < t0 - 1e-12 || t > t0 + d + 1e-12 {
                prop_assert_eq!(v.norm(), 0.0);
            }
        }
    }

    #[test]
    fn basis_inversion(w in prop::collection::vec(-1.0f64..1.0, 3), d in prop::collection::vec(-5.0f64..5.0, 9)) {
        let basis = ProjectionBasis::new(d.chunks(3).map(|c| c.to_vec()).collect());
        prop_assume!(basis.is_ok());
        let basis = basis.unwrap();
        prop_assume!(basis.condition_number() < 1e4);
        let back = basis.solve(&basis.project(&w)).unwrap();
        for (a, b) in back.iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn sample_budget(n in 1usize..300) {
        let m2 = ExponentialModel::new(2, vec![PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![0.1, 0.2] }]).unwrap();
        let m3 = ExponentialModel::new(3, vec![PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![0.1, 0.2, 0.3] }]).unwrap();
        let total = |s: Vec<SampleSeries>| s.iter().map(|x| x.len()).sum::<usize>();
        prop_assert_eq!(total(sample_schedule(&m2, &ProjectionBasis::identity(2), n).unwrap()), 4 * n - 2);
        prop_assert_eq!(total(sample_schedule(&m3, &ProjectionBasis::identity(3), n).unwrap()), 6 * n - 3);
    }

    #[test]
    fn fit_ignores_weight_scale(scale in 1e-6f64..1e6, seed in any::<u64>()) {
        let noise = complex_normal(40, &NoiseSpec::new(0.0, seed));
        let pts: Vec<SsoPoint> = noise
            .iter()
            .enumerate()
            .map(|(k, z)| SsoPoint { t: k as f64 * 1e-6, lambda: 1e9 + 3e11 * k as f64 * 1e-6 + 1e6 * z.re, weight: 1.0 + z.im.abs(), snippet: k })
            .collect();
        let scaled: Vec<SsoPoint> = pts.iter().map(|p| SsoPoint { weight: p.weight * scale, ..*p }).collect();
        prop_assert_eq!(fit_segment(&pts), fit_segment(&scaled));
    }

    #[test]
    fn merge_is_idempotent(raw in prop::collection::vec((0.0f64..8e-5, 1e-6f64..3e-5, 1.0e9f64..1.1e9, -1e12f64..1e12), 1..12)) {
        let pieces: Vec<ChirpEstimate> = raw
            .iter()
            .map(|&(gamma, duration, omega, slope)| ChirpEstimate {
                omega,
                bandwidth: slope * duration / 2.0,
                duration,
                gamma,
                slope,
                rmse: 0.0,
                status: EstimateStatus::CrossoverRefined,
            })
            .collect();
        let once = merge_pieces(&pieces, 1e7, 0.25, 1e-4);
        prop_assert_eq!(merge_pieces(&once, 1e7, 0.25, 1e-4), once);
    }

    #[test]
    fn result_rows_are_consistent(trials in 1usize..4, snr in -10.0f64..30.0, seed in any::<u64>()) {
        let spec = ExperimentSpec { n: Some(256), trials, seed, snr_list: vec![snr], ..Default::default() };
        let out = run_experiment(&spec).unwrap();
        let row = &out.rows[0];
        prop_assert!(row.recovered <= row.total as f64);
        prop_assert!(row.rmse_std >= 0.0);
        let again = ResultRow::from_trials(&out.trials).unwrap();
        prop_assert_eq!(row, &again);
        let r: Vec<f64> = out.trials.iter().map(|t| t.rmse).filter(|v| v.is_finite()).collect();
        let (m, s) = mean_std(&r);
        prop_assert!((row.rmse - m).abs() <= 1e-15 * m.abs().max(1.0) || (row.rmse.is_nan() && m.is_nan()));
        prop_assert!((row.rmse_std - s).abs() <= 1e-15 * s.max(1.0) || (row.rmse_std.is_nan() && s.is_nan()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sso_pure_tone_matches_spectrum(f in 0.9e9f64..1.7e9, k in 0usize..40) {
        let rate = 0.5e9;
        let train = ChirpTrain::new(
            vec![ChirpComponent { amplitude: 1.0, omega: f, bandwidth: 0.0, duration: 1e-4, t0: 0.0, pri: 0.0, pulses: 1 }],
            1e-4,
        ).unwrap();
        let s = sample_chirps(&train, rate, 1e-4).unwrap();
        let plan = SnippetPlan::equidistant(1e-4, 2e-6, 40, rate).unwrap();
        let cfg = SsoConfig::new(1e7).unwrap();
        let kernel = KernelConfig::new(plan.n, cfg.filter.clone()).unwrap();
        let op = SsoOperator::new(plan, cfg).unwrap();
        prop_assert!(!op.zoomed());
        let (snip, _) = op.plan().snippet(&s, k).unwrap();
        let (sigma, x0) = op.spectrum(&snip).unwrap();
        let reference = spectrum(&snip, &kernel).unwrap();
        prop_assert_eq!(x0, -PI);
        prop_assert!(sigma.iter().zip(reference.values()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn higher_percentile_never_adds_points(p in 90.0f64..99.9, dp in 0.01f64..10.0, zoom in any::<bool>(), seed in 0u64..1000) {
        let train = specsep::datasets::chirp_example_1();
        let rate = if zoom { 25e9 } else { 0.5e9 };
        let s = add_noise(&sample_chirps(&train, rate, train.window).unwrap(), &NoiseSpec::new(0.0, seed)).unwrap();
        let plan = SnippetPlan::equidistant(train.window, 2e-6, if zoom { 6 } else { 30 }, rate).unwrap();
        let mut lo = SsoConfig::new(1e7).unwrap();
        lo.band = Some((0.8e9, 1.8e9));
        lo.percentile = p;
        let mut hi = lo.clone();
        hi.percentile = (p + dp).min(100.0);
        let a = build_diagram(&s, &plan, &lo).unwrap();
        let b = build_diagram(&s, &plan, &hi).unwrap();
        prop_assert!(b.points.len() <= a.points.len(), "{} > {}", b.points.len(), a.points.len());
    }
}
