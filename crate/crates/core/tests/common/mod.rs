//! Deterministic property checks shared by the property tests and the
//! acceptance runner. Each returns a one-line summary or the first violation.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specsep::chirpsep::{build_diagram, dbscan, dbscan_reference, SnippetPlan, SsoConfig};
use specsep::experiments::{run_experiment, ExperimentSpec, MethodKind, Scenario};
use specsep::io::trials_csv;
use specsep::synth::{add_noise, measured_snr_db, sample_chirps, sample_exponential, ExponentialModel, NoiseSpec, PointSource};
use specsep::unirec::SpectrumOperator;
use specsep::{Complex64, KernelConfig, LowPassFilter};

pub type Check = Result<String, String>;

pub fn bump() -> LowPassFilter {
    LowPassFilter::bump(4).unwrap()
}

/// `hbar sum_{|l|<n} H(|l|/n) cos(l x)` summed directly from the filter.
pub fn phi_direct(h: &LowPassFilter, n: usize, x: f64) -> f64 {
    let weights: Vec<f64> = (0..n).map(|l| h.eval(l as f64 / n as f64)).collect();
    let total: f64 = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
    let s: f64 = weights[1..].iter().enumerate().map(|(i, w)| w * ((i + 1) as f64 * x).cos()).sum();
    (weights[0] + 2.0 * s) / total
}

/// `|Phi_n(x)| <= L (n |x|)^{-S}` for n in {64, 128, 256} and 50
/// log-spaced x in `[4/n, pi]`.
pub fn kernel_localization() -> Check {
    let h = bump();
    let l = h.localization_constant();
    let s = h.order() as i32;
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for n in [64usize, 128, 256] {
        let (a, b) = ((4.0 / n as f64).ln(), PI.ln());
        for k in 0..50 {
            let x = (a + (b - a) * k as f64 / 49.0).exp();
            let v = phi_direct(&h, n, x).abs();
            let bound = l * (n as f64 * x).powi(-s);
            if v > bound {
                return Err(format!("n = {n}, x = {x:.4e}: |Phi| = {v:.3e} > bound {bound:.3e}"));
            }
            worst = worst.max(v / bound);
            pairs += 1;
        }
    }
    Ok(format!("{pairs} pairs, max |Phi|/bound = {worst:.2e}"))
}

/// `n hbar_n` in `[4/(5 ||H||_1), 4/(3 ||H||_1)]` for every n meeting the
/// degree condition up to 2048.
pub fn hbar_bounds() -> Check {
    let h = bump();
    let (lo, hi) = (0.8 / h.h_l1(), 4.0 / 3.0 / h.h_l1());
    let mut tested = 0;
    for n in 1..=2048usize {
        let k = KernelConfig::new(n, h.clone()).unwrap();
        if !k.satisfies_degree_condition() {
            continue;
        }
        let v = n as f64 * k.hbar();
        if !(lo..=hi).contains(&v) {
            return Err(format!("n = {n}: n hbar = {v} outside [{lo}, {hi}]"));
        }
        tested += 1;
    }
    if tested == 0 {
        return Err("no degree satisfied the condition".into());
    }
    Ok(format!("{tested} degrees within [{lo:.4}, {hi:.4}]"))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `|sum_{k=-n}^{n} H(k/n)^p - n int H^p| <= (3p/12) ||H''||_1 / n` for
/// p in {1, 2} and n from 16 to 1024.
pub fn euler_maclaurin() -> Check {
    let h = bump();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for p in [1i32, 2] {
        let integral = simpson(|t| h.eval(t).powi(p), -1.0, 1.0, 1 << 18);
        for n in (16..=1024usize).step_by(7) {
            let sum: f64 = (-(n as i64)..=n as i64).map(|k| h.eval(k as f64 / n as f64).powi(p)).sum();
            let err = (sum - n as f64 * integral).abs();
            let bound = 3.0 * p as f64 / 12.0 * h.h2_l1() / n as f64;
            if err > bound {
                return Err(format!("p = {p}, n = {n}: error {err:.3e} > {bound:.3e}"));
            }
            worst = worst.max(err / bound);
            cases += 1;
        }
    }
    Ok(format!("{cases} cases, max error/bound = {worst:.2e}"))
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> specsep::synth::SampleSeries {
    let v: Vec<Complex64> =
        (0..2 * n - 1).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    specsep::synth::SampleSeries::moments(n, v).unwrap()
}

/// FFT grid values of `sigma_n` against direct summation at 16 random grid
/// points, for 20 random degrees.
pub fn fft_vs_direct(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = bump();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..1500usize);
        let k = KernelConfig::new(n, h.clone()).unwrap();
        let s = random_series(&mut rng, n);
        let ps = SpectrumOperator::new(k.clone()).apply(&s).unwrap();
        let w: Vec<f64> = (0..n).map(|l| h.eval(l as f64 / n as f64)).collect();
        let hbar = 1.0 / (w[0] + 2.0 * w[1..].iter().sum::<f64>());
        for _ in 0..16 {
            let j = rng.random_range(0..ps.grid_size());
            let x = ps.x(j);
            let mut direct = Complex64::new(0.0, 0.0);
            for (i, c) in s.values().iter().enumerate() {
                let l = i as i64 - (n as i64 - 1);
                direct += c * w[l.unsigned_abs() as usize] * Complex64::from_polar(1.0, l as f64 * x);
            }
            let d = (ps.values()[j] - direct * hbar).norm();
            worst = worst.max(d);
            if d > 1e-10 {
                return Err(format!("n = {n}, j = {j}: |fft - direct| = {d:.3e}"));
            }
        }
    }
    Ok(format!("320 points, max abs difference {worst:.2e}"))
}

/// Maximal runs of `mags >= tau` on the circular grid, as (start, len).
fn level_runs(mags: &[f64], tau: f64) -> Vec<(usize, usize)> {
    let n = mags.len();
    let inside: Vec<bool> = mags.iter().map(|&m| m >= tau).collect();
    let Some(start) = (0..n).find(|&j| !inside[j]) else {
        return vec![(0, n)];
    };
    let mut runs = Vec::new();
    let mut j = 0;
    while j < n {
        let idx = (start + j) % n;
        if inside[idx] {
            let mut len = 0;
            while j < n && inside[(start + j) % n] {
                len += 1;
                j += 1;
            }
            runs.push((idx, len));
        } else {
            j += 1;
        }
    }
    runs
}

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Cluster conditions on a noiseless instance with `n >= 4C/eta` and the
/// level `m/2`: exactly K runs, each of diameter at most `2C/n`, pairwise
/// at least `eta/2` apart, each containing `|x - lambda| <= 1/(4n)`.
pub fn cluster_conditions(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = bump();
    let l = h.localization_constant();
    let s = h.order() as f64;
    let mut max_n = 0;
    for inst in 0..instances {
        let k = rng.random_range(1..=5usize);
        let eta = rng.random_range(0.3..0.8);
        // frequencies at least eta apart on the circle
        let mut lambdas: Vec<f64> = Vec::new();
        while lambdas.len() < k {
            let c = rng.random_range(-PI..PI);
            if lambdas.iter().all(|&x| circ(x, c) >= eta) {
                lambdas.push(c);
            }
        }
        let comps: Vec<PointSource> = lambdas
            .iter()
            .map(|&f| PointSource {
                amplitude: Complex64::from_polar(rng.random_range(1.0..3.0), rng.random_range(-PI..PI)),
                freq: vec![f],
            })
            .collect();
        let model = ExponentialModel::new(1, comps).unwrap();
        let amps: Vec<f64> = model.components().iter().map(|c| c.amplitude.norm()).collect();
        let big_m: f64 = amps.iter().sum();
        let small_m = amps.iter().cloned().fold(f64::INFINITY, f64::min);
        let c = (16.0 * big_m * l / small_m).powf(1.0 / s).max(1.0);
        let n = (4.0 * c / eta).ceil() as usize;
        max_n = max_n.max(n);
        let series = sample_exponential(&model, &[1.0], &[0.0], n).unwrap();
        let kernel = KernelConfig::new(n, h.clone()).unwrap();
        let ps = SpectrumOperator::new(kernel).apply(&series).unwrap();
        let mags = ps.magnitudes();
        let g = mags.len();
        let step = 2.0 * PI / g as f64;
        let runs = level_runs(&mags, small_m / 2.0);
        let fail = |what: String| Err(format!("instance {inst} (K = {k}, n = {n}): {what}"));
        if runs.len() != k {
            return fail(format!("{} clusters instead of {k}", runs.len()));
        }
        for &(_, len) in &runs {
            if (len - 1) as f64 * step > 2.0 * c / n as f64 {
                return fail(format!("diameter {:.3e} > 2C/n", (len - 1) as f64 * step));
            }
        }
        for a in 0..runs.len() {
            for b in a + 1..runs.len() {
                let (sa, la) = runs[a];
                let (sb, lb) = runs[b];
                let mut d = f64::INFINITY;
                for i in [sa, sa + la - 1] {
                    for j in [sb, sb + lb - 1] {
                        d = d.min(circ(ps.x(i % g), ps.x(j % g)));
                    }
                }
                if d < eta / 2.0 {
                    return fail(format!("clusters {a} and {b} only {d:.3e} apart"));
                }
            }
        }
        for &lam in &lambdas {
            let r = 1.0 / (4.0 * n as f64);
            let owner: Vec<usize> = (0..g)
                .filter(|&j| circ(ps.x(j), lam) <= r)
                .map(|j| runs.iter().position(|&(st, len)| (j + g - st) % g < len).unwrap_or(usize::MAX))
                .collect();
            if owner.is_empty() || owner.iter().any(|&o| o != owner[0] || o == usize::MAX) {
                return fail(format!("interval around {lam:.4} not inside one cluster"));
            }
        }
    }
    Ok(format!("{instances} instances, n up to {max_n}"))
}

fn canonical(labels: &[i32]) -> Vec<i32> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                l
            } else {
                let next = map.len() as i32;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Random blob clouds of up to 500 points; grid DBSCAN labels equal the
/// brute-force reference up to renaming.
pub fn dbscan_equivalence(seeds: u64) -> Check {
    let mut total = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.random_range(1..=500usize);
        let blobs: Vec<[f64; 2]> = (0..rng.random_range(1..6)).map(|_| [rng.random(), rng.random()]).collect();
        let pts: Vec<[f64; 2]> = (0..count)
            .map(|_| {
                if rng.random_bool(0.2) {
                    [rng.random(), rng.random()]
                } else {
                    let b = blobs[rng.random_range(0..blobs.len())];
                    [b[0] + rng.random_range(-0.05..0.05), b[1] + rng.random_range(-0.05..0.05)]
                }
            })
            .collect();
        let radius = rng.random_range(0.005..0.08);
        let min = rng.random_range(1..8usize);
        let fast = dbscan(&pts, radius, min).map_err(|e| e.to_string())?;
        let slow = dbscan_reference(&pts, radius, min);
        if canonical(&fast) != canonical(&slow) {
            return Err(format!("seed {seed}: labels differ ({count} points, radius {radius:.3}, min {min})"));
        }
        total += count;
    }
    Ok(format!("{seeds} seeds, {total} points"))
}

/// Requested vs measured SNR for random signals, lengths and levels.
pub fn snr_roundtrip(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let n = rng.random_range(1..3000usize);
        let s = random_series(&mut rng, n);
        let snr = rng.random_range(-40.0..120.0);
        let noisy = add_noise(&s, &NoiseSpec::new(snr, rng.random())).map_err(|e| e.to_string())?;
        let got = measured_snr_db(s.values(), noisy.values());
        let d = (got - snr).abs();
        worst = worst.max(d);
        if d > 1e-9 {
            return Err(format!("case {case}: requested {snr} dB, measured {got} dB"));
        }
    }
    Ok(format!("{cases} cases, max deviation {worst:.2e} dB"))
}

/// Per-trial CSV with the wall-clock column blanked.
pub fn untimed_trials(spec: &ExperimentSpec) -> Result<String, String> {
    let mut out = run_experiment(spec).map_err(|e| e.to_string())?;
    for t in &mut out.trials {
        t.runtime_s = 0.0;
    }
    trials_csv(&out.trials).map_err(|e| e.to_string())
}

/// Two runs of the same experiments and of a chirp diagram produce the same
/// bytes, apart from measured runtimes.
pub fn deterministic_reruns() -> Check {
    let specs = [
        ExperimentSpec { n: Some(1024), trials: 4, snr_list: vec![-5.0, 10.0], ..Default::default() },
        ExperimentSpec {
            scenario: Scenario::Uni1d,
            method: MethodKind::Esprit,
            n: Some(256),
            trials: 3,
            snr_list: vec![0.0],
            ..Default::default()
        },
        ExperimentSpec { scenario: Scenario::Multi2d, n: Some(256), trials: 3, snr_list: vec![5.0], ..Default::default() },
    ];
    let mut bytes = 0;
    for spec in &specs {
        let a = untimed_trials(spec)?;
        let b = untimed_trials(spec)?;
        if a != b {
            return Err(format!("{} / {} reruns differ", spec.scenario, spec.method));
        }
        bytes += a.len();
    }
    let train = specsep::datasets::chirp_example_1();
    let clean = sample_chirps(&train, 0.5e9, train.window).map_err(|e| e.to_string())?;
    let series = add_noise(&clean, &NoiseSpec::trial(-10.0, 3, 1)).map_err(|e| e.to_string())?;
    let plan = SnippetPlan::equidistant(train.window, 2e-6, 200, 0.5e9).map_err(|e| e.to_string())?;
    let mut cfg = SsoConfig::new(1e7).map_err(|e| e.to_string())?;
    cfg.band = Some((0.8e9, 1.8e9));
    let d1 = build_diagram(&series, &plan, &cfg).map_err(|e| e.to_string())?;
    let d2 = build_diagram(&series, &plan, &cfg).map_err(|e| e.to_string())?;
    let c1 = specsep::io::diagram_csv(&d1).map_err(|e| e.to_string())?;
    let c2 = specsep::io::diagram_csv(&d2).map_err(|e| e.to_string())?;
    if c1 != c2 {
        return Err("chirp diagram reruns differ".into());
    }
    bytes += c1.len();
    Ok(format!("{} experiments and one diagram identical ({bytes} bytes)", specs.len()))
}
