use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use specsep::baselines::{esprit, HankelSpec};
use specsep::chirpsep::{build_diagram, dbscan, SnippetPlan, SsoConfig};
use specsep::datasets::{chirp_example_1, three_tone};
use specsep::synth::{add_noise, sample_chirps, sample_exponential, NoiseSpec};
use specsep::unirec::{recover, spectrum, RecoveryConfig, Threshold};
use specsep::{KernelConfig, LowPassFilter};

fn uni(c: &mut Criterion) {
    let clean = sample_exponential(&three_tone(), &[1.0], &[0.0], 1024).unwrap();
    let s = add_noise(&clean, &NoiseSpec::new(0.0, 7)).unwrap();
    let kernel = KernelConfig::new(1024, LowPassFilter::bump(4).unwrap()).unwrap();
    c.bench_function("spectrum n=1024", |b| b.iter(|| spectrum(black_box(&s), &kernel).unwrap()));
    let cfg = RecoveryConfig::new(kernel.clone(), Threshold::Percentile(99.0), 12.0 * std::f64::consts::PI / 1024.0);
    c.bench_function("recover n=1024", |b| b.iter(|| recover(black_box(&s), &cfg).unwrap()));
    let spec = HankelSpec::default_for(s.len(), 3);
    c.bench_function("esprit n=1024", |b| b.iter(|| esprit(black_box(&s), &spec, Some(3)).unwrap()));
}

fn chirp(c: &mut Criterion) {
    let train = chirp_example_1();
    let s = sample_chirps(&train, 0.5e9, train.window).unwrap();
    let plan = SnippetPlan::equidistant(train.window, 2e-6, 100, 0.5e9).unwrap();
    let mut cfg = SsoConfig::new(1e7).unwrap();
    cfg.band = Some((0.8e9, 1.8e9));
    let mut g = c.benchmark_group("chirp");
    g.sample_size(10);
    g.bench_function("sso diagram 100 snippets", |b| b.iter(|| build_diagram(black_box(&s), &plan, &cfg).unwrap()));
    let d = build_diagram(&s, &plan, &cfg).unwrap();
    let pts: Vec<[f64; 2]> = d.points.iter().map(|p| [p.t / train.window, p.lambda / 1e9]).collect();
    g.bench_function("dbscan", |b| b.iter(|| dbscan(black_box(&pts), 0.05, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, uni, chirp);
criterion_main!(benches);
