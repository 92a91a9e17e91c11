//! `specsep` command-line front end.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use specsep::chirpsep::{evaluate, separate};
use specsep::datasets;
use specsep::experiments::{
    run_experiment, with_thread_cap, ChirpParams, Dataset, ExperimentSpec, MethodKind, Scenario,
};
use specsep::io;
use specsep::multirec::{assess, recover_nd, sample_schedule, MatchReport, MultiConfig, ProjectionBasis};
use specsep::plots::{self, Curve};
use specsep::synth::{
    add_noise, add_noise_joint, sample_chirps, sample_exponential, ChirpTrain, ExponentialModel, NoiseSpec,
    SampleSeries,
};
use specsep::unirec::{recover, RecoveryConfig, Threshold};
use specsep::{Error, KernelConfig, LowPassFilter};

#[derive(Parser)]
#[command(name = "specsep", version, about = "Localized-kernel spectral estimation and linear chirp separation")]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file (schema in docs/config.md)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base RNG seed; overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all output files
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset: ground truth JSON plus sample CSV files
    Synth(SynthArgs),
    /// Recover univariate point sources from moment samples
    #[command(name = "recover-1d")]
    Recover1d(Recover1dArgs),
    /// Recover multivariate point sources over SNR levels and trials
    #[command(name = "recover-nd")]
    RecoverNd(RecoverNdArgs),
    /// Separate linear chirps in an IQ recording
    #[command(name = "chirp-sep")]
    ChirpSep(ChirpSepArgs),
    /// Run a multi-trial experiment and emit result tables
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// uni1d, multi2d, multi3d or chirp
    #[arg(long, default_value = "uni1d")]
    scenario: String,
    /// Named dataset (three_tone, twelve_point, cloud_29, jet_100, example_1)
    #[arg(long)]
    dataset: Option<String>,
    /// Ground truth JSON instead of a named dataset
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Basis JSON for multivariate truth files
    #[arg(long, value_name = "FILE")]
    basis: Option<PathBuf>,
    /// Moments per line
    #[arg(long)]
    n: Option<usize>,
    /// Chirp sampling rate in Hz
    #[arg(long, default_value_t = 0.5e9)]
    rate: f64,
    /// SNR in dB; noiseless when omitted
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
}

#[derive(Args)]
struct Recover1dArgs {
    /// Moment samples CSV (index,re,im)
    #[arg(long, value_name = "FILE", conflicts_with = "truth")]
    input: Option<PathBuf>,
    /// Univariate ground truth JSON to sample instead of --input
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Moments when sampling --truth
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// SNR in dB when sampling --truth; noiseless when omitted
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
    /// Fixed threshold on |sigma_n|
    #[arg(long, conflicts_with = "percentile")]
    tau: Option<f64>,
    /// Percentile threshold (default 99)
    #[arg(long)]
    percentile: Option<f64>,
    /// Minimal separation in radians
    #[arg(long)]
    eta: Option<f64>,
    /// Keep at most this many peaks
    #[arg(long)]
    max_peaks: Option<usize>,
}

#[derive(Args)]
struct RecoverNdArgs {
    /// Multivariate ground truth JSON; defaults to the scenario dataset
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Basis JSON ({"deltas": [[..], ..]})
    #[arg(long, value_name = "FILE")]
    basis: Option<PathBuf>,
    /// Named dataset when no truth file is given (twelve_point, cloud_29, jet_100)
    #[arg(long)]
    dataset: Option<String>,
    /// Moments per line
    #[arg(long)]
    n: Option<usize>,
    /// SNR levels in dB, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, conflicts_with = "percentile")]
    tau: Option<f64>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Accuracy radius for the recovered count
    #[arg(long)]
    radius: Option<f64>,
}

#[derive(Args)]
struct ChirpSepArgs {
    /// IQ CSV (t,re,im); synthesizes chirp example 1 when omitted
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Sampling rate in Hz for the synthesized example
    #[arg(long)]
    rate: Option<f64>,
    /// SNR in dB for the synthesized example; noiseless when omitted
    #[arg(long, allow_negative_numbers = true)]
    snr: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// SNR levels in dB, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    /// Moments per line
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    dataset: Option<String>,
    /// Chirp sampling rate in Hz
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, conflicts_with = "percentile")]
    tau: Option<f64>,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Keep only the K strongest localized peaks
    #[arg(long)]
    top_k: bool,
}

/// Exit status classes.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Input files that cannot be read or parsed are configuration errors.
fn read_input(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn save(dir: &Path, name: &str, text: &str) -> Outcome<()> {
    io::save(dir, name, text).map_err(|e| Failure::Runtime(format!("writing {name}: {e}")))
}

fn noisy(series: &SampleSeries, snr: Option<f64>, seed: u64) -> Outcome<SampleSeries> {
    Ok(match snr {
        Some(s) => add_noise(series, &NoiseSpec::new(s, seed))?,
        None => series.clone(),
    })
}

fn load_basis(path: &Path) -> Outcome<ProjectionBasis> {
    let b: ProjectionBasis = load_json(path)?;
    Ok(ProjectionBasis::new(b.deltas().to_vec())?)
}

fn load_model(path: &Path) -> Outcome<ExponentialModel> {
    let m: ExponentialModel = load_json(path)?;
    Ok(m.validated()?)
}

fn synth(c: &Common, a: &SynthArgs) -> Outcome<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let seed = c.seed.unwrap_or(7);
    let spec = ExperimentSpec { scenario, dataset: a.dataset.clone(), n: a.n, ..Default::default() };
    let dataset = match (&a.truth, scenario) {
        (Some(p), Scenario::Chirp) => {
            let t: ChirpTrain = load_json(p)?;
            t.validate()?;
            Dataset::Chirps(t)
        }
        (Some(p), Scenario::Uni1d) => Dataset::Points { model: load_model(p)?, basis: None },
        (Some(p), _) => {
            let Some(b) = &a.basis else {
                return Err(Failure::Config("multivariate --truth needs --basis".into()));
            };
            Dataset::Points { model: load_model(p)?, basis: Some(load_basis(b)?) }
        }
        (None, _) => {
            spec.validate()?;
            spec.dataset()?
        }
    };
    let n = spec.size();
    match dataset {
        Dataset::Points { model, basis: None } => {
            let s = noisy(&sample_exponential(&model, &[1.0], &[0.0], n)?, a.snr, seed)?;
            save(&c.out_dir, "samples.csv", &io::write_samples_csv(&s)?)?;
            save(&c.out_dir, "truth.json", &to_json(&model))?;
        }
        Dataset::Points { model, basis: Some(basis) } => {
            let clean = sample_schedule(&model, &basis, n)?;
            let lines = match a.snr {
                Some(s) => add_noise_joint(&clean, &NoiseSpec::new(s, seed))?,
                None => clean,
            };
            for (d, s) in lines.iter().enumerate() {
                save(&c.out_dir, &format!("line{}.csv", d + 1), &io::write_samples_csv(s)?)?;
            }
            save(&c.out_dir, "truth.json", &to_json(&model))?;
            save(&c.out_dir, "basis.json", &to_json(&basis))?;
        }
        Dataset::Chirps(train) => {
            let s = noisy(&sample_chirps(&train, a.rate, train.window)?, a.snr, seed)?;
            save(&c.out_dir, "iq.csv", &io::write_iq_csv(&s)?)?;
            save(&c.out_dir, "truth.json", &to_json(&train))?;
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Settings of `recover-1d` in config files.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Recover1dConfig {
    tau: Option<f64>,
    percentile: Option<f64>,
    eta: Option<f64>,
    max_peaks: Option<usize>,
    refine: Option<bool>,
}

fn recover_1d(c: &Common, a: &Recover1dArgs) -> Outcome<()> {
    let file: Recover1dConfig = match &c.config {
        Some(p) => load_json(p)?,
        None => Recover1dConfig::default(),
    };
    let series = match (&a.input, &a.truth) {
        (Some(p), _) => io::read_samples_csv(read_input(p)?.as_bytes())?,
        (None, Some(p)) => {
            let m = load_model(p)?;
            if m.dim() != 1 {
                return Err(Failure::Config("recover-1d needs a univariate model".into()));
            }
            noisy(&sample_exponential(&m, &[1.0], &[0.0], a.n)?, a.snr, c.seed.unwrap_or(7))?
        }
        (None, None) => return Err(Failure::Config("recover-1d needs --input or --truth".into())),
    };
    let n = series.n().expect("moment series");
    let threshold = match (a.tau.or(file.tau), a.percentile.or(file.percentile)) {
        (Some(t), _) if a.percentile.is_none() => Threshold::Fixed(t),
        (_, Some(p)) => Threshold::Percentile(p),
        _ => Threshold::Percentile(99.0),
    };
    let eta = a.eta.or(file.eta).unwrap_or((12.0 * PI / n as f64).min(1.0));
    let kernel = KernelConfig::new(n, LowPassFilter::bump(4)?)?;
    let mut cfg = RecoveryConfig::new(kernel, threshold, eta);
    cfg.max_peaks = a.max_peaks.or(file.max_peaks);
    if let Some(r) = file.refine {
        cfg.refine = r;
    }
    let rec = recover(&series, &cfg)?;
    save(&c.out_dir, "peaks.csv", &io::peaks_csv(&rec.peaks.peaks)?)?;
    let marks: Vec<(f64, f64)> = rec.peaks.peaks.iter().map(|p| (p.lambda, p.amplitude)).collect();
    let svg = plots::spectrum_svg(&rec.spectrum.grid(), &rec.spectrum.magnitudes(), Some(rec.peaks.tau), &marks, "spectrum");
    save(&c.out_dir, "spectrum.svg", &svg)?;
    println!("{} peaks (tau = {})", rec.peaks.len(), io::sci(rec.peaks.tau));
    Ok(())
}

/// Settings of `recover-nd` in config files.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RecoverNdConfig {
    n: Option<usize>,
    snr_list: Option<Vec<f64>>,
    trials: Option<usize>,
    tau: Option<f64>,
    percentile: Option<f64>,
    eta: Option<f64>,
    radius: Option<f64>,
    max_pair_distance: Option<f64>,
    seed: Option<u64>,
}

fn recover_nd_cmd(c: &Common, a: &RecoverNdArgs) -> Outcome<()> {
    let file: RecoverNdConfig = match &c.config {
        Some(p) => load_json(p)?,
        None => RecoverNdConfig::default(),
    };
    let (model, basis, named) = match (&a.truth, &a.basis) {
        (Some(t), Some(b)) => (load_model(t)?, load_basis(b)?, None),
        (Some(_), None) | (None, Some(_)) => {
            return Err(Failure::Config("--truth and --basis must be given together".into()))
        }
        (None, None) => {
            let name = a.dataset.clone().unwrap_or_else(|| "twelve_point".into());
            let scenario = if name == "twelve_point" { Scenario::Multi2d } else { Scenario::Multi3d };
            let spec = ExperimentSpec { scenario, dataset: Some(name), ..Default::default() };
            spec.validate()?;
            match spec.dataset()? {
                Dataset::Points { model, basis: Some(b) } => (model, b, Some(spec)),
                _ => unreachable!("multivariate datasets carry a basis"),
            }
        }
    };
    if model.dim() != basis.q() || model.dim() < 2 {
        return Err(Failure::Config("model and basis must share a dimension >= 2".into()));
    }
    let n = a.n.or(file.n).or(named.as_ref().map(|s| s.size())).unwrap_or(1024);
    let snrs = if a.snr.is_empty() { file.snr_list.clone().unwrap_or_else(|| vec![10.0]) } else { a.snr.clone() };
    let trials = a.trials.or(file.trials).unwrap_or(16);
    if trials == 0 || snrs.is_empty() {
        return Err(Failure::Config("trials and snr list must be non-empty".into()));
    }
    let seed = c.seed.or(file.seed).unwrap_or(7);
    let threshold = match (a.tau.or(file.tau), a.percentile.or(file.percentile)) {
        (Some(t), _) if a.percentile.is_none() => Threshold::Fixed(t),
        (_, Some(p)) => Threshold::Percentile(p),
        _ => named.as_ref().map(|s| s.threshold()).unwrap_or(Threshold::Percentile(99.0)),
    };
    let eta = a.eta.or(file.eta).unwrap_or(12.0 * PI / n as f64);
    let radius = a.radius.or(file.radius).or(named.as_ref().map(|s| s.radius_value())).unwrap_or(0.05);
    let mut cfg = MultiConfig::new(RecoveryConfig::new(KernelConfig::new(n, LowPassFilter::bump(4)?)?, threshold, eta));
    if let Some(d) = file.max_pair_distance {
        cfg.max_pair_distance = d;
    }
    cfg.recovery.validate()?;
    let clean = sample_schedule(&model, &basis, n)?;
    let mut report = Vec::new();
    let mut first_points = None;
    for &snr in &snrs {
        let mut stats = Vec::with_capacity(trials);
        for t in 0..trials {
            let s = add_noise_joint(&clean, &NoiseSpec::trial(snr, seed, t as u64))?;
            let rec = with_thread_cap(|| recover_nd(&s, &basis, &cfg))??;
            let est: Vec<Vec<f64>> = rec.points.iter().map(|p| p.w_hat.clone()).collect();
            stats.push(assess(&model, &est, radius)?);
            if first_points.is_none() {
                first_points = Some(rec.points);
            }
        }
        let m = MatchReport::aggregate(radius, model.len(), stats);
        report.push(io::NdReport {
            snr_db: snr,
            samples: clean.iter().map(|s| s.len()).sum(),
            total: m.total,
            reconstructed: m.recovered,
            accuracy_radius: radius,
            rmse: m.rmse,
            std: m.rmse_std,
        });
    }
    save(&c.out_dir, "points.csv", &io::points_csv(&first_points.unwrap_or_default())?)?;
    save(&c.out_dir, "report.csv", &io::report_csv(&report)?)?;
    for r in &report {
        println!(
            "snr {} dB: {:.2}/{} within {} rmse {} std {}",
            r.snr_db,
            r.reconstructed,
            r.total,
            r.accuracy_radius,
            io::sci(r.rmse),
            io::sci(r.std)
        );
    }
    Ok(())
}

fn chirp_sep(c: &Common, a: &ChirpSepArgs) -> Outcome<()> {
    let mut params: ChirpParams = match &c.config {
        Some(p) => load_json(p)?,
        None => ChirpParams::default(),
    };
    let (series, truth) = match &a.input {
        Some(p) => {
            let s = io::read_iq_csv(read_input(p)?.as_bytes())?;
            params.rate = s.rate().expect("time series");
            (s, None)
        }
        None => {
            if let Some(r) = a.rate {
                params.rate = r;
            }
            let train = datasets::chirp_example_1();
            let s = noisy(&sample_chirps(&train, params.rate, train.window)?, a.snr, c.seed.unwrap_or(7))?;
            (s, Some(train))
        }
    };
    let cfg = params.to_config()?;
    let window = series.len() as f64 / params.rate;
    let sep = with_thread_cap(|| separate(&series, &cfg))??;
    save(&c.out_dir, "diagram.csv", &io::diagram_csv(&sep.diagram)?)?;
    save(&c.out_dir, "components.csv", &io::components_csv(&sep.estimates)?)?;
    save(&c.out_dir, "diagram.svg", &plots::diagram_svg(&sep.diagram, &sep.estimates, window))?;
    println!("{} diagram points, {} components", sep.diagram.points.len(), sep.estimates.len());
    if let Some(train) = truth {
        let plan = params.plan(train.window)?;
        let score = evaluate(&train, &sep.estimates, &plan, cfg.eta());
        println!("detected {}/{} relative IF rmse {}", score.detected, score.total, io::sci(score.rmse));
    }
    Ok(())
}

fn bench(c: &Common, a: &BenchArgs) -> Outcome<()> {
    let mut spec: ExperimentSpec = match &c.config {
        Some(p) => load_json(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = &a.scenario {
        spec.scenario = s.parse()?;
    }
    if let Some(m) = &a.method {
        spec.method = m.parse::<MethodKind>()?;
    }
    if !a.snr.is_empty() {
        spec.snr_list = a.snr.clone();
    }
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    spec.n = a.n.or(spec.n);
    spec.trials = a.trials.unwrap_or(spec.trials);
    spec.dataset = a.dataset.clone().or(spec.dataset);
    if let Some(r) = a.rate {
        spec.chirp.rate = r;
    }
    if a.tau.is_some() {
        spec.tau = a.tau;
        spec.percentile = None;
    }
    spec.percentile = a.percentile.or(spec.percentile);
    spec.eta = a.eta.or(spec.eta);
    spec.radius = a.radius.or(spec.radius);
    spec.top_k |= a.top_k;
    spec.validate()?;
    let out = run_experiment(&spec)?;
    let table = io::emit_table(&out.rows)?;
    save(&c.out_dir, "results.csv", &table.csv)?;
    save(&c.out_dir, "results.txt", &table.text)?;
    save(&c.out_dir, "trials.csv", &io::trials_csv(&out.trials)?)?;
    let curve = Curve {
        label: format!("{} {}", spec.method, spec.scenario),
        points: out.rows.iter().map(|r| (r.snr_db, r.rmse)).collect(),
    };
    save(&c.out_dir, "rmse.svg", &plots::curves_svg(&[curve], "RMSE vs SNR"))?;
    print!("{}", table.text);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = fs::create_dir_all(&cli.common.out_dir) {
        eprintln!("error: cannot create {}: {e}", cli.common.out_dir.display());
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(&cli.common, a),
        Command::Recover1d(a) => recover_1d(&cli.common, a),
        Command::RecoverNd(a) => recover_nd_cmd(&cli.common, a),
        Command::ChirpSep(a) => chirp_sep(&cli.common, a),
        Command::Bench(a) => bench(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
