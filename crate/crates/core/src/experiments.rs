//! Multi-trial experiments: datasets, per-trial runs and aggregation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{esprit, music, prony, BaselineEstimate, HankelSpec};
use crate::chirpsep::{evaluate, separate, SeparationConfig, SnippetPlan};
use crate::datasets;
use crate::error::{config, Error, Result};
use crate::filters::{KernelConfig, LowPassFilter};
use crate::multirec::{
    assess, greedy_match, mean_std, recover_nd, register_lines, sample_schedule, schedule, LinePeak, MultiConfig,
    ProjectionBasis, TrialMatch,
};
use crate::spectral::circular_distance;
use crate::synth::{
    add_noise, add_noise_joint, sample_chirps, sample_exponential, ChirpTrain, ExponentialModel, NoiseSpec,
    SampleSeries,
};
use crate::unirec::{recover_with, RecoveryConfig, SpectrumOperator, Threshold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Uni1d,
    Multi2d,
    Multi3d,
    Chirp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Localized,
    Prony,
    Music,
    Esprit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Uni1d => "uni1d",
            Scenario::Multi2d => "multi2d",
            Scenario::Multi3d => "multi3d",
            Scenario::Chirp => "chirp",
        }
    }
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Localized => "localized",
            MethodKind::Prony => "prony",
            MethodKind::Music => "music",
            MethodKind::Esprit => "esprit",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni1d" => Ok(Scenario::Uni1d),
            "multi2d" => Ok(Scenario::Multi2d),
            "multi3d" => Ok(Scenario::Multi3d),
            "chirp" => Ok(Scenario::Chirp),
            _ => config(format!("unknown scenario '{s}' (uni1d, multi2d, multi3d, chirp)")),
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "localized" => Ok(MethodKind::Localized),
            "prony" => Ok(MethodKind::Prony),
            "music" => Ok(MethodKind::Music),
            "esprit" => Ok(MethodKind::Esprit),
            _ => config(format!("unknown method '{s}' (localized, prony, music, esprit)")),
        }
    }
}

/// Chirp pipeline settings as they appear in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChirpParams {
    /// Sampling rate in Hz.
    pub rate: f64,
    /// Snippet half-width in seconds.
    pub delta: f64,
    /// Number of snippets `D`.
    #[serde(alias = "D")]
    pub snippets: usize,
    #[serde(alias = "D1")]
    pub d1: Option<usize>,
    #[serde(alias = "D2")]
    pub d2: Option<usize>,
    /// Refinement partitions `M`.
    #[serde(alias = "M")]
    pub partitions: usize,
    /// Minimal separation in rad/s.
    pub eta: f64,
    /// Receiver bandwidth in rad/s.
    #[serde(alias = "B_rec")]
    pub b_rec: f64,
    pub percentile: f64,
    /// Frequency band `[lo, hi]` in rad/s.
    pub band: Option<[f64; 2]>,
    pub rmse_limit: Option<f64>,
    pub merge_tolerance: f64,
}

impl Default for ChirpParams {
    fn default() -> Self {
        ChirpParams {
            rate: 0.5e9,
            delta: 2e-6,
            snippets: 2500,
            d1: None,
            d2: None,
            partitions: 8,
            eta: 1e7,
            b_rec: 1e9,
            percentile: 99.0,
            band: Some([0.8e9, 1.8e9]),
            rmse_limit: None,
            merge_tolerance: 0.25,
        }
    }
}

impl ChirpParams {
    pub fn to_config(&self) -> Result<SeparationConfig> {
        if !(self.rate > 0.0) {
            return config("chirp sampling rate must be positive");
        }
        let mut cfg = SeparationConfig::new(self.eta, self.b_rec)?;
        cfg.delta = self.delta;
        cfg.snippets = self.snippets;
        cfg.d1 = self.d1;
        cfg.d2 = self.d2;
        cfg.partitions = self.partitions;
        cfg.rmse_limit = self.rmse_limit;
        cfg.merge_tolerance = self.merge_tolerance;
        cfg.sso.percentile = self.percentile;
        cfg.sso.band = self.band.map(|b| (b[0], b[1]));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Snippet plan over a record of length `window`.
    pub fn plan(&self, window: f64) -> Result<SnippetPlan> {
        SnippetPlan::equidistant(window, self.delta, self.snippets, self.rate)
    }
}

/// One experiment: a method on a scenario over a list of SNRs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub method: MethodKind,
    pub snr_list: Vec<f64>,
    /// Moments per line; scenario default when absent.
    pub n: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    /// `three_tone`, `twelve_point`, `cloud_29`, `jet_100` or `example_1`.
    pub dataset: Option<String>,
    /// Fixed threshold of the localized method.
    pub tau: Option<f64>,
    /// Percentile threshold, used instead of `tau` when set.
    pub percentile: Option<f64>,
    pub eta: Option<f64>,
    /// Keep only the K strongest localized peaks (K = true count).
    pub top_k: bool,
    /// Accuracy radius for the recovered count.
    pub radius: Option<f64>,
    pub music_grid: usize,
    pub chirp: ChirpParams,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scenario: Scenario::Uni1d,
            method: MethodKind::Localized,
            snr_list: vec![-5.0],
            n: None,
            trials: 16,
            seed: 7,
            dataset: None,
            tau: None,
            percentile: None,
            eta: None,
            top_k: false,
            radius: None,
            music_grid: 1 << 16,
            chirp: ChirpParams::default(),
        }
    }
}

/// Ground truth of an experiment.
#[derive(Debug, Clone)]
pub enum Dataset {
    Points { model: ExponentialModel, basis: Option<ProjectionBasis> },
    Chirps(ChirpTrain),
}

impl Dataset {
    pub fn total(&self) -> usize {
        match self {
            Dataset::Points { model, .. } => model.len(),
            Dataset::Chirps(t) => t.pulses().len(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return config("trials must be >= 1");
        }
        if self.snr_list.is_empty() {
            return config("snr_list is empty");
        }
        if self.snr_list.iter().any(|s| s.is_nan()) {
            return config("snr values must be numbers");
        }
        if self.scenario == Scenario::Chirp && self.method != MethodKind::Localized {
            return config("the chirp scenario only supports the localized method");
        }
        if self.n == Some(0) {
            return config("n must be >= 1");
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return config("radius must be positive");
            }
        }
        if self.music_grid < 2 {
            return config("music_grid must be >= 2");
        }
        let name = self.dataset_name();
        let fits = match self.scenario {
            Scenario::Uni1d => name == "three_tone",
            Scenario::Multi2d => name == "twelve_point",
            Scenario::Multi3d => name == "cloud_29" || name == "jet_100",
            Scenario::Chirp => name == "example_1",
        };
        if !fits {
            return config(format!("dataset '{name}' does not belong to scenario {}", self.scenario));
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> &str {
        self.dataset.as_deref().unwrap_or(match self.scenario {
            Scenario::Uni1d => "three_tone",
            Scenario::Multi2d => "twelve_point",
            Scenario::Multi3d => "cloud_29",
            Scenario::Chirp => "example_1",
        })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Ok(match self.dataset_name() {
            "three_tone" => Dataset::Points { model: datasets::three_tone(), basis: None },
            "twelve_point" => Dataset::Points {
                model: datasets::twelve_point(),
                basis: Some(datasets::basis_2d().fit_to_box(datasets::TWELVE_POINT_BOUND, 0.95)?),
            },
            "cloud_29" => Dataset::Points {
                model: datasets::cloud_29(),
                basis: Some(datasets::basis_3d().fit_to_box(datasets::CLOUD_29_BOUND, 0.95)?),
            },
            "jet_100" => Dataset::Points {
                model: datasets::jet_100()?,
                basis: Some(datasets::basis_3d().fit_to_extent(&datasets::JET_EXTENT, 0.95)?),
            },
            "example_1" => Dataset::Chirps(datasets::chirp_example_1()),
            other => return config(format!("unknown dataset '{other}'")),
        })
    }

    /// Moments per line.
    pub fn size(&self) -> usize {
        self.n.unwrap_or(match (self.scenario, self.dataset_name()) {
            (Scenario::Uni1d, _) => 16384,
            (Scenario::Multi2d, _) => 1024,
            (Scenario::Multi3d, "jet_100") => 2731,
            (Scenario::Multi3d, _) => 417,
            (Scenario::Chirp, _) => 0,
        })
    }

    pub fn eta_value(&self) -> f64 {
        self.eta.unwrap_or(match self.scenario {
            Scenario::Uni1d => 0.004,
            Scenario::Chirp => self.chirp.eta,
            _ => 12.0 * PI / self.size() as f64,
        })
    }

    pub fn threshold(&self) -> Threshold {
        if let Some(p) = self.percentile {
            return Threshold::Percentile(p);
        }
        Threshold::Fixed(self.tau.unwrap_or(match self.scenario {
            Scenario::Uni1d => 2.5,
            Scenario::Multi2d => 35.0,
            _ => 0.5,
        }))
    }

    pub fn radius_value(&self) -> f64 {
        self.radius.unwrap_or(match (self.scenario, self.dataset_name()) {
            (Scenario::Uni1d, _) => 1e-3,
            (Scenario::Multi2d, _) => 0.05,
            (Scenario::Multi3d, "jet_100") => 0.3,
            (Scenario::Multi3d, _) => 0.03,
            (Scenario::Chirp, _) => self.chirp.eta,
        })
    }

    /// Localized recovery settings for this experiment's size.
    pub fn recovery_config(&self, k: usize) -> Result<RecoveryConfig> {
        let kernel = KernelConfig::new(self.size(), LowPassFilter::bump(4)?)?;
        let mut cfg = RecoveryConfig::new(kernel, self.threshold(), self.eta_value());
        if self.top_k {
            cfg.max_peaks = Some(k);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-trial outcome, with the seed and stream that reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub method: MethodKind,
    pub snr_db: f64,
    pub size: f64,
    pub trial: usize,
    pub seed: u64,
    pub stream: u64,
    pub total: usize,
    pub recovered: usize,
    pub rmse: f64,
    pub runtime_s: f64,
}

/// Aggregate over the trials of one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    pub method: MethodKind,
    pub snr_db: f64,
    /// Moments per line, or the sampling rate in GHz for chirps.
    pub size: f64,
    pub total: usize,
    /// Mean recovered count over trials.
    pub recovered: f64,
    /// Mean per-trial runtime of the method (seconds).
    pub runtime_s: f64,
    /// Mean over trials with a finite RMSE.
    pub rmse: f64,
    pub rmse_std: f64,
}

impl ResultRow {
    pub fn from_trials(trials: &[TrialRecord]) -> Result<Self> {
        let Some(first) = trials.first() else {
            return config("cannot aggregate zero trials");
        };
        let k = trials.len() as f64;
        let r: Vec<f64> = trials.iter().map(|t| t.rmse).filter(|v| v.is_finite()).collect();
        let (rmse, rmse_std) = mean_std(&r);
        Ok(ResultRow {
            scenario: first.scenario,
            method: first.method,
            snr_db: first.snr_db,
            size: first.size,
            total: first.total,
            recovered: trials.iter().map(|t| t.recovered as f64).sum::<f64>() / k,
            runtime_s: trials.iter().map(|t| t.runtime_s).sum::<f64>() / k,
            rmse,
            rmse_std,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Ordered by SNR position, then trial index.
    pub trials: Vec<TrialRecord>,
}

/// Matches 1D estimates one-to-one within `radius` (circular distance) for
/// the count; the RMSE uses each truth's nearest estimate (`pi` when there
/// is none).
pub fn assess_1d(truth: &[f64], estimates: &[f64], radius: f64) -> TrialMatch {
    let dist: Vec<Vec<f64>> =
        truth.iter().map(|t| estimates.iter().map(|e| circular_distance(*t, *e)).collect()).collect();
    let recovered = greedy_match(&dist, radius).len();
    if truth.is_empty() {
        return TrialMatch { recovered, rmse: f64::NAN };
    }
    let sq: f64 = dist.iter().map(|row| row.iter().cloned().fold(PI, f64::min).powi(2)).sum();
    TrialMatch { recovered, rmse: (sq / truth.len() as f64).sqrt() }
}

/// Runs `f` on a pool capped by `SPECSEP_THREADS` when set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var("SPECSEP_THREADS").ok() {
        Some(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&t| t >= 1)
                .ok_or_else(|| Error::Config(format!("SPECSEP_THREADS must be a positive integer, got '{v}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

enum Prepared {
    Uni { clean: SampleSeries, truth: Vec<f64>, op: Option<SpectrumOperator>, cfg: Option<RecoveryConfig> },
    Multi { clean: Vec<SampleSeries>, model: ExponentialModel, basis: ProjectionBasis, cfg: Option<MultiConfig> },
    Chirp { clean: SampleSeries, train: ChirpTrain, cfg: SeparationConfig, plan: SnippetPlan },
}

fn baseline(method: MethodKind, s: &SampleSeries, k: usize, grid: usize) -> Result<BaselineEstimate> {
    let spec = HankelSpec::default_for(s.len(), k);
    match method {
        MethodKind::Prony => prony(s, k),
        MethodKind::Music => music(s, &spec, k, grid),
        MethodKind::Esprit => esprit(s, &spec, Some(k)),
        MethodKind::Localized => unreachable!("localized is not a baseline"),
    }
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    let n = spec.size();
    Ok(match spec.dataset()? {
        Dataset::Points { model, basis: None } => {
            let clean = sample_exponential(&model, &[1.0], &[0.0], n)?;
            let truth = model.components().iter().map(|c| c.freq[0]).collect();
            let (op, cfg) = if spec.method == MethodKind::Localized {
                let cfg = spec.recovery_config(model.len())?;
                (Some(SpectrumOperator::new(cfg.kernel.clone())), Some(cfg))
            } else {
                (None, None)
            };
            Prepared::Uni { clean, truth, op, cfg }
        }
        Dataset::Points { model, basis: Some(basis) } => {
            let clean = sample_schedule(&model, &basis, n)?;
            let cfg = if spec.method == MethodKind::Localized {
                Some(MultiConfig::new(spec.recovery_config(model.len())?))
            } else {
                None
            };
            Prepared::Multi { clean, model, basis, cfg }
        }
        Dataset::Chirps(train) => {
            let cfg = spec.chirp.to_config()?;
            let clean = sample_chirps(&train, spec.chirp.rate, train.window)?;
            let plan = spec.chirp.plan(train.window)?;
            Prepared::Chirp { clean, train, cfg, plan }
        }
    })
}

fn run_trial(spec: &ExperimentSpec, prep: &Prepared, snr: f64, trial: usize) -> Result<TrialRecord> {
    let noise = NoiseSpec::trial(snr, spec.seed, trial as u64);
    let radius = spec.radius_value();
    let (total, m, runtime, size) = match prep {
        Prepared::Uni { clean, truth, op, cfg } => {
            let s = add_noise(clean, &noise)?;
            let t0 = Instant::now();
            let est = match (op, cfg) {
                (Some(op), Some(cfg)) => recover_with(op, &s, cfg)?.peaks.lambdas(),
                _ => baseline(spec.method, &s, truth.len(), spec.music_grid)?.frequencies,
            };
            let rt = t0.elapsed().as_secs_f64();
            (truth.len(), assess_1d(truth, &est, radius), rt, spec.size() as f64)
        }
        Prepared::Multi { clean, model, basis, cfg } => {
            let s = add_noise_joint(clean, &noise)?;
            let t0 = Instant::now();
            let rec = match cfg {
                Some(cfg) => recover_nd(&s, basis, cfg)?,
                None => {
                    let peaks = s
                        .iter()
                        .map(|line| {
                            let b = baseline(spec.method, line, model.len(), spec.music_grid)?;
                            Ok(b.frequencies.iter().zip(&b.amplitudes).map(|(&f, &a)| LinePeak::from_estimate(f, a)).collect())
                        })
                        .collect::<Result<Vec<_>>>()?;
                    debug_assert_eq!(peaks.len(), schedule(basis.q()).len());
                    register_lines(peaks, basis, 1.0)?
                }
            };
            let rt = t0.elapsed().as_secs_f64();
            let est: Vec<Vec<f64>> = rec.points.iter().map(|p| p.w_hat.clone()).collect();
            (model.len(), assess(model, &est, radius)?, rt, spec.size() as f64)
        }
        Prepared::Chirp { clean, train, cfg, plan } => {
            let s = add_noise(clean, &noise)?;
            let t0 = Instant::now();
            let sep = separate(&s, cfg)?;
            let rt = t0.elapsed().as_secs_f64();
            let score = evaluate(train, &sep.estimates, plan, cfg.eta());
            (score.total, TrialMatch { recovered: score.detected, rmse: score.rmse }, rt, spec.chirp.rate / 1e9)
        }
    };
    Ok(TrialRecord {
        scenario: spec.scenario,
        method: spec.method,
        snr_db: snr,
        size,
        trial,
        seed: spec.seed,
        stream: trial as u64,
        total,
        recovered: m.recovered,
        rmse: m.rmse,
        runtime_s: runtime,
    })
}

/// Runs every SNR of an experiment; trials run in parallel and are collected in
/// index order, so the output does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let prep = prepare(spec)?;
    let mut out = ExperimentOutput::default();
    for &snr in &spec.snr_list {
        let trials: Vec<TrialRecord> = with_thread_cap(|| {
            (0..spec.trials).into_par_iter().map(|t| run_trial(spec, &prep, snr, t)).collect::<Result<Vec<_>>>()
        })??;
        out.rows.push(ResultRow::from_trials(&trials)?);
        out.trials.extend(trials);
    }
    Ok(out)
}
