//! Ground-truth signal models, samplers and exact-SNR noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::spectral::wrap_angle;

/// One point source `a e^{-i <x, w>}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawSource", into = "RawSource")]
pub struct PointSource {
    pub amplitude: Complex64,
    pub freq: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSource {
    amplitude_re: f64,
    #[serde(default)]
    amplitude_im: f64,
    freq: Vec<f64>,
}

impl From<RawSource> for PointSource {
    fn from(r: RawSource) -> Self {
        PointSource { amplitude: Complex64::new(r.amplitude_re, r.amplitude_im), freq: r.freq }
    }
}

impl From<PointSource> for RawSource {
    fn from(p: PointSource) -> Self {
        RawSource { amplitude_re: p.amplitude.re, amplitude_im: p.amplitude.im, freq: p.freq }
    }
}

/// Exponential sum `f(x) = sum_k a_k e^{-i <x, w_k>}` in `q` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialModel {
    dim: usize,
    components: Vec<PointSource>,
}

impl ExponentialModel {
    /// Validates the components. Univariate frequencies are reduced into
    /// `(-pi, pi]`; multivariate points are kept as given.
    pub fn new(dim: usize, components: Vec<PointSource>) -> Result<Self> {
        if dim == 0 {
            return config("model dimension must be >= 1");
        }
        if components.is_empty() {
            return config("model needs at least one component");
        }
        let mut components = components;
        for (k, c) in components.iter_mut().enumerate() {
            if c.freq.len() != dim {
                return Err(Error::Dimension(format!(
                    "component {k} has {} coordinates, model dimension is {dim}",
                    c.freq.len()
                )));
            }
            if !(c.amplitude.norm() > 0.0) || !c.amplitude.is_finite() {
                return config(format!("component {k} has a zero or non-finite amplitude"));
            }
            for w in c.freq.iter_mut() {
                if !w.is_finite() {
                    return config(format!("component {k} has a non-finite frequency"));
                }
                if dim == 1 {
                    *w = wrap_angle(*w);
                }
            }
        }
        Ok(ExponentialModel { dim, components })
    }

    /// One-dimensional model from `(amplitude, frequency)` pairs.
    pub fn univariate(parts: &[(Complex64, f64)]) -> Result<Self> {
        Self::new(1, parts.iter().map(|&(a, w)| PointSource { amplitude: a, freq: vec![w] }).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[PointSource] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Re-checks invariants after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.dim, self.components)
    }
}

/// How the samples of a series are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeriesIndex {
    /// Moments `mu(l)` for `|l| < n`, stored from `l = -(n-1)`.
    Moments { n: usize },
    /// Time samples `F(l / rate)` for `l = 0..len`.
    Time { rate: f64 },
}

/// Complex observations plus the norm of their noiseless part.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    values: Vec<Complex64>,
    index: SeriesIndex,
    clean_norm: f64,
    snr_db: Option<f64>,
}

impl SampleSeries {
    /// Moment series of length `2n - 1`, taken as noiseless.
    pub fn moments(n: usize, values: Vec<Complex64>) -> Result<Self> {
        if n == 0 || values.len() != 2 * n - 1 {
            return Err(Error::Dimension(format!(
                "moment series for n = {n} needs {} values, got {}",
                (2 * n).saturating_sub(1),
                values.len()
            )));
        }
        Self::checked(values, SeriesIndex::Moments { n })
    }

    /// Uniformly sampled time series, taken as noiseless.
    pub fn time(rate: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(rate > 0.0) {
            return config("sampling rate must be positive");
        }
        Self::checked(values, SeriesIndex::Time { rate })
    }

    fn checked(values: Vec<Complex64>, index: SeriesIndex) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return config("series contains non-finite values");
        }
        let clean_norm = norm(&values);
        Ok(SampleSeries { values, index, clean_norm, snr_db: None })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self) -> SeriesIndex {
        self.index
    }

    /// Degree `n` of a moment series.
    pub fn n(&self) -> Option<usize> {
        match self.index {
            SeriesIndex::Moments { n } => Some(n),
            SeriesIndex::Time { .. } => None,
        }
    }

    /// Sampling rate of a time series.
    pub fn rate(&self) -> Option<f64> {
        match self.index {
            SeriesIndex::Time { rate } => Some(rate),
            SeriesIndex::Moments { .. } => None,
        }
    }

    /// Moment `mu(l)`, `|l| < n`.
    pub fn moment(&self, l: i64) -> Complex64 {
        let n = self.n().expect("not a moment series") as i64;
        assert!(l.abs() < n, "moment index out of range");
        self.values[(l + n - 1) as usize]
    }

    /// `||f||_2` of the noiseless signal.
    pub fn clean_norm(&self) -> f64 {
        self.clean_norm
    }

    /// Requested SNR if noise was added.
    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Samples the model along a line: `values[l] = sum_k a_k e^{-i <offset, w_k>}
/// e^{-i l <direction, w_k>}` for `|l| < n`.
pub fn sample_exponential(
    model: &ExponentialModel,
    direction: &[f64],
    offset: &[f64],
    n: usize,
) -> Result<SampleSeries> {
    let q = model.dim();
    if direction.len() != q || offset.len() != q {
        return Err(Error::Dimension(format!(
            "direction/offset lengths {}/{} do not match model dimension {q}",
            direction.len(),
            offset.len()
        )));
    }
    if n == 0 {
        return config("n must be >= 1");
    }
    let mut values = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for c in model.components() {
        let p = dot(direction, &c.freq);
        let base = c.amplitude * Complex64::from_polar(1.0, -dot(offset, &c.freq));
        for (i, v) in values.iter_mut().enumerate() {
            let l = i as f64 - (n as f64 - 1.0);
            *v += base * Complex64::from_polar(1.0, -l * p);
        }
    }
    SampleSeries::moments(n, values)
}

/// One linear-chirp emitter: pulses `A e^{i (omega (t - g) + (B/d) (t - g)^2)}`
/// on `[g, g + d]` with `g = t0 + m * pri`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpComponent {
    #[serde(default = "unit")]
    pub amplitude: f64,
    /// Start frequency in rad/s.
    pub omega: f64,
    /// Bandwidth in rad/s; the instantaneous frequency sweeps by `2B`.
    pub bandwidth: f64,
    /// Pulse duration in seconds.
    pub duration: f64,
    pub t0: f64,
    /// Start-to-start pulse repetition interval in seconds.
    #[serde(default)]
    pub pri: f64,
    #[serde(default = "one")]
    pub pulses: usize,
}

fn unit() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

/// A single pulse of a chirp component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub component: usize,
    pub index: usize,
    pub amplitude: f64,
    pub start: f64,
    pub duration: f64,
    pub omega: f64,
    /// Instantaneous-frequency slope `2B/d` in rad/s^2.
    pub slope: f64,
}

impl Pulse {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }

    /// Instantaneous frequency `omega + (2B/d)(t - start)`.
    pub fn inst_freq(&self, t: f64) -> f64 {
        self.omega + self.slope * (t - self.start)
    }

    fn value(&self, t: f64) -> Complex64 {
        let u = t - self.start;
        Complex64::from_polar(self.amplitude, self.omega * u + 0.5 * self.slope * u * u)
    }
}

/// Superposition of linear-chirp emitters observed on `[0, window]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpTrain {
    pub components: Vec<ChirpComponent>,
    #[serde(default = "default_window")]
    pub window: f64,
}

fn default_window() -> f64 {
    1e-4
}

impl ChirpTrain {
    pub fn new(components: Vec<ChirpComponent>, window: f64) -> Result<Self> {
        let t = ChirpTrain { components, window };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return config("observation window must be positive");
        }
        for (j, c) in self.components.iter().enumerate() {
            if !(c.duration > 0.0) {
                return config(format!("chirp {j}: duration must be positive"));
            }
            if c.pulses == 0 {
                return config(format!("chirp {j}: pulse count must be >= 1"));
            }
            if c.pri < 0.0 || (c.pulses > 1 && c.pri < c.duration) {
                return config(format!("chirp {j}: pri must be >= duration for repeated pulses"));
            }
            let last_end = c.t0 + (c.pulses - 1) as f64 * c.pri + c.duration;
            if c.t0 < 0.0 || last_end > self.window * (1.0 + 1e-12) {
                return config(format!("chirp {j}: pulses leave the observation window"));
            }
        }
        Ok(())
    }

    /// All pulses, ordered by component then pulse index.
    pub fn pulses(&self) -> Vec<Pulse> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(j, c)| {
                (0..c.pulses).map(move |m| Pulse {
                    component: j,
                    index: m,
                    amplitude: c.amplitude,
                    start: c.t0 + m as f64 * c.pri,
                    duration: c.duration,
                    omega: c.omega,
                    slope: 2.0 * c.bandwidth / c.duration,
                })
            })
            .collect()
    }
}

/// Samples the train at `t = l / rate` for `l = 0..=floor(window * rate)`.
pub fn sample_chirps(train: &ChirpTrain, rate: f64, window: f64) -> Result<SampleSeries> {
    if !(rate > 0.0) || !(window > 0.0) {
        return config("rate and window must be positive");
    }
    let count = (window * rate).floor() as usize + 1;
    let mut values = vec![Complex64::new(0.0, 0.0); count];
    for p in train.pulses() {
        let first = (p.start * rate).ceil().max(0.0) as usize;
        let last = ((p.end() * rate).floor() as usize).min(count - 1);
        for (l, v) in values.iter_mut().enumerate().take(last + 1).skip(first) {
            let t = l as f64 / rate;
            if p.active(t) {
                *v += p.value(t);
            }
        }
    }
    SampleSeries::time(rate, values)
}

/// Noise distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
}

/// Target SNR and RNG stream of additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `+inf` means no noise.
    pub snr_db: f64,
    pub seed: u64,
    /// Stream index, one per trial.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub family: NoiseFamily,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        NoiseSpec { snr_db, seed, stream: 0, family: NoiseFamily::Gaussian }
    }

    /// Noise for trial `trial` of an experiment seeded with `seed`.
    pub fn trial(snr_db: f64, seed: u64, trial: u64) -> Self {
        NoiseSpec { snr_db, seed, stream: trial, family: NoiseFamily::Gaussian }
    }

    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY, 0)
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Complex standard normal draws `(x + iy)/sqrt(2)`.
pub fn complex_normal(len: usize, spec: &NoiseSpec) -> Vec<Complex64> {
    let mut rng = spec.rng();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Adds complex Gaussian noise scaled so that `||f|| / ||e|| = 10^{snr/20}`
/// exactly.
pub fn add_noise(series: &SampleSeries, spec: &NoiseSpec) -> Result<SampleSeries> {
    Ok(add_noise_joint(std::slice::from_ref(series), spec)?.remove(0))
}

/// Adds one noise vector across several series, scaled against their joint
/// clean norm.
pub fn add_noise_joint(series: &[SampleSeries], spec: &NoiseSpec) -> Result<Vec<SampleSeries>> {
    if spec.snr_db.is_nan() || spec.snr_db == f64::NEG_INFINITY {
        return config("snr must be a number or +inf");
    }
    if spec.snr_db == f64::INFINITY {
        return Ok(series.to_vec());
    }
    let clean: f64 = series.iter().map(|s| s.clean_norm.powi(2)).sum::<f64>().sqrt();
    if !(clean > 0.0) {
        return config("cannot set an SNR for a zero-norm signal");
    }
    let total: usize = series.iter().map(|s| s.len()).sum();
    let raw = complex_normal(total, spec);
    let scale = clean / 10f64.powf(spec.snr_db / 20.0) / norm(&raw);
    let mut offset = 0;
    Ok(series
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for (v, e) in out.values.iter_mut().zip(&raw[offset..offset + s.len()]) {
                *v += e * scale;
            }
            offset += s.len();
            out.snr_db = Some(spec.snr_db);
            out
        })
        .collect())
}

/// `20 log10(||clean|| / ||noisy - clean||)`.
pub fn measured_snr_db(clean: &[Complex64], noisy: &[Complex64]) -> f64 {
    let err: f64 = clean.iter().zip(noisy).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>().sqrt();
    20.0 * (norm(clean) / err).log10()
}

/// Reduces a frequency in rad/s into the band `[lo, lo + 2 pi rate)`.
pub fn unwrap_into_band(lambda: f64, lo: f64, rate: f64) -> f64 {
    let period = 2.0 * PI * rate;
    lo + (lambda - lo).rem_euclid(period)
}
