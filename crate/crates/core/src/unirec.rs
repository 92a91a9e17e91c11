//! Univariate point-source recovery from a thresholded localized spectrum.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::filters::KernelConfig;
use crate::linalg;
use crate::spectral::{circular_distance, wrap_angle, GridEvaluator, PowerSpectrum};
use crate::synth::SampleSeries;

/// How the detection threshold `tau` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Absolute level in amplitude units.
    Fixed(f64),
    /// Percentile of `|sigma_n|` over the grid.
    Percentile(f64),
}

impl Threshold {
    pub fn resolve(&self, ps: &PowerSpectrum) -> Result<f64> {
        match *self {
            Threshold::Fixed(t) if t > 0.0 && t.is_finite() => Ok(t),
            Threshold::Fixed(t) => config(format!("threshold must be positive, got {t}")),
            Threshold::Percentile(p) => auto_threshold(ps, p),
        }
    }
}

/// Parameters of one recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub kernel: KernelConfig,
    pub threshold: Threshold,
    /// Guess of the minimal separation between frequencies, in radians.
    pub eta: f64,
    /// Clusters are split at peaks closer than `separation * eta`.
    pub separation: f64,
    /// Parabolic sub-grid refinement of each peak.
    pub refine: bool,
    /// Re-estimate amplitudes by Vandermonde least squares.
    pub refit: bool,
    /// Keep only this many peaks, strongest first.
    pub max_peaks: Option<usize>,
}

impl RecoveryConfig {
    pub fn new(kernel: KernelConfig, threshold: Threshold, eta: f64) -> Self {
        RecoveryConfig { kernel, threshold, eta, separation: 0.25, refine: true, refit: false, max_peaks: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < PI) {
            return config(format!("eta must lie in (0, pi), got {}", self.eta));
        }
        if !(self.separation > 0.0 && self.separation <= 1.0) {
            return config("separation fraction must lie in (0, 1]");
        }
        if let Threshold::Fixed(t) = self.threshold {
            if !(t > 0.0) {
                return config("tau must be positive");
            }
        }
        Ok(())
    }

    /// Minimal separation used inside the partition, in radians.
    pub fn min_separation(&self) -> f64 {
        self.separation * self.eta
    }
}

/// Evaluates `sigma_n` for series of one degree, reusing the FFT plan.
#[derive(Debug, Clone)]
pub struct SpectrumOperator {
    kernel: KernelConfig,
    eval: GridEvaluator,
}

impl SpectrumOperator {
    pub fn new(kernel: KernelConfig) -> Self {
        let eval = GridEvaluator::new(kernel.grid_size());
        SpectrumOperator { kernel, eval }
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// `sigma_n(x) = hbar sum_{|l|<n} H(|l|/n) mu(l) e^{i l x}` on the grid.
    pub fn apply(&self, series: &SampleSeries) -> Result<PowerSpectrum> {
        let n = self.kernel.n();
        if series.n() != Some(n) {
            return Err(Error::Dimension(format!(
                "series is not a moment series of degree {n} (length {})",
                series.len()
            )));
        }
        let coeffs = self.kernel.filter_series(series.values());
        let values = self.eval.evaluate(&coeffs);
        Ok(PowerSpectrum::with_coefficients(n, values, Arc::new(coeffs)))
    }
}

/// One-shot `sigma_n` of a moment series.
pub fn spectrum(series: &SampleSeries, kernel: &KernelConfig) -> Result<PowerSpectrum> {
    SpectrumOperator::new(kernel.clone()).apply(series)
}

/// Linear-interpolated percentile of `values` (`p` in `(0, 100]`).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return config(format!("percentile must lie in (0, 100], got {p}"));
    }
    if values.is_empty() {
        return config("percentile of an empty set");
    }
    let mut v = values.to_vec();
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let (_, &mut a, upper) = v.select_nth_unstable_by(lo, |x, y| x.total_cmp(y));
    let frac = rank - lo as f64;
    if frac == 0.0 {
        return Ok(a);
    }
    let b = upper.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(a + frac * (b - a))
}

/// Percentile of `|sigma_n|` over the grid.
pub fn auto_threshold(ps: &PowerSpectrum, p: f64) -> Result<f64> {
    percentile(&ps.magnitudes(), p)
}

/// Grid indices belonging to one detected peak.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Indices in circular order.
    pub indices: Vec<usize>,
    /// Index of the largest magnitude in the cluster.
    pub peak: usize,
}

impl Cluster {
    /// Circular extent from first to last index, in radians.
    pub fn span(&self, grid_size: usize) -> f64 {
        let first = self.indices[0];
        let last = *self.indices.last().unwrap();
        ((last + grid_size - first) % grid_size) as f64 * 2.0 * PI / grid_size as f64
    }
}

fn idx_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Splits the level set `{|sigma| >= tau}` into clusters.
///
/// Maximal runs of the level set closer than `min_sep` are grouped; each
/// group is then split at the lowest valley between peaks that are at least
/// `min_sep` apart, peaks being accepted greedily by height.
pub fn threshold_partition(mags: &[f64], tau: f64, min_sep: f64) -> Vec<Cluster> {
    let step = 2.0 * PI / mags.len() as f64;
    partition_indices(mags, tau, (min_sep / step).ceil().max(1.0) as usize)
}

/// [`threshold_partition`] with the separation given in grid steps. The
/// index set is treated as circular; append a zero to cut a window open.
pub fn partition_indices(mags: &[f64], tau: f64, sep_idx: usize) -> Vec<Cluster> {
    let n = mags.len();
    let sep_idx = sep_idx.max(1);
    let inside: Vec<bool> = mags.iter().map(|&m| m >= tau).collect();
    if !inside.iter().any(|&b| b) {
        return Vec::new();
    }

    // Runs of consecutive indices, walking the circle from a run start.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    if inside.iter().all(|&b| b) {
        runs.push((0, n));
    } else {
        let start = (0..n).find(|&j| inside[j] && !inside[(j + n - 1) % n]).unwrap();
        let mut j = 0;
        while j < n {
            let idx = (start + j) % n;
            if inside[idx] {
                let s = idx;
                let mut len = 0;
                while j < n && inside[(start + j) % n] {
                    len += 1;
                    j += 1;
                }
                runs.push((s, len));
            } else {
                j += 1;
            }
        }
    }

    // Peak candidates: local maxima inside the level set plus each run's max.
    let mut cands: Vec<usize> = Vec::new();
    for &(s, len) in &runs {
        let mut best = s;
        for k in 0..len {
            let j = (s + k) % n;
            let l = mags[(j + n - 1) % n];
            let r = mags[(j + 1) % n];
            if mags[j] >= l && mags[j] >= r {
                cands.push(j);
            }
            if mags[j] > mags[best] {
                best = j;
            }
        }
        cands.push(best);
    }
    cands.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    cands.dedup();
    let mut peaks: Vec<usize> = Vec::new();
    for c in cands {
        if peaks.iter().all(|&p| idx_distance(p, c, n) >= sep_idx) {
            peaks.push(c);
        }
    }

    // Group runs whose circular gap is below the separation.
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for &(s, len) in &runs {
        let merge = match groups.last().and_then(|g| g.last()) {
            Some(&(ps, plen)) => {
                let end = ps + plen;
                let gap = (s + n - end % n) % n;
                gap < sep_idx
            }
            None => false,
        };
        if merge {
            groups.last_mut().unwrap().push((s, len));
        } else {
            groups.push(vec![(s, len)]);
        }
    }
    if groups.len() > 1 {
        let (ls, llen) = *groups.last().unwrap().last().unwrap();
        let (fs, _) = groups[0][0];
        let gap = (fs + n - (ls + llen) % n) % n;
        if gap < sep_idx {
            let last = groups.pop().unwrap();
            let mut merged = last;
            merged.extend(groups[0].drain(..));
            groups[0] = merged;
        }
    }

    let mut clusters = Vec::new();
    for g in groups {
        let idx: Vec<usize> =
            g.iter().flat_map(|&(s, len)| (0..len).map(move |k| (s + k) % n)).collect();
        let pos: Vec<usize> = idx
            .iter()
            .enumerate()
            .filter(|(_, j)| peaks.contains(j))
            .map(|(p, _)| p)
            .collect();
        if pos.len() <= 1 {
            let peak = *idx.iter().max_by(|&&a, &&b| mags[a].total_cmp(&mags[b]).then(b.cmp(&a))).unwrap();
            clusters.push(Cluster { indices: idx, peak });
            continue;
        }
        let mut cut_start = 0;
        for w in pos.windows(2) {
            let (a, b) = (w[0], w[1]);
            let valley = (a + 1..b)
                .min_by(|&p, &q| mags[idx[p]].total_cmp(&mags[idx[q]]).then(p.cmp(&q)))
                .unwrap_or(a + 1);
            let part = idx[cut_start..valley].to_vec();
            clusters.push(Cluster { indices: part, peak: idx[a] });
            cut_start = valley;
        }
        clusters.push(Cluster { indices: idx[cut_start..].to_vec(), peak: idx[*pos.last().unwrap()] });
    }
    for c in clusters.iter_mut() {
        c.peak = *c
            .indices
            .iter()
            .max_by(|&&a, &&b| mags[a].total_cmp(&mags[b]).then(b.cmp(&a)))
            .unwrap();
    }
    clusters.sort_by_key(|c| c.peak);
    clusters
}

/// A detected frequency with its amplitude and phase estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub lambda: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// Circular extent of the supporting cluster, in radians.
    pub span: f64,
}

impl Peak {
    pub fn complex_amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// Peaks sorted by frequency, with the threshold that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    pub peaks: Vec<Peak>,
    pub tau: f64,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.lambda).collect()
    }
}

/// Vertex offset of the parabola through three equispaced samples, in grid
/// steps, clamped to half a step.
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / den).clamp(-0.5, 0.5)
}

/// Reads frequency, amplitude and phase from each cluster.
pub fn read_peaks(ps: &PowerSpectrum, clusters: &[Cluster], tau: f64, refine: bool) -> PeakSet {
    let n = ps.grid_size();
    let vals = ps.values();
    let mut peaks: Vec<Peak> = clusters
        .iter()
        .map(|c| {
            let j = c.peak;
            let grid_val = vals[j];
            let mut lambda = ps.x(j);
            let mut value = grid_val;
            if refine {
                let l = vals[(j + n - 1) % n].norm();
                let r = vals[(j + 1) % n].norm();
                let d = parabolic_offset(l, grid_val.norm(), r);
                if d != 0.0 {
                    let x = wrap_angle(lambda + d * ps.step());
                    if let Some(v) = ps.eval_at(x) {
                        if v.norm() >= grid_val.norm() {
                            lambda = x;
                            value = v;
                        }
                    }
                }
            }
            Peak { lambda, amplitude: value.norm(), phase: value.arg(), span: c.span(n) }
        })
        .collect();
    peaks.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    PeakSet { peaks, tau }
}

/// Full output of one recovery run.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub spectrum: PowerSpectrum,
    pub clusters: Vec<Cluster>,
    pub peaks: PeakSet,
}

/// Spectrum, threshold, partition and peak read-out in one call.
pub fn recover(series: &SampleSeries, cfg: &RecoveryConfig) -> Result<Recovery> {
    recover_with(&SpectrumOperator::new(cfg.kernel.clone()), series, cfg)
}

/// As [`recover`] with a prepared spectrum operator.
pub fn recover_with(op: &SpectrumOperator, series: &SampleSeries, cfg: &RecoveryConfig) -> Result<Recovery> {
    cfg.validate()?;
    let ps = op.apply(series)?;
    let tau = cfg.threshold.resolve(&ps)?;
    let clusters = threshold_partition(&ps.magnitudes(), tau, cfg.min_separation());
    let mut peaks = read_peaks(&ps, &clusters, tau, cfg.refine);
    if let Some(k) = cfg.max_peaks {
        if peaks.peaks.len() > k {
            let mut order: Vec<usize> = (0..peaks.peaks.len()).collect();
            order.sort_by(|&a, &b| peaks.peaks[b].amplitude.total_cmp(&peaks.peaks[a].amplitude).then(a.cmp(&b)));
            let mut keep = order[..k].to_vec();
            keep.sort_unstable();
            peaks.peaks = keep.into_iter().map(|i| peaks.peaks[i]).collect();
        }
    }
    if cfg.refit && !peaks.is_empty() {
        let amps = linalg::vandermonde_amplitudes(series, &peaks.lambdas())?;
        for (p, a) in peaks.peaks.iter_mut().zip(amps) {
            p.amplitude = a.norm();
            p.phase = a.arg();
        }
    }
    Ok(Recovery { spectrum: ps, clusters, peaks })
}

/// Largest distance from a peak to the nearest entry of `truth`.
pub fn max_error(peaks: &[f64], truth: &[f64]) -> f64 {
    peaks
        .iter()
        .map(|&p| truth.iter().map(|&t| circular_distance(p, t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::LowPassFilter;
    use crate::synth::{add_noise, sample_exponential, ExponentialModel, NoiseSpec};

    fn kernel(n: usize) -> KernelConfig {
        KernelConfig::new(n, LowPassFilter::bump(4).unwrap()).unwrap()
    }

    fn three_tone() -> ExponentialModel {
        ExponentialModel::univariate(&[
            (Complex64::new(5.0, 0.0), -1.0),
            (Complex64::new(30.0, 0.0), 2.0),
            (Complex64::new(20.0, 0.0), 2.005),
        ])
        .unwrap()
    }

    #[test]
    fn single_tone_is_kernel() {
        let k = kernel(64);
        let m = ExponentialModel::univariate(&[(Complex64::new(1.0, 0.0), 0.0)]).unwrap();
        let s = sample_exponential(&m, &[1.0], &[0.0], 64).unwrap();
        let ps = spectrum(&s, &k).unwrap();
        let g = k.grid();
        for (a, b) in ps.values().iter().zip(g.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tau_above_max_gives_nothing() {
        let mags = vec![0.5, 1.0, 0.2, 0.1];
        assert!(threshold_partition(&mags, 2.0, 0.1).is_empty());
    }

    #[test]
    fn three_tone_clusters() {
        // The bump kernel's first sidelobe is about 0.15 of the peak, so the
        // sidelobes of the 30-amplitude tone clear tau = 2.5 and only a
        // separation between 2.5e-3 and 5e-3 isolates the three tones.
        let k = kernel(4096);
        let s = sample_exponential(&three_tone(), &[1.0], &[0.0], 4096).unwrap();
        let ps = spectrum(&s, &k).unwrap();
        let c = threshold_partition(&ps.magnitudes(), 2.5, 0.016 / 4.0);
        assert_eq!(c.len(), 3);
        let p = read_peaks(&ps, &c, 2.5, true);
        let want = [-1.0, 2.0, 2.005];
        for (pk, w) in p.peaks.iter().zip(want) {
            assert!((pk.lambda - w).abs() < 2.0 * ps.step(), "{} vs {w}", pk.lambda);
        }
    }

    #[test]
    fn low_threshold_splits_sidelobes() {
        let k = kernel(1024);
        let s = sample_exponential(&three_tone(), &[1.0], &[0.0], 1024).unwrap();
        let ps = spectrum(&s, &k).unwrap();
        let c = threshold_partition(&ps.magnitudes(), 1e-4, 0.001 / 4.0);
        assert!(c.len() > 3, "got {}", c.len());
    }

    #[test]
    fn single_component_readout() {
        let k = kernel(512);
        let a = Complex64::from_polar(7.0, 0.3);
        let m = ExponentialModel::univariate(&[(a, 1.1)]).unwrap();
        let s = sample_exponential(&m, &[1.0], &[0.0], 512).unwrap();
        let cfg = RecoveryConfig::new(k, Threshold::Fixed(3.5), 0.5);
        let r = recover(&s, &cfg).unwrap();
        assert_eq!(r.peaks.len(), 1);
        let p = r.peaks.peaks[0];
        assert!((p.lambda - 1.1).abs() <= r.spectrum.step());
        assert!((p.amplitude - 7.0).abs() < 0.01);
        assert!((p.phase - 0.3).abs() < 0.01);
    }

    #[test]
    fn wraparound_cluster_merged() {
        let k = kernel(256);
        let m = ExponentialModel::univariate(&[(Complex64::new(1.0, 0.0), PI)]).unwrap();
        let s = sample_exponential(&m, &[1.0], &[0.0], 256).unwrap();
        let ps = spectrum(&s, &k).unwrap();
        let c = threshold_partition(&ps.magnitudes(), 0.5, 0.1);
        assert_eq!(c.len(), 1);
        let p = read_peaks(&ps, &c, 0.5, true);
        assert!(circular_distance(p.peaks[0].lambda, PI) < ps.step());
    }

    #[test]
    fn close_tones_merge_at_low_degree() {
        let k = kernel(1024);
        let s = sample_exponential(&three_tone(), &[1.0], &[0.0], 1024).unwrap();
        let ps = spectrum(&s, &k).unwrap();
        let c = threshold_partition(&ps.magnitudes(), 10.0, 0.001);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn noisy_three_tone() {
        let k = kernel(4096);
        let s = sample_exponential(&three_tone(), &[1.0], &[0.0], 4096).unwrap();
        let s = add_noise(&s, &NoiseSpec::new(0.0, 3)).unwrap();
        let cfg = RecoveryConfig::new(k, Threshold::Fixed(2.5), 0.016);
        let r = recover(&s, &cfg).unwrap();
        assert_eq!(r.peaks.len(), 3);
        assert!(max_error(&r.peaks.lambdas(), &[-1.0, 2.0, 2.005]) < 1e-3);
    }

    #[test]
    fn percentile_rules() {
        let v = vec![3.0; 10];
        assert_eq!(percentile(&v, 37.0).unwrap(), 3.0);
        let w: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert_eq!(percentile(&w, 100.0).unwrap(), 10.0);
        assert!((percentile(&w, 50.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(percentile(&w, 0.0).is_err());
    }
}
