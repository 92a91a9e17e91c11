//! Multivariate recovery by projections onto a basis of directions.
//!
//! Each schedule line samples `f(offset + l * step)`; its localized spectrum
//! gives `<step, w_k>` accurately from the peak location and `<offset, w_k>`
//! approximately from the peak phase (amplitudes are assumed real positive
//! for this purpose). Peaks of the first two lines are registered by
//! nearest neighbours in the (accurate, approximate) plane, later lines by
//! their phase estimate of the first coordinate, and `w` is recovered by
//! inverting the basis.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::spectral::{circular_distance, wrap_angle};
use crate::synth::{sample_exponential, ExponentialModel, SampleSeries};
use crate::unirec::{recover_with, RecoveryConfig, SpectrumOperator};

/// `q` linearly independent directions `Delta_d` in `R^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionBasis {
    deltas: Vec<Vec<f64>>,
}

impl ProjectionBasis {
    pub fn new(deltas: Vec<Vec<f64>>) -> Result<Self> {
        let q = deltas.len();
        if q == 0 || deltas.iter().any(|d| d.len() != q) {
            return Err(Error::Dimension(format!("basis needs {q} vectors of length {q}")));
        }
        if deltas.iter().flatten().any(|v| !v.is_finite()) {
            return config("basis has non-finite entries");
        }
        let b = ProjectionBasis { deltas };
        let c = b.condition_number();
        if !c.is_finite() || c > 1e12 {
            return Err(Error::IllConditioned(format!("basis is singular (condition number {c:.3e})")));
        }
        Ok(b)
    }

    /// The identity basis of `R^q`.
    pub fn identity(q: usize) -> Self {
        ProjectionBasis {
            deltas: (0..q).map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    pub fn q(&self) -> usize {
        self.deltas.len()
    }

    pub fn deltas(&self) -> &[Vec<f64>] {
        &self.deltas
    }

    fn matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.q(), self.q(), |i, j| self.deltas[i][j])
    }

    /// 2-norm condition number of the matrix with rows `Delta_d`.
    pub fn condition_number(&self) -> f64 {
        match self.matrix().singular_values() {
            Ok(s) => {
                let max = s.iter().cloned().fold(0.0, f64::max);
                let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
                max / min
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// Scales each direction so that `|<Delta_d, w>| <= margin * pi` for all
    /// `w` in the box `[-bound, bound]^q`, which keeps projections from
    /// wrapping around the circle.
    pub fn fit_to_box(&self, bound: f64, margin: f64) -> Result<Self> {
        self.fit_to_extent(&vec![bound; self.q()], margin)
    }

    /// Like [`fit_to_box`](Self::fit_to_box) with one half-width per axis.
    pub fn fit_to_extent(&self, half_widths: &[f64], margin: f64) -> Result<Self> {
        if half_widths.len() != self.q() {
            return Err(Error::Dimension("one half-width per axis expected".into()));
        }
        if half_widths.iter().any(|b| !(*b > 0.0)) || !(margin > 0.0 && margin <= 1.0) {
            return config("half-widths must be positive and margin in (0, 1]");
        }
        let deltas = self
            .deltas
            .iter()
            .map(|d| {
                let reach: f64 = d.iter().zip(half_widths).map(|(v, b)| v.abs() * b).sum();
                let s = margin * PI / reach;
                d.iter().map(|v| v * s).collect()
            })
            .collect();
        ProjectionBasis::new(deltas)
    }

    /// `(<Delta_1, w>, ..., <Delta_q, w>)`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        self.deltas.iter().map(|d| d.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    /// Solves `<Delta_d, w> = p_d` for `w`.
    pub fn solve(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.q() {
            return Err(Error::Dimension("projection count differs from basis dimension".into()));
        }
        let rhs = Mat::from_fn(self.q(), 1, |i, _| p[i]);
        let x = self.matrix().partial_piv_lu().solve(rhs);
        Ok((0..self.q()).map(|i| x[(i, 0)]).collect())
    }
}

/// One sampling line: step direction index and optional offset direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line {
    pub step: usize,
    pub offset: Option<usize>,
}

/// Lines `(Delta_2 + l Delta_1)` then `(Delta_1 + l Delta_d)` for `d >= 2`.
pub fn schedule(q: usize) -> Vec<Line> {
    if q == 1 {
        return vec![Line { step: 0, offset: None }];
    }
    let mut lines = vec![Line { step: 0, offset: Some(1) }];
    lines.extend((1..q).map(|d| Line { step: d, offset: Some(0) }));
    lines
}

/// Samples every schedule line with `2n - 1` points.
pub fn sample_schedule(model: &ExponentialModel, basis: &ProjectionBasis, n: usize) -> Result<Vec<SampleSeries>> {
    if model.dim() != basis.q() {
        return Err(Error::Dimension("model and basis dimensions differ".into()));
    }
    let zero = vec![0.0; basis.q()];
    schedule(basis.q())
        .iter()
        .map(|line| {
            let offset = line.offset.map(|o| basis.deltas()[o].as_slice()).unwrap_or(&zero);
            sample_exponential(model, &basis.deltas()[line.step], offset, n)
        })
        .collect()
}

/// A peak of one line: accurate step projection, phase-derived offset
/// projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePeak {
    pub accurate: f64,
    pub approximate: f64,
    pub value: Complex64,
}

impl LinePeak {
    /// Peak at `lambda` with complex amplitude `value`, whose phase carries
    /// `-<offset, w>`.
    pub fn from_estimate(lambda: f64, value: Complex64) -> Self {
        LinePeak { accurate: lambda, approximate: wrap_angle(-value.arg()), value }
    }
}

fn line_peaks(op: &SpectrumOperator, series: &SampleSeries, cfg: &RecoveryConfig) -> Result<Vec<LinePeak>> {
    let r = recover_with(op, series, cfg)?;
    Ok(r.peaks.peaks.iter().map(|p| LinePeak::from_estimate(p.lambda, p.complex_amplitude())).collect())
}

/// Registered peak pair from lines `(Delta_b + l Delta_a)` and
/// `(Delta_a + l Delta_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedProjection {
    pub first: usize,
    pub second: usize,
    /// Accurate `<Delta_a, w>` from the first line.
    pub p_a: f64,
    /// Accurate `<Delta_b, w>` from the second line.
    pub p_b: f64,
    pub distance: f64,
}

/// Result of registering two peak lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairOutcome {
    pub pairs: Vec<PairedProjection>,
    pub unpaired_first: Vec<usize>,
    pub unpaired_second: Vec<usize>,
}

/// Greedy one-to-one matching on a distance matrix: repeatedly accepts the
/// closest remaining pair (ties to the lowest indices) up to `max_distance`.
pub fn greedy_match(dist: &[Vec<f64>], max_distance: f64) -> Vec<(usize, usize, f64)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in dist.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            if d <= max_distance {
                all.push((d, i, j));
            }
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let rows = dist.len();
    let cols = dist.first().map_or(0, |r| r.len());
    let mut used_i = vec![false; rows];
    let mut used_j = vec![false; cols];
    let mut out = Vec::new();
    for (d, i, j) in all {
        if !used_i[i] && !used_j[j] {
            used_i[i] = true;
            used_j[j] = true;
            out.push((i, j, d));
        }
    }
    out.sort_by_key(|m| m.0);
    out
}

/// Pairs peaks of the two lines by circular distance in the
/// `(<Delta_a, w>, <Delta_b, w>)` plane.
pub fn register(first: &[LinePeak], second: &[LinePeak], max_distance: f64) -> PairOutcome {
    let dist: Vec<Vec<f64>> = first
        .iter()
        .map(|a| {
            second
                .iter()
                .map(|b| {
                    let da = circular_distance(a.accurate, b.approximate);
                    let db = circular_distance(a.approximate, b.accurate);
                    (da * da + db * db).sqrt()
                })
                .collect()
        })
        .collect();
    let m = greedy_match(&dist, max_distance);
    let pairs: Vec<PairedProjection> = m
        .iter()
        .map(|&(i, j, d)| PairedProjection {
            first: i,
            second: j,
            p_a: first[i].accurate,
            p_b: second[j].accurate,
            distance: d,
        })
        .collect();
    let unpaired_first = (0..first.len()).filter(|i| !m.iter().any(|p| p.0 == *i)).collect();
    let unpaired_second = (0..second.len()).filter(|j| !m.iter().any(|p| p.1 == *j)).collect();
    PairOutcome { pairs, unpaired_first, unpaired_second }
}

/// Settings of the multivariate pipeline.
#[derive(Debug, Clone)]
pub struct MultiConfig {
    pub recovery: RecoveryConfig,
    /// Largest registration distance accepted, in radians.
    pub max_pair_distance: f64,
}

impl MultiConfig {
    pub fn new(recovery: RecoveryConfig) -> Self {
        MultiConfig { recovery, max_pair_distance: 1.0 }
    }
}

/// Runs the univariate recovery on both lines and registers the peaks.
pub fn recover_pair(first: &SampleSeries, second: &SampleSeries, cfg: &MultiConfig) -> Result<(PairOutcome, Vec<LinePeak>, Vec<LinePeak>)> {
    if first.n() != second.n() {
        return Err(Error::Dimension("paired series must share n".into()));
    }
    let op = SpectrumOperator::new(cfg.recovery.kernel.clone());
    let a = line_peaks(&op, first, &cfg.recovery)?;
    let b = line_peaks(&op, second, &cfg.recovery)?;
    Ok((register(&a, &b, cfg.max_pair_distance), a, b))
}

/// A recovered point source.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredPoint {
    /// Accurate `<Delta_d, w>` for each basis direction.
    pub projections: Vec<f64>,
    pub amplitude: Complex64,
    pub w_hat: Vec<f64>,
}

/// Points plus registration diagnostics.
#[derive(Debug, Clone, Default)]
pub struct NdRecovery {
    pub points: Vec<RegisteredPoint>,
    /// Peaks per schedule line.
    pub line_peaks: Vec<Vec<LinePeak>>,
    /// Peaks per line that did not end up in a point.
    pub unpaired: Vec<Vec<usize>>,
}

/// Recovers points from the schedule series (see [`schedule`]).
pub fn recover_nd(series: &[SampleSeries], basis: &ProjectionBasis, cfg: &MultiConfig) -> Result<NdRecovery> {
    let q = basis.q();
    let lines = schedule(q);
    if series.len() != lines.len() {
        return Err(Error::Dimension(format!("expected {} schedule series, got {}", lines.len(), series.len())));
    }
    let n = series[0].n();
    if series.iter().any(|s| s.n() != n) {
        return Err(Error::Dimension("schedule series must share n".into()));
    }
    let op = SpectrumOperator::new(cfg.recovery.kernel.clone());
    let peaks: Vec<Vec<LinePeak>> = series
        .iter()
        .map(|s| line_peaks(&op, s, &cfg.recovery))
        .collect::<Result<_>>()?;
    register_lines(peaks, basis, cfg.max_pair_distance)
}

/// Registers per-line peaks (one list per [`schedule`] line) into points.
pub fn register_lines(peaks: Vec<Vec<LinePeak>>, basis: &ProjectionBasis, max_pair_distance: f64) -> Result<NdRecovery> {
    let q = basis.q();
    let lines = schedule(q);
    if peaks.len() != lines.len() {
        return Err(Error::Dimension(format!("expected {} peak lists, got {}", lines.len(), peaks.len())));
    }
    if q == 1 {
        let points = peaks[0]
            .iter()
            .map(|p| {
                let w_hat = basis.solve(&[p.accurate])?;
                Ok(RegisteredPoint { projections: vec![p.accurate], amplitude: p.value, w_hat })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(NdRecovery { points, unpaired: vec![Vec::new()], line_peaks: peaks });
    }

    let reg = register(&peaks[0], &peaks[1], max_pair_distance);
    // Candidate projections per pair; later lines fill coordinates 2..q.
    let mut cand: Vec<Vec<Option<f64>>> = reg
        .pairs
        .iter()
        .map(|p| {
            let mut v = vec![None; q];
            v[0] = Some(p.p_a);
            v[1] = Some(p.p_b);
            v
        })
        .collect();
    let mut unpaired = vec![reg.unpaired_first.clone(), reg.unpaired_second.clone()];
    for (li, line) in lines.iter().enumerate().skip(2) {
        let dist: Vec<Vec<f64>> = cand
            .iter()
            .map(|c| {
                let p1 = c[0].unwrap();
                peaks[li].iter().map(|pk| circular_distance(p1, pk.approximate)).collect()
            })
            .collect();
        let m = greedy_match(&dist, max_pair_distance);
        for &(ci, pj, _) in &m {
            cand[ci][line.step] = Some(peaks[li][pj].accurate);
        }
        unpaired.push((0..peaks[li].len()).filter(|j| !m.iter().any(|x| x.1 == *j)).collect());
    }

    let mut points = Vec::new();
    for (c, pair) in cand.iter().zip(&reg.pairs) {
        if c.iter().any(|v| v.is_none()) {
            unpaired[0].push(pair.first);
            unpaired[1].push(pair.second);
            continue;
        }
        let proj: Vec<f64> = c.iter().map(|v| v.unwrap()).collect();
        let w_hat = basis.solve(&proj)?;
        // First line has offset Delta_2: sigma ~ a e^{-i <Delta_2, w>}.
        let amplitude = peaks[0][pair.first].value * Complex64::from_polar(1.0, proj[1]);
        points.push(RegisteredPoint { projections: proj, amplitude, w_hat });
    }
    for u in unpaired.iter_mut() {
        u.sort_unstable();
    }
    Ok(NdRecovery { points, line_peaks: peaks, unpaired })
}

/// Matching outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMatch {
    pub recovered: usize,
    /// RMSE over matched pairs; NaN when nothing matched.
    pub rmse: f64,
}

/// Per-trial matches aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub radius: f64,
    pub total: usize,
    /// Mean number of recovered points over trials.
    pub recovered: f64,
    /// Mean RMSE over trials with at least one match.
    pub rmse: f64,
    /// Sample standard deviation of the per-trial RMSE.
    pub rmse_std: f64,
    pub trial_stats: Vec<TrialMatch>,
}

impl MatchReport {
    pub fn aggregate(radius: f64, total: usize, trial_stats: Vec<TrialMatch>) -> Self {
        let recovered = if trial_stats.is_empty() {
            0.0
        } else {
            trial_stats.iter().map(|t| t.recovered as f64).sum::<f64>() / trial_stats.len() as f64
        };
        let r: Vec<f64> = trial_stats.iter().map(|t| t.rmse).filter(|v| v.is_finite()).collect();
        let (rmse, rmse_std) = mean_std(&r);
        MatchReport { radius, total, recovered, rmse, rmse_std, trial_stats }
    }
}

/// Mean and sample standard deviation (NaN mean for empty input).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, 0.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Matches estimates to ground truth within `radius` (greedy, closest pair
/// first) and reports the RMSE over matched pairs.
pub fn assess(truth: &ExponentialModel, estimates: &[Vec<f64>], radius: f64) -> Result<TrialMatch> {
    if !(radius > 0.0) {
        return config("accuracy radius must be positive");
    }
    let dist: Vec<Vec<f64>> = truth
        .components()
        .iter()
        .map(|c| estimates.iter().map(|e| euclid(&c.freq, e)).collect())
        .collect();
    let m = greedy_match(&dist, radius);
    let rmse = if m.is_empty() {
        f64::NAN
    } else {
        (m.iter().map(|x| x.2 * x.2).sum::<f64>() / m.len() as f64).sqrt()
    };
    Ok(TrialMatch { recovered: m.len(), rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{KernelConfig, LowPassFilter};
    use crate::synth::PointSource;
    use crate::unirec::Threshold;

    fn cfg(n: usize, tau: f64) -> MultiConfig {
        let k = KernelConfig::new(n, LowPassFilter::bump(4).unwrap()).unwrap();
        MultiConfig::new(RecoveryConfig::new(k, Threshold::Fixed(tau), 0.05))
    }

    #[test]
    fn schedule_budget() {
        let b = ProjectionBasis::identity(3);
        let m = ExponentialModel::new(3, vec![PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![0.1, 0.2, 0.3] }]).unwrap();
        let s = sample_schedule(&m, &b, 10).unwrap();
        assert_eq!(s.iter().map(|x| x.len()).sum::<usize>(), 6 * 10 - 3);
        let b2 = ProjectionBasis::identity(2);
        let m2 = ExponentialModel::new(2, vec![PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![0.1, 0.2] }]).unwrap();
        assert_eq!(sample_schedule(&m2, &b2, 10).unwrap().iter().map(|x| x.len()).sum::<usize>(), 38);
    }

    #[test]
    fn singular_basis_rejected() {
        assert!(ProjectionBasis::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }

    #[test]
    fn basis_roundtrip() {
        let b = ProjectionBasis::new(vec![vec![1.38, 4.14], vec![-7.56, 5.67]]).unwrap();
        let w = [0.3, -0.7];
        let back = b.solve(&b.project(&w)).unwrap();
        assert!(euclid(&back, &w) < 1e-12);
    }

    #[test]
    fn identity_single_point_at_origin() {
        let b = ProjectionBasis::identity(2);
        let m = ExponentialModel::new(2, vec![PointSource { amplitude: Complex64::new(2.0, 0.0), freq: vec![0.0, 0.0] }]).unwrap();
        let s = sample_schedule(&m, &b, 64).unwrap();
        let r = recover_nd(&s, &b, &cfg(64, 1.0)).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.points[0].w_hat.iter().all(|v| v.abs() < 1e-12));
        assert!((r.points[0].amplitude - Complex64::new(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn assess_perfect_and_shuffled() {
        let m = ExponentialModel::new(
            2,
            vec![
                PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![0.1, 0.2] },
                PointSource { amplitude: Complex64::new(1.0, 0.0), freq: vec![-0.5, 0.4] },
            ],
        )
        .unwrap();
        let est = vec![vec![0.1, 0.2], vec![-0.5, 0.4]];
        let r = assess(&m, &est, 0.01).unwrap();
        assert_eq!(r.recovered, 2);
        assert_eq!(r.rmse, 0.0);
        let shuffled = vec![vec![-0.5, 0.41], vec![0.1, 0.2]];
        let a = assess(&m, &shuffled, 0.05).unwrap();
        let b = assess(&m, &shuffled.iter().rev().cloned().collect::<Vec<_>>(), 0.05).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_aggregation() {
        let t = vec![TrialMatch { recovered: 3, rmse: 0.1 }, TrialMatch { recovered: 2, rmse: 0.3 }];
        let r = MatchReport::aggregate(0.5, 3, t);
        assert_eq!(r.recovered, 2.5);
        assert!((r.rmse - 0.2).abs() < 1e-12);
        assert!((r.rmse_std - 0.02f64.sqrt()).abs() < 1e-12);
    }
}
