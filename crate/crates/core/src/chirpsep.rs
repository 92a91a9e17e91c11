//! Linear-chirp separation.
//!
//! The record is cut into overlapping snippets `[t_k - delta, t_k + delta]`.
//! Each snippet is treated as a moment sequence `F(t_k - l/R)` and its
//! localized spectrum thresholded at a percentile, giving instantaneous
//! frequency estimates `Lambda = R x` at `t_k`. The resulting diagram is
//! clustered with DBSCAN and a line is fitted per cluster. Clusters whose
//! residual is too large (crossing chirps) are cut into time partitions,
//! refitted and the pieces merged back.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::filters::{KernelConfig, LowPassFilter};
use crate::multirec::greedy_match;
use crate::spectral::{eval_direct, wrap_angle, ZoomEvaluator};
use crate::synth::{unwrap_into_band, ChirpTrain, SampleSeries};
use crate::unirec::{parabolic_offset, partition_indices, percentile, SpectrumOperator};

/// Snippet centers and half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetPlan {
    /// Half-width in seconds.
    pub delta: f64,
    pub centers: Vec<f64>,
    /// Sampling rate in Hz.
    pub rate: f64,
    /// Kernel degree `floor(rate * delta)`.
    pub n: usize,
}

impl SnippetPlan {
    /// `count` centers spread evenly over `[0, window]`.
    pub fn equidistant(window: f64, delta: f64, count: usize, rate: f64) -> Result<Self> {
        if !(window > 0.0 && delta > 0.0 && rate > 0.0) {
            return config("window, delta and rate must be positive");
        }
        if count == 0 {
            return config("snippet count must be >= 1");
        }
        let n = (rate * delta + 1e-9).floor() as usize;
        if n < 2 {
            return config(format!("rate * delta = {} gives fewer than 2 moments", rate * delta));
        }
        let centers = if count == 1 {
            vec![0.5 * window]
        } else {
            (0..count).map(|k| window * k as f64 / (count - 1) as f64).collect()
        };
        Ok(SnippetPlan { delta, centers, rate, n })
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    /// Whether consecutive snippets overlap.
    pub fn overlapping(&self) -> bool {
        self.centers.windows(2).all(|w| w[1] - w[0] <= 2.0 * self.delta)
    }

    fn center_index(&self, k: usize) -> i64 {
        (self.centers[k] * self.rate).round() as i64
    }

    /// Moments `F(t_k - l/R)`, `|l| < n`; samples outside the record are
    /// zero and flag the snippet as truncated.
    pub fn snippet(&self, series: &SampleSeries, k: usize) -> Result<(SampleSeries, bool)> {
        let values = series.values();
        let c = self.center_index(k);
        let n = self.n as i64;
        let mut truncated = false;
        let moments: Vec<Complex64> = (-(n - 1)..n)
            .map(|l| {
                let i = c - l;
                if i < 0 || i >= values.len() as i64 {
                    truncated = true;
                    Complex64::new(0.0, 0.0)
                } else {
                    values[i as usize]
                }
            })
            .collect();
        Ok((SampleSeries::moments(self.n, moments)?, truncated))
    }
}

/// Settings of the snippet operator.
#[derive(Debug, Clone)]
pub struct SsoConfig {
    pub filter: LowPassFilter,
    /// Threshold percentile of `|sigma|` over the circle, or over the band
    /// window when a chirp-z zoom is used.
    pub percentile: f64,
    /// Minimal separation in rad/s.
    pub eta: f64,
    /// Peaks closer than `separation * eta` are merged.
    pub separation: f64,
    /// Frequency band `[lo, hi]` in rad/s; points outside are dropped.
    pub band: Option<(f64, f64)>,
    pub refine: bool,
}

impl SsoConfig {
    pub fn new(eta: f64) -> Result<Self> {
        Ok(SsoConfig {
            filter: LowPassFilter::bump(4)?,
            percentile: 99.0,
            eta,
            separation: 0.5,
            band: None,
            refine: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return config("eta must be positive");
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return config("percentile must lie in (0, 100]");
        }
        if !(self.separation > 0.0 && self.separation <= 1.0) {
            return config("separation fraction must lie in (0, 1]");
        }
        if let Some((lo, hi)) = self.band {
            if !(hi > lo) {
                return config("band must satisfy lo < hi");
            }
        }
        Ok(())
    }
}

/// One diagram point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsoPoint {
    pub t: f64,
    /// Instantaneous frequency estimate in rad/s.
    pub lambda: f64,
    /// `|sigma|` at the peak.
    pub weight: f64,
    pub snippet: usize,
}

/// All snippet outputs.
#[derive(Debug, Clone, Default)]
pub struct SsoDiagram {
    pub points: Vec<SsoPoint>,
    /// Snippets that reached past the record.
    pub truncated: Vec<usize>,
    pub thresholds: Vec<f64>,
}

enum Evaluation {
    Full(SpectrumOperator),
    Zoom { kernel: KernelConfig, zoom: ZoomEvaluator },
}

/// Snippet operator for one plan, with FFT plans built once.
pub struct SsoOperator {
    plan: SnippetPlan,
    cfg: SsoConfig,
    eval: Evaluation,
    grid_size: usize,
}

impl SsoOperator {
    pub fn new(plan: SnippetPlan, cfg: SsoConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = KernelConfig::new(plan.n, cfg.filter.clone())?;
        let grid_size = kernel.grid_size();
        let step = 2.0 * PI / grid_size as f64;
        let len = 2 * plan.n - 1;
        let mut eval = None;
        if let Some((lo, hi)) = cfg.band {
            let width = (hi - lo) / plan.rate;
            if width < 2.0 * PI {
                let start = ((wrap_angle(lo / plan.rate) + PI) / step).floor() as usize % grid_size;
                let count = (width / step).ceil() as usize + 2;
                let zoom = ZoomEvaluator::new(grid_size, start, count, len);
                if 3 * zoom.fft_len() < grid_size {
                    eval = Some(Evaluation::Zoom { kernel: kernel.clone(), zoom });
                }
            }
        }
        let eval = eval.unwrap_or_else(|| Evaluation::Full(SpectrumOperator::new(kernel)));
        Ok(SsoOperator { plan, cfg, eval, grid_size })
    }

    pub fn plan(&self) -> &SnippetPlan {
        &self.plan
    }

    /// Whether a chirp-z window replaces the full grid.
    pub fn zoomed(&self) -> bool {
        matches!(self.eval, Evaluation::Zoom { .. })
    }

    /// Complex spectrum values of a snippet and the grid angle of the first
    /// one: the whole grid from `-pi`, or the band window when zoomed.
    pub fn spectrum(&self, snippet: &SampleSeries) -> Result<(Vec<Complex64>, f64)> {
        match &self.eval {
            Evaluation::Full(op) => Ok((op.apply(snippet)?.values().to_vec(), -PI)),
            Evaluation::Zoom { kernel, zoom } => {
                let coeffs = kernel.filter_series(snippet.values());
                let step = 2.0 * PI / self.grid_size as f64;
                Ok((zoom.evaluate(&coeffs), -PI + step * zoom.start() as f64))
            }
        }
    }

    /// `(Lambda, weight)` pairs of one moment snippet and the threshold used.
    pub fn apply(&self, snippet: &SampleSeries) -> Result<(Vec<(f64, f64)>, f64)> {
        let step = 2.0 * PI / self.grid_size as f64;
        let sep_idx = (self.cfg.separation * self.cfg.eta / self.plan.rate / step).ceil() as usize;
        // (window values, x of the first value, circular, tau, coefficients)
        let (vals, x0, circular, tau, coeffs) = match &self.eval {
            Evaluation::Full(op) => {
                let ps = op.apply(snippet)?;
                let tau = percentile(&ps.magnitudes(), self.cfg.percentile)?;
                let coeffs = op.kernel().filter_series(snippet.values());
                (ps.values().to_vec(), -PI, true, tau, coeffs)
            }
            Evaluation::Zoom { kernel, zoom } => {
                // The threshold is taken over the band window only.
                let coeffs = kernel.filter_series(snippet.values());
                let vals = zoom.evaluate(&coeffs);
                let mags: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
                let tau = percentile(&mags, self.cfg.percentile)?;
                let x0 = -PI + step * zoom.start() as f64;
                (vals, x0, false, tau, coeffs)
            }
        };
        if !(tau > 0.0) {
            return Ok((Vec::new(), tau));
        }
        let mut mags: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
        let m = mags.len();
        if !circular {
            mags.push(0.0);
        }
        let clusters = partition_indices(&mags, tau, sep_idx);
        let mut out = Vec::with_capacity(clusters.len());
        for c in clusters {
            let j = c.peak;
            let mut x = x0 + step * j as f64;
            let mut weight = mags[j];
            if self.cfg.refine {
                let (l, r) = if circular {
                    (Some(mags[(j + m - 1) % m]), Some(mags[(j + 1) % m]))
                } else {
                    (j.checked_sub(1).map(|i| mags[i]), (j + 1 < m).then(|| mags[j + 1]))
                };
                if let (Some(l), Some(r)) = (l, r) {
                    let d = parabolic_offset(l, weight, r);
                    if d != 0.0 {
                        let v = eval_direct(&coeffs, x + d * step).norm();
                        if v >= weight {
                            x += d * step;
                            weight = v;
                        }
                    }
                }
            }
            let lambda = self.plan.rate * x;
            let lambda = match self.cfg.band {
                Some((lo, hi)) => {
                    let v = unwrap_into_band(lambda, lo, self.plan.rate);
                    if v > hi {
                        continue;
                    }
                    v
                }
                None => unwrap_into_band(lambda, 0.0, self.plan.rate),
            };
            out.push((lambda, weight));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok((out, tau))
    }

    /// The diagram over all snippets of `series`.
    pub fn diagram(&self, series: &SampleSeries) -> Result<SsoDiagram> {
        match series.rate() {
            Some(r) if (r - self.plan.rate).abs() <= 1e-9 * r => {}
            _ => return config("series rate differs from the snippet plan"),
        }
        let per: Vec<(Vec<SsoPoint>, bool, f64)> = (0..self.plan.count())
            .into_par_iter()
            .map(|k| {
                let (snip, truncated) = self.plan.snippet(series, k)?;
                let (peaks, tau) = self.apply(&snip)?;
                let t = self.plan.centers[k];
                let pts = peaks.into_iter().map(|(lambda, weight)| SsoPoint { t, lambda, weight, snippet: k }).collect();
                Ok((pts, truncated, tau))
            })
            .collect::<Result<_>>()?;
        let mut d = SsoDiagram::default();
        for (k, (pts, truncated, tau)) in per.into_iter().enumerate() {
            d.points.extend(pts);
            if truncated {
                d.truncated.push(k);
            }
            d.thresholds.push(tau);
        }
        Ok(d)
    }
}

/// Snippet operator output at one center time.
pub fn sso_snippet(series: &SampleSeries, t_center: f64, plan: &SnippetPlan, cfg: &SsoConfig) -> Result<Vec<(f64, f64)>> {
    let mut p = plan.clone();
    p.centers = vec![t_center];
    let op = SsoOperator::new(p, cfg.clone())?;
    let (snip, _) = op.plan().snippet(series, 0)?;
    Ok(op.apply(&snip)?.0)
}

/// Diagram of all snippets.
pub fn build_diagram(series: &SampleSeries, plan: &SnippetPlan, cfg: &SsoConfig) -> Result<SsoDiagram> {
    SsoOperator::new(plan.clone(), cfg.clone())?.diagram(series)
}

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

fn within(a: [f64; 2], b: [f64; 2], r2: f64) -> bool {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy <= r2
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (a, b) = (find(parent, a), find(parent, b));
    if a != b {
        parent[a.max(b)] = a.min(b);
    }
}

/// Density clustering: labels `1..=P`, [`NOISE`] otherwise. A point counts
/// itself among its neighbours. Clusters are numbered by their lowest core
/// point and a border point joins the lowest-numbered cluster it touches,
/// which is what a breadth-first scan in index order produces.
pub fn dbscan(points: &[[f64; 2]], radius: f64, min_neighbors: usize) -> Result<Vec<i32>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return config("dbscan radius must be positive");
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return config("dbscan points must be finite");
    }
    // Cells of side r / sqrt(2): points sharing a cell are neighbours.
    let side = radius / std::f64::consts::SQRT_2;
    let key = |p: [f64; 2]| ((p[0] / side).floor() as i64, (p[1] / side).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut offsets = Vec::new();
    for dx in -2i64..=2 {
        for dy in -2i64..=2 {
            let gx = (dx.abs() - 1).max(0) as f64;
            let gy = (dy.abs() - 1).max(0) as f64;
            if (gx * gx + gy * gy) * side * side <= radius * radius {
                offsets.push((dx, dy));
            }
        }
    }
    let cells = &cells;
    let near = |c: (i64, i64)| offsets.iter().filter_map(move |&(dx, dy)| cells.get(&(c.0 + dx, c.1 + dy)));
    let r2 = radius * radius;

    let core: Vec<bool> = (0..points.len())
        .map(|i| {
            let c = key(points[i]);
            let own = cells[&c].len();
            if own >= min_neighbors {
                return true;
            }
            let mut count = own;
            for &(dx, dy) in offsets.iter().filter(|&&o| o != (0, 0)) {
                let Some(v) = cells.get(&(c.0 + dx, c.1 + dy)) else { continue };
                for &j in v {
                    if within(points[i], points[j], r2) {
                        count += 1;
                        if count >= min_neighbors {
                            return true;
                        }
                    }
                }
            }
            count >= min_neighbors
        })
        .collect();

    let mut parent: Vec<usize> = (0..points.len()).collect();
    let mut keys: Vec<&(i64, i64)> = cells.keys().collect();
    keys.sort_unstable();
    for &c in &keys {
        let a: Vec<usize> = cells[c].iter().copied().filter(|&i| core[i]).collect();
        if a.is_empty() {
            continue;
        }
        for w in a.windows(2) {
            union(&mut parent, w[0], w[1]);
        }
        for &(dx, dy) in &offsets {
            let other = (c.0 + dx, c.1 + dy);
            if other <= *c {
                continue;
            }
            let Some(v) = cells.get(&other) else { continue };
            if find(&mut parent, a[0]) == v.iter().find(|&&j| core[j]).map_or(usize::MAX, |&j| find(&mut parent, j)) {
                continue;
            }
            'pairs: for &i in &a {
                for &j in v.iter().filter(|&&j| core[j]) {
                    if within(points[i], points[j], r2) {
                        union(&mut parent, i, j);
                        break 'pairs;
                    }
                }
            }
        }
    }

    let mut labels = vec![NOISE; points.len()];
    let mut next = 0;
    let mut root_label: HashMap<usize, i32> = HashMap::new();
    for i in 0..points.len() {
        if core[i] {
            let r = find(&mut parent, i);
            labels[i] = *root_label.entry(r).or_insert_with(|| {
                next += 1;
                next
            });
        }
    }
    for i in 0..points.len() {
        if core[i] {
            continue;
        }
        let best = near(key(points[i]))
            .flat_map(|v| v.iter())
            .filter(|&&j| core[j] && within(points[i], points[j], r2))
            .map(|&j| labels[j])
            .min();
        if let Some(l) = best {
            labels[i] = l;
        }
    }
    Ok(labels)
}

/// Quadratic-time breadth-first reference for [`dbscan`].
pub fn dbscan_reference(points: &[[f64; 2]], radius: f64, min_neighbors: usize) -> Vec<i32> {
    let r2 = radius * radius;
    let neighbors = |i: usize| -> Vec<usize> { (0..points.len()).filter(|&j| within(points[i], points[j], r2)).collect() };
    let mut labels = vec![0i32; points.len()];
    let mut cluster = 0;
    for i in 0..points.len() {
        if labels[i] != 0 {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_neighbors {
            labels[i] = NOISE;
            continue;
        }
        cluster += 1;
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = nb.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
                continue;
            }
            if labels[j] != 0 {
                continue;
            }
            labels[j] = cluster;
            let nj = neighbors(j);
            if nj.len() >= min_neighbors {
                queue.extend(nj);
            }
        }
    }
    labels
}

/// How an estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Clean,
    CrossoverRefined,
    Rejected,
}

impl EstimateStatus {
    pub fn name(self) -> &'static str {
        match self {
            EstimateStatus::Clean => "clean",
            EstimateStatus::CrossoverRefined => "crossover_refined",
            EstimateStatus::Rejected => "rejected",
        }
    }
}

/// One linear chirp segment: IF `omega + slope (t - gamma)` on
/// `[gamma, gamma + duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpEstimate {
    pub omega: f64,
    /// Half the frequency excursion, signed like the slope.
    pub bandwidth: f64,
    pub duration: f64,
    pub gamma: f64,
    pub slope: f64,
    /// RMS distance of the cluster points to the fitted line.
    pub rmse: f64,
    pub status: EstimateStatus,
}

impl ChirpEstimate {
    pub fn end(&self) -> f64 {
        self.gamma + self.duration
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.gamma && t <= self.end()
    }

    pub fn inst_freq(&self, t: f64) -> f64 {
        self.omega + self.slope * (t - self.gamma)
    }
}

/// DBSCAN radius/density and the number of refinement partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub radius: f64,
    pub min_neighbors: usize,
    pub partitions: usize,
}

/// Least-squares line through the heavier half of the points.
pub fn fit_segment(points: &[SsoPoint]) -> Option<ChirpEstimate> {
    let mut ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b].weight.total_cmp(&points[a].weight).then(points[a].t.total_cmp(&points[b].t)).then(a.cmp(&b))
    });
    let mut top: Vec<&SsoPoint> = order[..points.len().div_ceil(2)].iter().map(|&i| &points[i]).collect();
    let distinct = |v: &[&SsoPoint]| v.iter().any(|p| p.t != v[0].t);
    if !distinct(&top) {
        top = points.iter().collect();
    }
    let m = top.len() as f64;
    let mt = top.iter().map(|p| p.t).sum::<f64>() / m;
    let my = top.iter().map(|p| p.lambda).sum::<f64>() / m;
    let sxx: f64 = top.iter().map(|p| (p.t - mt).powi(2)).sum();
    let sxy: f64 = top.iter().map(|p| (p.t - mt) * (p.lambda - my)).sum();
    let slope = sxy / sxx;
    let gamma = ts[0];
    let duration = ts[ts.len() - 1] - gamma;
    let omega = my + slope * (gamma - mt);
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.lambda), b.max(p.lambda)));
    let bandwidth = slope.signum() * (hi - lo) / 2.0;
    let rmse = (points.iter().map(|p| (p.lambda - (omega + slope * (p.t - gamma))).powi(2)).sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Some(ChirpEstimate { omega, bandwidth, duration, gamma, slope, rmse, status: EstimateStatus::Clean })
}

/// Settings of the whole separation pipeline.
#[derive(Debug, Clone)]
pub struct SeparationConfig {
    pub sso: SsoConfig,
    /// Snippet half-width in seconds.
    pub delta: f64,
    /// Number of snippets `D`.
    pub snippets: usize,
    /// Receiver bandwidth in rad/s; scales the frequency axis.
    pub b_rec: f64,
    /// First-pass density; defaults to `D / 2`.
    pub d1: Option<usize>,
    /// Second-pass density; defaults to `D / 100`.
    pub d2: Option<usize>,
    /// Refinement partitions `M`.
    pub partitions: usize,
    /// Clusters with a larger line residual (rad/s) are refined; defaults
    /// to `eta / 4`. Refined pieces are kept up to a residual of `eta`.
    pub rmse_limit: Option<f64>,
    /// Relative slope tolerance when merging refined pieces.
    pub merge_tolerance: f64,
    /// Snippets whose strongest point falls below this fraction of the
    /// cluster median are weak; see [`split_weak_gaps`].
    pub weak_fraction: f64,
}

impl SeparationConfig {
    pub fn new(eta: f64, b_rec: f64) -> Result<Self> {
        Ok(SeparationConfig {
            sso: SsoConfig::new(eta)?,
            delta: 2e-6,
            snippets: 2500,
            b_rec,
            d1: None,
            d2: None,
            partitions: 8,
            rmse_limit: None,
            merge_tolerance: 0.25,
            weak_fraction: 0.5,
        })
    }

    pub fn eta(&self) -> f64 {
        self.sso.eta
    }

    pub fn rmse_limit(&self) -> f64 {
        self.rmse_limit.unwrap_or(0.25 * self.sso.eta)
    }

    pub fn d1(&self) -> usize {
        self.d1.unwrap_or(self.snippets / 2).max(1)
    }

    pub fn d2(&self) -> usize {
        self.d2.unwrap_or(self.snippets / 100).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.sso.validate()?;
        if !(self.b_rec > 0.0) {
            return config("receiver bandwidth must be positive");
        }
        if self.partitions < 2 {
            return config("refinement needs at least 2 partitions");
        }
        if !(self.weak_fraction >= 0.0 && self.weak_fraction < 1.0) {
            return config("weak fraction must lie in [0, 1)");
        }
        if !(self.rmse_limit() > 0.0) || !(self.merge_tolerance > 0.0) {
            return config("rmse limit and merge tolerance must be positive");
        }
        Ok(())
    }
}

/// Output of the pipeline.
#[derive(Debug, Clone, Default)]
pub struct Separation {
    pub diagram: SsoDiagram,
    /// Second-pass cluster label per diagram point (0 when dropped in the
    /// first pass).
    pub labels: Vec<i32>,
    pub estimates: Vec<ChirpEstimate>,
    /// Clusters or pieces that failed the fit or the residual check.
    pub rejected: usize,
}

fn scaled(points: &[SsoPoint], window: f64, b_rec: f64) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.t / window, p.lambda / b_rec]).collect()
}

fn group(points: &[SsoPoint], labels: &[i32]) -> Vec<Vec<SsoPoint>> {
    let p = labels.iter().cloned().max().unwrap_or(0).max(0) as usize;
    let mut out = vec![Vec::new(); p];
    for (pt, &l) in points.iter().zip(labels) {
        if l > 0 {
            out[l as usize - 1].push(*pt);
        }
    }
    out
}

/// Clusters the diagram and fits one line per cluster, refining clusters
/// with a large residual. `window` is the record length in seconds.
pub fn estimate_components(diagram: &SsoDiagram, window: f64, cfg: &SeparationConfig) -> Result<Separation> {
    cfg.validate()?;
    let pts = &diagram.points;
    let mut out = Separation { diagram: diagram.clone(), labels: vec![0; pts.len()], ..Default::default() };
    if pts.is_empty() {
        return Ok(out);
    }
    let first = dbscan(&scaled(pts, window, cfg.b_rec), 1.0, cfg.d1())?;
    // Keep the most populated first-pass cluster.
    let mut sizes: HashMap<i32, usize> = HashMap::new();
    for &l in first.iter().filter(|&&l| l > 0) {
        *sizes.entry(l).or_default() += 1;
    }
    let Some(keep) = sizes.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| *l) else {
        return Ok(out);
    };
    let idx: Vec<usize> = (0..pts.len()).filter(|&i| first[i] == keep).collect();
    let band: Vec<SsoPoint> = idx.iter().map(|&i| pts[i]).collect();
    let second = dbscan(&scaled(&band, window, cfg.b_rec), cfg.eta() / cfg.b_rec, cfg.d2())?;
    for (&i, &l) in idx.iter().zip(&second) {
        out.labels[i] = l;
    }
    let gap = cfg.eta() / cfg.b_rec * window;
    let segments = group(&band, &second).into_iter().flat_map(|c| split_weak_gaps(&c, gap, cfg.weak_fraction));
    for cluster in segments {
        let Some(est) = fit_segment(&cluster) else {
            out.rejected += 1;
            continue;
        };
        if est.rmse > cfg.rmse_limit() {
            let params = ClusterParams { radius: cfg.eta(), min_neighbors: cfg.d2(), partitions: cfg.partitions };
            let (refined, rejected) = refine_crossover(&cluster, window, cfg, &params)?;
            out.estimates.extend(refined);
            out.rejected += rejected;
        } else {
            out.estimates.push(est);
        }
    }
    out.estimates.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.omega.total_cmp(&b.omega)));
    Ok(out)
}

/// Splits a cluster where its per-snippet peak weight stays below
/// `fraction` times the median for longer than `min_gap` seconds, as
/// happens between consecutive pulses whose edge tails touch. Points are
/// assigned to the nearest strong run in time.
pub fn split_weak_gaps(points: &[SsoPoint], min_gap: f64, fraction: f64) -> Vec<Vec<SsoPoint>> {
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    for p in &sorted {
        match peaks.last_mut() {
            Some(last) if last.0 == p.t => last.1 = last.1.max(p.weight),
            _ => peaks.push((p.t, p.weight)),
        }
    }
    if peaks.len() < 2 {
        return vec![points.to_vec()];
    }
    let mut w: Vec<f64> = peaks.iter().map(|p| p.1).collect();
    let mid = w.len() / 2;
    let median = *w.select_nth_unstable_by(mid, f64::total_cmp).1;
    let strong: Vec<f64> = peaks.iter().filter(|p| p.1 >= fraction * median).map(|p| p.0).collect();
    let mut runs: Vec<(f64, f64)> = Vec::new();
    for &t in &strong {
        match runs.last_mut() {
            Some(r) if t - r.1 <= min_gap => r.1 = t,
            _ => runs.push((t, t)),
        }
    }
    if runs.len() < 2 {
        return vec![points.to_vec()];
    }
    let mut out = vec![Vec::new(); runs.len()];
    for p in points {
        let dist = |r: &(f64, f64)| (r.0 - p.t).max(p.t - r.1).max(0.0);
        let k = (0..runs.len()).min_by(|&a, &b| dist(&runs[a]).total_cmp(&dist(&runs[b]))).unwrap_or(0);
        out[k].push(*p);
    }
    out
}

/// Cuts a cluster into `partitions` time slices, clusters and fits each
/// slice, and merges pieces lying on a common line. Returns the merged
/// estimates and the number of rejected pieces.
pub fn refine_crossover(
    points: &[SsoPoint],
    window: f64,
    cfg: &SeparationConfig,
    params: &ClusterParams,
) -> Result<(Vec<ChirpEstimate>, usize)> {
    if params.partitions < 2 {
        return config("refinement needs at least 2 partitions");
    }
    if points.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let (t0, t1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.t), b.max(p.t)));
    let width = (t1 - t0) / params.partitions as f64;
    let mut pieces = Vec::new();
    let mut rejected = 0;
    for m in 0..params.partitions {
        let lo = t0 + width * m as f64;
        let hi = lo + width;
        let part: Vec<SsoPoint> = points
            .iter()
            .filter(|p| p.t >= lo && (p.t < hi || (m + 1 == params.partitions && p.t <= t1)))
            .copied()
            .collect();
        if part.is_empty() {
            continue;
        }
        let labels = dbscan(&scaled(&part, window, cfg.b_rec), params.radius / cfg.b_rec, params.min_neighbors)?;
        for sub in group(&part, &labels) {
            match fit_segment(&sub) {
                Some(e) if e.rmse <= cfg.eta() => pieces.push((e, sub)),
                _ => rejected += 1,
            }
        }
    }
    // Merge to a fixed point, refitting each merged group on its points.
    loop {
        let n = pieces.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                if mergeable(&pieces[i].0, &pieces[j].0, cfg.eta(), cfg.merge_tolerance, window)
                    && find(&mut parent, i) != find(&mut parent, j)
                {
                    union(&mut parent, i, j);
                    any = true;
                }
            }
        }
        if !any {
            break;
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = find(&mut parent, i);
            groups[r].push(i);
        }
        let mut next = Vec::new();
        for g in groups.into_iter().filter(|g| !g.is_empty()) {
            if g.len() == 1 {
                next.push(pieces[g[0]].clone());
                continue;
            }
            let pts: Vec<SsoPoint> = g.iter().flat_map(|&i| pieces[i].1.iter().copied()).collect();
            match trimmed_fit(&pts, 0.5 * cfg.eta()) {
                Some(e) => next.push((e, pts)),
                None => rejected += 1,
            }
        }
        pieces = next;
    }
    let mut out: Vec<ChirpEstimate> =
        pieces.into_iter().map(|(e, _)| ChirpEstimate { status: EstimateStatus::CrossoverRefined, ..e }).collect();
    out.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.omega.total_cmp(&b.omega)));
    Ok((out, rejected))
}

/// Line fit, then refit without the points farther than `limit` from it.
fn trimmed_fit(points: &[SsoPoint], limit: f64) -> Option<ChirpEstimate> {
    let e = fit_segment(points)?;
    let kept: Vec<SsoPoint> = points.iter().filter(|p| (p.lambda - e.inst_freq(p.t)).abs() <= limit).copied().collect();
    fit_segment(&kept).or(Some(e))
}

fn mergeable(a: &ChirpEstimate, b: &ChirpEstimate, eta: f64, tol: f64, window: f64) -> bool {
    let scale = a.slope.abs().max(b.slope.abs()).max(eta / window);
    if (a.slope - b.slope).abs() > tol * scale {
        return false;
    }
    let tm = 0.5 * (a.gamma + 0.5 * a.duration + b.gamma + 0.5 * b.duration);
    (a.inst_freq(tm) - b.inst_freq(tm)).abs() <= eta
}

/// Merges segments whose slopes agree within `tol` (relative) and whose
/// lines agree within `eta` midway between them, by averaging. Repeats
/// until no pair qualifies, so the result is a fixed point.
pub fn merge_pieces(pieces: &[ChirpEstimate], eta: f64, tol: f64, window: f64) -> Vec<ChirpEstimate> {
    let mut cur = pieces.to_vec();
    loop {
        let n = cur.len();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                if mergeable(&cur[i], &cur[j], eta, tol, window) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[b.max(a)] = a.min(b);
                        any = true;
                    }
                }
            }
        }
        if !any {
            cur.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.omega.total_cmp(&b.omega)));
            return cur;
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = find(&mut parent, i);
            groups[r].push(i);
        }
        cur = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                if g.len() == 1 {
                    return cur[g[0]];
                }
                let k = g.len() as f64;
                let slope = g.iter().map(|&i| cur[i].slope).sum::<f64>() / k;
                let t_ref = g.iter().map(|&i| cur[i].gamma + 0.5 * cur[i].duration).sum::<f64>() / k;
                let f_ref = g.iter().map(|&i| cur[i].inst_freq(t_ref)).sum::<f64>() / k;
                let gamma = g.iter().map(|&i| cur[i].gamma).fold(f64::INFINITY, f64::min);
                let end = g.iter().map(|&i| cur[i].end()).fold(f64::NEG_INFINITY, f64::max);
                let duration = end - gamma;
                ChirpEstimate {
                    omega: f_ref + slope * (gamma - t_ref),
                    bandwidth: slope * duration / 2.0,
                    duration,
                    gamma,
                    slope,
                    rmse: g.iter().map(|&i| cur[i].rmse).sum::<f64>() / k,
                    status: EstimateStatus::CrossoverRefined,
                }
            })
            .collect();
    }
}

/// Full pipeline on a sampled record.
pub fn separate(series: &SampleSeries, cfg: &SeparationConfig) -> Result<Separation> {
    cfg.validate()?;
    let rate = series.rate().ok_or_else(|| Error::Config("chirp separation needs a time series".into()))?;
    let window = (series.len() - 1) as f64 / rate;
    let plan = SnippetPlan::equidistant(window, cfg.delta, cfg.snippets, rate)?;
    let diagram = build_diagram(series, &plan, &cfg.sso)?;
    estimate_components(&diagram, window, cfg)
}

/// Detection count and relative IF error against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpScore {
    pub total: usize,
    pub detected: usize,
    /// `sqrt(sum_k sum_j ((phi' - phi'_hat) / phi')^2 / D)` over the snippet
    /// times where a truth pulse and its matched estimate are both active.
    pub rmse: f64,
}

/// Matches each truth pulse to at most one estimate (mean IF error over
/// the common snippet times at most `eta`, closest first) and scores them.
pub fn evaluate(truth: &ChirpTrain, estimates: &[ChirpEstimate], plan: &SnippetPlan, eta: f64) -> ChirpScore {
    let pulses = truth.pulses();
    let est: Vec<&ChirpEstimate> = estimates.iter().filter(|e| e.status != EstimateStatus::Rejected).collect();
    let common = |p: &crate::synth::Pulse, e: &ChirpEstimate| -> Vec<f64> {
        plan.centers.iter().copied().filter(|&t| p.active(t) && e.covers(t)).collect()
    };
    let dist: Vec<Vec<f64>> = pulses
        .iter()
        .map(|p| {
            est.iter()
                .map(|e| {
                    let ts = common(p, e);
                    if ts.is_empty() {
                        return f64::INFINITY;
                    }
                    ts.iter().map(|&t| (p.inst_freq(t) - e.inst_freq(t)).abs()).sum::<f64>() / ts.len() as f64
                })
                .collect()
        })
        .collect();
    let m = greedy_match(&dist, eta);
    let mut sum = 0.0;
    for &(i, j, _) in &m {
        for t in common(&pulses[i], est[j]) {
            let f = pulses[i].inst_freq(t);
            sum += ((f - est[j].inst_freq(t)) / f).powi(2);
        }
    }
    ChirpScore { total: pulses.len(), detected: m.len(), rmse: (sum / plan.count() as f64).sqrt() }
}
