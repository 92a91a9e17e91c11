//! Classical comparators: Prony, MUSIC and ESPRIT.
//!
//! All three read a moment series `mu(l)`, `|l| < n`, re-indexed as
//! `y_m = mu(m - n + 1)`, `m = 0..2n-1`, so that `y_m = sum_j c_j z_j^m` with
//! nodes `z_j = e^{-i lambda_j}`. Frequencies are reported as
//! `lambda_j = -arg z_j`; amplitudes come from a least-squares fit on the
//! original centered indices.

use std::f64::consts::PI;

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::{self, from_fn, thin_svd};
use crate::spectral::{grid_point, wrap_angle};
use crate::synth::SampleSeries;
use crate::unirec::parabolic_offset;

/// Which classical method produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Prony,
    Music,
    Esprit,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Prony => "prony",
            Method::Music => "music",
            Method::Esprit => "esprit",
        }
    }
}

/// Window length and rank tolerance of the Hankel (trajectory) matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HankelSpec {
    pub window_length: usize,
    pub series_length: usize,
    pub rank_tolerance: f64,
}

impl HankelSpec {
    /// `L = floor(len / 3)` clamped to `[k, len - k + 1]`.
    pub fn default_for(series_length: usize, k: usize) -> Self {
        let k = k.max(1);
        let hi = (series_length + 1).saturating_sub(k).max(k);
        let l = (series_length / 3).clamp(k, hi);
        HankelSpec { window_length: l, series_length, rank_tolerance: 1e-2 }
    }

    pub fn validate(&self, k: Option<usize>) -> Result<()> {
        let (l, n) = (self.window_length, self.series_length);
        if l < 1 || l > n {
            return config(format!("window length {l} outside [1, {n}]"));
        }
        if let Some(k) = k {
            if l < k || l + k > n + 1 {
                return config(format!("window length {l} violates K <= L <= n - K + 1 for K = {k}, n = {n}"));
            }
        }
        if !(self.rank_tolerance > 0.0 && self.rank_tolerance < 1.0) {
            return config("rank tolerance must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Nodes, frequencies and amplitudes from one classical method.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimate {
    pub method: Method,
    pub nodes: Vec<Complex64>,
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
}

impl BaselineEstimate {
    fn from_nodes(method: Method, series: &SampleSeries, mut nodes: Vec<Complex64>) -> Result<Self> {
        nodes.sort_by(|a, b| (-a.arg()).total_cmp(&-b.arg()));
        let frequencies: Vec<f64> = nodes.iter().map(|z| wrap_angle(-z.arg())).collect();
        let amplitudes = if frequencies.is_empty() {
            Vec::new()
        } else {
            linalg::vandermonde_amplitudes(series, &frequencies)?
        };
        Ok(BaselineEstimate { method, nodes, frequencies, amplitudes })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

fn moments(series: &SampleSeries) -> Result<&[Complex64]> {
    if series.n().is_none() {
        return Err(Error::Dimension("baselines need a moment series".into()));
    }
    Ok(series.values())
}

fn hankel(y: &[Complex64], l: usize) -> Mat<Complex64> {
    from_fn(l, y.len() - l + 1, |i, j| y[i + j])
}

/// Prony's method: least-squares linear prediction with monic polynomial,
/// roots by companion-matrix eigenvalues.
pub fn prony(series: &SampleSeries, k: usize) -> Result<BaselineEstimate> {
    let y = moments(series)?;
    let n = y.len();
    if k == 0 || n < 2 * k {
        return config(format!("Prony needs at least 2K = {} samples, got {n}", 2 * k));
    }
    let rows = n - k;
    let a = from_fn(rows, k, |l, j| y[l + j]);
    let b: Vec<Complex64> = (0..rows).map(|l| -y[l + k]).collect();
    let c = linalg::lstsq(a.as_ref(), &b)?;
    // Companion matrix of z^K + c_{K-1} z^{K-1} + ... + c_0.
    let comp = from_fn(k, k, |i, j| {
        if j == k - 1 {
            -c[i]
        } else if i == j + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let nodes = linalg::eigenvalues(comp.as_ref())?;
    BaselineEstimate::from_nodes(Method::Prony, series, nodes)
}

/// Noise-space correlation `N_L(lambda) = ||U_2^H a(lambda)|| / sqrt(L)` on
/// the grid `lambda_j = -pi + 2 pi j / grid_size`, where
/// `a(lambda)_l = e^{-i l lambda}`.
pub fn music_correlation(series: &SampleSeries, spec: &HankelSpec, k: usize, grid_size: usize) -> Result<Vec<f64>> {
    let y = moments(series)?;
    spec.validate(Some(k))?;
    let l = spec.window_length;
    if grid_size < l {
        return config("MUSIC grid must have at least L points");
    }
    let svd = thin_svd(hankel(y, l).as_ref())?;
    let mut energy = vec![0.0; grid_size];
    let fft = FftPlanner::new().plan_fft_forward(grid_size);
    for col in 0..k.min(svd.u.ncols()) {
        let mut buf = vec![Complex64::new(0.0, 0.0); grid_size];
        for (r, b) in buf.iter_mut().enumerate().take(l) {
            let u = svd.u[(r, col)].conj();
            *b = if r % 2 == 1 { -u } else { u };
        }
        fft.process(&mut buf);
        for (e, v) in energy.iter_mut().zip(&buf) {
            *e += v.norm_sqr();
        }
    }
    Ok(energy.iter().map(|e| ((l as f64 - e).max(0.0) / l as f64).sqrt()).collect())
}

/// `N_L` at arbitrary frequencies.
pub fn music_correlation_at(series: &SampleSeries, spec: &HankelSpec, k: usize, lambdas: &[f64]) -> Result<Vec<f64>> {
    let y = moments(series)?;
    spec.validate(Some(k))?;
    let l = spec.window_length;
    let svd = thin_svd(hankel(y, l).as_ref())?;
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            // Residual of a(lambda) after projecting onto the signal space.
            let a: Vec<Complex64> = (0..l).map(|r| Complex64::from_polar(1.0, -(r as f64) * lambda)).collect();
            let mut res = a.clone();
            for col in 0..k.min(svd.u.ncols()) {
                let p: Complex64 = (0..l).map(|r| svd.u[(r, col)].conj() * a[r]).sum();
                for (r, v) in res.iter_mut().enumerate() {
                    *v -= svd.u[(r, col)] * p;
                }
            }
            crate::synth::norm(&res) / (l as f64).sqrt()
        })
        .collect())
}

/// MUSIC: the `k` deepest local minima of the noise-space correlation.
pub fn music(series: &SampleSeries, spec: &HankelSpec, k: usize, grid_size: usize) -> Result<BaselineEstimate> {
    let corr = music_correlation(series, spec, k, grid_size)?;
    let g = corr.len();
    let mut minima: Vec<usize> = (0..g)
        .filter(|&j| {
            let l = corr[(j + g - 1) % g];
            let r = corr[(j + 1) % g];
            corr[j] <= l && corr[j] < r
        })
        .collect();
    if minima.len() < k {
        return config(format!(
            "MUSIC grid of {g} points resolves only {} minima, {k} requested; grid too coarse",
            minima.len()
        ));
    }
    minima.sort_by(|&a, &b| corr[a].total_cmp(&corr[b]).then(a.cmp(&b)));
    minima.truncate(k);
    let step = 2.0 * PI / g as f64;
    let nodes: Vec<Complex64> = minima
        .iter()
        .map(|&j| {
            let sq = |i: usize| corr[i % g].powi(2);
            // Parabolic refinement of the minimum of N_L^2 (negated to reuse the max rule).
            let d = parabolic_offset(-sq(j + g - 1), -sq(j), -sq(j + 1));
            let lambda = wrap_angle(grid_point(j, g) + d * step);
            Complex64::from_polar(1.0, -lambda)
        })
        .collect();
    BaselineEstimate::from_nodes(Method::Music, series, nodes)
}

/// Imaging function `J_L = 1 / N_L`.
pub fn music_imaging(correlation: &[f64]) -> Vec<f64> {
    correlation.iter().map(|&c| if c > 0.0 { 1.0 / c } else { f64::INFINITY }).collect()
}

/// ESPRIT with rank chosen by `sigma_k >= tau * sigma_1`, or fixed when
/// `rank` is given.
pub fn esprit(series: &SampleSeries, spec: &HankelSpec, rank: Option<usize>) -> Result<BaselineEstimate> {
    let y = moments(series)?;
    spec.validate(rank)?;
    let svd = thin_svd(hankel(y, spec.window_length).as_ref())?;
    let s1 = svd.s.first().copied().unwrap_or(0.0);
    let k = match rank {
        Some(k) => k,
        None if s1 > 0.0 => svd.s.iter().take_while(|&&s| s >= spec.rank_tolerance * s1).count(),
        None => 0,
    };
    if k == 0 {
        return Ok(BaselineEstimate { method: Method::Esprit, nodes: vec![], frequencies: vec![], amplitudes: vec![] });
    }
    let m = svd.v.nrows();
    if k > svd.v.ncols() || m < k + 1 {
        return config(format!("rank {k} exceeds the Hankel dimensions"));
    }
    let w0 = svd.v.as_ref().subrows(0, m - 1).subcols(0, k);
    let w1 = svd.v.as_ref().subrows(1, m - 1).subcols(0, k);
    // F = W1^H W0 (W0^H W0)^{-1}; solve G F^H = (W1^H W0)^H with G Hermitian.
    let g = w0.adjoint() * w0;
    let m1 = w1.adjoint() * w0;
    let gs = thin_svd(g.as_ref())?;
    let gmax = gs.s.iter().cloned().fold(0.0, f64::max);
    let gmin = gs.s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(gmin > linalg::RANK_EPS * gmax) {
        return Err(Error::IllConditioned("shifted signal subspace is rank deficient".into()));
    }
    let fh = g.partial_piv_lu().solve(m1.adjoint().to_owned());
    let f = fh.adjoint().to_owned();
    let nodes = linalg::eigenvalues(f.as_ref())?;
    BaselineEstimate::from_nodes(Method::Esprit, series, nodes)
}
