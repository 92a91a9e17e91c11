//! Smooth low-pass filters and the localized trigonometric kernel.
//!
//! The filter `H` equals 1 on `[-1/2, 1/2]`, vanishes outside `(-1, 1)` and
//! ramps down in between through the normalized integral of the bump
//! `h(s) = exp(-1/(1 - s^2))`. Derivatives are computed exactly by
//! truncated Taylor arithmetic, so the cached L1 norms only carry
//! quadrature error.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{config, Result};
use crate::quad::integrate;
use crate::spectral::{GridEvaluator, PowerSpectrum};

const MAX_ORDER: usize = 24;

/// Truncated Taylor series `a_0 + a_1 e + ... + a_k e^k`.
#[derive(Clone, Copy)]
struct Jet {
    c: [f64; MAX_ORDER + 1],
    len: usize,
}

impl Jet {
    fn variable(x: f64, len: usize) -> Self {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = x;
        if len > 1 {
            c[1] = 1.0;
        }
        Jet { c, len }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        for k in 0..self.len {
            c[k] = (0..=k).map(|i| self.c[i] * o.c[k - i]).sum();
        }
        Jet { c, len: self.len }
    }

    fn recip(&self) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = 1.0 / self.c[0];
        for k in 1..self.len {
            let s: f64 = (1..=k).map(|i| self.c[i] * c[k - i]).sum();
            c[k] = -s * c[0];
        }
        Jet { c, len: self.len }
    }

    fn exp(&self) -> Jet {
        let mut c = [0.0; MAX_ORDER + 1];
        c[0] = self.c[0].exp();
        for k in 1..self.len {
            let s: f64 = (1..=k).map(|i| i as f64 * self.c[i] * c[k - i]).sum();
            c[k] = s / k as f64;
        }
        Jet { c, len: self.len }
    }

    fn scale_add(&self, a: f64, b: f64) -> Jet {
        let mut out = *self;
        for v in out.c.iter_mut().take(self.len) {
            *v *= a;
        }
        out.c[0] += b;
        out
    }

    fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k] * fact
    }
}

/// k-th derivative of the bump `exp(-1/(1-s^2))` on `(-1, 1)`.
pub(crate) fn bump_derivative(k: usize, s: f64) -> f64 {
    if s <= -1.0 || s >= 1.0 {
        return 0.0;
    }
    assert!(k <= MAX_ORDER, "derivative order too high");
    let x = Jet::variable(s, k + 1);
    let u = x.mul(&x).scale_add(-1.0, 1.0);
    u.recip().scale_add(-1.0, 0.0).exp().derivative(k)
}

fn bump(s: f64) -> f64 {
    if s <= -1.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// C-infinity low-pass filter with cached derivative norms.
#[derive(Debug, Clone)]
pub struct LowPassFilter {
    order: usize,
    z: f64,
    h_l1: f64,
    h2_l1: f64,
    hs_l1: f64,
}

impl LowPassFilter {
    /// Builds the bump-transition filter and caches `||H||_1`, `||H''||_1`
    /// and `||H^(S)||_1` for smoothness order `S`.
    pub fn bump(order: usize) -> Result<Self> {
        if order < 2 {
            return config(format!("filter smoothness order must be >= 2, got {order}"));
        }
        if order > MAX_ORDER {
            return config(format!("filter smoothness order must be <= {MAX_ORDER}, got {order}"));
        }
        let z = integrate(bump, -1.0, 1.0, 1e-15, 0.0).value;
        let mut f = LowPassFilter { order, z, h_l1: 0.0, h2_l1: 0.0, hs_l1: 0.0 };
        f.h_l1 = 2.0 * integrate(|t| f.eval(t), 0.0, 1.0, 1e-13, 0.0).value;
        f.h2_l1 = f.deriv_l1(2);
        f.hs_l1 = f.deriv_l1(order);
        Ok(f)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Normalizing integral of the bump over `[-1, 1]`.
    pub fn bump_mass(&self) -> f64 {
        self.z
    }

    pub fn h_l1(&self) -> f64 {
        self.h_l1
    }

    /// Cached `||H''||_1`.
    pub fn h2_l1(&self) -> f64 {
        self.h2_l1
    }

    /// Cached `||H^(S)||_1` for the filter's smoothness order.
    pub fn hs_l1(&self) -> f64 {
        self.hs_l1
    }

    /// Evaluates `H(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= 0.5 {
            return 1.0;
        }
        if a >= 1.0 {
            return 0.0;
        }
        let s = 4.0 * a - 3.0;
        // Integrate the shorter tail to keep relative accuracy near both ends.
        if s <= 0.0 {
            let lower = integrate(bump, -1.0, s, 1e-14, 1e-300).value / self.z;
            1.0 - lower
        } else {
            integrate(bump, s, 1.0, 1e-14, 1e-300).value / self.z
        }
    }

    /// k-th derivative `H^(k)(t)`; `k = 0` is the filter itself.
    pub fn derivative(&self, k: usize, t: f64) -> f64 {
        if k == 0 {
            return self.eval(t);
        }
        let a = t.abs();
        if a <= 0.5 || a >= 1.0 {
            return 0.0;
        }
        let sign = if t < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
        let s = 4.0 * a - 3.0;
        -sign * 4f64.powi(k as i32) * bump_derivative(k - 1, s) / self.z
    }

    /// `||H^(k)||_1` over the real line by adaptive quadrature (relative
    /// tolerance 1e-8), splitting at the sign changes of the integrand.
    pub fn deriv_l1(&self, k: usize) -> f64 {
        if k == 0 {
            return if self.h_l1 > 0.0 {
                self.h_l1
            } else {
                2.0 * integrate(|t| self.eval(t), 0.0, 1.0, 1e-13, 0.0).value
            };
        }
        let g = |s: f64| bump_derivative(k - 1, s);
        let mut breaks = vec![-1.0];
        let m = 4000;
        let mut prev: (f64, f64) = (-1.0, 0.0);
        for i in 1..m {
            let s = -1.0 + 2.0 * i as f64 / m as f64;
            let v = g(s);
            if v == 0.0 {
                continue;
            }
            if prev.1 != 0.0 && v.signum() != prev.1.signum() {
                let (mut lo, mut hi) = (prev.0, s);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid).signum() == prev.1.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                breaks.push(0.5 * (lo + hi));
            }
            prev = (s, v);
        }
        breaks.push(1.0);
        let total: f64 = breaks
            .windows(2)
            .map(|w| integrate(|s| g(s).abs(), w[0], w[1], 1e-10, 0.0).value)
            .sum();
        2.0 * 4f64.powi(k as i32 - 1) / self.z * total
    }

    /// Localization constant `L = (14 sqrt(2 pi) / 3) ||H^(S)||_1 / ||H||_1`
    /// in the bound `|Phi_n(x)| <= L / (n |x|)^S`.
    pub fn localization_constant(&self) -> f64 {
        14.0 * (2.0 * PI).sqrt() / 3.0 * self.hs_l1 / self.h_l1
    }
}

/// Smallest power of two at least `4 pi n`, the default evaluation grid.
pub fn default_grid_size(n: usize) -> usize {
    let min = (4.0 * PI * n as f64).ceil() as usize;
    min.max(2 * n).next_power_of_two()
}

/// Degree `n`, filter and dense grid size of a localized kernel, together
/// with the precomputed filter weights `H(l/n)` and normalizer `hbar_n`.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    n: usize,
    filter: LowPassFilter,
    grid_size: usize,
    weights: Arc<Vec<f64>>,
    hbar: f64,
}

impl KernelConfig {
    /// Kernel of degree `n` on the default grid.
    pub fn new(n: usize, filter: LowPassFilter) -> Result<Self> {
        Self::with_grid_size(n, filter, default_grid_size(n.max(1)))
    }

    pub fn with_grid_size(n: usize, filter: LowPassFilter, grid_size: usize) -> Result<Self> {
        if n == 0 {
            return config("kernel degree n must be >= 1");
        }
        let min = (4.0 * PI * n as f64).ceil() as usize;
        if grid_size < min {
            return config(format!("grid size {grid_size} violates the mesh condition (needs >= {min})"));
        }
        let weights: Vec<f64> = (0..n).map(|l| filter.eval(l as f64 / n as f64)).collect();
        let total = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
        Ok(KernelConfig { n, filter, grid_size, weights: Arc::new(weights), hbar: 1.0 / total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn filter(&self) -> &LowPassFilter {
        &self.filter
    }

    /// `hbar_n = 1 / sum_{|l| < n} H(|l|/n)`.
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Filter weights `H(l/n)` for `l = 0..n`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether `n >= sqrt(||H''||_1 / ||H||_1)`, the degree required by the
    /// kernel estimates.
    pub fn satisfies_degree_condition(&self) -> bool {
        self.n as f64 >= (self.filter.h2_l1() / self.filter.h_l1()).sqrt()
    }

    /// Direct evaluation of `Phi_n(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let s: f64 = self.weights[1..]
            .iter()
            .enumerate()
            .map(|(i, w)| w * ((i + 1) as f64 * x).cos())
            .sum();
        self.hbar * (self.weights[0] + 2.0 * s)
    }

    /// Filtered coefficients `hbar H(|l|/n) c_l` for a centered series of
    /// length `2n - 1`.
    pub fn filter_series(&self, series: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        series
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let l = (i as isize - (n as isize - 1)).unsigned_abs();
                c * (self.hbar * self.weights[l])
            })
            .collect()
    }

    /// `Phi_n` on the grid `x_j = -pi + 2 pi j / N` by one FFT.
    pub fn grid(&self) -> PowerSpectrum {
        let ones = vec![Complex64::new(1.0, 0.0); 2 * self.n - 1];
        let coeffs = self.filter_series(&ones);
        let eval = GridEvaluator::new(self.grid_size);
        PowerSpectrum::new(self.n, eval.evaluate(&coeffs))
    }
}
