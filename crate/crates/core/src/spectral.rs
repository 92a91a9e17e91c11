//! Dense evaluation of centered trigonometric polynomials on the grid
//! `x_j = -pi + 2 pi j / N`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Values of a trigonometric polynomial on an equispaced grid of `[-pi, pi)`.
#[derive(Debug, Clone)]
pub struct PowerSpectrum {
    n: usize,
    values: Vec<Complex64>,
    coeffs: Option<Arc<Vec<Complex64>>>,
}

impl PowerSpectrum {
    pub fn new(n: usize, values: Vec<Complex64>) -> Self {
        PowerSpectrum { n, values, coeffs: None }
    }

    /// Spectrum that remembers its centered coefficients, so it can also be
    /// evaluated between grid points.
    pub fn with_coefficients(n: usize, values: Vec<Complex64>, coeffs: Arc<Vec<Complex64>>) -> Self {
        PowerSpectrum { n, values, coeffs: Some(coeffs) }
    }

    /// Off-grid value, if the coefficients are known.
    pub fn eval_at(&self, x: f64) -> Option<Complex64> {
        self.coeffs.as_ref().map(|c| eval_direct(c, x))
    }

    /// Degree of the polynomial that produced the spectrum.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Grid spacing `2 pi / N`.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    /// Abscissa of grid index `j`.
    pub fn x(&self, j: usize) -> f64 {
        grid_point(j, self.values.len())
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.x(j)).collect()
    }
}

/// `-pi + 2 pi j / N`.
pub fn grid_point(j: usize, grid_size: usize) -> f64 {
    -PI + 2.0 * PI * j as f64 / grid_size as f64
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Distance on the circle `R / 2 pi Z`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Direct evaluation of `sum_l c_l e^{i l x}` for a centered coefficient
/// vector (`l = -(m-1)..=(m-1)`).
pub fn eval_direct(coeffs: &[Complex64], x: f64) -> Complex64 {
    let m = (coeffs.len() + 1) / 2;
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let l = i as f64 - (m as f64 - 1.0);
            c * Complex64::from_polar(1.0, l * x)
        })
        .sum()
}

/// Evaluates centered polynomials on the full grid with one inverse FFT.
#[derive(Clone)]
pub struct GridEvaluator {
    grid_size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GridEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridEvaluator").field("grid_size", &self.grid_size).finish()
    }
}

impl GridEvaluator {
    pub fn new(grid_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_inverse(grid_size);
        GridEvaluator { grid_size, fft }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Values of `sum_l c_l e^{i l x_j}` for all grid points. The grid must
    /// hold at least as many points as there are coefficients.
    pub fn evaluate(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid_size;
        assert!(coeffs.len() <= n, "grid smaller than the coefficient vector");
        let m = (coeffs.len() + 1) / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, &c) in coeffs.iter().enumerate() {
            let l = i as i64 - (m as i64 - 1);
            // e^{i l x_j} = (-1)^l e^{2 pi i l j / N}
            let c = if l.rem_euclid(2) == 1 { -c } else { c };
            buf[l.rem_euclid(n as i64) as usize] += c;
        }
        self.fft.process(&mut buf);
        buf
    }
}

/// Evaluates centered polynomials of fixed length on a contiguous window of
/// grid indices `j0..j0+count` by a chirp-z transform. Cheaper than a full
/// grid when the window is a small fraction of it.
#[derive(Clone)]
pub struct ZoomEvaluator {
    grid_size: usize,
    start: usize,
    count: usize,
    len: usize,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    kernel_hat: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ZoomEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZoomEvaluator")
            .field("grid_size", &self.grid_size)
            .field("start", &self.start)
            .field("count", &self.count)
            .finish()
    }
}

/// `e^{i pi k^2 / N}` with the exponent reduced exactly before rounding.
fn chirp(k: i64, grid_size: usize) -> Complex64 {
    let two_n = 2 * grid_size as i128;
    let r = ((k as i128) * (k as i128)).rem_euclid(two_n);
    Complex64::from_polar(1.0, PI * r as f64 / grid_size as f64)
}

impl ZoomEvaluator {
    /// Window of `count` grid points starting at index `start` of an
    /// `grid_size` grid, for coefficient vectors of length `len`.
    pub fn new(grid_size: usize, start: usize, count: usize, len: usize) -> Self {
        assert!(count >= 1 && len >= 1);
        let m = (len + 1) / 2;
        let fft_len = (len + count - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let x0 = grid_point(start, grid_size);
        // b_p = c_p e^{i l x0} w^{p^2/2}, l = p - (m - 1)
        let pre: Vec<Complex64> = (0..len)
            .map(|p| {
                let l = p as f64 - (m as f64 - 1.0);
                Complex64::from_polar(1.0, l * x0) * chirp(p as i64, grid_size)
            })
            .collect();
        // X_{start+q} = e^{-i (m-1) 2 pi q / N} w^{q^2/2} (b * v)_q
        let post: Vec<Complex64> = (0..count)
            .map(|q| {
                let shift = -2.0 * PI * ((m - 1) as f64) * q as f64 / grid_size as f64;
                Complex64::from_polar(1.0, shift) * chirp(q as i64, grid_size) / fft_len as f64
            })
            .collect();
        // v_k = w^{-k^2/2} for k in -(len-1)..count
        let mut kernel = vec![Complex64::new(0.0, 0.0); fft_len];
        for k in -(len as i64 - 1)..count as i64 {
            kernel[k.rem_euclid(fft_len as i64) as usize] = chirp(k, grid_size).conj();
        }
        forward.process(&mut kernel);
        ZoomEvaluator {
            grid_size,
            start,
            count,
            len,
            pre,
            post,
            kernel_hat: kernel,
            forward,
            inverse,
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Cost proxy used to choose between zoom and full-grid evaluation.
    pub fn fft_len(&self) -> usize {
        self.kernel_hat.len()
    }

    pub fn evaluate(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.len, "coefficient length mismatch");
        let l = self.kernel_hat.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for (b, (&c, &p)) in buf.iter_mut().zip(coeffs.iter().zip(&self.pre)) {
            *b = c * p;
        }
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        buf.truncate(self.count);
        for (b, p) in buf.iter_mut().zip(&self.post) {
            *b *= p;
        }
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(m: usize) -> Vec<Complex64> {
        (0..2 * m - 1)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect()
    }

    #[test]
    fn fft_matches_direct() {
        let c = coeffs(40);
        let ev = GridEvaluator::new(512);
        let v = ev.evaluate(&c);
        for j in [0, 1, 77, 256, 511] {
            let d = eval_direct(&c, grid_point(j, 512));
            assert!((v[j] - d).norm() < 1e-10);
        }
    }

    #[test]
    fn zoom_matches_full_grid() {
        let c = coeffs(300);
        let n = 8192;
        let full = GridEvaluator::new(n).evaluate(&c);
        let z = ZoomEvaluator::new(n, 5000, 700, c.len());
        let part = z.evaluate(&c);
        for q in 0..700 {
            assert!((part[q] - full[5000 + q]).norm() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn wrapping() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((circular_distance(3.1, -3.1) - (2.0 * PI - 6.2)).abs() < 1e-12);
    }
}
