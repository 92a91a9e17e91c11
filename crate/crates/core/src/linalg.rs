//! Dense complex linear algebra helpers backed by `faer`.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::synth::SampleSeries;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_EPS: f64 = 1e-13;

pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Mat<Complex64> {
    Mat::from_fn(rows, cols, f)
}

/// Thin SVD `A = U diag(s) V^H`.
pub struct ThinSvd {
    pub u: Mat<Complex64>,
    pub s: Vec<f64>,
    pub v: Mat<Complex64>,
}

pub fn thin_svd(a: MatRef<'_, Complex64>) -> Result<ThinSvd> {
    let svd = a.thin_svd().map_err(|e| Error::Numerical(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector().iter().map(|v| v.re).collect();
    Ok(ThinSvd { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
}

/// Minimum-norm least-squares solution of `A x = b`, rejecting numerically
/// rank-deficient systems.
pub fn lstsq(a: MatRef<'_, Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension("right-hand side length mismatch".into()));
    }
    if a.ncols() == 0 {
        return Ok(Vec::new());
    }
    let svd = thin_svd(a)?;
    let smax = svd.s.iter().cloned().fold(0.0, f64::max);
    let smin = svd.s.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin < RANK_EPS * smax {
        return Err(Error::IllConditioned(format!(
            "least-squares matrix is rank deficient (condition {:.3e})",
            smax / smin
        )));
    }
    let k = svd.s.len();
    let mut x = vec![Complex64::new(0.0, 0.0); a.ncols()];
    for j in 0..k {
        let mut c = Complex64::new(0.0, 0.0);
        for (i, bi) in b.iter().enumerate() {
            c += svd.u[(i, j)].conj() * bi;
        }
        c /= svd.s[j];
        for (r, xr) in x.iter_mut().enumerate() {
            *xr += svd.v[(r, j)] * c;
        }
    }
    Ok(x)
}

/// Eigenvalues of a square complex matrix.
pub fn eigenvalues(a: MatRef<'_, Complex64>) -> Result<Vec<Complex64>> {
    a.eigenvalues().map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))
}

/// Amplitudes `A_j` minimizing `sum_l |mu(l) - sum_j A_j e^{-i l lambda_j}|^2`
/// over the centered moment indices of `series`.
pub fn vandermonde_amplitudes(series: &SampleSeries, lambdas: &[f64]) -> Result<Vec<Complex64>> {
    let n = series
        .n()
        .ok_or_else(|| Error::Dimension("amplitude fit needs a moment series".into()))?;
    let v = from_fn(series.len(), lambdas.len(), |i, j| {
        let l = i as f64 - (n as f64 - 1.0);
        Complex64::from_polar(1.0, -l * lambdas[j])
    });
    lstsq(v.as_ref(), series.values())
}
