//! Canonical factorization `F = P P*`, `P(l) = sum_{u >= 0} d(u) e^{-i u l}`,
//! by Wilson's Newton iteration on the grid, and the error formula that uses
//! the factor directly.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, CMatrix, CVector};
use crate::spectral::{self, SpectralDensityGrid};

use super::{series_grid, EstimateSolution, FunctionalSpec, SolveMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationOptions {
    pub max_iter: usize,
    /// Stop once `sup |F - Psi Psi*|_F <= tol * max(1, sup |F|_F)`.
    pub tol: f64,
    /// Densities whose smallest eigenvalue falls to this fraction of the
    /// largest one are rejected as rank deficient.
    pub pd_floor: f64,
    /// Trailing coefficients below this fraction of `|d(0)|` are dropped.
    pub trim: f64,
}

impl Default for FactorizationOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-10, pd_floor: 1e-12, trim: 1e-14 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationResult {
    /// `d(0..U)`, `d(0)` lower triangular with positive diagonal.
    pub d: Vec<CMatrix>,
    /// `sup_t |F - P P*|_F` for the trimmed coefficients.
    pub residual: f64,
    pub iterations: usize,
    pub n_lambda: usize,
}

impl FactorizationResult {
    /// `P(l_t)` on the factorization grid.
    pub fn factor_grid(&self) -> Vec<CMatrix> {
        factor_on_grid(&self.d, self.n_lambda)
    }
}

fn factor_on_grid(d: &[CMatrix], n: usize) -> Vec<CMatrix> {
    let k = d[0].nrows();
    let mut out = alloc::vec![CMatrix::zeros(k, k); n];
    for i in 0..k {
        for j in 0..k {
            let vals = fft::eval_series(d.iter().enumerate().map(|(u, m)| (-(u as i64), m[(i, j)])), n);
            for (o, z) in out.iter_mut().zip(vals) {
                o[(i, j)] = z;
            }
        }
    }
    out
}

fn sup_residual(f: &SpectralDensityGrid, psi: &[CMatrix]) -> f64 {
    f.values().iter().zip(psi).map(|(fv, p)| linalg::frobenius(&(fv - p * p.adjoint()))).fold(0.0, f64::max)
}

/// Causal part of `g`: the `e^{-i u l}` terms for `u > 0` plus the lower
/// triangle of the constant term with its diagonal halved.
fn causal_part(g: &[CMatrix]) -> Vec<CMatrix> {
    let n = g.len();
    let k = g[0].nrows();
    let half = n / 2;
    let mut out = alloc::vec![CMatrix::zeros(k, k); n];
    let mut series = alloc::vec![Complex64::new(0.0, 0.0); n];
    for i in 0..k {
        for j in 0..k {
            for (s, m) in series.iter_mut().zip(g) {
                *s = m[(i, j)];
            }
            // the lag-u coefficient of g multiplies e^{-i u l}
            let coef = fft::grid_coefficients(&series, half.saturating_sub(1));
            let mid = half.saturating_sub(1);
            let c0 = coef[mid];
            let c0 = if i > j {
                c0
            } else if i == j {
                c0 * 0.5
            } else {
                Complex64::new(0.0, 0.0)
            };
            let vals = fft::eval_series(core::iter::once((0i64, c0)).chain((1..=mid).map(|u| (-(u as i64), coef[mid + u]))), n);
            for (o, z) in out.iter_mut().zip(vals) {
                o[(i, j)] = z;
            }
        }
    }
    out
}

/// Rotates `d` on the right by a constant unitary so that `d(0)` becomes
/// lower triangular with a positive diagonal.
fn normalize(d: &mut [CMatrix]) {
    let k = d[0].nrows();
    let qr = d[0].adjoint().qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..k {
        let z = r[(i, i)];
        if z.norm() > 0.0 {
            // d(0) q = r*; scale column i by conj(phase) of r_ii
            let phase = z.conj() / z.norm();
            for row in 0..k {
                q[(row, i)] *= phase.conj();
            }
        }
    }
    for m in d.iter_mut() {
        *m = &*m * &q;
    }
}

/// Wilson's algorithm for the minimum-phase factor of a positive-definite
/// density.
pub fn spectral_factorize(f: &SpectralDensityGrid, opts: &FactorizationOptions) -> Result<FactorizationResult> {
    let n = f.n_lambda();
    let k = f.dim();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("factorization needs at least 4 grid nodes, got {n}")));
    }
    let top = f.values().iter().map(linalg::max_eigenvalue).fold(0.0, f64::max);
    for (t, m) in f.values().iter().enumerate() {
        let w = linalg::min_eigenvalue(m);
        if !(w > opts.pd_floor * top) {
            return Err(Error::RankDeficient { lambda: f.lambda(t), min_eigenvalue: w });
        }
    }
    let scale = f.sup_norm().max(1.0);
    let k0 = spectral::matrix_fourier_coefficient(f.values(), 0)?;
    let l0 =
        linalg::cholesky_lower(&k0).ok_or(Error::RankDeficient { lambda: 0.0, min_eigenvalue: linalg::min_eigenvalue(&k0) })?;
    let mut psi = alloc::vec![l0; n];
    let eye = CMatrix::identity(k, k);
    let mut residual = sup_residual(f, &psi);
    let mut iterations = 0;
    while residual > opts.tol * scale && iterations < opts.max_iter {
        let mut g = Vec::with_capacity(n);
        for (t, (p, fv)) in psi.iter().zip(f.values()).enumerate() {
            let pinv = linalg::inverse(p).ok_or(Error::SingularFactor { lambda: f.lambda(t) })?;
            g.push(&pinv * fv * pinv.adjoint() + &eye);
        }
        let gp = causal_part(&g);
        psi = psi.iter().zip(&gp).map(|(p, q)| p * q).collect();
        residual = sup_residual(f, &psi);
        iterations += 1;
        if !residual.is_finite() {
            break;
        }
    }
    if !(residual <= opts.tol * scale) {
        return Err(Error::FactorizationDiverged { iterations, residual });
    }
    let lags = n / 2 - 1;
    let mut d: Vec<CMatrix> = {
        let seq = spectral::fourier_coefficients(&psi, lags)?;
        (0..=lags as i64).map(|u| seq.at(u).clone()).collect()
    };
    normalize(&mut d);
    let lead = linalg::frobenius(&d[0]);
    while d.len() > 1 && linalg::frobenius(d.last().expect("nonempty")) < opts.trim * lead {
        d.pop();
    }
    let residual = sup_residual(f, &factor_on_grid(&d, n));
    Ok(FactorizationResult { d, residual, iterations, n_lambda: n })
}

/// `(A d)(j) = sum_p d(p)^T a(p + j)`, `j = 0..J`.
pub fn functional_times_factor(d: &[CMatrix], a: &FunctionalSpec) -> Vec<CVector> {
    let coeffs = a.coefficients();
    let jn = coeffs.len();
    (0..jn)
        .map(|j| {
            let mut acc = CVector::zeros(a.k());
            for (p, dp) in d.iter().enumerate() {
                if p + j >= jn {
                    break;
                }
                acc += dp.transpose() * &coeffs[p + j];
            }
            acc
        })
        .collect()
}

/// Error `sum_j |(A d)(j)|^2` and `h = A - Q^T S` with `Q = P^{-1}` and
/// `S(l) = sum_j (A d)(j) e^{i j l}`.
pub fn solve_by_factorization(fac: &FactorizationResult, a: &FunctionalSpec) -> Result<EstimateSolution> {
    if a.k() != fac.d[0].nrows() {
        return Err(Error::DimensionMismatch(format!("functional has K = {}, factor has K = {}", a.k(), fac.d[0].nrows())));
    }
    let ad = functional_times_factor(&fac.d, a);
    let delta = ad.iter().map(|v| v.norm_squared()).sum();
    let n = fac.n_lambda;
    let mut warnings = Vec::new();
    let p = fac.factor_grid();
    let s = series_grid(&ad, 0, n);
    let ag = a.transfer_grid(n);
    let mut h_grid = Vec::with_capacity(n);
    for (t, pm) in p.iter().enumerate() {
        match linalg::inverse(pm) {
            Some(q) => h_grid.push(&ag[t] - q.transpose() * &s[t]),
            None => {
                warnings.push(format!("{}", Error::SingularFactor { lambda: fft::lambda(t, n) }));
                h_grid.clear();
                break;
            }
        }
    }
    Ok(EstimateSolution {
        mode: SolveMode::Factorized,
        c: Vec::new(),
        h_grid,
        delta,
        j: a.j(),
        window: fac.d.len(),
        condition_bound: f64::NAN,
        diagnostics: None,
        warnings,
        minimax: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrapolate::{solve_noiseless, SolverOptions};
    use crate::linalg::c;
    use crate::spectral::RationalDensity;
    use approx::assert_abs_diff_eq;

    #[test]
    fn white_noise_factor() {
        let f = SpectralDensityGrid::identity(2, 64).scale(4.0);
        let fac = spectral_factorize(&f, &FactorizationOptions::default()).unwrap();
        assert_eq!(fac.d.len(), 1);
        assert!(linalg::frobenius(&(&fac.d[0] - CMatrix::identity(2, 2) * c(2.0, 0.0))) < 1e-12);
    }

    #[test]
    fn moving_average_factor() {
        let f = RationalDensity::scalar(&[1.0, 0.4], &[1.0]).unwrap().rasterize(256).unwrap();
        let fac = spectral_factorize(&f, &FactorizationOptions::default()).unwrap();
        assert_abs_diff_eq!(fac.d[0][(0, 0)].re, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(fac.d[1][(0, 0)].re, 0.4, epsilon = 1e-8);
        assert!(fac.d.len() == 2 && fac.residual < 1e-8);
        let s = solve_by_factorization(&fac, &FunctionalSpec::unit(1, 1)).unwrap();
        assert_abs_diff_eq!(s.delta, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn matches_noiseless_solver_on_ar1() {
        let f = RationalDensity::scalar(&[1.0], &[1.0, -0.5]).unwrap().rasterize(1024).unwrap();
        let fac = spectral_factorize(&f, &FactorizationOptions::default()).unwrap();
        let a = FunctionalSpec::unit(1, 3);
        let s1 = solve_by_factorization(&fac, &a).unwrap();
        let s0 = solve_noiseless(&f, &a, &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(s1.delta, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(s1.delta, s0.delta, epsilon = 1e-6);
        for (x, y) in s0.h_grid.iter().zip(&s1.h_grid) {
            assert!((x - y).norm() < 1e-6);
        }
    }

    #[test]
    fn matrix_factor_is_normalized() {
        let m1 = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.1), c(0.2, 0.0), c(-0.1, 0.2), c(0.25, 0.0)]);
        let f =
            RationalDensity::new(alloc::vec![CMatrix::identity(2, 2) * c(1.5, 0.0), m1], alloc::vec![CMatrix::identity(2, 2)])
                .unwrap()
                .rasterize(128)
                .unwrap();
        let fac = spectral_factorize(&f, &FactorizationOptions::default()).unwrap();
        assert!(fac.residual <= 1e-8);
        let d0 = &fac.d[0];
        assert!(d0[(0, 1)].norm() < 1e-12);
        assert!(d0[(0, 0)].re > 0.0 && d0[(1, 1)].re > 0.0);
        assert!(d0[(0, 0)].im.abs() < 1e-12 && d0[(1, 1)].im.abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let f = SpectralDensityGrid::scalar(64, |l| 2.0 - 2.0 * libm::cos(l)).unwrap();
        assert!(matches!(spectral_factorize(&f, &FactorizationOptions::default()), Err(Error::RankDeficient { .. })));
    }
}
