//! Finite-past brute-force reference: direct Gaussian projection of `A z`
//! onto the observations `y(i) = z(i) + theta(i)`, `i = -1..=-J_past`, built
//! from covariance sequences only.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::spectral::{self, CovarianceSequence, SpectralDensityGrid};

use super::FunctionalSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub mse: f64,
    /// `Var(A z)`, the error of the trivial estimate 0.
    pub variance: f64,
    /// Diagonal shift added to the Gram matrix (0 unless it was singular).
    pub ridge: f64,
    pub j_past: usize,
}

/// Projection error from covariances `k_signal`, `k_noise` (lags at least
/// `J - 1 + J_past`).
pub fn oracle_solve(
    k_signal: &CovarianceSequence,
    k_noise: Option<&CovarianceSequence>,
    a: &FunctionalSpec,
    j_past: usize,
) -> Result<OracleResult> {
    let jn = a.j();
    let k = a.k();
    let need = jn - 1 + j_past;
    if k_signal.max_lag() < need || k_noise.is_some_and(|c| c.max_lag() < need) {
        return Err(Error::InvalidArgument(format!("oracle needs covariance lags up to {need}, have {}", k_signal.max_lag())));
    }
    if k_signal.at(0).nrows() != k {
        return Err(Error::DimensionMismatch(format!("functional has K = {k}, covariance has K = {}", k_signal.at(0).nrows())));
    }
    let coeffs = a.coefficients();

    // Var(A z) = sum_{j,l} a(j)^T K(j - l) conj(a(l))
    let mut variance = 0.0;
    for (j, aj) in coeffs.iter().enumerate() {
        for (l, al) in coeffs.iter().enumerate() {
            let kz = k_signal.at(j as i64 - l as i64);
            variance += (aj.transpose() * kz * al.map(|z| z.conj()))[(0, 0)].re;
        }
    }
    if j_past == 0 {
        return Ok(OracleResult { mse: variance, variance, ridge: 0.0, j_past });
    }

    // cross(i, n) = E[A z conj(y_n(i))] = (sum_j a(j)^T K(j - i))_n
    let dim = j_past * k;
    let mut r = CVector::zeros(dim);
    for p in 0..j_past {
        let i = -(p as i64) - 1;
        let mut row = CMatrix::zeros(1, k);
        for (j, aj) in coeffs.iter().enumerate() {
            row += aj.transpose() * k_signal.at(j as i64 - i);
        }
        for n in 0..k {
            r[p * k + n] = row[(0, n)];
        }
    }

    // Gram((i, n), (i', n')) = (K_z + K_theta)(i - i')_{n, n'}
    let mut gram = CMatrix::zeros(dim, dim);
    for p in 0..j_past {
        for q in 0..j_past {
            let lag = q as i64 - p as i64; // i - i' with i = -p-1, i' = -q-1
            let mut blk = k_signal.at(lag).clone();
            if let Some(kn) = k_noise {
                blk += kn.at(lag);
            }
            gram.view_mut((p * k, q * k), (k, k)).copy_from(&blk);
        }
    }

    let rhs = CMatrix::from_iterator(dim, 1, r.iter().map(|z| z.conj()));
    let mut ridge = 0.0;
    let base = (0..dim).map(|i| gram[(i, i)].re).sum::<f64>() / dim as f64;
    let mut x = None;
    for attempt in 0..12 {
        let mut g = gram.clone();
        if ridge > 0.0 {
            for i in 0..dim {
                g[(i, i)] += ridge;
            }
        }
        if let Some(ch) = linalg::hermitian_part(&g).cholesky() {
            x = Some(ch.solve(&rhs));
            break;
        }
        ridge = base.max(f64::MIN_POSITIVE) * 1e-14 * libm::pow(10.0, attempt as f64);
    }
    let x = x.ok_or_else(|| Error::NotPositiveDefinite { min_eigenvalue: linalg::min_eigenvalue(&gram) })?;
    let explained: f64 = r.iter().zip(x.iter()).map(|(ri, xi)| (ri * xi).re).sum();
    Ok(OracleResult { mse: variance - explained, variance, ridge, j_past })
}

/// [`oracle_solve`] with covariances taken from grid densities.
pub fn oracle_solve_grid(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    a: &FunctionalSpec,
    j_past: usize,
) -> Result<OracleResult> {
    let lags = a.j() - 1 + j_past;
    let kf = spectral::covariance_from_density(f, lags)?;
    let kg = g.map(|g| spectral::covariance_from_density(g, lags)).transpose()?;
    oracle_solve(&kf, kg.as_ref(), a, j_past)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::spectral::RationalDensity;
    use approx::assert_abs_diff_eq;

    #[test]
    fn white_noise_oracle_is_exact() {
        let f = SpectralDensityGrid::identity(2, 128);
        let a = FunctionalSpec::new(alloc::vec![
            CVector::from_vec(alloc::vec![c(1.0, 0.5), c(0.2, 0.0)]),
            CVector::from_vec(alloc::vec![c(0.0, -0.3), c(0.4, 0.4)]),
        ])
        .unwrap();
        let o = oracle_solve_grid(&f, None, &a, 8).unwrap();
        assert_abs_diff_eq!(o.mse, a.norm_sq(), epsilon = 1e-12);
        assert_eq!(o.ridge, 0.0);
    }

    #[test]
    fn ar1_oracle() {
        let rd = RationalDensity::scalar(&[1.0], &[1.0, -0.5]).unwrap();
        let cov = rd.covariance(40).unwrap();
        let o = oracle_solve(&cov, None, &FunctionalSpec::unit(1, 1), 32).unwrap();
        assert_abs_diff_eq!(o.mse, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(o.variance, 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn decreasing_in_past_length() {
        let rd = RationalDensity::scalar(&[1.0, 0.6], &[1.0, -0.3]).unwrap();
        let cov = rd.covariance(80).unwrap();
        let noise = RationalDensity::scalar(&[0.5], &[1.0]).unwrap().covariance(80).unwrap();
        let a = FunctionalSpec::unit(1, 2);
        let mut last = f64::INFINITY;
        for jp in [1usize, 2, 4, 8, 16, 32, 64] {
            let o = oracle_solve(&cov, Some(&noise), &a, jp).unwrap();
            assert!(o.mse <= last + 1e-12);
            last = o.mse;
        }
    }

    #[test]
    fn singular_gram_gets_ridge() {
        // a constant process: every observation equals every other one
        let mats = alloc::vec![CMatrix::identity(1, 1); 9];
        let cov = CovarianceSequence::from_parts(4, mats).unwrap();
        let o = oracle_solve(&cov, None, &FunctionalSpec::unit(1, 1), 4).unwrap();
        assert!(o.ridge > 0.0);
        assert!(o.mse.abs() < 1e-6);
    }
}
