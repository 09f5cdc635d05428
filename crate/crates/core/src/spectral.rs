//! Spectral densities on the uniform frequency grid, Fourier coefficients of
//! matrix functions, the truncated operators `B`, `D`, `R` and the minimality
//! diagnostic.
//!
//! Conventions: `K(j) = E z(t+j) z(t)* = (1/2 pi) int e^{i j l} F(l) dl`, and
//! the lag-`d` coefficient of a matrix function `g` is
//! `(1/N) sum_t g(l_t) e^{i d l_t}`.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, CMatrix};

pub const DEFAULT_N_LAMBDA: usize = 4096;
pub const DEFAULT_MINIMALITY_CEILING: f64 = 1e10;
/// Eigenvalues of `F + G` at or below this fraction of the grid-wide largest
/// eigenvalue mark a node as singular.
pub const SINGULAR_RTOL: f64 = 1e-14;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// `K x K` Hermitian PSD matrix function sampled at `l_t = -pi + 2 pi t / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityGrid {
    k: usize,
    values: Vec<CMatrix>,
}

impl SpectralDensityGrid {
    /// Validates shape, Hermitian symmetry and positive semidefiniteness;
    /// stores the Hermitian part.
    pub fn new(values: Vec<CMatrix>) -> Result<Self> {
        let k = check_shape(&values)?;
        let mut out = Vec::with_capacity(values.len());
        for (t, m) in values.into_iter().enumerate() {
            let scale = linalg::frobenius(&m).max(1.0);
            let defect = linalg::hermitian_defect(&m);
            if !(defect <= HERMITIAN_TOL * scale) {
                return Err(Error::InvalidArgument(format!("density sample {t} is not Hermitian (defect {defect:.3e})")));
            }
            let h = linalg::hermitian_part(&m);
            let w = linalg::min_eigenvalue(&h);
            if !(w >= -PSD_TOL * scale) {
                return Err(Error::InvalidArgument(format!(
                    "density sample {t} is not positive semidefinite (min eigenvalue {w:.3e})"
                )));
            }
            out.push(h);
        }
        Ok(Self { k, values: out })
    }

    /// No validation beyond shape; the caller guarantees Hermitian PSD samples.
    pub fn from_values_unchecked(values: Vec<CMatrix>) -> Self {
        let k = values.first().map_or(0, |m| m.nrows());
        Self { k, values }
    }

    pub fn from_fn(k: usize, n: usize, f: impl Fn(f64) -> CMatrix) -> Result<Self> {
        let values: Vec<CMatrix> = (0..n).map(|t| f(fft::lambda(t, n))).collect();
        if values.iter().any(|m| m.nrows() != k) {
            return Err(Error::DimensionMismatch(format!("density function does not return {k} x {k} matrices")));
        }
        Self::new(values)
    }

    pub fn constant(m: &CMatrix, n: usize) -> Result<Self> {
        Self::new(alloc::vec![m.clone(); n])
    }

    pub fn zeros(k: usize, n: usize) -> Self {
        Self { k, values: alloc::vec![CMatrix::zeros(k, k); n] }
    }

    pub fn identity(k: usize, n: usize) -> Self {
        Self { k, values: alloc::vec![CMatrix::identity(k, k); n] }
    }

    /// Scalar density `f(l)`.
    pub fn scalar(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(1, n, |l| CMatrix::from_element(1, 1, Complex64::new(f(l), 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn n_lambda(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn into_values(self) -> Vec<CMatrix> {
        self.values
    }

    pub fn value(&self, t: usize) -> &CMatrix {
        &self.values[t]
    }

    pub fn lambda(&self, t: usize) -> f64 {
        fft::lambda(t, self.values.len())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|z| *z == Complex64::new(0.0, 0.0)))
    }

    /// `sup_t |F(l_t)|_F`
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(linalg::frobenius).fold(0.0, f64::max)
    }

    /// `(1/2 pi) int tr F dl` by the rectangle rule.
    pub fn mean_trace(&self) -> f64 {
        self.values.iter().map(linalg::trace_re).sum::<f64>() / self.n_lambda() as f64
    }

    /// Grid L2 distance `sqrt((1/N) sum_t |F - G|_F^2)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        libm::sqrt(s / self.n_lambda() as f64)
    }

    pub fn compatible(&self, other: &Self) -> Result<()> {
        if self.k != other.k || self.n_lambda() != other.n_lambda() {
            return Err(Error::DimensionMismatch(format!(
                "densities of shape {} x {} on {} nodes and {} x {} on {} nodes",
                self.k,
                self.k,
                self.n_lambda(),
                other.k,
                other.k,
                other.n_lambda()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        Ok(Self { k: self.k, values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { k: self.k, values: self.values.iter().map(|m| m * Complex64::new(s, 0.0)).collect() }
    }

    /// `sum_t` weights applied nodewise: `(1-w) self + w other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        self.compatible(other)?;
        Ok(Self {
            k: self.k,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * Complex64::new(1.0 - w, 0.0) + b * Complex64::new(w, 0.0))
                .collect(),
        })
    }
}

fn check_shape(values: &[CMatrix]) -> Result<usize> {
    let first = values.first().ok_or_else(|| Error::InvalidArgument("density grid has no samples".into()))?;
    let k = first.nrows();
    if k == 0 {
        return Err(Error::InvalidArgument("density has dimension 0".into()));
    }
    for (t, m) in values.iter().enumerate() {
        if m.nrows() != k || m.ncols() != k {
            return Err(Error::DimensionMismatch(format!("sample {t} is {} x {}, expected {k} x {k}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { index: t });
        }
    }
    Ok(k)
}

fn check_lag(d: i64, n: usize) -> Result<()> {
    if d.unsigned_abs() as usize >= n / 2 || n < 2 {
        return Err(Error::Aliasing { lag: d, n_lambda: n });
    }
    Ok(())
}

/// Lag-`d` Fourier coefficient `(1/N) sum_t g(l_t) e^{i d l_t}` by direct
/// summation.
pub fn matrix_fourier_coefficient(values: &[CMatrix], d: i64) -> Result<CMatrix> {
    let n = values.len();
    check_lag(d, n)?;
    let (r, c) = values[0].shape();
    let mut acc = CMatrix::zeros(r, c);
    for (t, g) in values.iter().enumerate() {
        let w = Complex64::from_polar(1.0, d as f64 * fft::lambda(t, n));
        acc += g * w;
    }
    Ok(acc / Complex64::new(n as f64, 0.0))
}

/// Matrices indexed by lag `-max_lag..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSequence {
    max_lag: usize,
    mats: Vec<CMatrix>,
}

/// Covariance sequence `j -> K(j)`.
pub type CovarianceSequence = LagSequence;

impl LagSequence {
    pub fn from_parts(max_lag: usize, mats: Vec<CMatrix>) -> Result<Self> {
        if mats.len() != 2 * max_lag + 1 {
            return Err(Error::DimensionMismatch(format!("{} matrices for lags -{max_lag}..={max_lag}", mats.len())));
        }
        Ok(Self { max_lag, mats })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn at(&self, d: i64) -> &CMatrix {
        assert!(d.unsigned_abs() as usize <= self.max_lag, "lag {d} outside -{0}..={0}", self.max_lag);
        &self.mats[(d + self.max_lag as i64) as usize]
    }

    pub fn get(&self, d: i64) -> Option<&CMatrix> {
        (d.unsigned_abs() as usize <= self.max_lag).then(|| self.at(d))
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &CMatrix)> {
        let l = self.max_lag as i64;
        self.mats.iter().enumerate().map(move |(i, m)| (i as i64 - l, m))
    }
}

/// Coefficients for every lag in `-max_lag..=max_lag` through one FFT per
/// matrix entry.
pub fn fourier_coefficients(values: &[CMatrix], max_lag: usize) -> Result<LagSequence> {
    let n = values.len();
    check_lag(max_lag as i64, n)?;
    let (r, c) = values[0].shape();
    let mut mats = alloc::vec![CMatrix::zeros(r, c); 2 * max_lag + 1];
    let mut series = alloc::vec![Complex64::new(0.0, 0.0); n];
    for i in 0..r {
        for j in 0..c {
            for (s, g) in series.iter_mut().zip(values) {
                *s = g[(i, j)];
            }
            let coef = fft::grid_coefficients(&series, max_lag);
            for (m, z) in mats.iter_mut().zip(coef) {
                m[(i, j)] = z;
            }
        }
    }
    Ok(LagSequence { max_lag, mats })
}

pub fn covariance_from_density(f: &SpectralDensityGrid, max_lag: usize) -> Result<CovarianceSequence> {
    let cov = fourier_coefficients(f.values(), max_lag)?;
    let k0 = cov.at(0);
    let w = linalg::min_eigenvalue(k0);
    if w < -PSD_TOL * linalg::frobenius(k0).max(1.0) {
        return Err(Error::InvalidArgument(format!("K(0) is not positive semidefinite (min eigenvalue {w:.3e})")));
    }
    Ok(cov)
}

/// Block-Toeplitz matrix with block `(s, j) = coef(j - s)`, `s, j < window`.
pub fn block_toeplitz(coef: &LagSequence, window: usize) -> CMatrix {
    let k = coef.at(0).nrows();
    let mut big = CMatrix::zeros(window * k, window * k);
    for s in 0..window {
        for j in 0..window {
            let blk = coef.at(j as i64 - s as i64);
            big.view_mut((s * k, j * k), (k, k)).copy_from(blk);
        }
    }
    big
}

/// Blocks `(s, j) -> K(j - s)^T`: the Toeplitz operator of `F` in the
/// variables of the linear system, so that `B` approximates its inverse.
pub fn covariance_operator(cov: &CovarianceSequence, window: usize) -> CMatrix {
    let k = cov.at(0).nrows();
    let mut big = CMatrix::zeros(window * k, window * k);
    for s in 0..window {
        for j in 0..window {
            let blk = cov.at(j as i64 - s as i64).transpose();
            big.view_mut((s * k, j * k), (k, k)).copy_from(&blk);
        }
    }
    big
}

/// Pointwise inverse of `F + G`; fails at the first singular node.
pub fn pointwise_inverse(f: &SpectralDensityGrid, g: Option<&SpectralDensityGrid>) -> Result<Vec<CMatrix>> {
    if let Some(g) = g {
        f.compatible(g)?;
    }
    let sums = node_sums(f, g);
    let top = sums.iter().map(linalg::max_eigenvalue).fold(0.0, f64::max);
    let floor = SINGULAR_RTOL * top.max(f64::MIN_POSITIVE);
    sums.iter()
        .enumerate()
        .map(|(t, s)| linalg::hpd_inverse(s, floor).ok_or(Error::MinimalityViolation { lambda: f.lambda(t), index: t }))
        .collect()
}

fn node_sums(f: &SpectralDensityGrid, g: Option<&SpectralDensityGrid>) -> Vec<CMatrix> {
    match g {
        Some(g) => f.values().iter().zip(g.values()).map(|(a, b)| a + b).collect(),
        None => f.values().to_vec(),
    }
}

/// Truncated block operators on a window of `window` lags.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub window: usize,
    pub k: usize,
    pub b: CMatrix,
    pub d: CMatrix,
    pub r: CMatrix,
    /// Upper bound on the condition number of `B`: the grid-wide eigenvalue
    /// spread of `(F+G)^{-1}`.
    pub condition_bound: f64,
}

/// Builds `B`, `D`, `R` from the coefficients of `[(F+G)^{-1}]^T`,
/// `[F (F+G)^{-1}]^T` and `[F (F+G)^{-1} G]^T`.
pub fn assemble_operators(f: &SpectralDensityGrid, g: Option<&SpectralDensityGrid>, window: usize) -> Result<OperatorSet> {
    let s_inv = pointwise_inverse(f, g)?;
    assemble_operators_with(f, g, &s_inv, window)
}

/// As [`assemble_operators`] with a precomputed pointwise inverse of `F + G`.
pub fn assemble_operators_with(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    s_inv: &[CMatrix],
    window: usize,
) -> Result<OperatorSet> {
    if window == 0 {
        return Err(Error::InvalidArgument("operator window must be at least 1".into()));
    }
    let n = f.n_lambda();
    check_lag(window as i64 - 1, n)?;
    let xb: Vec<CMatrix> = s_inv.iter().map(|m| m.transpose()).collect();
    let fs: Vec<CMatrix> = f.values().iter().zip(s_inv).map(|(a, b)| a * b).collect();
    let xd: Vec<CMatrix> = fs.iter().map(|m| m.transpose()).collect();
    let xr: Vec<CMatrix> = match g {
        Some(g) => fs.iter().zip(g.values()).map(|(a, b)| (a * b).transpose()).collect(),
        None => alloc::vec![CMatrix::zeros(f.dim(), f.dim()); n],
    };
    let lag = window - 1;
    let b = block_toeplitz(&fourier_coefficients(&xb, lag)?, window);
    let d = block_toeplitz(&fourier_coefficients(&xd, lag)?, window);
    let r = block_toeplitz(&fourier_coefficients(&xr, lag)?, window);
    if linalg::cholesky_lower(&b).is_none() {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: linalg::min_eigenvalue(&b) });
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for m in s_inv {
        let e = linalg::eigenvalues(m);
        lo = lo.min(e[0]);
        hi = hi.max(*e.last().expect("k >= 1"));
    }
    let condition_bound = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(OperatorSet { window, k: f.dim(), b, d, r, condition_bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    /// `(1/2 pi) int tr (F+G)^{-1} dl` over nonsingular nodes.
    pub integral: f64,
    /// `(index, lambda)` of nodes where `F + G` is singular.
    pub singular_nodes: Vec<(usize, f64)>,
    /// Largest eigenvalue over the grid divided by the smallest.
    pub condition: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub ceiling: f64,
    pub pass: bool,
}

pub fn check_minimality(f: &SpectralDensityGrid, g: Option<&SpectralDensityGrid>, ceiling: f64) -> Result<MinimalityReport> {
    if let Some(g) = g {
        f.compatible(g)?;
    }
    let sums = node_sums(f, g);
    let eig: Vec<Vec<f64>> = sums.iter().map(linalg::eigenvalues).collect();
    let lo = eig.iter().map(|e| e[0]).fold(f64::INFINITY, f64::min);
    let hi = eig.iter().map(|e| *e.last().expect("k >= 1")).fold(0.0, f64::max);
    let floor = SINGULAR_RTOL * hi.max(f64::MIN_POSITIVE);
    let mut singular = Vec::new();
    let mut acc = 0.0;
    for (t, e) in eig.iter().enumerate() {
        if e[0] <= floor {
            singular.push((t, f.lambda(t)));
        } else {
            acc += e.iter().map(|w| 1.0 / w).sum::<f64>();
        }
    }
    let integral = acc / f.n_lambda() as f64;
    let condition = if lo > floor { hi / lo } else { f64::INFINITY };
    let pass = singular.is_empty() && condition <= ceiling && integral.is_finite();
    Ok(MinimalityReport { integral, singular_nodes: singular, condition, min_eigenvalue: lo, max_eigenvalue: hi, ceiling, pass })
}

/// Density given either on a fixed grid or parametrically.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    Grid(SpectralDensityGrid),
    Rational(RationalDensity),
}

impl DensityModel {
    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Grid(g) => g.dim(),
            DensityModel::Rational(r) => r.dim(),
        }
    }

    /// Samples on an `n`-point grid. Grid models only exist at their own size.
    pub fn rasterize(&self, n: usize) -> Result<SpectralDensityGrid> {
        match self {
            DensityModel::Grid(g) if g.n_lambda() == n => Ok(g.clone()),
            DensityModel::Grid(g) => {
                Err(Error::InvalidArgument(format!("grid density with {} nodes cannot be sampled on {n} nodes", g.n_lambda())))
            }
            DensityModel::Rational(r) => r.rasterize(n),
        }
    }

    pub fn native_size(&self) -> Option<usize> {
        match self {
            DensityModel::Grid(g) => Some(g.n_lambda()),
            DensityModel::Rational(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub n_coarse: usize,
    pub integral_coarse: f64,
    pub integral_fine: f64,
    pub ratio: f64,
    pub diverging: bool,
}

/// Ratio of the minimality integral on `2n` nodes to the one on `n` nodes;
/// a ratio above 1.1 is read as divergence.
pub fn refinement_check(f: &DensityModel, g: Option<&DensityModel>, n: usize) -> Result<RefinementReport> {
    let run = |size: usize| -> Result<f64> {
        let fg = f.rasterize(size)?;
        let gg = g.map(|m| m.rasterize(size)).transpose()?;
        Ok(check_minimality(&fg, gg.as_ref(), f64::INFINITY)?.integral)
    };
    let coarse = run(n)?;
    let fine = run(2 * n)?;
    let ratio = fine / coarse;
    Ok(RefinementReport { n_coarse: n, integral_coarse: coarse, integral_fine: fine, ratio, diverging: !(ratio <= 1.1) })
}

/// `F(l) = A(l)^{-1} B(l) B(l)* A(l)^{-*}` with `A(l) = sum_u alpha_u e^{-i u l}`
/// (denominator) and `B(l) = sum_u beta_u e^{-i u l}` (numerator).
#[derive(Debug, Clone, PartialEq)]
pub struct RationalDensity {
    numerator: Vec<CMatrix>,
    denominator: Vec<CMatrix>,
}

impl RationalDensity {
    pub fn new(numerator: Vec<CMatrix>, denominator: Vec<CMatrix>) -> Result<Self> {
        let k = denominator.first().map(|m| m.nrows()).ok_or_else(|| Error::InvalidArgument("empty denominator".into()))?;
        if numerator.is_empty() {
            return Err(Error::InvalidArgument("empty numerator".into()));
        }
        for m in numerator.iter().chain(&denominator) {
            if m.shape() != (k, k) {
                return Err(Error::DimensionMismatch(format!(
                    "rational coefficient of shape {:?}, expected {k} x {k}",
                    m.shape()
                )));
            }
        }
        if linalg::inverse(&denominator[0]).is_none() {
            return Err(Error::InvalidArgument("leading denominator coefficient is singular".into()));
        }
        Ok(Self { numerator, denominator })
    }

    /// Scalar density `|sum b_u e^{-iul}|^2 / |sum a_u e^{-iul}|^2`.
    pub fn scalar(numerator: &[f64], denominator: &[f64]) -> Result<Self> {
        let lift = |v: &[f64]| v.iter().map(|&x| CMatrix::from_element(1, 1, Complex64::new(x, 0.0))).collect();
        Self::new(lift(numerator), lift(denominator))
    }

    pub fn dim(&self) -> usize {
        self.denominator[0].nrows()
    }

    pub fn numerator(&self) -> &[CMatrix] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[CMatrix] {
        &self.denominator
    }

    fn poly(coeffs: &[CMatrix], l: f64) -> CMatrix {
        let k = coeffs[0].nrows();
        let mut acc = CMatrix::zeros(k, k);
        for (u, m) in coeffs.iter().enumerate() {
            acc += m * Complex64::from_polar(1.0, -(u as f64) * l);
        }
        acc
    }

    /// Transfer function `A(l)^{-1} B(l)`.
    pub fn transfer(&self, l: f64) -> Result<CMatrix> {
        let a = Self::poly(&self.denominator, l);
        let inv = linalg::inverse(&a).ok_or(Error::SingularFactor { lambda: l })?;
        Ok(inv * Self::poly(&self.numerator, l))
    }

    pub fn eval(&self, l: f64) -> Result<CMatrix> {
        let p = self.transfer(l)?;
        Ok(linalg::hermitian_part(&(&p * p.adjoint())))
    }

    pub fn rasterize(&self, n: usize) -> Result<SpectralDensityGrid> {
        let values = (0..n).map(|t| self.eval(fft::lambda(t, n))).collect::<Result<Vec<_>>>()?;
        SpectralDensityGrid::new(values)
    }

    /// Impulse response `psi_u` of `A^{-1} B`, `psi_u = alpha_0^{-1}
    /// (beta_u - sum_{v >= 1} alpha_v psi_{u-v})`, until it decays below `tol`
    /// relative to its peak.
    pub fn impulse_response(&self, tol: f64, max_len: usize) -> Result<Vec<CMatrix>> {
        let a0_inv = linalg::inverse(&self.denominator[0]).expect("checked in new");
        let k = self.dim();
        let mut psi: Vec<CMatrix> = Vec::new();
        let mut peak = 0.0_f64;
        let mut quiet = 0usize;
        let order = self.denominator.len().max(self.numerator.len());
        for u in 0..max_len {
            let mut acc = self.numerator.get(u).cloned().unwrap_or_else(|| CMatrix::zeros(k, k));
            for v in 1..self.denominator.len().min(u + 1) {
                acc -= &self.denominator[v] * &psi[u - v];
            }
            let p = &a0_inv * acc;
            let norm = linalg::frobenius(&p);
            if !norm.is_finite() {
                break;
            }
            peak = peak.max(norm);
            psi.push(p);
            quiet = if norm <= tol * peak { quiet + 1 } else { 0 };
            if u >= order && quiet >= order {
                psi.truncate(psi.len() - quiet);
                return Ok(psi);
            }
        }
        Err(Error::InvalidArgument(format!(
            "impulse response of the rational density does not decay within {max_len} terms; the denominator must be stable"
        )))
    }

    /// Covariances `K(j) = sum_u psi_{u+j} psi_u^*` from the impulse response.
    pub fn covariance(&self, max_lag: usize) -> Result<CovarianceSequence> {
        let psi = self.impulse_response(1e-17, 1_000_000)?;
        let k = self.dim();
        let l = max_lag as i64;
        let mats = (-l..=l)
            .map(|j| {
                let mut acc = CMatrix::zeros(k, k);
                if j >= 0 {
                    for u in 0..psi.len().saturating_sub(j as usize) {
                        acc += &psi[u + j as usize] * psi[u].adjoint();
                    }
                } else {
                    let s = (-j) as usize;
                    for u in 0..psi.len().saturating_sub(s) {
                        acc += &psi[u] * psi[u + s].adjoint();
                    }
                }
                acc
            })
            .collect();
        LagSequence::from_parts(max_lag, mats)
    }
}
