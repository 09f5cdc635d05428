//! Optimal linear extrapolation of a linear functional of the future from
//! noisy (or exact) past observations, channel by channel.
//!
//! For one channel with signal density `F`, noise density `G` and functional
//! `A z = sum_{j >= 0} a(j)^T z(j)`, the estimate from observations at
//! `j < 0` has spectral characteristic
//! `h^T = A^T - (A^T G + C^T)(F+G)^{-1}` where `C = sum_j c(j) e^{i j l}`
//! solves `B c = D a`; the error is `<R a, a> + <B c, c>`.

pub mod factorize;
pub mod oracle;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::harmonics;
use crate::linalg::{self, CMatrix, CVector};
use crate::spectral::{self, SpectralDensityGrid};

pub use factorize::{solve_by_factorization, spectral_factorize, FactorizationOptions, FactorizationResult};
pub use oracle::{oracle_solve, oracle_solve_grid, OracleResult};

/// Coefficient vectors `a(0..J)` of one channel's functional.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    a: Vec<CVector>,
}

impl FunctionalSpec {
    pub fn new(a: Vec<CVector>) -> Result<Self> {
        let k = a.first().map(|v| v.len()).ok_or_else(|| Error::InvalidArgument("functional needs J >= 1".into()))?;
        if k == 0 {
            return Err(Error::InvalidArgument("functional vectors are empty".into()));
        }
        for (j, v) in a.iter().enumerate() {
            if v.len() != k {
                return Err(Error::DimensionMismatch(format!("a({j}) has length {}, expected {k}", v.len())));
            }
            if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite { index: j });
            }
        }
        Ok(Self { a })
    }

    /// `a = e_1 delta_{j,0}` padded to `j_len` lags: one-step prediction of
    /// the first component.
    pub fn unit(k: usize, j_len: usize) -> Self {
        let mut a = alloc::vec![CVector::zeros(k); j_len.max(1)];
        a[0][0] = Complex64::new(1.0, 0.0);
        Self { a }
    }

    pub fn coefficients(&self) -> &[CVector] {
        &self.a
    }

    pub fn j(&self) -> usize {
        self.a.len()
    }

    pub fn k(&self) -> usize {
        self.a[0].len()
    }

    /// `sum_j |a(j)|^2`
    pub fn norm_sq(&self) -> f64 {
        self.a.iter().map(|v| v.norm_squared()).sum()
    }

    /// `(sum_j |a(j)|, sum_j (j+1) |a(j)|^2)`.
    pub fn summability(&self) -> (f64, f64) {
        crate::blocking::summability(&self.a)
    }

    /// Stacked `J K` vector zero-padded to `window` lags.
    pub fn stacked(&self, window: usize) -> CVector {
        let k = self.k();
        let mut out = CVector::zeros(window * k);
        for (j, v) in self.a.iter().enumerate().take(window) {
            out.rows_mut(j * k, k).copy_from(v);
        }
        out
    }

    /// `A(l_t) = sum_j a(j) e^{i j l_t}` on an `n`-point grid.
    pub fn transfer_grid(&self, n: usize) -> Vec<CVector> {
        series_grid(&self.a, 0, n)
    }
}

/// `sum_j v(j) e^{i (j + offset) l_t}` for vector coefficients.
pub(crate) fn series_grid(v: &[CVector], offset: i64, n: usize) -> Vec<CVector> {
    let k = v.first().map_or(0, |x| x.len());
    let mut out = alloc::vec![CVector::zeros(k); n];
    for comp in 0..k {
        let vals = fft::eval_series(v.iter().enumerate().map(|(j, x)| (j as i64 + offset, x[comp])), n);
        for (o, z) in out.iter_mut().zip(vals) {
            o[comp] = z;
        }
    }
    out
}

/// How the operator window (number of lags kept for `c`) is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// Use exactly this many lags (at least `J`).
    Fixed(usize),
    /// Start at `J + extra` and double until the relative change in the error
    /// is at most `rtol`, never beyond `max` (nor `N/2`).
    Adaptive { extra: usize, max: usize, rtol: f64 },
}

impl Default for Window {
    fn default() -> Self {
        Window::Adaptive { extra: 32, max: 512, rtol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub window: Window,
    /// Condition bound above which a warning is attached to the solution.
    pub condition_warning: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { window: Window::default(), condition_warning: spectral::DEFAULT_MINIMALITY_CEILING }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Noisy,
    Noiseless,
    Factorized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `sum_{j>=0} |h_j|^2 / sum_j |h_j|^2` for the coefficients of `e^{i j l}`.
    pub causality_leakage: f64,
    /// Relative energy at `j < 0` of `(A-h)^T F - h^T G`.
    pub orthogonality_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSolution {
    pub mode: SolveMode,
    /// `c(0..window)`; empty in factorized mode.
    pub c: Vec<CVector>,
    /// Spectral characteristic on the grid; empty when unavailable.
    pub h_grid: Vec<CVector>,
    pub delta: f64,
    pub j: usize,
    pub window: usize,
    pub condition_bound: f64,
    pub diagnostics: Option<Diagnostics>,
    pub warnings: Vec<String>,
    pub minimax: bool,
}

impl EstimateSolution {
    /// Time-domain coefficients `h_j` of `h(l) = sum_{j<0} h_j e^{i j l}` for
    /// `j = -1, -2, ..., -lags`.
    pub fn past_coefficients(&self, lags: usize) -> Result<Vec<CVector>> {
        if self.h_grid.is_empty() {
            return Err(Error::InvalidArgument("solution carries no spectral characteristic".into()));
        }
        let n = self.h_grid.len();
        if lags >= n / 2 {
            return Err(Error::Aliasing { lag: lags as i64, n_lambda: n });
        }
        let k = self.h_grid[0].len();
        let mut out = alloc::vec![CVector::zeros(k); lags];
        for comp in 0..k {
            let vals: Vec<Complex64> = self.h_grid.iter().map(|v| v[comp]).collect();
            // coefficient of e^{-i s l} sits at lag +s
            let coef = fft::grid_coefficients(&vals, lags);
            for s in 1..=lags {
                out[s - 1][comp] = coef[lags + s];
            }
        }
        Ok(out)
    }
}

/// Solves one channel with noise density `g` (`None` for exact observations).
pub fn solve_channel(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    a: &FunctionalSpec,
    opts: &SolverOptions,
) -> Result<EstimateSolution> {
    if let Some(g) = g {
        f.compatible(g)?;
    }
    if a.k() != f.dim() {
        return Err(Error::DimensionMismatch(format!("functional has K = {}, density has K = {}", a.k(), f.dim())));
    }
    let n = f.n_lambda();
    let j = a.j();
    let cap = n / 2;
    if j > cap {
        return Err(Error::Aliasing { lag: j as i64 - 1, n_lambda: n });
    }
    let s_inv = spectral::pointwise_inverse(f, g)?;
    let mut warnings = Vec::new();

    let (c, delta, window, condition_bound) = match opts.window {
        Window::Fixed(w) => {
            let w = w.max(j);
            if w > cap {
                return Err(Error::Aliasing { lag: w as i64 - 1, n_lambda: n });
            }
            let (c, d, cb) = solve_window(f, g, &s_inv, a, w, &mut warnings)?;
            (c, d, w, cb)
        }
        Window::Adaptive { extra, max, rtol } => {
            let limit = max.max(j).min(cap);
            let mut w = (j + extra).min(limit);
            let (mut c, mut d, mut cb) = solve_window(f, g, &s_inv, a, w, &mut warnings)?;
            let mut converged = false;
            while w < limit {
                let next = (2 * w).min(limit);
                let (c2, d2, cb2) = solve_window(f, g, &s_inv, a, next, &mut warnings)?;
                let change = (d2 - d).abs() / d2.abs().max(f64::MIN_POSITIVE);
                c = c2;
                d = d2;
                cb = cb2;
                w = next;
                if change <= rtol || d2.abs() <= 1e-300 {
                    converged = true;
                    break;
                }
            }
            if !converged && w >= limit && limit > j + extra {
                warnings.push(format!("operator window reached its cap of {limit} lags before the error settled"));
            }
            (c, d, w, cb)
        }
    };
    if condition_bound > opts.condition_warning {
        warnings.push(format!("B is ill-conditioned (condition bound {condition_bound:.3e})"));
    }
    let h_grid = characteristic(f, g, &s_inv, a, &c);
    let diagnostics = Some(diagnose(f, g, a, &h_grid));
    Ok(EstimateSolution {
        mode: if g.is_some() { SolveMode::Noisy } else { SolveMode::Noiseless },
        c,
        h_grid,
        delta,
        j,
        window,
        condition_bound,
        diagnostics,
        warnings,
        minimax: false,
    })
}

/// Exact observations: `c = B^{-1} a`, error `<c, a>`.
pub fn solve_noiseless(f: &SpectralDensityGrid, a: &FunctionalSpec, opts: &SolverOptions) -> Result<EstimateSolution> {
    solve_channel(f, None, a, opts)
}

fn solve_window(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    s_inv: &[CMatrix],
    a: &FunctionalSpec,
    w: usize,
    warnings: &mut Vec<String>,
) -> Result<(Vec<CVector>, f64, f64)> {
    let ops = spectral::assemble_operators_with(f, g, s_inv, w)?;
    let k = a.k();
    let av = a.stacked(w);
    let rhs = &ops.d * &av;
    let sol = linalg::solve_hpd(&ops.b, &CMatrix::from_column_slice(w * k, 1, rhs.as_slice()));
    if sol.fallback {
        warnings.push(format!(
            "Cholesky of B failed on a {w}-lag window; used an eigenvalue-floored solve (min eigenvalue {:.3e})",
            sol.min_eigenvalue.unwrap_or(f64::NAN)
        ));
    }
    let cv = CVector::from_column_slice(sol.x.as_slice());
    let delta = if g.is_some() {
        let ra = &ops.r * &av;
        let bc = &ops.b * &cv;
        av.dotc(&ra).re + cv.dotc(&bc).re
    } else {
        av.dotc(&cv).re
    };
    let c = (0..w).map(|j| cv.rows(j * k, k).into_owned()).collect();
    Ok((c, delta, ops.condition_bound))
}

/// `h = A - (S^{-1})^T (G^T A + C)`.
fn characteristic(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    s_inv: &[CMatrix],
    a: &FunctionalSpec,
    c: &[CVector],
) -> Vec<CVector> {
    let n = f.n_lambda();
    let ag = a.transfer_grid(n);
    let cg = series_grid(c, 0, n);
    (0..n)
        .map(|t| {
            let mut inner = cg[t].clone();
            if let Some(g) = g {
                inner += g.value(t).transpose() * &ag[t];
            }
            &ag[t] - s_inv[t].transpose() * inner
        })
        .collect()
}

/// The equivalent form `h^T = (A^T F - C^T)(F+G)^{-1}`.
pub fn characteristic_first_form(
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    a: &FunctionalSpec,
    c: &[CVector],
) -> Result<Vec<CVector>> {
    let s_inv = spectral::pointwise_inverse(f, g)?;
    let n = f.n_lambda();
    let ag = a.transfer_grid(n);
    let cg = series_grid(c, 0, n);
    Ok((0..n).map(|t| s_inv[t].transpose() * (f.value(t).transpose() * &ag[t] - &cg[t])).collect())
}

fn coefficient_split(vals: &[CVector]) -> (f64, f64) {
    // energy of e^{i j l} terms with j >= 0 and with j < 0
    let k = vals.first().map_or(0, |v| v.len());
    let (mut nonneg, mut neg) = (0.0, 0.0);
    for comp in 0..k {
        let series: Vec<Complex64> = vals.iter().map(|v| v[comp]).collect();
        for (d, z) in fft::all_grid_coefficients(&series) {
            // lag d is the coefficient of e^{-i d l}
            if -d >= 0 {
                nonneg += z.norm_sqr();
            } else {
                neg += z.norm_sqr();
            }
        }
    }
    (nonneg, neg)
}

/// Causality leakage of `h` and the orthogonality residual.
pub fn diagnose(f: &SpectralDensityGrid, g: Option<&SpectralDensityGrid>, a: &FunctionalSpec, h: &[CVector]) -> Diagnostics {
    let floor = 1e-20 * a.norm_sq().max(f64::MIN_POSITIVE);
    let (h_pos, h_neg) = coefficient_split(h);
    let causality_leakage = h_pos / (h_pos + h_neg).max(floor);
    let n = f.n_lambda();
    let ag = a.transfer_grid(n);
    let resid: Vec<CVector> = (0..n)
        .map(|t| {
            let mut row = f.value(t).transpose() * (&ag[t] - &h[t]);
            if let Some(g) = g {
                row -= g.value(t).transpose() * &h[t];
            }
            row
        })
        .collect();
    let (o_pos, o_neg) = coefficient_split(&resid);
    let orthogonality_residual = o_neg / (o_pos + o_neg).max(floor);
    Diagnostics { causality_leakage, orthogonality_residual }
}

/// One channel's contribution to the field error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDelta {
    pub m: usize,
    pub l: usize,
    pub delta: f64,
}

/// Bound on one omitted channel: `Var(A z) <= sup eig F * |a|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub multiplicity: f64,
    pub sup_eigenvalue: f64,
    pub a_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub delta_total: f64,
    pub channels: usize,
    pub tail_bound: f64,
}

/// Sums channel errors in a fixed order; the tail bound covers channels that
/// were not solved.
pub fn aggregate(channels: &[ChannelDelta], tail: &[TailTerm]) -> Aggregate {
    let mut sorted: Vec<&ChannelDelta> = channels.iter().collect();
    sorted.sort_by_key(|x| (x.m, x.l));
    let delta_total = sorted.iter().map(|c| c.delta).sum();
    let tail_bound = tail.iter().map(|t| t.multiplicity * t.sup_eigenvalue * t.a_norm_sq).sum();
    Aggregate { delta_total, channels: channels.len(), tail_bound }
}

/// `sum_m h(m, n) delta_m` for an isotropic specification with one error per
/// degree.
pub fn isotropic_total(per_degree: &[f64], n: usize) -> Result<f64> {
    let mut acc = 0.0;
    for (m, d) in per_degree.iter().enumerate() {
        acc += harmonics::harmonic_count(m, n)? as f64 * d;
    }
    Ok(acc)
}
