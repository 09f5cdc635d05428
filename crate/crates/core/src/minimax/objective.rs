//! The error of a fixed estimator as a linear functional of the densities.
//!
//! With `h` the characteristic optimal at the anchor pair, the error under any
//! other pair is `(1/2pi) int (A-h)^T F conj(A-h) + h^T G conj(h)`, i.e.
//! `<M_F, F> + <M_G, G>` with `M_F = sum_l conj(A-h)(A-h)^T` and
//! `M_G = sum_l conj(h) h^T`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::extrapolate::{self, EstimateSolution, SolverOptions, Window};
use crate::linalg;
use crate::spectral::SpectralDensityGrid;

use super::projection::Family;
use super::MinimaxChannel;

/// Solutions at an anchor pair plus the gradient fields of the linear error.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub window: usize,
    /// `[channel][functional]`
    pub solutions: Vec<Vec<EstimateSolution>>,
    pub m_f: Family,
    pub m_g: Family,
    /// Sum of the optimal errors at the anchor.
    pub delta: f64,
}

pub(crate) fn check_pair(
    channels: &[MinimaxChannel],
    f: &[SpectralDensityGrid],
    g: Option<&[SpectralDensityGrid]>,
) -> Result<()> {
    if channels.is_empty() || f.len() != channels.len() || g.is_some_and(|g| g.len() != channels.len()) {
        return Err(Error::DimensionMismatch(format!(
            "{} channels, {} signal grids, {} noise grids",
            channels.len(),
            f.len(),
            g.map_or(0, |g| g.len())
        )));
    }
    for (i, ch) in channels.iter().enumerate() {
        if ch.functionals.is_empty() {
            return Err(Error::InvalidArgument(format!("channel m={} has no functionals", ch.m)));
        }
        if let Some(g) = g {
            f[i].compatible(&g[i])?;
        }
        f[i].compatible(&f[0])?;
    }
    Ok(())
}

/// Solves every functional at `(f, g)` and assembles `M_F`, `M_G`.
pub fn solve_anchor(
    channels: &[MinimaxChannel],
    f: &[SpectralDensityGrid],
    g: Option<&[SpectralDensityGrid]>,
    window: Window,
) -> Result<Anchor> {
    check_pair(channels, f, g)?;
    let opts = SolverOptions { window, ..SolverOptions::default() };
    let n = f[0].n_lambda();
    let k = f[0].dim();
    let mut solutions = Vec::with_capacity(channels.len());
    let mut m_f = Vec::with_capacity(channels.len());
    let mut m_g = Vec::with_capacity(channels.len());
    let mut delta = 0.0;
    let mut w_max = 0;
    for (i, ch) in channels.iter().enumerate() {
        let gi = g.map(|g| &g[i]);
        let mut sols = Vec::with_capacity(ch.functionals.len());
        let mut mf = alloc::vec![linalg::zeros(k, k); n];
        let mut mg = alloc::vec![linalg::zeros(k, k); n];
        for a in &ch.functionals {
            let sol = extrapolate::solve_channel(&f[i], gi, a, &opts)?;
            let ag = a.transfer_grid(n);
            for t in 0..n {
                let h = &sol.h_grid[t];
                let e = &ag[t] - h;
                mf[t] += e.map(|z| z.conj()) * e.transpose();
                mg[t] += h.map(|z| z.conj()) * h.transpose();
            }
            delta += sol.delta;
            w_max = w_max.max(sol.window);
            sols.push(sol);
        }
        solutions.push(sols);
        m_f.push(mf.iter().map(linalg::hermitian_part).collect());
        m_g.push(mg.iter().map(linalg::hermitian_part).collect());
    }
    Ok(Anchor { window: w_max, solutions, m_f, m_g, delta })
}

pub(crate) fn linear_value(m: &Family, x: &Family) -> f64 {
    let mut acc = 0.0;
    for (mc, xc) in m.iter().zip(x) {
        let n = mc.len() as f64;
        for (a, b) in mc.iter().zip(xc) {
            acc += linalg::inner(a, b) / n;
        }
    }
    acc
}

/// `Delta(h(anchor); f, g)`, linear in `(f, g)`.
pub fn evaluate_robust_objective(anchor: &Anchor, f: &[SpectralDensityGrid], g: Option<&[SpectralDensityGrid]>) -> Result<f64> {
    let shape_ok = |x: &[SpectralDensityGrid]| {
        x.len() == anchor.m_f.len()
            && x.iter().zip(&anchor.m_f).all(|(gr, m)| gr.n_lambda() == m.len() && gr.dim() == m[0].nrows())
    };
    if !shape_ok(f) || g.is_some_and(|g| !shape_ok(g)) {
        return Err(Error::DimensionMismatch("densities do not match the anchor's channels or grid".into()));
    }
    let fam = |x: &[SpectralDensityGrid]| -> Family { x.iter().map(|gr| gr.values().to_vec()).collect() };
    let mut value = linear_value(&anchor.m_f, &fam(f));
    if let Some(g) = g {
        value += linear_value(&anchor.m_g, &fam(g));
    }
    Ok(value)
}

/// Largest Frobenius norm over all channels and nodes.
pub(crate) fn sup_norm(m: &Family) -> f64 {
    m.iter().flatten().map(linalg::frobenius).fold(0.0, f64::max)
}
