//! A posteriori check of the stationarity equations at a candidate
//! least-favorable pair.
//!
//! At the maximizer, the gradient field `M_F = S^{-1} (sum_l r_G^* r_G) S^{-1}`
//! must equal the class's multiplier structure (for example
//! `(alpha^2 + gamma(l)) I` for the trace class with `gamma <= 0` only where the
//! pointwise bound is active). The multipliers are fitted by constrained least
//! squares over the grid; the residual is what remains.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::extrapolate::{self, factorize, FactorizationOptions, SolveMode, Window};
use crate::linalg::{self, CMatrix};
use crate::spectral::SpectralDensityGrid;

use super::class::{Constraint, DensityClassSpec, SideClass};
use super::objective::{self, solve_anchor};
use super::projection::{family_of, Family};
use super::MinimaxChannel;

/// Relative margin below which a pointwise bound counts as active.
const ACTIVE_RTOL: f64 = 1e-7;
/// Relative eigenvalue below which a density value counts as singular.
const SINGULAR_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Pointwise {
    None,
    /// `[channel][node][component]`
    Scalars(Vec<Vec<Vec<f64>>>),
    /// `[channel][node]`
    Matrices(Family),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    /// Squared multipliers of the integral condition per scalar component;
    /// for the entrywise L1 class, `K x K` row-major.
    pub level: Vec<f64>,
    /// `alpha alpha^*` for a matrix moment condition.
    pub level_matrix: Option<CMatrix>,
    /// `gamma(l)` / `Gamma(l)`; for L1 classes the subgradient of the modulus.
    pub pointwise: Pointwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleReport {
    pub mode: SolveMode,
    /// Optimal error at the candidate pair.
    pub objective: f64,
    pub residual_f: f64,
    pub residual_g: f64,
    pub multipliers_f: Multipliers,
    pub multipliers_g: Option<Multipliers>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    /// multiplier field constrained to `[lo, hi]`
    Shift { lo: f64, hi: f64 },
    /// L1 subgradient fixed at `sigma`
    Sign { sigma: f64, singular: bool },
    /// L1 subgradient free in `[-1, 1]`
    Kink { singular: bool },
}

impl Rule {
    fn interval(self, a: f64, w: f64) -> (f64, f64) {
        match self {
            Rule::Shift { lo, hi } => (a * w + lo, a * w + hi),
            Rule::Sign { sigma, singular } => {
                let v = a * w * sigma;
                (if singular { f64::NEG_INFINITY } else { v }, v)
            }
            Rule::Kink { singular } => (if singular { f64::NEG_INFINITY } else { -a * w }, a * w),
        }
    }
}

fn clamp(x: f64, (lo, hi): (f64, f64)) -> f64 {
    x.max(lo).min(hi)
}

/// Minimizes a convex function on `[0, hi]` by golden-section search.
fn golden_min(phi: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    let (mut a, mut b) = (0.0, hi.max(f64::MIN_POSITIVE));
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..300 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
        if b - a <= 1e-15 * (1.0 + b) {
            break;
        }
    }
    let mid = 0.5 * (a + b);
    // the boundary may beat the interior when the minimum sits at zero
    if phi(0.0) <= phi(mid) {
        0.0
    } else {
        mid
    }
}

struct Node {
    s: f64,
    w: f64,
    rule: Rule,
}

/// Fits `a >= 0` and returns it with the projected node values.
fn fit_scalar(nodes: &[Node]) -> (f64, Vec<f64>) {
    let phi = |a: f64| -> f64 {
        nodes
            .iter()
            .map(|nd| {
                let d = nd.s - clamp(nd.s, nd.rule.interval(a, nd.w));
                d * d
            })
            .sum()
    };
    let hi = nodes.iter().map(|nd| nd.s.abs() / nd.w).fold(0.0, f64::max) * 2.0 + 1e-300;
    let a = golden_min(phi, hi);
    let fitted = nodes.iter().map(|nd| clamp(nd.s, nd.rule.interval(a, nd.w))).collect();
    (a, fitted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cone {
    Zero,
    Nsd,
    Psd,
    Free,
}

impl Cone {
    fn with_singular(self, singular: bool) -> Self {
        match (self, singular) {
            (c, false) => c,
            (Cone::Zero | Cone::Nsd, true) => Cone::Nsd,
            (Cone::Psd | Cone::Free, true) => Cone::Free,
        }
    }

    fn shift(self) -> (f64, f64) {
        match self {
            Cone::Zero => (0.0, 0.0),
            Cone::Nsd => (f64::NEG_INFINITY, 0.0),
            Cone::Psd => (0.0, f64::INFINITY),
            Cone::Free => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn project(self, m: &CMatrix) -> CMatrix {
        match self {
            Cone::Zero => linalg::zeros(m.nrows(), m.ncols()),
            Cone::Nsd => -linalg::project_psd(&-m, 0.0),
            Cone::Psd => linalg::project_psd(m, 0.0),
            Cone::Free => m.clone(),
        }
    }
}

fn singular_nodes(x: &Family) -> Vec<Vec<bool>> {
    let scale = x.iter().flatten().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
    x.iter().map(|c| c.iter().map(|m| linalg::min_eigenvalue(m) <= SINGULAR_RTOL * scale).collect()).collect()
}

fn active(value: f64, bound: f64) -> bool {
    value - bound <= ACTIVE_RTOL * (1.0 + bound.abs())
}

fn loewner_active(x: &CMatrix, bound: &CMatrix) -> bool {
    let scale = 1.0 + linalg::max_abs(bound);
    linalg::min_eigenvalue(&linalg::hermitian_part(&(x - bound))) <= ACTIVE_RTOL * scale
}

/// Node cone for pointwise bounds; `comp` is the statistic direction (`None`
/// for the full statistic).
fn cone_at(side: &SideClass, x: &CMatrix, ch: usize, t: usize, comp: Option<&CMatrix>) -> Cone {
    let stat_of = |gr: &SpectralDensityGrid| -> (f64, f64) {
        let e = comp.expect("scalar statistic direction");
        (linalg::inner(e, x), linalg::inner(e, gr.value(t)))
    };
    match &side.constraint {
        Constraint::Power { .. } | Constraint::L1 { .. } => Cone::Zero,
        Constraint::Contaminated { eps, reference, .. } => {
            let hit = match comp {
                None => loewner_active(x, &(reference[ch].value(t) * Complex64::from(1.0 - eps))),
                Some(_) => {
                    let (v, b) = stat_of(&reference[ch]);
                    active(v, (1.0 - eps) * b)
                }
            };
            if hit {
                Cone::Nsd
            } else {
                Cone::Zero
            }
        }
        Constraint::Band { lower, upper, .. } => {
            let (lo, hi) = match comp {
                None => (loewner_active(x, lower[ch].value(t)), loewner_active(&-x, &-upper[ch].value(t))),
                Some(_) => {
                    let (v, b_lo) = stat_of(&lower[ch]);
                    let (_, b_hi) = stat_of(&upper[ch]);
                    (active(v, b_lo), active(-v, -b_hi))
                }
            };
            match (lo, hi) {
                (true, true) => Cone::Free,
                (true, false) => Cone::Nsd,
                (false, true) => Cone::Psd,
                (false, false) => Cone::Zero,
            }
        }
    }
}

/// Orthonormal basis (columns) of the near-null space of each density value.
fn kernels(x: &Family) -> Vec<Vec<Option<CMatrix>>> {
    let scale = x.iter().flatten().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
    x.iter()
        .map(|c| {
            c.iter()
                .map(|m| {
                    let (vals, vecs) = linalg::hermitian_eigen(m);
                    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= SINGULAR_RTOL * scale).collect();
                    if cols.is_empty() {
                        None
                    } else {
                        Some(CMatrix::from_fn(m.nrows(), cols.len(), |r, j| vecs[(r, cols[j])]))
                    }
                })
                .collect()
        })
        .collect()
}

/// Nearest point to `e` of `{-Q Y Q^* : Y >= 0}`, the normal cone of the
/// PSD constraint at a density with kernel `Q`.
fn kernel_part(e: &CMatrix, q: &CMatrix) -> CMatrix {
    let inner = linalg::hermitian_part(&(q.adjoint() * e * q));
    -(q * linalg::project_psd(&-inner, 0.0) * q.adjoint())
}

/// Fits the side's multiplier structure to `m` at density `x`; returns the
/// fitted field (without the kernel term) and the multipliers.
///
/// For matrix densities with a nontrivial kernel the fit alternates with the
/// best kernel term `-Q Y Q^*`.
fn fit_side(m: &Family, x: &Family, side: &SideClass, weights: &[f64]) -> (Family, Multipliers) {
    let k = x[0][0].nrows();
    if k == 1 {
        return fit_side_flags(m, x, side, weights, &singular_nodes(x));
    }
    let ker = kernels(x);
    let plain: Vec<Vec<bool>> = x.iter().map(|c| alloc::vec![false; c.len()]).collect();
    if ker.iter().flatten().all(Option::is_none) {
        return fit_side_flags(m, x, side, weights, &plain);
    }
    let scale = objective::sup_norm(m).max(f64::MIN_POSITIVE);
    let mut z: Family = m.iter().map(|c| c.iter().map(|_| linalg::zeros(k, k)).collect()).collect();
    let mut out = fit_side_flags(m, x, side, weights, &plain);
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for (ch, zc) in z.iter_mut().enumerate() {
            for (t, zt) in zc.iter_mut().enumerate() {
                if let Some(q) = &ker[ch][t] {
                    let next = kernel_part(&(&m[ch][t] - &out.0[ch][t]), q);
                    change = change.max(linalg::frobenius(&(&next - &*zt)));
                    *zt = next;
                }
            }
        }
        if change <= 1e-12 * scale {
            break;
        }
        let target: Family = m.iter().zip(&z).map(|(mc, zc)| mc.iter().zip(zc).map(|(a, b)| a - b).collect()).collect();
        out = fit_side_flags(&target, x, side, weights, &plain);
    }
    out
}

fn fit_side_flags(m: &Family, x: &Family, side: &SideClass, weights: &[f64], singular: &[Vec<bool>]) -> (Family, Multipliers) {
    let k = x[0][0].nrows();
    let stat = &side.statistic;
    let zero = || -> Family { m.iter().map(|c| c.iter().map(|_| linalg::zeros(k, k)).collect()).collect() };

    if let Constraint::L1 { center, .. } = &side.constraint {
        if stat.is_full() {
            return fit_l1_matrix(m, x, center, weights, singular);
        }
        let dirs = stat.directions(k);
        let mut fitted = zero();
        let mut level = Vec::new();
        let mut gamma: Vec<Vec<Vec<f64>>> = m.iter().map(|c| c.iter().map(|_| Vec::new()).collect()).collect();
        for e in &dirs {
            let en = e.norm_squared();
            let mut nodes = Vec::new();
            for (ch, (mc, xc)) in m.iter().zip(x).enumerate() {
                for (t, (mt, xt)) in mc.iter().zip(xc).enumerate() {
                    let c0 = linalg::inner(e, center[ch].value(t));
                    let dev = linalg::inner(e, xt) - c0;
                    let sing = singular[ch][t];
                    let rule = if dev.abs() <= 1e-9 * (1.0 + c0.abs()) {
                        Rule::Kink { singular: sing }
                    } else {
                        Rule::Sign { sigma: dev.signum(), singular: sing }
                    };
                    nodes.push(Node { s: linalg::inner(e, mt) / en, w: weights[ch], rule });
                }
            }
            let (mu, vals) = fit_scalar(&nodes);
            level.push(mu);
            let mut idx = 0;
            for (ch, fc) in fitted.iter_mut().enumerate() {
                for (t, ft) in fc.iter_mut().enumerate() {
                    *ft += e * Complex64::from(vals[idx]);
                    let scale = mu * weights[ch];
                    let sub = match nodes[idx].rule {
                        Rule::Sign { sigma, .. } => sigma,
                        _ if scale > 0.0 => (vals[idx] / scale).clamp(-1.0, 1.0),
                        _ => 0.0,
                    };
                    gamma[ch][t].push(sub);
                    idx += 1;
                }
            }
        }
        return (fitted, Multipliers { level, level_matrix: None, pointwise: Pointwise::Scalars(gamma) });
    }

    if stat.is_full() {
        return fit_moment_matrix(m, x, side, weights, singular);
    }

    let dirs = stat.directions(k);
    let mut fitted = zero();
    let mut level = Vec::new();
    let mut gamma: Vec<Vec<Vec<f64>>> = m.iter().map(|c| c.iter().map(|_| Vec::new()).collect()).collect();
    for e in &dirs {
        let en = e.norm_squared();
        let mut nodes = Vec::new();
        for (ch, (mc, xc)) in m.iter().zip(x).enumerate() {
            for (t, (mt, xt)) in mc.iter().zip(xc).enumerate() {
                let cone = cone_at(side, xt, ch, t, Some(e)).with_singular(singular[ch][t]);
                let (lo, hi) = cone.shift();
                nodes.push(Node { s: linalg::inner(e, mt) / en, w: weights[ch], rule: Rule::Shift { lo, hi } });
            }
        }
        let (a, vals) = fit_scalar(&nodes);
        level.push(a);
        let mut idx = 0;
        for (ch, fc) in fitted.iter_mut().enumerate() {
            for (t, ft) in fc.iter_mut().enumerate() {
                *ft += e * Complex64::from(vals[idx]);
                gamma[ch][t].push(vals[idx] - a * weights[ch]);
                idx += 1;
            }
        }
    }
    let pointwise = match side.constraint {
        Constraint::Power { .. } => Pointwise::None,
        _ => Pointwise::Scalars(gamma),
    };
    (fitted, Multipliers { level, level_matrix: None, pointwise })
}

fn fit_moment_matrix(m: &Family, x: &Family, side: &SideClass, weights: &[f64], singular: &[Vec<bool>]) -> (Family, Multipliers) {
    let k = x[0][0].nrows();
    let cones: Vec<Vec<Cone>> = x
        .iter()
        .enumerate()
        .map(|(ch, xc)| {
            xc.iter().enumerate().map(|(t, xt)| cone_at(side, xt, ch, t, None).with_singular(singular[ch][t])).collect()
        })
        .collect();
    let w2: f64 = m.iter().zip(weights).map(|(c, w)| w * w * c.len() as f64).sum();
    let mut gamma: Family = m.iter().map(|c| c.iter().map(|_| linalg::zeros(k, k)).collect()).collect();
    let mut a = linalg::zeros(k, k);
    for _ in 0..5000 {
        let mut acc = linalg::zeros(k, k);
        for ((mc, gc), w) in m.iter().zip(&gamma).zip(weights) {
            for (mt, gt) in mc.iter().zip(gc) {
                acc += (mt - gt) * Complex64::from(*w);
            }
        }
        let next = linalg::project_psd(&linalg::hermitian_part(&(acc / Complex64::from(w2))), 0.0);
        for (ch, gc) in gamma.iter_mut().enumerate() {
            for (t, gt) in gc.iter_mut().enumerate() {
                *gt = cones[ch][t].project(&(&m[ch][t] - &next * Complex64::from(weights[ch])));
            }
        }
        let change = linalg::frobenius(&(&next - &a));
        a = next;
        if change <= 1e-15 * (1.0 + linalg::frobenius(&a)) {
            break;
        }
    }
    let fitted = gamma.iter().zip(weights).map(|(gc, w)| gc.iter().map(|gt| &a * Complex64::from(*w) + gt).collect()).collect();
    let pointwise = match side.constraint {
        Constraint::Power { .. } => Pointwise::None,
        _ => Pointwise::Matrices(gamma),
    };
    (fitted, Multipliers { level: Vec::new(), level_matrix: Some(a), pointwise })
}

fn fit_l1_matrix(
    m: &Family,
    x: &Family,
    center: &[SpectralDensityGrid],
    weights: &[f64],
    singular: &[Vec<bool>],
) -> (Family, Multipliers) {
    let k = x[0][0].nrows();
    let mut fitted: Family = m.iter().map(|c| c.iter().map(|_| linalg::zeros(k, k)).collect()).collect();
    let mut sub: Family = fitted.clone();
    let mut level = alloc::vec![0.0; k * k];
    for r in 0..k {
        for s in r..k {
            // (target, weight, direction or None on the kink)
            let mut nodes: Vec<(Complex64, f64, Option<Complex64>, bool)> = Vec::new();
            for (ch, (mc, xc)) in m.iter().zip(x).enumerate() {
                for (t, (mt, xt)) in mc.iter().zip(xc).enumerate() {
                    let c0 = center[ch].value(t)[(r, s)];
                    let dev = xt[(r, s)] - c0;
                    let dir = if dev.norm() <= 1e-9 * (1.0 + c0.norm()) { None } else { Some(dev / dev.norm()) };
                    nodes.push((mt[(r, s)], weights[ch], dir, singular[ch][t]));
                }
            }
            let nearest = |mu: f64, (q, w, dir, _): &(Complex64, f64, Option<Complex64>, bool)| -> Complex64 {
                match dir {
                    Some(d) => *d * (mu * w),
                    None => {
                        let r = q.norm();
                        if r <= mu * w {
                            *q
                        } else {
                            *q * (mu * w / r)
                        }
                    }
                }
            };
            let phi = |mu: f64| -> f64 { nodes.iter().filter(|nd| !nd.3).map(|nd| (nd.0 - nearest(mu, nd)).norm_sqr()).sum() };
            let hi = nodes.iter().map(|nd| nd.0.norm() / nd.1).fold(0.0, f64::max) * 2.0 + 1e-300;
            let mu = golden_min(phi, hi);
            level[r * k + s] = mu;
            level[s * k + r] = mu;
            let mut idx = 0;
            for (ch, fc) in fitted.iter_mut().enumerate() {
                for (t, ft) in fc.iter_mut().enumerate() {
                    let v = nearest(mu, &nodes[idx]);
                    let scale = mu * weights[ch];
                    let sg = match nodes[idx].2 {
                        Some(d) => d,
                        None if scale > 0.0 => v / scale,
                        None => Complex64::new(0.0, 0.0),
                    };
                    ft[(r, s)] = v;
                    ft[(s, r)] = v.conj();
                    sub[ch][t][(r, s)] = sg;
                    sub[ch][t][(s, r)] = sg.conj();
                    idx += 1;
                }
            }
        }
    }
    (fitted, Multipliers { level, level_matrix: None, pointwise: Pointwise::Matrices(sub) })
}

fn residual(m: &Family, fitted: &Family, x: &Family) -> f64 {
    let scale = objective::sup_norm(m);
    if scale == 0.0 {
        return 0.0;
    }
    let ker = kernels(x);
    let mut worst: f64 = 0.0;
    for (ch, (mc, fc)) in m.iter().zip(fitted).enumerate() {
        for (t, (mt, ft)) in mc.iter().zip(fc).enumerate() {
            let mut e = linalg::hermitian_part(&(mt - ft));
            if let Some(q) = &ker[ch][t] {
                // a singular density value admits an extra nonpositive term on its kernel
                e -= kernel_part(&e, q);
            }
            worst = worst.max(linalg::frobenius(&e));
        }
    }
    worst / scale
}

/// Gradient field of the exact-observation problem built from the canonical
/// factor: `M_F = P^{-*} conj(S) S^T P^{-1}` summed over functionals.
fn factorized_field(channels: &[MinimaxChannel], f: &[SpectralDensityGrid]) -> Result<(Family, f64)> {
    let mut out = Vec::with_capacity(channels.len());
    let mut total = 0.0;
    for (ch, fi) in channels.iter().zip(f) {
        let fac = factorize::spectral_factorize(fi, &FactorizationOptions::default())?;
        let n = fac.n_lambda;
        let k = fi.dim();
        let p = fac.factor_grid();
        let mut inv = Vec::with_capacity(n);
        for (t, pm) in p.iter().enumerate() {
            inv.push(linalg::inverse(pm).ok_or(Error::SingularFactor { lambda: crate::fft::lambda(t, n) })?);
        }
        let mut field = alloc::vec![linalg::zeros(k, k); n];
        for a in &ch.functionals {
            let ad = factorize::functional_times_factor(&fac.d, a);
            total += ad.iter().map(|v| v.norm_squared()).sum::<f64>();
            let s = extrapolate::series_grid(&ad, 0, n);
            for t in 0..n {
                let sc = s[t].map(|z| z.conj());
                field[t] += inv[t].adjoint() * (sc * s[t].transpose()) * &inv[t];
            }
        }
        out.push(field.iter().map(linalg::hermitian_part).collect());
    }
    Ok((out, total))
}

/// Fits the class multipliers at `(f0, g0)` and reports the stationarity
/// residuals. `Noisy` needs a noise class and density; the other modes
/// need neither.
pub fn saddle_point_residual(
    channels: &[MinimaxChannel],
    f0: &[SpectralDensityGrid],
    g0: Option<&[SpectralDensityGrid]>,
    class: &DensityClassSpec,
    mode: SolveMode,
    window: Window,
) -> Result<SaddleReport> {
    match (mode, &class.g, g0) {
        (SolveMode::Noisy, Some(_), Some(_)) => {}
        (SolveMode::Noiseless | SolveMode::Factorized, None, None) => {}
        (SolveMode::Noisy, _, _) => {
            return Err(Error::ModeMismatch("noisy residuals need a noise class and a noise density".into()))
        }
        _ => {
            return Err(Error::ModeMismatch(format!(
                "{mode:?} residuals apply to exact observations; the class or the input carries noise"
            )))
        }
    }
    objective::check_pair(channels, f0, g0)?;
    if class.weights.len() != channels.len() {
        return Err(Error::DimensionMismatch(format!(
            "class has {} weights for {} channels",
            class.weights.len(),
            channels.len()
        )));
    }
    class.validate(f0[0].dim(), f0[0].n_lambda())?;
    if mode == SolveMode::Factorized {
        let (mf, total) = factorized_field(channels, f0)?;
        Ok(report_from_fields(&mf, None, total, f0, None, class, mode))
    } else {
        let anchor = solve_anchor(channels, f0, g0, window)?;
        Ok(report_from_fields(&anchor.m_f, Some(&anchor.m_g), anchor.delta, f0, g0, class, mode))
    }
}

/// Multiplier fit and residuals for given gradient fields at `(f0, g0)`.
pub(crate) fn report_from_fields(
    m_f: &Family,
    m_g: Option<&Family>,
    objective: f64,
    f0: &[SpectralDensityGrid],
    g0: Option<&[SpectralDensityGrid]>,
    class: &DensityClassSpec,
    mode: SolveMode,
) -> SaddleReport {
    let xf = family_of(f0);
    let (fit_f, mult_f) = fit_side(m_f, &xf, &class.f, &class.weights);
    let residual_f = residual(m_f, &fit_f, &xf);
    let (residual_g, multipliers_g) = match (g0, &class.g, m_g) {
        (Some(g), Some(side), Some(mg)) => {
            let xg = family_of(g);
            let (fit_g, mult_g) = fit_side(mg, &xg, side, &class.weights);
            (residual(mg, &fit_g, &xg), Some(mult_g))
        }
        _ => (0.0, None),
    };
    SaddleReport { mode, objective, residual_f, residual_g, multipliers_f: mult_f, multipliers_g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrapolate::FunctionalSpec;
    use crate::minimax::class::{ClassParams, ClassVariant};
    use crate::spectral::RationalDensity;

    fn one(a: FunctionalSpec) -> Vec<MinimaxChannel> {
        alloc::vec![MinimaxChannel { m: 0, functionals: alloc::vec![a] }]
    }

    fn power_class(p: f64) -> DensityClassSpec {
        let params = ClassParams { p: Some(p), ..Default::default() };
        DensityClassSpec::from_variant(ClassVariant::parse("D0_1").unwrap(), &params, alloc::vec![1.0]).unwrap()
    }

    #[test]
    fn constant_density_is_stationary_for_power_class() {
        let n = 128;
        let f = [SpectralDensityGrid::scalar(n, |_| 2.0).unwrap()];
        let ch = one(FunctionalSpec::unit(1, 1));
        for mode in [SolveMode::Noiseless, SolveMode::Factorized] {
            let rep = saddle_point_residual(&ch, &f, None, &power_class(2.0), mode, Window::default()).unwrap();
            assert!(rep.residual_f < 1e-9, "{mode:?}: {}", rep.residual_f);
            assert!((rep.objective - 2.0).abs() < 1e-9);
            assert!((rep.multipliers_f.level[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_optimal_density_has_large_residual() {
        let n = 128;
        let f = [RationalDensity::scalar(&[1.0], &[1.0, -0.6]).unwrap().rasterize(n).unwrap()];
        let ch = one(FunctionalSpec::unit(1, 1));
        let p = f[0].mean_trace();
        let rep = saddle_point_residual(&ch, &f, None, &power_class(p), SolveMode::Noiseless, Window::default()).unwrap();
        assert!(rep.residual_f > 0.1, "{}", rep.residual_f);
    }

    #[test]
    fn factorized_field_matches_solved_field() {
        let n = 256;
        let num = alloc::vec![
            linalg::identity(2),
            CMatrix::from_row_slice(2, 2, &[linalg::c(0.3, 0.1), linalg::c(0.0, 0.0), linalg::c(0.2, 0.0), linalg::c(-0.1, 0.2)])
        ];
        let den = alloc::vec![
            linalg::identity(2),
            CMatrix::from_row_slice(
                2,
                2,
                &[linalg::c(-0.4, 0.0), linalg::c(0.1, 0.0), linalg::c(0.0, 0.0), linalg::c(0.2, -0.1)]
            )
        ];
        let f = [RationalDensity::new(num, den).unwrap().rasterize(n).unwrap()];
        let a = FunctionalSpec::new(alloc::vec![
            crate::linalg::CVector::from_vec(alloc::vec![linalg::c(1.0, 0.0), linalg::c(0.0, 0.5)]),
            crate::linalg::CVector::from_vec(alloc::vec![linalg::c(0.3, 0.0), linalg::c(-0.2, 0.1)]),
        ])
        .unwrap();
        let ch = one(a);
        let (mf, total) = factorized_field(&ch, &f).unwrap();
        let anchor = solve_anchor(&ch, &f, None, Window::default()).unwrap();
        assert!((total - anchor.delta).abs() < 1e-6 * anchor.delta);
        let worst = mf[0].iter().zip(&anchor.m_f[0]).map(|(x, y)| linalg::max_abs(&(x - y))).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn slack_nodes_carry_no_pointwise_multiplier() {
        let n = 64;
        let u = SpectralDensityGrid::scalar(n, |l| 1.0 + 0.8 * l.cos()).unwrap();
        let params = ClassParams { u: Some(alloc::vec![u.clone()]), eps: Some(0.3), p: Some(1.2), ..Default::default() };
        let class = DensityClassSpec::from_variant(ClassVariant::parse("Deps1").unwrap(), &params, alloc::vec![1.0]).unwrap();
        // a feasible point: (1-eps) u plus a bump
        let f = [SpectralDensityGrid::scalar(n, |l| 0.7 * (1.0 + 0.8 * l.cos()) + 0.5 * (1.0 + (2.0 * l).sin()).max(0.0) * 0.3)
            .unwrap()];
        let ch = one(FunctionalSpec::unit(1, 2));
        let rep = saddle_point_residual(&ch, &f, None, &class, SolveMode::Noiseless, Window::default()).unwrap();
        let Pointwise::Scalars(gamma) = &rep.multipliers_f.pointwise else { panic!("scalar multipliers expected") };
        for (t, g) in gamma[0].iter().enumerate() {
            let tr = f[0].value(t)[(0, 0)].re;
            let floor = 0.7 * u.value(t)[(0, 0)].re;
            if tr - floor > 1e-6 {
                assert!(g[0].abs() <= 1e-6);
            }
            assert!(g[0] <= 0.0);
        }
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let n = 32;
        let f = [SpectralDensityGrid::identity(1, n)];
        let ch = one(FunctionalSpec::unit(1, 1));
        let err = saddle_point_residual(&ch, &f, Some(&f), &power_class(1.0), SolveMode::Factorized, Window::default());
        assert!(matches!(err, Err(Error::ModeMismatch(_))));
        let err = saddle_point_residual(&ch, &f, None, &power_class(1.0), SolveMode::Noisy, Window::default());
        assert!(matches!(err, Err(Error::ModeMismatch(_))));
    }
}
