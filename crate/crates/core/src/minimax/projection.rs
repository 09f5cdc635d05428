//! Grid-L2 projection onto an admissible class.
//!
//! The class is an intersection of simple convex sets (the PSD cone at every
//! node, pointwise slabs or Loewner bounds, a moment hyperplane or weighted L1
//! ball). Each has an exact projection; Dykstra's alternating scheme combines
//! them into the projection onto the intersection.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spectral::SpectralDensityGrid;

use super::class::{Constraint, DensityClassSpec, Level, SideClass, Statistic};

/// Matrix values indexed `[channel][node]`.
pub type Family = Vec<Vec<CMatrix>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub max_cycles: usize,
    /// Stop once a full cycle moves the iterate by at most this (relative).
    pub tol: f64,
    /// Largest relative distance to any constituent set accepted as feasible.
    pub feasibility_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { max_cycles: 20_000, tol: 1e-14, feasibility_tol: 1e-8 }
    }
}

pub(crate) fn family_of(grids: &[SpectralDensityGrid]) -> Family {
    grids.iter().map(|g| g.values().to_vec()).collect()
}

pub(crate) fn grids_of(x: &Family) -> Vec<SpectralDensityGrid> {
    x.iter().map(|v| SpectralDensityGrid::from_values_unchecked(v.clone())).collect()
}

pub(crate) fn norm(x: &Family) -> f64 {
    libm::sqrt(x.iter().flatten().map(|m| m.norm_squared()).sum::<f64>())
}

pub(crate) fn distance(x: &Family, y: &Family) -> f64 {
    libm::sqrt(x.iter().flatten().zip(y.iter().flatten()).map(|(a, b)| (a - b).norm_squared()).sum::<f64>())
}

fn zip_apply(x: &mut Family, y: &Family, f: impl Fn(&mut CMatrix, &CMatrix)) {
    for (xc, yc) in x.iter_mut().zip(y) {
        for (a, b) in xc.iter_mut().zip(yc) {
            f(a, b);
        }
    }
}

enum Set {
    Psd,
    /// `lo <= Re tr(E_i^* X) <= hi` per node; bounds `[channel][node][i]`.
    Slab {
        dirs: Vec<CMatrix>,
        lo: Vec<Vec<Vec<f64>>>,
        hi: Vec<Vec<Vec<f64>>>,
    },
    /// `X >= bound` (`upper = false`) or `X <= bound` in the Loewner order.
    Loewner {
        bound: Family,
        upper: bool,
    },
    /// `sum_{m,t} c_m Re tr(E_i^* X_mt) = target_i`.
    Moment {
        dirs: Vec<CMatrix>,
        coef: Vec<f64>,
        target: Vec<f64>,
    },
    /// `sum_{m,t} c_m X_mt = target`.
    MomentMatrix {
        coef: Vec<f64>,
        target: CMatrix,
    },
    /// `sum_{m,t} c_m |stat_i(X_mt) - center_i| <= radius_i`.
    Ball {
        dirs: Vec<CMatrix>,
        coef: Vec<f64>,
        center: Vec<Vec<Vec<f64>>>,
        radius: Vec<f64>,
    },
    /// Entrywise version on the upper triangle (complex moduli).
    BallMatrix {
        coef: Vec<f64>,
        center: Family,
        radius: Vec<f64>,
    },
}

impl Set {
    fn name(&self) -> &'static str {
        match self {
            Set::Psd => "positive semidefiniteness",
            Set::Slab { .. } => "pointwise bounds",
            Set::Loewner { upper: false, .. } => "pointwise lower matrix bound",
            Set::Loewner { upper: true, .. } => "pointwise upper matrix bound",
            Set::Moment { .. } | Set::MomentMatrix { .. } => "power normalization",
            Set::Ball { .. } | Set::BallMatrix { .. } => "L1 neighbourhood",
        }
    }

    fn project(&self, x: &mut Family) {
        match self {
            Set::Psd => {
                for m in x.iter_mut().flatten() {
                    *m = linalg::project_psd(m, 0.0);
                }
            }
            Set::Slab { dirs, lo, hi } => {
                for (ch, xc) in x.iter_mut().enumerate() {
                    for (t, m) in xc.iter_mut().enumerate() {
                        for (i, e) in dirs.iter().enumerate() {
                            let v = linalg::inner(e, m);
                            let target = v.max(lo[ch][t][i]).min(hi[ch][t][i]);
                            if target != v {
                                *m += e * Complex64::from((target - v) / e.norm_squared());
                            }
                        }
                    }
                }
            }
            Set::Loewner { bound, upper } => zip_apply(x, bound, |m, b| {
                *m = if *upper { b - linalg::project_psd(&(b - &*m), 0.0) } else { b + linalg::project_psd(&(&*m - b), 0.0) };
            }),
            Set::Moment { dirs, coef, target } => {
                for (i, e) in dirs.iter().enumerate() {
                    let mut value = 0.0;
                    let mut denom = 0.0;
                    for (c, xc) in coef.iter().zip(x.iter()) {
                        for m in xc {
                            value += c * linalg::inner(e, m);
                            denom += c * c * e.norm_squared();
                        }
                    }
                    let tau = (target[i] - value) / denom;
                    for (c, xc) in coef.iter().zip(x.iter_mut()) {
                        for m in xc.iter_mut() {
                            *m += e * Complex64::from(tau * c);
                        }
                    }
                }
            }
            Set::MomentMatrix { coef, target } => {
                let mut value = linalg::zeros(target.nrows(), target.ncols());
                let mut denom = 0.0;
                for (c, xc) in coef.iter().zip(x.iter()) {
                    for m in xc {
                        value += m * Complex64::from(*c);
                        denom += c * c;
                    }
                }
                let step = (target - value) / Complex64::from(denom);
                for (c, xc) in coef.iter().zip(x.iter_mut()) {
                    for m in xc.iter_mut() {
                        *m += &step * Complex64::from(*c);
                    }
                }
            }
            Set::Ball { dirs, coef, center, radius } => {
                for (i, e) in dirs.iter().enumerate() {
                    let mut dev = Vec::new();
                    let mut w = Vec::new();
                    for (ch, xc) in x.iter().enumerate() {
                        for (t, m) in xc.iter().enumerate() {
                            dev.push(Complex64::from(linalg::inner(e, m) - center[ch][t][i]));
                            w.push(coef[ch]);
                        }
                    }
                    let proj = project_l1_ball(&dev, &w, radius[i]);
                    let mut idx = 0;
                    for xc in x.iter_mut() {
                        for m in xc.iter_mut() {
                            let d = proj[idx].re - dev[idx].re;
                            if d != 0.0 {
                                *m += e * Complex64::from(d / e.norm_squared());
                            }
                            idx += 1;
                        }
                    }
                }
            }
            Set::BallMatrix { coef, center, radius } => {
                let k = center[0][0].nrows();
                for r in 0..k {
                    for s in r..k {
                        let mut dev = Vec::new();
                        let mut w = Vec::new();
                        for (ch, xc) in x.iter().enumerate() {
                            for (t, m) in xc.iter().enumerate() {
                                let z = m[(r, s)] - center[ch][t][(r, s)];
                                dev.push(if r == s { Complex64::from(z.re) } else { z });
                                w.push(coef[ch]);
                            }
                        }
                        let proj = project_l1_ball(&dev, &w, radius[r * k + s]);
                        let mut idx = 0;
                        for (ch, xc) in x.iter_mut().enumerate() {
                            for (t, m) in xc.iter_mut().enumerate() {
                                let z = center[ch][t][(r, s)] + proj[idx];
                                if r == s {
                                    m[(r, r)] = Complex64::from(z.re);
                                } else {
                                    m[(r, s)] = z;
                                    m[(s, r)] = z.conj();
                                }
                                idx += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Euclidean projection of `y` onto `{z : sum_i w_i |z_i| <= radius}`.
/// Entries with zero weight are left alone.
pub fn project_l1_ball(y: &[Complex64], w: &[f64], radius: f64) -> Vec<Complex64> {
    let total: f64 = y.iter().zip(w).map(|(z, c)| c * z.norm()).sum();
    if total <= radius {
        return y.to_vec();
    }
    let shrink = |tau: f64| -> f64 { y.iter().zip(w).map(|(z, c)| c * (z.norm() - tau * c).max(0.0)).sum() };
    let mut lo = 0.0;
    let mut hi = y.iter().zip(w).filter(|(_, c)| **c > 0.0).map(|(z, c)| z.norm() / c).fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shrink(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = hi;
    y.iter()
        .zip(w)
        .map(|(z, c)| {
            let r = z.norm();
            if r == 0.0 {
                *z
            } else {
                *z * ((r - tau * c).max(0.0) / r)
            }
        })
        .collect()
}

fn stat_values(stat: &Statistic, grids: &[SpectralDensityGrid], scale: f64) -> Vec<Vec<Vec<f64>>> {
    grids.iter().map(|g| g.values().iter().map(|m| stat.values(m).iter().map(|v| v * scale).collect()).collect()).collect()
}

fn filled(shape_from: &[Vec<Vec<f64>>], value: f64) -> Vec<Vec<Vec<f64>>> {
    shape_from.iter().map(|c| c.iter().map(|v| alloc::vec![value; v.len()]).collect()).collect()
}

fn scaled_family(grids: &[SpectralDensityGrid], s: f64) -> Family {
    grids.iter().map(|g| g.values().iter().map(|m| m * Complex64::from(s)).collect()).collect()
}

fn build_sets(side: &SideClass, weights: &[f64], n: usize, k: usize) -> Vec<Set> {
    let coef: Vec<f64> = weights.iter().map(|w| w / n as f64).collect();
    let stat = &side.statistic;
    let dirs = stat.directions(k);
    let moment = |level: &Level| -> Set {
        match level {
            Level::Matrix(p) => Set::MomentMatrix { coef: coef.clone(), target: linalg::hermitian_part(p) },
            other => Set::Moment { dirs: dirs.clone(), coef: coef.clone(), target: other.components() },
        }
    };
    let mut sets = alloc::vec![Set::Psd];
    match &side.constraint {
        Constraint::Contaminated { eps, reference, power, .. } => {
            if stat.is_full() {
                sets.push(Set::Loewner { bound: scaled_family(reference, 1.0 - eps), upper: false });
            } else {
                let lo = stat_values(stat, reference, 1.0 - eps);
                let hi = filled(&lo, f64::INFINITY);
                sets.push(Set::Slab { dirs: dirs.clone(), lo, hi });
            }
            sets.push(moment(power));
        }
        Constraint::Power { power } => sets.push(moment(power)),
        Constraint::Band { lower, upper, power } => {
            if stat.is_full() {
                sets.push(Set::Loewner { bound: scaled_family(lower, 1.0), upper: false });
                sets.push(Set::Loewner { bound: scaled_family(upper, 1.0), upper: true });
            } else {
                sets.push(Set::Slab { dirs: dirs.clone(), lo: stat_values(stat, lower, 1.0), hi: stat_values(stat, upper, 1.0) });
            }
            sets.push(moment(power));
        }
        Constraint::L1 { center, radius } => match radius {
            Level::Matrix(r) => {
                let radius = (0..k * k).map(|i| r[(i / k, i % k)].re).collect();
                sets.push(Set::BallMatrix { coef: coef.clone(), center: scaled_family(center, 1.0), radius });
            }
            other => sets.push(Set::Ball {
                dirs: dirs.clone(),
                coef: coef.clone(),
                center: stat_values(stat, center, 1.0),
                radius: other.components(),
            }),
        },
    }
    sets
}

/// Quick necessary conditions with readable messages.
fn precheck(side: &SideClass, weights: &[f64], n: usize) -> Result<()> {
    let stat = &side.statistic;
    let integral = |grids: &[SpectralDensityGrid], s: f64| -> Vec<f64> {
        let mut acc = alloc::vec![0.0; stat.components(grids[0].dim())];
        for (g, w) in grids.iter().zip(weights) {
            for m in g.values() {
                for (a, v) in acc.iter_mut().zip(stat.values(m)) {
                    *a += s * w * v / n as f64;
                }
            }
        }
        acc
    };
    let matrix_integral = |grids: &[SpectralDensityGrid], s: f64| -> CMatrix {
        let k = grids[0].dim();
        let mut acc = linalg::zeros(k, k);
        for (g, w) in grids.iter().zip(weights) {
            for m in g.values() {
                acc += m * Complex64::from(s * w / n as f64);
            }
        }
        acc
    };
    let below = |lhs: &[f64], rhs: &[f64]| lhs.iter().zip(rhs).all(|(a, b)| *a <= *b * (1.0 + 1e-10) + 1e-14);
    let loewner_below = |lhs: &CMatrix, rhs: &CMatrix| {
        let scale = 1.0 + linalg::max_abs(rhs);
        linalg::min_eigenvalue(&linalg::hermitian_part(&(rhs - lhs))) >= -1e-10 * scale
    };
    let fail = |msg: &str| Err(Error::Infeasible(format!("{}: {msg}", side.describe())));
    match &side.constraint {
        Constraint::Contaminated { eps, reference, power, .. } => match power {
            Level::Matrix(p) => {
                if !loewner_below(&matrix_integral(reference, 1.0 - eps), p) {
                    return fail("the power is below the contamination floor (1-eps) U");
                }
            }
            lvl => {
                if !below(&integral(reference, 1.0 - eps), &lvl.components()) {
                    return fail("the power is below the contamination floor (1-eps) U");
                }
            }
        },
        Constraint::Band { lower, upper, power } => match power {
            Level::Matrix(p) => {
                if !loewner_below(&matrix_integral(lower, 1.0), p) || !loewner_below(p, &matrix_integral(upper, 1.0)) {
                    return fail("the power lies outside the range allowed by V and U");
                }
            }
            lvl => {
                let c = lvl.components();
                if !below(&integral(lower, 1.0), &c) || !below(&c, &integral(upper, 1.0)) {
                    return fail("the power lies outside the range allowed by V and U");
                }
            }
        },
        _ => {}
    }
    Ok(())
}

/// Projection of one density family onto its side class.
pub fn project_side(
    x: &[SpectralDensityGrid],
    side: &SideClass,
    weights: &[f64],
    opts: &ProjectionOptions,
) -> Result<Vec<SpectralDensityGrid>> {
    if x.len() != weights.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} density grids for {} channel weights", x.len(), weights.len())));
    }
    let n = x[0].n_lambda();
    let k = x[0].dim();
    precheck(side, weights, n)?;
    let sets = build_sets(side, weights, n, k);
    let mut cur = family_of(x);
    dykstra(&mut cur, &sets, opts);
    let scale = 1.0 + norm(&cur);
    for set in &sets {
        let mut p = cur.clone();
        set.project(&mut p);
        let gap = distance(&cur, &p) / scale;
        if gap > opts.feasibility_tol {
            return Err(Error::Infeasible(format!(
                "{}: {} cannot be met together with the other conditions (distance {gap:.3e})",
                side.describe(),
                set.name()
            )));
        }
    }
    for m in cur.iter_mut().flatten() {
        *m = linalg::hermitian_part(m);
    }
    Ok(grids_of(&cur))
}

fn dykstra(x: &mut Family, sets: &[Set], opts: &ProjectionOptions) {
    if sets.len() == 1 {
        sets[0].project(x);
        return;
    }
    let zero: Family = x.iter().map(|c| c.iter().map(|m| linalg::zeros(m.nrows(), m.ncols())).collect()).collect();
    let mut incs: Vec<Family> = (0..sets.len()).map(|_| zero.clone()).collect();
    for _ in 0..opts.max_cycles {
        let start = x.clone();
        for (set, inc) in sets.iter().zip(incs.iter_mut()) {
            zip_apply(x, inc, |a, b| *a += b);
            let before = x.clone();
            set.project(x);
            *inc = before;
            zip_apply(inc, x, |a, b| *a -= b);
        }
        if distance(x, &start) <= opts.tol * (1.0 + norm(x)) {
            break;
        }
    }
}

/// Projection of a pair onto a class; `g` must be present exactly when the
/// class constrains a noise density.
pub fn project_onto_class(
    f: &[SpectralDensityGrid],
    g: Option<&[SpectralDensityGrid]>,
    class: &DensityClassSpec,
    opts: &ProjectionOptions,
) -> Result<(Vec<SpectralDensityGrid>, Option<Vec<SpectralDensityGrid>>)> {
    if f.is_empty() {
        return Err(Error::InvalidArgument("no density grids".into()));
    }
    class.validate(f[0].dim(), f[0].n_lambda())?;
    let fp = project_side(f, &class.f, &class.weights, opts)?;
    let gp = match (g, &class.g) {
        (Some(g), Some(side)) => Some(project_side(g, side, &class.weights, opts)?),
        (None, None) => None,
        (Some(_), None) => return Err(Error::ModeMismatch("noise density given but the class has no noise constraint".into())),
        (None, Some(_)) => return Err(Error::ModeMismatch("the class constrains a noise density but none was given".into())),
    };
    Ok((fp, gp))
}
