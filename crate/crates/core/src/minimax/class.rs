//! Admissible classes of spectral densities.
//!
//! A class constrains one density family `{F_m}` (one grid per channel) by a
//! statistic of the matrix values (trace, diagonal, `<B, .>`, or the full
//! matrix), a pointwise condition on that statistic, and a condition on its
//! weighted integral `sum_m w_m (1/2pi) int stat(F_m)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::harmonics;
use crate::linalg::{self, CMatrix};
use crate::spectral::SpectralDensityGrid;

/// Which linear image of the matrix density a class constrains.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    /// `Tr F`
    Trace,
    /// each `F^{kk}` separately
    Diagonal,
    /// `<B, F> = sum_{kj} B_{kj} F_{kj}` for a Hermitian positive definite `B`
    Weighted(CMatrix),
    /// the matrix itself (Loewner order for bounds)
    Full,
}

impl Statistic {
    pub fn is_full(&self) -> bool {
        matches!(self, Statistic::Full)
    }

    /// Number of scalar components (0 for `Full`).
    pub fn components(&self, k: usize) -> usize {
        match self {
            Statistic::Trace | Statistic::Weighted(_) => 1,
            Statistic::Diagonal => k,
            Statistic::Full => 0,
        }
    }

    /// Mutually orthogonal matrices `E_i` with `stat_i(X) = Re tr(E_i^* X)`.
    pub fn directions(&self, k: usize) -> Vec<CMatrix> {
        match self {
            Statistic::Trace => alloc::vec![linalg::identity(k)],
            Statistic::Diagonal => (0..k)
                .map(|i| {
                    let mut e = linalg::zeros(k, k);
                    e[(i, i)] = linalg::c(1.0, 0.0);
                    e
                })
                .collect(),
            Statistic::Weighted(b) => alloc::vec![b.transpose()],
            Statistic::Full => Vec::new(),
        }
    }

    pub fn values(&self, x: &CMatrix) -> Vec<f64> {
        self.directions(x.nrows()).iter().map(|e| linalg::inner(e, x)).collect()
    }
}

/// Right-hand side of a moment or radius condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Level {
    Scalar(f64),
    Components(Vec<f64>),
    Matrix(CMatrix),
}

impl Level {
    fn check(&self, stat: &Statistic, k: usize, what: &str) -> Result<()> {
        let ok = match (stat, self) {
            (Statistic::Trace | Statistic::Weighted(_), Level::Scalar(_)) => true,
            (Statistic::Diagonal, Level::Components(v)) => v.len() == k,
            (Statistic::Full, Level::Matrix(m)) => m.nrows() == k && m.ncols() == k,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{what} does not match the class statistic for K = {k}")))
        }
    }

    /// Scalar components (empty for a matrix level).
    pub fn components(&self) -> Vec<f64> {
        match self {
            Level::Scalar(x) => alloc::vec![*x],
            Level::Components(v) => v.clone(),
            Level::Matrix(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `stat(F) >= (1 - eps) stat(U)` pointwise with fixed weighted power.
    /// The contaminating density is unknown; if given it only seeds the start.
    Contaminated { eps: f64, reference: Vec<SpectralDensityGrid>, contamination: Option<Vec<SpectralDensityGrid>>, power: Level },
    /// Fixed weighted power only.
    Power { power: Level },
    /// `stat(V) <= stat(F) <= stat(U)` pointwise with fixed weighted power.
    Band { lower: Vec<SpectralDensityGrid>, upper: Vec<SpectralDensityGrid>, power: Level },
    /// Weighted L1 distance of `stat(F)` from `stat(center)` at most `radius`
    /// (entrywise moduli for the full statistic).
    L1 { center: Vec<SpectralDensityGrid>, radius: Level },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideClass {
    pub statistic: Statistic,
    pub constraint: Constraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Contaminated,
    Power,
    Band,
    L1,
}

impl Family {
    fn tag(self) -> &'static str {
        match self {
            Family::Contaminated => "Deps",
            Family::Power => "D0_",
            Family::Band => "DVU",
            Family::L1 => "D1eps",
        }
    }
}

/// Named class: the eight paired variants (`Deps{k}xD0_{k}`, `DVU{k}xD1eps{k}`)
/// and the single-density variants for exact observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassVariant {
    pub f: (Family, u8),
    pub g: Option<(Family, u8)>,
}

impl ClassVariant {
    pub fn parse(s: &str) -> Result<Self> {
        fn side(s: &str) -> Option<(Family, u8)> {
            for fam in [Family::Contaminated, Family::Power, Family::Band, Family::L1] {
                if let Some(rest) = s.strip_prefix(fam.tag()) {
                    let kind: u8 = rest.parse().ok()?;
                    if (1..=4).contains(&kind) {
                        return Some((fam, kind));
                    }
                }
            }
            None
        }
        let bad = || Error::InvalidArgument(format!("unknown class variant `{s}`"));
        match s.split_once('x') {
            Some((a, b)) => {
                let f = side(a).ok_or_else(bad)?;
                let g = side(b).ok_or_else(bad)?;
                let paired = matches!((f.0, g.0), (Family::Contaminated, Family::Power) | (Family::Band, Family::L1));
                if !paired || f.1 != g.1 {
                    return Err(bad());
                }
                Ok(Self { f, g: Some(g) })
            }
            None => Ok(Self { f: side(s).ok_or_else(bad)?, g: None }),
        }
    }

    pub fn noisy(&self) -> bool {
        self.g.is_some()
    }
}

impl fmt::Display for ClassVariant {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(out, "{}{}", self.f.0.tag(), self.f.1)?;
        if let Some((fam, kind)) = self.g {
            write!(out, "x{}{}", fam.tag(), kind)?;
        }
        Ok(())
    }
}

/// Raw parameters from which a named variant is assembled. Only the fields
/// the variant needs are required.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassParams {
    pub u: Option<Vec<SpectralDensityGrid>>,
    pub v: Option<Vec<SpectralDensityGrid>>,
    pub g1: Option<Vec<SpectralDensityGrid>>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub p_k: Option<Vec<f64>>,
    pub q_k: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub eps_k: Option<Vec<f64>>,
    pub eps_kj: Option<CMatrix>,
    pub b1: Option<CMatrix>,
    pub b2: Option<CMatrix>,
    pub p_matrix: Option<CMatrix>,
    pub q_matrix: Option<CMatrix>,
}

/// Channel weights in the class integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// every channel counts once
    #[default]
    Unit,
    /// `h(m, n) / omega_n` on the sphere `S_n`
    Sphere { n: usize },
}

impl Weighting {
    pub fn weights(self, degrees: &[usize]) -> Result<Vec<f64>> {
        match self {
            Weighting::Unit => Ok(alloc::vec![1.0; degrees.len()]),
            Weighting::Sphere { n } => {
                let area = harmonics::sphere_area(n);
                degrees.iter().map(|&m| Ok(harmonics::harmonic_count(m, n)? as f64 / area)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityClassSpec {
    pub variant: Option<ClassVariant>,
    pub f: SideClass,
    pub g: Option<SideClass>,
    /// `w_m` per channel.
    pub weights: Vec<f64>,
}

fn need<T: Clone>(x: &Option<T>, name: &str, variant: ClassVariant) -> Result<T> {
    x.clone().ok_or_else(|| Error::InvalidArgument(format!("class {variant} needs parameter `{name}`")))
}

impl DensityClassSpec {
    /// Builds a named variant. The third kind uses `B1` for the contaminated and
    /// band classes and `B2` for the power and L1 classes.
    pub fn from_variant(variant: ClassVariant, params: &ClassParams, weights: Vec<f64>) -> Result<Self> {
        let f = Self::side(variant, variant.f, params, true)?;
        let g = variant.g.map(|side| Self::side(variant, side, params, false)).transpose()?;
        Ok(Self { variant: Some(variant), f, g, weights })
    }

    fn side(variant: ClassVariant, (fam, kind): (Family, u8), p: &ClassParams, is_f: bool) -> Result<SideClass> {
        let statistic = match kind {
            1 => Statistic::Trace,
            2 => Statistic::Diagonal,
            3 => match fam {
                Family::Contaminated | Family::Band => Statistic::Weighted(need(&p.b1, "b1", variant)?),
                Family::Power | Family::L1 => Statistic::Weighted(need(&p.b2, "b2", variant)?),
            },
            _ => Statistic::Full,
        };
        let power = || -> Result<Level> {
            Ok(match (is_f, kind) {
                (true, 1 | 3) => Level::Scalar(need(&p.p, "p", variant)?),
                (true, 2) => Level::Components(need(&p.p_k, "p_k", variant)?),
                (true, _) => Level::Matrix(need(&p.p_matrix, "P", variant)?),
                (false, 1 | 3) => Level::Scalar(need(&p.q, "q", variant)?),
                (false, 2) => Level::Components(need(&p.q_k, "q_k", variant)?),
                (false, _) => Level::Matrix(need(&p.q_matrix, "Q", variant)?),
            })
        };
        let constraint = match fam {
            Family::Contaminated => Constraint::Contaminated {
                eps: need(&p.eps, "eps", variant)?,
                reference: need(&p.u, "U", variant)?,
                contamination: p.v.clone(),
                power: power()?,
            },
            Family::Power => Constraint::Power { power: power()? },
            Family::Band => {
                Constraint::Band { lower: need(&p.v, "V", variant)?, upper: need(&p.u, "U", variant)?, power: power()? }
            }
            Family::L1 => Constraint::L1 {
                center: need(&p.g1, "G1", variant)?,
                radius: match kind {
                    1 | 3 => Level::Scalar(need(&p.eps, "eps", variant)?),
                    2 => Level::Components(need(&p.eps_k, "eps_k", variant)?),
                    _ => Level::Matrix(need(&p.eps_kj, "eps_kj", variant)?),
                },
            },
        };
        Ok(SideClass { statistic, constraint })
    }

    /// Checks dimensions and parameter invariants against `k`, `n_lambda` and
    /// the channel count.
    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        let channels = self.weights.len();
        if channels == 0 {
            return Err(Error::InvalidArgument("class has no channels".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidArgument("channel weights must be positive".into()));
        }
        self.f.validate(k, n, channels, "F")?;
        if let Some(g) = &self.g {
            g.validate(k, n, channels, "G")?;
        }
        Ok(())
    }
}

fn check_family(grids: &[SpectralDensityGrid], k: usize, n: usize, channels: usize, what: &str) -> Result<()> {
    if grids.len() != channels {
        return Err(Error::DimensionMismatch(format!("{what}: {} grids for {channels} channels", grids.len())));
    }
    for gr in grids {
        if gr.dim() != k || gr.n_lambda() != n {
            return Err(Error::DimensionMismatch(format!(
                "{what}: grid is {}x{} on {} nodes, expected {k}x{k} on {n}",
                gr.dim(),
                gr.dim(),
                gr.n_lambda()
            )));
        }
    }
    Ok(())
}

fn check_hpd(m: &CMatrix, k: usize, what: &str) -> Result<()> {
    if m.nrows() != k || m.ncols() != k {
        return Err(Error::DimensionMismatch(format!("{what} must be {k}x{k}")));
    }
    let scale = linalg::max_abs(m).max(f64::MIN_POSITIVE);
    if linalg::hermitian_defect(m) > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!("{what} is not Hermitian")));
    }
    let lo = linalg::min_eigenvalue(m);
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(())
}

fn check_positive(level: &Level, k: usize, what: &str) -> Result<()> {
    match level {
        Level::Matrix(m) => check_hpd(m, k, what),
        _ => {
            if level.components().iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive")))
            }
        }
    }
}

impl SideClass {
    fn validate(&self, k: usize, n: usize, channels: usize, side: &str) -> Result<()> {
        if let Statistic::Weighted(b) = &self.statistic {
            check_hpd(b, k, &format!("{side}: weighting matrix"))?;
        }
        match &self.constraint {
            Constraint::Contaminated { eps, reference, contamination, power } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::InvalidArgument(format!("{side}: eps must lie in [0, 1]")));
                }
                check_family(reference, k, n, channels, &format!("{side}: U"))?;
                if let Some(v) = contamination {
                    check_family(v, k, n, channels, &format!("{side}: V"))?;
                }
                power.check(&self.statistic, k, &format!("{side}: power"))?;
                check_positive(power, k, &format!("{side}: power"))?;
            }
            Constraint::Power { power } => {
                power.check(&self.statistic, k, &format!("{side}: power"))?;
                check_positive(power, k, &format!("{side}: power"))?;
            }
            Constraint::Band { lower, upper, power } => {
                check_family(lower, k, n, channels, &format!("{side}: V"))?;
                check_family(upper, k, n, channels, &format!("{side}: U"))?;
                power.check(&self.statistic, k, &format!("{side}: power"))?;
                check_positive(power, k, &format!("{side}: power"))?;
                for (v, u) in lower.iter().zip(upper) {
                    for (vt, ut) in v.values().iter().zip(u.values()) {
                        let scale = 1.0 + linalg::max_abs(ut);
                        let ok = if self.statistic.is_full() {
                            linalg::min_eigenvalue(&linalg::hermitian_part(&(ut - vt))) >= -1e-10 * scale
                        } else {
                            let (a, b) = (self.statistic.values(vt), self.statistic.values(ut));
                            a.iter().zip(&b).all(|(x, y)| *x <= *y + 1e-12 * scale)
                        };
                        if !ok {
                            return Err(Error::InvalidArgument(format!("{side}: lower bound V exceeds upper bound U")));
                        }
                    }
                }
            }
            Constraint::L1 { center, radius } => {
                check_family(center, k, n, channels, &format!("{side}: G1"))?;
                radius.check(&self.statistic, k, &format!("{side}: radius"))?;
                let ok = match radius {
                    Level::Matrix(m) => {
                        m.iter().all(|z| z.re >= 0.0 && z.re.is_finite() && z.im == 0.0) && linalg::hermitian_defect(m) == 0.0
                    }
                    _ => radius.components().iter().all(|x| x.is_finite() && *x >= 0.0),
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!("{side}: radii must be finite, real and non-negative")));
                }
            }
        }
        Ok(())
    }

    /// A point to start the search from (not necessarily feasible).
    pub fn seed(&self, k: usize, n: usize, channels: usize) -> Vec<SpectralDensityGrid> {
        match &self.constraint {
            Constraint::Contaminated { eps, reference, contamination, .. } => match contamination {
                Some(v) => reference
                    .iter()
                    .zip(v)
                    .map(|(u, v)| u.scale(1.0 - eps).add(&v.scale(*eps)).unwrap_or_else(|_| u.clone()))
                    .collect(),
                None => reference.clone(),
            },
            Constraint::Band { lower, upper, .. } => {
                lower.iter().zip(upper).map(|(v, u)| v.mix(u, 0.5).unwrap_or_else(|_| u.clone())).collect()
            }
            Constraint::Power { .. } => alloc::vec![SpectralDensityGrid::identity(k, n); channels],
            Constraint::L1 { center, .. } => center.clone(),
        }
    }

    pub fn describe(&self) -> String {
        let stat = match self.statistic {
            Statistic::Trace => "trace",
            Statistic::Diagonal => "diagonal",
            Statistic::Weighted(_) => "weighted",
            Statistic::Full => "matrix",
        };
        let kind = match self.constraint {
            Constraint::Contaminated { .. } => "contaminated",
            Constraint::Power { .. } => "power",
            Constraint::Band { .. } => "band",
            Constraint::L1 { .. } => "l1",
        };
        format!("{kind}/{stat}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_roundtrip() {
        for s in ["Deps1xD0_1", "Deps4xD0_4", "DVU2xD1eps2", "D0_1", "DVU3", "D1eps4", "Deps2"] {
            let v = ClassVariant::parse(s).unwrap();
            assert_eq!(alloc::format!("{v}"), s);
        }
        for s in ["Deps1xD0_2", "DVU1xD0_1", "Deps5", "D0_0", "nonsense", "Deps1xD1eps1"] {
            assert!(ClassVariant::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn sphere_weights() {
        let w = Weighting::Sphere { n: 3 }.weights(&[0, 1, 2]).unwrap();
        let area = 4.0 * core::f64::consts::PI;
        assert!((w[0] - 1.0 / area).abs() < 1e-15);
        assert!((w[1] - 3.0 / area).abs() < 1e-15);
        assert!((w[2] - 5.0 / area).abs() < 1e-15);
    }

    #[test]
    fn missing_parameters_are_named() {
        let v = ClassVariant::parse("DVU1xD1eps1").unwrap();
        let err = DensityClassSpec::from_variant(v, &ClassParams::default(), alloc::vec![1.0]).unwrap_err();
        assert!(alloc::format!("{err}").contains('V'));
    }

    #[test]
    fn rejects_inverted_band() {
        let n = 16;
        let params = ClassParams {
            u: Some(alloc::vec![SpectralDensityGrid::identity(1, n)]),
            v: Some(alloc::vec![SpectralDensityGrid::identity(1, n).scale(2.0)]),
            p: Some(1.5),
            ..Default::default()
        };
        let spec = DensityClassSpec::from_variant(ClassVariant::parse("DVU1").unwrap(), &params, alloc::vec![1.0]).unwrap();
        assert!(spec.validate(1, n).is_err());
    }
}
