//! Turns a parsed problem file into validated core inputs.

use std::collections::BTreeSet;

use pcfield_core::blocking::{self, BlockingConfig};
use pcfield_core::extrapolate::{FunctionalSpec, SolverOptions, Window};
use pcfield_core::harmonics::HarmonicIndex;
use pcfield_core::minimax::ClassParams;
use pcfield_core::spectral::{DensityModel, RationalDensity, SpectralDensityGrid};
use pcfield_core::{CMatrix, CVector, Complex64};

use crate::error::CliError;
use crate::schema::{
    ChannelSpec, ClassParamsSpec, ComplexValue, DensityList, DensitySpec, MatrixValue, ProblemFile, FORMAT_VERSION,
};

type Result<T> = std::result::Result<T, CliError>;

fn schema<T>(what: impl std::fmt::Display) -> Result<T> {
    Err(CliError::Schema(what.to_string()))
}

fn complex(z: ComplexValue) -> Result<Complex64> {
    let (re, im) = z.parts();
    if !(re.is_finite() && im.is_finite()) {
        return schema("non-finite number");
    }
    Ok(Complex64::new(re, im))
}

pub fn matrix(v: &MatrixValue, k: usize) -> Result<CMatrix> {
    match v {
        MatrixValue::Scalar(z) => Ok(CMatrix::identity(k, k) * complex(*z)?),
        MatrixValue::Rows(rows) => {
            if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                return schema(format!("expected a {k} x {k} matrix"));
            }
            let mut out = CMatrix::zeros(k, k);
            for (i, row) in rows.iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    out[(i, j)] = complex(*z)?;
                }
            }
            Ok(out)
        }
    }
}

fn vector(v: &[ComplexValue]) -> Result<CVector> {
    Ok(CVector::from_vec(v.iter().map(|z| complex(*z)).collect::<Result<Vec<_>>>()?))
}

fn spec_dim(spec: &DensitySpec) -> Option<usize> {
    let (k, mats): (Option<usize>, Vec<&MatrixValue>) = match spec {
        DensitySpec::Grid { values, k } => (*k, values.iter().collect()),
        DensitySpec::Rational { numerator, denominator, k } => (*k, numerator.iter().chain(denominator).collect()),
        DensitySpec::Constant { value, k } => (*k, vec![value]),
    };
    k.or_else(|| {
        mats.iter().find_map(|m| match m {
            MatrixValue::Rows(r) => Some(r.len()),
            MatrixValue::Scalar(_) => None,
        })
    })
}

/// Builds a density of dimension `k` sampled on `n` nodes.
pub fn density(spec: &DensitySpec, k: usize, n: usize) -> Result<(DensityModel, SpectralDensityGrid)> {
    if let Some(d) = spec_dim(spec) {
        if d != k {
            return schema(format!("density has dimension {d}, the channel has {k}"));
        }
    }
    let model = match spec {
        DensitySpec::Grid { values, .. } => {
            if values.len() != n {
                return schema(format!("grid density has {} nodes, N_lambda is {n}", values.len()));
            }
            let vals = values.iter().map(|v| matrix(v, k)).collect::<Result<Vec<_>>>()?;
            DensityModel::Grid(SpectralDensityGrid::new(vals).map_err(CliError::schema)?)
        }
        DensitySpec::Rational { numerator, denominator, .. } => {
            let num = numerator.iter().map(|v| matrix(v, k)).collect::<Result<Vec<_>>>()?;
            let den = denominator.iter().map(|v| matrix(v, k)).collect::<Result<Vec<_>>>()?;
            DensityModel::Rational(RationalDensity::new(num, den).map_err(CliError::schema)?)
        }
        DensitySpec::Constant { value, .. } => {
            let m = matrix(value, k)?;
            DensityModel::Grid(SpectralDensityGrid::constant(&m, n).map_err(CliError::schema)?)
        }
    };
    let grid = model.rasterize(n).map_err(CliError::schema)?;
    Ok((model, grid))
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub m: usize,
    pub l: usize,
    pub f_model: DensityModel,
    pub g_model: Option<DensityModel>,
    pub f: SpectralDensityGrid,
    pub g: Option<SpectralDensityGrid>,
    /// Density the oracle sees; `F` unless the file overrides it.
    pub oracle_f: SpectralDensityGrid,
    pub a: FunctionalSpec,
}

impl Channel {
    pub fn k(&self) -> usize {
        self.a.k()
    }

    pub fn label(&self) -> String {
        format!("m{}_l{}", self.m, self.l)
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub file: ProblemFile,
    pub channels: Vec<Channel>,
    pub blocking: Option<BlockingConfig>,
}

impl Problem {
    pub fn n_lambda(&self) -> usize {
        self.file.solver.n_lambda
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.file.solver;
        let window = match s.window {
            Some(w) => Window::Fixed(w),
            None => Window::Adaptive { extra: 32, max: s.window_max, rtol: s.window_rtol },
        };
        SolverOptions { window, condition_warning: s.minimality_ceiling }
    }
}

fn functional(spec: &ChannelSpec, problem: &ProblemFile, cfg: Option<&BlockingConfig>) -> Result<FunctionalSpec> {
    let j = problem.solver.j;
    let a = match (&spec.a, &spec.a_function) {
        (Some(a), None) => {
            if a.is_empty() || a.len() > j {
                return schema(format!("`a` needs between 1 and J = {j} vectors, has {}", a.len()));
            }
            let mut vs = a.iter().map(|v| vector(v)).collect::<Result<Vec<_>>>()?;
            let k = vs[0].len();
            vs.resize(j, CVector::zeros(k));
            vs
        }
        (None, Some(w)) => {
            let cfg = cfg.ok_or_else(|| CliError::Schema("`a_function` needs a `blocking` section".into()))?;
            let samples = w.samples.iter().map(|z| complex(*z)).collect::<Result<Vec<_>>>()?;
            blocking::functional_to_spec(&samples, cfg, j).map_err(CliError::schema)?.a
        }
        _ => return schema("each channel needs exactly one of `a` and `a_function`"),
    };
    FunctionalSpec::new(a).map_err(CliError::schema)
}

/// Validates a parsed file and samples every density on the solver grid.
pub fn build(file: ProblemFile) -> Result<Problem> {
    if file.version != FORMAT_VERSION {
        return schema(format!("unsupported version {} (expected {FORMAT_VERSION})", file.version));
    }
    let s = &file.solver;
    if s.j == 0 {
        return schema("J must be at least 1");
    }
    if s.n_lambda < 8 || !s.n_lambda.is_multiple_of(2) {
        return schema("N_lambda must be even and at least 8");
    }
    if s.j_past == 0 {
        return schema("J_past must be at least 1");
    }
    if let Some(w) = s.window {
        if w < s.j || w >= s.n_lambda / 2 {
            return schema(format!("window must lie in [J, N_lambda / 2), got {w}"));
        }
    }
    if !(s.minimality_ceiling > 1.0) {
        return schema("minimality_ceiling must exceed 1");
    }
    if file.channels.is_empty() {
        return schema("no channels");
    }
    let cfg = file.blocking.as_ref().map(|b| BlockingConfig::new(b.period, b.k, b.dt)).transpose().map_err(CliError::schema)?;
    let mut seen = BTreeSet::new();
    let mut channels = Vec::with_capacity(file.channels.len());
    for (i, spec) in file.channels.iter().enumerate() {
        let wrap = |e: CliError| CliError::Schema(format!("channel {i} (m = {}, l = {}): {e}", spec.m, spec.l));
        HarmonicIndex::new(spec.m, spec.l, file.n).map_err(|e| wrap(CliError::schema(e)))?;
        if file.m_max.is_some_and(|mm| spec.m > mm) {
            return Err(wrap(CliError::Schema("degree exceeds M_max".into())));
        }
        if !seen.insert((spec.m, spec.l)) {
            return Err(wrap(CliError::Schema("duplicate channel".into())));
        }
        let a = functional(spec, &file, cfg.as_ref()).map_err(wrap)?;
        let k = a.k();
        if cfg.as_ref().is_some_and(|c| c.k() != k) {
            return Err(wrap(CliError::Schema(format!("functional has dimension {k}, blocking uses K = {}", cfg.unwrap().k()))));
        }
        let n = s.n_lambda;
        let (f_model, f) = density(&spec.f, k, n).map_err(wrap)?;
        let (g_model, g) = match &spec.g {
            Some(gs) => {
                let (m, g) = density(gs, k, n).map_err(wrap)?;
                (Some(m), Some(g))
            }
            None => (None, None),
        };
        let oracle_f = match &spec.oracle_f {
            Some(o) => density(o, k, n).map_err(wrap)?.1,
            None => f.clone(),
        };
        channels.push(Channel { m: spec.m, l: spec.l, f_model, g_model, f, g, oracle_f, a });
    }
    Ok(Problem { file, channels, blocking: cfg })
}

fn density_list(
    list: &Option<DensityList>,
    name: &str,
    k: usize,
    n: usize,
    groups: usize,
) -> Result<Option<Vec<SpectralDensityGrid>>> {
    let Some(list) = list else { return Ok(None) };
    let specs: Vec<&DensitySpec> = match list {
        DensityList::One(s) => vec![s; groups],
        DensityList::PerDegree(v) if v.len() == groups => v.iter().collect(),
        DensityList::PerDegree(v) => {
            return schema(format!("class parameter `{name}` lists {} densities for {groups} degrees", v.len()))
        }
    };
    specs
        .into_iter()
        .map(|s| density(s, k, n).map(|d| d.1))
        .collect::<Result<Vec<_>>>()
        .map(Some)
        .map_err(|e| CliError::Schema(format!("class parameter `{name}`: {e}")))
}

/// Class parameters with densities sampled for `groups` degrees of dimension `k`.
pub fn class_params(p: &ClassParamsSpec, k: usize, n: usize, groups: usize) -> Result<ClassParams> {
    let mat = |v: &Option<MatrixValue>| v.as_ref().map(|m| matrix(m, k)).transpose();
    Ok(ClassParams {
        u: density_list(&p.u, "U", k, n, groups)?,
        v: density_list(&p.v, "V", k, n, groups)?,
        g1: density_list(&p.g1, "G1", k, n, groups)?,
        p: p.p,
        q: p.q,
        p_k: p.p_k.clone(),
        q_k: p.q_k.clone(),
        eps: p.eps,
        eps_k: p.eps_k.clone(),
        eps_kj: mat(&p.eps_kj)?,
        b1: mat(&p.b1)?,
        b2: mat(&p.b2)?,
        p_matrix: mat(&p.p_matrix)?,
        q_matrix: mat(&p.q_matrix)?,
    })
}
