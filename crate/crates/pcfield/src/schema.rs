//! Problem-file format.
//!
//! Complex numbers are either a bare number or `[re, im]`. Matrices are lists
//! of rows; wherever a matrix is expected a single number stands for that
//! multiple of the identity.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexValue {
    pub fn parts(self) -> (f64, f64) {
        match self {
            ComplexValue::Real(x) => (x, 0.0),
            ComplexValue::Pair([re, im]) => (re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(ComplexValue),
    Rows(Vec<Vec<ComplexValue>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensitySpec {
    /// Values at `l_t = -pi + 2 pi t / N`; `N` is the list length.
    Grid {
        values: Vec<MatrixValue>,
        #[serde(default)]
        k: Option<usize>,
    },
    /// `A(l)^{-1} B(l) B(l)^* A(l)^{-*}` with `A = sum_u denominator[u] e^{-i u l}`
    /// and `B = sum_u numerator[u] e^{-i u l}`.
    Rational {
        numerator: Vec<MatrixValue>,
        denominator: Vec<MatrixValue>,
        #[serde(default)]
        k: Option<usize>,
    },
    Constant {
        value: MatrixValue,
        #[serde(default)]
        k: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockingSpec {
    pub period: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    /// Samples of the weight on `[0, J T)` with spacing `dt`.
    pub samples: Vec<ComplexValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub m: usize,
    pub l: usize,
    #[serde(rename = "F")]
    pub f: DensitySpec,
    #[serde(rename = "G", default)]
    pub g: Option<DensitySpec>,
    /// `a(0), ..., a(J-1)`, one vector per block.
    #[serde(default)]
    pub a: Option<Vec<Vec<ComplexValue>>>,
    #[serde(default)]
    pub a_function: Option<WeightFunction>,
    /// Density handed to the covariance oracle instead of `F`.
    #[serde(rename = "oracle_F", default)]
    pub oracle_f: Option<DensitySpec>,
}

fn default_dimension() -> usize {
    3
}

fn default_j_past() -> usize {
    64
}

fn default_n_lambda() -> usize {
    pcfield_core::spectral::DEFAULT_N_LAMBDA
}

fn default_ceiling() -> f64 {
    pcfield_core::spectral::DEFAULT_MINIMALITY_CEILING
}

fn default_window_rtol() -> f64 {
    1e-12
}

fn default_window_max() -> usize {
    512
}

fn default_factor_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "J_past", default = "default_j_past")]
    pub j_past: usize,
    #[serde(rename = "N_lambda", default = "default_n_lambda")]
    pub n_lambda: usize,
    /// Fixed operator window; adaptive when absent.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default = "default_window_rtol")]
    pub window_rtol: f64,
    #[serde(default = "default_window_max")]
    pub window_max: usize,
    #[serde(default = "default_ceiling")]
    pub minimality_ceiling: f64,
    #[serde(default = "default_factor_tol")]
    pub factorization_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensityList {
    One(DensitySpec),
    PerDegree(Vec<DensitySpec>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassParamsSpec {
    #[serde(rename = "U", default)]
    pub u: Option<DensityList>,
    #[serde(rename = "V", default)]
    pub v: Option<DensityList>,
    #[serde(rename = "G1", default)]
    pub g1: Option<DensityList>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub p_k: Option<Vec<f64>>,
    #[serde(default)]
    pub q_k: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_k: Option<Vec<f64>>,
    #[serde(default)]
    pub eps_kj: Option<MatrixValue>,
    #[serde(rename = "B1", default)]
    pub b1: Option<MatrixValue>,
    #[serde(rename = "B2", default)]
    pub b2: Option<MatrixValue>,
    #[serde(rename = "P", default)]
    pub p_matrix: Option<MatrixValue>,
    #[serde(rename = "Q", default)]
    pub q_matrix: Option<MatrixValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingSpec {
    #[default]
    Unit,
    /// `h(m, n) / omega_n` on the sphere in dimension `n`.
    Sphere { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub smoothing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub variant: String,
    #[serde(default)]
    pub params: ClassParamsSpec,
    #[serde(default)]
    pub weighting: WeightingSpec,
    #[serde(default)]
    pub optimizer: Option<OptimizerSpec>,
}

fn default_trials() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// Past length per trial; `J_past` when absent.
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub write_trials: bool,
}

fn default_rel_tol() -> f64 {
    1e-4
}

fn default_z() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    /// Allowed relative gap between the solver and the oracle.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Allowed gap to the Monte Carlo mean in standard errors.
    #[serde(default = "default_z")]
    pub z: f64,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self { rel_tol: default_rel_tol(), z: default_z() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub multiplicity: f64,
    pub sup_eigenvalue: f64,
    pub a_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: u32,
    /// Ambient dimension of the sphere `S_{n-1}` that fixes the orders per degree.
    #[serde(default = "default_dimension")]
    pub n: usize,
    #[serde(rename = "M_max", default)]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub blocking: Option<BlockingSpec>,
    pub channels: Vec<ChannelSpec>,
    pub solver: SolverSpec,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    #[serde(default)]
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub validation: Option<ValidationSpec>,
    /// Bounds for channels left out of the file.
    #[serde(default)]
    pub tail: Vec<TailSpec>,
}

/// Parses a problem file. Unknown fields are collected rather than
/// rejected so that the caller can decide between warning and failing.
pub fn parse(text: &str) -> Result<(ProblemFile, Vec<String>), serde_json::Error> {
    let problem: ProblemFile = serde_json::from_str(text)?;
    let raw: Value = serde_json::from_str(text)?;
    let echo = serde_json::to_value(&problem)?;
    let mut unknown = Vec::new();
    unknown_fields(&raw, &echo, "", &mut unknown);
    Ok((problem, unknown))
}

// Every recognized field survives a round trip, so keys of the input that the
// re-serialized value lacks were ignored.
fn unknown_fields(raw: &Value, echo: &Value, path: &str, out: &mut Vec<String>) {
    let join = |key: &str| if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    match (raw, echo) {
        (Value::Object(r), Value::Object(e)) => {
            for (key, value) in r {
                match e.get(key) {
                    Some(ev) => unknown_fields(value, ev, &join(key), out),
                    None => out.push(join(key)),
                }
            }
        }
        (Value::Array(r), Value::Array(e)) => {
            for (i, (rv, ev)) in r.iter().zip(e).enumerate() {
                unknown_fields(rv, ev, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "channels": [{"m": 0, "l": 1, "F": {"type": "constant", "value": 2.0}, "a": [[1.0]]}],
        "solver": {"J": 1}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let (p, unknown) = parse(MINIMAL).unwrap();
        assert!(unknown.is_empty());
        assert_eq!(p.solver.j_past, 64);
        assert_eq!(p.solver.n_lambda, 4096);
        assert_eq!(p.solver.window, None);
        assert!(p.class.is_none());
    }

    #[test]
    fn complex_forms() {
        let v: Vec<ComplexValue> = serde_json::from_str("[1.5, [0.0, -2.0]]").unwrap();
        assert_eq!(v[0].parts(), (1.5, 0.0));
        assert_eq!(v[1].parts(), (0.0, -2.0));
        let m: MatrixValue = serde_json::from_str("[[1, [0, 1]], [[0, -1], 2]]").unwrap();
        assert!(matches!(m, MatrixValue::Rows(ref r) if r.len() == 2));
    }

    #[test]
    fn unknown_top_level_field_is_reported() {
        let text = MINIMAL.replacen("\"version\": 1,", "\"version\": 1, \"colour\": 3,", 1);
        let (_, unknown) = parse(&text).unwrap();
        assert_eq!(unknown, vec!["colour".to_string()]);
    }

    #[test]
    fn unknown_nested_field_is_reported() {
        let text = MINIMAL.replacen("\"J\": 1", "\"J\": 1, \"jpast\": 3", 1);
        let (_, unknown) = parse(&text).unwrap();
        assert_eq!(unknown, vec!["solver.jpast".to_string()]);
    }

    #[test]
    fn unknown_field_inside_density_is_reported() {
        let text = MINIMAL.replacen("\"value\": 2.0", "\"value\": 2.0, \"scale\": 1", 1);
        let (_, unknown) = parse(&text).unwrap();
        assert_eq!(unknown, vec!["channels[0].F.scale".to_string()]);
    }

    #[test]
    fn missing_required_field_fails() {
        let text = MINIMAL.replacen("\"solver\": {\"J\": 1}", "\"solver\": {}", 1);
        assert!(parse(&text).is_err());
    }
}
