//! Result artifacts. Everything is rendered in memory first; nothing touches
//! the output directory until a command has finished.

use std::fs;
use std::path::Path;

use pcfield_core::spectral::SpectralDensityGrid;
use pcfield_core::{CMatrix, CVector, Complex64};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::model::Problem;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn complex(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn vector(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| complex(*z)).collect()
}

pub fn matrix(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| complex(m[(i, j)])).collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerTolerances {
    pub max_iter: usize,
    pub tol: f64,
    pub smoothing: f64,
    pub max_backtracks: usize,
}

/// Every numerical knob that influenced a run.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    #[serde(rename = "N_lambda")]
    pub n_lambda: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "J_past")]
    pub j_past: usize,
    pub window: Option<usize>,
    pub window_start_extra: usize,
    pub window_rtol: f64,
    pub window_max: usize,
    pub minimality_ceiling: f64,
    pub refinement_ratio_limit: f64,
    pub factorization_tol: f64,
    pub factorization_max_iter: usize,
    pub validation_rel_tol: f64,
    pub validation_z: f64,
    pub optimizer: OptimizerTolerances,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub format_version: u32,
    pub tool_version: &'static str,
    pub input_sha256: String,
    pub tolerances: Tolerances,
}

impl Meta {
    pub fn new(command: &str, input_sha256: &str, problem: &Problem, optimizer: OptimizerTolerances) -> Self {
        let s = &problem.file.solver;
        let v = problem.file.validation.unwrap_or_default();
        let fo = pcfield_core::extrapolate::FactorizationOptions::default();
        Self {
            command: command.to_string(),
            format_version: crate::schema::FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            input_sha256: input_sha256.to_string(),
            tolerances: Tolerances {
                n_lambda: s.n_lambda,
                j: s.j,
                j_past: s.j_past,
                window: s.window,
                window_start_extra: 32,
                window_rtol: s.window_rtol,
                window_max: s.window_max,
                minimality_ceiling: s.minimality_ceiling,
                refinement_ratio_limit: 1.1,
                factorization_tol: s.factorization_tol,
                factorization_max_iter: fo.max_iter,
                validation_rel_tol: v.rel_tol,
                validation_z: v.z,
                optimizer,
            },
        }
    }

    /// One-line form used as the leading comment of CSV artifacts.
    fn csv_comment(&self) -> String {
        format!(
            "# command={} input_sha256={} tolerances={}\n",
            self.command,
            self.input_sha256,
            serde_json::to_string(&self.tolerances).expect("plain data")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub fn json<T: Serialize>(name: &str, value: &T) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(value).expect("plain data");
    bytes.push(b'\n');
    Artifact { name: name.to_string(), bytes }
}

/// CSV with a comment line carrying the hash and tolerances.
pub fn csv(name: &str, meta: &Meta, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Artifact {
    let mut bytes = meta.csv_comment().into_bytes();
    {
        let mut w = ::csv::Writer::from_writer(&mut bytes);
        w.write_record(header).expect("in-memory write");
        for row in rows {
            w.write_record(&row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    Artifact { name: name.to_string(), bytes }
}

fn num(x: f64) -> String {
    // shortest round-trip form, stable across runs
    format!("{x:?}")
}

/// `t, lambda, re_0, im_0, ...` for a vector-valued grid function.
pub fn vector_grid_csv(name: &str, meta: &Meta, values: &[CVector]) -> Artifact {
    let k = values.first().map_or(0, |v| v.len());
    let n = values.len();
    let mut header = vec!["t".to_string(), "lambda".to_string()];
    for i in 0..k {
        header.push(format!("re_{i}"));
        header.push(format!("im_{i}"));
    }
    let rows = values.iter().enumerate().map(|(t, v)| {
        let mut row = vec![t.to_string(), num(pcfield_core::fft::lambda(t, n))];
        for z in v.iter() {
            row.push(num(z.re));
            row.push(num(z.im));
        }
        row
    });
    csv(name, meta, &header, rows)
}

/// `t, lambda, re_ij, im_ij, ...` (row-major) for a density grid.
pub fn density_csv(name: &str, meta: &Meta, f: &SpectralDensityGrid) -> Artifact {
    let k = f.dim();
    let mut header = vec!["t".to_string(), "lambda".to_string()];
    for i in 0..k {
        for j in 0..k {
            header.push(format!("re_{i}{j}"));
            header.push(format!("im_{i}{j}"));
        }
    }
    let rows = (0..f.n_lambda()).map(|t| {
        let mut row = vec![t.to_string(), num(f.lambda(t))];
        let v = f.value(t);
        for i in 0..k {
            for j in 0..k {
                row.push(num(v[(i, j)].re));
                row.push(num(v[(i, j)].im));
            }
        }
        row
    });
    csv(name, meta, &header, rows)
}

/// Writes artifacts into `dir`, creating it when needed.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 1e300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
