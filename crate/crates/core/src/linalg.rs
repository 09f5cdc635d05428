//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(k: usize) -> CMatrix {
    CMatrix::identity(k, k)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

pub fn scaled_identity(k: usize, s: f64) -> CMatrix {
    CMatrix::identity(k, k) * Complex64::new(s, 0.0)
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    libm::sqrt(m.iter().map(|z| z.norm_sqr()).sum::<f64>())
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &CMatrix) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn trace_re(m: &CMatrix) -> f64 {
    trace(m).re
}

/// Real Hermitian inner product `Re tr(A* B)`.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Eigen-decomposition of the Hermitian part; eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let k = m.nrows();
    if k == 1 {
        return (alloc::vec![m[(0, 0)].re], identity(1));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(k, k);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

pub fn eigenvalues(m: &CMatrix) -> Vec<f64> {
    hermitian_eigen(m).0
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &CMatrix) -> f64 {
    eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Rebuilds `V diag(f(w)) V*` from a Hermitian eigen-decomposition.
pub fn spectral_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let mut scaled = vecs.clone();
    for (j, &w) in vals.iter().enumerate() {
        let s = Complex64::new(f(w), 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vecs.adjoint()
}

/// Nearest (Frobenius) Hermitian matrix with eigenvalues at least `floor`.
pub fn project_psd(m: &CMatrix, floor: f64) -> CMatrix {
    spectral_map(m, |w| w.max(floor))
}

pub fn inverse(m: &CMatrix) -> Option<CMatrix> {
    if m.nrows() == 1 {
        let z = m[(0, 0)];
        return if z.norm() > 0.0 { Some(CMatrix::from_element(1, 1, z.inv())) } else { None };
    }
    m.clone().try_inverse()
}

/// Inverse of a Hermitian positive-definite matrix, `None` when the smallest
/// eigenvalue is not above `floor`.
pub fn hpd_inverse(m: &CMatrix, floor: f64) -> Option<CMatrix> {
    let (vals, vecs) = hermitian_eigen(m);
    if vals.first().is_none_or(|&w| w <= floor) {
        return None;
    }
    let mut scaled = vecs.clone();
    for (j, &w) in vals.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] /= w;
        }
    }
    Some(scaled * vecs.adjoint())
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky_lower(m: &CMatrix) -> Option<CMatrix> {
    hermitian_part(m).cholesky().map(|ch| ch.l())
}

/// Spectral condition number of a Hermitian PSD matrix (infinite if singular).
pub fn condition_hpd(m: &CMatrix) -> f64 {
    let vals = eigenvalues(m);
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone)]
pub struct HpdSolve {
    pub x: CMatrix,
    /// `true` when Cholesky failed and the eigenvalue-floored solve was used.
    pub fallback: bool,
    pub min_eigenvalue: Option<f64>,
}

/// Solves `B X = RHS` for Hermitian positive-definite `B`.
///
/// Falls back to an eigenvalue-floored pseudo-solve when Cholesky fails.
pub fn solve_hpd(b: &CMatrix, rhs: &CMatrix) -> HpdSolve {
    let bh = hermitian_part(b);
    if let Some(ch) = bh.clone().cholesky() {
        return HpdSolve { x: ch.solve(rhs), fallback: false, min_eigenvalue: None };
    }
    let (vals, vecs) = hermitian_eigen(&bh);
    let top = vals.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    let floor = top * 1e-14;
    let proj = vecs.adjoint() * rhs;
    let mut scaled = proj;
    for (i, &w) in vals.iter().enumerate() {
        let inv = if w > floor { 1.0 / w } else { 0.0 };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= inv;
        }
    }
    HpdSolve { x: vecs * scaled, fallback: true, min_eigenvalue: vals.first().copied() }
}

/// Hermitian PSD square root.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    spectral_map(m, |w| libm::sqrt(w.max(0.0)))
}
