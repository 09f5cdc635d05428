//! Spherical-harmonic bookkeeping.
//!
//! Counts and Gegenbauer polynomials work for any ambient dimension `n >= 3`.
//! Point evaluation, quadrature grids and field transforms are for the
//! 2-sphere (`n = 3`) only, using real orthonormal harmonics without the
//! Condon-Shortley phase. Within degree `m` the order `l` runs
//! `1 = zonal, 2 = cos(phi), 3 = sin(phi), 4 = cos(2 phi), ...`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{AddAssign, Mul};

use crate::error::{Error, Result};

/// Number of linearly independent spherical harmonics of degree `m` in
/// dimension `n`.
pub fn harmonic_count(m: usize, n: usize) -> Result<u64> {
    if n < 3 {
        return Err(Error::UnsupportedDimension { n });
    }
    if m == 0 {
        return Ok(1);
    }
    // (2m+n-2) * C(m+n-3, m) / (n-2)
    let binom =
        binomial((m + n - 3) as u128, m as u128).ok_or_else(|| Error::InvalidArgument(format!("h({m},{n}) overflows")))?;
    let num = (2 * m + n - 2) as u128 * binom;
    let val = num / (n - 2) as u128;
    u64::try_from(val).map_err(|_| Error::InvalidArgument(format!("h({m},{n}) overflows")))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Surface area of the unit sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * libm::pow(PI, h) / libm::tgamma(h)
}

/// Gegenbauer polynomial `C_m^alpha(z)` by the three-term recurrence.
pub fn gegenbauer(m: usize, alpha: f64, z: f64) -> f64 {
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 2.0 * alpha * z;
    for k in 2..=m {
        let kf = k as f64;
        let next = (2.0 * z * (kf + alpha - 1.0) * cur - (kf + 2.0 * alpha - 2.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    cur
}

/// Degree `m`, order `l` in `1..=h(m, n)`, ambient dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HarmonicIndex {
    pub m: usize,
    pub l: usize,
    pub n: usize,
}

impl HarmonicIndex {
    pub fn new(m: usize, l: usize, n: usize) -> Result<Self> {
        let h = harmonic_count(m, n)?;
        if l == 0 || l as u64 > h {
            return Err(Error::InvalidArgument(format!("order l = {l} outside 1..={h} for degree {m}, dimension {n}")));
        }
        Ok(Self { m, l, n })
    }

    /// Azimuthal wavenumber and whether the harmonic is the sine partner.
    fn azimuth(&self) -> (usize, bool) {
        (self.l / 2, self.l > 1 && self.l % 2 == 1)
    }
}

/// Every `n = 3` index with degree `<= m_max`, in storage order.
pub fn indices(m_max: usize) -> Vec<HarmonicIndex> {
    let mut out = Vec::with_capacity((m_max + 1) * (m_max + 1));
    for m in 0..=m_max {
        for l in 1..=2 * m + 1 {
            out.push(HarmonicIndex { m, l, n: 3 });
        }
    }
    out
}

/// Position of `(m, l)` in [`indices`] order.
pub fn flat_index(m: usize, l: usize) -> usize {
    m * m + l - 1
}

/// Fully normalized associated Legendre values `pbar[m][k]`, `0 <= k <= m`,
/// with `int |pbar_mk(cos t)|^2 * 2 pi sin t dt = 1` for `k = 0` and `1/2` else.
fn normalized_legendre(m_max: usize, theta: f64) -> Vec<Vec<f64>> {
    let x = libm::cos(theta);
    let s = libm::sin(theta);
    let mut p: Vec<Vec<f64>> = (0..=m_max).map(|m| vec![0.0; m + 1]).collect();
    p[0][0] = 1.0 / libm::sqrt(4.0 * PI);
    for k in 1..=m_max {
        let kf = k as f64;
        p[k][k] = libm::sqrt((2.0 * kf + 1.0) / (2.0 * kf)) * s * p[k - 1][k - 1];
    }
    for k in 0..m_max {
        p[k + 1][k] = libm::sqrt(2.0 * k as f64 + 3.0) * x * p[k][k];
    }
    for k in 0..=m_max {
        for m in (k + 2)..=m_max {
            let mf = m as f64;
            let kf = k as f64;
            let a = libm::sqrt((4.0 * mf * mf - 1.0) / (mf * mf - kf * kf));
            let b = libm::sqrt(((mf - 1.0) * (mf - 1.0) - kf * kf) / (4.0 * (mf - 1.0) * (mf - 1.0) - 1.0));
            p[m][k] = a * (x * p[m - 1][k] - b * p[m - 2][k]);
        }
    }
    p
}

/// Real orthonormal harmonic at colatitude `theta`, longitude `phi`.
pub fn evaluate_harmonic(idx: HarmonicIndex, theta: f64, phi: f64) -> Result<f64> {
    if idx.n != 3 {
        return Err(Error::UnsupportedDimension { n: idx.n });
    }
    HarmonicIndex::new(idx.m, idx.l, idx.n)?;
    let p = normalized_legendre(idx.m, theta);
    let (k, sine) = idx.azimuth();
    Ok(real_harmonic(&p, idx.m, k, sine, phi))
}

fn real_harmonic(p: &[Vec<f64>], m: usize, k: usize, sine: bool, phi: f64) -> f64 {
    if k == 0 {
        return p[m][0];
    }
    let ang = k as f64 * phi;
    let trig = if sine { libm::sin(ang) } else { libm::cos(ang) };
    core::f64::consts::SQRT_2 * p[m][k] * trig
}

/// All harmonics of degree `<= m_max` at one point, in [`indices`] order.
pub fn evaluate_all(m_max: usize, theta: f64, phi: f64) -> Vec<f64> {
    let p = normalized_legendre(m_max, theta);
    let mut out = Vec::with_capacity((m_max + 1) * (m_max + 1));
    for m in 0..=m_max {
        out.push(p[m][0]);
        for k in 1..=m {
            out.push(real_harmonic(&p, m, k, false, phi));
            out.push(real_harmonic(&p, m, k, true, phi));
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

/// Product quadrature on the 2-sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    nodes: Vec<SphereNode>,
    n_theta: usize,
    n_phi: usize,
}

impl SphereGrid {
    /// Gauss-Legendre in `cos(theta)` times the uniform rule in `phi`.
    pub fn gauss(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::InvalidArgument("sphere grid needs at least one node per axis".into()));
        }
        let (x, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (xi, wi) in x.iter().zip(&w) {
            let theta = libm::acos(*xi);
            for j in 0..n_phi {
                nodes.push(SphereNode { theta, phi: j as f64 * dphi, weight: wi * dphi });
            }
        }
        Ok(Self { nodes, n_theta, n_phi })
    }

    /// Smallest product grid that integrates degree-`m_max` products exactly.
    pub fn for_degree(m_max: usize) -> Self {
        Self::gauss(m_max + 1, 2 * m_max + 1).expect("nonzero sizes")
    }

    /// Grid made of explicit nodes (e.g. read back from CSV). The resolved
    /// degree of such a grid is checked numerically by
    /// [`SphereGrid::orthonormality_defect`].
    pub fn from_nodes(nodes: Vec<SphereNode>, n_theta: usize, n_phi: usize) -> Result<Self> {
        if nodes.len() != n_theta * n_phi {
            return Err(Error::DimensionMismatch(format!("{} nodes for a {n_theta} x {n_phi} grid", nodes.len())));
        }
        Ok(Self { nodes, n_theta, n_phi })
    }

    pub fn nodes(&self) -> &[SphereNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Highest degree `M` with `<S_a, S_b>_grid = delta_ab` exactly for all
    /// harmonics of degree `<= M`.
    pub fn resolved_degree(&self) -> Option<usize> {
        let by_theta = self.n_theta.checked_sub(1)?;
        let by_phi = self.n_phi.checked_sub(1)? / 2;
        Some(by_theta.min(by_phi))
    }

    pub fn check_resolves(&self, m_max: usize) -> Result<()> {
        match self.resolved_degree() {
            Some(r) if r >= m_max => Ok(()),
            r => Err(Error::UnderResolvedGrid {
                required: m_max,
                resolved: r.unwrap_or(0),
                theta_nodes: m_max + 1,
                phi_nodes: 2 * m_max + 1,
            }),
        }
    }

    /// Harmonic values `table[node][flat index]` up to degree `m_max`.
    pub fn harmonic_table(&self, m_max: usize) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|nd| evaluate_all(m_max, nd.theta, nd.phi)).collect()
    }

    /// Largest entry of `|G - I|` where `G` is the grid Gram matrix of the
    /// harmonics up to `m_max`.
    pub fn orthonormality_defect(&self, m_max: usize) -> f64 {
        let table = self.harmonic_table(m_max);
        let count = (m_max + 1) * (m_max + 1);
        let mut worst = 0.0_f64;
        for a in 0..count {
            for b in a..count {
                let g: f64 = table.iter().zip(&self.nodes).map(|(row, nd)| nd.weight * row[a] * row[b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// Quadrature projection of field samples onto harmonics of degree `<= m_max`,
/// returned in [`indices`] order.
pub fn decompose_field<T>(samples: &[T], grid: &SphereGrid, m_max: usize) -> Result<Vec<T>>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    grid.check_resolves(m_max)?;
    if samples.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} samples for {} grid nodes", samples.len(), grid.len())));
    }
    let count = (m_max + 1) * (m_max + 1);
    let mut out = vec![T::default(); count];
    for (nd, &v) in grid.nodes().iter().zip(samples) {
        let row = evaluate_all(m_max, nd.theta, nd.phi);
        for (o, s) in out.iter_mut().zip(&row) {
            *o += v * (s * nd.weight);
        }
    }
    Ok(out)
}

/// Evaluates `sum_{m,l} coeff_{m,l} S_m^l(x)` at every grid node.
pub fn synthesize_field<T>(coeffs: &[T], m_max: usize, grid: &SphereGrid) -> Result<Vec<T>>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    let count = (m_max + 1) * (m_max + 1);
    if coeffs.len() != count {
        return Err(Error::DimensionMismatch(format!("{} coefficients for degree {m_max} (expected {count})", coeffs.len())));
    }
    Ok(grid
        .nodes()
        .iter()
        .map(|nd| {
            let row = evaluate_all(m_max, nd.theta, nd.phi);
            let mut acc = T::default();
            for (&c, s) in coeffs.iter().zip(&row) {
                acc += c * *s;
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn counts() {
        assert_eq!(harmonic_count(0, 5).unwrap(), 1);
        assert_eq!(harmonic_count(3, 3).unwrap(), 7);
        assert_eq!(harmonic_count(2, 4).unwrap(), 9);
        assert_eq!(harmonic_count(1, 4).unwrap(), 4);
        assert!(harmonic_count(1, 2).is_err());
        for m in 0..20 {
            assert_eq!(harmonic_count(m, 3).unwrap(), 2 * m as u64 + 1);
            assert_eq!(harmonic_count(m, 4).unwrap(), ((m + 1) * (m + 1)) as u64);
        }
    }

    #[test]
    fn area() {
        assert_abs_diff_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(sphere_area(4), 2.0 * PI * PI, epsilon = 1e-12);
    }

    #[test]
    fn gegenbauer_values() {
        assert_eq!(gegenbauer(0, 0.5, 0.3), 1.0);
        assert_abs_diff_eq!(gegenbauer(1, 1.0, 0.5), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gegenbauer(2, 0.5, 1.0), 1.0, epsilon = 1e-15);
        // alpha = 1/2 gives Legendre: P_3(x) = (5x^3 - 3x)/2
        let x = 0.3;
        assert_abs_diff_eq!(gegenbauer(3, 0.5, x), (5.0 * x * x * x - 3.0 * x) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn harmonic_values() {
        let y00 = evaluate_harmonic(HarmonicIndex::new(0, 1, 3).unwrap(), 1.1, 2.2).unwrap();
        assert_abs_diff_eq!(y00, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        let y10 = evaluate_harmonic(HarmonicIndex::new(1, 1, 3).unwrap(), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(y10, (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-15);
        assert!(evaluate_harmonic(HarmonicIndex { m: 1, l: 1, n: 4 }, 0.0, 0.0).is_err());
        assert!(HarmonicIndex::new(1, 4, 3).is_err());
    }

    #[test]
    fn grid_weights_and_orthonormality() {
        let g = SphereGrid::for_degree(6);
        assert_abs_diff_eq!(g.total_weight(), sphere_area(3), epsilon = 1e-10 * 4.0 * PI);
        assert!(g.orthonormality_defect(6) <= 1e-8);
    }

    #[test]
    fn constant_and_single_harmonic_fields() {
        let m_max = 3;
        let g = SphereGrid::for_degree(m_max);
        let constant = vec![2.5; g.len()];
        let c = decompose_field(&constant, &g, m_max).unwrap();
        assert_abs_diff_eq!(c[0], 2.5 * (4.0 * PI).sqrt(), epsilon = 1e-10);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-10));

        let idx = HarmonicIndex::new(2, 1, 3).unwrap();
        let field: Vec<f64> = g.nodes().iter().map(|nd| evaluate_harmonic(idx, nd.theta, nd.phi).unwrap()).collect();
        let c = decompose_field(&field, &g, m_max).unwrap();
        for (i, v) in c.iter().enumerate() {
            let target = if i == flat_index(2, 1) { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, target, epsilon = 1e-10);
        }
    }

    #[test]
    fn under_resolved_grid_is_reported() {
        let g = SphereGrid::gauss(3, 5).unwrap();
        match decompose_field(&vec![0.0; g.len()], &g, 4) {
            Err(Error::UnderResolvedGrid { theta_nodes, phi_nodes, .. }) => {
                assert_eq!((theta_nodes, phi_nodes), (5, 9));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    // Brute-force dimension of degree-m harmonic homogeneous polynomials in
    // three variables: dim P_m minus the rank of the Laplacian P_m -> P_{m-2}.
    fn harmonic_dimension(m: usize) -> usize {
        let monos = |d: usize| -> Vec<(usize, usize, usize)> {
            let mut v = Vec::new();
            for a in 0..=d {
                for b in 0..=d - a {
                    v.push((a, b, d - a - b));
                }
            }
            v
        };
        let src = monos(m);
        if m < 2 {
            return src.len();
        }
        let dst = monos(m - 2);
        let mut lap = nalgebra::DMatrix::<f64>::zeros(dst.len(), src.len());
        for (j, &(a, b, c)) in src.iter().enumerate() {
            let mut add = |target: (usize, usize, usize), coef: f64| {
                let i = dst.iter().position(|&t| t == target).unwrap();
                lap[(i, j)] += coef;
            };
            if a >= 2 {
                add((a - 2, b, c), (a * (a - 1)) as f64);
            }
            if b >= 2 {
                add((a, b - 2, c), (b * (b - 1)) as f64);
            }
            if c >= 2 {
                add((a, b, c - 2), (c * (c - 1)) as f64);
            }
        }
        src.len() - lap.rank(1e-9)
    }

    #[test]
    fn count_matches_polynomial_dimension() {
        for m in 0..=5 {
            assert_eq!(harmonic_count(m, 3).unwrap() as usize, harmonic_dimension(m));
        }
    }

    fn gegenbauer_explicit(m: usize, alpha: f64, z: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..=m / 2 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let fact = |x: usize| (1..=x).map(|i| i as f64).product::<f64>();
            s += sign * libm::tgamma(m as f64 - k as f64 + alpha) / (libm::tgamma(alpha) * fact(k) * fact(m - 2 * k))
                * (2.0 * z).powi((m - 2 * k) as i32);
        }
        s
    }

    proptest! {
        #[test]
        fn gegenbauer_matches_explicit_sum(m in 0usize..=4, alpha in 0.1f64..3.0, z in -1.0f64..1.0) {
            let a = gegenbauer(m, alpha, z);
            let b = gegenbauer_explicit(m, alpha, z);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn band_limited_roundtrip(coeffs in proptest::collection::vec(-2.0f64..2.0, 25)) {
            let m_max = 4;
            let g = SphereGrid::for_degree(m_max);
            let field = synthesize_field(&coeffs, m_max, &g).unwrap();
            let back = decompose_field(&field, &g, m_max).unwrap();
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}
