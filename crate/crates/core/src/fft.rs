//! Discrete Fourier transforms and the uniform frequency grid.
//!
//! The grid is `lambda_t = -pi + 2 pi t / N`, `t = 0..N`. Power-of-two lengths
//! use an iterative radix-2 transform; other lengths go through Bluestein's
//! chirp-z reduction.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    /// `sum_t x_t e^{-2 pi i k t / N}`
    Negative,
    /// `sum_t x_t e^{+2 pi i k t / N}`
    Positive,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Negative => -1.0,
            Sign::Positive => 1.0,
        }
    }
}

/// Grid frequency `lambda_t` for a grid of `n` points.
#[inline]
pub fn lambda(t: usize, n: usize) -> f64 {
    -PI + 2.0 * PI * t as f64 / n as f64
}

pub fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|t| lambda(t, n)).collect()
}

/// Unnormalized in-place DFT.
pub fn transform(data: &mut [Complex64], sign: Sign) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(data, sign);
    } else {
        bluestein(data, sign);
    }
}

fn radix2(data: &mut [Complex64], sign: Sign) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let s = sign.value();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = s * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // Direct twiddles keep rounding error flat in n.
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn bluestein(data: &mut [Complex64], sign: Sign) {
    let n = data.len();
    let m = (2 * n - 1).next_power_of_two();
    let s = sign.value();
    // chirp_k = e^{s i pi k^2 / n}; k^2 reduced mod 2n to keep the angle small
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            Complex64::from_polar(1.0, s * PI * k2 / n as f64)
        })
        .collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = data[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2(&mut a, Sign::Negative);
    radix2(&mut b, Sign::Negative);
    for (x, y) in a.iter_mut().zip(b.iter()) {
        *x *= y;
    }
    radix2(&mut a, Sign::Positive);
    let scale = 1.0 / m as f64;
    for k in 0..n {
        data[k] = a[k] * chirp[k] * scale;
    }
}

#[inline]
fn alt(d: i64) -> f64 {
    if d.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Grid Fourier coefficients `(1/N) sum_t g(lambda_t) e^{i d lambda_t}` for
/// `d = -max_lag..=max_lag`, returned with index `d + max_lag`.
///
/// The caller guarantees `max_lag < N / 2`.
pub fn grid_coefficients(values: &[Complex64], max_lag: usize) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    transform(&mut buf, Sign::Positive);
    let inv_n = 1.0 / n as f64;
    let l = max_lag as i64;
    (-l..=l).map(|d| buf[d.rem_euclid(n as i64) as usize] * (alt(d) * inv_n)).collect()
}

/// All `N` grid Fourier coefficients; index `i` holds lag `i - N/2` for even
/// `N` (lags `-N/2 ..= N/2 - 1`) and `i - (N-1)/2` for odd `N`.
pub fn all_grid_coefficients(values: &[Complex64]) -> Vec<(i64, Complex64)> {
    let n = values.len();
    let mut buf = values.to_vec();
    transform(&mut buf, Sign::Positive);
    let inv_n = 1.0 / n as f64;
    let lo = -((n / 2) as i64);
    (0..n as i64)
        .map(|i| {
            let d = lo + i;
            (d, buf[d.rem_euclid(n as i64) as usize] * (alt(d) * inv_n))
        })
        .collect()
}

/// Evaluates `sum_j c_j e^{i j lambda_t}` at every grid node.
pub fn eval_series<I>(terms: I, n: usize) -> Vec<Complex64>
where
    I: IntoIterator<Item = (i64, Complex64)>,
{
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (j, c) in terms {
        buf[j.rem_euclid(n as i64) as usize] += c * alt(j);
    }
    transform(&mut buf, Sign::Positive);
    buf
}
