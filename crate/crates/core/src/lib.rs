//! Mean-square optimal and minimax-robust linear extrapolation for random
//! fields on the unit sphere that are periodically correlated in time.
//!
//! The field is split into spherical-harmonic channels `(m, l)`; each channel
//! is blocked over the period `T` and projected onto `K` Fourier basis
//! functions, giving a `C^K`-valued stationary sequence with a `K x K`
//! spectral density sampled on a uniform frequency grid. Everything else is
//! per-channel linear algebra on that grid:
//!
//! - [`harmonics`]: harmonic counts, Gegenbauer polynomials, real harmonics on
//!   the 2-sphere and quadrature decomposition/synthesis.
//! - [`blocking`]: the period-`T` blocking transform.
//! - [`spectral`]: density grids, Fourier coefficients of matrix functions,
//!   the operators `B`, `D`, `R` and the minimality diagnostic.
//! - [`extrapolate`]: the projection solver, the noiseless variant, canonical
//!   factorization and a finite-past brute-force oracle.
//! - [`minimax`]: admissible density classes, the robust objective, the
//!   least-favorable search and saddle-point verification.
//! - [`simulate`]: moving-average synthesis and Monte Carlo validation.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod blocking;
pub mod error;
pub mod extrapolate;
pub mod fft;
pub mod harmonics;
pub mod linalg;
pub mod minimax;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
