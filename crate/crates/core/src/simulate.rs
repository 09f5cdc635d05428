//! Sample paths from spectral densities and Monte Carlo checks of the error.
//!
//! A channel with density `F = P P^*`, `P(l) = sum_u d(u) e^{-i u l}`, is
//! synthesized as the moving average `z(t) = sum_u d(u) e(t - u)` of circular
//! complex Gaussian innovations with `E e e^* = I`, which gives
//! `E z(t + j) z(t)^* = (1/2pi) int F(l) e^{i j l} dl`.
//!
//! Randomness comes from `ChaCha8` seeded with the user seed; every trial uses
//! its own pair of streams (signal, noise), so trials can run in any order or
//! in parallel and still reproduce bit for bit.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocking::{self, BlockingConfig, ChannelVectorSequence};
use crate::error::{Error, Result};
use crate::extrapolate::{factorize, EstimateSolution, FactorizationOptions, FactorizationResult, FunctionalSpec};
use crate::harmonics::{self, SphereGrid};
use crate::linalg::{CMatrix, CVector};
use crate::spectral::SpectralDensityGrid;

/// Name of the generator, recorded in output metadata.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), stream 2i for the signal and 2i+1 for the noise of trial i";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationConfig {
    pub seed: u64,
    pub n_trials: usize,
    /// Past observations available to the estimator in each trial.
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub realized: Complex64,
    pub estimate: Complex64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
    /// Relative energy of the estimator coefficients beyond `n_steps` lags,
    /// dropped by the finite past.
    pub truncated_energy: f64,
    pub records: Vec<TrialRecord>,
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circular complex Gaussian with `E |z|^2 = 1`.
fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Complex64::new(x, y) * core::f64::consts::FRAC_1_SQRT_2
}

fn innovations(rng: &mut ChaCha8Rng, k: usize, len: usize) -> Vec<CVector> {
    (0..len).map(|_| CVector::from_fn(k, |_, _| complex_normal(rng))).collect()
}

/// Moving-average path `z(0..n_steps)` driven by the innovations drawn from
/// `rng` (with `d.len() - 1` burn-in draws first).
pub fn moving_average(d: &[CMatrix], n_steps: usize, rng: &mut ChaCha8Rng) -> Vec<CVector> {
    let k = d[0].nrows();
    let burn = d.len() - 1;
    let e = innovations(rng, k, n_steps + burn);
    (0..n_steps)
        .map(|t| {
            let mut z = CVector::zeros(k);
            for (u, du) in d.iter().enumerate() {
                z += du * &e[t + burn - u];
            }
            z
        })
        .collect()
}

fn factor(f: &SpectralDensityGrid) -> Result<FactorizationResult> {
    factorize::spectral_factorize(f, &FactorizationOptions::default())
}

/// A sample path `z(0..n_steps)` with spectral density `f`.
pub fn simulate_channel(f: &SpectralDensityGrid, n_steps: usize, seed: u64) -> Result<Vec<CVector>> {
    let fac = factor(f)?;
    Ok(moving_average(&fac.d, n_steps, &mut stream_rng(seed, 0)))
}

/// Everything needed to run trials of one estimator: factored densities and
/// the estimator's past coefficients.
#[derive(Debug, Clone)]
pub struct TrialModel {
    a: Vec<CVector>,
    /// `h_{-1}, ..., h_{-n_steps}`
    h: Vec<CVector>,
    signal: Vec<CMatrix>,
    noise: Option<Vec<CMatrix>>,
    seed: u64,
    truncated_energy: f64,
}

impl TrialModel {
    pub fn new(
        solution: &EstimateSolution,
        a: &FunctionalSpec,
        f: &SpectralDensityGrid,
        g: Option<&SpectralDensityGrid>,
        cfg: &SimulationConfig,
    ) -> Result<Self> {
        if cfg.n_steps == 0 {
            return Err(Error::InvalidArgument("simulation needs at least one past observation".into()));
        }
        if cfg.n_trials < 2 {
            return Err(Error::InvalidArgument("a standard error needs at least two trials".into()));
        }
        let n = solution.h_grid.len();
        if n == 0 {
            return Err(Error::InvalidArgument("solution carries no spectral characteristic".into()));
        }
        if cfg.n_steps >= n / 2 {
            return Err(Error::InvalidArgument(format!(
                "{} past steps exceed what a grid of {n} nodes resolves ({} lags)",
                cfg.n_steps,
                n / 2 - 1
            )));
        }
        if a.k() != f.dim() || g.is_some_and(|g| g.dim() != f.dim()) || solution.h_grid[0].len() != f.dim() {
            return Err(Error::DimensionMismatch("functional, densities and solution disagree on K".into()));
        }
        let all = solution.past_coefficients(n / 2 - 1)?;
        let energy = |v: &[CVector]| v.iter().map(|x| x.norm_squared()).sum::<f64>();
        let total = energy(&all);
        let h = all[..cfg.n_steps].to_vec();
        let truncated_energy = if total > 0.0 { (total - energy(&h)) / total } else { 0.0 };
        Ok(Self {
            a: a.coefficients().to_vec(),
            h,
            signal: factor(f)?.d,
            noise: g.map(factor).transpose()?.map(|r| r.d),
            seed: cfg.seed,
            truncated_energy,
        })
    }

    pub fn truncated_energy(&self) -> f64 {
        self.truncated_energy
    }

    /// One independent trial; the result depends only on the seed and `trial`.
    pub fn trial(&self, trial: u64) -> TrialRecord {
        let past = self.h.len();
        let horizon = self.a.len();
        // time t maps to index t + past
        let z = moving_average(&self.signal, past + horizon, &mut stream_rng(self.seed, 2 * trial));
        let theta = self.noise.as_ref().map(|d| moving_average(d, past, &mut stream_rng(self.seed, 2 * trial + 1)));
        let realized: Complex64 = self.a.iter().enumerate().map(|(j, aj)| aj.dot(&z[past + j])).sum();
        let estimate: Complex64 = self
            .h
            .iter()
            .enumerate()
            .map(|(s, hs)| {
                let idx = past - 1 - s;
                let mut obs = z[idx].clone();
                if let Some(th) = &theta {
                    obs += &th[idx];
                }
                hs.dot(&obs)
            })
            .sum();
        TrialRecord { realized, estimate, squared_error: (realized - estimate).norm_sqr() }
    }
}

/// Mean and standard error of the squared errors.
pub fn summarize(records: Vec<TrialRecord>, truncated_energy: f64) -> MseEstimate {
    let n = records.len();
    let mean = records.iter().map(|r| r.squared_error).sum::<f64>() / n as f64;
    let var = records.iter().map(|r| (r.squared_error - mean) * (r.squared_error - mean)).sum::<f64>() / (n as f64 - 1.0);
    MseEstimate { mean, stderr: libm::sqrt(var / n as f64), n_trials: n, truncated_energy, records }
}

/// Monte Carlo estimate of `E |A z - A^ z|^2` for the estimator in `solution`
/// applied to `n_steps` past observations `z + theta`.
pub fn empirical_mse(
    solution: &EstimateSolution,
    a: &FunctionalSpec,
    f: &SpectralDensityGrid,
    g: Option<&SpectralDensityGrid>,
    cfg: &SimulationConfig,
) -> Result<MseEstimate> {
    let model = TrialModel::new(solution, a, f, g, cfg)?;
    let records = (0..cfg.n_trials as u64).map(|i| model.trial(i)).collect();
    Ok(summarize(records, model.truncated_energy))
}

/// Field samples on a sphere grid at times `t_s = start + s dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub start: f64,
    pub dt: f64,
    /// `[time][node]`
    pub values: Vec<Vec<Complex64>>,
}

/// Rebuilds the field from its channel sequences: per channel the blocked
/// vectors are turned back into time samples, then every time slice is
/// synthesized over the harmonics. `paths` follow [`harmonics::indices`]
/// order up to degree `m_max` and must share one blocking and start.
///
/// With `real`, channel vectors are conjugate-paired first so the samples are
/// real (odd `K` only).
pub fn synthesize_field(paths: &[ChannelVectorSequence], m_max: usize, grid: &SphereGrid, real: bool) -> Result<FieldSamples> {
    let count = (m_max + 1) * (m_max + 1);
    if paths.len() != count {
        return Err(Error::DimensionMismatch(format!("{} channel paths for degree {m_max} (expected {count})", paths.len())));
    }
    grid.check_resolves(m_max)?;
    let first = &paths[0];
    if paths.iter().any(|p| p.config != first.config || p.start != first.start || p.len() != first.len()) {
        return Err(Error::DimensionMismatch("channel paths differ in blocking, start or length".into()));
    }
    let cfg = first.config;
    let series: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            if real {
                let values = p.values.iter().map(blocking::enforce_real).collect::<Result<Vec<_>>>()?;
                blocking::reconstruct_sequence(&ChannelVectorSequence { values, ..p.clone() })
            } else {
                blocking::reconstruct_sequence(p)
            }
        })
        .collect::<Result<_>>()?;
    let steps = series[0].len();
    let mut values = Vec::with_capacity(steps);
    for s in 0..steps {
        let coeffs: Vec<Complex64> = series.iter().map(|x| x[s]).collect();
        let mut slice = harmonics::synthesize_field(&coeffs, m_max, grid)?;
        if real {
            for z in &mut slice {
                z.im = 0.0;
            }
        }
        values.push(slice);
    }
    Ok(FieldSamples { start: first.start as f64 * cfg.period(), dt: cfg.dt(), values })
}

/// Inverse of [`synthesize_field`]: harmonic decomposition of every time
/// slice, then blocking of every channel.
pub fn analyze_field(
    samples: &FieldSamples,
    m_max: usize,
    grid: &SphereGrid,
    cfg: &BlockingConfig,
    start_block: i64,
) -> Result<Vec<ChannelVectorSequence>> {
    let count = (m_max + 1) * (m_max + 1);
    let mut series = alloc::vec![Vec::with_capacity(samples.values.len()); count];
    for slice in &samples.values {
        let coeffs = harmonics::decompose_field(slice, grid, m_max)?;
        for (s, c) in series.iter_mut().zip(coeffs) {
            s.push(c);
        }
    }
    series.iter().map(|s| blocking::block_coefficients(s, cfg, start_block)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extrapolate::{solve_channel, SolverOptions};
    use crate::linalg::c;
    use crate::spectral::RationalDensity;

    fn sample_cov(path: &[CVector], lag: usize) -> CMatrix {
        let k = path[0].len();
        let n = path.len() - lag;
        let mut acc = CMatrix::zeros(k, k);
        for t in 0..n {
            acc += &path[t + lag] * path[t].adjoint();
        }
        acc / Complex64::from(n as f64)
    }

    #[test]
    fn white_lag_zero_covariance() {
        let n = 20_000;
        let path = simulate_channel(&SpectralDensityGrid::identity(2, 64), n, 7).unwrap();
        let k0 = sample_cov(&path, 0);
        let band = 3.0 / (n as f64).sqrt();
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((k0[(i, j)] - c(target, 0.0)).norm() <= band, "{i}{j}: {}", k0[(i, j)]);
            }
        }
    }

    #[test]
    fn ar1_lag_ratio() {
        let phi = 0.6;
        let n = 40_000;
        let f = RationalDensity::scalar(&[1.0], &[1.0, -phi]).unwrap().rasterize(512).unwrap();
        let path = simulate_channel(&f, n, 3).unwrap();
        let ratio = sample_cov(&path, 1)[(0, 0)] / sample_cov(&path, 0)[(0, 0)];
        let band = 3.0 * ((1.0 - phi * phi) / n as f64).sqrt();
        assert!((ratio - c(phi, 0.0)).norm() <= band, "{ratio}");
    }

    #[test]
    fn fixed_seed_reproduces_path() {
        let f = RationalDensity::scalar(&[1.0, 0.3], &[1.0, -0.4]).unwrap().rasterize(128).unwrap();
        let a = simulate_channel(&f, 100, 42).unwrap();
        let b = simulate_channel(&f, 100, 42).unwrap();
        let bits = |p: &[CVector]| -> Vec<u64> {
            p.iter().flat_map(|v| v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()])).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&simulate_channel(&f, 100, 43).unwrap()));
    }

    #[test]
    fn white_noise_mse_is_one() {
        let f = SpectralDensityGrid::identity(1, 64);
        let a = FunctionalSpec::unit(1, 1);
        let sol = solve_channel(&f, None, &a, &SolverOptions::default()).unwrap();
        let cfg = SimulationConfig { seed: 1, n_trials: 10_000, n_steps: 8 };
        let est = empirical_mse(&sol, &a, &f, None, &cfg).unwrap();
        // |z|^2 of a circular complex Gaussian has variance 1
        assert!((est.stderr - 0.01).abs() < 0.002, "{}", est.stderr);
        assert!((est.mean - 1.0).abs() <= 3.0 * est.stderr, "{} +- {}", est.mean, est.stderr);
    }

    #[test]
    fn ar1_one_step_mse_is_innovation_variance() {
        let f = RationalDensity::scalar(&[1.0], &[1.0, -0.5]).unwrap().rasterize(256).unwrap();
        let a = FunctionalSpec::unit(1, 1);
        let sol = solve_channel(&f, None, &a, &SolverOptions::default()).unwrap();
        assert!((sol.delta - 1.0).abs() < 1e-8);
        let cfg = SimulationConfig { seed: 9, n_trials: 10_000, n_steps: 32 };
        let est = empirical_mse(&sol, &a, &f, None, &cfg).unwrap();
        assert!(est.truncated_energy < 1e-12);
        assert!((est.mean - sol.delta).abs() <= 3.0 * est.stderr, "{} +- {}", est.mean, est.stderr);
    }

    #[test]
    fn noise_is_uncorrelated_with_signal() {
        let f = RationalDensity::scalar(&[1.0], &[1.0, -0.5]).unwrap().rasterize(128).unwrap();
        let d_f = factor(&f).unwrap().d;
        let n = 20_000;
        let z = moving_average(&d_f, n, &mut stream_rng(5, 0));
        let th = moving_average(&[CMatrix::identity(1, 1)], n, &mut stream_rng(5, 1));
        let cross: Complex64 = z.iter().zip(&th).map(|(a, b)| a[0] * b[0].conj()).sum::<Complex64>() / n as f64;
        let var_z = z.iter().map(|v| v[0].norm_sqr()).sum::<f64>() / n as f64;
        assert!(cross.norm() <= 3.0 * (var_z / n as f64).sqrt(), "{cross}");
    }

    #[test]
    fn too_short_past_is_rejected() {
        let f = SpectralDensityGrid::identity(1, 32);
        let a = FunctionalSpec::unit(1, 1);
        let sol = solve_channel(&f, None, &a, &SolverOptions::default()).unwrap();
        for n_steps in [0, 16] {
            let cfg = SimulationConfig { seed: 0, n_trials: 10, n_steps };
            assert!(empirical_mse(&sol, &a, &f, None, &cfg).is_err());
        }
    }

    fn random_paths(m_max: usize, cfg: BlockingConfig, blocks: usize, seed: u64) -> Vec<ChannelVectorSequence> {
        let mut rng = stream_rng(seed, 0);
        (0..(m_max + 1) * (m_max + 1))
            .map(|_| {
                let values = (0..blocks)
                    .map(|_| blocking::enforce_real(&CVector::from_fn(cfg.k(), |_, _| complex_normal(&mut rng))).unwrap())
                    .collect();
                ChannelVectorSequence { start: 0, values, discarded_energy: alloc::vec![0.0; blocks], config: cfg }
            })
            .collect()
    }

    #[test]
    fn field_roundtrip() {
        let m_max = 3;
        let grid = SphereGrid::for_degree(m_max);
        let cfg = BlockingConfig::new(1.0, 5, 1.0 / 16.0).unwrap();
        let paths = random_paths(m_max, cfg, 3, 11);
        let field = synthesize_field(&paths, m_max, &grid, true).unwrap();
        assert!(field.values.iter().flatten().all(|z| z.im == 0.0));
        let back = analyze_field(&field, m_max, &grid, &cfg, 0).unwrap();
        for (p, q) in paths.iter().zip(&back) {
            for (u, v) in p.values.iter().zip(&q.values) {
                assert!((u - v).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn zero_and_impulse_fields() {
        let m_max = 2;
        let grid = SphereGrid::for_degree(m_max);
        let cfg = BlockingConfig::new(2.0, 3, 0.25).unwrap();
        let zero = CVector::zeros(3);
        let mut paths: Vec<ChannelVectorSequence> = (0..9)
            .map(|_| ChannelVectorSequence {
                start: 0,
                values: alloc::vec![zero.clone()],
                discarded_energy: alloc::vec![0.0],
                config: cfg,
            })
            .collect();
        let field = synthesize_field(&paths, m_max, &grid, false).unwrap();
        assert!(field.values.iter().flatten().all(|z| z.norm() == 0.0));

        paths[harmonics::flat_index(1, 0)].values[0][0] = c(1.0, 0.0);
        let field = synthesize_field(&paths, m_max, &grid, false).unwrap();
        let back = analyze_field(&field, m_max, &grid, &cfg, 0).unwrap();
        for (i, q) in back.iter().enumerate() {
            let want = if i == harmonics::flat_index(1, 0) { 1.0 } else { 0.0 };
            assert!((q.values[0][0] - c(want, 0.0)).norm() <= 1e-8);
            assert!(q.values[0].iter().skip(1).all(|z| z.norm() <= 1e-8));
        }
    }

    #[test]
    fn synthesis_rejects_mismatched_inputs() {
        let grid = SphereGrid::for_degree(1);
        let cfg = BlockingConfig::new(1.0, 3, 0.125).unwrap();
        let paths = random_paths(1, cfg, 2, 1);
        assert!(synthesize_field(&paths[..3], 1, &grid, false).is_err());
        let even = BlockingConfig::new(1.0, 2, 0.25).unwrap();
        let p: Vec<ChannelVectorSequence> = (0..4)
            .map(|_| ChannelVectorSequence {
                start: 0,
                values: alloc::vec![CVector::zeros(2)],
                discarded_energy: alloc::vec![0.0],
                config: even,
            })
            .collect();
        assert!(synthesize_field(&p, 1, &grid, true).is_err());
    }
}
