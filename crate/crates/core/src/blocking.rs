//! Period-`T` blocking: a continuous-time channel function is cut into
//! period-length segments and each segment is projected onto the first `K`
//! functions of the Fourier basis `e_k(u) = T^{-1/2} exp(2 pi i nu_k u / T)`,
//! `nu_k = (-1)^k floor(k/2)`.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CVector;

/// Frequency of the `k`-th basis function (1-based): `0, 1, -1, 2, -2, ...`.
pub fn basis_frequency(k: usize) -> Result<i64> {
    if k == 0 {
        return Err(Error::InvalidArgument("basis index starts at 1".into()));
    }
    let half = (k / 2) as i64;
    Ok(if k.is_multiple_of(2) { half } else { -half })
}

/// 0-based position of frequency `nu` among the first `k_count` basis
/// functions, if retained.
pub fn frequency_position(nu: i64, k_count: usize) -> Option<usize> {
    let k = if nu > 0 { 2 * nu as usize } else { 2 * (-nu) as usize + 1 };
    (k <= k_count).then(|| k - 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockingConfig {
    period: f64,
    k: usize,
    dt: f64,
    per_period: usize,
}

impl BlockingConfig {
    pub fn new(period: f64, k: usize, dt: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("need T > 0 and dt > 0, got T = {period}, dt = {dt}")));
        }
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        let ratio = period / dt;
        let s = libm::round(ratio);
        if s < 1.0 || (ratio - s).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!("T / dt = {ratio} is not a positive integer")));
        }
        let per_period = s as usize;
        if per_period < 2 * k {
            return Err(Error::InvalidArgument(format!(
                "{per_period} samples per period cannot resolve K = {k} basis functions (need at least {})",
                2 * k
            )));
        }
        Ok(Self { period, k, dt, per_period })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples_per_period(&self) -> usize {
        self.per_period
    }

    /// Frequencies `nu_1..nu_K`.
    pub fn frequencies(&self) -> Vec<i64> {
        (1..=self.k).map(|k| basis_frequency(k).expect("k >= 1")).collect()
    }

    /// `e_k` sampled at `u = s dt`, `s = 0..S`.
    pub fn basis_samples(&self, k: usize) -> Result<Vec<Complex64>> {
        let nu = basis_frequency(k)?;
        let scale = 1.0 / libm::sqrt(self.period);
        Ok((0..self.per_period).map(|s| Complex64::from_polar(scale, self.phase(nu, s))).collect())
    }

    fn phase(&self, nu: i64, s: usize) -> f64 {
        // exp(2 pi i nu s dt / T) with s dt / T = s / S exactly
        let r = (nu * s as i64).rem_euclid(self.per_period as i64) as f64;
        2.0 * PI * r / self.per_period as f64
    }
}

/// Vector-valued sequence `j -> C^K` on a contiguous window starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVectorSequence {
    pub start: i64,
    pub values: Vec<CVector>,
    /// Per-block fraction of segment energy outside the retained `K`
    /// frequencies (0 for an all-zero block).
    pub discarded_energy: Vec<f64>,
    pub config: BlockingConfig,
}

impl ChannelVectorSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: i64) -> Option<&CVector> {
        let idx = j.checked_sub(self.start)?;
        usize::try_from(idx).ok().and_then(|i| self.values.get(i))
    }
}

fn check_finite(samples: &[Complex64]) -> Result<()> {
    match samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Projects one period of samples onto the retained basis by the
/// periodic rectangle rule.
pub fn project_segment(segment: &[Complex64], cfg: &BlockingConfig) -> Result<CVector> {
    if segment.len() != cfg.per_period {
        return Err(Error::DimensionMismatch(format!(
            "segment holds {} samples, period needs {}",
            segment.len(),
            cfg.per_period
        )));
    }
    let scale = cfg.dt / libm::sqrt(cfg.period);
    let freqs = cfg.frequencies();
    Ok(CVector::from_iterator(
        cfg.k,
        freqs.iter().map(|&nu| {
            segment.iter().enumerate().map(|(s, &f)| f * Complex64::from_polar(1.0, -cfg.phase(nu, s))).sum::<Complex64>() * scale
        }),
    ))
}

/// Splits samples starting at `t = start_block * T` into periods and projects
/// each one.
pub fn block_coefficients(samples: &[Complex64], cfg: &BlockingConfig, start_block: i64) -> Result<ChannelVectorSequence> {
    check_finite(samples)?;
    let s = cfg.per_period;
    let full = samples.len() / s;
    let rem = samples.len() % s;
    if rem != 0 {
        let begin = (start_block as f64 + full as f64) * cfg.period;
        return Err(Error::PartialPeriod { start: begin, end: begin + rem as f64 * cfg.dt, samples: rem, per_period: s });
    }
    let mut values = Vec::with_capacity(full);
    let mut discarded = Vec::with_capacity(full);
    for seg in samples.chunks_exact(s) {
        let v = project_segment(seg, cfg)?;
        let energy: f64 = seg.iter().map(|z| z.norm_sqr()).sum::<f64>() * cfg.dt;
        let kept: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        discarded.push(if energy > 0.0 { ((energy - kept) / energy).max(0.0) } else { 0.0 });
        values.push(v);
    }
    Ok(ChannelVectorSequence { start: start_block, values, discarded_energy: discarded, config: *cfg })
}

/// `sum_k v_k e_k(u)` on the sample grid of one period.
pub fn reconstruct_segment(v: &CVector, cfg: &BlockingConfig) -> Result<Vec<Complex64>> {
    if v.len() != cfg.k {
        return Err(Error::DimensionMismatch(format!("vector of length {} for K = {}", v.len(), cfg.k)));
    }
    let freqs = cfg.frequencies();
    let scale = 1.0 / libm::sqrt(cfg.period);
    Ok((0..cfg.per_period)
        .map(|s| freqs.iter().zip(v.iter()).map(|(&nu, &c)| c * Complex64::from_polar(scale, cfg.phase(nu, s))).sum())
        .collect())
}

/// Concatenates reconstructed segments of a whole sequence.
pub fn reconstruct_sequence(seq: &ChannelVectorSequence) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(seq.len() * seq.config.per_period);
    for v in &seq.values {
        out.extend(reconstruct_segment(v, &seq.config)?);
    }
    Ok(out)
}

/// Makes `v` the coefficient vector of a real-valued segment by pairing each
/// frequency `nu` with `-nu` (`v_{-nu} = conj(v_nu)`). Requires odd `K` so
/// every nonzero frequency has its partner.
pub fn enforce_real(v: &CVector) -> Result<CVector> {
    let k = v.len();
    if k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("real-valued blocking needs odd K, got {k}")));
    }
    let mut out = v.clone();
    out[0] = Complex64::new(v[0].re, 0.0);
    for nu in 1..=(k / 2) as i64 {
        let p = frequency_position(nu, k).expect("retained");
        let q = frequency_position(-nu, k).expect("retained");
        let avg = (v[p] + v[q].conj()) * 0.5;
        out[p] = avg;
        out[q] = avg.conj();
    }
    Ok(out)
}

/// Blocked coefficients of a deterministic weight function on `[0, J T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalBlocks {
    pub a: Vec<CVector>,
    /// `sum_j |a(j)|`
    pub norm_sum: f64,
    /// `sum_j (j + 1) |a(j)|^2`
    pub weighted_square_sum: f64,
    pub discarded_energy: Vec<f64>,
}

/// The two summability sums for a coefficient sequence.
pub fn summability(a: &[CVector]) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (j, v) in a.iter().enumerate() {
        let n2 = v.norm_squared();
        s1 += libm::sqrt(n2);
        s2 += (j as f64 + 1.0) * n2;
    }
    (s1, s2)
}

pub fn functional_to_spec(samples: &[Complex64], cfg: &BlockingConfig, j: usize) -> Result<FunctionalBlocks> {
    check_finite(samples)?;
    let need = j * cfg.per_period;
    if samples.len().is_multiple_of(cfg.per_period) && samples.len() != need {
        return Err(Error::DimensionMismatch(format!(
            "weight function holds {} samples, J = {j} periods need {need}",
            samples.len()
        )));
    }
    let seq = block_coefficients(samples, cfg, 0)?;
    let (norm_sum, weighted_square_sum) = summability(&seq.values);
    Ok(FunctionalBlocks { a: seq.values, norm_sum, weighted_square_sum, discarded_energy: seq.discarded_energy })
}
