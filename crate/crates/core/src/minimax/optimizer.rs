//! Least-favorable densities by projected ascent with continuation.
//!
//! The optimal error is concave in `(F, G)` but has kinks where `F + G` is
//! singular, which stalls a plain ascent. The search therefore climbs the
//! smoothed error `Delta(F + dI, G + dI)` for a decreasing ridge `d`, ending
//! with `d = 0`. Each iteration moves both densities together, then the
//! signal alone, then the noise alone, along the gradient fields `M_F`, `M_G`
//! (scaled to the size of the density). A move is projected back onto the
//! class and accepted only if the smoothed error grows; each move keeps its
//! own step length. The best pair under the unsmoothed error is returned. The
//! operator window is fixed after the first solve so that all iterates are
//! compared on the same truncation.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::extrapolate::{SolveMode, Window};
use crate::spectral::SpectralDensityGrid;

use super::class::DensityClassSpec;
use super::objective::{solve_anchor, Anchor};
use super::projection::{self, family_of, grids_of, project_onto_class, Family, ProjectionOptions};
use super::saddle::{report_from_fields, saddle_point_residual, SaddleReport};
use super::MinimaxChannel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Total number of ascent iterations over all smoothing stages.
    pub max_iter: usize,
    /// Relative gain of an iteration below which a stage ends.
    pub tol: f64,
    pub max_backtracks: usize,
    /// First ridge relative to the mean density level; 0 disables smoothing.
    pub smoothing: f64,
    pub projection: ProjectionOptions,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-6, max_backtracks: 40, smoothing: 1e-2, projection: ProjectionOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastFavorable {
    pub f: Vec<SpectralDensityGrid>,
    pub g: Option<Vec<SpectralDensityGrid>>,
    pub objective: f64,
    pub iterations: usize,
    /// `false` means the iteration budget ran out (NOT_CONVERGED); the pair is
    /// the best iterate.
    pub converged: bool,
    /// Best admissible objective, at the start and after every iteration.
    pub history: Vec<f64>,
    pub window: usize,
    /// Fraction of the projected start mixed into a non-minimal limit to make
    /// it admissible; 0 when the limit itself is minimal. When positive, the
    /// report describes the limit through its smoothed gradient field, which
    /// is only one element of the superdifferential there.
    pub pull: f64,
    pub report: SaddleReport,
}

fn step(x: &Family, m: &Family, tau: f64) -> Family {
    let nx = projection::norm(x);
    let nm = projection::norm(m);
    if nm == 0.0 {
        return x.clone();
    }
    let s = Complex64::from(tau * nx.max(1e-300) / nm);
    x.iter().zip(m).map(|(xc, mc)| xc.iter().zip(mc).map(|(a, b)| a + b * s).collect()).collect()
}

fn ridged(x: &[SpectralDensityGrid], d: f64) -> Vec<SpectralDensityGrid> {
    if d == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|gr| gr.add(&SpectralDensityGrid::identity(gr.dim(), gr.n_lambda()).scale(d)).expect("same shape")).collect()
}

struct Search<'a> {
    channels: &'a [MinimaxChannel],
    window: Window,
}

impl Search<'_> {
    fn anchor(&self, f: &[SpectralDensityGrid], g: Option<&[SpectralDensityGrid]>, d: f64) -> Result<Anchor> {
        let gr = g.map(|g| ridged(g, d));
        solve_anchor(self.channels, &ridged(f, d), gr.as_deref(), self.window)
    }

    fn exact(&self, f: &[SpectralDensityGrid], g: Option<&[SpectralDensityGrid]>) -> f64 {
        self.anchor(f, g, 0.0).map_or(f64::NEG_INFINITY, |a| a.delta)
    }
}

type Pair = (Vec<SpectralDensityGrid>, Option<Vec<SpectralDensityGrid>>);

fn mix(x: &[SpectralDensityGrid], y: &[SpectralDensityGrid], theta: f64) -> Vec<SpectralDensityGrid> {
    x.iter().zip(y).map(|(a, b)| a.scale(1.0 - theta).add(&b.scale(theta)).expect("same shape")).collect()
}

/// Runs the ascent from `init` (projected onto the class first).
///
/// The supremum can sit at pairs with singular `F + G`, which are not
/// minimal. The returned pair is then the limit point pulled towards the
/// projected start by the smallest fraction that restores minimality; by
/// concavity this loses at most that fraction of the gain.
pub fn find_least_favorable(
    channels: &[MinimaxChannel],
    class: &DensityClassSpec,
    init_f: &[SpectralDensityGrid],
    init_g: Option<&[SpectralDensityGrid]>,
    opts: &OptimizerOptions,
) -> Result<LeastFavorable> {
    if class.weights.len() != channels.len() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "class has {} weights for {} channels",
            class.weights.len(),
            channels.len()
        )));
    }
    let start: Pair = project_onto_class(init_f, init_g, class, &opts.projection)?;
    let (mut f, mut g) = start.clone();
    let level = {
        let k = f[0].dim() as f64;
        let tr: f64 = f.iter().chain(g.iter().flatten()).map(|x| x.mean_trace()).sum();
        (tr / (k * f.len() as f64)).max(f64::MIN_POSITIVE)
    };
    let mut ridge = opts.smoothing * level;

    let first = solve_anchor(channels, &f, g.as_deref(), Window::default()).or_else(|_| {
        solve_anchor(channels, &ridged(&f, ridge), g.as_deref().map(|g| ridged(g, ridge)).as_deref(), Window::default())
    })?;
    let search = Search { channels, window: Window::Fixed(first.window) };

    let mut best: Option<(Pair, f64)> = None;
    let mut history = Vec::new();
    let mut record = |pair: &Pair, value: f64, best: &mut Option<(Pair, f64)>| {
        if value.is_finite() && best.as_ref().is_none_or(|b| value > b.1) {
            *best = Some((pair.clone(), value));
        }
        if let Some(b) = best {
            history.push(b.1);
        }
    };
    record(&start, search.exact(&start.0, start.1.as_deref()), &mut best);

    let mut iterations = 0;
    let mut converged = false;
    let mut anchor = search.anchor(&f, g.as_deref(), ridge)?;
    let mut anchor_ridge = ridge;

    'stages: loop {
        // step lengths for the joint, signal-only and noise-only moves
        let mut tau = [1.0f64; 3];
        loop {
            if iterations >= opts.max_iter {
                break 'stages;
            }
            iterations += 1;
            let before = anchor.delta;
            let moves: &[usize] = if g.is_some() { &[0, 1, 2] } else { &[1] };
            for &side in moves {
                let xf = family_of(&f);
                let xg = g.as_deref().map(family_of);
                let mut t = (2.0 * tau[side]).min(1.0);
                for _ in 0..=opts.max_backtracks {
                    let cand_f = if side == 2 { f.clone() } else { grids_of(&step(&xf, &anchor.m_f, t)) };
                    let cand_g = if side == 1 { g.clone() } else { xg.as_ref().map(|x| grids_of(&step(x, &anchor.m_g, t))) };
                    let trial = project_onto_class(&cand_f, cand_g.as_deref(), class, &opts.projection)
                        .and_then(|(pf, pg)| search.anchor(&pf, pg.as_deref(), ridge).map(|a| (pf, pg, a)));
                    if let Ok((pf, pg, a)) = trial {
                        if a.delta > anchor.delta {
                            tau[side] = t;
                            f = pf;
                            g = pg;
                            anchor = a;
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
            let value = if ridge == 0.0 { anchor.delta } else { search.exact(&f, g.as_deref()) };
            record(&(f.clone(), g.clone()), value, &mut best);
            let gain = (anchor.delta - before) / before.abs().max(f64::MIN_POSITIVE);
            if gain < opts.tol {
                break;
            }
        }
        if ridge == 0.0 {
            converged = true;
            break;
        }
        ridge = if ridge * 0.1 < 1e-9 * level { 0.0 } else { ridge * 0.1 };
        match search.anchor(&f, g.as_deref(), ridge) {
            Ok(a) => {
                anchor = a;
                anchor_ridge = ridge;
            }
            // unsmoothed error not computable here: the last stage stands
            Err(_) if ridge == 0.0 => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let mode = if g.is_some() { SolveMode::Noisy } else { SolveMode::Noiseless };
    let last = search.exact(&f, g.as_deref());
    let mut pull = 0.0;
    if !last.is_finite() {
        // pull the non-minimal limit towards the start
        let mut theta = 1e-6;
        while theta < 1.0 {
            let pair: Pair = (mix(&f, &start.0, theta), g.as_deref().map(|g| mix(g, start.1.as_deref().unwrap(), theta)));
            let v = search.exact(&pair.0, pair.1.as_deref());
            if v.is_finite() {
                record(&pair, v, &mut best);
                pull = theta;
                break;
            }
            theta *= 10.0;
        }
    }
    let Some(((bf, bg), value)) = best else {
        return Err(Error::Infeasible("no pair in the class satisfies the minimality condition".into()));
    };
    let report = if last.is_finite() || anchor_ridge == 0.0 {
        saddle_point_residual(channels, &bf, bg.as_deref(), class, mode, search.window)?
    } else {
        // stationarity of the limit point, read off the smoothed field
        report_from_fields(&anchor.m_f, Some(&anchor.m_g).filter(|_| g.is_some()), anchor.delta, &f, g.as_deref(), class, mode)
    };
    Ok(LeastFavorable { objective: value, f: bf, g: bg, iterations, converged, history, window: first.window, pull, report })
}
