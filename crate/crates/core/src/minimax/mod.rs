//! Minimax-robust estimation over admissible classes of densities.

use alloc::vec::Vec;

use crate::error::Result;
use crate::extrapolate::{self, EstimateSolution, FunctionalSpec, SolverOptions};
use crate::spectral::SpectralDensityGrid;

pub mod class;
pub mod objective;
pub mod optimizer;
pub mod projection;
pub mod saddle;

pub use class::{ClassParams, ClassVariant, Constraint, DensityClassSpec, Family, Level, SideClass, Statistic, Weighting};
pub use objective::{evaluate_robust_objective, solve_anchor, Anchor};
pub use optimizer::{find_least_favorable, LeastFavorable, OptimizerOptions};
pub use projection::{project_onto_class, project_side, ProjectionOptions};
pub use saddle::{saddle_point_residual, Multipliers, Pointwise, SaddleReport};

/// One degree `m` with the functionals `a_m^l` sharing its densities.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxChannel {
    pub m: usize,
    pub functionals: Vec<FunctionalSpec>,
}

/// The optimal characteristic at the least-favorable pair, tagged as minimax.
pub fn minimax_characteristic(
    f0: &SpectralDensityGrid,
    g0: Option<&SpectralDensityGrid>,
    a: &FunctionalSpec,
    opts: &SolverOptions,
) -> Result<EstimateSolution> {
    let mut sol = extrapolate::solve_channel(f0, g0, a, opts)?;
    sol.minimax = true;
    Ok(sol)
}
