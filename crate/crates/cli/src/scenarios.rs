//! Canonical setups shared by `verify` and the acceptance suite.

use bohmstab::relaxation::CoarseGrid;
use bohmstab::{
    GridSolution, GridSpec, IntegratorSpec, KernelSpec, NonEquilibriumSpec, RelaxationConfig, WaveFunctionModel,
};

use crate::error::Result;

/// Adaptive integrator used for ensembles.
pub fn ensemble_integrator() -> IntegratorSpec {
    IntegratorSpec::rk45(1e-8, 1e-10)
}

/// Equal-weight three-mode superposition propagated on a 256-point grid
/// up to `t_end`.
pub fn grid_three_mode(t_end: f64) -> Result<WaveFunctionModel> {
    let analytic = WaveFunctionModel::superposition(3)?;
    let mut grid =
        GridSolution::from_model(&analytic, GridSpec::new(-12.0, 12.0, 256, 1e-3)?, 0.0)?.with_snapshot_stride(10);
    grid.evolve_grid(t_end)?;
    Ok(grid.into())
}

/// Four-mode superposition whose flow mixes the offset ensemble.
pub fn relaxation_model() -> Result<WaveFunctionModel> {
    Ok(WaveFunctionModel::superposition(4)?)
}

/// `n = 2·10⁵`, 30×30 cells on `[−6, 6]²`, `t = 0, 1, …, 20`, Gaussian `μ = 1`.
pub fn relaxation_config(initial: NonEquilibriumSpec) -> Result<RelaxationConfig> {
    let grid = CoarseGrid::new((-6.0, 6.0), 30, (-6.0, 6.0), 30)?;
    let times = (0..=20).map(f64::from).collect();
    Ok(RelaxationConfig::new(
        KernelSpec::gaussian(1.0)?,
        initial,
        200_000,
        grid,
        times,
    ))
}
