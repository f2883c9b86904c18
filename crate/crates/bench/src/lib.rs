//! Fixtures shared by the benchmarks.

use bohmstab::{ForceLaw, GridSolution, GridSpec, KernelSpec, WaveFunctionModel};

pub fn gaussian_law() -> ForceLaw {
    ForceLaw::modified(KernelSpec::gaussian(1.0).expect("positive width"))
}

pub fn lorentzian_law() -> ForceLaw {
    ForceLaw::modified(KernelSpec::lorentzian(1.0).expect("positive width"))
}

/// Three-mode superposition on a 256-point grid, propagated to `t_end`.
pub fn grid_model(t_end: f64) -> WaveFunctionModel {
    let analytic = WaveFunctionModel::superposition(3).expect("valid superposition");
    let spec = GridSpec::new(-12.0, 12.0, 256, 1e-3).expect("valid grid");
    let mut grid = GridSolution::from_model(&analytic, spec, 0.0)
        .expect("grid initialises")
        .with_snapshot_stride(10);
    grid.evolve_grid(t_end).expect("grid propagates");
    grid.into()
}
