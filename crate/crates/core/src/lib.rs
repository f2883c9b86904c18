//! Modified second-order Bohmian dynamics.
//!
//! The crate evaluates ψ-derived local fields for analytic harmonic-oscillator
//! states and for a split-step Fourier solution of the 1D Schrödinger equation,
//! defines the smeared phase-space equilibria `f_μ` (Gaussian, Lorentzian and
//! the Dirac limit), the forces that keep them equivariant, trajectory and
//! ensemble integration, and the coarse-grained H-function used to study
//! relaxation towards `f_μ`.
//!
//! Units follow the usual choice `ħ = m = k = 1` by default; every parameter is
//! overridable through [`SystemParams`] and [`Potential`].

// `!(a > b)` is used deliberately so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod params;
pub mod quadrature;
pub mod relaxation;
pub mod rng;
pub mod stats;
pub mod wavefunction;

pub use dynamics::{
    bohm_force, coherent_closed_form, debroglie_velocity, flow_divergence, integral_force, integrate_trajectory,
    liouville_residual, modified_force, ForceLaw, ForceVariant, IntegratorSpec, Method, Trajectory,
};
pub use ensemble::{
    evolve_ensemble, sample_equilibrium, sample_nonequilibrium, CustomDensity, Ensemble, MomentumLaw,
    NonEquilibriumSpec, PhaseSpacePoint, PositionLaw,
};
pub use error::{Error, Result};
pub use kernels::{
    check_marginals, equilibrium_density, sample_conditional_momentum, KernelKind, KernelSpec, MarginalReport,
};
pub use params::{Potential, SystemParams};
pub use relaxation::{
    coarse_grain, equilibrium_cell_averages, h_function, run_relaxation, CellField, CoarseGrid, HSeries,
    RelaxationConfig,
};
pub use wavefunction::{FieldSample, GridSolution, GridSpec, WaveFunctionModel};
