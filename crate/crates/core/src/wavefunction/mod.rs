//! ψ-derived local fields from analytic models or a grid solution.
//!
//! Every model reports ψ and its first three log-derivatives `ψ⁽ᵏ⁾/ψ`; all
//! Bohmian fields are assembled from those ratios without unwrapping phases:
//!
//! * `∇S = ħ Im(ψ'/ψ)`, `∇R/R = Re(ψ'/ψ)`
//! * `∇²R/R = Re(ψ''/ψ) + Im(ψ'/ψ)²`, `Q = −(ħ²/2m) ∇²R/R`
//! * `∇∇S = ħ Im(ψ''/ψ − (ψ'/ψ)²)`
//! * `∇Q` from `d/dx (ψ''/ψ) = ψ'''/ψ − (ψ''/ψ)(ψ'/ψ)`.

mod analytic;
mod grid;

pub use analytic::{CoherentState, EigenSuperposition};
pub use grid::{Boundary, GridSolution, GridSpec};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{Potential, SystemParams};

/// Default node-exclusion threshold relative to the peak density.
pub const DEFAULT_NODE_RELATIVE: f64 = 1e-12;

/// Local fields at one `(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    /// `R² = |ψ|²`
    pub rho: f64,
    /// `∇S`
    pub grad_s: f64,
    /// `∇R/R`
    pub grad_log_r: f64,
    /// quantum potential `Q`
    pub q: f64,
    /// `∇Q`
    pub grad_q: f64,
    /// `∇∇S`
    pub hess_s: f64,
    /// false inside the node-exclusion region
    pub valid: bool,
}

impl FieldSample {
    /// Fields for a real, constant-amplitude ψ (no quantum force, no phase
    /// gradient). Handy as the plane-wave-like limit in tests.
    pub fn flat(rho: f64) -> Self {
        Self {
            rho,
            grad_s: 0.0,
            grad_log_r: 0.0,
            q: 0.0,
            grad_q: 0.0,
            hess_s: 0.0,
            valid: true,
        }
    }

    /// `∇ρ / ρ = 2 ∇R/R`
    pub fn grad_log_rho(&self) -> f64 {
        2.0 * self.grad_log_r
    }

    /// Errors with [`Error::NodeRegion`] unless the sample is valid.
    pub fn require_valid(self, x: f64, t: f64) -> Result<Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(Error::NodeRegion { x, t, rho: self.rho })
        }
    }
}

/// ψ and its first three log-derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalPsi {
    pub rho: f64,
    pub d1: Complex64,
    pub d2: Complex64,
    pub d3: Complex64,
}

impl LocalPsi {
    /// From ψ⁽ᵏ⁾ values, `k = 0..=3`. `scale2` multiplies `|ψ|²` when the
    /// values were computed with a common factor removed.
    pub fn from_derivatives(d: [Complex64; 4], scale2: f64) -> Self {
        let inv = d[0].inv();
        Self {
            rho: d[0].norm_sqr() * scale2,
            d1: d[1] * inv,
            d2: d[2] * inv,
            d3: d[3] * inv,
        }
    }

    pub fn fields(&self, params: &SystemParams, node_epsilon: f64) -> FieldSample {
        let hbar = params.hbar;
        let qpref = -hbar * hbar / (2.0 * params.mass);
        let d1 = self.d1;
        let d2 = self.d2;
        let lap_r = d2.re + d1.im * d1.im;
        let d_d1 = d2 - d1 * d1;
        let d_d2 = self.d3 - d2 * d1;
        let d_lap_r = d_d2.re + 2.0 * d1.im * d_d1.im;
        let sample = FieldSample {
            rho: self.rho,
            grad_s: hbar * d1.im,
            grad_log_r: d1.re,
            q: qpref * lap_r,
            grad_q: qpref * d_lap_r,
            hess_s: hbar * d_d1.im,
            valid: true,
        };
        let finite = [sample.grad_s, sample.grad_log_r, sample.q, sample.grad_q, sample.hess_s]
            .iter()
            .all(|v| v.is_finite());
        FieldSample {
            valid: finite && self.rho.is_finite() && self.rho >= node_epsilon,
            ..sample
        }
    }
}

/// Source of ψ(x, t) and its derived fields.
#[derive(Debug, Clone)]
pub enum WaveFunctionModel {
    CoherentState(CoherentState),
    EigenSuperposition(EigenSuperposition),
    GridSolution(Box<GridSolution>),
}

impl From<CoherentState> for WaveFunctionModel {
    fn from(m: CoherentState) -> Self {
        Self::CoherentState(m)
    }
}

impl From<EigenSuperposition> for WaveFunctionModel {
    fn from(m: EigenSuperposition) -> Self {
        Self::EigenSuperposition(m)
    }
}

impl From<GridSolution> for WaveFunctionModel {
    fn from(m: GridSolution) -> Self {
        Self::GridSolution(Box::new(m))
    }
}

impl WaveFunctionModel {
    /// Coherent state of the unit oscillator (`ħ = m = k = 1`).
    pub fn coherent(alpha: f64) -> Self {
        CoherentState::new(alpha, SystemParams::default(), Potential::default())
            .expect("unit oscillator parameters are valid")
            .into()
    }

    /// Equal-weight superposition of the lowest `modes` eigenstates of the
    /// unit oscillator.
    pub fn superposition(modes: usize) -> Result<Self> {
        Ok(EigenSuperposition::equal_weights(modes, SystemParams::default(), Potential::default())?.into())
    }

    pub fn params(&self) -> &SystemParams {
        match self {
            Self::CoherentState(m) => &m.params,
            Self::EigenSuperposition(m) => &m.params,
            Self::GridSolution(m) => &m.params,
        }
    }

    pub fn potential(&self) -> &Potential {
        match self {
            Self::CoherentState(m) => &m.potential,
            Self::EigenSuperposition(m) => &m.potential,
            Self::GridSolution(m) => &m.potential,
        }
    }

    /// Absolute density below which a point counts as a node.
    pub fn node_epsilon(&self) -> f64 {
        match self {
            Self::CoherentState(m) => m.node_epsilon,
            Self::EigenSuperposition(m) => m.node_epsilon,
            Self::GridSolution(m) => m.node_epsilon,
        }
    }

    /// Spatial domain, when bounded.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self {
            Self::GridSolution(m) => Some((m.spec.x_min, m.spec.x_max)),
            _ => None,
        }
    }

    /// Interval of x carrying all but a negligible part of `|ψ(·, t)|²`.
    pub fn support(&self, t: f64) -> (f64, f64) {
        match self {
            Self::CoherentState(m) => {
                let c = m.center(t);
                let w = 12.0 / m.s();
                (c - w, c + w)
            }
            Self::EigenSuperposition(m) => {
                let w = ((2 * m.coefficients().len() + 1) as f64).sqrt() + 9.0;
                (-w / m.s(), w / m.s())
            }
            Self::GridSolution(m) => (m.spec.x_min, m.spec.x_max),
        }
    }

    pub fn psi(&self, x: f64, t: f64) -> Result<Complex64> {
        match self {
            Self::CoherentState(m) => Ok(m.psi(x, t)),
            Self::EigenSuperposition(m) => Ok(m.psi(x, t)),
            Self::GridSolution(m) => m.psi(x, t),
        }
    }

    pub fn density(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.psi(x, t)?.norm_sqr())
    }

    /// All ψ-derived fields at `(x, t)`.
    ///
    /// Points inside the node-exclusion region come back with `valid ==
    /// false`; use [`FieldSample::require_valid`] to turn that into an error.
    pub fn eval_fields(&self, x: f64, t: f64) -> Result<FieldSample> {
        let local = match self {
            Self::CoherentState(m) => m.local(x, t),
            Self::EigenSuperposition(m) => m.local(x, t),
            Self::GridSolution(m) => m.local(x, t)?,
        };
        Ok(local.fields(self.params(), self.node_epsilon()))
    }

    /// Like [`Self::eval_fields`] but errors on node regions.
    pub fn eval_valid(&self, x: f64, t: f64) -> Result<FieldSample> {
        self.eval_fields(x, t)?.require_valid(x, t)
    }
}

#[cfg(test)]
mod tests;
