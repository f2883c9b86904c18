//! Force and velocity laws, trajectory integration and the phase-space
//! consistency checks that pin the modified force down.
//!
//! With `u = p − ∇S`, the Gaussian equilibrium `ρ K(u)` is carried along by
//!
//! ```text
//! F = −∇V − ∇Q + (μ/m) ∇R/R + (1/m) ∇∇S · u
//! ```
//!
//! which is the unique choice that makes the Liouville residual vanish and
//! that reproduces the bounded `sin/cos(√μ t)` coherent-state trajectories.
//! The variant with the opposite signs on the last two terms is kept as
//! [`ForceVariant::OppositeSigns`] so the inconsistency can be demonstrated.

mod integral;
mod integrate;
mod liouville;

pub use integral::{integral_force, lorentzian_force};
pub use integrate::{integrate_trajectory, propagate, IntegratorSpec, Method, Trajectory};
pub use liouville::{liouville_residual, relative_liouville_residual};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec};
use crate::params::{Potential, SystemParams};
use crate::wavefunction::{FieldSample, WaveFunctionModel};

/// Sign convention of the Gaussian modified force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceVariant {
    /// `+(μ/m)∇R/R + (1/m)∇∇S(p − ∇S)`
    #[default]
    Standard,
    /// `−(μ/m)∇R/R + (1/m)∇∇S(∇S − p)`; fails the Liouville check.
    OppositeSigns,
    /// `Standard` with the sign of the Hessian term flipped. Only used to show that the
    /// verification suite catches a single flipped sign.
    FlippedHessian,
}

/// Law of motion for a particle at `(x, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ForceLaw {
    /// Second order, `ṗ = −∇V + F_Q(x, p)`.
    Modified {
        kernel: KernelSpec,
        #[serde(default)]
        variant: ForceVariant,
    },
    /// Second order, `ṗ = −∇(V + Q)`.
    Bohm,
    /// Second order, `ṗ = −∇V`.
    Classical,
    /// First order, `ẋ = ∇S/m`.
    DeBroglie,
}

impl fmt::Display for ForceLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForceLaw::Modified { kernel, variant } => {
                write!(f, "modified({}, mu={}", kernel.kind, kernel.mu)?;
                if *variant != ForceVariant::Standard {
                    write!(f, ", {variant:?}")?;
                }
                f.write_str(")")
            }
            ForceLaw::Bohm => f.write_str("bohm"),
            ForceLaw::Classical => f.write_str("classical"),
            ForceLaw::DeBroglie => f.write_str("debroglie"),
        }
    }
}

impl ForceLaw {
    pub fn modified(kernel: KernelSpec) -> Self {
        ForceLaw::Modified {
            kernel,
            variant: ForceVariant::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ForceLaw::Modified { kernel, variant } = self {
            kernel.validate()?;
            match kernel.kind {
                KernelKind::Dirac => return Err(Error::DiracKernel),
                KernelKind::Lorentzian if *variant != ForceVariant::Standard => {
                    return Err(Error::InvalidParameter(
                        "sign variants only exist for the Gaussian force".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn is_first_order(&self) -> bool {
        matches!(self, ForceLaw::DeBroglie)
    }

    /// Whether evaluating the law needs ψ-derived fields.
    pub fn needs_fields(&self) -> bool {
        !matches!(self, ForceLaw::Classical)
    }

    /// Total force at `(x, p, t)`; for the first-order law this is the
    /// Bohm force, which is what `p = ∇S` feels along the flow.
    pub fn force(&self, model: &WaveFunctionModel, x: f64, p: f64, t: f64) -> Result<f64> {
        let potential = model.potential();
        match *self {
            ForceLaw::Classical => Ok(-potential.gradient(x)),
            ForceLaw::Bohm | ForceLaw::DeBroglie => Ok(bohm_force(&model.eval_valid(x, t)?, x, potential)),
            ForceLaw::Modified { kernel, variant } => match kernel.kind {
                KernelKind::Gaussian => {
                    let fields = model.eval_valid(x, t)?;
                    gaussian_force(&kernel, &fields, x, p, model.params(), potential, variant)
                }
                KernelKind::Lorentzian => integral_force(&kernel, model, x, p, t),
                KernelKind::Dirac => Err(Error::DiracKernel),
            },
        }
    }
}

/// Modified force for the Gaussian kernel, standard form.
pub fn modified_force(
    kernel: &KernelSpec,
    fields: &FieldSample,
    x: f64,
    p: f64,
    params: &SystemParams,
    potential: &Potential,
) -> Result<f64> {
    gaussian_force(kernel, fields, x, p, params, potential, ForceVariant::Standard)
}

fn gaussian_force(
    kernel: &KernelSpec,
    fields: &FieldSample,
    x: f64,
    p: f64,
    params: &SystemParams,
    potential: &Potential,
    variant: ForceVariant,
) -> Result<f64> {
    match kernel.kind {
        KernelKind::Gaussian => {}
        KernelKind::Dirac => return Err(Error::DiracKernel),
        KernelKind::Lorentzian => {
            return Err(Error::InvalidParameter(
                "the Lorentzian force has no closed local form; use integral_force".into(),
            ))
        }
    }
    if !fields.valid {
        return Err(Error::InvalidField);
    }
    let m = params.mass;
    let u = p - fields.grad_s;
    let spread = kernel.mu / m * fields.grad_log_r;
    let shear = fields.hess_s / m * u;
    let (spread, shear) = match variant {
        ForceVariant::Standard => (spread, shear),
        ForceVariant::OppositeSigns => (-spread, -shear),
        ForceVariant::FlippedHessian => (spread, -shear),
    };
    Ok(-potential.gradient(x) - fields.grad_q + spread + shear)
}

/// `−∇V − ∇Q`, independent of momentum.
pub fn bohm_force(fields: &FieldSample, x: f64, potential: &Potential) -> f64 {
    -potential.gradient(x) - fields.grad_q
}

/// Guiding velocity `∇S/m`.
pub fn debroglie_velocity(fields: &FieldSample, params: &SystemParams) -> f64 {
    fields.grad_s / params.mass
}

/// Divergence `∂ẋ/∂x + ∂ṗ/∂p` of the phase-space flow at `(x, p, t)`.
///
/// For the first-order law this is the configuration-space divergence
/// `∂(∇S/m)/∂x`. The Lorentzian force is differentiated numerically.
pub fn flow_divergence(law: &ForceLaw, model: &WaveFunctionModel, x: f64, p: f64, t: f64) -> Result<f64> {
    let m = model.params().mass;
    match *law {
        ForceLaw::Bohm | ForceLaw::Classical => Ok(0.0),
        ForceLaw::DeBroglie => Ok(model.eval_valid(x, t)?.hess_s / m),
        ForceLaw::Modified { kernel, variant } => match kernel.kind {
            KernelKind::Gaussian => {
                let hess = model.eval_valid(x, t)?.hess_s / m;
                Ok(match variant {
                    ForceVariant::Standard => hess,
                    ForceVariant::OppositeSigns | ForceVariant::FlippedHessian => -hess,
                })
            }
            KernelKind::Lorentzian => {
                let h = 1e-4 * kernel.scale();
                let up = law.force(model, x, p + h, t)?;
                let down = law.force(model, x, p - h, t)?;
                Ok((up - down) / (2.0 * h))
            }
            KernelKind::Dirac => Err(Error::DiracKernel),
        },
    }
}

/// Closed-form coherent-state trajectory under the modified Gaussian law
/// (`ħ = m = k = 1`); `mu = 0` gives the Bohm limit
/// `X₀ + Ẋ₀t + α(cos t − 1)`.
pub fn coherent_closed_form(x0: f64, v0: f64, alpha: f64, mu: f64, t: f64) -> f64 {
    assert!(mu >= 0.0, "mu must be non-negative");
    if mu == 0.0 {
        return x0 + v0 * t + alpha * (t.cos() - 1.0);
    }
    let w = mu.sqrt();
    v0 * (w * t).sin() / w + (w * t).cos() * (x0 - alpha) + alpha * t.cos()
}
