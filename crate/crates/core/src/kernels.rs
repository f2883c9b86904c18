//! The smeared phase-space equilibria `f_μ(x, p) = ρ(x) K(p − ∇S)`.
//!
//! * Gaussian: `K(u) = (πμ)^{-1/2} exp(−u²/μ)`, momentum variance `μ/2`.
//! * Lorentzian: `K(u) = μ / (π(u² + μ²))`, no finite second moment.
//! * Dirac: `K = δ(u)`, handled symbolically (no pointwise density).
//!
//! The Gaussian prefactor makes `∫ f_μ dp = ρ` exactly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_graded, GaussLegendre};
use crate::wavefunction::{FieldSample, WaveFunctionModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
    Lorentzian,
    Dirac,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Lorentzian => "lorentzian",
            KernelKind::Dirac => "dirac",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(KernelKind::Gaussian),
            "lorentzian" => Ok(KernelKind::Lorentzian),
            "dirac" => Ok(KernelKind::Dirac),
            other => Err(Error::InvalidParameter(format!("unknown kernel {other:?}"))),
        }
    }
}

/// Momentum-spread kernel of the equilibrium family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Width: momentum² units for the Gaussian, momentum units for the
    /// Lorentzian, ignored for Dirac.
    pub mu: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, mu: f64) -> Result<Self> {
        let spec = Self { kind, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(mu: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, mu)
    }

    pub fn lorentzian(mu: f64) -> Result<Self> {
        Self::new(KernelKind::Lorentzian, mu)
    }

    pub fn dirac() -> Self {
        Self {
            kind: KernelKind::Dirac,
            mu: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Dirac => Ok(()),
            _ if self.mu > 0.0 && self.mu.is_finite() => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "{} kernel needs mu > 0, got {}",
                self.kind, self.mu
            ))),
        }
    }

    pub fn is_dirac(&self) -> bool {
        self.kind == KernelKind::Dirac
    }

    /// Characteristic momentum width, used to lay out quadrature panels.
    pub fn scale(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => self.mu.sqrt(),
            KernelKind::Lorentzian => self.mu,
            KernelKind::Dirac => 0.0,
        }
    }

    /// Normalized kernel `K(u)` at momentum deviation `u = p − ∇S`.
    pub fn profile(&self, u: f64) -> Result<f64> {
        match self.kind {
            KernelKind::Gaussian => Ok((-u * u / self.mu).exp() / (PI * self.mu).sqrt()),
            KernelKind::Lorentzian => Ok(self.mu / (PI * (u * u + self.mu * self.mu))),
            KernelKind::Dirac => Err(Error::DiracDensityRequest),
        }
    }

    /// `K′(u)`
    pub fn profile_derivative(&self, u: f64) -> Result<f64> {
        match self.kind {
            KernelKind::Gaussian => Ok(-2.0 * u / self.mu * self.profile(u)?),
            KernelKind::Lorentzian => {
                let d = u * u + self.mu * self.mu;
                Ok(-2.0 * self.mu * u / (PI * d * d))
            }
            KernelKind::Dirac => Err(Error::DiracDensityRequest),
        }
    }

    /// `∫_{−∞}^{u} K`
    pub fn cdf(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 0.5 * erfc(-u / self.mu.sqrt()),
            KernelKind::Lorentzian => 0.5 + (u / self.mu).atan() / PI,
            KernelKind::Dirac => {
                if u >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Kernel mass outside `|u| ≤ half_width`.
    pub fn tail_mass(&self, half_width: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => erfc(half_width / self.mu.sqrt()),
            KernelKind::Lorentzian => 1.0 - 2.0 * (half_width / self.mu).atan() / PI,
            KernelKind::Dirac => 0.0,
        }
    }

    /// Momentum variance, when finite.
    pub fn variance(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Gaussian => Some(0.5 * self.mu),
            KernelKind::Lorentzian => None,
            KernelKind::Dirac => Some(0.0),
        }
    }
}

/// Normalized phase-space density `f_μ(x, p)` from the local fields at x.
pub fn equilibrium_density(spec: &KernelSpec, fields: &FieldSample, p: f64) -> Result<f64> {
    if spec.is_dirac() {
        return Err(Error::DiracDensityRequest);
    }
    if !fields.valid {
        return Err(Error::InvalidField);
    }
    Ok(fields.rho * spec.profile(p - fields.grad_s)?)
}

/// Draws `p` from the conditional law `f_μ(p | x)`.
pub fn sample_conditional_momentum<R: Rng + ?Sized>(
    spec: &KernelSpec,
    fields: &FieldSample,
    rng: &mut R,
) -> Result<f64> {
    if !fields.valid {
        return Err(Error::InvalidField);
    }
    let u = match spec.kind {
        KernelKind::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            z * (0.5 * spec.mu).sqrt()
        }
        KernelKind::Lorentzian => {
            let v: f64 = rng.sample(Open01);
            spec.mu * (PI * (v - 0.5)).tan()
        }
        KernelKind::Dirac => 0.0,
    };
    Ok(fields.grad_s + u)
}

/// Positions and momentum range for [`check_marginals`].
#[derive(Debug, Clone)]
pub struct MarginalQuadrature {
    pub positions: Vec<f64>,
    /// Symmetric half-range around `∇S`; `None` picks 40 kernel scales.
    pub half_range: Option<f64>,
    /// Allowed change when the range is doubled.
    pub tolerance: f64,
}

impl MarginalQuadrature {
    /// `count` evenly spaced positions across the bulk of `|ψ(·, t)|²`.
    pub fn spread(model: &WaveFunctionModel, t: f64, count: usize) -> Self {
        let (lo, hi) = model.support(t);
        let mid = 0.5 * (lo + hi);
        let half = (hi - lo) / 6.0;
        let positions = (0..count)
            .map(|i| mid - half + 2.0 * half * (i as f64 + 0.5) / count as f64)
            .collect();
        Self {
            positions,
            half_range: None,
            tolerance: 1e-9,
        }
    }

    pub fn with_half_range(mut self, half_range: f64) -> Self {
        self.half_range = Some(half_range);
        self
    }
}

/// Worst-case deviations of the density and current marginals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarginalReport {
    pub density_error: f64,
    pub current_error: f64,
}

/// Checks `∫ f_μ dp = ρ` and `∫ (p/m) f_μ dp = ρ∇S/m` by quadrature.
///
/// The p-range is symmetric about `∇S`, so the Lorentzian current is the
/// symmetric principal value; the kernel's analytic tail mass beyond the
/// range is added back. Without it the Lorentzian marginals converge only
/// like `1/L`.
pub fn check_marginals(
    spec: &KernelSpec,
    model: &WaveFunctionModel,
    t: f64,
    quadrature: &MarginalQuadrature,
) -> Result<MarginalReport> {
    if spec.is_dirac() {
        return Ok(MarginalReport::default());
    }
    let rule = GaussLegendre::new(20);
    let mass = model.params().mass;
    let half = quadrature.half_range.unwrap_or(40.0 * spec.scale());
    let mut report = MarginalReport::default();
    for &x in &quadrature.positions {
        let fields = model.eval_valid(x, t)?;
        let moments = |l: f64| -> Result<(f64, f64)> {
            let mut err = None;
            let mut f = |u: f64| {
                equilibrium_density(spec, &fields, fields.grad_s + u).unwrap_or_else(|e| {
                    err = Some(e);
                    0.0
                })
            };
            let density =
                integrate_graded(&rule, l, spec.scale(), &mut f) - integrate_graded(&rule, -l, spec.scale(), &mut f);
            let mut g = |u: f64| {
                let p = fields.grad_s + u;
                p / mass * equilibrium_density(spec, &fields, p).unwrap_or(0.0)
            };
            let current =
                integrate_graded(&rule, l, spec.scale(), &mut g) - integrate_graded(&rule, -l, spec.scale(), &mut g);
            if let Some(e) = err {
                return Err(e);
            }
            let tail = fields.rho * spec.tail_mass(l);
            Ok((density + tail, current + tail * fields.grad_s / mass))
        };
        let (density, current) = moments(half)?;
        let (density2, current2) = moments(2.0 * half)?;
        let change = (density2 - density).abs().max((current2 - current).abs());
        if change > quadrature.tolerance {
            return Err(Error::QuadratureNotConverged(format!(
                "doubling the momentum range to {} changed the marginals by {change:e} at x = {x}",
                2.0 * half
            )));
        }
        report.density_error = report.density_error.max((density - fields.rho).abs());
        report.current_error = report
            .current_error
            .max((current - fields.rho * fields.grad_s / mass).abs());
    }
    Ok(report)
}
