use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Action scale, particle mass and configuration-space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub hbar: f64,
    pub mass: f64,
    pub dim: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            dim: 1,
        }
    }
}

impl SystemParams {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        let params = Self { hbar, mass, dim: 1 };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("hbar must be > 0, got {}", self.hbar)));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {}", self.mass)));
        }
        if self.dim != 1 {
            return Err(Error::InvalidParameter(format!(
                "only dim = 1 is supported, got {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// External potential `V(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    Harmonic { stiffness: f64 },
    Free,
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Harmonic { stiffness: 1.0 }
    }
}

impl Potential {
    pub fn harmonic(stiffness: f64) -> Result<Self> {
        let v = Potential::Harmonic { stiffness };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Harmonic { stiffness } if !(stiffness > 0.0 && stiffness.is_finite()) => Err(
                Error::InvalidParameter(format!("harmonic stiffness must be > 0, got {stiffness}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Potential::Harmonic { stiffness } => 0.5 * stiffness * x * x,
            Potential::Free => 0.0,
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            Potential::Harmonic { stiffness } => stiffness * x,
            Potential::Free => 0.0,
        }
    }

    /// Angular frequency `√(k/m)` of the harmonic case.
    pub fn omega(&self, params: &SystemParams) -> Option<f64> {
        match *self {
            Potential::Harmonic { stiffness } => Some((stiffness / params.mass).sqrt()),
            Potential::Free => None,
        }
    }
}
