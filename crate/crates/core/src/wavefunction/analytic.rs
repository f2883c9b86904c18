use std::f64::consts::PI;

use num_complex::Complex64;

use super::{LocalPsi, DEFAULT_NODE_RELATIVE};
use crate::error::{Error, Result};
use crate::params::{Potential, SystemParams};
use crate::quadrature::GaussLegendre;

fn oscillator_frequency(params: &SystemParams, potential: &Potential) -> Result<f64> {
    params.validate()?;
    potential.validate()?;
    potential
        .omega(params)
        .ok_or_else(|| Error::InvalidParameter("oscillator eigenstates require a harmonic potential".into()))
}

/// Displaced ground state of the harmonic oscillator. Its centre follows
/// `α cos ωt` and its width never changes.
#[derive(Debug, Clone)]
pub struct CoherentState {
    pub alpha: f64,
    pub params: SystemParams,
    pub potential: Potential,
    pub node_epsilon: f64,
    omega: f64,
    s2: f64,
    norm: f64,
}

impl CoherentState {
    pub fn new(alpha: f64, params: SystemParams, potential: Potential) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
        }
        let omega = oscillator_frequency(&params, &potential)?;
        let s2 = params.mass * omega / params.hbar;
        // normalization by quadrature of the unnormalized envelope
        let half = 14.0 / s2.sqrt();
        let mass = GaussLegendre::new(24).integrate_composite(-half, half, 28, |y| (-s2 * y * y).exp());
        let norm = mass.sqrt().recip();
        Ok(Self {
            alpha,
            params,
            potential,
            node_epsilon: DEFAULT_NODE_RELATIVE * norm * norm,
            omega,
            s2,
            norm,
        })
    }

    /// Inverse length scale `√(mω/ħ)`.
    pub fn s(&self) -> f64 {
        self.s2.sqrt()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Normalization constant of the envelope.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    pub fn center(&self, t: f64) -> f64 {
        self.alpha * (self.omega * t).cos()
    }

    pub fn center_momentum(&self, t: f64) -> f64 {
        -self.params.mass * self.omega * self.alpha * (self.omega * t).sin()
    }

    /// Spread of `|ψ|²` (standard deviation in x).
    pub fn width(&self) -> f64 {
        (0.5 / self.s2).sqrt()
    }

    fn log_psi(&self, x: f64, t: f64) -> Complex64 {
        let c = self.center(t);
        let pc = self.center_momentum(t);
        let phase = (pc * (x - 0.5 * c)) / self.params.hbar - 0.5 * self.omega * t;
        Complex64::new(-0.5 * self.s2 * (x - c) * (x - c), phase)
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        self.norm * self.log_psi(x, t).exp()
    }

    pub(crate) fn local(&self, x: f64, t: f64) -> LocalPsi {
        let g1 = Complex64::new(
            -self.s2 * (x - self.center(t)),
            self.center_momentum(t) / self.params.hbar,
        );
        let g2 = -self.s2;
        LocalPsi {
            rho: self.norm * self.norm * (2.0 * self.log_psi(x, t).re).exp(),
            d1: g1,
            d2: g1 * g1 + g2,
            d3: g1 * g1 * g1 + 3.0 * g2 * g1,
        }
    }
}

/// Finite superposition of harmonic-oscillator eigenstates,
/// `ψ = Σ cₙ φₙ(x) e^{−iEₙt/ħ}`.
#[derive(Debug, Clone)]
pub struct EigenSuperposition {
    pub params: SystemParams,
    pub potential: Potential,
    pub node_epsilon: f64,
    coefficients: Vec<Complex64>,
    omega: f64,
    s: f64,
}

impl EigenSuperposition {
    /// `coefficients[n]` multiplies the n-th eigenstate; the vector must have
    /// unit norm.
    pub fn new(coefficients: Vec<Complex64>, params: SystemParams, potential: Potential) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidParameter("superposition needs at least one mode".into()));
        }
        let norm: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "superposition coefficients must have unit norm, got {norm}"
            )));
        }
        let omega = oscillator_frequency(&params, &potential)?;
        let s = (params.mass * omega / params.hbar).sqrt();
        let mut model = Self {
            params,
            potential,
            node_epsilon: 0.0,
            coefficients,
            omega,
            s,
        };
        let reach = ((2 * model.coefficients.len() + 1) as f64).sqrt() + 3.0;
        let peak = (0..=4000)
            .map(|i| {
                let x = (-reach + 2.0 * reach * i as f64 / 4000.0) / s;
                model.psi(x, 0.0).norm_sqr()
            })
            .fold(0.0, f64::max);
        model.node_epsilon = DEFAULT_NODE_RELATIVE * peak;
        Ok(model)
    }

    /// Rescales `coefficients` to unit norm first.
    pub fn normalized(coefficients: Vec<Complex64>, params: SystemParams, potential: Potential) -> Result<Self> {
        let norm: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("all coefficients are zero".into()));
        }
        Self::new(coefficients.into_iter().map(|c| c / norm).collect(), params, potential)
    }

    /// `1/√modes` on each of the lowest `modes` eigenstates.
    pub fn equal_weights(modes: usize, params: SystemParams, potential: Potential) -> Result<Self> {
        Self::normalized(vec![Complex64::new(1.0, 0.0); modes], params, potential)
    }

    /// Poisson-weighted expansion of the coherent state with displacement
    /// `alpha`, truncated at `modes` terms.
    pub fn coherent_expansion(alpha: f64, modes: usize, params: SystemParams, potential: Potential) -> Result<Self> {
        let omega = oscillator_frequency(&params, &potential)?;
        let beta = alpha * (params.mass * omega / params.hbar).sqrt() / 2f64.sqrt();
        let mut c = Vec::with_capacity(modes);
        let mut term = (-0.5 * beta * beta).exp();
        for n in 0..modes {
            if n > 0 {
                term *= beta / (n as f64).sqrt();
            }
            c.push(Complex64::new(term, 0.0));
        }
        Self::normalized(c, params, potential)
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// ψ and its first three x-derivatives, all divided by `e^{−ξ²/2}`.
    fn scaled_derivatives(&self, x: f64, t: f64) -> [Complex64; 4] {
        let s = self.s;
        let xi = s * x;
        let mut out = [Complex64::new(0.0, 0.0); 4];
        // hₙ = φₙ e^{ξ²/2}, normalized in x
        let mut h_prev = 0.0;
        let mut h = PI.powf(-0.25) * s.sqrt();
        for (n, &c) in self.coefficients.iter().enumerate() {
            let nf = n as f64;
            if n > 0 {
                let next = (2.0 / nf).sqrt() * xi * h - ((nf - 1.0) / nf).sqrt() * h_prev;
                h_prev = h;
                h = next;
            }
            let dh = s * ((2.0 * nf).sqrt() * h_prev - xi * h);
            let poly = xi * xi - 2.0 * nf - 1.0;
            let d2h = s * s * poly * h;
            let d3h = s * s * (2.0 * xi * s * h + poly * dh);
            let phase = -(nf + 0.5) * self.omega * t;
            let amp = c * Complex64::from_polar(1.0, phase);
            out[0] += amp * h;
            out[1] += amp * dh;
            out[2] += amp * d2h;
            out[3] += amp * d3h;
        }
        out
    }

    pub fn psi(&self, x: f64, t: f64) -> Complex64 {
        let xi = self.s * x;
        self.scaled_derivatives(x, t)[0] * (-0.5 * xi * xi).exp()
    }

    pub(crate) fn local(&self, x: f64, t: f64) -> LocalPsi {
        let xi = self.s * x;
        LocalPsi::from_derivatives(self.scaled_derivatives(x, t), (-xi * xi).exp())
    }
}
