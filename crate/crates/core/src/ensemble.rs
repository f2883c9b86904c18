//! Equilibrium and non-equilibrium phase-space ensembles.
//!
//! Positions are drawn by inverting a tabulated CDF (2¹⁴ intervals, cubic
//! Hermite interpolation with Fritsch–Carlson limiting), momenta from the
//! conditional kernel law at the sampled position. Every particle owns the
//! random substream `(seed, index)`, so results do not depend on the number
//! of worker threads.

use crate::dynamics::{propagate, ForceLaw, IntegratorSpec};
use crate::error::{Error, Result};
use crate::kernels::{sample_conditional_momentum, KernelKind, KernelSpec};
use crate::quadrature::GaussLegendre;
use crate::rng::substream;
use crate::wavefunction::WaveFunctionModel;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Intervals of the inverse-CDF table.
pub const SAMPLER_INTERVALS: usize = 1 << 14;
/// Largest tolerated CDF interpolation error, relative to the total mass.
pub const SAMPLER_TOLERANCE: f64 = 1e-8;
/// Default limit on the fraction of trajectories censored at nodes.
pub const DEFAULT_TRUNCATION_LIMIT: f64 = 1e-3;

/// Particle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub x: f64,
    pub p: f64,
}

impl PhaseSpacePoint {
    pub fn new(x: f64, p: f64) -> Result<Self> {
        if !x.is_finite() || !p.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite phase-space point ({x}, {p})"
            )));
        }
        Ok(Self { x, p })
    }
}

/// How an ensemble came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sampler: String,
    pub seed: u64,
    /// Force law of the last evolution, if any.
    pub law: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// Surviving particles in index order.
    pub points: Vec<PhaseSpacePoint>,
    pub t: f64,
    pub provenance: Provenance,
    /// Particles dropped because they sampled or entered a node region.
    pub truncated_count: usize,
}

/// Sample moments of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.x).collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.p).collect()
    }

    /// Fraction of the original particles that were censored.
    pub fn truncated_fraction(&self) -> f64 {
        self.truncated_count as f64 / (self.points.len() + self.truncated_count) as f64
    }

    pub fn moments(&self) -> Moments {
        let xs = self.positions();
        let ps = self.momenta();
        Moments {
            mean_x: crate::stats::mean(&xs),
            mean_p: crate::stats::mean(&ps),
            var_x: crate::stats::variance(&xs),
            var_p: crate::stats::variance(&ps),
        }
    }

    /// Momentum deviations from `∇S(x, t)` in kernel units: `u/√(μ/2)` for
    /// the Gaussian (standard normal at equilibrium) and `u/μ` for the
    /// Lorentzian (standard Cauchy). The Dirac kernel returns raw `u`.
    pub fn momentum_pulls(&self, model: &WaveFunctionModel, kernel: &KernelSpec) -> Result<Vec<f64>> {
        let unit = match kernel.kind {
            KernelKind::Gaussian => (0.5 * kernel.mu).sqrt(),
            KernelKind::Lorentzian => kernel.mu,
            KernelKind::Dirac => 1.0,
        };
        self.points
            .par_iter()
            .map(|q| Ok((q.p - model.eval_fields(q.x, self.t)?.grad_s) / unit))
            .collect()
    }
}

/// Tabulated density on a uniform grid, linearly interpolated between
/// nodes and zero outside. The sampler normalizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomDensity {
    pub x_min: f64,
    pub x_max: f64,
    pub values: Vec<f64>,
}

impl CustomDensity {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        let d = Self { x_min, x_max, values };
        d.validate()?;
        Ok(d)
    }

    pub fn from_fn<F: Fn(f64) -> f64>(x_min: f64, x_max: f64, nodes: usize, f: F) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidParameter(
                "custom density needs at least two nodes".into(),
            ));
        }
        let h = (x_max - x_min) / (nodes - 1) as f64;
        Self::new(x_min, x_max, (0..nodes).map(|i| f(x_min + i as f64 * h)).collect())
    }

    /// Builds the table from `(x, density)` pairs on a uniform grid.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidParameter(
                "custom density needs at least two nodes".into(),
            ));
        }
        let (x_min, x_max) = (pairs[0].0, pairs[pairs.len() - 1].0);
        let h = (x_max - x_min) / (pairs.len() - 1) as f64;
        for (i, &(x, _)) in pairs.iter().enumerate() {
            if (x - (x_min + i as f64 * h)).abs() > 1e-9 * (1.0 + h) {
                return Err(Error::InvalidParameter(
                    "custom density nodes must be uniformly spaced".into(),
                ));
            }
        }
        Self::new(x_min, x_max, pairs.iter().map(|&(_, v)| v).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 || !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidParameter(
                "custom density needs a finite range and at least two nodes".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "custom density values must be finite and non-negative".into(),
            ));
        }
        if self.values.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter("custom density is identically zero".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.x_min || x > self.x_max {
            return 0.0;
        }
        let h = (self.x_max - self.x_min) / (self.values.len() - 1) as f64;
        let s = (x - self.x_min) / h;
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PositionLaw {
    BornRule,
    Custom(CustomDensity),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentumLaw {
    /// Equilibrium conditional law around `∇S`.
    KernelAtGradS,
    /// Kernel law centred on `∇S + delta`.
    OffsetKernel { delta: f64 },
    /// Same kernel family with width `mu_actual` instead of the dynamics' μ.
    WidthMismatch { mu_actual: f64 },
    /// `N(mean, sigma²)` independent of position.
    Independent { mean: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonEquilibriumSpec {
    pub position_law: PositionLaw,
    pub momentum_law: MomentumLaw,
}

impl NonEquilibriumSpec {
    pub fn equilibrium() -> Self {
        Self {
            position_law: PositionLaw::BornRule,
            momentum_law: MomentumLaw::KernelAtGradS,
        }
    }

    pub fn offset(delta: f64) -> Self {
        Self {
            position_law: PositionLaw::BornRule,
            momentum_law: MomentumLaw::OffsetKernel { delta },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PositionLaw::Custom(d) = &self.position_law {
            d.validate()?;
        }
        match self.momentum_law {
            MomentumLaw::OffsetKernel { delta } if !delta.is_finite() => {
                Err(Error::InvalidParameter(format!("offset must be finite, got {delta}")))
            }
            MomentumLaw::WidthMismatch { mu_actual } if !(mu_actual > 0.0 && mu_actual.is_finite()) => Err(
                Error::InvalidParameter(format!("mu_actual must be positive, got {mu_actual}")),
            ),
            MomentumLaw::Independent { mean, sigma } if !(mean.is_finite() && sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "invalid independent momentum law N({mean}, {sigma}²)"
                )))
            }
            _ => Ok(()),
        }
    }

    fn describe(&self, kernel: &KernelSpec) -> String {
        let pos = match self.position_law {
            PositionLaw::BornRule => "born".to_string(),
            PositionLaw::Custom(_) => "custom".to_string(),
        };
        let mom = match self.momentum_law {
            MomentumLaw::KernelAtGradS => format!("{}:{}", kernel.kind, kernel.mu),
            MomentumLaw::OffsetKernel { delta } => format!("{}:{} offset {delta}", kernel.kind, kernel.mu),
            MomentumLaw::WidthMismatch { mu_actual } => format!("{}:{mu_actual} (width mismatch)", kernel.kind),
            MomentumLaw::Independent { mean, sigma } => format!("normal({mean}, {sigma})"),
        };
        format!("positions {pos}, momenta {mom}")
    }
}

/// Inverse-CDF table of a 1D density.
struct InverseCdf {
    x0: f64,
    h: f64,
    cdf: Vec<f64>,
    dens: Vec<f64>,
}

impl InverseCdf {
    fn build<F: Fn(f64) -> Result<f64> + Sync>(lo: f64, hi: f64, density: F) -> Result<Self> {
        let n = SAMPLER_INTERVALS;
        let h = (hi - lo) / n as f64;
        let rule = GaussLegendre::new(4);
        let node = |i: usize| lo + i as f64 * h;
        let dens: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|i| density(node(i)).map(|d| d.max(0.0)))
            .collect::<Result<_>>()?;
        // mass of both halves of each interval
        let halves: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (a, m, b) = (node(i), node(i) + 0.5 * h, node(i + 1));
                let mut first = 0.0;
                for (x, w) in rule.mapped(a, m) {
                    first += w * density(x)?.max(0.0);
                }
                let mut second = 0.0;
                for (x, w) in rule.mapped(m, b) {
                    second += w * density(x)?.max(0.0);
                }
                Ok((first, second))
            })
            .collect::<Result<_>>()?;
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        for (a, b) in &halves {
            let last = *cdf.last().unwrap();
            cdf.push(last + a + b);
        }
        let total = cdf[n];
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!("position density has mass {total}")));
        }
        let table = Self {
            x0: lo,
            h,
            cdf: cdf.iter().map(|c| c / total).collect(),
            dens: dens.iter().map(|d| d / total).collect(),
        };
        let worst = (0..n)
            .into_par_iter()
            .map(|i| {
                let exact = (cdf[i] + halves[i].0) / total;
                (table.hermite(i, 0.5) - exact).abs()
            })
            .reduce(|| 0.0, f64::max);
        if worst > SAMPLER_TOLERANCE {
            return Err(Error::SamplerGridTooCoarse(format!(
                "CDF interpolation error {worst:.3e} on [{lo}, {hi}] exceeds {SAMPLER_TOLERANCE:.0e}"
            )));
        }
        Ok(table)
    }

    /// Slopes of interval `i` after Fritsch–Carlson limiting.
    fn slopes(&self, i: usize) -> (f64, f64) {
        let secant = (self.cdf[i + 1] - self.cdf[i]) / self.h;
        if secant <= 0.0 {
            return (0.0, 0.0);
        }
        let (a, b) = (self.dens[i] / secant, self.dens[i + 1] / secant);
        let r2 = a * a + b * b;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            (tau * self.dens[i], tau * self.dens[i + 1])
        } else {
            (self.dens[i], self.dens[i + 1])
        }
    }

    /// Interpolated CDF at fraction `s ∈ [0, 1]` of interval `i`.
    fn hermite(&self, i: usize, s: f64) -> f64 {
        let (d0, d1) = self.slopes(i);
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * c0
            + (s3 - 2.0 * s2 + s) * self.h * d0
            + (-2.0 * s3 + 3.0 * s2) * c1
            + (s3 - s2) * self.h * d1
    }

    fn hermite_slope(&self, i: usize, s: f64) -> f64 {
        let (d0, d1) = self.slopes(i);
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let s2 = s * s;
        ((6.0 * s2 - 6.0 * s) * (c0 - c1)) / self.h + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (3.0 * s2 - 2.0 * s) * d1
    }

    fn invert(&self, v: f64) -> f64 {
        // last node with cdf ≤ v, skipping zero-mass intervals
        let i = self.cdf.partition_point(|&c| c <= v).clamp(1, self.cdf.len() - 1) - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        if c1 <= c0 {
            return self.x0 + (i as f64 + 0.5) * self.h;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut s = ((v - c0) / (c1 - c0)).clamp(0.0, 1.0);
        for _ in 0..60 {
            let g = self.hermite(i, s) - v;
            if g > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let slope = self.hermite_slope(i, s) * self.h;
            let mut next = if slope > 0.0 { s - g / slope } else { 0.5 * (lo + hi) };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() < 1e-15 {
                s = next;
                break;
            }
            s = next;
        }
        self.x0 + (i as f64 + s) * self.h
    }
}

fn position_table(model: &WaveFunctionModel, law: &PositionLaw, t: f64) -> Result<InverseCdf> {
    match law {
        PositionLaw::BornRule => {
            let (lo, hi) = model.support(t);
            InverseCdf::build(lo, hi, |x| model.density(x, t))
        }
        PositionLaw::Custom(d) => {
            d.validate()?;
            InverseCdf::build(d.x_min, d.x_max, |x| Ok(d.eval(x)))
        }
    }
}

fn draw_momentum<R: Rng>(
    law: &MomentumLaw,
    kernel: &KernelSpec,
    model: &WaveFunctionModel,
    x: f64,
    t: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    if let MomentumLaw::Independent { mean, sigma } = *law {
        let z: f64 = rng.sample(StandardNormal);
        return Ok(Some(mean + sigma * z));
    }
    let fields = model.eval_fields(x, t)?;
    if !fields.valid {
        return Ok(None);
    }
    let p = match *law {
        MomentumLaw::KernelAtGradS => sample_conditional_momentum(kernel, &fields, rng)?,
        MomentumLaw::OffsetKernel { delta } => sample_conditional_momentum(kernel, &fields, rng)? + delta,
        MomentumLaw::WidthMismatch { mu_actual } => {
            let actual = KernelSpec::new(kernel.kind, mu_actual)?;
            sample_conditional_momentum(&actual, &fields, rng)?
        }
        MomentumLaw::Independent { .. } => unreachable!(),
    };
    Ok(Some(p))
}

/// Draws `n` points from the non-equilibrium law `neq` at time `t`.
///
/// Points whose position falls in a node region (no defined `∇S`) are
/// dropped and counted in `truncated_count`.
pub fn sample_nonequilibrium(
    model: &WaveFunctionModel,
    neq: &NonEquilibriumSpec,
    kernel: &KernelSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
    }
    kernel.validate()?;
    neq.validate()?;
    let table = position_table(model, &neq.position_law, t)?;
    let drawn: Vec<Option<PhaseSpacePoint>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let v: f64 = rng.random();
            let x = table.invert(v);
            Ok(draw_momentum(&neq.momentum_law, kernel, model, x, t, &mut rng)?.map(|p| PhaseSpacePoint { x, p }))
        })
        .collect::<Result<_>>()?;
    let points: Vec<PhaseSpacePoint> = drawn.iter().flatten().copied().collect();
    let truncated_count = n - points.len();
    if points.is_empty() {
        return Err(Error::TooManyTruncated {
            truncated: truncated_count,
            total: n,
            limit: DEFAULT_TRUNCATION_LIMIT,
        });
    }
    Ok(Ensemble {
        points,
        t,
        provenance: Provenance {
            sampler: neq.describe(kernel),
            seed,
            law: None,
        },
        truncated_count,
    })
}

/// Draws `n` points from `f_μ(x, p; t) = |ψ|² K(p − ∇S)`.
pub fn sample_equilibrium(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Ensemble> {
    sample_nonequilibrium(model, &NonEquilibriumSpec::equilibrium(), kernel, t, n, seed)
}

/// [`evolve_ensemble_with_limit`] with the default truncation limit.
pub fn evolve_ensemble(
    ens: &Ensemble,
    model: &WaveFunctionModel,
    law: &ForceLaw,
    t1: f64,
    integ: &IntegratorSpec,
) -> Result<Ensemble> {
    evolve_ensemble_with_limit(ens, model, law, t1, integ, DEFAULT_TRUNCATION_LIMIT)
}

/// Advances every particle to `t1`. Particles that enter a node region or
/// leave the solver domain are dropped and counted; the run fails when the
/// cumulative censored fraction exceeds `limit`.
pub fn evolve_ensemble_with_limit(
    ens: &Ensemble,
    model: &WaveFunctionModel,
    law: &ForceLaw,
    t1: f64,
    integ: &IntegratorSpec,
    limit: f64,
) -> Result<Ensemble> {
    law.validate()?;
    integ.validate()?;
    if t1 < ens.t {
        return Err(Error::InvalidParameter(format!(
            "cannot evolve from t = {} back to {t1}",
            ens.t
        )));
    }
    let moved: Vec<Option<PhaseSpacePoint>> = ens
        .points
        .par_iter()
        .map(|&q| match propagate(model, law, q, ens.t, t1, integ) {
            Ok(q) => Ok(Some(q)),
            Err(Error::NodeRegionEntered { .. } | Error::OutOfDomain { .. } | Error::StepUnderflow { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let points: Vec<PhaseSpacePoint> = moved.iter().flatten().copied().collect();
    let truncated_count = ens.truncated_count + (ens.points.len() - points.len());
    let total = ens.points.len() + ens.truncated_count;
    if truncated_count as f64 > limit * total as f64 || points.is_empty() {
        return Err(Error::TooManyTruncated {
            truncated: truncated_count,
            total,
            limit,
        });
    }
    if truncated_count > ens.truncated_count {
        log::warn!("{} of {total} trajectories censored at nodes", truncated_count);
    }
    Ok(Ensemble {
        points,
        t: t1,
        provenance: Provenance {
            law: Some(law.to_string()),
            ..ens.provenance.clone()
        },
        truncated_count,
    })
}
