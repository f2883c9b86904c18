//! Split-step Fourier solution of the 1D Schrödinger equation.
//!
//! Each step applies `e^{−iVΔt/2ħ} · F⁻¹ e^{−iħk²Δt/2m} F · e^{−iVΔt/2ħ}`
//! (Strang splitting, second order in Δt). Snapshots of ψ and its first three
//! spectral derivatives are stored every `snapshot_stride` steps; field
//! evaluation interpolates them with 8-point Lagrange stencils in x and cubic
//! Lagrange in t.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{LocalPsi, WaveFunctionModel, DEFAULT_NODE_RELATIVE};
use crate::error::{Error, Result};
use crate::params::{Potential, SystemParams};

const X_STENCIL: usize = 8;
const EDGE_FRACTION: f64 = 0.05;
const EDGE_RELATIVE_DENSITY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    /// Still periodic numerically; the domain is assumed wide enough that ψ
    /// never reaches the edges.
    AbsorbingFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub dt: f64,
    pub boundary: Boundary,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize, dt: f64) -> Result<Self> {
        let spec = Self {
            x_min,
            x_max,
            n_points,
            dt,
            boundary: Boundary::AbsorbingFree,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) {
            return Err(Error::InvalidParameter("grid requires x_max > x_min".into()));
        }
        if !self.n_points.is_power_of_two() || self.n_points < X_STENCIL {
            return Err(Error::InvalidParameter(format!(
                "grid size must be a power of two >= {X_STENCIL}, got {}",
                self.n_points
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("grid time step must be > 0".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }
}

/// ψ on a uniform periodic grid, with a time series of stored snapshots.
#[derive(Clone)]
pub struct GridSolution {
    pub spec: GridSpec,
    pub params: SystemParams,
    pub potential: Potential,
    pub node_epsilon: f64,
    /// Maximum allowed change of the grid norm in a single step.
    pub norm_tolerance: f64,
    psi: Vec<Complex64>,
    t: f64,
    t_start: f64,
    snapshot_stride: usize,
    snapshots: Vec<Vec<[Complex64; 4]>>,
    edge_warning: bool,
    kinetic: Vec<Complex64>,
    potential_half: Vec<Complex64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for GridSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSolution")
            .field("spec", &self.spec)
            .field("params", &self.params)
            .field("potential", &self.potential)
            .field("t", &self.t)
            .field("t_start", &self.t_start)
            .field("snapshots", &self.snapshots.len())
            .finish()
    }
}

impl GridSolution {
    /// Seeds the grid with `psi0(x)` at time `t0` and renormalizes it so
    /// that `Σ|ψ|²Δx = 1`.
    pub fn from_fn<F: Fn(f64) -> Complex64>(
        spec: GridSpec,
        params: SystemParams,
        potential: Potential,
        t0: f64,
        psi0: F,
    ) -> Result<Self> {
        spec.validate()?;
        let values = (0..spec.n_points).map(|i| psi0(spec.x(i))).collect();
        Self::from_values(spec, params, potential, t0, values)
    }

    /// Seeds the grid from another model evaluated at `t0`.
    pub fn from_model(model: &WaveFunctionModel, spec: GridSpec, t0: f64) -> Result<Self> {
        spec.validate()?;
        let values = (0..spec.n_points)
            .map(|i| model.psi(spec.x(i), t0))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(spec, *model.params(), *model.potential(), t0, values)
    }

    pub fn from_values(
        spec: GridSpec,
        params: SystemParams,
        potential: Potential,
        t0: f64,
        mut values: Vec<Complex64>,
    ) -> Result<Self> {
        spec.validate()?;
        params.validate()?;
        potential.validate()?;
        if values.len() != spec.n_points {
            return Err(Error::InvalidParameter(format!(
                "expected {} grid values, got {}",
                spec.n_points,
                values.len()
            )));
        }
        let dx = spec.dx();
        let norm: f64 = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter("initial wave function has zero norm".into()));
        }
        let scale = norm.sqrt().recip();
        values.iter_mut().for_each(|v| *v *= scale);

        let n = spec.n_points;
        let length = spec.x_max - spec.x_min;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * m / length
            })
            .collect();
        let hbar = params.hbar;
        let kinetic = wavenumbers
            .iter()
            .map(|k| Complex64::from_polar(1.0, -hbar * k * k * spec.dt / (2.0 * params.mass)))
            .collect();
        let potential_half = (0..n)
            .map(|i| Complex64::from_polar(1.0, -potential.value(spec.x(i)) * spec.dt / (2.0 * hbar)))
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let peak = values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);

        let mut solution = Self {
            spec,
            params,
            potential,
            node_epsilon: DEFAULT_NODE_RELATIVE * peak,
            norm_tolerance: 1e-10,
            psi: values,
            t: t0,
            t_start: t0,
            snapshot_stride: 10,
            snapshots: Vec::new(),
            edge_warning: false,
            kinetic,
            potential_half,
            wavenumbers,
            forward,
            inverse,
        };
        solution.push_snapshot();
        Ok(solution)
    }

    /// Number of solver steps between stored snapshots. Resets the stored
    /// history to the current state.
    pub fn with_snapshot_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride.max(1);
        self.t_start = self.t;
        self.snapshots.clear();
        self.push_snapshot();
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Stored time range `[first snapshot, last snapshot]`.
    pub fn time_range(&self) -> (f64, f64) {
        (self.t_start, self.snapshot_time(self.snapshots.len() - 1))
    }

    pub fn values(&self) -> &[Complex64] {
        &self.psi
    }

    /// Whether ψ ever carried non-negligible density near the grid edges.
    pub fn edge_warning(&self) -> bool {
        self.edge_warning
    }

    /// `Σ|ψ|²Δx`
    pub fn norm(&self) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.spec.dx()
    }

    fn snapshot_dt(&self) -> f64 {
        self.spec.dt * self.snapshot_stride as f64
    }

    fn snapshot_time(&self, j: usize) -> f64 {
        self.t_start + j as f64 * self.snapshot_dt()
    }

    /// One Strang step; returns the norm change.
    pub fn step(&mut self) -> Result<f64> {
        let before = self.norm();
        let n = self.spec.n_points as f64;
        for (v, ph) in self.psi.iter_mut().zip(&self.potential_half) {
            *v *= ph;
        }
        self.forward.process(&mut self.psi);
        for (v, ph) in self.psi.iter_mut().zip(&self.kinetic) {
            *v *= ph / n;
        }
        self.inverse.process(&mut self.psi);
        for (v, ph) in self.psi.iter_mut().zip(&self.potential_half) {
            *v *= ph;
        }
        self.t += self.spec.dt;
        let drift = (self.norm() - before).abs();
        if drift > self.norm_tolerance {
            return Err(Error::UnstableStep {
                drift,
                tolerance: self.norm_tolerance,
            });
        }
        Ok(drift)
    }

    /// Advances from the current time to at least `t_to`, storing snapshots.
    /// The final time is rounded up to the next snapshot boundary so that the
    /// stored range always covers `t_to`.
    pub fn evolve_grid(&mut self, t_to: f64) -> Result<()> {
        if !(t_to > self.t) {
            return Err(Error::InvalidParameter(format!(
                "evolve_grid needs t_to > current time {} (got {t_to})",
                self.t
            )));
        }
        let steps = ((t_to - self.t) / self.spec.dt - 1e-9).ceil() as usize;
        let stride = self.snapshot_stride;
        let steps = steps.div_ceil(stride) * stride;
        let start_step = ((self.t - self.t_start) / self.spec.dt).round() as usize;
        for k in 1..=steps {
            self.step()?;
            if (start_step + k).is_multiple_of(stride) {
                self.push_snapshot();
            }
        }
        // re-anchor to avoid accumulating round-off in t
        self.t = self.snapshot_time(self.snapshots.len() - 1);
        Ok(())
    }

    /// Evolved copy, leaving `self` untouched.
    pub fn evolved(&self, t_to: f64) -> Result<Self> {
        let mut next = self.clone();
        next.evolve_grid(t_to)?;
        Ok(next)
    }

    fn push_snapshot(&mut self) {
        let n = self.spec.n_points;
        let mut spectrum = self.psi.clone();
        self.forward.process(&mut spectrum);
        let mut snap: Vec<[Complex64; 4]> = self.psi.iter().map(|&v| [v, v, v, v]).collect();
        let i = Complex64::new(0.0, 1.0);
        for order in 1..4 {
            let mut d: Vec<Complex64> = spectrum
                .iter()
                .zip(&self.wavenumbers)
                .enumerate()
                .map(|(j, (&c, &k))| {
                    if j == n / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        c * (i * k).powu(order as u32) / n as f64
                    }
                })
                .collect();
            self.inverse.process(&mut d);
            for (s, v) in snap.iter_mut().zip(d) {
                s[order] = v;
            }
        }
        self.snapshots.push(snap);

        let edge = ((n as f64 * EDGE_FRACTION) as usize).max(1);
        let peak = self.psi.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let edge_peak = self.psi[..edge]
            .iter()
            .chain(&self.psi[n - edge..])
            .map(|v| v.norm_sqr())
            .fold(0.0, f64::max);
        if edge_peak > EDGE_RELATIVE_DENSITY * peak && !self.edge_warning {
            log::warn!(
                "grid density near the domain edge reached {:.3e} of its peak at t = {}",
                edge_peak / peak,
                self.t
            );
            self.edge_warning = true;
        }
    }

    /// Interpolated ψ⁽ᵏ⁾, `k = 0..=3`.
    fn interpolate(&self, x: f64, t: f64) -> Result<[Complex64; 4]> {
        let spec = &self.spec;
        if !(x >= spec.x_min && x <= spec.x_max) {
            return Err(Error::OutOfDomain {
                x,
                min: spec.x_min,
                max: spec.x_max,
            });
        }
        let (start, end) = self.time_range();
        let slack = 1e-9 * self.snapshot_dt();
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfTimeRange { t, start, end });
        }

        // time stencil
        let count = self.snapshots.len();
        let tau = ((t - start) / self.snapshot_dt()).clamp(0.0, (count - 1) as f64);
        let width = count.min(4);
        let j0 = (tau.floor() as isize - 1).clamp(0, (count - width) as isize) as usize;
        let mut tw = [0.0; 4];
        lagrange_weights(tau - j0 as f64, &mut tw[..width]);

        // space stencil, periodic wrap
        let n = spec.n_points;
        let xi = (x - spec.x_min) / spec.dx();
        let base = xi.floor() as isize - (X_STENCIL as isize / 2 - 1);
        let mut xw = [0.0; X_STENCIL];
        lagrange_weights(xi - base as f64, &mut xw);

        let mut out = [Complex64::new(0.0, 0.0); 4];
        for (jt, &wt) in tw[..width].iter().enumerate() {
            let snap = &self.snapshots[j0 + jt];
            for (jx, &wx) in xw.iter().enumerate() {
                let idx = (base + jx as isize).rem_euclid(n as isize) as usize;
                let w = wt * wx;
                let v = &snap[idx];
                for k in 0..4 {
                    out[k] += v[k] * w;
                }
            }
        }
        Ok(out)
    }

    pub fn psi(&self, x: f64, t: f64) -> Result<Complex64> {
        Ok(self.interpolate(x, t)?[0])
    }

    pub(crate) fn local(&self, x: f64, t: f64) -> Result<LocalPsi> {
        Ok(LocalPsi::from_derivatives(self.interpolate(x, t)?, 1.0))
    }

    /// Writes the current ψ as CSV (`x, re_psi, im_psi`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# bohmstab-csv v1")?;
        writeln!(out, "x,re_psi,im_psi")?;
        for (i, v) in self.psi.iter().enumerate() {
            writeln!(out, "{},{},{}", self.spec.x(i), v.re, v.im)?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_csv`]. The grid spacing is
    /// taken from the first two rows; `dt` comes from the caller.
    pub fn read_csv<R: BufRead>(
        input: R,
        dt: f64,
        params: SystemParams,
        potential: Potential,
        t0: f64,
    ) -> Result<Self> {
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Io(format!("bad grid CSV row {line:?}: {e}")))?;
            if cols.len() != 3 {
                return Err(Error::Io(format!("grid CSV rows need 3 columns: {line:?}")));
            }
            xs.push(cols[0]);
            values.push(Complex64::new(cols[1], cols[2]));
        }
        if xs.len() < 2 {
            return Err(Error::Io("grid CSV has fewer than two rows".into()));
        }
        let dx = xs[1] - xs[0];
        let spec = GridSpec {
            x_min: xs[0],
            x_max: xs[0] + dx * xs.len() as f64,
            n_points: xs.len(),
            dt,
            boundary: Boundary::AbsorbingFree,
        };
        Self::from_values(spec, params, potential, t0, values)
    }
}

/// Lagrange basis weights on nodes `0, 1, …, len−1` at position `s`.
fn lagrange_weights(s: f64, w: &mut [f64]) {
    let m = w.len();
    for (j, wj) in w.iter_mut().enumerate() {
        let mut num = 1.0;
        let mut den = 1.0;
        for k in 0..m {
            if k != j {
                num *= s - k as f64;
                den *= j as f64 - k as f64;
            }
        }
        *wj = num / den;
    }
}
