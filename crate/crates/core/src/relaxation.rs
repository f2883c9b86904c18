//! Coarse-grained H-function and relaxation experiments.
//!
//! Phase space is divided into a rectangular grid of cells of volume
//! `δΩ = Δx Δp`. The empirical cell density comes from particle counts, the
//! equilibrium one from tensor Gauss–Legendre quadrature of `f_μ`, and
//! `H̄ = Σ δΩ f̄ ln(f̄ / f̄_μ)`.
//!
//! H̄ computed from a finite ensemble is biased upwards by roughly
//! `(occupied cells − 1) / 2n`. Every value is reported together with a
//! bootstrap floor: the bootstrap bias estimate plus three bootstrap standard
//! deviations.

use crate::dynamics::{ForceLaw, IntegratorSpec};
use crate::ensemble::{
    evolve_ensemble_with_limit, sample_nonequilibrium, Ensemble, NonEquilibriumSpec, DEFAULT_TRUNCATION_LIMIT,
};
use crate::error::{Error, Result};
use crate::kernels::{equilibrium_density, KernelSpec};
use crate::quadrature::GaussLegendre;
use crate::rng::{derive_seed, substream};
use crate::wavefunction::WaveFunctionModel;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gauss–Legendre order per cell and direction; the result is checked
/// against twice this order.
pub const CELL_ORDER: usize = 8;
/// Largest tolerated change of a cell average between the two orders.
pub const CELL_TOLERANCE: f64 = 1e-8;
/// Minimum equilibrium mass the grid must cover in experiments.
pub const MIN_COVERAGE: f64 = 1.0 - 1e-4;
pub const DEFAULT_RESAMPLES: usize = 200;

/// Rectangular phase-space grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl CoarseGrid {
    pub fn new(x_range: (f64, f64), nx: usize, p_range: (f64, f64), np: usize) -> Result<Self> {
        let g = Self {
            x_min: x_range.0,
            x_max: x_range.1,
            nx,
            p_min: p_range.0,
            p_max: p_range.1,
            np,
        };
        g.validate()?;
        Ok(g)
    }

    /// Structural checks. Experiments additionally require
    /// [`Self::validate_for_experiment`].
    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.p_max > self.p_min) {
            return Err(Error::InvalidParameter(
                "coarse grid needs finite, non-empty ranges".into(),
            ));
        }
        if self.nx == 0 || self.np == 0 {
            return Err(Error::InvalidParameter(
                "coarse grid needs at least one cell per axis".into(),
            ));
        }
        Ok(())
    }

    /// At least 4 cells per axis.
    pub fn validate_for_experiment(&self) -> Result<()> {
        self.validate()?;
        if self.nx < 4 || self.np < 4 {
            return Err(Error::InvalidParameter(format!(
                "coarse grid needs nx, np >= 4, got {} x {}",
                self.nx, self.np
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dp()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.np
    }

    /// Row-major index `ix * np + ip` of the cell holding `(x, p)`. Upper
    /// edges belong to the last cell.
    pub fn cell_index(&self, x: f64, p: f64) -> Option<usize> {
        let axis = |v: f64, lo: f64, hi: f64, n: usize| {
            if !(v >= lo && v <= hi) {
                return None;
            }
            Some((((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1))
        };
        let ix = axis(x, self.x_min, self.x_max, self.nx)?;
        let ip = axis(p, self.p_min, self.p_max, self.np)?;
        Some(ix * self.np + ip)
    }

    pub fn describe(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.x_min, self.x_max, self.nx, self.p_min, self.p_max, self.np
        )
    }
}

/// Cell-averaged phase-space density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellField {
    pub nx: usize,
    pub np: usize,
    /// Row-major `nx × np` densities.
    pub values: Vec<f64>,
    pub out_of_range_mass: f64,
}

impl CellField {
    pub fn get(&self, ix: usize, ip: usize) -> f64 {
        self.values[ix * self.np + ip]
    }

    /// `Σ values · δΩ`.
    pub fn mass(&self, grid: &CoarseGrid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_volume()
    }

    fn matches(&self, grid: &CoarseGrid) -> bool {
        self.nx == grid.nx && self.np == grid.np && self.values.len() == grid.cells()
    }
}

fn cell_counts(ens: &Ensemble, grid: &CoarseGrid) -> (Vec<u64>, u64) {
    let cells = grid.cells();
    // integer partial counts merge exactly, whatever the split
    ens.points
        .par_iter()
        .fold(
            || (vec![0u64; cells], 0u64),
            |(mut counts, mut outside), q| {
                match grid.cell_index(q.x, q.p) {
                    Some(i) => counts[i] += 1,
                    None => outside += 1,
                }
                (counts, outside)
            },
        )
        .reduce(
            || (vec![0u64; cells], 0u64),
            |(mut a, oa), (b, ob)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, oa + ob)
            },
        )
}

fn field_from_counts(counts: &[u64], outside: u64, grid: &CoarseGrid) -> CellField {
    let n: u64 = counts.iter().sum::<u64>() + outside;
    let scale = 1.0 / (n as f64 * grid.cell_volume());
    CellField {
        nx: grid.nx,
        np: grid.np,
        values: counts.iter().map(|&c| c as f64 * scale).collect(),
        out_of_range_mass: outside as f64 / n as f64,
    }
}

/// Empirical cell densities `count / (n δΩ)`; particles outside the grid
/// are reported as `out_of_range_mass`.
pub fn coarse_grain(ens: &Ensemble, grid: &CoarseGrid) -> Result<CellField> {
    grid.validate()?;
    if ens.is_empty() {
        return Err(Error::InvalidParameter("cannot coarse-grain an empty ensemble".into()));
    }
    let (counts, outside) = cell_counts(ens, grid);
    Ok(field_from_counts(&counts, outside, grid))
}

/// Masses `∫∫ f_μ` of the strip `[x_lo, x_hi]` in every momentum cell,
/// tensor Gauss–Legendre with `order` nodes in each direction.
fn column_masses(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    grid: &CoarseGrid,
    t: f64,
    x_lo: f64,
    x_hi: f64,
    order: usize,
) -> Result<Vec<f64>> {
    let rule = GaussLegendre::new(order);
    let dp = grid.dp();
    let mut col = vec![0.0; grid.np];
    for (x, wx) in rule.mapped(x_lo, x_hi) {
        let fields = model.eval_fields(x, t)?;
        if !fields.valid {
            // node region: ρ below the exclusion threshold
            continue;
        }
        for (ip, m) in col.iter_mut().enumerate() {
            let lo = grid.p_min + ip as f64 * dp;
            let mut s = 0.0;
            for (p, wp) in rule.mapped(lo, lo + dp) {
                s += wp * equilibrium_density(kernel, &fields, p)?;
            }
            *m += wx * s;
        }
    }
    Ok(col)
}

/// Bisections allowed per x-cell.
const MAX_DEPTH: usize = 12;

/// Column masses of one x-cell. A strip is accepted once orders `order`
/// and `2 order` agree to the cell tolerance (scaled by its share of the
/// cell), otherwise it is halved. Near nodes ∇S can sweep through many
/// momentum cells within one x-cell and needs the extra resolution.
fn adaptive_column(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    grid: &CoarseGrid,
    t: f64,
    (x_lo, x_hi): (f64, f64),
    order: usize,
    depth: usize,
) -> Result<Vec<f64>> {
    let coarse = column_masses(model, kernel, grid, t, x_lo, x_hi, order)?;
    let fine = column_masses(model, kernel, grid, t, x_lo, x_hi, 2 * order)?;
    let share = (x_hi - x_lo) / grid.dx();
    let worst = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / grid.cell_volume();
    if worst <= 0.1 * CELL_TOLERANCE * share {
        return Ok(fine);
    }
    if depth == MAX_DEPTH {
        return Err(Error::QuadratureNotConverged(format!(
            "cell averages on [{x_lo}, {x_hi}] change by {worst:.3e} between orders {order} and {}",
            2 * order
        )));
    }
    let mid = 0.5 * (x_lo + x_hi);
    let mut left = adaptive_column(model, kernel, grid, t, (x_lo, mid), order, depth + 1)?;
    let right = adaptive_column(model, kernel, grid, t, (mid, x_hi), order, depth + 1)?;
    left.iter_mut().zip(&right).for_each(|(a, b)| *a += b);
    Ok(left)
}

/// Cell averages of `f_μ` at time `t`. `out_of_range_mass` is the
/// equilibrium mass the grid misses.
pub fn equilibrium_cell_averages(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    grid: &CoarseGrid,
    t: f64,
) -> Result<CellField> {
    equilibrium_cell_averages_with_order(model, kernel, grid, t, CELL_ORDER)
}

/// [`equilibrium_cell_averages`] with an explicit base order (≥ 8). Each
/// x-cell is bisected until orders `order` and `2 order` agree; the call
/// fails with `QuadratureNotConverged` when that takes more than 12 levels.
pub fn equilibrium_cell_averages_with_order(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    grid: &CoarseGrid,
    t: f64,
    order: usize,
) -> Result<CellField> {
    if kernel.is_dirac() {
        return Err(Error::DiracDensityRequest);
    }
    kernel.validate()?;
    grid.validate()?;
    if order < 8 {
        return Err(Error::InvalidParameter(format!(
            "cell quadrature order must be >= 8, got {order}"
        )));
    }
    let dx = grid.dx();
    let inv = 1.0 / grid.cell_volume();
    let columns: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|ix| {
            let lo = grid.x_min + ix as f64 * dx;
            adaptive_column(model, kernel, grid, t, (lo, lo + dx), order, 0)
        })
        .collect::<Result<_>>()?;
    let fine: Vec<f64> = columns.into_iter().flatten().map(|m| m * inv).collect();
    let mass = fine.iter().sum::<f64>() * grid.cell_volume();
    Ok(CellField {
        nx: grid.nx,
        np: grid.np,
        values: fine,
        out_of_range_mass: 1.0 - mass,
    })
}

/// `H̄ = Σ δΩ f̄ ln(f̄ / f̄_μ)` with `0 ln 0 = 0`.
pub fn h_function(f: &CellField, feq: &CellField, grid: &CoarseGrid) -> Result<f64> {
    if !f.matches(grid) || !feq.matches(grid) {
        return Err(Error::GridMismatch);
    }
    let vol = grid.cell_volume();
    let mut h = 0.0;
    let mut orphan = 0.0;
    for (&a, &b) in f.values.iter().zip(&feq.values) {
        if a > 0.0 {
            if b > 0.0 {
                h += vol * a * (a / b).ln();
            } else {
                orphan += a * vol;
            }
        }
    }
    if orphan > 0.0 {
        return Err(Error::SupportMismatch { mass: orphan });
    }
    Ok(h)
}

/// Bootstrap statistics of H̄ for one ensemble snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bootstrap {
    /// Mean of the resampled values minus the observed value.
    pub bias: f64,
    pub std_dev: f64,
    /// `max(bias, 0) + 3 std_dev`.
    pub floor: f64,
}

/// Resamples the ensemble `resamples` times (multinomial over cells and the
/// out-of-range bin) and summarizes the spread of H̄.
pub fn bootstrap_floor(
    ens: &Ensemble,
    grid: &CoarseGrid,
    feq: &CellField,
    resamples: usize,
    seed: u64,
) -> Result<Bootstrap> {
    if resamples < 2 {
        return Err(Error::InvalidParameter("bootstrap needs at least two resamples".into()));
    }
    let observed = h_function(&coarse_grain(ens, grid)?, feq, grid)?;
    let (counts, outside) = cell_counts(ens, grid);
    let n = counts.iter().sum::<u64>() + outside;
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            // multinomial draw as a chain of conditional binomials
            let mut remaining = n;
            let mut unassigned = n;
            let mut drawn = vec![0u64; counts.len()];
            for (d, &c) in drawn.iter_mut().zip(&counts) {
                if remaining == 0 || c == 0 {
                    continue;
                }
                let prob = (c as f64 / unassigned as f64).min(1.0);
                let k = Binomial::new(remaining, prob)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(&mut rng);
                *d = k;
                remaining -= k;
                unassigned -= c;
            }
            h_function(&field_from_counts(&drawn, remaining, grid), feq, grid)
        })
        .collect::<Result<_>>()?;
    let mean = crate::stats::mean(&values);
    let std_dev = crate::stats::variance(&values).sqrt();
    let bias = mean - observed;
    Ok(Bootstrap {
        bias,
        std_dev,
        floor: bias.max(0.0) + 3.0 * std_dev,
    })
}

/// Relaxation experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationConfig {
    pub kernel: KernelSpec,
    /// Defaults to the modified law of `kernel`.
    pub law: ForceLaw,
    pub initial: NonEquilibriumSpec,
    pub n: usize,
    pub seed: u64,
    pub grid: CoarseGrid,
    /// Increasing sample times; the first one is the start time.
    pub times: Vec<f64>,
    pub integrator: IntegratorSpec,
    pub resamples: usize,
    pub truncation_limit: f64,
}

impl RelaxationConfig {
    pub fn new(kernel: KernelSpec, initial: NonEquilibriumSpec, n: usize, grid: CoarseGrid, times: Vec<f64>) -> Self {
        Self {
            kernel,
            law: ForceLaw::modified(kernel),
            initial,
            n,
            seed: 0,
            grid,
            times,
            integrator: IntegratorSpec::rk45(1e-8, 1e-10),
            resamples: DEFAULT_RESAMPLES,
            truncation_limit: DEFAULT_TRUNCATION_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_dirac() {
            return Err(Error::DiracDensityRequest);
        }
        self.kernel.validate()?;
        if !matches!(self.law, ForceLaw::Modified { .. }) {
            return Err(Error::InvalidParameter(
                "relaxation runs use a modified force law".into(),
            ));
        }
        self.law.validate()?;
        self.initial.validate()?;
        self.grid.validate_for_experiment()?;
        self.integrator.validate()?;
        if self.n < 2 {
            return Err(Error::InvalidParameter(
                "relaxation needs at least two particles".into(),
            ));
        }
        if self.times.is_empty() || self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "sample times must be non-empty and increasing".into(),
            ));
        }
        Ok(())
    }
}

/// H̄ time series with its noise floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HSeries {
    pub times: Vec<f64>,
    pub hbar_values: Vec<f64>,
    pub floors: Vec<f64>,
    /// Ensemble mass outside the grid at each time.
    pub out_of_range: Vec<f64>,
    /// Equilibrium mass covered by the grid at each time.
    pub coverage: Vec<f64>,
    pub n_particles: usize,
    pub truncated_count: usize,
    pub grid: CoarseGrid,
}

/// H̄ and its bootstrap floor for one snapshot, with the empirical and
/// equilibrium cell fields it was computed from.
pub fn snapshot_h(
    model: &WaveFunctionModel,
    kernel: &KernelSpec,
    ens: &Ensemble,
    grid: &CoarseGrid,
    resamples: usize,
    seed: u64,
) -> Result<(f64, Bootstrap, CellField, CellField)> {
    let feq = equilibrium_cell_averages(model, kernel, grid, ens.t)?;
    let f = coarse_grain(ens, grid)?;
    let h = h_function(&f, &feq, grid)?;
    let boot = bootstrap_floor(ens, grid, &feq, resamples, seed)?;
    Ok((h, boot, f, feq))
}

/// Samples the initial ensemble, evolves it through the sample times and
/// records H̄ against `f̄_μ` of the same wavefunction at each time.
///
/// The grid must cover at least [`MIN_COVERAGE`] of the equilibrium mass at
/// the start time (`GridCoverage` otherwise). Later on, ∇S spikes near
/// nodes can push some equilibrium mass outside the momentum range; the
/// coverage is recorded for every time and a warning logged when it drops
/// below the limit.
pub fn run_relaxation(model: &WaveFunctionModel, config: &RelaxationConfig) -> Result<HSeries> {
    config.validate()?;
    let sample_seed = derive_seed(config.seed, 1);
    let boot_seed = derive_seed(config.seed, 2);
    let mut ens = sample_nonequilibrium(
        model,
        &config.initial,
        &config.kernel,
        config.times[0],
        config.n,
        sample_seed,
    )?;
    let mut out = HSeries {
        times: Vec::with_capacity(config.times.len()),
        hbar_values: Vec::new(),
        floors: Vec::new(),
        out_of_range: Vec::new(),
        coverage: Vec::new(),
        n_particles: config.n,
        truncated_count: 0,
        grid: config.grid,
    };
    for (k, &t) in config.times.iter().enumerate() {
        if k > 0 {
            ens = evolve_ensemble_with_limit(&ens, model, &config.law, t, &config.integrator, config.truncation_limit)?;
        }
        let (h, boot, f, feq) = snapshot_h(
            model,
            &config.kernel,
            &ens,
            &config.grid,
            config.resamples,
            derive_seed(boot_seed, k as u64),
        )?;
        let covered = 1.0 - feq.out_of_range_mass;
        if covered < MIN_COVERAGE {
            if k == 0 {
                return Err(Error::GridCoverage { covered });
            }
            log::warn!("t = {t}: grid covers only {covered:.6} of the equilibrium mass");
        }
        log::info!(
            "t = {t}: H = {h:.6} (floor {:.2e}, {} particles)",
            boot.floor,
            ens.len()
        );
        out.times.push(t);
        out.hbar_values.push(h);
        out.floors.push(boot.floor);
        out.out_of_range.push(f.out_of_range_mass);
        out.coverage.push(1.0 - feq.out_of_range_mass);
    }
    out.truncated_count = ens.truncated_count;
    Ok(out)
}

#[cfg(test)]
mod tests;
