//! Self-check suite behind `bohmstab verify`.
//!
//! Each check compares a measured quantity with a fixed tolerance. `quick`
//! runs everything that fits in well under a minute; `full` adds the
//! 10⁵-particle equivariance runs and the relaxation experiments.

use std::f64::consts::PI;
use std::time::Instant;

use bohmstab::dynamics::{relative_liouville_residual, ForceVariant};
use bohmstab::ensemble::evolve_ensemble_with_limit;
use bohmstab::kernels::MarginalQuadrature;
use bohmstab::relaxation::{h_function, CellField, CoarseGrid};
use bohmstab::stats::{chi_square_gof, ks_two_sample, linear_fit};
use bohmstab::wavefunction::{GridSolution, GridSpec};
use bohmstab::{
    check_marginals, coherent_closed_form, evolve_ensemble, flow_divergence, integrate_trajectory, run_relaxation,
    sample_equilibrium, Ensemble, ForceLaw, IntegratorSpec, KernelSpec, NonEquilibriumSpec, WaveFunctionModel,
};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::scenarios;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: Level,
    /// Variant of the closed-form Gaussian force used by every check that
    /// integrates or evaluates the modified law.
    pub variant: ForceVariant,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            level: Level::Quick,
            variant: ForceVariant::Standard,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Passes when `measured < tolerance`.
    Below,
    /// Passes when `measured > tolerance`.
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub comparison: Comparison,
    pub tolerance: f64,
    pub measured: Option<f64>,
    pub passed: bool,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub level: Level,
    pub variant: ForceVariant,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

type Measure = Box<dyn Fn(&VerifyOptions) -> Result<Vec<f64>>>;

/// One or more named criteria sharing a single (possibly expensive)
/// measurement.
struct Check {
    criteria: Vec<(&'static str, Comparison, f64)>,
    measure: Measure,
}

type ScalarMeasure = Box<dyn Fn(&VerifyOptions) -> Result<f64>>;

fn check(name: &'static str, comparison: Comparison, tolerance: f64, measure: ScalarMeasure) -> Check {
    Check {
        criteria: vec![(name, comparison, tolerance)],
        measure: Box::new(move |o| Ok(vec![measure(o)?])),
    }
}

/// Quasi-random point `i` of the unit cube: additive recurrence with
/// steps `φ⁻¹, φ⁻², φ⁻³` where `φ⁴ = φ + 1`.
fn lattice(i: usize) -> [f64; 3] {
    const G: f64 = 1.220_744_084_605_759_5;
    let a = [1.0 / G, 1.0 / (G * G), 1.0 / (G * G * G)];
    let k = i as f64 + 0.5;
    a.map(|c| (0.5 + c * k).fract())
}

fn gaussian(mu: f64) -> KernelSpec {
    KernelSpec::gaussian(mu).expect("positive width")
}

fn modified(opts: &VerifyOptions, kernel: KernelSpec) -> ForceLaw {
    ForceLaw::Modified {
        kernel,
        variant: opts.variant,
    }
}

fn three_mode() -> Result<WaveFunctionModel> {
    Ok(WaveFunctionModel::superposition(3)?)
}

fn two_mode() -> Result<WaveFunctionModel> {
    Ok(WaveFunctionModel::superposition(2)?)
}

fn max_over<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    let mut m: f64 = 0.0;
    for v in it {
        m = m.max(v?);
    }
    Ok(m)
}

fn coherent_fields(_: &VerifyOptions) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    max_over((0..100).map(|i| {
        let [a, b, _] = lattice(i);
        let (t, x) = (2.0 * PI * a, -3.0 + 6.0 * b);
        let f = model.eval_valid(x, t)?;
        let y = x - t.cos();
        let err = [
            f.grad_s + t.sin(),
            f.grad_log_r + y,
            f.q - 0.5 * (1.0 - y * y),
            f.grad_q + y,
            f.hess_s,
        ]
        .iter()
        .fold(0.0f64, |m, e| m.max(e.abs()));
        Ok(err)
    }))
}

fn closed_form_trajectory(opts: &VerifyOptions) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let traj = integrate_trajectory(
        &model,
        &modified(opts, gaussian(1.0)),
        1.0,
        0.25,
        0.0,
        20.0,
        &IntegratorSpec::rk4(1e-3),
    )?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| (s.x - coherent_closed_form(1.0, 0.25, 1.0, 1.0, t)).abs())
        .fold(0.0, f64::max))
}

/// Largest `|X − cos t|` (`escape = false`) or smallest final deviation
/// (`escape = true`) over the `±0.25` launches.
fn stability(law: ForceLaw, escape: bool) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let mut worst = if escape { f64::INFINITY } else { 0.0 };
    for v0 in [0.25, -0.25] {
        let traj = integrate_trajectory(&model, &law, 1.0, v0, 0.0, 20.0, &IntegratorSpec::rk4(1e-3))?;
        if escape {
            worst = worst.min((traj.last().x - 20f64.cos()).abs());
        } else {
            let dev = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(t, s)| (s.x - t.cos()).abs())
                .fold(0.0, f64::max);
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

fn mu_to_zero(opts: &VerifyOptions) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let integ = IntegratorSpec::rk4(1e-3);
    let mut worst: f64 = 0.0;
    for v0 in [0.25, -0.25] {
        let a = integrate_trajectory(&model, &modified(opts, gaussian(1e-6)), 1.0, v0, 0.0, 10.0, &integ)?;
        let b = integrate_trajectory(&model, &ForceLaw::Bohm, 1.0, v0, 0.0, 10.0, &integ)?;
        for (p, q) in a.states.iter().zip(&b.states) {
            worst = worst.max((p.x - q.x).abs());
        }
    }
    Ok(worst)
}

/// Largest relative Liouville residual of `law` over `count` random points
/// of each model.
fn liouville(kernel: KernelSpec, law: ForceLaw, count: usize, models: &[WaveFunctionModel]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for model in models {
        // near-nodes of superpositions need a finer step to keep the h⁴
        // truncation error below the tolerance
        let h = if matches!(model, WaveFunctionModel::CoherentState(_)) {
            1e-4
        } else {
            1e-5
        };
        for i in 0..count {
            let [a, b, c] = lattice(i);
            let (t, x) = (2.0 * PI * a, -2.0 + 4.0 * b);
            let grad_s = model.eval_valid(x, t)?.grad_s;
            let p = grad_s + (-3.0 + 6.0 * c) * kernel.scale();
            worst = worst.max(relative_liouville_residual(&kernel, model, &law, x, p, t, h)?);
        }
    }
    Ok(worst)
}

fn marginals(kernel: KernelSpec, half_range: Option<f64>) -> Result<f64> {
    let model = three_mode()?;
    let t = 1.0;
    let mut q = MarginalQuadrature::spread(&model, t, 50);
    if let Some(r) = half_range {
        q = q.with_half_range(r);
    }
    let report = check_marginals(&kernel, &model, t, &q)?;
    Ok(report.density_error.max(report.current_error))
}

fn split_step_overlap() -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let spec = GridSpec::new(-16.0, 16.0, 512, 1e-3)?;
    let grid = GridSolution::from_model(&model, spec, 0.0)?
        .with_snapshot_stride(100)
        .evolved(2.0)?;
    let dx = spec.dx();
    let mut overlap = Complex64::new(0.0, 0.0);
    for (i, v) in grid.values().iter().enumerate() {
        overlap += model.psi(spec.x(i), 2.0)?.conj() * v * dx;
    }
    Ok(1.0 - overlap.norm())
}

fn split_step_norm() -> Result<f64> {
    let model = three_mode()?;
    let spec = GridSpec::new(-16.0, 16.0, 512, 1e-3)?;
    let mut grid = GridSolution::from_model(&model, spec, 0.0)?.with_snapshot_stride(1000);
    let start = grid.norm();
    grid.evolve_grid(10.0)?;
    Ok((grid.norm() - start).abs())
}

fn sampler_chi2(opts: &VerifyOptions) -> Result<f64> {
    let model = three_mode()?;
    let t = 0.6;
    let ens = sample_equilibrium(&model, &gaussian(1.0), t, 100_000, opts.seed)?;
    let (lo, hi, bins) = (-3.5, 3.5, 50);
    let h = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for q in &ens.points {
        let b = ((q.x - lo) / h).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    let rule = bohmstab::quadrature::GaussLegendre::new(10);
    let mut expected = Vec::with_capacity(bins);
    for b in 0..bins {
        let a = lo + b as f64 * h;
        let mut m = 0.0;
        for (x, w) in rule.mapped(a, a + h) {
            m += w * model.density(x, t)?;
        }
        expected.push(m * ens.len() as f64);
    }
    Ok(chi_square_gof(&counts, &expected).p_value)
}

fn equilibrium_moments(opts: &VerifyOptions) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let m = sample_equilibrium(&model, &gaussian(1.0), 0.0, 100_000, opts.seed)?.moments();
    Ok([(m.mean_x - 1.0).abs(), m.mean_p.abs(), (m.var_p - 0.5).abs()]
        .iter()
        .fold(0.0, |a: f64, b| a.max(*b)))
}

fn h_arithmetic() -> Result<f64> {
    let grid = CoarseGrid::new((0.0, 2.0), 2, (0.0, 1.0), 1)?;
    let field = |v: Vec<f64>| CellField {
        nx: 2,
        np: 1,
        values: v,
        out_of_range_mass: 0.0,
    };
    let h = h_function(&field(vec![0.8, 0.2]), &field(vec![0.5, 0.5]), &grid)?;
    Ok((h - (0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln())).abs())
}

fn bohm_matches_debroglie(opts: &VerifyOptions) -> Result<f64> {
    let model = three_mode()?;
    let ens = sample_equilibrium(&model, &KernelSpec::dirac(), 0.0, 50, opts.seed)?;
    let integ = IntegratorSpec::rk4(2.5e-4);
    let a = evolve_ensemble_with_limit(&ens, &model, &ForceLaw::Bohm, 2.0, &integ, 1.0)?;
    let b = evolve_ensemble_with_limit(&ens, &model, &ForceLaw::DeBroglie, 2.0, &integ, 1.0)?;
    Ok(a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (p.x - q.x).abs())
        .fold(0.0, f64::max))
}

fn flow_divergence_check(opts: &VerifyOptions) -> Result<f64> {
    let model = WaveFunctionModel::coherent(1.0);
    let superposed = three_mode()?;
    let mut worst: f64 = 0.0;
    for (x, p, t) in [(0.3, 0.1, 0.2), (-1.1, 0.7, 2.5), (1.9, -0.4, 4.0)] {
        worst = worst.max(flow_divergence(&modified(opts, gaussian(1.0)), &model, x, p, t)?.abs());
        worst = worst.max(flow_divergence(&ForceLaw::Bohm, &superposed, x, p, t)?.abs());
    }
    Ok(worst)
}

/// Smallest KS p-value (positions and momentum pulls) between an evolved
/// equilibrium ensemble and a fresh sample at the end time.
pub fn equivariance_p_value(
    model: &WaveFunctionModel,
    law: &ForceLaw,
    kernel: &KernelSpec,
    n: usize,
    t1: f64,
    seed: u64,
) -> Result<f64> {
    let start = sample_equilibrium(model, kernel, 0.0, n, seed)?;
    let end = evolve_ensemble(&start, model, law, t1, &scenarios::ensemble_integrator())?;
    let fresh: Ensemble = sample_equilibrium(model, kernel, t1, n, bohmstab::rng::derive_seed(seed, 7))?;
    let px = ks_two_sample(&end.positions(), &fresh.positions()).p_value;
    let pp = ks_two_sample(
        &end.momentum_pulls(model, kernel)?,
        &fresh.momentum_pulls(model, kernel)?,
    )
    .p_value;
    Ok(px.min(pp))
}

/// Offset start: `[H̄(0)/floor, (H̄(0) − H̄(20))/floor(0), slope upper bound]`;
/// equilibrium start: largest `|H̄|/floor`.
fn relaxation_measures(opts: &VerifyOptions) -> Result<Vec<f64>> {
    let model = scenarios::relaxation_model()?;
    let mut offset = scenarios::relaxation_config(NonEquilibriumSpec::offset(1.0))?;
    offset.law = modified(opts, offset.kernel);
    offset.seed = opts.seed;
    let s = run_relaxation(&model, &offset)?;
    let last = s.hbar_values.len() - 1;
    let (h0, f0) = (s.hbar_values[0], s.floors[0]);
    let fit = linear_fit(&s.times, &s.hbar_values);
    let mut eq = scenarios::relaxation_config(NonEquilibriumSpec::equilibrium())?;
    eq.law = offset.law;
    eq.seed = opts.seed;
    let e = run_relaxation(&model, &eq)?;
    let eq_excess = e
        .hbar_values
        .iter()
        .zip(&e.floors)
        .map(|(h, f)| h.abs() / f)
        .fold(0.0, f64::max);
    Ok(vec![
        h0 / f0,
        (h0 - s.hbar_values[last]) / f0,
        fit.slope_upper_bound(0.99),
        eq_excess,
    ])
}

fn quick_checks() -> Vec<Check> {
    use Comparison::*;
    vec![
        check("coherent-fields", Below, 1e-10, Box::new(coherent_fields)),
        check("closed-form-trajectory", Below, 1e-5, Box::new(closed_form_trajectory)),
        check(
            "stability-modified-bounded",
            Below,
            0.2501,
            Box::new(|o| stability(modified(o, gaussian(1.0)), false)),
        ),
        check(
            "stability-bohm-escapes",
            Above,
            4.9,
            Box::new(|_| stability(ForceLaw::Bohm, true)),
        ),
        check("mu-to-zero-limit", Below, 1e-3, Box::new(mu_to_zero)),
        check(
            "liouville-gaussian",
            Below,
            1e-6,
            Box::new(|o| {
                liouville(
                    gaussian(1.0),
                    modified(o, gaussian(1.0)),
                    50,
                    &[WaveFunctionModel::coherent(1.0), two_mode()?],
                )
            }),
        ),
        check(
            "liouville-opposite-signs-fails",
            Above,
            1e-3,
            Box::new(|_| {
                let k = gaussian(1.0);
                let law = ForceLaw::Modified {
                    kernel: k,
                    variant: ForceVariant::OppositeSigns,
                };
                liouville(k, law, 20, &[WaveFunctionModel::coherent(1.0)])
            }),
        ),
        check(
            "liouville-lorentzian",
            Below,
            1e-5,
            Box::new(|_| {
                let k = KernelSpec::lorentzian(0.8)?;
                liouville(
                    k,
                    ForceLaw::modified(k),
                    10,
                    &[WaveFunctionModel::coherent(1.0), two_mode()?],
                )
            }),
        ),
        check(
            "marginals-gaussian",
            Below,
            1e-10,
            Box::new(|_| marginals(gaussian(1.0), None)),
        ),
        check(
            "marginals-lorentzian",
            Below,
            1e-6,
            Box::new(|_| marginals(KernelSpec::lorentzian(0.5)?, Some(1e3))),
        ),
        check(
            "split-step-overlap-deficit",
            Below,
            1e-6,
            Box::new(|_| split_step_overlap()),
        ),
        check("split-step-norm-drift", Below, 1e-10, Box::new(|_| split_step_norm())),
        check("sampler-chi-square-p", Above, 0.01, Box::new(sampler_chi2)),
        check("equilibrium-moments", Below, 0.01, Box::new(equilibrium_moments)),
        check("h-function-arithmetic", Below, 1e-12, Box::new(|_| h_arithmetic())),
        check("bohm-equals-debroglie", Below, 1e-6, Box::new(bohm_matches_debroglie)),
        check("flow-divergence-zero", Below, 1e-12, Box::new(flow_divergence_check)),
        check(
            "equivariance-coherent-small-ks-p",
            Above,
            0.01,
            Box::new(|o| {
                let k = gaussian(1.0);
                equivariance_p_value(
                    &WaveFunctionModel::coherent(1.0),
                    &modified(o, k),
                    &k,
                    20_000,
                    5.0,
                    o.seed,
                )
            }),
        ),
    ]
}

fn full_checks() -> Vec<Check> {
    use Comparison::*;
    vec![
        check(
            "equivariance-coherent-ks-p",
            Above,
            0.01,
            Box::new(|o| {
                let k = gaussian(1.0);
                equivariance_p_value(
                    &WaveFunctionModel::coherent(1.0),
                    &modified(o, k),
                    &k,
                    100_000,
                    5.0,
                    o.seed,
                )
            }),
        ),
        check(
            "equivariance-grid-3-mode-ks-p",
            Above,
            0.01,
            Box::new(|o| {
                let k = gaussian(1.0);
                let model = scenarios::grid_three_mode(5.0)?;
                equivariance_p_value(&model, &modified(o, k), &k, 100_000, 5.0, o.seed)
            }),
        ),
        Check {
            criteria: vec![
                ("relaxation-offset-start-over-floor", Above, 5.0),
                ("relaxation-decrease-over-floor", Above, 5.0),
                ("relaxation-trend-slope-upper-99", Below, 0.0),
                ("relaxation-equilibrium-within-floor", Below, 1.0),
            ],
            measure: Box::new(relaxation_measures),
        },
    ]
}

/// Runs the suite; a check whose measurement errors counts as failed.
pub fn run_verify(opts: &VerifyOptions) -> Report {
    let mut checks = quick_checks();
    if opts.level == Level::Full {
        checks.extend(full_checks());
    }
    let mut results = Vec::new();
    for c in checks {
        let start = Instant::now();
        let outcome = (c.measure)(opts);
        let seconds = start.elapsed().as_secs_f64();
        for (i, &(name, comparison, tolerance)) in c.criteria.iter().enumerate() {
            let (measured, error) = match &outcome {
                Ok(v) => (Some(v[i]), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let passed = match (measured, comparison) {
                (Some(v), Comparison::Below) => v < tolerance,
                (Some(v), Comparison::Above) => v > tolerance,
                (None, _) => false,
            };
            log::info!("{name}: {} ({measured:?})", if passed { "pass" } else { "FAIL" });
            results.push(CheckResult {
                name: name.to_string(),
                comparison,
                tolerance,
                measured,
                passed,
                seconds,
                error,
            });
        }
    }
    Report {
        level: opts.level,
        variant: opts.variant,
        passed: results.iter().all(|r| r.passed),
        checks: results,
    }
}
