//! Experiment drivers behind the subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bohmstab::ensemble::{evolve_ensemble_with_limit, CustomDensity};
use bohmstab::stats::linear_fit;
use bohmstab::wavefunction::{CoherentState, EigenSuperposition};
use bohmstab::{
    integrate_trajectory, run_relaxation, sample_nonequilibrium, ForceLaw, GridSolution, MomentumLaw,
    NonEquilibriumSpec, PositionLaw, RelaxationConfig, WaveFunctionModel,
};
use serde::Serialize;

use crate::config::{parse_grid, parse_times, ExperimentConfig, LawName, ModelSpec, NeqSpec};
use crate::error::{CliError, Result};
use crate::output::{read_numeric_rows, write_sidecar, Cell, CsvTable};

/// Files written by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
}

/// Builds the configured wavefunction; grid models are propagated up to
/// `t_end`.
pub fn build_model(config: &ExperimentConfig, t_end: f64) -> Result<WaveFunctionModel> {
    let params = config.params()?;
    let potential = config.potential()?;
    let model = match config.model_spec()? {
        ModelSpec::Coherent => CoherentState::new(config.model.alpha, params, potential)?.into(),
        ModelSpec::Superposition(m) => EigenSuperposition::equal_weights(m, params, potential)?.into(),
        ModelSpec::Grid(path) => {
            let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            let mut grid = GridSolution::read_csv(BufReader::new(file), config.model.grid_dt, params, potential, 0.0)?
                .with_snapshot_stride(config.model.grid_stride);
            grid.evolve_grid(t_end)?;
            if grid.edge_warning() {
                log::warn!("wavefunction reaches the edge of the grid in {}", path.display());
            }
            grid.into()
        }
    };
    Ok(model)
}

fn out_path(config: &ExperimentConfig, name: &str) -> PathBuf {
    config
        .output
        .dir
        .join(config.output.file.as_deref().unwrap_or(Path::new(name)))
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[derive(Serialize)]
struct TrajectoryDetails {
    law: String,
    x0: f64,
    p0: f64,
    steps_stored: usize,
}

pub fn run_trajectory(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let tr = &config.trajectory;
    let model = build_model(config, tr.t_end)?;
    let law = config.law(config.force.law)?;
    let p0 = config.system.mass * tr.v0;
    let traj = integrate_trajectory(&model, &law, tr.x0, p0, tr.t_start, tr.t_end, &config.integrator.spec())?;
    let csv = out_path(config, "trajectory.csv");
    let mut table = CsvTable::create(&csv, &["t", "x", "p"])?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        table.row(&[Cell::F(*t), Cell::F(s.x), Cell::F(s.p)])?;
    }
    let csv = table.finish()?;
    let details = TrajectoryDetails {
        law: law.to_string(),
        x0: tr.x0,
        p0,
        steps_stored: traj.times.len(),
    };
    let side = write_sidecar(
        &sidecar_path(&csv),
        "trajectory",
        config,
        std::slice::from_ref(&csv),
        details,
    )?;
    Ok(Outcome { files: vec![csv, side] })
}

#[derive(Serialize)]
struct StabilityRun {
    law: String,
    x0: f64,
    v0: f64,
    max_deviation: f64,
    final_deviation: f64,
}

/// Paired trajectories from every `(x0, v0)` under each configured law,
/// with the packet centre and width alongside.
pub fn run_stability(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let st = &config.stability;
    let model = build_model(config, st.t_end)?;
    let WaveFunctionModel::CoherentState(packet) = &model else {
        return Err(CliError::Config("stability needs the coherent model".into()));
    };
    let packet = packet.clone();
    let csv = out_path(config, "stability.csv");
    let mut table = CsvTable::create(
        &csv,
        &["law", "x0", "v0", "t", "x", "p", "packet_center", "packet_width"],
    )?;
    let mut runs = Vec::new();
    for &x0 in &st.x0 {
        for &v0 in &st.v0 {
            for &name in &st.laws {
                let law = config.law(name)?;
                let traj = integrate_trajectory(
                    &model,
                    &law,
                    x0,
                    config.system.mass * v0,
                    0.0,
                    st.t_end,
                    &config.integrator.spec(),
                )?;
                let label = name.to_string();
                let mut max_dev: f64 = 0.0;
                for (t, s) in traj.times.iter().zip(&traj.states) {
                    let c = packet.center(*t);
                    max_dev = max_dev.max((s.x - c).abs());
                    table.row(&[
                        Cell::Text(&label),
                        Cell::F(x0),
                        Cell::F(v0),
                        Cell::F(*t),
                        Cell::F(s.x),
                        Cell::F(s.p),
                        Cell::F(c),
                        Cell::F(packet.width()),
                    ])?;
                }
                let end = traj.last();
                runs.push(StabilityRun {
                    law: law.to_string(),
                    x0,
                    v0,
                    max_deviation: max_dev,
                    final_deviation: (end.x - packet.center(st.t_end)).abs(),
                });
            }
        }
    }
    let csv = table.finish()?;
    let side = write_sidecar(
        &sidecar_path(&csv),
        "stability",
        config,
        std::slice::from_ref(&csv),
        runs,
    )?;
    Ok(Outcome { files: vec![csv, side] })
}

fn read_custom_density(path: &Path) -> Result<CustomDensity> {
    let rows = read_numeric_rows(path, 2)?;
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
    Ok(CustomDensity::from_pairs(&pairs)?)
}

pub fn nonequilibrium(neq: &str) -> Result<NonEquilibriumSpec> {
    let spec = match neq.parse::<NeqSpec>()? {
        NeqSpec::Born => NonEquilibriumSpec::equilibrium(),
        NeqSpec::Offset(delta) => NonEquilibriumSpec::offset(delta),
        NeqSpec::Width(mu_actual) => NonEquilibriumSpec {
            position_law: PositionLaw::BornRule,
            momentum_law: MomentumLaw::WidthMismatch { mu_actual },
        },
        NeqSpec::Custom(path) => NonEquilibriumSpec {
            position_law: PositionLaw::Custom(read_custom_density(&path)?),
            momentum_law: MomentumLaw::KernelAtGradS,
        },
    };
    Ok(spec)
}

#[derive(Serialize)]
struct EnsembleDetails {
    sampler: String,
    law: String,
    n_requested: usize,
    n_final: usize,
    truncation_count: usize,
    t_start: f64,
    t_end: f64,
}

pub fn run_ensemble(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let en = &config.ensemble;
    let model = build_model(config, en.t_end)?;
    let kernel = config.kernel()?;
    let neq = nonequilibrium(&en.neq)?;
    let start = sample_nonequilibrium(&model, &neq, &kernel, en.t_start, en.n, config.seed)?;
    let law: ForceLaw = config.law(config.force.law)?;
    let end = if en.t_end > en.t_start {
        evolve_ensemble_with_limit(
            &start,
            &model,
            &law,
            en.t_end,
            &en.integrator.spec(),
            en.truncation_limit,
        )?
    } else {
        start.clone()
    };
    let csv = out_path(config, "ensemble.csv");
    let mut table = CsvTable::create(&csv, &["x", "p"])?;
    for q in &end.points {
        table.row(&[Cell::F(q.x), Cell::F(q.p)])?;
    }
    let csv = table.finish()?;
    let details = EnsembleDetails {
        sampler: start.provenance.sampler.clone(),
        law: law.to_string(),
        n_requested: en.n,
        n_final: end.len(),
        truncation_count: end.truncated_count,
        t_start: en.t_start,
        t_end: en.t_end,
    };
    let side = write_sidecar(
        &sidecar_path(&csv),
        "ensemble",
        config,
        std::slice::from_ref(&csv),
        details,
    )?;
    Ok(Outcome { files: vec![csv, side] })
}

#[derive(Serialize)]
struct RelaxDetails {
    law: String,
    neq: String,
    n_particles: usize,
    truncation_count: usize,
    grid: String,
    equilibrium_coverage: Vec<f64>,
    trend_slope: f64,
    trend_slope_upper_99: f64,
}

/// Relaxation experiment configured from the `[relax]` section.
pub fn relaxation_config(config: &ExperimentConfig) -> Result<RelaxationConfig> {
    let rx = &config.relax;
    if config.force.law != LawName::Modified {
        return Err(CliError::Config("relax runs use the modified law".into()));
    }
    let kernel = config.kernel()?;
    let mut rc = RelaxationConfig::new(
        kernel,
        nonequilibrium(&rx.neq)?,
        rx.n,
        parse_grid(&rx.grid)?,
        parse_times(&rx.times)?,
    );
    rc.law = config.law(LawName::Modified)?;
    rc.seed = config.seed;
    rc.integrator = rx.integrator.spec();
    rc.resamples = rx.resamples;
    rc.truncation_limit = rx.truncation_limit;
    Ok(rc)
}

pub fn run_relax(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let rc = relaxation_config(config)?;
    let model = build_model(config, *rc.times.last().expect("times are non-empty"))?;
    let series = run_relaxation(&model, &rc)?;
    let csv = out_path(config, "relax.csv");
    let mut table = CsvTable::create(&csv, &["t", "hbar", "hbar_floor", "out_of_range_mass"])?;
    for i in 0..series.times.len() {
        table.row(&[
            Cell::F(series.times[i]),
            Cell::F(series.hbar_values[i]),
            Cell::F(series.floors[i]),
            Cell::F(series.out_of_range[i]),
        ])?;
    }
    let csv = table.finish()?;
    let (slope, upper) = if series.times.len() >= 3 {
        let fit = linear_fit(&series.times, &series.hbar_values);
        (fit.slope, fit.slope_upper_bound(0.99))
    } else {
        (f64::NAN, f64::NAN)
    };
    let details = RelaxDetails {
        law: rc.law.to_string(),
        neq: config.relax.neq.clone(),
        n_particles: series.n_particles,
        truncation_count: series.truncated_count,
        grid: series.grid.describe(),
        equilibrium_coverage: series.coverage.clone(),
        trend_slope: slope,
        trend_slope_upper_99: upper,
    };
    let side = write_sidecar(
        &sidecar_path(&csv),
        "relax",
        config,
        std::slice::from_ref(&csv),
        details,
    )?;
    Ok(Outcome { files: vec![csv, side] })
}
