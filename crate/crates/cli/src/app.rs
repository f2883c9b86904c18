//! Command-line surface: argument parsing and dispatch.

use std::path::PathBuf;

use bohmstab::dynamics::ForceVariant;
use bohmstab::{KernelKind, Method};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::commands::{run_ensemble, run_relax, run_stability, run_trajectory, Outcome};
use crate::config::{ExperimentConfig, LawName};
use crate::error::{CliError, Result};
use crate::output::write_json;
use crate::verify::{run_verify, Level, VerifyOptions};

#[derive(Debug, Parser)]
#[command(
    name = "bohmstab",
    version,
    about = "Trajectory stability and relaxation experiments for smeared-momentum Bohmian mechanics",
    after_help = "Unset options take their values from --config, then from built-in defaults; \
                  `bohmstab <command> --dump-config` prints the result."
)]
pub struct Cli {
    /// TOML experiment file; flags and environment variables override it.
    #[arg(long, global = true, env = "BOHMSTAB_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "BOHMSTAB_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "BOHMSTAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, env = "BOHMSTAB_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit. With no other
    /// options this is the reference of every default.
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory.
    Trajectory(TrajectoryArgs),
    /// Paired trajectories around the coherent packet centre.
    Stability(StabilityArgs),
    /// Sample and evolve a phase-space ensemble.
    Ensemble(EnsembleArgs),
    /// Coarse-grained H-function time series.
    Relax(RelaxArgs),
    /// Run the self-check suite; exits non-zero if any check fails.
    Verify(VerifyArgs),
}

/// Options shared by the experiment subcommands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `coherent`, `superposition:<modes>` or `grid:<file>`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `gaussian`, `lorentzian` or `dirac`.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// `modified`, `bohm`, `classical` or `debroglie`.
    #[arg(long)]
    pub law: Option<String>,
    /// `rk4` or `rk45`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, hide = true)]
    pub force_variant: Option<String>,
    /// CSV file name inside the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: Option<usize>,
    /// `born`, `offset:<Δ>`, `width:<μ'>` or `custom:<file>`.
    #[arg(long)]
    pub neq: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RelaxArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub neq: Option<String>,
    /// `x0,x1,nx,p0,p1,np`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// `t0:t1:k` for `k + 1` evenly spaced times.
    #[arg(long)]
    pub times: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "quick")]
    pub level: Level,
    #[arg(long, hide = true)]
    pub force_variant: Option<String>,
    /// Also write the report as JSON to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| CliError::Config(format!("unknown {what} '{s}'")))
}

impl ModelArgs {
    fn apply(&self, c: &mut ExperimentConfig, adaptive_section: Option<&str>) -> Result<()> {
        if let Some(v) = &self.model {
            c.model.spec = v.clone();
        }
        if let Some(v) = self.alpha {
            c.model.alpha = v;
        }
        if let Some(v) = &self.kernel {
            c.kernel.kind = parse_enum::<KernelKind>("kernel", v)?;
        }
        if let Some(v) = self.mu {
            c.kernel.mu = v;
        }
        if let Some(v) = &self.law {
            c.force.law = v.parse::<LawName>()?;
        }
        if let Some(v) = &self.force_variant {
            c.force.variant = parse_enum::<ForceVariant>("force variant", v)?;
        }
        if let Some(v) = &self.out {
            c.output.file = Some(v.clone());
        }
        let integ = match adaptive_section {
            Some("ensemble") => &mut c.ensemble.integrator,
            Some(_) => &mut c.relax.integrator,
            None => &mut c.integrator,
        };
        if let Some(v) = &self.method {
            integ.method = parse_enum::<Method>("method", v)?;
        }
        if let Some(v) = self.dt {
            integ.dt = v;
        }
        Ok(())
    }
}

impl Cli {
    /// Configuration after applying defaults, the config file, then
    /// environment variables and flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            c.output.dir = dir.clone();
        }
        match &self.command {
            Command::Trajectory(a) => {
                a.model.apply(&mut c, None)?;
                if let Some(v) = a.x0 {
                    c.trajectory.x0 = v;
                }
                if let Some(v) = a.v0 {
                    c.trajectory.v0 = v;
                }
                if let Some(v) = a.t_end {
                    c.trajectory.t_end = v;
                }
            }
            Command::Stability(a) => {
                a.model.apply(&mut c, None)?;
                if let Some(v) = a.t_end {
                    c.stability.t_end = v;
                }
            }
            Command::Ensemble(a) => {
                a.model.apply(&mut c, Some("ensemble"))?;
                if let Some(v) = a.n {
                    c.ensemble.n = v;
                }
                if let Some(v) = &a.neq {
                    c.ensemble.neq = v.clone();
                }
                if let Some(v) = a.t_end {
                    c.ensemble.t_end = v;
                }
            }
            Command::Relax(a) => {
                a.model.apply(&mut c, Some("relax"))?;
                if let Some(v) = a.n {
                    c.relax.n = v;
                }
                if let Some(v) = &a.neq {
                    c.relax.neq = v.clone();
                }
                if let Some(v) = &a.grid {
                    c.relax.grid = v.clone();
                }
                if let Some(v) = &a.times {
                    c.relax.times = v.clone();
                }
            }
            Command::Verify(a) => {
                if let Some(v) = &a.force_variant {
                    c.force.variant = parse_enum::<ForceVariant>("force variant", v)?;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn configure_threads(threads: Option<usize>) {
    let n = threads.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
}

fn report_files(o: &Outcome) {
    for f in &o.files {
        println!("{}", f.display());
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    configure_threads(cli.threads);
    let config = cli.resolve()?;
    if cli.dump_config {
        print!("{}", config.to_toml()?);
        return Ok(0);
    }
    match &cli.command {
        Command::Trajectory(_) => report_files(&run_trajectory(&config)?),
        Command::Stability(_) => report_files(&run_stability(&config)?),
        Command::Ensemble(_) => report_files(&run_ensemble(&config)?),
        Command::Relax(_) => report_files(&run_relax(&config)?),
        Command::Verify(a) => {
            let opts = VerifyOptions {
                level: a.level,
                variant: config.force.variant,
                seed: config.seed,
            };
            let report = run_verify(&opts);
            for c in &report.checks {
                let measured = c.measured.map_or_else(|| "error".to_string(), |v| format!("{v:.3e}"));
                println!(
                    "{:<4} {:<40} measured {measured:>10} tolerance {:.3e} ({:.2} s){}",
                    if c.passed { "ok" } else { "FAIL" },
                    c.name,
                    c.tolerance,
                    c.seconds,
                    c.error.as_deref().map(|e| format!(" {e}")).unwrap_or_default()
                );
            }
            println!(
                "{} of {} checks passed",
                report.checks.iter().filter(|c| c.passed).count(),
                report.checks.len()
            );
            if let Some(path) = &a.report {
                write_json(path, &report)?;
            }
            return Ok(if report.passed { 0 } else { 1 });
        }
    }
    Ok(0)
}
