//! Experiment configuration.
//!
//! Configuration files are TOML restricted to `key = value` pairs grouped in
//! sections. Every key has a default, unknown keys are rejected, and
//! `parse(serialize(c)) == c` holds for every valid configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bohmstab::dynamics::{ForceVariant, Method};
use bohmstab::relaxation::CoarseGrid;
use bohmstab::{ForceLaw, IntegratorSpec, KernelKind, KernelSpec, Potential, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label copied into provenance sidecars.
    pub scenario: String,
    /// Master seed for every random stream.
    pub seed: u64,
    pub system: SystemSection,
    pub potential: PotentialSection,
    pub model: ModelSection,
    pub kernel: KernelSection,
    pub force: ForceSection,
    pub integrator: IntegratorSection,
    pub trajectory: TrajectorySection,
    pub stability: StabilitySection,
    pub ensemble: EnsembleSection,
    pub relax: RelaxSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            seed: 0,
            system: SystemSection::default(),
            potential: PotentialSection::default(),
            model: ModelSection::default(),
            kernel: KernelSection::default(),
            force: ForceSection::default(),
            integrator: IntegratorSection::default(),
            trajectory: TrajectorySection::default(),
            stability: StabilitySection::default(),
            ensemble: EnsembleSection::default(),
            relax: RelaxSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Harmonic,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    pub stiffness: f64,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Harmonic,
            stiffness: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `coherent`, `superposition:<m>` or `grid:<csv file>`.
    pub spec: String,
    /// Coherent-state displacement.
    pub alpha: f64,
    /// Split-step time step for `grid:` models.
    pub grid_dt: f64,
    /// Split-step steps between stored snapshots.
    pub grid_stride: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            spec: "coherent".into(),
            alpha: 1.0,
            grid_dt: 1e-3,
            grid_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelKind,
    pub mu: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            kind: KernelKind::Gaussian,
            mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawName {
    Modified,
    Bohm,
    Classical,
    Debroglie,
}

impl fmt::Display for LawName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LawName::Modified => "modified",
            LawName::Bohm => "bohm",
            LawName::Classical => "classical",
            LawName::Debroglie => "debroglie",
        };
        f.write_str(s)
    }
}

impl FromStr for LawName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modified" => Ok(LawName::Modified),
            "bohm" => Ok(LawName::Bohm),
            "classical" => Ok(LawName::Classical),
            "debroglie" | "de-broglie" => Ok(LawName::Debroglie),
            other => Err(CliError::Config(format!("unknown force law '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceSection {
    pub law: LawName,
    /// Variant of the closed-form Gaussian force; only the default satisfies
    /// the Liouville equation.
    pub variant: ForceVariant,
}

impl Default for ForceSection {
    fn default() -> Self {
        Self {
            law: LawName::Modified,
            variant: ForceVariant::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Method,
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub min_dt: f64,
    /// Store every `stride`-th step of a trajectory.
    pub stride: usize,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        IntegratorSection::from(IntegratorSpec::default())
    }
}

impl IntegratorSection {
    /// Adaptive defaults used for ensembles.
    pub fn adaptive() -> Self {
        IntegratorSection::from(IntegratorSpec::rk45(1e-8, 1e-10))
    }

    pub fn spec(&self) -> IntegratorSpec {
        IntegratorSpec {
            method: self.method,
            dt: self.dt,
            rtol: self.rtol,
            atol: self.atol,
            min_dt: self.min_dt,
            stride: self.stride,
        }
    }
}

impl From<IntegratorSpec> for IntegratorSection {
    fn from(s: IntegratorSpec) -> Self {
        Self {
            method: s.method,
            dt: s.dt,
            rtol: s.rtol,
            atol: s.atol,
            min_dt: s.min_dt,
            stride: s.stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub x0: f64,
    /// Initial velocity; the initial momentum is `mass * v0`.
    pub v0: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            x0: 1.0,
            v0: 0.25,
            t_start: 0.0,
            t_end: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub laws: Vec<LawName>,
    pub t_end: f64,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            x0: vec![1.0],
            v0: vec![0.25, -0.25],
            laws: vec![LawName::Modified, LawName::Bohm],
            t_end: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n: usize,
    /// `born`, `offset:<Δ>`, `width:<μ'>` or `custom:<csv file>`.
    pub neq: String,
    pub t_start: f64,
    pub t_end: f64,
    /// Largest tolerated fraction of node-censored trajectories.
    pub truncation_limit: f64,
    pub integrator: IntegratorSection,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n: 100_000,
            neq: "born".into(),
            t_start: 0.0,
            t_end: 5.0,
            truncation_limit: bohmstab::ensemble::DEFAULT_TRUNCATION_LIMIT,
            integrator: IntegratorSection::adaptive(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSection {
    pub n: usize,
    pub neq: String,
    /// `xmin,xmax,nx,pmin,pmax,np`.
    pub grid: String,
    /// `t0:t1:intervals`, sampled at `intervals + 1` equally spaced times.
    pub times: String,
    pub resamples: usize,
    pub truncation_limit: f64,
    pub integrator: IntegratorSection,
}

impl Default for RelaxSection {
    fn default() -> Self {
        Self {
            n: 200_000,
            neq: "offset:1".into(),
            grid: "-6,6,30,-6,6,30".into(),
            times: "0:20:20".into(),
            resamples: bohmstab::relaxation::DEFAULT_RESAMPLES,
            truncation_limit: bohmstab::ensemble::DEFAULT_TRUNCATION_LIMIT,
            integrator: IntegratorSection::adaptive(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Replaces the command's default CSV name (relative to `dir`); the
    /// sidecar takes the same stem with a `.json` extension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            file: None,
        }
    }
}

/// Wavefunction model selector.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Coherent,
    Superposition(usize),
    Grid(PathBuf),
}

impl FromStr for ModelSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            CliError::Config(format!(
                "model must be coherent, superposition:<m> or grid:<file>, got '{s}'"
            ))
        };
        match s.split_once(':') {
            None if s == "coherent" => Ok(ModelSpec::Coherent),
            Some(("superposition", m)) => {
                let m: usize = m.parse().map_err(|_| bad())?;
                if m == 0 {
                    return Err(bad());
                }
                Ok(ModelSpec::Superposition(m))
            }
            Some(("grid", path)) if !path.is_empty() => Ok(ModelSpec::Grid(PathBuf::from(path))),
            _ => Err(bad()),
        }
    }
}

/// Initial-state selector of the ensemble and relax commands.
#[derive(Debug, Clone, PartialEq)]
pub enum NeqSpec {
    Born,
    Offset(f64),
    Width(f64),
    Custom(PathBuf),
}

impl FromStr for NeqSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            CliError::Config(format!(
                "neq must be born, offset:<d>, width:<mu> or custom:<file>, got '{s}'"
            ))
        };
        let number = |v: &str| v.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        match s.split_once(':') {
            None if s == "born" => Ok(NeqSpec::Born),
            Some(("offset", d)) => Ok(NeqSpec::Offset(number(d)?)),
            Some(("width", m)) => {
                let m = number(m)?;
                if m <= 0.0 {
                    return Err(bad());
                }
                Ok(NeqSpec::Width(m))
            }
            Some(("custom", path)) if !path.is_empty() => Ok(NeqSpec::Custom(PathBuf::from(path))),
            _ => Err(bad()),
        }
    }
}

pub fn parse_grid(s: &str) -> Result<CoarseGrid> {
    let bad = |why: String| CliError::Config(format!("grid '{s}': {why}"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(bad("expected xmin,xmax,nx,pmin,pmax,np".into()));
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|e| bad(e.to_string()));
    let n = |i: usize| parts[i].parse::<usize>().map_err(|e| bad(e.to_string()));
    let grid = CoarseGrid::new((f(0)?, f(1)?), n(2)?, (f(3)?, f(4)?), n(5)?)?;
    grid.validate_for_experiment()?;
    Ok(grid)
}

/// `t0:t1:k` → `k + 1` equally spaced times from `t0` to `t1`.
pub fn parse_times(s: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| CliError::Config(format!("times '{s}': {why}"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad("expected t0:t1:intervals"));
    }
    let t0: f64 = parts[0].parse().map_err(|_| bad("bad t0"))?;
    let t1: f64 = parts[1].parse().map_err(|_| bad("bad t1"))?;
    let k: usize = parts[2].parse().map_err(|_| bad("bad interval count"))?;
    if !(t0.is_finite() && t1.is_finite()) || k == 0 || !(t1 > t0) {
        return Err(bad("need finite t0 < t1 and at least one interval"));
    }
    Ok((0..=k)
        .map(|i| {
            if i == k {
                t1
            } else {
                t0 + (t1 - t0) * i as f64 / k as f64
            }
        })
        .collect())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|source| CliError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn params(&self) -> Result<SystemParams> {
        Ok(SystemParams::new(self.system.hbar, self.system.mass)?)
    }

    pub fn potential(&self) -> Result<Potential> {
        let v = match self.potential.kind {
            PotentialKind::Harmonic => Potential::harmonic(self.potential.stiffness)?,
            PotentialKind::Free => Potential::Free,
        };
        Ok(v)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model.spec.parse()
    }

    pub fn kernel(&self) -> Result<KernelSpec> {
        Ok(KernelSpec::new(self.kernel.kind, self.kernel.mu)?)
    }

    pub fn law(&self, name: LawName) -> Result<ForceLaw> {
        let law = match name {
            LawName::Modified => ForceLaw::Modified {
                kernel: self.kernel()?,
                variant: self.force.variant,
            },
            LawName::Bohm => ForceLaw::Bohm,
            LawName::Classical => ForceLaw::Classical,
            LawName::Debroglie => ForceLaw::DeBroglie,
        };
        law.validate()?;
        Ok(law)
    }

    /// Checks every field that can be checked without touching the file
    /// system.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.potential()?;
        let model = self.model_spec()?;
        if !self.model.alpha.is_finite() {
            return Err(CliError::Config("model.alpha must be finite".into()));
        }
        if matches!(model, ModelSpec::Grid(_)) && !(self.model.grid_dt > 0.0 && self.model.grid_stride > 0) {
            return Err(CliError::Config(
                "grid models need grid_dt > 0 and grid_stride > 0".into(),
            ));
        }
        self.kernel()?;
        if self.force.law == LawName::Modified && self.kernel.kind == KernelKind::Dirac {
            return Err(CliError::Config(
                "the modified law needs a Gaussian or Lorentzian kernel".into(),
            ));
        }
        self.integrator.spec().validate()?;
        self.ensemble.integrator.spec().validate()?;
        self.relax.integrator.spec().validate()?;
        let tr = &self.trajectory;
        if ![tr.x0, tr.v0, tr.t_start, tr.t_end].iter().all(|v| v.is_finite()) || tr.t_end < tr.t_start {
            return Err(CliError::Config(
                "trajectory needs finite values and t_end >= t_start".into(),
            ));
        }
        let st = &self.stability;
        if st.x0.is_empty() || st.v0.is_empty() || st.laws.is_empty() {
            return Err(CliError::Config("stability needs at least one x0, v0 and law".into()));
        }
        if !(st.t_end >= 0.0 && st.t_end.is_finite()) || st.x0.iter().chain(&st.v0).any(|v| !v.is_finite()) {
            return Err(CliError::Config("stability needs finite x0, v0 and t_end >= 0".into()));
        }
        let en = &self.ensemble;
        en.neq.parse::<NeqSpec>()?;
        if en.n == 0 || !(en.t_end >= en.t_start) || !en.t_start.is_finite() || !en.t_end.is_finite() {
            return Err(CliError::Config(
                "ensemble needs n >= 1 and finite t_end >= t_start".into(),
            ));
        }
        let rx = &self.relax;
        rx.neq.parse::<NeqSpec>()?;
        parse_grid(&rx.grid)?;
        parse_times(&rx.times)?;
        if rx.n < 2 || rx.resamples < 2 {
            return Err(CliError::Config("relax needs n >= 2 and resamples >= 2".into()));
        }
        for limit in [en.truncation_limit, rx.truncation_limit] {
            if !(0.0..=1.0).contains(&limit) {
                return Err(CliError::Config(format!("truncation limit {limit} outside [0, 1]")));
            }
        }
        Ok(())
    }
}
