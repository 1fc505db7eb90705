//! Run configuration: a TOML file with `schema_version = 1`, overridden by
//! command-line flags.
//!
//! ```toml
//! schema_version = 1
//! engine = "covariance"          # or "exact", "trajectories", or a list
//! solver = "linear-solve"        # "null-space", "time-evolve"
//! t_final = 10.0
//!
//! [lattice]
//! n_sites = 6
//! hopping = 1.0
//!
//! [monitor]
//! gamma = 1.0
//! gamma_list = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
//! gamma_s = 0.01
//! gamma_d = 0.01
//!
//! [tolerances]
//! atol = 1e-10
//! rtol = 1e-8
//! uniformity = 1e-6
//!
//! [trajectories]
//! count = 5000
//! master_seed = 7
//! initial = "steady"             # or "maximally-mixed"
//!
//! [output]
//! csv = "sweep.csv"
//! report = "fit.txt"
//! svg = "fit.svg"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::covariance::{CovarianceSteadyMethod, CovarianceSteadyOptions};
use crate::error::{invalid, Error, Result};
use crate::exact::{SteadyMethod, SteadyOptions};
use crate::model::LatticeSpec;
use crate::ode::StepControl;
use crate::transport::{Engine, TransportConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    Exact,
    Covariance,
    Trajectories,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverChoice {
    NullSpace,
    TimeEvolve,
    #[default]
    LinearSolve,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitialChoice {
    /// Eigenstates of the exact steady state, sampled by weight.
    #[default]
    Steady,
    MaximallyMixed,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(EngineChoice),
    Many(Vec<EngineChoice>),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub n_sites: usize,
    pub hopping: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { n_sites: 6, hopping: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSection {
    pub gamma: f64,
    pub gamma_list: Option<Vec<f64>>,
    pub gamma_s: f64,
    pub gamma_d: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self { gamma: 1.0, gamma_list: None, gamma_s: 0.01, gamma_d: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
    pub uniformity: f64,
    pub degeneracy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { atol: 1e-10, rtol: 1e-8, uniformity: crate::transport::DEFAULT_UNIFORMITY_TOL, degeneracy: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub count: usize,
    pub master_seed: u64,
    pub initial: InitialChoice,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self { count: 5000, master_seed: 0, initial: InitialChoice::Steady }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default)]
    lattice: LatticeSection,
    #[serde(default)]
    monitor: MonitorSection,
    engine: Option<OneOrMany>,
    #[serde(default)]
    solver: SolverChoice,
    #[serde(default)]
    tolerances: Tolerances,
    t_final: Option<f64>,
    #[serde(default)]
    trajectories: TrajectorySection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub monitor: MonitorSection,
    pub engines: Vec<EngineChoice>,
    pub solver: SolverChoice,
    pub tolerances: Tolerances,
    pub t_final: f64,
    pub trajectories: TrajectorySection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeSection::default(),
            monitor: MonitorSection::default(),
            engines: vec![EngineChoice::Covariance],
            solver: SolverChoice::default(),
            tolerances: Tolerances::default(),
            t_final: 10.0,
            trajectories: TrajectorySection::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", raw.schema_version)));
        }
        let defaults = Self::default();
        Ok(Self {
            lattice: raw.lattice,
            monitor: raw.monitor,
            engines: match raw.engine {
                None => defaults.engines,
                Some(OneOrMany::One(e)) => vec![e],
                Some(OneOrMany::Many(v)) => v,
            },
            solver: raw.solver,
            tolerances: raw.tolerances,
            t_final: raw.t_final.unwrap_or(defaults.t_final),
            trajectories: raw.trajectories,
            output: raw.output,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every field; the error names the offending one.
    pub fn validate(&self) -> Result<()> {
        if self.lattice.n_sites < 2 {
            return Err(invalid("lattice.n_sites", format!("must be at least 2, got {}", self.lattice.n_sites)));
        }
        positive("lattice.hopping", self.lattice.hopping)?;
        non_negative("monitor.gamma", self.monitor.gamma)?;
        if let Some(list) = &self.monitor.gamma_list {
            for g in list {
                positive("monitor.gamma_list", *g)?;
            }
        }
        non_negative("monitor.gamma_s", self.monitor.gamma_s)?;
        non_negative("monitor.gamma_d", self.monitor.gamma_d)?;
        if self.engines.is_empty() {
            return Err(invalid("engine", "at least one engine is required"));
        }
        positive("tolerances.atol", self.tolerances.atol)?;
        positive("tolerances.rtol", self.tolerances.rtol)?;
        positive("tolerances.uniformity", self.tolerances.uniformity)?;
        positive("tolerances.degeneracy", self.tolerances.degeneracy)?;
        positive("t_final", self.t_final)?;
        if self.trajectories.count < 2 {
            return Err(invalid("trajectories.count", "must be at least 2"));
        }
        Ok(())
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.lattice.n_sites, self.lattice.hopping)
    }

    pub fn step_control(&self) -> StepControl {
        StepControl::new(self.tolerances.atol, self.tolerances.rtol)
    }

    /// Steady-state transport settings for one engine.
    pub fn transport(&self, engine: EngineChoice) -> Result<TransportConfig> {
        let engine = match engine {
            EngineChoice::Exact => Engine::Exact,
            EngineChoice::Covariance => Engine::Covariance,
            EngineChoice::Trajectories => {
                return Err(invalid("engine", "trajectories have no steady solver; use the `trajectories` command"))
            }
        };
        let mut cfg = TransportConfig::new(self.lattice_spec()?, self.monitor.gamma_s, self.monitor.gamma_d, engine);
        cfg.uniformity_tol = self.tolerances.uniformity;
        cfg.covariance = CovarianceSteadyOptions {
            method: match self.solver {
                SolverChoice::LinearSolve => CovarianceSteadyMethod::LinearSolve,
                SolverChoice::NullSpace => CovarianceSteadyMethod::NullSpace,
                SolverChoice::TimeEvolve => CovarianceSteadyMethod::TimeEvolve,
            },
            degeneracy_tol: self.tolerances.degeneracy,
            ctrl: self.step_control(),
            ..CovarianceSteadyOptions::default()
        };
        cfg.exact = SteadyOptions {
            method: match self.solver {
                SolverChoice::LinearSolve => SteadyMethod::LinearSolve,
                SolverChoice::NullSpace => SteadyMethod::NullSpace,
                SolverChoice::TimeEvolve => SteadyMethod::TimeEvolve,
            },
            degeneracy_tol: self.tolerances.degeneracy,
            ctrl: self.step_control(),
            ..SteadyOptions::default()
        };
        Ok(cfg)
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and positive, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and non-negative, got {v}")))
    }
}

/// `true` for errors caused by the configuration rather than the solvers.
pub fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter { .. } | Error::SizeLimit { .. } | Error::InsufficientPoints { .. })
}
