//! Command-line front end. `run` parses arguments, executes one subcommand and
//! returns the process exit code.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{is_config_error, EngineChoice, InitialChoice, RunConfig, SolverChoice};
use crate::error::Error;
use crate::exact::{assemble_liouvillian, evolve, expectation, steady_state, DensityMatrix, SteadyOptions};
use crate::fermion::FermionOps;
use crate::model::{build_hamiltonian, build_jump_set};
use crate::plot::scaling_svg;
use crate::theory::compare_scaling;
use crate::trajectories::{run_ensemble, EnsembleConfig, InitialState, JumpProcess};
use crate::transport::{
    default_gammas, drive_sensitivity, fit_scaling, gamma_sweep, read_csv, steady_point, sweep_rows, write_csv, CsvRow,
    DiffusionEstimate, SweepPoint,
};
use crate::validation::{format_checks, run_validation, ValidationOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "MONITORED_CHAIN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "monitored-chain", version, about = "Transport in a continuously monitored free-fermion chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady state at one gamma: currents, densities and D.
    Steady(RunArgs),
    /// D over a list of gammas, with the log-log fit.
    Sweep(RunArgs),
    /// Fit an existing sweep CSV.
    Fit(FitArgs),
    /// Cross-engine and invariant checks.
    Validate(ValidateArgs),
    /// Quantum-jump averages against the master equation.
    Trajectories(RunArgs),
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_sites: Option<usize>,
    #[arg(long)]
    pub hopping: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated gamma list for sweeps.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma_s: Option<f64>,
    #[arg(long)]
    pub gamma_d: Option<f64>,
    /// Repeat to run several engines side by side.
    #[arg(long, value_enum)]
    pub engine: Vec<EngineChoice>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverChoice>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Number of trajectories.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub initial: Option<InitialChoice>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep CSV to fit.
    pub input: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_sites: Option<usize>,
    /// Random parameter draws per suite.
    #[arg(long, default_value_t = 5)]
    pub draws: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if is_config_error(&e) { EXIT_CONFIG } else { EXIT_SOLVER };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure { code: EXIT_SOLVER, message: format!("cannot write {}: {e}", path.display()) }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.n_sites {
            cfg.lattice.n_sites = v;
        }
        if let Some(v) = self.hopping {
            cfg.lattice.hopping = v;
        }
        if let Some(v) = self.gamma {
            cfg.monitor.gamma = v;
        }
        if let Some(v) = &self.gammas {
            cfg.monitor.gamma_list = Some(v.clone());
        }
        if let Some(v) = self.gamma_s {
            cfg.monitor.gamma_s = v;
        }
        if let Some(v) = self.gamma_d {
            cfg.monitor.gamma_d = v;
        }
        if !self.engine.is_empty() {
            cfg.engines = self.engine.clone();
        }
        if let Some(v) = self.solver {
            cfg.solver = v;
        }
        if let Some(v) = self.atol {
            cfg.tolerances.atol = v;
        }
        if let Some(v) = self.rtol {
            cfg.tolerances.rtol = v;
        }
        if let Some(v) = self.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = self.count {
            cfg.trajectories.count = v;
        }
        if let Some(v) = self.seed {
            cfg.trajectories.master_seed = v;
        }
        if let Some(v) = self.initial {
            cfg.trajectories.initial = v;
        }
        if self.csv.is_some() {
            cfg.output.csv = self.csv.clone();
        }
        if self.report.is_some() {
            cfg.output.report = self.report.clone();
        }
        if self.svg.is_some() {
            cfg.output.svg = self.svg.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Write `text` to `path`, or to `out` when no path is given.
fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| Failure { code: EXIT_SOLVER, message: e.to_string() }),
    }
}

fn csv_text(rows: &[CsvRow<'_>], with_rel_diff: bool) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows, with_rel_diff).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn cmd_steady(args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let gamma = cfg.monitor.gamma;
    let mut summary = String::new();
    let mut estimates = Vec::new();
    for &engine in &cfg.engines {
        let tc = cfg.transport(engine)?;
        let (obs, est) = steady_point(&tc, gamma, tc.engine)?;
        writeln!(summary, "engine = {}", est.engine).unwrap();
        writeln!(summary, "n_sites = {}", est.n_sites).unwrap();
        writeln!(summary, "gamma = {gamma}").unwrap();
        writeln!(summary, "D = {}", est.d_value).unwrap();
        writeln!(summary, "J12 = {}", est.j12).unwrap();
        writeln!(summary, "residual = {}", est.residual).unwrap();
        writeln!(summary, "uniformity_spread = {}", est.uniformity_spread).unwrap();
        writeln!(summary, "bond_currents = {}", join(&obs.bond_currents)).unwrap();
        writeln!(summary, "densities = {}", join(&obs.densities)).unwrap();
        summary.push('\n');
        estimates.push(est);
    }
    let rows: Vec<CsvRow<'_>> = estimates.iter().map(|e| CsvRow { gamma, outcome: Ok(e), rel_diff: None }).collect();
    emit(None, &summary, out)?;
    emit(cfg.output.csv.as_deref(), &csv_text(&rows, false), out)
}

fn fit_outputs(estimates: &[DiffusionEstimate], report_path: Option<&Path>, svg_path: Option<&Path>, extra: &str, out: &mut dyn Write) -> Result<(), Failure> {
    let fit = fit_scaling(estimates)?;
    let cmp = compare_scaling(estimates)?;
    let mut report = fit.report();
    report.push_str(&cmp.report());
    report.push_str(extra);
    emit(report_path, &report, out)?;
    if let Some(p) = svg_path {
        emit(Some(p), &scaling_svg(&fit), out)?;
    }
    Ok(())
}

fn cmd_sweep(args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let gammas = cfg.monitor.gamma_list.clone().unwrap_or_else(default_gammas);
    let mut runs: Vec<(EngineChoice, Vec<SweepPoint>)> = Vec::new();
    for &engine in &cfg.engines {
        runs.push((engine, gamma_sweep(&cfg.transport(engine)?, &gammas)?));
    }
    let both = runs.len() > 1;
    let rel_diff = |k: usize| -> Option<f64> {
        let ds: Vec<f64> = runs.iter().filter_map(|(_, pts)| pts[k].outcome.as_ref().ok().map(|e| e.d_value)).collect();
        (ds.len() == runs.len()).then(|| {
            let max = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = ds.iter().copied().fold(f64::INFINITY, f64::min);
            (max - min) / min.abs()
        })
    };
    let mut rows = Vec::new();
    for (_, pts) in &runs {
        for (k, mut row) in sweep_rows(pts).into_iter().enumerate() {
            if both {
                row.rel_diff = rel_diff(k);
            }
            rows.push(row);
        }
    }
    emit(cfg.output.csv.as_deref(), &csv_text(&rows, both), out)?;

    // the fit uses the covariance engine when it ran, else the first engine
    let (fit_engine, pts) = runs.iter().find(|(e, _)| *e == EngineChoice::Covariance).unwrap_or(&runs[0]);
    let estimates: Vec<DiffusionEstimate> = pts.iter().filter_map(|p| p.outcome.as_ref().ok().copied()).collect();
    let mut extra = String::new();
    writeln!(extra, "fit_engine = {}", cfg.transport(*fit_engine)?.engine).unwrap();
    if both {
        let worst = (0..gammas.len()).filter_map(rel_diff).fold(0.0, f64::max);
        writeln!(extra, "max_engine_rel_diff = {worst}").unwrap();
    }
    if let Some(&g) = estimates.get(estimates.len() / 2).map(|e| &e.gamma) {
        if let Ok(s) = drive_sensitivity(&cfg.transport(*fit_engine)?, g) {
            writeln!(extra, "drive_sensitivity_gamma = {g}").unwrap();
            writeln!(extra, "drive_sensitivity = {}", s.relative_change).unwrap();
        }
    }
    fit_outputs(&estimates, cfg.output.report.as_deref(), cfg.output.svg.as_deref(), &extra, out)
}

fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let file = std::fs::File::open(&args.input)
        .map_err(|e| Failure { code: EXIT_CONFIG, message: format!("cannot read {}: {e}", args.input.display()) })?;
    let estimates = read_csv(io::BufReader::new(file))?;
    fit_outputs(&estimates, args.report.as_deref(), args.svg.as_deref(), "", out)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let run = RunArgs { config: args.config.clone(), n_sites: args.n_sites, seed: args.seed, count: args.count, ..RunArgs::default() };
    let cfg = run.resolve()?;
    let mut opts = ValidationOptions::new(cfg.lattice.n_sites);
    opts.draws = args.draws;
    opts.seed = cfg.trajectories.master_seed.wrapping_add(1);
    opts.master_seed = cfg.trajectories.master_seed;
    opts.trajectories = args.count.unwrap_or(1000);
    let checks = run_validation(&opts)?;
    emit(None, &format_checks(&checks), out)?;
    if checks.iter().all(|c| c.passed()) {
        Ok(())
    } else {
        Err(Failure { code: EXIT_VALIDATION, message: "validation failed".into() })
    }
}

fn cmd_trajectories(args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let lattice = cfg.lattice_spec()?;
    let monitor = crate::model::MonitorSpec::new(cfg.monitor.gamma, cfg.monitor.gamma_s, cfg.monitor.gamma_d)?;
    let ops = FermionOps::new(lattice.n_sites)?;
    let h = build_hamiltonian(&lattice);
    let jumps = build_jump_set(&lattice, &monitor);
    let l = assemble_liouvillian(&h, &jumps, &ops)?;
    let (initial, reference) = match cfg.trajectories.initial {
        InitialChoice::Steady => {
            let ss = steady_state(&l, &SteadyOptions::default())?;
            (InitialState::from_density(&ss.state), ss.state)
        }
        InitialChoice::MaximallyMixed => {
            let rho0 = DensityMatrix::maximally_mixed(lattice.n_sites);
            let rho_t = evolve(&rho0, &l, cfg.t_final, &cfg.step_control())?;
            (InitialState::MaximallyMixed, rho_t)
        }
    };
    let ens = EnsembleConfig { process: JumpProcess::new(&h, &jumps, &ops, cfg.t_final.min(1.0))?, initial, t_final: cfg.t_final };
    let observables = [("J12", ops.bond_current(0, lattice.hopping)), ("n1", ops.number(0))];
    let ops_only: Vec<_> = observables.iter().map(|(_, o)| o.clone()).collect();
    let res = run_ensemble(&ens, &ops_only, cfg.trajectories.count, cfg.trajectories.master_seed)?;
    let mut report = String::new();
    writeln!(report, "n_trajectories = {}", cfg.trajectories.count).unwrap();
    writeln!(report, "master_seed = {}", cfg.trajectories.master_seed).unwrap();
    writeln!(report, "t_final = {}", cfg.t_final).unwrap();
    for ((name, o), est) in observables.iter().zip(&res.observables) {
        let exact = expectation(&reference, o)?;
        writeln!(report, "{name}_mean = {}", est.mean).unwrap();
        writeln!(report, "{name}_stderr = {}", est.stderr).unwrap();
        writeln!(report, "{name}_lindblad = {exact}").unwrap();
        writeln!(report, "{name}_z = {}", (est.mean - exact).abs() / est.stderr).unwrap();
    }
    writeln!(report, "jumps_mean = {}", res.jump_count.mean).unwrap();
    emit(cfg.output.report.as_deref(), &report, out)
}

/// Parse `args` and run. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Steady(a) => cmd_steady(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Trajectories(a) => cmd_trajectories(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Size the global thread pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<(), String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(()),
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            if n == 0 {
                return Err(format!("{THREADS_ENV} must be positive"));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("monitored-chain").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn steady_defaults() {
        let (code, out, _) = call(&["steady"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("D = 2.39"));
        assert_eq!(out.lines().filter(|l| l.ends_with(",ok")).count(), 1);
    }

    #[test]
    fn undriven_steady_is_a_solver_error() {
        let (code, _, err) = call(&["steady", "--gamma-s", "0", "--gamma-d", "0"]);
        assert_eq!(code, EXIT_SOLVER);
        assert!(err.contains("not unique"), "{err}");
    }

    #[test]
    fn config_errors() {
        let (code, _, err) = call(&["steady", "--n-sites", "1"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("lattice.n_sites"));
        assert_eq!(call(&["steady", "--engine", "trajectories"]).0, EXIT_CONFIG);
        assert_eq!(call(&["bogus"]).0, EXIT_CONFIG);
        assert_eq!(call(&["validate", "--n-sites", "13"]).0, EXIT_CONFIG);
    }

    #[test]
    fn three_point_sweep_refuses_fit() {
        let (code, out, err) = call(&["sweep", "--n-sites", "4", "--gammas", "0.5,1,2"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("fit refused"));
        assert_eq!(out.lines().filter(|l| l.ends_with(",ok")).count(), 3);
    }
}
