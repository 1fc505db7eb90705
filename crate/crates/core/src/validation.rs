//! Cross-engine validation suites, each reduced to a measured violation and a
//! threshold.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covariance::{
    covariance_from_density, derive_generator, evolve_covariance_sampled, random_density, steady_covariance,
    validate_generator, CovarianceSteadyOptions, HermitianMode,
};
use crate::error::Result;
use crate::exact::{assemble_liouvillian, evolve_sampled, expectation, steady_state, DensityMatrix, SteadyOptions};
use crate::fermion::{check_exact_cap, FermionOps};
use crate::linalg::MaxAbs;
use crate::model::{build_hamiltonian, build_jump_set, LatticeSpec, MonitorSpec};
use crate::ode::StepControl;
use crate::trajectories::{run_ensemble, EnsembleConfig, EnsembleEstimate, InitialState, JumpProcess};
use crate::transport::continuity_check;

pub const ORACLE_TIMES: [f64; 3] = [0.1, 1.0, 10.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), measured, threshold }
    }

    pub fn passed(&self) -> bool {
        self.measured < self.threshold
    }
}

pub fn format_checks(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let tag = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {} measured = {:e} threshold = {:e}", c.name, c.measured, c.threshold).unwrap();
    }
    out
}

fn random_model(n_sites: usize, rng: &mut ChaCha8Rng) -> Result<(LatticeSpec, MonitorSpec)> {
    let lattice = LatticeSpec::new(n_sites, rng.gen_range(0.2..2.0))?;
    let monitor = MonitorSpec::new(rng.gen_range(0.0..4.0), rng.gen_range(0.01..1.0), rng.gen_range(0.01..1.0))?;
    Ok((lattice, monitor))
}

/// Worst entrywise gap between the engines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGap {
    pub dynamics: f64,
    pub steady: f64,
}

/// Random hopping, dephasing and drive with a random initial state; both
/// engines evolved to each of `times` and solved for the steady state.
pub fn oracle_equivalence(n_sites: usize, draws: usize, seed: u64, times: &[f64], ctrl: &StepControl) -> Result<OracleGap> {
    let ops = FermionOps::new(n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = OracleGap { dynamics: 0.0, steady: 0.0 };
    for _ in 0..draws {
        let (lattice, monitor) = random_model(n_sites, &mut rng)?;
        let h = build_hamiltonian(&lattice);
        let l = assemble_liouvillian(&h, &build_jump_set(&lattice, &monitor), &ops)?;
        let gen = derive_generator(&h, &monitor);
        let rho0 = random_density(n_sites, &mut rng);
        let exact = evolve_sampled(&rho0, &l, times, ctrl)?;
        let cov = evolve_covariance_sampled(&covariance_from_density(&rho0, &ops)?, &gen, times, ctrl, HermitianMode::UpperTriangle)?;
        for (e, c) in exact.iter().zip(&cov) {
            gap.dynamics = gap.dynamics.max((covariance_from_density(e, &ops)?.c - &c.c).max_abs());
        }
        let ss = steady_state(&l, &SteadyOptions::default())?;
        let css = steady_covariance(&gen, &CovarianceSteadyOptions::default())?;
        gap.steady = gap.steady.max((covariance_from_density(&ss.state, &ops)?.c - &css.cov.c).max_abs());
    }
    Ok(gap)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservationReport {
    pub trace: f64,
    pub hermiticity: f64,
    /// Most negative eigenvalue seen (0 if none).
    pub negativity: f64,
    /// `max |L vec(I / 2^N)|` without drive.
    pub unitality: f64,
    /// Drift of `<N_total>` without drive.
    pub number_drift: f64,
}

/// Invariants sampled along driven and undriven exact integrations.
pub fn conservation(n_sites: usize, seed: u64, times: &[f64], ctrl: &StepControl) -> Result<ConservationReport> {
    let ops = FermionOps::new(n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ConservationReport { trace: 0.0, hermiticity: 0.0, negativity: 0.0, unitality: 0.0, number_drift: 0.0 };
    let (lattice, driven) = random_model(n_sites, &mut rng)?;
    let undriven = MonitorSpec { gamma_s: 0.0, gamma_d: 0.0, ..driven };
    let h = build_hamiltonian(&lattice);
    let total = ops.total_number();
    for monitor in [driven, undriven] {
        let l = assemble_liouvillian(&h, &build_jump_set(&lattice, &monitor), &ops)?;
        let rho0 = random_density(n_sites, &mut rng);
        let n0 = expectation(&rho0, &total)?;
        for state in evolve_sampled(&rho0, &l, times, ctrl)? {
            let d = state.diagnostics();
            rep.trace = rep.trace.max(d.trace_error);
            rep.hermiticity = rep.hermiticity.max(d.hermiticity_error);
            rep.negativity = rep.negativity.max(-d.min_eigenvalue);
            if !monitor.is_driven() {
                rep.number_drift = rep.number_drift.max((expectation(&state, &total)? - n0).abs());
            }
        }
        if !monitor.is_driven() {
            rep.unitality = l.apply(&DensityMatrix::maximally_mixed(n_sites).rho).max_abs();
        }
    }
    Ok(rep)
}

/// Worst continuity-equation violation of the covariance generator on random states.
pub fn continuity(n_sites: usize, draws: usize, seed: u64) -> Result<f64> {
    let ops = FermionOps::new(n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let (lattice, monitor) = random_model(n_sites, &mut rng)?;
        let gen = derive_generator(&build_hamiltonian(&lattice), &monitor);
        let c = covariance_from_density(&random_density(n_sites, &mut rng), &ops)?;
        worst = worst.max(continuity_check(&c, &gen));
    }
    Ok(worst)
}

/// Trajectory ensemble against the Lindblad value of one observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub estimate: EnsembleEstimate,
    pub exact: f64,
}

impl Agreement {
    pub fn z_score(&self) -> f64 {
        (self.estimate.mean - self.exact).abs() / self.estimate.stderr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryAgreement {
    pub current: Agreement,
    pub density: Agreement,
}

/// Trajectories started from the eigen-ensemble of the exact steady state and
/// run to `t_final`; `<J_{1,2}>` and `<n_1>` compared with the steady values.
pub fn trajectory_agreement(
    lattice: &LatticeSpec,
    monitor: &MonitorSpec,
    t_final: f64,
    m: usize,
    master_seed: u64,
) -> Result<TrajectoryAgreement> {
    check_exact_cap(lattice.n_sites)?;
    let ops = FermionOps::new(lattice.n_sites)?;
    let h = build_hamiltonian(lattice);
    let jumps = build_jump_set(lattice, monitor);
    let ss = steady_state(&assemble_liouvillian(&h, &jumps, &ops)?, &SteadyOptions::default())?;
    let observables = [ops.bond_current(0, lattice.hopping), ops.number(0)];
    let cfg = EnsembleConfig {
        process: JumpProcess::new(&h, &jumps, &ops, t_final.min(1.0))?,
        initial: InitialState::from_density(&ss.state),
        t_final,
    };
    let res = run_ensemble(&cfg, &observables, m, master_seed)?;
    Ok(TrajectoryAgreement {
        current: Agreement { estimate: res.observables[0], exact: expectation(&ss.state, &observables[0])? },
        density: Agreement { estimate: res.observables[1], exact: expectation(&ss.state, &observables[1])? },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOptions {
    pub n_sites: usize,
    pub draws: usize,
    pub seed: u64,
    pub ctrl: StepControl,
    pub trajectory_monitor: MonitorSpec,
    pub trajectory_t_final: f64,
    pub trajectories: usize,
    pub master_seed: u64,
}

impl ValidationOptions {
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            draws: 5,
            seed: 1,
            ctrl: StepControl::new(1e-12, 1e-10),
            trajectory_monitor: MonitorSpec { gamma: 1.0, gamma_s: 0.01, gamma_d: 0.01 },
            trajectory_t_final: 2.0,
            trajectories: 1000,
            master_seed: 0,
        }
    }
}

/// Every suite at one chain length.
pub fn run_validation(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let n = opts.n_sites;
    check_exact_cap(n)?;
    let mut checks = Vec::new();
    checks.push(Check::new("generator_finite_difference", validate_generator(n, opts.draws, opts.seed)?, 1e-6));
    let gap = oracle_equivalence(n, opts.draws, opts.seed, &ORACLE_TIMES, &opts.ctrl)?;
    checks.push(Check::new("oracle_dynamics", gap.dynamics, 1e-7));
    checks.push(Check::new("oracle_steady_state", gap.steady, 1e-8));
    checks.push(Check::new("continuity", continuity(n, opts.draws, opts.seed)?, 1e-10));
    let cons = conservation(n, opts.seed, &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0], &opts.ctrl)?;
    checks.push(Check::new("trace", cons.trace, 1e-9));
    checks.push(Check::new("hermiticity", cons.hermiticity, 1e-9));
    checks.push(Check::new("negativity", cons.negativity, 1e-7));
    checks.push(Check::new("unitality", cons.unitality, 1e-12));
    checks.push(Check::new("particle_number", cons.number_drift, 1e-9));
    let lattice = LatticeSpec::new(n, 1.0)?;
    let agree = trajectory_agreement(&lattice, &opts.trajectory_monitor, opts.trajectory_t_final, opts.trajectories, opts.master_seed)?;
    checks.push(Check::new("trajectory_current_z", agree.current.z_score(), 3.0));
    checks.push(Check::new("trajectory_density_z", agree.density.z_score(), 3.0));
    Ok(checks)
}
