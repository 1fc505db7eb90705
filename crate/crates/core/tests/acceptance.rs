//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use monitored_chain::covariance::{derive_generator, steady_covariance, CovarianceSteadyOptions};
use monitored_chain::model::{build_hamiltonian, LatticeSpec, MonitorSpec};
use monitored_chain::ode::StepControl;
use monitored_chain::theory::{compare_scaling, diffuson, drude_conductivity, modified_diffusion, TheoryParams};
use monitored_chain::transport::{
    default_gammas, fit_scaling, gamma_sweep, steady_point, sweep_rows, write_csv, DiffusionEstimate, Engine,
    TransportConfig, TransportObservables,
};
use monitored_chain::validation::{conservation, oracle_equivalence, trajectory_agreement, ORACLE_TIMES};
use num_complex::Complex64 as C64;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn gate(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn paper_sweep() -> Vec<DiffusionEstimate> {
    let cfg = TransportConfig::new(LatticeSpec::new(6, 1.0).unwrap(), 0.01, 0.01, Engine::Covariance);
    gamma_sweep(&cfg, &default_gammas())
        .unwrap()
        .into_iter()
        .map(|p| p.outcome.expect("every sweep point converges"))
        .collect()
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let est = paper_sweep();
    let fit = fit_scaling(&est).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let cmp = compare_scaling(&est).map_err(|e| e.to_string())?;
    gate(
        (fit.slope + 1.0).abs() <= 0.05 && fit.r_squared > 0.999 && secs < 10.0,
        format!(
            "slope = {:.4}, R^2 = {:.7}, D*gamma spread = {:.3}, {secs:.2} s",
            fit.slope, fit.r_squared, cmp.prefactor_spread
        ),
    )
}

fn both_regimes() -> Outcome {
    let est = paper_sweep();
    let (small, large): (Vec<_>, Vec<_>) = est.iter().partition(|e| e.gamma < 1.0);
    let lo = fit_scaling(&small).map_err(|e| e.to_string())?;
    let hi = fit_scaling(&large).map_err(|e| e.to_string())?;
    gate(
        (lo.slope + 1.0).abs() <= 0.10 && (hi.slope + 1.0).abs() <= 0.10,
        format!("gamma < 1: slope = {:.4} ({} pts); gamma >= 1: slope = {:.4} ({} pts)", lo.slope, small.len(), hi.slope, large.len()),
    )
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let ctrl = StepControl::new(1e-12, 1e-10);
    let mut dyn_worst = 0.0f64;
    let mut ss_worst = 0.0f64;
    for n in 2..=5 {
        let gap = oracle_equivalence(n, 20, 100 + n as u64, &ORACLE_TIMES, &ctrl).map_err(|e| e.to_string())?;
        dyn_worst = dyn_worst.max(gap.dynamics);
        ss_worst = ss_worst.max(gap.steady);
    }
    let secs = start.elapsed().as_secs_f64();
    gate(
        dyn_worst < 1e-7 && ss_worst < 1e-8 && secs < 120.0,
        format!("max |dC(t)| = {dyn_worst:.2e}, max |dC_ss| = {ss_worst:.2e}, {secs:.1} s"),
    )
}

fn uniformity() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut engine_gap = 0.0f64;
    for n in [2, 3, 4, 5, 6, 12] {
        let lattice = LatticeSpec::new(n, 1.0).unwrap();
        for &g in &default_gammas() {
            for (gs, gd) in [(0.01, 0.01), (0.3, 0.1)] {
                let gen = derive_generator(&build_hamiltonian(&lattice), &MonitorSpec::new(g, gs, gd).unwrap());
                let ss = steady_covariance(&gen, &CovarianceSteadyOptions::default()).map_err(|e| e.to_string())?;
                worst = worst.max(TransportObservables::from_covariance(&ss.cov, 1.0).relative_spread());
                count += 1;
            }
        }
    }
    let cfg = TransportConfig::new(LatticeSpec::new(5, 1.0).unwrap(), 0.01, 0.01, Engine::Exact);
    for &g in &default_gammas() {
        let (obs, e) = steady_point(&cfg, g, Engine::Exact).map_err(|e| e.to_string())?;
        worst = worst.max(obs.relative_spread());
        let c = steady_point(&cfg, g, Engine::Covariance).map_err(|e| e.to_string())?.1;
        engine_gap = engine_gap.max((e.d_value - c.d_value).abs() / c.d_value);
        count += 1;
    }
    gate(
        worst < 1e-6 && engine_gap < 1e-6,
        format!("{count} steady states, max relative spread = {worst:.2e}; exact vs covariance D at N=5: {engine_gap:.2e}"),
    )
}

fn conservation_suite() -> Outcome {
    let ctrl = StepControl::new(1e-12, 1e-10);
    let times = [0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    let mut lines = Vec::new();
    let mut ok = true;
    for n in 2..=5 {
        let r = conservation(n, 40 + n as u64, &times, &ctrl).map_err(|e| e.to_string())?;
        ok &= r.trace < 1e-9 && r.hermiticity < 1e-9 && r.negativity < 1e-7 && r.unitality < 1e-12 && r.number_drift < 1e-9;
        lines.push(format!(
            "N={n}: tr {:.1e} herm {:.1e} neg {:.1e} unital {:.1e} dN {:.1e}",
            r.trace, r.hermiticity, r.negativity, r.unitality, r.number_drift
        ));
    }
    gate(ok, lines.join("; "))
}

const TRAJ_SEED: u64 = 20240601;

fn trajectories() -> Outcome {
    let start = Instant::now();
    let lattice = LatticeSpec::new(4, 1.0).unwrap();
    let monitor = MonitorSpec::new(1.0, 0.01, 0.01).unwrap();
    let a = trajectory_agreement(&lattice, &monitor, 2.0, 5000, TRAJ_SEED).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    gate(
        a.current.z_score() < 3.0 && a.density.z_score() < 3.0 && secs < 300.0,
        format!(
            "J12 {:.5} +- {:.5} vs {:.5} (z = {:.2}); n1 {:.5} +- {:.5} vs {:.5} (z = {:.2}); {secs:.2} s",
            a.current.estimate.mean,
            a.current.estimate.stderr,
            a.current.exact,
            a.current.z_score(),
            a.density.estimate.mean,
            a.density.estimate.stderr,
            a.density.exact,
            a.density.z_score()
        ),
    )
}

fn trajectory_seed_robustness() -> Outcome {
    let lattice = LatticeSpec::new(4, 1.0).unwrap();
    let monitor = MonitorSpec::new(1.0, 0.01, 0.01).unwrap();
    let seeds = 20u64;
    let mut pass = 0;
    for s in 0..seeds {
        let a = trajectory_agreement(&lattice, &monitor, 2.0, 5000, s).map_err(|e| e.to_string())?;
        if a.current.z_score() < 3.0 && a.density.z_score() < 3.0 {
            pass += 1;
        }
    }
    let frac = pass as f64 / seeds as f64;
    gate(frac >= 0.95, format!("{pass}/{seeds} master seeds with both z < 3"))
}

fn zeno() -> Outcome {
    let est = paper_sweep();
    let decreasing = est.windows(2).all(|w| w[1].d_value < w[0].d_value);
    let min_j = est.iter().map(|e| e.j12).fold(f64::INFINITY, f64::min);
    gate(
        decreasing && min_j > 0.0,
        format!(
            "D = [{}], min J12 = {min_j:.3e}",
            est.iter().map(|e| format!("{:.4}", e.d_value)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn theory() -> Outcome {
    let p = |v_f, nu, dim, gamma| TheoryParams { v_f, nu, dim, gamma };
    let mut failures = Vec::new();
    // v_F^2 / (gamma d) by hand
    for (v, g, d, expect) in [(1.0, 1.0, 1, 1.0), (2.0, 1.0, 2, 2.0), (3.0, 0.5, 3, 6.0)] {
        let got = modified_diffusion(&p(v, 1.0, d, g)).unwrap();
        if !close(got, expect) {
            failures.push(format!("D({v},{g},{d}) = {got}"));
        }
    }
    if !close(modified_diffusion(&p(1.3, 1.0, 2, 0.7)).unwrap() / modified_diffusion(&p(1.3, 1.0, 2, 1.4)).unwrap(), 2.0) {
        failures.push("D(gamma)/D(2 gamma) != 2".into());
    }
    if !close(drude_conductivity(&p(3.0, 0.25, 3, 0.5)).unwrap(), 1.5) {
        failures.push("sigma".into());
    }
    if !close(drude_conductivity(&p(1.0, 2.0, 1, 3.0)).unwrap() / drude_conductivity(&p(1.0, 2.0, 1, 6.0)).unwrap(), 2.0) {
        failures.push("sigma ratio".into());
    }
    // D = 4, D' = 2, pi nu = 1: -1 / (1 -+ 0.75 i) = -0.64 -+ 0.48 i
    let z = diffuson(0.5, 0.75, &p(2.0, 1.0 / std::f64::consts::PI, 1, 1.0)).unwrap();
    if (z.value_12 - C64::new(-0.64, -0.48)).norm() > 1e-12 || (z.value_21 - C64::new(-0.64, 0.48)).norm() > 1e-12 {
        failures.push(format!("diffuson values {:?}", z));
    }
    let mut worst_conj = 0.0f64;
    for k in 0..50 {
        let x = k as f64;
        let q = p(0.3 + 0.1 * x, 0.2 + 0.05 * x, 1 + k % 3, 0.1 + 0.2 * x);
        let z = diffuson(0.01 * x * x, (x - 25.0) * 0.3 + 0.01, &q).unwrap();
        worst_conj = worst_conj.max((z.value_21 - z.value_12.conj()).norm() / z.value_12.norm());
    }
    if worst_conj > 1e-12 {
        failures.push(format!("conjugation {worst_conj:e}"));
    }
    // simple pole: |value| * s is constant along the ray (s a, s b)
    let q = p(1.0, 1.0, 1, 1.0);
    let base = diffuson(0.4, 0.3, &q).unwrap().value_12.norm();
    let mut worst_pole = 0.0f64;
    for k in 1..=40 {
        let s = 2f64.powi(-k);
        worst_pole = worst_pole.max((diffuson(0.4 * s, 0.3 * s, &q).unwrap().value_12.norm() * s - base).abs() / base);
    }
    if worst_pole > 1e-12 {
        failures.push(format!("pole scaling {worst_pole:e}"));
    }
    if diffuson(0.0, 0.0, &q).is_ok() {
        failures.push("pole not rejected".into());
    }
    gate(failures.is_empty(), if failures.is_empty() { format!("conjugation {worst_conj:.1e}, pole scaling {worst_pole:.1e}") } else { failures.join("; ") })
}

fn cli(args: &[&str], threads: Option<&str>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_monitored-chain"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("MONITORED_CHAIN_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    // library path: CSV and report of the paper sweep
    let render = || {
        let cfg = TransportConfig::new(LatticeSpec::new(6, 1.0).unwrap(), 0.01, 0.01, Engine::Covariance);
        let pts = gamma_sweep(&cfg, &default_gammas()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &sweep_rows(&pts), false).unwrap();
        let est: Vec<_> = pts.iter().map(|p| *p.outcome.as_ref().unwrap()).collect();
        buf.extend(fit_scaling(&est).unwrap().report().bytes());
        buf.extend(compare_scaling(&est).unwrap().report().bytes());
        buf
    };
    let lib_same = render() == render();

    // binary path, serial against parallel
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sweeps = Vec::new();
    for (k, threads) in [Some("1"), None, Some("3")].into_iter().enumerate() {
        let csv = dir.path().join(format!("s{k}.csv"));
        let report = dir.path().join(format!("s{k}.txt"));
        cli(&["sweep", "--csv", csv.to_str().unwrap(), "--report", report.to_str().unwrap()], threads)?;
        sweeps.push((std::fs::read(&csv).unwrap(), std::fs::read(&report).unwrap()));
    }
    let sweep_same = sweeps.windows(2).all(|w| w[0] == w[1]);
    let seed = TRAJ_SEED.to_string();
    let traj_args = ["trajectories", "--n-sites", "4", "--t-final", "2", "--count", "5000", "--seed", seed.as_str()];
    let t1 = cli(&traj_args, Some("1"))?;
    let t2 = cli(&traj_args, None)?;
    let t3 = cli(&traj_args, None)?;
    let traj_same = t1 == t2 && t2 == t3;
    gate(
        lib_same && sweep_same && traj_same,
        format!(
            "library sweep identical: {lib_same}; CLI sweep CSV+report identical over 1/default/3 threads: {sweep_same}; trajectory report identical serial/parallel: {traj_same}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1", "1/gamma scaling", scaling),
        ("2", "both-regime scaling", both_regimes),
        ("3", "oracle equivalence", oracle),
        ("4", "steady-current uniformity", uniformity),
        ("5", "conservation and positivity", conservation_suite),
        ("6", "trajectory/unconditional agreement", trajectories),
        ("6b", "trajectory agreement across seeds", trajectory_seed_robustness),
        ("7", "Zeno monotonicity and no localization", zeno),
        ("8", "theory formulas", theory),
        ("9", "determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id} ({name}): PASS [{secs:.1} s] {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1} s] {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
