//! Closed equations of motion for the two-point function `C_jk = <c_j^dag c_k>`.
//!
//! For `H = sum h_jk c_j^dag c_k`, dephasing with `n_i` at rate `gamma` on every
//! site, pump `c_0^dag` at rate `gamma_s` and loss `c_{N-1}` at rate `gamma_d`:
//!
//! ```text
//! dC/dt = i [h^T, C] - gamma * offdiag(C) - (P C + C P) / 2 + gamma_s E_00
//! P     = gamma_s E_00 + gamma_d E_{N-1,N-1}
//! ```
//!
//! [`finite_difference_check`] validates these coefficients against the
//! exact Liouvillian.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, DensityMatrix, Superoperator};
use crate::fermion::FermionOps;
use crate::linalg::MaxAbs;
use crate::model::{MonitorSpec, QuadraticHamiltonian};
use crate::ode::{Dopri5, StepControl};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    pub c: DMatrix<C64>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceDiagnostics {
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl CovarianceMatrix {
    pub fn new(c: DMatrix<C64>) -> Result<Self> {
        if !c.is_square() {
            return Err(crate::error::invalid("c", "must be square"));
        }
        let cov = Self { c, time: 0.0 };
        cov.check(1e-10, 1e-8)?;
        Ok(cov)
    }

    /// `C = I / 2`, the two-point function of the maximally mixed state.
    pub fn maximally_mixed(n_sites: usize) -> Self {
        Self { c: DMatrix::identity(n_sites, n_sites) * C64::new(0.5, 0.0), time: 0.0 }
    }

    pub fn n_sites(&self) -> usize {
        self.c.nrows()
    }

    /// Site occupations `<n_i>`.
    pub fn densities(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.c[(i, i)].re).collect()
    }

    pub fn diagnostics(&self) -> CovarianceDiagnostics {
        let herm = (&self.c - self.c.adjoint()).max_abs();
        let sym = (&self.c + self.c.adjoint()) * C64::new(0.5, 0.0);
        let ev = sym.symmetric_eigenvalues();
        CovarianceDiagnostics {
            hermiticity_error: herm,
            min_eigenvalue: ev.iter().cloned().fold(f64::INFINITY, f64::min),
            max_eigenvalue: ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Hermiticity within `herm_tol`, occupation eigenvalues in `[-bound_tol, 1 + bound_tol]`.
    pub fn check(&self, herm_tol: f64, bound_tol: f64) -> Result<CovarianceDiagnostics> {
        let d = self.diagnostics();
        if d.hermiticity_error > herm_tol || d.min_eigenvalue < -bound_tol || d.max_eigenvalue > 1.0 + bound_tol {
            return Err(Error::Invariant(format!(
                "covariance at t = {}: |C - C^dag| = {:e}, spectrum [{:e}, {}]",
                self.time, d.hermiticity_error, d.min_eigenvalue, d.max_eigenvalue
            )));
        }
        Ok(d)
    }
}

/// Affine generator of the covariance dynamics.
#[derive(Clone, Debug)]
pub struct CovarianceGenerator {
    h: DMatrix<C64>,
    gamma: f64,
    gamma_s: f64,
    gamma_d: f64,
}

pub fn derive_generator(h: &QuadraticHamiltonian, monitor: &MonitorSpec) -> CovarianceGenerator {
    CovarianceGenerator { h: h.matrix().clone(), gamma: monitor.gamma, gamma_s: monitor.gamma_s, gamma_d: monitor.gamma_d }
}

impl CovarianceGenerator {
    pub fn n_sites(&self) -> usize {
        self.h.nrows()
    }

    pub fn hamiltonian(&self) -> &DMatrix<C64> {
        &self.h
    }

    pub fn monitor(&self) -> MonitorSpec {
        MonitorSpec { gamma: self.gamma, gamma_s: self.gamma_s, gamma_d: self.gamma_d }
    }

    pub fn is_driven(&self) -> bool {
        self.gamma_s + self.gamma_d > 0.0
    }

    /// Linear part `A(C)`.
    pub fn apply_linear(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.n_sites();
        let ht = self.h.transpose();
        let mut out = (&ht * c - c * &ht) * I;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    out[(j, k)] -= c[(j, k)] * self.gamma;
                }
            }
        }
        let last = n - 1;
        for k in 0..n {
            // -(P C + C P)/2
            out[(0, k)] -= c[(0, k)] * (0.5 * self.gamma_s);
            out[(k, 0)] -= c[(k, 0)] * (0.5 * self.gamma_s);
            out[(last, k)] -= c[(last, k)] * (0.5 * self.gamma_d);
            out[(k, last)] -= c[(k, last)] * (0.5 * self.gamma_d);
        }
        out
    }

    /// Source term `b`.
    pub fn source(&self) -> DMatrix<C64> {
        let n = self.n_sites();
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = C64::new(self.gamma_s, 0.0);
        b
    }

    /// `dC/dt = A(C) + b`.
    pub fn apply(&self, c: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = self.apply_linear(c);
        out[(0, 0)] += self.gamma_s;
        out
    }

    /// Dense `(A, b)` acting on column-stacked `vec(C)`.
    pub fn affine_matrix(&self) -> (DMatrix<C64>, DVector<C64>) {
        let n = self.n_sites();
        let m = n * n;
        let mut a = DMatrix::zeros(m, m);
        let mut unit = DMatrix::zeros(n, n);
        for p in 0..m {
            unit[p] = C64::new(1.0, 0.0);
            let col = self.apply_linear(&unit);
            a.column_mut(p).copy_from_slice(col.as_slice());
            unit[p] = ZERO;
        }
        (a, DVector::from_column_slice(self.source().as_slice()))
    }

    /// Real `(A, b)` acting on the Hermitian parameterization of [`to_params`].
    pub fn real_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_sites();
        let m = n * n;
        let mut a = DMatrix::zeros(m, m);
        let mut x = vec![0.0; m];
        for p in 0..m {
            x[p] = 1.0;
            let col = to_params(&self.apply_linear(&from_params(n, &x)));
            a.column_mut(p).copy_from_slice(&col);
            x[p] = 0.0;
        }
        (a, DVector::from_vec(to_params(&self.source())))
    }
}

/// Independent real coordinates of a Hermitian matrix: the diagonal, then
/// `(Re C_jk, Im C_jk)` for `j < k` in row-major order.
pub fn to_params(c: &DMatrix<C64>) -> Vec<f64> {
    let n = c.nrows();
    let mut x = Vec::with_capacity(n * n);
    x.extend((0..n).map(|i| c[(i, i)].re));
    for j in 0..n {
        for k in j + 1..n {
            x.push(c[(j, k)].re);
            x.push(c[(j, k)].im);
        }
    }
    x
}

pub fn from_params(n: usize, x: &[f64]) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut p = n;
    for j in 0..n {
        for k in j + 1..n {
            let z = C64::new(x[p], x[p + 1]);
            c[(j, k)] = z;
            c[(k, j)] = z.conj();
            p += 2;
        }
    }
    c
}

/// Which representation the solvers work in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HermitianMode {
    /// N^2 real coordinates of the upper triangle.
    #[default]
    UpperTriangle,
    /// All N^2 complex entries.
    Full,
}

pub fn evolve_covariance(
    c0: &CovarianceMatrix,
    gen: &CovarianceGenerator,
    t_final: f64,
    ctrl: &StepControl,
    mode: HermitianMode,
) -> Result<CovarianceMatrix> {
    let mut v = evolve_covariance_sampled(c0, gen, &[t_final], ctrl, mode)?;
    Ok(v.pop().expect("one sample"))
}

pub fn evolve_covariance_sampled(
    c0: &CovarianceMatrix,
    gen: &CovarianceGenerator,
    times: &[f64],
    ctrl: &StepControl,
    mode: HermitianMode,
) -> Result<Vec<CovarianceMatrix>> {
    let n = gen.n_sites();
    if c0.n_sites() != n {
        return Err(Error::DimensionMismatch { expected: n, found: c0.n_sites() });
    }
    let solver = Dopri5::new(*ctrl);
    let mut t = c0.time;
    let mut c = c0.c.clone();
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(crate::error::invalid("times", "sample times must be non-decreasing and after the initial time"));
        }
        match mode {
            HermitianMode::UpperTriangle => {
                let sol = solver.integrate(
                    |_, x: &[f64], dx: &mut [f64]| dx.copy_from_slice(&to_params(&gen.apply(&from_params(n, x)))),
                    t,
                    to_params(&c),
                    target,
                )?;
                t = sol.t;
                c = from_params(n, &sol.y);
            }
            HermitianMode::Full => {
                let sol = solver.integrate(
                    |_, x: &[C64], dx: &mut [C64]| {
                        dx.copy_from_slice(gen.apply(&DMatrix::from_column_slice(n, n, x)).as_slice())
                    },
                    t,
                    c.as_slice().to_vec(),
                    target,
                )?;
                t = sol.t;
                c = DMatrix::from_column_slice(n, n, &sol.y);
            }
        }
        let cov = CovarianceMatrix { c: c.clone(), time: t };
        cov.check(1e-9, 1e-8).map_err(|e| Error::Integration { time: t, detail: e.to_string() })?;
        out.push(cov);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSteadyMethod {
    /// Direct LU solve of `A vec(C) = -b`.
    #[default]
    LinearSolve,
    /// Kernel of the homogenized system `[A b; 0 0]`.
    NullSpace,
    /// Integrate until `max |dC/dt|` falls below the stationarity tolerance.
    TimeEvolve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSteadyOptions {
    pub method: CovarianceSteadyMethod,
    pub mode: HermitianMode,
    pub degeneracy_tol: f64,
    pub stationarity_tol: f64,
    pub t_max: f64,
    pub ctrl: StepControl,
}

impl Default for CovarianceSteadyOptions {
    fn default() -> Self {
        Self {
            method: CovarianceSteadyMethod::LinearSolve,
            mode: HermitianMode::UpperTriangle,
            degeneracy_tol: 1e-8,
            stationarity_tol: 1e-12,
            t_max: 1e7,
            ctrl: StepControl::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyCovariance {
    pub cov: CovarianceMatrix,
    /// `max |A vec(C) + b|`
    pub residual: f64,
    /// 1-norm condition number of the linear system, when it was formed.
    pub condition_number: Option<f64>,
}

/// Largest system size for which the 1-norm condition number is computed.
const CONDITION_ESTIMATE_MAX_DIM: usize = 2500;

pub fn steady_covariance(gen: &CovarianceGenerator, opts: &CovarianceSteadyOptions) -> Result<SteadyCovariance> {
    if !gen.is_driven() {
        return Err(Error::Degenerate {
            detail: "covariance generator has no pump or loss; the diagonal sum is conserved".into(),
        });
    }
    let n = gen.n_sites();
    let (c, cond) = match (opts.method, opts.mode) {
        (CovarianceSteadyMethod::LinearSolve, HermitianMode::UpperTriangle) => {
            let (a, b) = gen.real_system();
            let cond = condition_1norm(&a);
            let x = a.lu().solve(&(-b)).ok_or_else(|| Error::Singular("covariance system".into()))?;
            (from_params(n, x.as_slice()), cond)
        }
        (CovarianceSteadyMethod::LinearSolve, HermitianMode::Full) => {
            let (a, b) = gen.affine_matrix();
            let cond = condition_1norm(&a);
            let x = a.lu().solve(&(-b)).ok_or_else(|| Error::Singular("covariance system".into()))?;
            (DMatrix::from_column_slice(n, n, x.as_slice()), cond)
        }
        (CovarianceSteadyMethod::NullSpace, _) => (homogeneous_kernel(gen, opts.degeneracy_tol)?, None),
        (CovarianceSteadyMethod::TimeEvolve, mode) => (relax(gen, opts, mode)?, None),
    };
    let residual = gen.apply(&c).max_abs();
    let cov = CovarianceMatrix { c, time: f64::INFINITY };
    cov.check(1e-9, 1e-8)?;
    Ok(SteadyCovariance { cov, residual, condition_number: cond })
}

fn condition_1norm<T: nalgebra::ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Option<f64> {
    if a.nrows() > CONDITION_ESTIMATE_MAX_DIM {
        return None;
    }
    let norm1 = |m: &DMatrix<T>| (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.clone().modulus()).sum::<f64>()).fold(0.0, f64::max);
    let inv = a.clone().try_inverse()?;
    Some(norm1(a) * norm1(&inv))
}

fn homogeneous_kernel(gen: &CovarianceGenerator, degeneracy_tol: f64) -> Result<DMatrix<C64>> {
    let n = gen.n_sites();
    let (a, b) = gen.real_system();
    let m = a.nrows();
    let mut aug = DMatrix::zeros(m + 1, m + 1);
    aug.view_mut((0, 0), (m, m)).copy_from(&a);
    aug.view_mut((0, m), (m, 1)).copy_from(&b);
    let svd = aug.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Singular("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..m + 1).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let largest = svd.singular_values[order[m]];
    let second = svd.singular_values[order[1]];
    if second <= degeneracy_tol * largest {
        return Err(Error::Degenerate { detail: format!("second-smallest singular value {second:e} <= {degeneracy_tol:e} x {largest:e}") });
    }
    let z = v_t.row(order[0]);
    let s = z[m];
    if s.abs() < f64::EPSILON {
        return Err(Error::Singular("kernel vector has no affine component".into()));
    }
    let x: Vec<f64> = (0..m).map(|i| z[i] / s).collect();
    Ok(from_params(n, &x))
}

fn relax(gen: &CovarianceGenerator, opts: &CovarianceSteadyOptions, mode: HermitianMode) -> Result<DMatrix<C64>> {
    let n = gen.n_sites();
    let tol = opts.stationarity_tol;
    let solver = Dopri5::new(opts.ctrl);
    let c0 = CovarianceMatrix::maximally_mixed(n).c;
    match mode {
        HermitianMode::UpperTriangle => {
            let sol = solver.run(
                |_, x: &[f64], dx: &mut [f64]| dx.copy_from_slice(&to_params(&gen.apply(&from_params(n, x)))),
                0.0,
                to_params(&c0),
                opts.t_max,
                |_, _, dy| dy.iter().any(|v| v.abs() >= tol),
            )?;
            if sol.dy.iter().any(|v| v.abs() >= tol) {
                return Err(Error::NoConvergence(format!("covariance not stationary by t_max = {}", opts.t_max)));
            }
            Ok(from_params(n, &sol.y))
        }
        HermitianMode::Full => {
            let sol = solver.run(
                |_, x: &[C64], dx: &mut [C64]| dx.copy_from_slice(gen.apply(&DMatrix::from_column_slice(n, n, x)).as_slice()),
                0.0,
                c0.as_slice().to_vec(),
                opts.t_max,
                |_, _, dy| dy.iter().any(|v| v.norm() >= tol),
            )?;
            if sol.dy.iter().any(|v| v.norm() >= tol) {
                return Err(Error::NoConvergence(format!("covariance not stationary by t_max = {}", opts.t_max)));
            }
            Ok(DMatrix::from_column_slice(n, n, &sol.y))
        }
    }
}

/// `C_jk = tr(rho c_j^dag c_k)`.
pub fn covariance_from_density(rho: &DensityMatrix, ops: &FermionOps) -> Result<CovarianceMatrix> {
    let n = ops.n_sites();
    if rho.dim() != ops.dim() {
        return Err(Error::DimensionMismatch { expected: ops.dim(), found: rho.dim() });
    }
    let creators: Vec<_> = (0..n).map(|j| ops.creator(j)).collect();
    let c = DMatrix::from_fn(n, n, |j, k| {
        let op = creators[j].matmul(ops.annihilator(k));
        op.iter().map(|(r, col, v)| v * rho.rho[(col, r)]).sum::<C64>()
    });
    Ok(CovarianceMatrix { c, time: rho.time })
}

/// Random full-rank density matrix `A A^dag / tr` with Gaussian-like entries.
pub fn random_density(n_sites: usize, rng: &mut impl Rng) -> DensityMatrix {
    let d = 1usize << n_sites;
    let a = DMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    DensityMatrix { rho: rho / tr, time: 0.0 }
}

/// Largest entrywise gap between the generator's `dC/dt` and a central
/// finite difference of `C(rho(t))` computed with the exact Liouvillian.
pub fn finite_difference_check(gen: &CovarianceGenerator, l: &Superoperator, ops: &FermionOps, rho: &DensityMatrix, step: f64) -> Result<f64> {
    let ctrl = StepControl::new(1e-15, 1e-13);
    let solver = Dopri5::new(ctrl);
    let d = l.hilbert_dim();
    let side = |sign: f64| -> Result<CovarianceMatrix> {
        let sol = solver.integrate(
            |_, x: &[C64], dx: &mut [C64]| {
                l.matrix().mul_vec_into(x, dx);
                dx.iter_mut().for_each(|z| *z *= sign);
            },
            0.0,
            rho.rho.as_slice().to_vec(),
            step,
        )?;
        covariance_from_density(&DensityMatrix { rho: DMatrix::from_column_slice(d, d, &sol.y), time: 0.0 }, ops)
    };
    let fwd = side(1.0)?;
    let bwd = side(-1.0)?;
    let fd = (fwd.c - bwd.c) / C64::new(2.0 * step, 0.0);
    let c = covariance_from_density(rho, ops)?;
    Ok((gen.apply(&c.c) - fd).max_abs())
}

/// Run [`finite_difference_check`] over `draws` random parameter sets and
/// states of an `n_sites` chain. Returns the worst gap.
pub fn validate_generator(n_sites: usize, draws: usize, seed: u64) -> Result<f64> {
    use crate::model::{build_hamiltonian, build_jump_set, LatticeSpec};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ops = FermionOps::new(n_sites)?;
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let lattice = LatticeSpec::new(n_sites, rng.gen_range(0.2..2.0))?;
        let monitor = MonitorSpec::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))?;
        let h = build_hamiltonian(&lattice);
        let l = exact::assemble_liouvillian(&h, &build_jump_set(&lattice, &monitor), &ops)?;
        let gen = derive_generator(&h, &monitor);
        let rho = random_density(n_sites, &mut rng);
        worst = worst.max(finite_difference_check(&gen, &l, &ops, &rho, 1e-4)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{assemble_liouvillian, steady_state, SteadyOptions};
    use crate::model::{build_hamiltonian, build_jump_set, LatticeSpec};

    fn gen_for(n: usize, t: f64, g: f64, gs: f64, gd: f64) -> CovarianceGenerator {
        derive_generator(&build_hamiltonian(&LatticeSpec::new(n, t).unwrap()), &MonitorSpec::new(g, gs, gd).unwrap())
    }

    #[test]
    fn generator_matches_exact_liouvillian_by_finite_differences() {
        for n in 2..=4 {
            let worst = validate_generator(n, 20, 7 + n as u64).unwrap();
            assert!(worst < 1e-6, "n = {n}: {worst:e}");
        }
    }

    #[test]
    fn dephasing_damps_coherence_exponentially() {
        let gen = derive_generator(&QuadraticHamiltonian::zero(2), &MonitorSpec::new(0.8, 0.0, 0.0).unwrap());
        let mut c = DMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        c[(0, 1)] = C64::new(0.2, 0.1);
        c[(1, 0)] = C64::new(0.2, -0.1);
        let out = evolve_covariance(&CovarianceMatrix { c: c.clone(), time: 0.0 }, &gen, 2.0, &StepControl::new(1e-13, 1e-12), HermitianMode::Full).unwrap();
        let expected = c[(0, 1)] * (-1.6f64).exp();
        assert!((out.c[(0, 1)] - expected).norm() < 1e-11);
        assert!((out.c[(0, 0)] - c[(0, 0)]).norm() < 1e-12);
    }

    #[test]
    fn free_evolution_is_a_rotation() {
        let gen = gen_for(4, 1.0, 0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c0 = covariance_from_density(&random_density(4, &mut rng), &FermionOps::new(4).unwrap()).unwrap();
        let ev0 = c0.c.clone().symmetric_eigenvalues();
        let out = evolve_covariance(&c0, &gen, 3.0, &StepControl::new(1e-12, 1e-10), HermitianMode::UpperTriangle).unwrap();
        let mut a: Vec<f64> = ev0.iter().cloned().collect();
        let mut b: Vec<f64> = out.c.clone().symmetric_eigenvalues().iter().cloned().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((out.c.trace() - c0.c.trace()).norm() < 1e-10);
        // exact propagator: C(t) = U^T-convention rotation, U = exp(i h^T t)
        let u = (gen.hamiltonian().transpose() * C64::new(0.0, 3.0)).exp();
        let exact = &u * &c0.c * u.adjoint();
        assert!((out.c - exact).max_abs() < 1e-8);
    }

    #[test]
    fn pump_alone_fills_first_site() {
        let gen = derive_generator(&QuadraticHamiltonian::zero(2), &MonitorSpec::new(0.0, 0.5, 0.0).unwrap());
        let mut c = DMatrix::identity(2, 2) * C64::new(0.25, 0.0);
        c[(0, 1)] = C64::new(0.1, 0.0);
        c[(1, 0)] = C64::new(0.1, 0.0);
        c[(1, 1)] = C64::new(0.7, 0.0);
        let out = evolve_covariance(&CovarianceMatrix { c: c.clone(), time: 0.0 }, &gen, 60.0, &StepControl::default(), HermitianMode::Full).unwrap();
        assert!((out.c[(0, 0)].re - 1.0).abs() < 1e-10);
        assert!((out.c[(1, 1)] - c[(1, 1)]).norm() < 1e-12);
        // row/column 0 coherence decays at gamma_s / 2
        assert!((out.c[(0, 1)].re - 0.1 * (-15.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn maximally_mixed_is_stationary_without_drive() {
        for g in [0.0, 0.3, 4.0] {
            let gen = gen_for(5, 1.0, g, 0.0, 0.0);
            let out = evolve_covariance(&CovarianceMatrix::maximally_mixed(5), &gen, 5.0, &StepControl::default(), HermitianMode::UpperTriangle).unwrap();
            assert!((out.c - CovarianceMatrix::maximally_mixed(5).c).max_abs() < 1e-14);
        }
    }

    #[test]
    fn dephasing_alone_preserves_diagonal() {
        let gen = derive_generator(&QuadraticHamiltonian::zero(4), &MonitorSpec::new(1.3, 0.0, 0.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c0 = covariance_from_density(&random_density(4, &mut rng), &FermionOps::new(4).unwrap()).unwrap();
        let out = evolve_covariance(&c0, &gen, 4.0, &StepControl::default(), HermitianMode::UpperTriangle).unwrap();
        for i in 0..4 {
            assert!((out.c[(i, i)] - c0.c[(i, i)]).norm() < 1e-12);
        }
    }

    #[test]
    fn steady_state_methods_and_modes_agree() {
        let gen = gen_for(6, 1.0, 1.0, 0.01, 0.01);
        let base = steady_covariance(&gen, &CovarianceSteadyOptions::default()).unwrap();
        assert!(base.residual < 1e-13);
        assert!(base.condition_number.unwrap().is_finite());
        let full = steady_covariance(&gen, &CovarianceSteadyOptions { mode: HermitianMode::Full, ..Default::default() }).unwrap();
        assert!((&base.cov.c - &full.cov.c).max_abs() < 1e-12);
        let ns = steady_covariance(&gen, &CovarianceSteadyOptions { method: CovarianceSteadyMethod::NullSpace, ..Default::default() }).unwrap();
        assert!((&base.cov.c - &ns.cov.c).max_abs() < 1e-10);
        let te = steady_covariance(&gen, &CovarianceSteadyOptions {
            method: CovarianceSteadyMethod::TimeEvolve,
            stationarity_tol: 1e-13,
            ctrl: StepControl::new(1e-14, 1e-12),
            ..Default::default()
        })
        .unwrap();
        assert!((&base.cov.c - &te.cov.c).max_abs() < 1e-8);
    }

    #[test]
    fn undriven_steady_state_is_rejected() {
        let gen = gen_for(4, 1.0, 1.0, 0.0, 0.0);
        assert!(matches!(steady_covariance(&gen, &CovarianceSteadyOptions::default()), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn two_site_steady_state_matches_exact_engine() {
        let lat = LatticeSpec::new(2, 1.0).unwrap();
        let mon = MonitorSpec::new(1.0, 0.01, 0.01).unwrap();
        let h = build_hamiltonian(&lat);
        let ops = FermionOps::new(2).unwrap();
        let l = assemble_liouvillian(&h, &build_jump_set(&lat, &mon), &ops).unwrap();
        let rho = steady_state(&l, &SteadyOptions::default()).unwrap();
        let from_rho = covariance_from_density(&rho.state, &ops).unwrap();
        let fast = steady_covariance(&derive_generator(&h, &mon), &CovarianceSteadyOptions::default()).unwrap();
        assert!((from_rho.c - fast.cov.c).max_abs() < 1e-9);
    }

    #[test]
    fn covariance_of_simple_states() {
        let ops = FermionOps::new(3).unwrap();
        let vac = covariance_from_density(&DensityMatrix::fock(&[false, false, false]), &ops).unwrap();
        assert_eq!(vac.c.max_abs(), 0.0);
        let mm = covariance_from_density(&DensityMatrix::maximally_mixed(3), &ops).unwrap();
        assert!((mm.c - CovarianceMatrix::maximally_mixed(3).c).max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rnd = covariance_from_density(&random_density(3, &mut rng), &ops).unwrap();
        rnd.check(1e-12, 1e-12).unwrap();
    }

    #[test]
    fn large_gamma_still_solves() {
        let s = steady_covariance(&gen_for(6, 1.0, 64.0, 0.01, 0.01), &CovarianceSteadyOptions::default()).unwrap();
        assert!(s.residual < 1e-12);
    }
}
