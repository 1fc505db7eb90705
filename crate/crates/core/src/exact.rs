//! Brute-force Lindblad engine on the full 2^N Fock space.
//!
//! Vectorization is column stacking: `vec(rho)[i + j d] = rho[(i, j)]`, so a
//! term `A rho B` becomes `(B^T ⊗ A) vec(rho)`. This coincides with the
//! column-major storage of `nalgebra::DMatrix`, so `rho.as_slice()` is
//! `vec(rho)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{check_exact_cap, FermionOps};
use crate::model::{validate_jumps, JumpKind, JumpSpec, QuadraticHamiltonian};
use crate::ode::{Dopri5, StepControl};
use crate::linalg::MaxAbs;
use crate::sparse::CsrMatrix;

/// Largest Hilbert dimension for which dense superoperator factorizations are used.
pub const DENSE_HILBERT_DIM: usize = 32;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub rho: DMatrix<C64>,
    pub time: f64,
}

/// Measured deviations of a density matrix from a physical state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

/// Thresholds applied by [`DensityMatrix::check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateTolerance {
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        Self { trace: 1e-9, hermiticity: 1e-9, min_eigenvalue: -1e-7 }
    }
}

impl DensityMatrix {
    pub fn new(rho: DMatrix<C64>) -> Result<Self> {
        if !rho.is_square() || !rho.nrows().is_power_of_two() {
            return Err(crate::error::invalid("rho", format!("must be 2^N square, got {}x{}", rho.nrows(), rho.ncols())));
        }
        let state = Self { rho, time: 0.0 };
        state.check(&StateTolerance { trace: 1e-10, hermiticity: 1e-10, min_eigenvalue: -1e-8 })?;
        Ok(state)
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let d = 1usize << n_sites;
        Self { rho: DMatrix::identity(d, d) / C64::new(d as f64, 0.0), time: 0.0 }
    }

    /// Pure Fock state with the given site occupations (site 0 first).
    pub fn fock(occupations: &[bool]) -> Self {
        let n = occupations.len();
        let idx = fock_index(occupations);
        let d = 1usize << n;
        let mut rho = DMatrix::zeros(d, d);
        rho[(idx, idx)] = ONE;
        Self { rho, time: 0.0 }
    }

    pub fn from_pure(psi: &DVector<C64>) -> Self {
        let nrm = psi.norm_squared();
        Self { rho: psi * psi.adjoint() / C64::new(nrm, 0.0), time: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn diagnostics(&self) -> StateDiagnostics {
        let herm = (&self.rho - self.rho.adjoint()).max_abs();
        let sym = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        let min_eig = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        StateDiagnostics { trace_error: (self.trace() - ONE).norm(), hermiticity_error: herm, min_eigenvalue: min_eig }
    }

    pub fn check(&self, tol: &StateTolerance) -> Result<StateDiagnostics> {
        let d = self.diagnostics();
        if d.trace_error > tol.trace || d.hermiticity_error > tol.hermiticity || d.min_eigenvalue < tol.min_eigenvalue {
            return Err(Error::Invariant(format!(
                "t = {}: |tr - 1| = {:e}, |rho - rho^dag| = {:e}, min eig = {:e}",
                self.time, d.trace_error, d.hermiticity_error, d.min_eigenvalue
            )));
        }
        Ok(d)
    }
}

pub fn fock_index(occupations: &[bool]) -> usize {
    occupations.iter().fold(0usize, |acc, &o| (acc << 1) | o as usize)
}

/// Vectorized Lindbladian together with the Hilbert-space dimension it acts on.
#[derive(Clone, Debug)]
pub struct Superoperator {
    l: CsrMatrix,
    hilbert_dim: usize,
    driven: bool,
}

impl Superoperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.l
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    /// Whether any pump or loss channel with positive rate is present.
    pub fn is_driven(&self) -> bool {
        self.driven
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.hilbert_dim;
        DMatrix::from_column_slice(d, d, &self.l.mul_vec(rho.as_slice()))
    }

    /// Row vector `vec(I)^T L`; zero for a trace-preserving generator.
    pub fn trace_row(&self) -> Vec<C64> {
        let d = self.hilbert_dim;
        let id = DMatrix::<C64>::identity(d, d);
        self.l.left_mul_vec(id.as_slice())
    }
}

/// Assemble `L` such that `L vec(rho) = vec(-i[H, rho] + sum_k r_k D[L_k] rho)`.
pub fn assemble_liouvillian(h: &QuadraticHamiltonian, jumps: &[JumpSpec], ops: &FermionOps) -> Result<Superoperator> {
    check_exact_cap(ops.n_sites())?;
    if h.n_sites() != ops.n_sites() {
        return Err(Error::DimensionMismatch { expected: ops.n_sites(), found: h.n_sites() });
    }
    validate_jumps(jumps, ops.n_sites())?;
    let d = ops.dim();
    let id = CsrMatrix::identity(d);
    let hmb = ops.hamiltonian(h)?;

    // -i (I ⊗ H - H^T ⊗ I)
    let mut l = id.kron(&hmb).add(&hmb.transpose().kron(&id).scale(-ONE)).scale(C64::new(0.0, -1.0));
    for jump in jumps.iter().filter(|j| j.rate > 0.0) {
        let lk = ops.jump_operator(jump);
        let ldl = lk.adjoint().matmul(&lk);
        let r = C64::new(jump.rate, 0.0);
        let half = C64::new(-0.5 * jump.rate, 0.0);
        // L rho L^dag -> conj(L) ⊗ L
        let sandwich = lk.adjoint().transpose().kron(&lk).scale(r);
        let left = id.kron(&ldl).scale(half);
        let right = ldl.transpose().kron(&id).scale(half);
        l = l.add(&sandwich).add(&left).add(&right);
    }
    let driven = jumps.iter().any(|j| j.rate > 0.0 && !matches!(j.kind, JumpKind::Dephase(_)));
    Ok(Superoperator { l, hilbert_dim: d, driven })
}

/// Term-by-term evaluation of the Lindblad right-hand side with dense matrix
/// products. Independent of the vectorized assembly.
pub fn lindblad_rhs_direct(h: &QuadraticHamiltonian, jumps: &[JumpSpec], ops: &FermionOps, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let hmb = ops.hamiltonian(h)?.to_dense();
    let mut out = (&hmb * rho - rho * &hmb) * C64::new(0.0, -1.0);
    for jump in jumps {
        let lk = ops.jump_operator(jump).to_dense();
        let ldag = lk.adjoint();
        let ldl = &ldag * &lk;
        let anti = &ldl * rho + rho * &ldl;
        out += (&lk * rho * &ldag - anti * C64::new(0.5, 0.0)) * C64::new(jump.rate, 0.0);
    }
    Ok(out)
}

/// Integrate the master equation from `rho0` to `t_final`. Invariants of the
/// final state are checked with `StateTolerance::default()`.
pub fn evolve(rho0: &DensityMatrix, l: &Superoperator, t_final: f64, ctrl: &StepControl) -> Result<DensityMatrix> {
    let mut out = evolve_sampled(rho0, l, &[t_final], ctrl)?;
    Ok(out.pop().expect("one sample requested"))
}

/// States at each of the (non-decreasing) `times`, all invariant-checked.
pub fn evolve_sampled(rho0: &DensityMatrix, l: &Superoperator, times: &[f64], ctrl: &StepControl) -> Result<Vec<DensityMatrix>> {
    let d = l.hilbert_dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.dim() });
    }
    let solver = Dopri5::new(*ctrl);
    let mut t = rho0.time;
    let mut y = rho0.rho.as_slice().to_vec();
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t {
            return Err(crate::error::invalid("times", "sample times must be non-decreasing and after the initial time"));
        }
        let sol = solver.integrate(|_, x: &[C64], dx: &mut [C64]| l.l.mul_vec_into(x, dx), t, y, target)?;
        t = sol.t;
        y = sol.y;
        let state = DensityMatrix { rho: DMatrix::from_column_slice(d, d, &y), time: t };
        state.check(&StateTolerance::default()).map_err(|e| Error::Integration { time: t, detail: e.to_string() })?;
        out.push(state);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    /// Linear solve with one equation replaced by the trace constraint.
    #[default]
    LinearSolve,
    /// Right singular vector of the smallest singular value.
    NullSpace,
    /// Integrate until the state stops changing.
    TimeEvolve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyOptions {
    pub method: SteadyMethod,
    /// Uniqueness requires the second-smallest singular value to exceed this
    /// fraction of the largest (null-space method).
    pub degeneracy_tol: f64,
    /// Smallest-to-largest LU pivot ratio below which the constrained
    /// system is declared singular (linear-solve method).
    pub pivot_tol: f64,
    /// Time evolution stops once `max |d rho/dt| < stationarity_tol`.
    pub stationarity_tol: f64,
    pub t_max: f64,
    pub ctrl: StepControl,
    /// Relative residual target of the iterative solver used above the dense size.
    pub iterative_tol: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            method: SteadyMethod::LinearSolve,
            degeneracy_tol: 1e-8,
            pivot_tol: 1e-10,
            stationarity_tol: 1e-10,
            t_max: 1e7,
            ctrl: StepControl::default(),
            iterative_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityMatrix,
    /// `max |L vec(rho_ss)|`
    pub residual: f64,
    pub method: SteadyMethod,
}

pub fn steady_state(l: &Superoperator, opts: &SteadyOptions) -> Result<SteadyState> {
    let d = l.hilbert_dim();
    let vec = match opts.method {
        SteadyMethod::LinearSolve if d <= DENSE_HILBERT_DIM => dense_constrained_solve(l, opts.pivot_tol)?,
        SteadyMethod::LinearSolve => {
            require_drive(l)?;
            gmres_constrained_solve(l, opts.iterative_tol)?
        }
        SteadyMethod::NullSpace => {
            if d > DENSE_HILBERT_DIM {
                return Err(crate::error::invalid(
                    "solver",
                    format!("null-space method needs a dense SVD and is limited to Hilbert dimension {DENSE_HILBERT_DIM}"),
                ));
            }
            null_space_vector(l, opts.degeneracy_tol)?
        }
        SteadyMethod::TimeEvolve => {
            require_drive(l)?;
            relax(l, opts)?
        }
    };
    let mut rho = DMatrix::from_column_slice(d, d, &vec);
    let tr = rho.trace();
    rho /= tr;
    let residual = l.matrix().mul_vec(rho.as_slice()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let state = DensityMatrix { rho, time: f64::INFINITY };
    state.check(&StateTolerance::default())?;
    Ok(SteadyState { state, residual, method: opts.method })
}

fn require_drive(l: &Superoperator) -> Result<()> {
    if l.is_driven() {
        Ok(())
    } else {
        Err(Error::Degenerate {
            detail: "no pump or loss channel: every particle-number sector has its own stationary state".into(),
        })
    }
}

/// Row of the constraint `tr(rho) = 1` in vectorized coordinates.
fn trace_constraint_indices(d: usize) -> impl Iterator<Item = usize> {
    (0..d).map(move |i| i + i * d)
}

fn dense_constrained_solve(l: &Superoperator, pivot_tol: f64) -> Result<Vec<C64>> {
    let d = l.hilbert_dim();
    let n = d * d;
    let mut a = l.matrix().to_dense();
    // row 0 is the (0,0) population equation, linearly dependent on the other
    // population rows through trace preservation
    a.row_mut(0).fill(ZERO);
    for k in trace_constraint_indices(d) {
        a[(0, k)] = ONE;
    }
    let mut rhs = DVector::zeros(n);
    rhs[0] = ONE;
    let lu = a.lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let pmax = pivots.iter().cloned().fold(0.0, f64::max);
    let pmin = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if pmax == 0.0 || pmin < pivot_tol * pmax {
        return Err(Error::Degenerate { detail: format!("constrained Liouvillian singular: pivot ratio {:e}", pmin / pmax) });
    }
    let x = lu.solve(&rhs).ok_or_else(|| Error::Singular("LU solve failed".into()))?;
    Ok(x.as_slice().to_vec())
}

fn null_space_vector(l: &Superoperator, degeneracy_tol: f64) -> Result<Vec<C64>> {
    let a = l.matrix().to_dense();
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Singular("SVD did not return V".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s = |k: usize| svd.singular_values[order[k]];
    let largest = s(order.len() - 1);
    if s(1) <= degeneracy_tol * largest {
        return Err(Error::Degenerate {
            detail: format!("second-smallest singular value {:e} <= {:e} x largest {:e}", s(1), degeneracy_tol, largest),
        });
    }
    // rows of V^dag are conjugated right singular vectors
    Ok(v_t.row(order[0]).iter().map(|z| z.conj()).collect())
}

fn relax(l: &Superoperator, opts: &SteadyOptions) -> Result<Vec<C64>> {
    let d = l.hilbert_dim();
    let rho0 = DensityMatrix::maximally_mixed(d.trailing_zeros() as usize);
    let tol = opts.stationarity_tol;
    let sol = Dopri5::new(opts.ctrl).run(
        |_, x: &[C64], dx: &mut [C64]| l.matrix().mul_vec_into(x, dx),
        0.0,
        rho0.rho.as_slice().to_vec(),
        opts.t_max,
        |_, _, dy| dy.iter().any(|z| z.norm() >= tol),
    )?;
    let rate = sol.dy.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rate >= tol {
        return Err(Error::NoConvergence(format!("max |d rho/dt| = {rate:e} at t_max = {}", opts.t_max)));
    }
    Ok(sol.y)
}

/// Restarted GMRES on the trace-constrained system, Jacobi preconditioned.
fn gmres_constrained_solve(l: &Superoperator, tol: f64) -> Result<Vec<C64>> {
    let d = l.hilbert_dim();
    let n = d * d;
    let mut triplets: Vec<(usize, usize, C64)> = l.matrix().iter().filter(|&(r, _, _)| r != 0).collect();
    triplets.extend(trace_constraint_indices(d).map(|k| (0, k, ONE)));
    let a = CsrMatrix::from_triplets(n, n, &triplets);
    let mut diag = vec![ONE; n];
    for (r, c, v) in a.iter() {
        if r == c && v.norm() > 0.0 {
            diag[r] = v;
        }
    }
    let inv_diag: Vec<C64> = diag.iter().map(|z| ONE / z).collect();
    let mut b = vec![ZERO; n];
    b[0] = ONE;
    // start from the maximally mixed state
    let mut x = vec![ZERO; n];
    for k in trace_constraint_indices(d) {
        x[k] = diag[k] * (1.0 / d as f64);
    }
    gmres(|v, out| {
        let pv: Vec<C64> = v.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        a.mul_vec_into(&pv, out);
    }, &b, &mut x, 80, 4000, tol)?;
    Ok(x.iter().zip(&inv_diag).map(|(a, b)| a * b).collect())
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Right-preconditioned GMRES(m): `apply` computes `A M^-1 v`; on return `x`
/// holds `M x_true`.
fn gmres<F>(apply: F, b: &[C64], x: &mut [C64], restart: usize, max_cycles: usize, tol: f64) -> Result<()>
where
    F: Fn(&[C64], &mut [C64]),
{
    let n = b.len();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut w = vec![ZERO; n];
    for _ in 0..max_cycles {
        apply(x, &mut w);
        let r: Vec<C64> = b.iter().zip(&w).map(|(bi, wi)| bi - wi).collect();
        let beta = norm2(&r);
        if beta / bnorm < tol {
            return Ok(());
        }
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hess = vec![vec![ZERO; restart]; restart + 1];
        let mut cs = vec![ZERO; restart];
        let mut sn = vec![ZERO; restart];
        let mut g = vec![ZERO; restart + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..restart {
            apply(&basis[k], &mut w);
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(vj, &w);
                hess[j][k] = hjk;
                w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= hjk * vi);
            }
            let hnext = norm2(&w);
            hess[k + 1][k] = C64::new(hnext, 0.0);
            for j in 0..k {
                let t = cs[j].conj() * hess[j][k] + sn[j].conj() * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let (a, bb) = (hess[k][k], hess[k + 1][k]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = a / denom;
            sn[k] = bb / denom;
            hess[k][k] = C64::new(denom, 0.0);
            hess[k + 1][k] = ZERO;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;
            if g[k + 1].norm() / bnorm < tol || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / hnext).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(xi, vi)| *xi += yj * vi);
        }
    }
    apply(x, &mut w);
    let res = norm2(&b.iter().zip(&w).map(|(bi, wi)| bi - wi).collect::<Vec<_>>()) / bnorm;
    if res < tol {
        Ok(())
    } else {
        Err(Error::NoConvergence(format!("GMRES relative residual {res:e} after {max_cycles} cycles")))
    }
}

/// `tr(rho obs)` for Hermitian `obs`; the imaginary part must stay below 1e-10.
pub fn expectation(rho: &DensityMatrix, obs: &CsrMatrix) -> Result<f64> {
    if obs.nrows() != rho.dim() || obs.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: obs.nrows() });
    }
    let v: C64 = obs.iter().map(|(r, c, o)| o * rho.rho[(c, r)]).sum();
    if v.im.abs() > 1e-10 {
        return Err(Error::NotHermitian(v.im));
    }
    Ok(v.re)
}
