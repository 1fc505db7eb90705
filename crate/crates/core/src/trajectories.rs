//! Quantum-jump unraveling of the chain Lindbladian.
//!
//! Between jumps the unnormalized state evolves with
//! `H_eff = H - (i/2) sum_k r_k L_k^dag L_k`; a jump fires when `|psi|^2`
//! drops to a uniform random threshold. Propagators are exact matrix
//! exponentials on a dyadic ladder `dt / 2^k`, and the crossing time is
//! located by bisection down that ladder. The squared norm is non-increasing
//! under `H_eff`, so a coarse step can never skip a crossing.
//!
//! Per-trajectory seeds are `split_seed(master_seed, m)`; every trajectory owns
//! a ChaCha8 stream, so serial and parallel runs produce identical ensembles.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::DensityMatrix;
use crate::fermion::{check_exact_cap, FermionOps};
use crate::model::{validate_jumps, JumpSpec, QuadraticHamiltonian};
use crate::sparse::CsrMatrix;

/// Tolerance on `|psi|^2 - threshold` when locating a jump time.
pub const CROSSING_TOL: f64 = 1e-10;
const LADDER_DEPTH: usize = 52;

#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub psi: DVector<C64>,
    pub time: f64,
    pub seed: u64,
    /// `(time, index into the jump list)`
    pub jump_log: Vec<(f64, usize)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble started from `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Everything needed to sample trajectories of one Lindbladian.
#[derive(Clone, Debug)]
pub struct JumpProcess {
    jumps: Vec<JumpSpec>,
    jump_ops: Vec<CsrMatrix>,
    /// `ladder[k] = exp(-i H_eff dt / 2^k)`
    ladder: Vec<DMatrix<C64>>,
    dt: f64,
    dim: usize,
}

impl JumpProcess {
    /// `base_step` is the coarsest propagation interval.
    pub fn new(h: &QuadraticHamiltonian, jumps: &[JumpSpec], ops: &FermionOps, base_step: f64) -> Result<Self> {
        check_exact_cap(ops.n_sites())?;
        validate_jumps(jumps, ops.n_sites())?;
        if !(base_step.is_finite() && base_step > 0.0) {
            return Err(crate::error::invalid("base_step", "must be finite and positive"));
        }
        let jumps: Vec<JumpSpec> = jumps.iter().copied().filter(|j| j.rate > 0.0).collect();
        let jump_ops: Vec<CsrMatrix> = jumps.iter().map(|j| ops.jump_operator(j)).collect();
        let mut h_eff = ops.hamiltonian(h)?.to_dense();
        for (j, l) in jumps.iter().zip(&jump_ops) {
            h_eff -= l.adjoint().matmul(l).to_dense() * C64::new(0.0, 0.5 * j.rate);
        }
        let generator = h_eff * C64::new(0.0, -1.0);
        let ladder = (0..=LADDER_DEPTH)
            .map(|k| (&generator * C64::new(base_step / (1u64 << k) as f64, 0.0)).exp())
            .collect();
        Ok(Self { jumps, jump_ops, ladder, dt: base_step, dim: ops.dim() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jumps(&self) -> &[JumpSpec] {
        &self.jumps
    }

    fn step_len(&self, level: usize) -> f64 {
        self.dt / (1u64 << level) as f64
    }

    /// Sample one trajectory from `psi0` up to `t_final`.
    pub fn sample(&self, psi0: &DVector<C64>, t_final: f64, seed: u64) -> Result<TrajectoryState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(psi0, t_final, seed, &mut rng)
    }

    fn sample_with_rng(&self, psi0: &DVector<C64>, t_final: f64, seed: u64, rng: &mut ChaCha8Rng) -> Result<TrajectoryState> {
        if psi0.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: psi0.len() });
        }
        let n0 = psi0.norm();
        if (n0 - 1.0).abs() > 1e-12 {
            return Err(crate::error::invalid("psi0", format!("must be normalized, |psi0| = {n0}")));
        }
        let mut psi = psi0.clone();
        let mut t = 0.0;
        let mut threshold: f64 = rng.gen();
        let mut log = Vec::new();
        // next ladder level to try while bisecting towards a crossing
        let mut refine: Option<usize> = None;

        loop {
            let remaining = t_final - t;
            let coarsest = (0..=LADDER_DEPTH).find(|&k| self.step_len(k) <= remaining * (1.0 + 1e-15));
            let level = match (refine, coarsest) {
                (_, None) => break,
                (Some(r), Some(c)) => r.max(c),
                (None, Some(c)) => c,
            };
            if level > LADDER_DEPTH {
                // bisection exhausted the ladder: jump here
                self.jump(&mut psi, t, &mut log, rng)?;
                threshold = rng.gen();
                refine = None;
                continue;
            }
            let candidate = &self.ladder[level] * &psi;
            let norm_sq = candidate.norm_squared();
            if norm_sq > threshold {
                psi = candidate;
                t += self.step_len(level);
                if let Some(r) = refine.as_mut() {
                    *r = level + 1;
                }
                continue;
            }
            let current = psi.norm_squared();
            if current < 1e-300 {
                return Err(Error::TrajectoryStep { time: t, detail: "norm underflow without threshold crossing".into() });
            }
            if current - threshold < CROSSING_TOL {
                self.jump(&mut psi, t, &mut log, rng)?;
                threshold = rng.gen();
                refine = None;
            } else {
                refine = Some(level + 1);
            }
        }
        let nrm = psi.norm();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::TrajectoryStep { time: t, detail: format!("invalid final norm {nrm}") });
        }
        Ok(TrajectoryState { psi: psi / C64::new(nrm, 0.0), time: t_final, seed, jump_log: log })
    }

    fn jump(&self, psi: &mut DVector<C64>, t: f64, log: &mut Vec<(f64, usize)>, rng: &mut ChaCha8Rng) -> Result<()> {
        let candidates: Vec<Vec<C64>> = self.jump_ops.iter().map(|l| l.mul_vec(psi.as_slice())).collect();
        let weights: Vec<f64> = candidates
            .iter()
            .zip(&self.jumps)
            .map(|(v, j)| j.rate * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .collect();
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::TrajectoryStep { time: t, detail: "norm decayed but no jump channel is open".into() });
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                chosen = k;
                break;
            }
            u -= w;
        }
        // skip channels with zero weight that rounding might select
        while weights[chosen] == 0.0 {
            chosen -= 1;
        }
        let v = DVector::from_vec(candidates[chosen].clone());
        let nrm = v.norm();
        *psi = v / C64::new(nrm, 0.0);
        log.push((t, chosen));
        Ok(())
    }
}

/// Convenience wrapper around [`JumpProcess::sample`].
pub fn sample_trajectory(
    psi0: &DVector<C64>,
    h: &QuadraticHamiltonian,
    jumps: &[JumpSpec],
    ops: &FermionOps,
    t_final: f64,
    seed: u64,
) -> Result<TrajectoryState> {
    JumpProcess::new(h, jumps, ops, t_final.clamp(1e-3, 1.0))?.sample(psi0, t_final, seed)
}

/// How each trajectory's initial state is chosen.
#[derive(Clone, Debug)]
pub enum InitialState {
    Pure(DVector<C64>),
    /// A uniformly random Fock state per trajectory, i.e. the maximally mixed
    /// ensemble.
    MaximallyMixed,
    /// `states[k]` drawn with probability `weights[k] / sum(weights)`.
    Ensemble { weights: Vec<f64>, states: Vec<DVector<C64>> },
}

impl InitialState {
    fn draw(&self, dim: usize, rng: &mut ChaCha8Rng) -> DVector<C64> {
        match self {
            InitialState::Pure(psi) => psi.clone(),
            InitialState::MaximallyMixed => {
                let mut psi = DVector::zeros(dim);
                psi[rng.gen_range(0..dim)] = C64::new(1.0, 0.0);
                psi
            }
            InitialState::Ensemble { weights, states } => {
                let mut u = rng.gen::<f64>() * weights.iter().sum::<f64>();
                for (w, psi) in weights.iter().zip(states) {
                    if u < *w {
                        return psi.clone();
                    }
                    u -= w;
                }
                states[weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)].clone()
            }
        }
    }

    /// Unravel a density matrix into its eigenstates; negative eigenvalues
    /// from roundoff are dropped.
    pub fn from_density(rho: &DensityMatrix) -> Self {
        let eig = rho.rho.clone().symmetric_eigen();
        let (weights, states) = (0..rho.dim())
            .filter(|&k| eig.eigenvalues[k] > 0.0)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
            .unzip();
        InitialState::Ensemble { weights, states }
    }

    /// The density matrix this ensemble represents.
    pub fn density(&self, dim: usize) -> DensityMatrix {
        match self {
            InitialState::Pure(psi) => DensityMatrix::from_pure(psi),
            InitialState::MaximallyMixed => DensityMatrix::maximally_mixed(dim.trailing_zeros() as usize),
            InitialState::Ensemble { weights, states } => {
                let total: f64 = weights.iter().sum();
                let rho = weights
                    .iter()
                    .zip(states)
                    .fold(DMatrix::zeros(dim, dim), |acc, (w, psi)| acc + psi * psi.adjoint() * C64::new(w / total, 0.0));
                DensityMatrix { rho, time: 0.0 }
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let check = |psi: &DVector<C64>| {
            if psi.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
            }
            Ok(())
        };
        match self {
            InitialState::Pure(psi) => check(psi),
            InitialState::MaximallyMixed => Ok(()),
            InitialState::Ensemble { weights, states } => {
                if weights.len() != states.len() || states.is_empty() {
                    return Err(crate::error::invalid("initial", "ensemble needs one weight per state"));
                }
                if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(crate::error::invalid("initial", "weights must be non-negative with positive sum"));
                }
                states.iter().try_for_each(check)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub process: JumpProcess,
    pub initial: InitialState,
    pub t_final: f64,
}

/// Ensemble statistics for several observables plus the jump count.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub observables: Vec<EnsembleEstimate>,
    pub jump_count: EnsembleEstimate,
}

/// Neumaier-compensated sum, accumulated in slice order.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn estimate(values: &[f64], master_seed: u64) -> EnsembleEstimate {
    let m = values.len();
    let mean = compensated_sum(values.iter().copied()) / m as f64;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (m as f64 - 1.0);
    EnsembleEstimate { mean, stderr: (var / m as f64).sqrt(), n_trajectories: m, master_seed }
}

/// Run `m` trajectories and average `<psi|O|psi>` at `t_final` for each observable.
pub fn run_ensemble(cfg: &EnsembleConfig, observables: &[CsrMatrix], m: usize, master_seed: u64) -> Result<EnsembleResult> {
    if m < 2 {
        return Err(crate::error::invalid("n_trajectories", format!("need at least 2, got {m}")));
    }
    cfg.initial.validate(cfg.process.dim())?;
    for o in observables {
        if o.nrows() != cfg.process.dim() {
            return Err(Error::DimensionMismatch { expected: cfg.process.dim(), found: o.nrows() });
        }
    }
    let samples: Vec<Result<(Vec<f64>, f64)>> = (0..m as u64)
        .into_par_iter()
        .map(|idx| {
            let seed = split_seed(master_seed, idx);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let psi0 = cfg.initial.draw(cfg.process.dim(), &mut rng);
            let traj = cfg.process.sample_with_rng(&psi0, cfg.t_final, seed, &mut rng)?;
            let vals = observables
                .iter()
                .map(|o| {
                    let opsi = o.mul_vec(traj.psi.as_slice());
                    traj.psi.iter().zip(&opsi).map(|(a, b)| a.conj() * b).sum::<C64>().re
                })
                .collect();
            Ok((vals, traj.jump_log.len() as f64))
        })
        .collect();
    let samples: Vec<(Vec<f64>, f64)> = samples.into_iter().collect::<Result<_>>()?;
    let observables = (0..observables.len())
        .map(|k| estimate(&samples.iter().map(|s| s.0[k]).collect::<Vec<_>>(), master_seed))
        .collect();
    let jumps: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(EnsembleResult { observables, jump_count: estimate(&jumps, master_seed) })
}

pub fn trajectory_average(observable: &CsrMatrix, cfg: &EnsembleConfig, m: usize, master_seed: u64) -> Result<EnsembleEstimate> {
    Ok(run_ensemble(cfg, std::slice::from_ref(observable), m, master_seed)?.observables[0])
}
