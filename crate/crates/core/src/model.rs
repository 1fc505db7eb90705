//! Chain Hamiltonian and dissipator description shared by every engine.
//!
//! Units: hbar = e = 1. Sites are indexed from 0 in code; site 0 is the
//! source end of the chain and site `n_sites - 1` the drain end.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Chain with open ends; bonds (i, i+1) for i < n_sites - 1.
    #[default]
    Open,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n_sites: usize,
    pub hopping: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(n_sites: usize, hopping: f64) -> Result<Self> {
        let spec = Self { n_sites, hopping, boundary: Boundary::Open };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(invalid("n_sites", format!("must be at least 2, got {}", self.n_sites)));
        }
        if !(self.hopping.is_finite() && self.hopping > 0.0) {
            return Err(invalid("hopping", format!("must be finite and positive, got {}", self.hopping)));
        }
        Ok(())
    }
}

/// Dephasing (measurement) strength and boundary drive rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub gamma: f64,
    pub gamma_s: f64,
    pub gamma_d: f64,
}

impl MonitorSpec {
    pub fn new(gamma: f64, gamma_s: f64, gamma_d: f64) -> Result<Self> {
        let spec = Self { gamma, gamma_s, gamma_d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("gamma", self.gamma), ("gamma_s", self.gamma_s), ("gamma_d", self.gamma_d)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_driven(&self) -> bool {
        self.gamma_s + self.gamma_d > 0.0
    }
}

/// Single-particle matrix `h` of `H = sum_jk h_jk c_j^dag c_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian {
    h: DMatrix<C64>,
}

impl QuadraticHamiltonian {
    /// Wrap a single-particle matrix, rejecting anything not exactly Hermitian.
    pub fn from_matrix(h: DMatrix<C64>) -> Result<Self> {
        if !h.is_square() {
            return Err(invalid("h", format!("must be square, got {}x{}", h.nrows(), h.ncols())));
        }
        if h != h.adjoint() {
            return Err(invalid("h", "must equal its conjugate transpose"));
        }
        Ok(Self { h })
    }

    pub fn zero(n_sites: usize) -> Self {
        Self { h: DMatrix::zeros(n_sites, n_sites) }
    }

    pub fn n_sites(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.h
    }
}

/// Open-chain nearest-neighbour hopping matrix.
pub fn build_hamiltonian(spec: &LatticeSpec) -> QuadraticHamiltonian {
    let n = spec.n_sites;
    let t = C64::new(spec.hopping, 0.0);
    let h = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { t } else { C64::new(0.0, 0.0) });
    QuadraticHamiltonian { h }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    /// `n_site = c_site^dag c_site`
    Dephase(usize),
    /// `c_site^dag`
    Pump(usize),
    /// `c_site`
    Loss(usize),
}

impl JumpKind {
    pub fn site(&self) -> usize {
        match *self {
            JumpKind::Dephase(s) | JumpKind::Pump(s) | JumpKind::Loss(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpSpec {
    pub kind: JumpKind,
    pub rate: f64,
}

impl JumpSpec {
    pub fn new(kind: JumpKind, rate: f64) -> Self {
        Self { kind, rate }
    }
}

/// Dephasing on every site, pump on the first site, loss on the last.
/// Channels with zero rate are left out.
pub fn build_jump_set(lattice: &LatticeSpec, monitor: &MonitorSpec) -> Vec<JumpSpec> {
    let n = lattice.n_sites;
    let mut jumps = Vec::with_capacity(n + 2);
    if monitor.gamma > 0.0 {
        jumps.extend((0..n).map(|i| JumpSpec::new(JumpKind::Dephase(i), monitor.gamma)));
    }
    if monitor.gamma_s > 0.0 {
        jumps.push(JumpSpec::new(JumpKind::Pump(0), monitor.gamma_s));
    }
    if monitor.gamma_d > 0.0 {
        jumps.push(JumpSpec::new(JumpKind::Loss(n - 1), monitor.gamma_d));
    }
    jumps
}

/// Check that every jump addresses a site of an `n_sites` chain.
pub fn validate_jumps(jumps: &[JumpSpec], n_sites: usize) -> Result<()> {
    for j in jumps {
        if j.kind.site() >= n_sites {
            return Err(invalid("jumps", format!("site {} outside chain of {n_sites}", j.kind.site())));
        }
        if !(j.rate.is_finite() && j.rate >= 0.0) {
            return Err(invalid("jumps", format!("rate {} must be finite and non-negative", j.rate)));
        }
    }
    Ok(())
}
