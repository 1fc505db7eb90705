//! Closed-form continuum predictions for the monitored free Fermi gas.
//!
//! Units: e = hbar = 1. The inverse measurement strength `1/gamma` plays the
//! role of an elastic scattering time, giving `D = v_F^2 / (gamma d)`.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::transport::{fit_scaling, DiffusionEstimate, ScalingFit};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryParams {
    pub v_f: f64,
    /// Density of states at the Fermi surface.
    pub nu: f64,
    pub dim: u32,
    pub gamma: f64,
}

impl TheoryParams {
    fn validate(&self) -> Result<()> {
        if !self.v_f.is_finite() {
            return Err(invalid("v_f", "must be finite"));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(invalid("nu", "must be finite and non-negative"));
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `D = v_F^2 / (gamma d)`.
pub fn modified_diffusion(p: &TheoryParams) -> Result<f64> {
    p.validate()?;
    if p.gamma == 0.0 {
        return Err(Error::InfiniteDiffusion);
    }
    Ok(p.v_f * p.v_f / (p.gamma * p.dim as f64))
}

/// `sigma = e^2 nu D`.
pub fn drude_conductivity(p: &TheoryParams) -> Result<f64> {
    Ok(p.nu * modified_diffusion(p)?)
}

/// The two time-local diffuson correlators at momentum `k^2` and energy `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusonPair {
    pub value_12: C64,
    pub value_21: C64,
}

/// `-(1/(pi nu)) / (D' k^2 -+ i eps)` with `D' = D / 2`.
pub fn diffuson(k_sq: f64, eps: f64, p: &TheoryParams) -> Result<DiffusonPair> {
    if !(k_sq.is_finite() && k_sq >= 0.0) {
        return Err(invalid("k_sq", "must be finite and non-negative"));
    }
    if !eps.is_finite() {
        return Err(invalid("eps", "must be finite"));
    }
    if k_sq == 0.0 && eps == 0.0 {
        return Err(Error::Pole);
    }
    let d_half = 0.5 * modified_diffusion(p)?;
    if p.nu == 0.0 {
        return Err(invalid("nu", "must be positive for the diffuson normalization"));
    }
    let norm = -1.0 / (PI * p.nu);
    Ok(DiffusonPair {
        value_12: C64::new(norm, 0.0) / C64::new(d_half * k_sq, -eps),
        value_21: C64::new(norm, 0.0) / C64::new(d_half * k_sq, eps),
    })
}

/// Simulated scaling compared against the `1/gamma` prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingComparison {
    pub fit: ScalingFit,
    pub theory_slope: f64,
    pub slope_deviation: f64,
    /// `D * gamma` per point, in input order.
    pub prefactors: Vec<f64>,
    pub prefactor_mean: f64,
    /// `(max - min) / mean` of the prefactors.
    pub prefactor_spread: f64,
}

impl ScalingComparison {
    /// `key = value` lines, appended to the fit report.
    pub fn report(&self) -> String {
        format!(
            "theory_slope = {}\nslope_deviation = {}\nprefactor_mean = {}\nprefactor_spread = {}\n",
            self.theory_slope, self.slope_deviation, self.prefactor_mean, self.prefactor_spread
        )
    }
}

pub fn compare_scaling(estimates: &[DiffusionEstimate]) -> Result<ScalingComparison> {
    let fit = fit_scaling(estimates)?;
    let prefactors: Vec<f64> = estimates.iter().map(|e| e.d_value * e.gamma).collect();
    let mean = prefactors.iter().sum::<f64>() / prefactors.len() as f64;
    let max = prefactors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = prefactors.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ScalingComparison {
        theory_slope: -1.0,
        slope_deviation: fit.slope + 1.0,
        prefactors,
        prefactor_mean: mean,
        prefactor_spread: (max - min) / mean,
        fit,
    })
}
