//! Adaptive Dormand–Prince 5(4) integrator over flat real or complex state vectors.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait OdeScalar:
    Copy + Default + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
}

impl OdeScalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl OdeScalar for C64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Absolute/relative local error tolerances plus step guards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { atol: 1e-10, rtol: 1e-8, max_step: f64::INFINITY, max_steps: 50_000_000 }
    }
}

impl StepControl {
    pub fn new(atol: f64, rtol: f64) -> Self {
        Self { atol, rtol, ..Self::default() }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Outcome of a call to [`Dopri5::run`].
#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub t: f64,
    pub y: Vec<T>,
    /// Derivative at `(t, y)`.
    pub dy: Vec<T>,
    pub accepted: usize,
    pub rejected: usize,
}

pub struct Dopri5 {
    ctrl: StepControl,
}

impl Dopri5 {
    pub fn new(ctrl: StepControl) -> Self {
        Self { ctrl }
    }

    /// Integrate `dy/dt = f(t, y)` from `t0` towards `t_end`. After every
    /// accepted step `on_step(t, y, dy)` is called; returning `false` stops
    /// the integration early.
    pub fn run<T, F, S>(&self, mut f: F, t0: f64, y0: Vec<T>, t_end: f64, mut on_step: S) -> Result<Solution<T>>
    where
        T: OdeScalar,
        F: FnMut(f64, &[T], &mut [T]),
        S: FnMut(f64, &[T], &[T]) -> bool,
    {
        let n = y0.len();
        let mut y = y0;
        let mut t = t0;
        let mut k: Vec<Vec<T>> = vec![vec![T::default(); n]; 7];
        f(t, &y, &mut k[0]);
        let mut sol_stats = (0usize, 0usize);
        if t_end <= t0 {
            let dy = k[0].clone();
            return Ok(Solution { t, y, dy, accepted: 0, rejected: 0 });
        }

        let mut h = self.initial_step(&y, &k[0], t_end - t0);
        let mut stage = vec![T::default(); n];
        let mut y_new = vec![T::default(); n];

        while t < t_end {
            if sol_stats.0 + sol_stats.1 >= self.ctrl.max_steps {
                return Err(Error::Integration { time: t, detail: format!("step budget {} exhausted", self.ctrl.max_steps) });
            }
            let last = t + h >= t_end;
            if last {
                h = t_end - t;
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for (j, a) in A[s][..s].iter().enumerate() {
                        if *a != 0.0 {
                            acc = acc + k[j][i] * (h * a);
                        }
                    }
                    stage[i] = acc;
                }
                let (_, tail) = k.split_at_mut(s);
                f(t + C[s] * h, &stage, &mut tail[0]);
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
            }
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = T::default();
                for (j, w) in E.iter().enumerate() {
                    if *w != 0.0 {
                        e = e + k[j][i] * (h * w);
                    }
                }
                let scale = self.ctrl.atol + self.ctrl.rtol * y[i].modulus().max(y_new[i].modulus());
                err = err.max(e.modulus() / scale);
            }
            if !err.is_finite() {
                return Err(Error::Integration { time: t, detail: "non-finite error estimate".into() });
            }
            if err <= 1.0 {
                t = if last { t_end } else { t + h };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                sol_stats.0 += 1;
                if !on_step(t, &y, &k[0]) {
                    break;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h * factor).min(self.ctrl.max_step);
            } else {
                sol_stats.1 += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Integration { time: t, detail: format!("step size underflow (h = {h:e})") });
                }
            }
        }
        Ok(Solution { t, y, dy: k.swap_remove(0), accepted: sol_stats.0, rejected: sol_stats.1 })
    }

    /// Integrate to `t_end` without step callbacks.
    pub fn integrate<T, F>(&self, f: F, t0: f64, y0: Vec<T>, t_end: f64) -> Result<Solution<T>>
    where
        T: OdeScalar,
        F: FnMut(f64, &[T], &mut [T]),
    {
        self.run(f, t0, y0, t_end, |_, _, _| true)
    }

    fn initial_step<T: OdeScalar>(&self, y: &[T], dy: &[T], span: f64) -> f64 {
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for (yi, fi) in y.iter().zip(dy) {
            let sc = self.ctrl.atol + self.ctrl.rtol * yi.modulus();
            d0 = d0.max(yi.modulus() / sc);
            d1 = d1.max(fi.modulus() / sc);
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span).min(self.ctrl.max_step).max(1e-12)
    }
}
