use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Largest entry modulus of a complex matrix.
pub trait MaxAbs {
    fn max_abs(&self) -> f64;
}

impl MaxAbs for DMatrix<C64> {
    fn max_abs(&self) -> f64 {
        self.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
