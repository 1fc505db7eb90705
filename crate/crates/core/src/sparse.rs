//! Minimal compressed-sparse-row matrices over `Complex64`.
//!
//! Only what the many-body engines need: assembly from triplets, products,
//! Kronecker products and matrix-vector application.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    /// Assemble from `(row, col, value)` triplets. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); nrows];
        for &(r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            *rows[r].entry(c).or_insert(C64::new(0.0, 0.0)) += v;
        }
        Self::from_rows(nrows, ncols, rows)
    }

    fn from_rows(nrows: usize, ncols: usize, rows: Vec<BTreeMap<usize, C64>>) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                if v != C64::new(0.0, 0.0) {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn adjoint(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let t: Vec<_> = self.iter().chain(other.iter()).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); self.nrows];
        for (r, row) in rows.iter_mut().enumerate() {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let (mid, a) = (self.indices[k], self.values[k]);
                for l in other.indptr[mid]..other.indptr[mid + 1] {
                    *row.entry(other.indices[l]).or_insert(C64::new(0.0, 0.0)) += a * other.values[l];
                }
            }
        }
        Self::from_rows(self.nrows, other.ncols, rows)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (p, q) = (other.nrows, other.ncols);
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.iter() {
            for (r2, c2, v2) in other.iter() {
                t.push((r1 * p + r2, c1 * q + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.nrows * p, self.ncols * q, &t)
    }

    /// `y = self · x`.
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x† · self` as a row vector (returned as a plain vector).
    pub fn left_mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![C64::new(0.0, 0.0); self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += x[r].conj() * v;
        }
        y
    }

    /// Dense product `self · m`.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(self.ncols, m.nrows());
        let mut out = DMatrix::zeros(self.nrows, m.ncols());
        for (r, c, v) in self.iter() {
            for j in 0..m.ncols() {
                out[(r, j)] += v * m[(c, j)];
            }
        }
        out
    }

    /// Dense product `m · self`.
    pub fn dense_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(m.ncols(), self.nrows);
        let mut out = DMatrix::zeros(m.nrows(), self.ncols);
        for (r, c, v) in self.iter() {
            for i in 0..m.nrows() {
                out[(i, c)] += m[(i, r)] * v;
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn kron_matches_dense_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 2.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        let b = DMatrix::from_row_slice(2, 3, &[
            c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
            c(3.0, -1.0), c(0.0, 0.0), c(1.0, 1.0),
        ]);
        let k = CsrMatrix::from_dense(&a).kron(&CsrMatrix::from_dense(&b)).to_dense();
        assert_eq!(k, a.kronecker(&b));
    }

    #[test]
    fn products_match_dense() {
        let a = DMatrix::from_fn(3, 3, |i, j| c((i * 3 + j) as f64 % 4.0 - 1.0, (i as f64) - (j as f64)));
        let b = DMatrix::from_fn(3, 3, |i, j| c(((i + 2 * j) % 3) as f64, 0.5));
        let sa = CsrMatrix::from_dense(&a);
        let sb = CsrMatrix::from_dense(&b);
        assert!((sa.matmul(&sb).to_dense() - &a * &b).norm() < 1e-14);
        assert!((sa.mul_dense(&b) - &a * &b).norm() < 1e-14);
        assert!((sb.dense_mul(&a) - &a * &b).norm() < 1e-14);
        assert_eq!(sa.adjoint().to_dense(), a.adjoint());
        let x: Vec<C64> = (0..3).map(|i| c(i as f64, 1.0)).collect();
        let y = sa.mul_vec(&x);
        let yd = &a * nalgebra::DVector::from_vec(x.clone());
        for i in 0..3 {
            assert!((y[i] - yd[i]).norm() < 1e-14);
        }
        let row = sa.left_mul_vec(&x);
        let rowd = nalgebra::DVector::from_vec(x).adjoint() * &a;
        for i in 0..3 {
            assert!((row[i] - rowd[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, c(1.0, 0.0)), (0, 1, c(-1.0, 0.0)), (1, 0, c(2.0, 0.0))]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense()[(1, 0)], c(2.0, 0.0));
    }
}
