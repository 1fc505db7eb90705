//! Jordan–Wigner representation of spinless fermions on a chain.
//!
//! Basis ordering: site 0 is the leftmost tensor factor, i.e. the most
//! significant bit of the Fock-state index. Occupation of site `i` in basis
//! state `s` is bit `n_sites - 1 - i` of `s`. Single-site convention:
//! `c = [[0, 1], [0, 0]]` in the basis `{|0>, |1>}`.
//!
//! The annihilator on site `i` carries the string `(-1)^(occupations of sites < i)`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{JumpKind, JumpSpec, QuadraticHamiltonian};
use crate::sparse::CsrMatrix;

/// Largest chain the many-body engines accept. Superoperators scale as 4^N.
pub const EXACT_SITE_CAP: usize = 12;

pub fn check_exact_cap(n_sites: usize) -> Result<()> {
    if n_sites > EXACT_SITE_CAP {
        Err(Error::SizeLimit { n_sites, cap: EXACT_SITE_CAP })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FermionOps {
    n_sites: usize,
    annihilators: Vec<CsrMatrix>,
}

impl FermionOps {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(crate::error::invalid("n_sites", "must be at least 1"));
        }
        check_exact_cap(n_sites)?;
        let dim = 1usize << n_sites;
        let annihilators = (0..n_sites)
            .map(|site| {
                let bit = n_sites - 1 - site;
                let higher_mask = !((1usize << (bit + 1)) - 1);
                let triplets: Vec<_> = (0..dim)
                    .filter(|s| s >> bit & 1 == 1)
                    .map(|s| {
                        let sign = if (s & higher_mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
                        (s ^ (1 << bit), s, C64::new(sign, 0.0))
                    })
                    .collect();
                CsrMatrix::from_triplets(dim, dim, &triplets)
            })
            .collect();
        Ok(Self { n_sites, annihilators })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        1 << self.n_sites
    }

    pub fn annihilator(&self, site: usize) -> &CsrMatrix {
        &self.annihilators[site]
    }

    pub fn creator(&self, site: usize) -> CsrMatrix {
        self.annihilators[site].adjoint()
    }

    /// `c_j^dag c_k`
    pub fn bilinear(&self, j: usize, k: usize) -> CsrMatrix {
        self.creator(j).matmul(&self.annihilators[k])
    }

    pub fn number(&self, site: usize) -> CsrMatrix {
        self.bilinear(site, site)
    }

    pub fn total_number(&self) -> CsrMatrix {
        (1..self.n_sites).fold(self.number(0), |acc, i| acc.add(&self.number(i)))
    }

    /// Many-body `H = sum_jk h_jk c_j^dag c_k`.
    pub fn hamiltonian(&self, h: &QuadraticHamiltonian) -> Result<CsrMatrix> {
        let m = h.matrix();
        if m.nrows() != self.n_sites {
            return Err(Error::DimensionMismatch { expected: self.n_sites, found: m.nrows() });
        }
        let mut out = CsrMatrix::zeros(self.dim(), self.dim());
        for j in 0..self.n_sites {
            for k in 0..self.n_sites {
                if m[(j, k)] != C64::new(0.0, 0.0) {
                    out = out.add(&self.bilinear(j, k).scale(m[(j, k)]));
                }
            }
        }
        Ok(out)
    }

    /// Particle current from site `i` to `i + 1`:
    /// `J = i t (c_i^dag c_{i+1} - c_{i+1}^dag c_i)`, Hermitian.
    pub fn bond_current(&self, i: usize, hopping: f64) -> CsrMatrix {
        let forward = self.bilinear(i, i + 1);
        let backward = self.bilinear(i + 1, i);
        forward.add(&backward.scale(C64::new(-1.0, 0.0))).scale(C64::new(0.0, hopping))
    }

    /// Jump operator `L_k` for one channel (without the rate).
    pub fn jump_operator(&self, jump: &JumpSpec) -> CsrMatrix {
        match jump.kind {
            JumpKind::Dephase(s) => self.number(s),
            JumpKind::Pump(s) => self.creator(s),
            JumpKind::Loss(s) => self.annihilators[s].clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MaxAbs;
    use nalgebra::DMatrix;

    fn anticomm(a: &CsrMatrix, b: &CsrMatrix) -> DMatrix<C64> {
        a.matmul(b).add(&b.matmul(a)).to_dense()
    }

    #[test]
    fn single_mode_annihilator() {
        let ops = FermionOps::new(1).unwrap();
        let c = ops.annihilator(0).to_dense();
        let expected = DMatrix::from_row_slice(2, 2, &[
            C64::new(0.0, 0.0), C64::new(1.0, 0.0),
            C64::new(0.0, 0.0), C64::new(0.0, 0.0),
        ]);
        assert_eq!(c, expected);
    }

    #[test]
    fn two_site_mixed_anticommutator_vanishes_exactly() {
        let ops = FermionOps::new(2).unwrap();
        let ac = anticomm(ops.annihilator(0), &ops.creator(1));
        assert!(ac.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn canonical_anticommutation_relations() {
        for n in 1..=6 {
            let ops = FermionOps::new(n).unwrap();
            let id = DMatrix::<C64>::identity(ops.dim(), ops.dim());
            for i in 0..n {
                for j in 0..n {
                    let ci = ops.annihilator(i);
                    let cj = ops.annihilator(j);
                    let expected = if i == j { id.clone() } else { DMatrix::zeros(ops.dim(), ops.dim()) };
                    assert!((anticomm(ci, &ops.creator(j)) - &expected).max_abs() < 1e-14, "n={n} i={i} j={j}");
                    assert!(anticomm(ci, cj).max_abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn site_zero_is_most_significant_bit() {
        let ops = FermionOps::new(3).unwrap();
        let n0 = ops.number(0).to_dense();
        for s in 0..8 {
            let occ = if s & 0b100 != 0 { 1.0 } else { 0.0 };
            assert_eq!(n0[(s, s)].re, occ);
        }
    }

    #[test]
    fn total_number_has_integer_spectrum() {
        let ops = FermionOps::new(4).unwrap();
        let total = ops.total_number().to_dense();
        for s in 0..16usize {
            assert_eq!(total[(s, s)], C64::new(s.count_ones() as f64, 0.0));
        }
        // diagonal in the Fock basis
        let off: f64 = (0..16).flat_map(|i| (0..16).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| total[ij].norm()).sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn size_cap_is_enforced() {
        assert!(matches!(FermionOps::new(EXACT_SITE_CAP + 1), Err(Error::SizeLimit { .. })));
    }
}
