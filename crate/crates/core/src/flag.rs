//! Full flags stored as adapted bases.
//!
//! A flag `l_0 ⊃ l_1 ⊃ ... ⊃ l_r = 0` is stored as an invertible matrix whose
//! columns `v_1..v_r` define `l_j = span(v_{j+1}, ..., v_r)`.  Storing the
//! basis makes `dim(l_j/l_{j+1}) = 1` structural rather than checked.

use crate::error::Error;
use crate::matrix::{condition_number, check_finite, CMat};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Flag {
    basis: CMat,
    condition: f64,
}

impl Flag {
    pub fn new(basis: CMat) -> Result<Self> {
        if basis.nrows() != basis.ncols() || basis.nrows() == 0 {
            return Err(Error::Validation("flag basis must be square and nonempty".into()));
        }
        check_finite(&basis, "flag basis")?;
        let condition = condition_number(&basis);
        if !condition.is_finite() {
            return Err(Error::Validation("flag basis is singular".into()));
        }
        Ok(Flag { basis, condition })
    }

    /// Identity-basis flag (coordinate flag).
    pub fn standard(rank: usize) -> Self {
        Flag { basis: CMat::identity(rank, rank), condition: 1.0 }
    }

    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    /// Condition number of the adapted basis.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Basis of `l_j` as an `r x (r - j)` matrix.  `l_0` is the full space,
    /// `l_r` the zero space.
    pub fn subspace(&self, j: usize) -> Result<CMat> {
        let r = self.rank();
        if j > r {
            return Err(Error::Validation(format!("flag index {j} out of range 0..={r}")));
        }
        Ok(self.basis.columns(j, r - j).into_owned())
    }
}

/// `flag_subspace(flag, j)`: free-function form of [`Flag::subspace`].
pub fn flag_subspace(flag: &Flag, j: usize) -> Result<CMat> {
    flag.subspace(j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c, orthonormal_span, rank, subspace_contains, CVec};

    #[test]
    fn identity_flag_subspaces() {
        let f = Flag::standard(3);
        assert_eq!(f.subspace(0).unwrap().ncols(), 3);
        assert_eq!(f.subspace(3).unwrap().ncols(), 0);
        assert!(f.subspace(4).is_err());
    }

    #[test]
    fn swapped_basis_flag() {
        // columns (e2, e1): l_1 = span(e1)
        let basis = CMat::from_column_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        );
        let f = Flag::new(basis).unwrap();
        let l1 = f.subspace(1).unwrap();
        let e1 = CVec::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(subspace_contains(&l1, &e1, 1e-12));
    }

    #[test]
    fn chain_decreases_by_one() {
        let basis = CMat::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.5), c(0.2, 0.0), c(0.0, 1.0),
                c(0.0, 0.0), c(2.0, 0.0), c(1.0, 0.0),
                c(0.3, 0.0), c(0.0, 0.0), c(1.0, -1.0),
            ],
        );
        let f = Flag::new(basis).unwrap();
        for j in 0..=3 {
            let sub = f.subspace(j).unwrap();
            assert_eq!(rank(&sub, 1e-12), 3 - j);
            let q = orthonormal_span(&sub, 1e-12);
            assert_eq!(q.ncols(), 3 - j);
        }
    }

    #[test]
    fn singular_basis_rejected() {
        let basis = CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)],
        );
        assert!(Flag::new(basis).is_err());
    }
}
