//! Common invariant subspaces of a family of matrices.
//!
//! An invariant line is spanned by a common eigenvector; an invariant
//! hyperplane is the annihilator of a common eigenvector of the transposes.
//! For r ≤ 3 that covers every proper dimension, so the search below is
//! exhaustive there.  These subspaces are the trivial (degree-0) invariant
//! subbundles of the connection, and double as reducibility witnesses for
//! monodromy representations.

use crate::error::Error;
use crate::matrix::{
    self, eigenvalues, frob, identity, intersection_basis, kernel_basis, orthonormal_span, CMat,
    C64,
};
use crate::parabolic::FuchsianSystem;
use crate::Result;

/// A subspace invariant under every matrix of the family, with the induced
/// spectra (`eigenvalues of A_i restricted to V` per matrix).
#[derive(Debug, Clone)]
pub struct InvariantSubspace {
    pub basis: CMat,
    pub induced: Vec<Vec<C64>>,
}

impl InvariantSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// All proper nonzero common invariant subspaces of the family, exhaustive
/// for r ≤ 3 (lines via common eigenvectors, hyperplanes via transposes).
/// Subspaces are returned with orthonormal bases, deduplicated, sorted by
/// dimension then induced spectra.
pub fn common_invariant_subspaces(mats: &[CMat], tol: f64) -> Result<Vec<InvariantSubspace>> {
    let r = mats.first().map_or(0, CMat::nrows);
    if r == 0 {
        return Err(Error::Validation("empty matrix family".into()));
    }
    if r > 3 {
        return Err(Error::RankBudgetExceeded { rank: r });
    }
    let mut found: Vec<CMat> = Vec::new();
    if r >= 2 {
        // invariant lines (and fat common eigenspaces)
        for basis in common_eigen_subspaces(mats, tol)? {
            if basis.ncols() < r {
                found.push(basis);
            }
        }
        // invariant hyperplanes from the transpose family (r = 3 planes; for
        // r = 2 this repeats the line search in dual form and catches lines
        // only visible there — dedup handles overlap)
        if r == 3 {
            let transposed: Vec<CMat> = mats.iter().map(CMat::transpose).collect();
            for dual in common_eigen_subspaces(&transposed, tol)? {
                // annihilator of each dual vector is invariant; a fat dual
                // space of dim k gives a codim-k intersection
                let plane = kernel_basis(&dual.transpose(), tol);
                if plane.ncols() > 0 && plane.ncols() < r {
                    found.push(plane);
                }
            }
        }
    }
    // dedup by mutual containment
    let mut unique: Vec<CMat> = Vec::new();
    for v in found {
        let dv = v.ncols();
        let dup = unique.iter().any(|w| {
            w.ncols() == dv && matrix::intersection_dim(w, &v, tol) == dv
        });
        if !dup {
            unique.push(v);
        }
    }
    // verify invariance numerically and compute induced spectra
    let mut out = Vec::new();
    for basis in unique {
        let q = orthonormal_span(&basis, tol);
        let mut ok = true;
        let mut induced = Vec::with_capacity(mats.len());
        for a in mats {
            let image = a * &q;
            let resid = frob(&(&image - &q * (q.adjoint() * &image)));
            if resid > tol.max(1e-10) * frob(a).max(1.0) * 10.0 {
                ok = false;
                break;
            }
            let restricted = q.adjoint() * a * &q;
            let mut ev = eigenvalues(&restricted)?;
            matrix::sort_lex(&mut ev);
            induced.push(ev);
        }
        if ok {
            out.push(InvariantSubspace { basis: q, induced });
        }
    }
    out.sort_by(|a, b| {
        a.dim().cmp(&b.dim()).then_with(|| {
            let ka: Vec<(f64, f64)> = a.induced.iter().flatten().map(matrix::lex_key).collect();
            let kb: Vec<(f64, f64)> = b.induced.iter().flatten().map(matrix::lex_key).collect();
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(out)
}

/// Maximal subspaces on which every matrix acts as a scalar: intersections of
/// one eigenspace per matrix, refined family by family.
fn common_eigen_subspaces(mats: &[CMat], tol: f64) -> Result<Vec<CMat>> {
    let r = mats[0].nrows();
    let mut spaces: Vec<CMat> = vec![identity(r)];
    for a in mats {
        let scale = frob(a).max(1.0);
        let mut ev = eigenvalues(a)?;
        matrix::sort_lex(&mut ev);
        ev.dedup_by(|x, y| (*x - *y).norm() <= tol.max(1e-9) * scale * 100.0);
        let mut next = Vec::new();
        for space in &spaces {
            for mu in &ev {
                let eigenspace = kernel_basis(&(a - identity(r) * *mu), 1e-8);
                if eigenspace.ncols() == 0 {
                    continue;
                }
                let meet = intersection_basis(space, &eigenspace, 1e-10);
                if meet.ncols() > 0 {
                    next.push(meet);
                }
            }
        }
        spaces = next;
        if spaces.is_empty() {
            break;
        }
    }
    Ok(spaces)
}

/// Proper nonzero subspaces invariant under every residue, with induced
/// exponent multisets.  Exhaustive for r ≤ 3; `RankBudgetExceeded` beyond.
pub fn residue_invariant_subspaces(
    system: &FuchsianSystem,
    max_rank: usize,
    tol: f64,
) -> Result<Vec<InvariantSubspace>> {
    if system.rank() == 1 {
        return Ok(Vec::new());
    }
    if system.rank() > 3 {
        return Err(Error::RankBudgetExceeded { rank: system.rank() });
    }
    let subs = common_invariant_subspaces(system.residues(), tol)?;
    Ok(subs.into_iter().filter(|s| s.dim() <= max_rank).collect())
}
