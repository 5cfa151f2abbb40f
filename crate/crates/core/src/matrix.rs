//! Dense complex matrices and the small linear-algebra vocabulary used
//! throughout: Frobenius norms, orthonormalization, subspace tests, ordered
//! triangularization with a prescribed diagonal.
//!
//! All tolerances here are relative to Frobenius norms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::Result;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Frobenius norm; the crate-wide operator-norm surrogate.
pub fn frob(m: &CMat) -> f64 {
    m.norm()
}

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

/// Validate that all entries are finite.
pub fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what}: non-finite entry")))
    }
}

/// Condition number estimate from the singular values.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Commutator `[a, b] = ab - ba`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Orthonormal basis of the column span, with rank decided by `tol` relative
/// to the largest singular value.  Returns an `r x k` matrix (possibly zero
/// columns).
pub fn orthonormal_span(m: &CMat, tol: f64) -> CMat {
    let r = m.nrows();
    if m.ncols() == 0 {
        return CMat::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return CMat::zeros(r, 0);
    }
    let k = svd.singular_values.iter().filter(|&&s| s > tol * smax).count();
    u.columns(0, k).into_owned()
}

/// Numerical rank relative to the largest singular value.
pub fn rank(m: &CMat, tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Orthonormal basis of the kernel (right null space).
pub fn kernel_basis(m: &CMat, tol: f64) -> CMat {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > tol * smax)
        .count();
    // Rows of V^H beyond the rank span the kernel; also account for rows
    // missing from a wide/thin SVD.
    let mut cols: Vec<CVec> = Vec::new();
    for i in rank..vt.nrows() {
        cols.push(vt.row(i).adjoint());
    }
    if vt.nrows() < n {
        // Complete the basis: project out the known rows from coordinate
        // vectors and keep the orthogonal remainder.
        let mut known: Vec<CVec> = (0..vt.nrows()).map(|i| vt.row(i).adjoint()).collect();
        for j in 0..n {
            let mut v = CVec::zeros(n);
            v[j] = c(1.0, 0.0);
            for k in &known {
                let proj = k.dotc(&v);
                v -= k * proj;
            }
            let nrm = v.norm();
            if nrm > 1e-8 {
                v /= c(nrm, 0.0);
                known.push(v.clone());
                cols.push(v);
            }
        }
    }
    let k = cols.len();
    let mut out = CMat::zeros(n, k);
    for (j, v) in cols.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Distance from `w` to the span of the orthonormal columns `q`.
pub fn distance_to_span(q: &CMat, w: &CVec) -> f64 {
    if q.ncols() == 0 {
        return w.norm();
    }
    let coeff = q.adjoint() * w;
    (w - q * coeff).norm()
}

/// True iff `w` lies in the span of the columns of `v` up to `tol·‖w‖`.
/// The zero vector lies in every subspace.
pub fn subspace_contains(v: &CMat, w: &CVec, tol: f64) -> bool {
    let nw = w.norm();
    if nw == 0.0 {
        return true;
    }
    let q = orthonormal_span(v, 1e-13);
    distance_to_span(&q, w) <= tol * nw
}

/// Dimension of the intersection of two column spans:
/// `dim V + dim W - rank([V W])`.
pub fn intersection_dim(v: &CMat, w: &CMat, tol: f64) -> usize {
    let dv = rank(v, tol);
    let dw = rank(w, tol);
    if dv == 0 || dw == 0 {
        return 0;
    }
    let qv = orthonormal_span(v, tol);
    let qw = orthonormal_span(w, tol);
    let mut joined = CMat::zeros(v.nrows(), qv.ncols() + qw.ncols());
    joined.columns_mut(0, qv.ncols()).copy_from(&qv);
    joined.columns_mut(qv.ncols(), qw.ncols()).copy_from(&qw);
    dv + dw - rank(&joined, tol)
}

/// Orthonormal basis of the intersection of two spans, computed from the
/// kernel of the stacked coefficient problem `V a = W b`.
pub fn intersection_basis(v: &CMat, w: &CMat, tol: f64) -> CMat {
    let r = v.nrows();
    let qv = orthonormal_span(v, tol);
    let qw = orthonormal_span(w, tol);
    if qv.ncols() == 0 || qw.ncols() == 0 {
        return CMat::zeros(r, 0);
    }
    let mut joined = CMat::zeros(r, qv.ncols() + qw.ncols());
    joined.columns_mut(0, qv.ncols()).copy_from(&qv);
    for j in 0..qw.ncols() {
        joined.set_column(qv.ncols() + j, &(-qw.column(j)));
    }
    let null = kernel_basis(&joined, tol);
    if null.ncols() == 0 {
        return CMat::zeros(r, 0);
    }
    let coeffs = null.rows(0, qv.ncols()).into_owned();
    orthonormal_span(&(qv * coeffs), tol)
}

/// Eigenvalues via the complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let ev = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur form has no eigenvalues".into()))?;
    Ok(ev.iter().copied().collect())
}

/// Sort key for deterministic eigenvalue orderings: lexicographic on
/// `(Re, Im)`.
pub fn lex_key(z: &C64) -> (f64, f64) {
    (z.re, z.im)
}

pub fn sort_lex(values: &mut [C64]) {
    values.sort_by(|a, b| {
        lex_key(a)
            .partial_cmp(&lex_key(b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Distance between two spectra under the best matching (exact minimum over
/// permutations; ranks here are small).
pub fn spectrum_distance(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute_for_best(&mut idx, 0, a, b, &mut best);
    best
}

fn permute_for_best(idx: &mut Vec<usize>, k: usize, a: &[C64], b: &[C64], best: &mut f64) {
    let n = idx.len();
    if k == n {
        let cost = (0..n).map(|i| (a[i] - b[idx[i]]).norm()).fold(0.0, f64::max);
        if cost < *best {
            *best = cost;
        }
        return;
    }
    for i in k..n {
        idx.swap(k, i);
        // Prune: partial max already worse than the incumbent.
        let partial = (0..=k).map(|i| (a[i] - b[idx[i]]).norm()).fold(0.0, f64::max);
        if partial < *best {
            permute_for_best(idx, k + 1, a, b, best);
        }
        idx.swap(k, i);
    }
}

/// Normalize a vector's phase so the largest-modulus entry is real positive;
/// makes kernel vectors deterministic across runs.
pub fn phase_normalize(v: &mut CVec) {
    let mut best = 0usize;
    let mut mag = 0.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > mag {
            mag = z.norm();
            best = i;
        }
    }
    if mag > 0.0 {
        let phase = v[best] / c(mag, 0.0);
        let corr = phase.conj();
        for z in v.iter_mut() {
            *z *= corr;
        }
    }
}

/// Unitary `Q` with `Q^H A Q` upper triangular and diagonal exactly in the
/// prescribed order.  `order` must be a permutation of the spectrum of `a`
/// within `tol` (matching is the caller's responsibility); repeated values
/// produce Jordan-adapted columns in chain-depth order.
pub fn ordered_triangularization(a: &CMat, order: &[C64], tol: f64) -> Result<CMat> {
    let r = a.nrows();
    assert_eq!(order.len(), r);
    let mut q = identity(r);
    let mut work = a.clone();
    let scale = frob(a).max(1.0);
    for k in 0..r {
        let m = r - k;
        let sub = work.view((k, k), (m, m)).into_owned();
        let shifted = &sub - identity(m) * order[k];
        // Smallest right singular vector approximates the kernel direction.
        let svd = shifted.clone().svd(false, true);
        let vt = svd.v_t.expect("svd v_t");
        let mut smin = f64::INFINITY;
        let mut jmin = 0;
        for (j, s) in svd.singular_values.iter().enumerate() {
            if *s < smin {
                smin = *s;
                jmin = j;
            }
        }
        if smin > tol.max(1e-8) * scale {
            return Err(Error::Numerical(format!(
                "prescribed value {} is not an eigenvalue of the deflated block (residual {smin:.3e})",
                order[k]
            )));
        }
        let mut v: CVec = vt.row(jmin).adjoint();
        phase_normalize(&mut v);
        // Householder-style unitary on the trailing block sending e_1 to v.
        let u = unitary_from_first_column(&v);
        let mut full = identity(r);
        full.view_mut((k, k), (m, m)).copy_from(&u);
        work = full.adjoint() * work * &full;
        q *= &full;
    }
    Ok(q)
}

/// Unitary whose first column is the given unit vector.
fn unitary_from_first_column(v: &CVec) -> CMat {
    let m = v.len();
    let mut u = CMat::zeros(m, m);
    u.set_column(0, v);
    // Complete with Gram-Schmidt over coordinate vectors.
    let mut filled = 1;
    for j in 0..m {
        if filled == m {
            break;
        }
        let mut w = CVec::zeros(m);
        w[j] = c(1.0, 0.0);
        for kcol in 0..filled {
            let qk = u.column(kcol).into_owned();
            let proj = qk.dotc(&w);
            w -= qk * proj;
        }
        let n = w.norm();
        if n > 1e-6 {
            w /= c(n, 0.0);
            u.set_column(filled, &w);
            filled += 1;
        }
    }
    debug_assert_eq!(filled, m);
    u
}

/// Matrix exponential (delegates to nalgebra's scaling-and-squaring).
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Coefficients of `det(X·I - M) = X^r + c_{r-1} X^{r-1} + ... + c_0`,
/// computed from the eigenvalues.
pub fn charpoly_coefficients(m: &CMat) -> Result<Vec<C64>> {
    let ev = eigenvalues(m)?;
    Ok(poly_from_roots(&ev))
}

/// Monic polynomial coefficients `[c_0, ..., c_{r-1}]` with the given roots:
/// `Π (X - root_j) = X^r + c_{r-1} X^{r-1} + ... + c_0`.
pub fn poly_from_roots(roots: &[C64]) -> Vec<C64> {
    let mut coeff = vec![c(1.0, 0.0)];
    for root in roots {
        let mut next = vec![c(0.0, 0.0); coeff.len() + 1];
        for (i, a) in coeff.iter().enumerate() {
            next[i + 1] += *a;
            next[i] -= *a * *root;
        }
        coeff = next;
    }
    coeff.truncate(roots.len());
    coeff
}
