//! Parabolic connections on the trivial-bundle chart of the sphere.
//!
//! A connection is the Fuchsian system `d + Σ A_i dz/(z - t_i)` together with
//! local exponent data λ (one row per puncture, summing against the degree)
//! and one full flag per puncture compatible with the residue:
//! `(A_i - λ^(i)_j)·l^(i)_j ⊆ l^(i)_{j+1}`.

pub mod invariant;
pub mod stability;

pub use invariant::{common_invariant_subspaces, residue_invariant_subspaces, InvariantSubspace};
pub use stability::{
    stability_test, CandidateEvaluation, StabilityReport, StabilityVerdict, SubbundleCandidate,
    Weights,
};

use num_complex::Complex64;

use crate::error::Error;
use crate::exact::Scalar;
use crate::flag::Flag;
use crate::matrix::{
    self, eigenvalues, frob, identity, ordered_triangularization, orthonormal_span, CMat, C64,
};
use crate::sphere::MarkedSphere;
use crate::transforms::TransformRecord;
use crate::{Result, DEFAULT_TOL};

/// The n×r table of local exponents with its bookkeeping degree `d = -Σλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentData {
    rows: Vec<Vec<Scalar>>,
    degree: i64,
}

impl ExponentData {
    /// Build from rows, computing and checking the degree.
    pub fn new(rows: Vec<Vec<Scalar>>) -> Result<Self> {
        let degree = degree_of(&rows)?;
        Ok(ExponentData { rows, degree })
    }

    /// All-float rows from complex values.
    pub fn from_complex_rows(rows: &[Vec<C64>]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|row| row.iter().map(|z| Scalar::from_complex(*z)).collect())
                .collect(),
        )
    }

    pub fn num_points(&self) -> usize {
        self.rows.len()
    }

    pub fn rank(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn degree(&self) -> i64 {
        self.degree
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.rows[i]
    }

    pub fn value(&self, i: usize, j: usize) -> C64 {
        self.rows[i][j].value()
    }

    /// True iff every entry is exact.
    pub fn is_exact(&self) -> bool {
        self.rows.iter().flatten().all(Scalar::is_exact)
    }

    /// Row sum as a scalar (exact when the row is).
    pub fn row_sum(&self, i: usize) -> Scalar {
        self.rows[i]
            .iter()
            .fold(Scalar::from_integer(0), |acc, s| acc.add(s))
    }

    /// Replace one row, recomputing the degree.
    pub fn with_row(&self, i: usize, row: Vec<Scalar>) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows[i] = row;
        Self::new(rows)
    }
}

/// `d := -Σ λ`, required to be an integer: exactly in exact mode, within
/// `1e-9` in float mode.
pub fn degree_of(rows: &[Vec<Scalar>]) -> Result<i64> {
    let total = rows
        .iter()
        .flatten()
        .fold(Scalar::from_integer(0), |acc, s| acc.add(s));
    let minus = match &total {
        Scalar::Exact(g) => Scalar::Exact(-g.clone()),
        Scalar::Approx(z) => Scalar::Approx(-z),
    };
    let dist = minus.integer_distance();
    let ok = match &minus {
        Scalar::Exact(g) => g.is_integer(),
        Scalar::Approx(_) => dist <= 1e-9,
    };
    if !ok {
        return Err(Error::NonIntegralDegree { value: format!("{minus}"), distance: dist });
    }
    Ok(minus.value().re.round() as i64)
}

/// The Fuchsian system `d + Σ A_i dz/(z - t_i)` on the trivial rank-r bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FuchsianSystem {
    sphere: MarkedSphere,
    residues: Vec<CMat>,
    rank: usize,
}

impl FuchsianSystem {
    pub fn new(sphere: MarkedSphere, residues: Vec<CMat>) -> Result<Self> {
        if residues.len() != sphere.num_punctures() {
            return Err(Error::Validation(format!(
                "{} residues for {} punctures",
                residues.len(),
                sphere.num_punctures()
            )));
        }
        let rank = residues.first().map_or(0, CMat::nrows);
        if rank == 0 {
            return Err(Error::Validation("rank must be at least 1".into()));
        }
        for (i, a) in residues.iter().enumerate() {
            if a.nrows() != rank || a.ncols() != rank {
                return Err(Error::Validation(format!("residue {i} is not {rank}x{rank}")));
            }
            matrix::check_finite(a, &format!("residue {i}"))?;
        }
        let system = FuchsianSystem { sphere, residues, rank };
        if !system.sphere.include_infinity() {
            let scale = system.residues.iter().map(frob).fold(1.0, f64::max);
            let sum_norm = frob(&system.residue_sum());
            if sum_norm > DEFAULT_TOL * scale * 10.0 {
                return Err(Error::Validation(format!(
                    "ΣA_i has norm {sum_norm:.3e} but ∞ is not a marked point"
                )));
            }
        }
        Ok(system)
    }

    pub fn sphere(&self) -> &MarkedSphere {
        &self.sphere
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_punctures(&self) -> usize {
        self.residues.len()
    }

    pub fn residues(&self) -> &[CMat] {
        &self.residues
    }

    pub fn residue(&self, i: usize) -> &CMat {
        &self.residues[i]
    }

    pub fn residue_sum(&self) -> CMat {
        let mut sum = CMat::zeros(self.rank, self.rank);
        for a in &self.residues {
            sum += a;
        }
        sum
    }

    /// Residue at ∞, `A_∞ = -Σ A_i`.
    pub fn infinity_residue(&self) -> CMat {
        -self.residue_sum()
    }

    /// Connection matrix `A(z) = Σ A_i / (z - t_i)`.
    pub fn eval(&self, z: C64) -> CMat {
        let mut out = CMat::zeros(self.rank, self.rank);
        for (a, t) in self.residues.iter().zip(self.sphere.punctures()) {
            out += a * Complex64::new(1.0, 0.0) / (z - t);
        }
        out
    }

    /// Same punctures, conjugated residues `U A_i U^{-1}`.
    pub fn conjugated(&self, u: &CMat) -> Result<Self> {
        let uinv = u
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Validation("conjugating matrix is singular".into()))?;
        let residues = self.residues.iter().map(|a| u * a * &uinv).collect();
        FuchsianSystem::new(self.sphere.clone(), residues)
    }
}

/// A Fuchsian system with exponent data and compatible flags.
#[derive(Debug, Clone)]
pub struct ParabolicConnection {
    system: FuchsianSystem,
    exponents: ExponentData,
    flags: Vec<Flag>,
    provenance: Vec<TransformRecord>,
}

impl ParabolicConnection {
    /// Validates shapes, the per-point trace condition
    /// `tr A_i = Σ_j λ^(i)_j`, and flag compatibility at `tol`.
    pub fn new(
        system: FuchsianSystem,
        exponents: ExponentData,
        flags: Vec<Flag>,
        tol: f64,
    ) -> Result<Self> {
        if exponents.num_points() != system.num_punctures() {
            return Err(Error::Validation("exponent rows != number of punctures".into()));
        }
        if exponents.rank() != system.rank() {
            return Err(Error::Validation("exponent row length != rank".into()));
        }
        if flags.len() != system.num_punctures() {
            return Err(Error::Validation("one flag per puncture required".into()));
        }
        for (i, f) in flags.iter().enumerate() {
            if f.rank() != system.rank() {
                return Err(Error::Validation(format!("flag {i} has wrong rank")));
            }
        }
        for i in 0..system.num_punctures() {
            let tr = system.residue(i).trace();
            let want = exponents.row_sum(i).value();
            let scale = frob(system.residue(i)).max(1.0);
            if (tr - want).norm() > tol * scale * 10.0 {
                return Err(Error::Validation(format!(
                    "tr A_{i} = {tr} but Σλ^({i}) = {want}"
                )));
            }
        }
        let conn = ParabolicConnection { system, exponents, flags, provenance: Vec::new() };
        let report = check_compatibility(&conn, tol);
        if !report.pass {
            return Err(Error::Validation(format!(
                "flag compatibility fails: worst residual {:.3e} > tol {tol:.3e}",
                report.worst()
            )));
        }
        Ok(conn)
    }

    /// Construct with flags built from the residues for the given exponents.
    pub fn from_system(system: FuchsianSystem, exponents: ExponentData) -> Result<Self> {
        let flags = build_flags(&system, &exponents, DEFAULT_TOL)?;
        Self::new(system, exponents, flags, 1e-7)
    }

    /// Rebuild without validation; used by transforms whose outputs are
    /// verified by their own tests.  The caller promises consistency.
    pub(crate) fn assemble(
        system: FuchsianSystem,
        exponents: ExponentData,
        flags: Vec<Flag>,
        provenance: Vec<TransformRecord>,
    ) -> Self {
        ParabolicConnection { system, exponents, flags, provenance }
    }

    pub fn system(&self) -> &FuchsianSystem {
        &self.system
    }

    pub fn exponents(&self) -> &ExponentData {
        &self.exponents
    }

    pub fn flags(&self) -> &[Flag] {
        &self.flags
    }

    pub fn flag(&self, i: usize) -> &Flag {
        &self.flags[i]
    }

    pub fn rank(&self) -> usize {
        self.system.rank()
    }

    pub fn num_punctures(&self) -> usize {
        self.system.num_punctures()
    }

    /// Transform history since construction.
    pub fn provenance(&self) -> &[TransformRecord] {
        &self.provenance
    }
}

/// Per-(i, j) compatibility residuals, relative to `max(1, ‖A_i‖_F)`.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub residuals: Vec<Vec<f64>>,
    pub tol: f64,
    pub pass: bool,
}

impl CompatibilityReport {
    pub fn worst(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// Residual of `(A_i - λ^(i)_j I) l^(i)_j ⊆ l^(i)_{j+1}` for every i, j.
pub fn check_compatibility(conn: &ParabolicConnection, tol: f64) -> CompatibilityReport {
    let r = conn.rank();
    let mut residuals = Vec::with_capacity(conn.num_punctures());
    for i in 0..conn.num_punctures() {
        let a = conn.system.residue(i);
        let scale = frob(a).max(1.0);
        let mut per_point = Vec::with_capacity(r);
        for j in 0..r {
            let lj = conn.flags[i].subspace(j).expect("index in range");
            let lj1 = conn.flags[i].subspace(j + 1).expect("index in range");
            let qj = orthonormal_span(&lj, 1e-13);
            let image = (a - identity(r) * conn.exponents.value(i, j)) * qj;
            let resid = if lj1.ncols() == 0 {
                frob(&image)
            } else {
                let qj1 = orthonormal_span(&lj1, 1e-13);
                frob(&(&image - &qj1 * (qj1.adjoint() * &image)))
            };
            per_point.push(resid / scale);
        }
        residuals.push(per_point);
    }
    let pass = residuals.iter().flatten().all(|&x| x <= tol);
    CompatibilityReport { residuals, tol, pass }
}

/// One compatible flag per puncture, ordering generalized eigenvectors to
/// match the prescribed λ row.  Fails with `SpectrumMismatch` when a row is
/// not a permutation of the residue spectrum within `match_tol` (relative to
/// the residue norm).
pub fn build_flags(
    system: &FuchsianSystem,
    exponents: &ExponentData,
    match_tol: f64,
) -> Result<Vec<Flag>> {
    let r = system.rank();
    let mut flags = Vec::with_capacity(system.num_punctures());
    for i in 0..system.num_punctures() {
        let a = system.residue(i);
        let scale = frob(a).max(1.0);
        let spec = eigenvalues(a)?;
        // Greedy multiset matching of the λ row against the spectrum.
        let mut used = vec![false; r];
        let mut matched = Vec::with_capacity(r);
        let mut worst_gap: f64 = 0.0;
        for j in 0..r {
            let lam = exponents.value(i, j);
            let mut best = usize::MAX;
            let mut best_gap = f64::INFINITY;
            for (k, mu) in spec.iter().enumerate() {
                if !used[k] {
                    let gap = (lam - mu).norm();
                    if gap < best_gap {
                        best_gap = gap;
                        best = k;
                    }
                }
            }
            used[best] = true;
            matched.push(spec[best]);
            worst_gap = worst_gap.max(best_gap);
        }
        let threshold = match_tol.max(1e-6) * scale;
        if worst_gap > threshold {
            return Err(Error::SpectrumMismatch { point: i, gap: worst_gap });
        }
        // Deflate in reversed order so the adapted basis is lower-triangular
        // with diagonal (λ_0, ..., λ_{r-1}).
        let reversed: Vec<C64> = matched.iter().rev().copied().collect();
        let q = ordered_triangularization(a, &reversed, match_tol)?;
        let mut basis = CMat::zeros(r, r);
        for k in 0..r {
            basis.set_column(k, &q.column(r - 1 - k));
        }
        flags.push(Flag::new(basis)?);
    }
    Ok(flags)
}

/// How a λ table sits relative to the integer lattice.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaClass {
    /// No resonance and no integral subset sums (within the searched budget).
    Generic { exhaustive: bool },
    /// `λ^(i)_j - λ^(i)_k ∈ Z` for the witnessed `(i, j, k)`.
    Resonant { point: usize, j: usize, k: usize },
    /// Size-`s` index subsets per point whose total λ sum is an integer;
    /// a reducible connection with these exponents can exist.
    ReducibleSpecial { s: usize, subsets: Vec<Vec<usize>> },
}

/// Classify λ as generic, resonant, or reducible-special.
///
/// Resonance is checked exhaustively.  The subset-sum condition enumerates
/// one size-`s` index subset per point for `1 ≤ s ≤ r-1`; the search is
/// exhaustive for `r ≤ 4, n ≤ 6` and otherwise reports
/// `Generic { exhaustive: false }`.
pub fn classify_lambda(exponents: &ExponentData, tol: f64) -> LambdaClass {
    let n = exponents.num_points();
    let r = exponents.rank();
    // (1) resonance
    for i in 0..n {
        for j in 0..r {
            for k in (j + 1)..r {
                let diff = exponents.row(i)[j].sub(&exponents.row(i)[k]);
                if diff.is_integer_within(tol) {
                    return LambdaClass::Resonant { point: i, j, k };
                }
            }
        }
    }
    // (2) integral subset sums, one subset of size s per point
    if r > 4 || n > 6 {
        return LambdaClass::Generic { exhaustive: false };
    }
    for s in 1..r {
        let per_point: Vec<Vec<Vec<usize>>> = (0..n)
            .map(|_| subsets_of_size(r, s))
            .collect();
        let mut choice = vec![0usize; n];
        loop {
            let mut sum = Scalar::from_integer(0);
            for i in 0..n {
                for &j in &per_point[i][choice[i]] {
                    sum = sum.add(&exponents.row(i)[j]);
                }
            }
            if sum.is_integer_within(tol) {
                let subsets = (0..n).map(|i| per_point[i][choice[i]].clone()).collect();
                return LambdaClass::ReducibleSpecial { s, subsets };
            }
            // advance the mixed-radix counter
            let mut pos = 0;
            loop {
                if pos == n {
                    break;
                }
                choice[pos] += 1;
                if choice[pos] < per_point[pos].len() {
                    break;
                }
                choice[pos] = 0;
                pos += 1;
            }
            if pos == n {
                break;
            }
        }
    }
    LambdaClass::Generic { exhaustive: true }
}

fn subsets_of_size(r: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, r: usize, s: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == s {
            out.push(current.clone());
            return;
        }
        for j in start..r {
            current.push(j);
            rec(j + 1, r, s, current, out);
            current.pop();
        }
    }
    rec(0, r, s, &mut current, &mut out);
    out
}

/// Moduli dimension `2r²(g-1) + nr(r-1) + 2`, with the genus-zero
/// non-degeneracy assumption `rn - 2r - 2 > 0` reported alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionReport {
    pub dimension: i64,
    pub assumption_satisfied: bool,
}

pub fn moduli_dimension(g: i64, r: i64, n: i64) -> DimensionReport {
    let dimension = 2 * r * r * (g - 1) + n * r * (r - 1) + 2;
    let assumption_satisfied = if g == 0 { r * n - 2 * r - 2 > 0 } else { true };
    DimensionReport { dimension, assumption_satisfied }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::parse_rational;
    use crate::matrix::c;

    fn scalar_q(s: &str) -> Scalar {
        Scalar::from_rational(parse_rational(s).unwrap())
    }

    #[test]
    fn degree_arithmetic() {
        // all zero -> 0
        let rows = vec![vec![Scalar::from_integer(0); 2]; 3];
        assert_eq!(degree_of(&rows).unwrap(), 0);
        // r=1, n=2, (1/2, -1/2) -> 0
        let rows = vec![vec![scalar_q("1/2")], vec![scalar_q("-1/2")]];
        assert_eq!(degree_of(&rows).unwrap(), 0);
        // r=2, n=1, (-1/2, -1/2) -> 1
        let rows = vec![vec![scalar_q("-1/2"), scalar_q("-1/2")]];
        assert_eq!(degree_of(&rows).unwrap(), 1);
        // non-integral
        let rows = vec![vec![scalar_q("1/3")]];
        assert!(matches!(degree_of(&rows), Err(Error::NonIntegralDegree { .. })));
    }

    #[test]
    fn degree_invariant_under_row_permutation() {
        let rows = vec![vec![scalar_q("1/2"), scalar_q("-1/3"), scalar_q("-1/6")]];
        let mut permuted = rows.clone();
        permuted[0].swap(0, 2);
        assert_eq!(degree_of(&rows).unwrap(), degree_of(&permuted).unwrap());
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(moduli_dimension(0, 2, 4).dimension, 2);
        assert_eq!(moduli_dimension(0, 2, 5).dimension, 4);
        assert_eq!(moduli_dimension(0, 2, 6).dimension, 6);
        assert_eq!(moduli_dimension(0, 1, 5).dimension, 0);
        assert!(moduli_dimension(0, 2, 4).assumption_satisfied); // 8-4-2 = 2 > 0
        assert!(!moduli_dimension(0, 2, 3).assumption_satisfied); // 6-4-2 = 0
    }

    #[test]
    fn classify_resonant() {
        // r=2, n=4, one row (0, 1): difference 1 ∈ Z
        let mut rows = vec![vec![scalar_q("1/5"), scalar_q("2/7")]; 4];
        rows[2] = vec![Scalar::from_integer(0), Scalar::from_integer(1)];
        // fix degree integrality: sum = 1/5+2/7 times 3 + 1 -> not integral; classify doesn't need ExponentData
        let exps = ExponentData { rows, degree: 0 };
        assert!(matches!(classify_lambda(&exps, 1e-9), LambdaClass::Resonant { point: 2, .. }));
    }

    #[test]
    fn classify_reducible_special_r3() {
        // r=3, n=2 with λ^(1)_0+λ^(1)_1+λ^(2)_0+λ^(2)_1 = 1 -> s=2 witness
        let rows = vec![
            vec![scalar_q("1/4"), scalar_q("1/3"), scalar_q("1/7")],
            vec![scalar_q("1/5"), scalar_q("13/60"), scalar_q("1/11")],
        ];
        let exps = ExponentData { rows, degree: 0 };
        match classify_lambda(&exps, 1e-9) {
            LambdaClass::ReducibleSpecial { s, subsets } => {
                assert_eq!(s, 2);
                assert_eq!(subsets.len(), 2);
            }
            other => panic!("expected ReducibleSpecial, got {other:?}"),
        }
    }

    #[test]
    fn classify_generic_irrationalish() {
        let rows = vec![
            vec![Scalar::from_f64(0.131_717_171), Scalar::from_f64(0.367_291_113)],
            vec![Scalar::from_f64(-0.221_133_791), Scalar::from_f64(0.450_919_101)],
            vec![Scalar::from_f64(0.099_183_551), Scalar::from_f64(-0.301_411_119)],
            vec![Scalar::from_f64(-0.155_155_001), Scalar::from_f64(-0.371_411_025)],
        ];
        let exps = ExponentData { rows, degree: 0 };
        assert!(matches!(classify_lambda(&exps, 1e-9), LambdaClass::Generic { exhaustive: true }));
    }

    #[test]
    fn resonance_survives_integer_shifts() {
        let rows = vec![vec![scalar_q("1/3"), scalar_q("1/3")]];
        let exps = ExponentData { rows, degree: 0 };
        assert!(matches!(classify_lambda(&exps, 1e-9), LambdaClass::Resonant { .. }));
        let shifted = vec![vec![scalar_q("1/3").add_integer(2), scalar_q("1/3").add_integer(-1)]];
        let exps = ExponentData { rows: shifted, degree: 0 };
        assert!(matches!(classify_lambda(&exps, 1e-9), LambdaClass::Resonant { .. }));
    }

    fn diag_system(spectra: &[(f64, f64)]) -> (FuchsianSystem, ExponentData) {
        // n diagonal 2x2 residues with given (a, b) and a balancing last one
        let n = spectra.len() + 1;
        let mut residues: Vec<CMat> = spectra
            .iter()
            .map(|(a, b)| CMat::from_diagonal(&crate::matrix::CVec::from_column_slice(&[
                c(*a, 0.0),
                c(*b, 0.0),
            ])))
            .collect();
        let mut last = CMat::zeros(2, 2);
        for m in &residues {
            last -= m;
        }
        residues.push(last);
        let punctures: Vec<C64> = (0..n).map(|k| c(k as f64, 0.0)).collect();
        let sphere = MarkedSphere::new(punctures, c(0.5, 2.0), false).unwrap();
        let rows: Vec<Vec<C64>> = residues
            .iter()
            .map(|m| vec![m[(0, 0)], m[(1, 1)]])
            .collect();
        let system = FuchsianSystem::new(sphere, residues).unwrap();
        let exps = ExponentData::from_complex_rows(&rows).unwrap();
        (system, exps)
    }

    #[test]
    fn build_flags_diagonal() {
        let (system, exps) = diag_system(&[(0.25, -0.5), (0.3, 0.1)]);
        let flags = build_flags(&system, &exps, DEFAULT_TOL).unwrap();
        let conn = ParabolicConnection::new(system, exps, flags, 1e-9).unwrap();
        let report = check_compatibility(&conn, 1e-9);
        assert!(report.pass, "residuals: {:?}", report.residuals);
        // a ≠ b: l_1 must be the second eigenline: for diag(a, b) with row
        // (a, b), l_1 = span(e2).
        let l1 = conn.flag(0).subspace(1).unwrap();
        assert!(l1[(0, 0)].norm() < 1e-9);
    }

    #[test]
    fn build_flags_scalar_residue() {
        // scalar residue: every flag is compatible; construction succeeds
        let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.4, 1.0), false).unwrap();
        let a = identity(2) * c(0.5, 0.0);
        let b = identity(2) * c(-0.5, 0.0);
        let system = FuchsianSystem::new(sphere, vec![a, b]).unwrap();
        let exps = ExponentData::from_complex_rows(&[
            vec![c(0.5, 0.0), c(0.5, 0.0)],
            vec![c(-0.5, 0.0), c(-0.5, 0.0)],
        ])
        .unwrap();
        let flags = build_flags(&system, &exps, DEFAULT_TOL).unwrap();
        let conn = ParabolicConnection::new(system, exps, flags, 1e-9).unwrap();
        assert!(check_compatibility(&conn, 1e-9).pass);
    }

    #[test]
    fn build_flags_spectrum_mismatch() {
        let (system, _) = diag_system(&[(0.0, 1.0)]);
        let bad = ExponentData::from_complex_rows(&[
            vec![c(0.0, 0.0), c(2.0, 0.0)],
            vec![c(0.0, 0.0), c(-1.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(
            build_flags(&system, &bad, DEFAULT_TOL),
            Err(Error::SpectrumMismatch { point: 0, .. })
        ));
    }

    #[test]
    fn compatibility_fails_for_wrong_flag() {
        // upper-triangular residue, wrong flag l_1 = span(e2)
        let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.4, 1.0), false).unwrap();
        let a = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)]);
        let b = -a.clone();
        let system = FuchsianSystem::new(sphere, vec![a, b]).unwrap();
        let exps = ExponentData::from_complex_rows(&[
            vec![c(0.3, 0.0), c(-0.2, 0.0)],
            vec![c(-0.3, 0.0), c(0.2, 0.0)],
        ])
        .unwrap();
        // correct flags pass (upper-tri A with row (λ0, λ1): l_1 = span(e1))
        let good = build_flags(&system, &exps, DEFAULT_TOL).unwrap();
        let conn = ParabolicConnection::assemble(system.clone(), exps.clone(), good, vec![]);
        assert!(check_compatibility(&conn, 1e-9).pass);
        // wrong flag: l_1 = span(e2) while λ_0 ≠ λ_1
        let wrong = vec![Flag::standard(2), Flag::standard(2)];
        let conn = ParabolicConnection::assemble(system, exps, wrong, vec![]);
        assert!(!check_compatibility(&conn, 1e-9).pass);
    }

    #[test]
    fn compatibility_residual_is_conjugation_invariant() {
        let (system, exps) = diag_system(&[(0.25, -0.5), (0.3, 0.1)]);
        let flags = build_flags(&system, &exps, DEFAULT_TOL).unwrap();
        let conn =
            ParabolicConnection::new(system.clone(), exps.clone(), flags.clone(), 1e-9).unwrap();
        let before = check_compatibility(&conn, 1e-9);

        let u = CMat::from_row_slice(2, 2, &[c(1.0, 0.2), c(0.5, -0.1), c(-0.3, 0.4), c(0.9, 0.0)]);
        let conj = system.conjugated(&u).unwrap();
        let new_flags: Vec<Flag> = flags
            .iter()
            .map(|f| Flag::new(&u * f.basis()).unwrap())
            .collect();
        let conn_c = ParabolicConnection::assemble(conj, exps, new_flags, vec![]);
        let after = check_compatibility(&conn_c, 1e-9);
        // residuals are zero for both (exactly compatible data)
        assert!(before.worst() < 1e-10);
        assert!(after.worst() < 1e-8);
    }
}
