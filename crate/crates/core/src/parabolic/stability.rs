//! The parabolic slope inequality, decided in exact rational arithmetic.
//!
//! A connection is stable when every proper nonzero invariant subbundle `F`
//! satisfies
//!
//! ```text
//! deg F + Σ_{i,j} α^(i)_j · dim((F∩l_{j-1})/(F∩l_j))     deg E + Σ_{i,j} α^(i)_j
//! ───────────────────────────────────────────────────  <  ──────────────────────
//!                       rank F                                   rank E
//! ```
//!
//! Degrees and intersection dimensions are integers and the weights are
//! rationals, so the comparison never touches floating point.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::Error;
use crate::exact::{format_rational, Rational};
use crate::matrix::{intersection_basis, intersection_dim, orthonormal_span, CMat};
use crate::parabolic::{invariant, ParabolicConnection};
use crate::Result;

/// Stability weights: per point, `0 < α^(i)_1 < ... < α^(i)_r < 1`, all
/// values distinct across `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    alpha: Vec<Vec<Rational>>,
}

impl Weights {
    pub fn new(alpha: Vec<Vec<Rational>>) -> Result<Self> {
        if alpha.is_empty() || alpha[0].is_empty() {
            return Err(Error::Validation("weights must be a nonempty n×r table".into()));
        }
        let r = alpha[0].len();
        let zero = BigRational::zero();
        let one = BigRational::one();
        for (i, row) in alpha.iter().enumerate() {
            if row.len() != r {
                return Err(Error::Validation("ragged weight table".into()));
            }
            for (j, a) in row.iter().enumerate() {
                if *a <= zero || *a >= one {
                    return Err(Error::Validation(format!(
                        "α^({i})_{j} = {} outside (0, 1)",
                        format_rational(a)
                    )));
                }
                if j + 1 < r && row[j] >= row[j + 1] {
                    return Err(Error::Validation(format!(
                        "weights not strictly increasing at point {i}, position {j}"
                    )));
                }
            }
        }
        let mut flat: Vec<&Rational> = alpha.iter().flatten().collect();
        flat.sort();
        for w in flat.windows(2) {
            if w[0] == w[1] {
                return Err(Error::Validation(format!(
                    "duplicate weight {} across (i, j)",
                    format_rational(w[0])
                )));
            }
        }
        Ok(Weights { alpha })
    }

    pub fn num_points(&self) -> usize {
        self.alpha.len()
    }

    pub fn rank(&self) -> usize {
        self.alpha[0].len()
    }

    pub fn alpha(&self) -> &[Vec<Rational>] {
        &self.alpha
    }

    /// Σ over all `(i, j)` of `α^(i)_j`.
    pub fn total(&self) -> Rational {
        self.alpha
            .iter()
            .flatten()
            .fold(BigRational::zero(), |acc, a| acc + a)
    }

    /// Certify that no slope comparison can tie: for every subbundle rank
    /// `f < r` and every 0/1 intersection profile, `r·Σ(α·m) - f·Σα` is not
    /// an integer.  Exhaustive for `r ≤ 3, n ≤ 6`; sampled (deterministically)
    /// beyond that.
    pub fn genericity_certificate(&self) -> GenericityReport {
        let n = self.num_points();
        let r = self.rank();
        let total = self.total();
        let exhaustive = r <= 3 && n <= 6;
        let r_big = BigRational::from_integer((r as i64).into());

        let check = |profile: &[Vec<bool>], f: usize| -> Option<GenericityWitness> {
            let mut sum = BigRational::zero();
            for (i, row) in profile.iter().enumerate() {
                for (j, &pick) in row.iter().enumerate() {
                    if pick {
                        sum += &self.alpha[i][j];
                    }
                }
            }
            let f_big = BigRational::from_integer((f as i64).into());
            let gap = &r_big * sum - f_big * &total;
            if gap.denom().is_one() {
                Some(GenericityWitness {
                    rank: f,
                    profile: profile.to_vec(),
                    gap: format_rational(&gap),
                })
            } else {
                None
            }
        };

        if exhaustive {
            for f in 1..r {
                let rows = profiles_of_weight(r, f);
                let mut choice = vec![0usize; n];
                loop {
                    let profile: Vec<Vec<bool>> =
                        (0..n).map(|i| rows[choice[i]].clone()).collect();
                    if let Some(w) = check(&profile, f) {
                        return GenericityReport { generic: false, exhaustive, witness: Some(w) };
                    }
                    let mut pos = 0;
                    loop {
                        if pos == n {
                            break;
                        }
                        choice[pos] += 1;
                        if choice[pos] < rows.len() {
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
            GenericityReport { generic: true, exhaustive, witness: None }
        } else {
            // deterministic sampling with a small LCG
            let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                state >> 33
            };
            for _ in 0..4096 {
                let f = 1 + (next() as usize) % (r - 1);
                let rows = profiles_of_weight(r, f);
                let profile: Vec<Vec<bool>> =
                    (0..n).map(|_| rows[(next() as usize) % rows.len()].clone()).collect();
                if let Some(w) = check(&profile, f) {
                    return GenericityReport { generic: false, exhaustive, witness: Some(w) };
                }
            }
            GenericityReport { generic: true, exhaustive, witness: None }
        }
    }
}

fn profiles_of_weight(r: usize, f: usize) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << r) {
        if mask.count_ones() as usize == f {
            out.push((0..r).map(|j| mask & (1 << j) != 0).collect());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct GenericityWitness {
    pub rank: usize,
    pub profile: Vec<Vec<bool>>,
    pub gap: String,
}

#[derive(Debug, Clone)]
pub struct GenericityReport {
    pub generic: bool,
    pub exhaustive: bool,
    pub witness: Option<GenericityWitness>,
}

/// Descriptor of an invariant subbundle candidate: rank, degree, and the
/// per-point flag intersection dimensions `m^(i)_j`, `j = 1..r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbundleCandidate {
    pub rank: usize,
    pub degree: i64,
    pub intersection_dims: Vec<Vec<usize>>,
    pub label: String,
}

impl SubbundleCandidate {
    fn validate(&self, n: usize, r: usize) -> Result<()> {
        if self.rank == 0 || self.rank >= r {
            return Err(Error::Validation(format!(
                "candidate rank {} must be proper nonzero (1..{})",
                self.rank, r
            )));
        }
        if self.intersection_dims.len() != n {
            return Err(Error::Validation("candidate must carry one row per puncture".into()));
        }
        for (i, row) in self.intersection_dims.iter().enumerate() {
            if row.len() != r {
                return Err(Error::Validation(format!("candidate row {i} must have length r")));
            }
            let sum: usize = row.iter().sum();
            if sum != self.rank {
                return Err(Error::InconsistentCandidate { point: i, sum, rank: self.rank });
            }
        }
        Ok(())
    }
}

/// Build a candidate descriptor for a trivial subbundle `O ⊗ V` (degree 0)
/// from a subspace basis, computing flag intersection dimensions.
pub fn candidate_from_subspace(
    conn: &ParabolicConnection,
    basis: &CMat,
    tol: f64,
    label: String,
) -> Result<SubbundleCandidate> {
    let r = conn.rank();
    let v = orthonormal_span(basis, tol);
    let f = v.ncols();
    let mut dims = Vec::with_capacity(conn.num_punctures());
    for i in 0..conn.num_punctures() {
        let mut row = Vec::with_capacity(r);
        let mut prev = f;
        for j in 1..=r {
            let lj = conn.flag(i).subspace(j).expect("in range");
            let dim_j = if lj.ncols() == 0 { 0 } else { intersection_dim(&v, &lj, tol) };
            row.push(prev - dim_j);
            prev = dim_j;
        }
        dims.push(row);
    }
    let cand = SubbundleCandidate { rank: f, degree: 0, intersection_dims: dims, label };
    cand.validate(conn.num_punctures(), r)?;
    Ok(cand)
}

#[derive(Debug, Clone)]
pub struct CandidateEvaluation {
    pub candidate: SubbundleCandidate,
    /// Parabolic slope of the candidate, exact.
    pub lhs: Rational,
    /// Parabolic slope of the full connection, exact.
    pub rhs: Rational,
    pub violates: bool,
}

#[derive(Debug, Clone)]
pub enum StabilityVerdict {
    Stable,
    Unstable { witness: usize },
    Undecided { reason: String },
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub evaluations: Vec<CandidateEvaluation>,
    pub exhaustive_enumeration: bool,
}

/// Decide α-stability against the automatically enumerated residue-invariant
/// subspaces (trivial, degree-0 subbundles) plus any externally supplied
/// candidate descriptors.  Enumeration is exhaustive for r ≤ 3; beyond that
/// the verdict degrades to `Undecided` unless a violation is found.
pub fn stability_test(
    conn: &ParabolicConnection,
    weights: &Weights,
    extra: &[SubbundleCandidate],
    tol: f64,
) -> Result<StabilityReport> {
    let r = conn.rank();
    let n = conn.num_punctures();
    if weights.num_points() != n || weights.rank() != r {
        return Err(Error::Validation("weight table shape must match the connection".into()));
    }
    if r == 1 && extra.is_empty() {
        return Ok(StabilityReport {
            verdict: StabilityVerdict::Stable,
            evaluations: Vec::new(),
            exhaustive_enumeration: true,
        });
    }

    let mut candidates: Vec<SubbundleCandidate> = Vec::new();
    let mut exhaustive = true;
    match invariant::residue_invariant_subspaces(conn.system(), r.saturating_sub(1), tol) {
        Ok(subs) => {
            for (k, sub) in subs.iter().enumerate() {
                candidates.push(candidate_from_subspace(
                    conn,
                    &sub.basis,
                    tol,
                    format!("auto-{k} (dim {})", sub.dim()),
                )?);
                // A fat common-eigenspace is a family: every line inside it is
                // invariant too, and the extremal ones sit inside flag steps.
                if sub.dim() >= 2 {
                    for cand in family_line_candidates(conn, &sub.basis, tol, k)? {
                        candidates.push(cand);
                    }
                }
            }
            // All residues scalar: every subspace is invariant and no proper
            // subspace is distinguished; the extremal lines against the flags
            // still decide stability.
            let scale = conn
                .system()
                .residues()
                .iter()
                .map(crate::matrix::frob)
                .fold(1.0, f64::max);
            let all_scalar = conn.system().residues().iter().all(|a| {
                let mean = a.trace() / num_complex::Complex64::new(r as f64, 0.0);
                crate::matrix::frob(&(a - crate::matrix::identity(r) * mean))
                    <= tol.max(1e-10) * scale
            });
            if subs.is_empty() && all_scalar && r >= 2 {
                for cand in
                    family_line_candidates(conn, &crate::matrix::identity(r), tol, usize::MAX)?
                {
                    candidates.push(cand);
                }
            }
        }
        Err(Error::RankBudgetExceeded { .. }) => {
            exhaustive = false;
        }
        Err(e) => return Err(e),
    }
    for c in extra {
        c.validate(n, r)?;
        candidates.push(c.clone());
    }

    // dedup identical descriptors
    candidates.dedup_by(|a, b| {
        a.rank == b.rank && a.degree == b.degree && a.intersection_dims == b.intersection_dims
    });

    let total = weights.total();
    let rhs = (BigRational::from_integer(conn.exponents().degree().into()) + &total)
        / BigRational::from_integer((r as i64).into());

    let mut evaluations = Vec::with_capacity(candidates.len());
    let mut witness = None;
    for (k, cand) in candidates.into_iter().enumerate() {
        let mut weighted = BigRational::from_integer(cand.degree.into());
        for (i, row) in cand.intersection_dims.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m > 0 {
                    weighted += &weights.alpha()[i][j] * BigRational::from_integer((m as i64).into());
                }
            }
        }
        let lhs = weighted / BigRational::from_integer((cand.rank as i64).into());
        let violates = lhs >= rhs;
        if violates && witness.is_none() {
            witness = Some(k);
        }
        evaluations.push(CandidateEvaluation { candidate: cand, lhs, rhs: rhs.clone(), violates });
    }

    let verdict = match witness {
        Some(k) => StabilityVerdict::Unstable { witness: k },
        None if !exhaustive => StabilityVerdict::Undecided {
            reason: format!("invariant-subspace enumeration supports r ≤ 3, got r = {r}"),
        },
        None => StabilityVerdict::Stable,
    };
    Ok(StabilityReport { verdict, evaluations, exhaustive_enumeration: exhaustive })
}

/// Extremal invariant lines inside a fat common-eigenspace family: the lines
/// lying deepest in the flags, found by intersecting the family with every
/// per-point flag-step pattern.  The slope of a line depends only on its
/// flag intersection profile, so these representatives cover the family's
/// worst case.
fn family_line_candidates(
    conn: &ParabolicConnection,
    family: &CMat,
    tol: f64,
    family_idx: usize,
) -> Result<Vec<SubbundleCandidate>> {
    let r = conn.rank();
    let n = conn.num_punctures();
    let mut lines: Vec<CMat> = Vec::new();
    // Deepest flag steps first; refine the family through one flag at a time,
    // keeping every nonzero intersection encountered.
    let mut current: Vec<CMat> = vec![orthonormal_span(family, tol)];
    for i in 0..n {
        let mut next: Vec<CMat> = Vec::new();
        for space in &current {
            next.push(space.clone());
            for j in 1..r {
                let lj = conn.flag(i).subspace(j).expect("in range");
                let meet = intersection_basis(space, &lj, tol);
                if meet.ncols() > 0 {
                    next.push(meet);
                }
            }
        }
        // keep it small: dedup by span
        let mut unique: Vec<CMat> = Vec::new();
        for v in next {
            let dv = v.ncols();
            if !unique
                .iter()
                .any(|w| w.ncols() == dv && intersection_dim(w, &v, tol) == dv)
            {
                unique.push(v);
            }
        }
        current = unique;
    }
    for space in current {
        if space.ncols() >= 1 {
            lines.push(space.columns(0, 1).into_owned());
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines.iter().enumerate() {
        let label = if family_idx == usize::MAX {
            format!("scalar family line {k}")
        } else {
            format!("auto-{family_idx} family line {k}")
        };
        out.push(candidate_from_subspace(conn, line, tol, label)?);
    }
    Ok(out)
}
