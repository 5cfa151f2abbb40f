//! The Riemann–Hilbert side: loops, parallel transport, the monodromy
//! representation, the local RH comparison, trace-word invariants, and the
//! singular-locus predicate.
//!
//! Sign convention: horizontal sections solve `dY/dz = -A(z) Y`, so the local
//! monodromy around `t_i` has eigenvalues `exp(-2πi λ^(i)_j)`.
//!
//! Orientation convention: loops run counterclockwise; with punctures sorted
//! by *decreasing* argument from the basepoint, the transports compose to
//! `M_{σ(1)} M_{σ(2)} ··· M_{σ(n)} = I` (no pole at ∞) or to the inverse of
//! the ∞ monodromy otherwise.  The convention tag rides along in every
//! representation.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Error;
use crate::integrate::integrate_unit;
use crate::matrix::{
    charpoly_coefficients, expm, frob, identity, kernel_basis, poly_from_roots, CMat, C64,
};
use crate::parabolic::{common_invariant_subspaces, ExponentData, FuchsianSystem};
use crate::sphere::MarkedSphere;
use crate::Result;

pub const CONVENTION: &str =
    "ccw keyhole loops; relation in decreasing-argument order; dY = -A Y dz";

/// A closed polygonal loop with verified winding numbers.
#[derive(Debug, Clone)]
pub struct Loop {
    /// Closed vertex chain; first and last equal the basepoint.
    pub vertices: Vec<C64>,
    /// Index of the puncture this loop encircles once.
    pub encircles: usize,
    /// Winding numbers around every puncture (verified by argument sums).
    pub windings: Vec<i32>,
    /// Verified minimum distance from the loop to any puncture.
    pub clearance: f64,
}

fn winding_number(vertices: &[C64], around: C64) -> i32 {
    let mut total = 0.0;
    for w in vertices.windows(2) {
        let a = w[0] - around;
        let b = w[1] - around;
        total += (b / a).arg();
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i32
}

fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * Complex64::new(t, 0.0))).norm()
}

fn min_clearance(vertices: &[C64], punctures: &[C64]) -> f64 {
    let mut min = f64::INFINITY;
    for w in vertices.windows(2) {
        for t in punctures {
            min = min.min(point_segment_distance(*t, w[0], w[1]));
        }
    }
    min
}

/// Keyhole loops `γ_i` around each finite puncture: out along the ray from
/// the basepoint, once counterclockwise around a small polygonal circle,
/// and back.  Fails with `GeometryTooTight` when any segment dips below the
/// clearance (for instance when another puncture sits near a ray).
pub fn standard_loops(sphere: &MarkedSphere) -> Result<Vec<Loop>> {
    standard_loops_with_clearance(sphere, sphere.clearance())
}

pub fn standard_loops_with_clearance(sphere: &MarkedSphere, delta: f64) -> Result<Vec<Loop>> {
    let z0 = sphere.basepoint();
    let punctures = sphere.punctures();
    const K: usize = 64;
    let radius = delta / (std::f64::consts::PI / K as f64).cos();
    let mut loops = Vec::with_capacity(punctures.len());
    for (i, &t) in punctures.iter().enumerate() {
        let to_t = t - z0;
        let dist = to_t.norm();
        if dist <= radius * 1.5 {
            return Err(Error::GeometryTooTight(format!(
                "basepoint is {dist:.3e} from puncture {i}, need > {:.3e}",
                radius * 1.5
            )));
        }
        let dir = to_t / Complex64::new(dist, 0.0);
        let approach = t - dir * Complex64::new(radius, 0.0);
        let theta0 = (z0 - t).arg();
        let mut vertices = vec![z0, approach];
        for k in 1..=K {
            let angle = theta0 + 2.0 * std::f64::consts::PI * (k as f64) / (K as f64);
            vertices.push(t + Complex64::from_polar(radius, angle));
        }
        vertices.push(z0);

        let clearance = min_clearance(&vertices, punctures);
        if clearance < delta * (1.0 - 1e-9) {
            return Err(Error::GeometryTooTight(format!(
                "loop around puncture {i} passes {clearance:.3e} from a puncture, need ≥ {delta:.3e}"
            )));
        }
        let windings: Vec<i32> = punctures
            .iter()
            .map(|&p| winding_number(&vertices, p))
            .collect();
        for (m, &w) in windings.iter().enumerate() {
            let want = if m == i { 1 } else { 0 };
            if w != want {
                return Err(Error::GeometryTooTight(format!(
                    "loop around puncture {i} winds {w} times around puncture {m} (want {want})"
                )));
            }
        }
        loops.push(Loop { vertices, encircles: i, windings, clearance });
    }
    Ok(loops)
}

/// A counterclockwise circle enclosing all punctures and the basepoint,
/// based at the basepoint (used for the ∞ relation).
fn big_circle(sphere: &MarkedSphere) -> Vec<C64> {
    let z0 = sphere.basepoint();
    let punctures = sphere.punctures();
    let mut center = z0;
    for t in punctures {
        center += t;
    }
    center /= Complex64::new(punctures.len() as f64 + 1.0, 0.0);
    let mut radius: f64 = (z0 - center).norm();
    for t in punctures {
        radius = radius.max((t - center).norm());
    }
    radius = radius * 1.8 + sphere.clearance();
    const K: usize = 96;
    // spoke out to the circle, around, and back
    let theta0 = (z0 - center).arg();
    let start = center + Complex64::from_polar(radius, theta0);
    let mut vertices = vec![z0, start];
    for k in 1..=K {
        let angle = theta0 + 2.0 * std::f64::consts::PI * (k as f64) / (K as f64);
        vertices.push(center + Complex64::from_polar(radius, angle));
    }
    vertices.push(z0);
    vertices
}

/// Fundamental-solution transport along a polygonal path: `Y(start) = I`,
/// `dY/dz = -A(z) Y`, returns `Y(end)` with an accumulated error estimate.
#[derive(Debug, Clone)]
pub struct Transport {
    pub matrix: CMat,
    pub error_estimate: f64,
    pub steps: usize,
    pub rejected: usize,
}

pub fn transport(system: &FuchsianSystem, path: &[C64], tol: f64) -> Result<Transport> {
    if path.len() < 2 {
        return Ok(Transport {
            matrix: identity(system.rank()),
            error_estimate: 0.0,
            steps: 0,
            rejected: 0,
        });
    }
    for w in path.windows(2) {
        for (i, &t) in system.sphere().punctures().iter().enumerate() {
            let d = point_segment_distance(t, w[0], w[1]);
            if d < system.sphere().separation() {
                return Err(Error::GeometryTooTight(format!(
                    "path passes {d:.3e} from puncture {i}"
                )));
            }
        }
    }
    let mut y = identity(system.rank());
    let mut error_estimate = 0.0;
    let mut steps = 0;
    let mut rejected = 0;
    for w in path.windows(2) {
        let (za, zb) = (w[0], w[1]);
        if (zb - za).norm() == 0.0 {
            continue;
        }
        let dz = zb - za;
        let mut f = |s: f64, yv: &CMat| -> CMat {
            let z = za + dz * Complex64::new(s, 0.0);
            -(system.eval(z) * yv * dz)
        };
        let run = integrate_unit(&mut f, y, tol, &[])?;
        y = run.y_end;
        error_estimate += run.error_estimate;
        steps += run.steps;
        rejected += run.rejected;
    }
    Ok(Transport { matrix: y, error_estimate, steps, rejected })
}

/// Fixed-step exponential-product reference: the path is split into `steps`
/// substeps (allocated per segment by length) and the transport is the
/// product of `exp(-A(z_left)·Δz)` factors.  First-order accurate; kept
/// independent of the adaptive integrator to cross-validate it.
pub fn oracle_transport(system: &FuchsianSystem, path: &[C64], steps: usize) -> CMat {
    let r = system.rank();
    let mut t = identity(r);
    if path.len() < 2 || steps == 0 {
        return t;
    }
    let total_len: f64 = path.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if total_len == 0.0 {
        return t;
    }
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let m = ((steps as f64) * len / total_len).ceil().max(1.0) as usize;
        let dz = seg / Complex64::new(m as f64, 0.0);
        for k in 0..m {
            let z = w[0] + dz * Complex64::new(k as f64, 0.0);
            let step = expm(&(-(system.eval(z) * dz)));
            t = step * t;
        }
    }
    t
}

/// The monodromy matrices `M_i = ρ(γ_i)`, one per finite puncture, with the
/// ordering convention and the verified relation residual.
#[derive(Debug, Clone)]
pub struct MonodromyRep {
    pub matrices: Vec<CMat>,
    pub basepoint: C64,
    /// Puncture indices sorted by decreasing argument from the basepoint;
    /// the relation multiplies in this order.
    pub ordering: Vec<usize>,
    pub convention: &'static str,
    pub transport_bounds: Vec<f64>,
    /// ‖M_{σ(1)}···M_{σ(n)} - I‖ (no ∞ pole) or deviation from the
    /// independently transported big-circle monodromy (∞ marked).
    pub relation_residual: f64,
    /// `M_∞` when ∞ is a marked point: inverse of the big-circle transport.
    pub infinity: Option<CMat>,
}

impl MonodromyRep {
    pub fn rank(&self) -> usize {
        self.matrices.first().map_or(0, CMat::nrows)
    }

    /// Product over the ordering convention.
    pub fn ordered_product(&self) -> CMat {
        let r = self.rank();
        let mut p = identity(r);
        for &i in &self.ordering {
            p *= &self.matrices[i];
        }
        p
    }
}

/// Argument sort (decreasing) of punctures as seen from the basepoint.
pub fn argument_ordering(sphere: &MarkedSphere) -> Vec<usize> {
    let z0 = sphere.basepoint();
    let mut idx: Vec<usize> = (0..sphere.num_punctures()).collect();
    idx.sort_by(|&a, &b| {
        let ta = (sphere.punctures()[a] - z0).arg();
        let tb = (sphere.punctures()[b] - z0).arg();
        tb.partial_cmp(&ta).unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Compute the representation by transporting around every standard loop
/// (loops run concurrently; the combination order is fixed).
pub fn monodromy_rep(system: &FuchsianSystem, tol: f64) -> Result<MonodromyRep> {
    let sphere = system.sphere();
    let loops = standard_loops(sphere)?;
    let transports: Vec<Result<Transport>> = loops
        .par_iter()
        .map(|lp| transport(system, &lp.vertices, tol))
        .collect();
    let mut matrices = Vec::with_capacity(loops.len());
    let mut bounds = Vec::with_capacity(loops.len());
    for t in transports {
        let t = t?;
        matrices.push(t.matrix);
        bounds.push(t.error_estimate);
    }
    let ordering = argument_ordering(sphere);

    let scale = matrices.iter().map(frob).fold(1.0, f64::max);
    let sum_norm = frob(&system.residue_sum());
    let has_infinity_pole =
        sphere.include_infinity() && sum_norm > 1e-12 * matrices.len() as f64;

    let mut product = identity(system.rank());
    for &i in &ordering {
        product *= &matrices[i];
    }

    let (relation_residual, infinity) = if has_infinity_pole {
        let big = transport(system, &big_circle(sphere), tol)?;
        let residual = frob(&(&product - &big.matrix)) / scale;
        let m_inf = big.matrix.try_inverse().ok_or_else(|| {
            Error::Numerical("big-circle transport is singular".into())
        })?;
        (residual, Some(m_inf))
    } else {
        (frob(&(&product - identity(system.rank()))) / scale, None)
    };

    Ok(MonodromyRep {
        matrices,
        basepoint: sphere.basepoint(),
        ordering,
        convention: CONVENTION,
        transport_bounds: bounds,
        relation_residual,
        infinity,
    })
}

/// Characteristic-polynomial coefficients of the prescribed local monodromy:
/// per point, `Π_j (X - exp(-2πi λ^(i)_j)) = X^r + a_{r-1} X^{r-1} + ... + a_0`.
#[derive(Debug, Clone)]
pub struct LocalMonodromyData {
    pub a: Vec<Vec<C64>>,
    /// |Π_i a^(i)_0 - (-1)^{rn}|, reported (it vanishes when d ∈ Z).
    pub product_constraint_residual: f64,
}

pub fn rh_map(exponents: &ExponentData) -> LocalMonodromyData {
    let n = exponents.num_points();
    let r = exponents.rank();
    let mut a = Vec::with_capacity(n);
    for i in 0..n {
        let roots: Vec<C64> = (0..r)
            .map(|j| {
                let lam = exponents.value(i, j);
                (-Complex64::new(0.0, 2.0 * std::f64::consts::PI) * lam).exp()
            })
            .collect();
        a.push(poly_from_roots(&roots));
    }
    let mut prod = Complex64::new(1.0, 0.0);
    for row in &a {
        prod *= row[0];
    }
    let sign = if (r * n) % 2 == 0 { 1.0 } else { -1.0 };
    let product_constraint_residual = (prod - Complex64::new(sign, 0.0)).norm();
    LocalMonodromyData { a, product_constraint_residual }
}

/// Per-point comparison of the transported monodromy's characteristic
/// polynomial against `rh(λ)`.
#[derive(Debug, Clone)]
pub struct RhReport {
    pub coefficient_deviations: Vec<f64>,
    pub det_deviations: Vec<f64>,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_rh_consistency(
    rep: &MonodromyRep,
    exponents: &ExponentData,
    tol: f64,
) -> Result<RhReport> {
    let local = rh_map(exponents);
    let mut coefficient_deviations = Vec::with_capacity(rep.matrices.len());
    let mut det_deviations = Vec::with_capacity(rep.matrices.len());
    for (i, m) in rep.matrices.iter().enumerate() {
        let coeffs = charpoly_coefficients(m)?;
        let dev = coeffs
            .iter()
            .zip(&local.a[i])
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        coefficient_deviations.push(dev);
        // det M_i = exp(-2πi Σ_j λ^(i)_j)
        let det = m.determinant();
        let want = (-Complex64::new(0.0, 2.0 * std::f64::consts::PI)
            * exponents.row_sum(i).value())
        .exp();
        det_deviations.push((det - want).norm());
    }
    let max_deviation = coefficient_deviations.iter().copied().fold(0.0, f64::max);
    Ok(RhReport {
        coefficient_deviations,
        det_deviations,
        max_deviation,
        tol,
        pass: max_deviation <= tol,
    })
}

/// Traces of all words in the `M_i` up to a length budget, canonically
/// ordered: equality of these vectors is the computable surrogate for
/// equivalence up to semisimplification at this budget.
#[derive(Debug, Clone)]
pub struct InvariantVector {
    pub budget: usize,
    pub entries: Vec<(Vec<usize>, C64)>,
}

impl InvariantVector {
    /// Maximum entrywise deviation; the word lists must agree.
    pub fn max_deviation(&self, other: &InvariantVector) -> f64 {
        assert_eq!(self.entries.len(), other.entries.len(), "invariant budgets differ");
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|((wa, a), (wb, b))| {
                assert_eq!(wa, wb, "invariant word lists differ");
                (a - b).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn canonical_rotation(word: &[usize]) -> Vec<usize> {
    let mut best = word.to_vec();
    for shift in 1..word.len() {
        let mut rot = word[shift..].to_vec();
        rot.extend_from_slice(&word[..shift]);
        if rot < best {
            best = rot;
        }
    }
    best
}

pub fn rep_invariants(rep: &MonodromyRep, word_budget: usize) -> InvariantVector {
    let n = rep.matrices.len();
    let mut words: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..word_budget {
        let mut next = Vec::new();
        for w in &stack {
            for i in 0..n {
                let mut w2 = w.clone();
                w2.push(i);
                next.push(w2);
            }
        }
        words.extend(next.iter().cloned());
        stack = next;
    }
    // canonicalize under cyclic rotation (traces are rotation invariant)
    let mut canon: Vec<Vec<usize>> = words.into_iter().map(|w| canonical_rotation(&w)).collect();
    canon.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    canon.dedup();

    let entries = canon
        .into_iter()
        .map(|w| {
            let mut p = identity(rep.rank());
            for &i in &w {
                p *= &rep.matrices[i];
            }
            let tr = p.trace();
            (w, tr)
        })
        .collect();
    InvariantVector { budget: word_budget, entries }
}

/// Why a representation sits in the singular locus.
#[derive(Debug, Clone)]
pub enum SingularWitness {
    /// A common invariant subspace of the `M_i` (basis attached).
    Reducible { basis: CMat },
    /// `dim ker(M_i - exp(-2πi λ^(i)_j) I) ≥ 2` at the witnessed `(i, j)`.
    RepeatedEigenspace { point: usize, j: usize, dim: usize },
}

#[derive(Debug, Clone)]
pub struct SingularReport {
    pub singular: bool,
    pub witness: Option<SingularWitness>,
    /// Whether the reducibility search was exhaustive (r ≤ 3).
    pub reducibility_exhaustive: bool,
}

/// Singular-locus predicate: reducible, or some prescribed local eigenvalue
/// has a kernel of dimension ≥ 2 (singular values below `tol` relative to
/// the largest count as zero).
pub fn is_singular_point(
    rep: &MonodromyRep,
    exponents: &ExponentData,
    tol: f64,
) -> Result<SingularReport> {
    let mut reducibility_exhaustive = true;
    match common_invariant_subspaces(&rep.matrices, tol.max(1e-9)) {
        Ok(subs) => {
            if let Some(first) = subs.first() {
                return Ok(SingularReport {
                    singular: true,
                    witness: Some(SingularWitness::Reducible { basis: first.basis.clone() }),
                    reducibility_exhaustive,
                });
            }
        }
        Err(Error::RankBudgetExceeded { .. }) => {
            reducibility_exhaustive = false;
        }
        Err(e) => return Err(e),
    }
    let r = rep.rank();
    for (i, m) in rep.matrices.iter().enumerate() {
        for j in 0..exponents.rank() {
            let mu = (-Complex64::new(0.0, 2.0 * std::f64::consts::PI) * exponents.value(i, j)).exp();
            let d = kernel_basis(&(m - identity(r) * mu), tol).ncols();
            if d >= 2 {
                return Ok(SingularReport {
                    singular: true,
                    witness: Some(SingularWitness::RepeatedEigenspace { point: i, j, dim: d }),
                    reducibility_exhaustive,
                });
            }
        }
    }
    Ok(SingularReport { singular: false, witness: None, reducibility_exhaustive })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::c;

    fn scalar_system() -> FuchsianSystem {
        // r=1, n=2, t=(0,1), λ=(1/2,-1/2)
        let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.5, 1.5), false).unwrap();
        FuchsianSystem::new(
            sphere,
            vec![CMat::from_element(1, 1, c(0.5, 0.0)), CMat::from_element(1, 1, c(-0.5, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn loops_wind_once() {
        let system = scalar_system();
        let loops = standard_loops(system.sphere()).unwrap();
        assert_eq!(loops.len(), 2);
        for (i, lp) in loops.iter().enumerate() {
            assert_eq!(lp.encircles, i);
            for (m, &w) in lp.windings.iter().enumerate() {
                assert_eq!(w, if m == i { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn tight_geometry_rejected() {
        // collinear punctures: the approach ray to t_0 passes through t_1
        let sphere =
            MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)], c(3.0, 0.0), true)
                .unwrap();
        assert!(matches!(standard_loops(&sphere), Err(Error::GeometryTooTight(_))));
    }

    #[test]
    fn zero_system_transports_identity() {
        let sphere = MarkedSphere::new(vec![c(0.0, 0.0)], c(2.0, 0.0), false).unwrap();
        let system = FuchsianSystem::new(sphere, vec![CMat::zeros(2, 2)]).unwrap();
        let loops = standard_loops(system.sphere()).unwrap();
        let t = transport(&system, &loops[0].vertices, 1e-10).unwrap();
        assert!(frob(&(&t.matrix - identity(2))) < 1e-12);
        let o = oracle_transport(&system, &loops[0].vertices, 100);
        assert!(frob(&(&o - identity(2))) < 1e-12);
    }

    #[test]
    fn scalar_half_monodromy() {
        let system = scalar_system();
        let loops = standard_loops(system.sphere()).unwrap();
        let t = transport(&system, &loops[0].vertices, 1e-12).unwrap();
        assert!(
            (t.matrix[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-10,
            "got {}",
            t.matrix[(0, 0)]
        );
    }

    #[test]
    fn rh_map_trivial_exponents() {
        let exps = ExponentData::from_complex_rows(&[
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        let local = rh_map(&exps);
        // (X-1)^2 = X^2 - 2X + 1: a_0 = 1 = (-1)^2, a_1 = -2
        for row in &local.a {
            assert!((row[0] - c(1.0, 0.0)).norm() < 1e-12);
            assert!((row[1] - c(-2.0, 0.0)).norm() < 1e-12);
        }
        assert!(local.product_constraint_residual < 1e-12);
    }

    #[test]
    fn rh_invariant_under_integer_shifts() {
        let exps = ExponentData::from_complex_rows(&[vec![c(0.25, 0.1)], vec![c(-0.25, -0.1)]])
            .unwrap();
        let shifted =
            ExponentData::from_complex_rows(&[vec![c(1.25, 0.1)], vec![c(-1.25, -0.1)]]).unwrap();
        let a = rh_map(&exps);
        let b = rh_map(&shifted);
        for (ra, rb) in a.a.iter().zip(&b.a) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn invariants_conjugation_invariant() {
        let m1 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let m2 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let rep = MonodromyRep {
            matrices: vec![m1.clone(), m2.clone()],
            basepoint: c(0.0, 0.0),
            ordering: vec![0, 1],
            convention: CONVENTION,
            transport_bounds: vec![0.0, 0.0],
            relation_residual: 0.0,
            infinity: None,
        };
        let g = CMat::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.3, 0.0), c(-0.1, 0.5), c(1.0, 0.0)]);
        let ginv = g.clone().try_inverse().unwrap();
        let rep2 = MonodromyRep {
            matrices: vec![&g * &m1 * &ginv, &g * &m2 * &ginv],
            ..rep.clone()
        };
        let ia = rep_invariants(&rep, 3);
        let ib = rep_invariants(&rep2, 3);
        assert!(ia.max_deviation(&ib) < 1e-9);
    }

    #[test]
    fn invariants_see_semisimplification() {
        // block-triangular vs its diagonal: identical trace words
        let tri = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        let dia = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        let mk = |m: &CMat| MonodromyRep {
            matrices: vec![m.clone(), m.clone().try_inverse().unwrap()],
            basepoint: c(0.0, 0.0),
            ordering: vec![0, 1],
            convention: CONVENTION,
            transport_bounds: vec![0.0, 0.0],
            relation_residual: 0.0,
            infinity: None,
        };
        let ia = rep_invariants(&mk(&tri), 3);
        let ib = rep_invariants(&mk(&dia), 3);
        assert!(ia.max_deviation(&ib) < 1e-12);
    }

    #[test]
    fn invariants_separate_distinct_reps() {
        let m1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        let m2a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let m2b = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let mk = |second: &CMat| MonodromyRep {
            matrices: vec![m1.clone(), second.clone()],
            basepoint: c(0.0, 0.0),
            ordering: vec![0, 1],
            convention: CONVENTION,
            transport_bounds: vec![0.0, 0.0],
            relation_residual: 0.0,
            infinity: None,
        };
        let ia = rep_invariants(&mk(&m2a), 2);
        let ib = rep_invariants(&mk(&m2b), 2);
        assert!(ia.max_deviation(&ib) > 0.5);
    }

    #[test]
    fn singular_detection() {
        let exps = ExponentData::from_complex_rows(&[
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        // M_1 = I: kernel of (M - e^0 I) is 2-dimensional
        let rep = MonodromyRep {
            matrices: vec![identity(2), identity(2)],
            basepoint: c(0.0, 0.0),
            ordering: vec![0, 1],
            convention: CONVENTION,
            transport_bounds: vec![0.0, 0.0],
            relation_residual: 0.0,
            infinity: None,
        };
        let rpt = is_singular_point(&rep, &exps, 1e-9).unwrap();
        assert!(rpt.singular);
        // irreducible with regular semisimple local parts and non-resonant λ
        let m1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(2.0, 0.0), c(-0.5, 0.0), c(0.0, 0.0)]);
        let m2 = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)]);
        let rep = MonodromyRep { matrices: vec![m1, m2], ..rep };
        let exps2 = ExponentData::from_complex_rows(&[
            vec![c(0.21, 0.0), c(0.56, 0.0)],
            vec![c(0.13, 0.0), c(0.1, 0.0)],
        ])
        .unwrap();
        let rpt = is_singular_point(&rep, &exps2, 1e-9).unwrap();
        assert!(!rpt.singular, "{:?}", rpt.witness);
    }
}
