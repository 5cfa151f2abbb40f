//! Stability decisions on constructed connections, decided exactly.

mod common;

use common::connection_from_spectra;
use iml_core::exact::{parse_rational, Rational, Scalar};
use iml_core::matrix::{c, CMat};
use iml_core::parabolic::{
    classify_lambda, stability_test, ExponentData, FuchsianSystem, LambdaClass,
    ParabolicConnection, StabilityVerdict, SubbundleCandidate, Weights,
};
use iml_core::MarkedSphere;

fn q(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

fn sq(s: &str) -> Scalar {
    Scalar::from_rational(parse_rational(s).unwrap())
}

/// The split fixture: block-triangular residues with `e_1` the only common
/// invariant line.  λ orders put `e_1` in the flag (weight α_2) at points 3
/// and 4 and out of it (weight α_1) at points 1 and 2.
pub fn split_connection() -> ParabolicConnection {
    let a_diag = ["1/2", "-1/2", "1/4", "-1/4"];
    let b_diag = ["1/3", "-1/3", "1/5", "-1/5"];
    let uppers = [1.0, 1.0, -1.0, -1.0];
    let residues: Vec<CMat> = (0..4)
        .map(|i| {
            CMat::from_row_slice(
                2,
                2,
                &[
                    sq(a_diag[i]).value(),
                    c(uppers[i], 0.0),
                    c(0.0, 0.0),
                    sq(b_diag[i]).value(),
                ],
            )
        })
        .collect();
    let sphere = MarkedSphere::new(
        vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)],
        c(1.5, -2.5),
        false,
    )
    .unwrap();
    let system = FuchsianSystem::new(sphere, residues).unwrap();
    // rows: points 1, 2 ordered (a, b); points 3, 4 ordered (b, a)
    let exps = ExponentData::new(vec![
        vec![sq("1/2"), sq("1/3")],
        vec![sq("-1/2"), sq("-1/3")],
        vec![sq("1/5"), sq("1/4")],
        vec![sq("-1/5"), sq("-1/4")],
    ])
    .unwrap();
    ParabolicConnection::from_system(system, exps).unwrap()
}

/// Destabilizing weights: `e_1`'s parabolic slope exceeds the total slope.
pub fn weights_unstable() -> Weights {
    Weights::new(vec![
        vec![q("102/1010"), q("218/1010")],
        vec![q("113/1010"), q("244/1010")],
        vec![q("125/1010"), q("973/1010")],
        vec![q("139/1010"), q("946/1010")],
    ])
    .unwrap()
}

/// Stabilizing weights for the same connection.
pub fn weights_stable() -> Weights {
    Weights::new(vec![
        vec![q("203/1010"), q("723/1010")],
        vec![q("214/1010"), q("749/1010")],
        vec![q("55/1010"), q("165/1010")],
        vec![q("69/1010"), q("138/1010")],
    ])
    .unwrap()
}

#[test]
fn split_fixture_unstable_under_alpha_a() {
    let conn = split_connection();
    let report = stability_test(&conn, &weights_unstable(), &[], 1e-9).unwrap();
    match report.verdict {
        StabilityVerdict::Unstable { witness } => {
            let eval = &report.evaluations[witness];
            assert_eq!(eval.candidate.rank, 1);
            assert_eq!(eval.candidate.degree, 0);
            // e_1 is inside l_1 exactly at points 3, 4
            assert_eq!(eval.candidate.intersection_dims[0], vec![1, 0]);
            assert_eq!(eval.candidate.intersection_dims[1], vec![1, 0]);
            assert_eq!(eval.candidate.intersection_dims[2], vec![0, 1]);
            assert_eq!(eval.candidate.intersection_dims[3], vec![0, 1]);
            assert!(eval.lhs > eval.rhs);
        }
        other => panic!("expected Unstable, got {other:?}"),
    }
}

#[test]
fn split_fixture_stable_under_alpha_b() {
    let conn = split_connection();
    let report = stability_test(&conn, &weights_stable(), &[], 1e-9).unwrap();
    assert!(matches!(report.verdict, StabilityVerdict::Stable), "{:?}", report.verdict);
    // exactly one auto candidate: the common invariant line e_1
    assert_eq!(report.evaluations.len(), 1);
    assert!(!report.evaluations[0].violates);
}

#[test]
fn both_weight_sets_certified_generic() {
    for w in [weights_unstable(), weights_stable()] {
        let report = w.genericity_certificate();
        assert!(report.generic, "witness {:?}", report.witness);
        assert!(report.exhaustive);
    }
}

#[test]
fn split_lambda_classified_reducible_special() {
    // the sub-line's exponents sum to 0 ∈ Z (s = 1 witness)
    let conn = split_connection();
    match classify_lambda(conn.exponents(), 1e-9) {
        LambdaClass::ReducibleSpecial { s, .. } => assert_eq!(s, 1),
        other => panic!("expected ReducibleSpecial, got {other:?}"),
    }
}

#[test]
fn irreducible_fixture_is_stable() {
    // no invariant subspaces -> empty candidate list -> stable
    let conn = connection_from_spectra(common::seeded_r2n4_system(300, 1.0));
    let weights = weights_stable();
    let report = stability_test(&conn, &weights, &[], 1e-9).unwrap();
    assert!(matches!(report.verdict, StabilityVerdict::Stable));
    assert!(report.evaluations.is_empty());
}

#[test]
fn rank_one_always_stable() {
    let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.4, 1.0), false).unwrap();
    let system = FuchsianSystem::new(
        sphere,
        vec![CMat::from_element(1, 1, c(0.5, 0.0)), CMat::from_element(1, 1, c(-0.5, 0.0))],
    )
    .unwrap();
    let exps = ExponentData::new(vec![vec![sq("1/2")], vec![sq("-1/2")]]).unwrap();
    let conn = ParabolicConnection::from_system(system, exps).unwrap();
    let weights = Weights::new(vec![vec![q("1/3")], vec![q("1/7")]]).unwrap();
    let report = stability_test(&conn, &weights, &[], 1e-9).unwrap();
    assert!(matches!(report.verdict, StabilityVerdict::Stable));
}

#[test]
fn external_candidate_can_destabilize() {
    // stable auto verdict overturned by a supplied deg-0 descriptor sitting
    // deep in every flag
    let conn = split_connection();
    let deep = SubbundleCandidate {
        rank: 1,
        degree: 0,
        intersection_dims: vec![vec![0, 1]; 4],
        label: "externally supplied".into(),
    };
    let report = stability_test(&conn, &weights_stable(), &[deep], 1e-9).unwrap();
    assert!(matches!(report.verdict, StabilityVerdict::Unstable { .. }));
}

#[test]
fn undecided_beyond_rank_budget() {
    // r = 4 diagonal system: enumeration refuses, verdict is Undecided
    let diag = |v: [f64; 4]| {
        CMat::from_fn(4, 4, |i, j| if i == j { c(v[i], 0.0) } else { c(0.0, 0.0) })
    };
    let a = diag([0.1, 0.2, 0.3, 0.15]);
    let b = -a.clone();
    let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.4, 1.1), false).unwrap();
    let system = FuchsianSystem::new(sphere, vec![a, b]).unwrap();
    let exps = ExponentData::from_complex_rows(&[
        vec![c(0.1, 0.0), c(0.2, 0.0), c(0.3, 0.0), c(0.15, 0.0)],
        vec![c(-0.1, 0.0), c(-0.2, 0.0), c(-0.3, 0.0), c(-0.15, 0.0)],
    ])
    .unwrap();
    let conn = ParabolicConnection::from_system(system, exps).unwrap();
    let weights = Weights::new(vec![
        vec![q("1/17"), q("2/17"), q("3/17"), q("4/17")],
        vec![q("1/19"), q("2/19"), q("3/19"), q("4/19")],
    ])
    .unwrap();
    let report = stability_test(&conn, &weights, &[], 1e-9).unwrap();
    assert!(matches!(report.verdict, StabilityVerdict::Undecided { .. }));
}

#[test]
fn scalar_residue_family_lines_are_candidates() {
    // scalar residues: every line is invariant; the flag-aligned line
    // destabilizes for any admissible weights
    let sphere = MarkedSphere::new(vec![c(0.0, 0.0), c(1.0, 0.0)], c(0.4, 1.1), false).unwrap();
    let a = CMat::identity(2, 2) * c(0.5, 0.0);
    let b = -a.clone();
    let system = FuchsianSystem::new(sphere, vec![a, b]).unwrap();
    let exps = ExponentData::new(vec![
        vec![sq("1/2"), sq("1/2")],
        vec![sq("-1/2"), sq("-1/2")],
    ])
    .unwrap();
    let conn = ParabolicConnection::from_system(system, exps).unwrap();
    let weights = Weights::new(vec![
        vec![q("1/10"), q("2/10")],
        vec![q("3/20"), q("7/20")],
    ])
    .unwrap();
    let report = stability_test(&conn, &weights, &[], 1e-9).unwrap();
    assert!(
        matches!(report.verdict, StabilityVerdict::Unstable { .. }),
        "scalar direct sums are never stable: {:?}",
        report.verdict
    );
}
