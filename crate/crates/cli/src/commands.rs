//! The five commands.  Each returns a report value and whether any check
//! failed (exit code 4); validation and numerical errors surface as
//! `iml_core::Error` and map to exit codes 2 and 3.

use iml_core::exact::Scalar;
use iml_core::matrix::{frob, C64};
use iml_core::monodromy::{
    check_rh_consistency, is_singular_point, monodromy_rep, oracle_transport, rep_invariants,
    rh_map, transport, MonodromyRep, SingularWitness,
};
use iml_core::parabolic::{
    check_compatibility, classify_lambda, moduli_dimension, stability_test, LambdaClass,
    ParabolicConnection, StabilityVerdict,
};
use iml_core::schlesinger::{flow_with_options, verify_isomonodromy_with_options, FlowOptions};
use iml_core::transforms::{elm, normalize_sigma, permute_a, twist_b, TransformKind, TransformRecord};
use iml_core::Error;

use crate::instance::{InstanceFile, TransformStep};
use crate::obj;
use crate::report::Val;

pub struct CommandOutput {
    pub report: Val,
    pub check_failed: bool,
}

fn header(command: &str, inst: &InstanceFile) -> Vec<(String, Val)> {
    vec![
        ("schema_version".to_string(), Val::Int(1)),
        ("tool_version".to_string(), Val::Str(env!("CARGO_PKG_VERSION").to_string())),
        ("command".to_string(), Val::Str(command.to_string())),
        ("seed".to_string(), match inst.seed {
            Some(s) => Val::Int(s as i64),
            None => Val::Null,
        }),
        ("tolerances".to_string(), obj! {
            "base" => Val::Float(inst.tolerances.base),
            "transport" => Val::Float(inst.tolerances.transport),
            "flow" => Val::Float(inst.tolerances.flow),
        }),
    ]
}

fn scalar_val(s: &Scalar) -> Val {
    match s {
        Scalar::Exact(g) => Val::Str(format!("{g}")),
        Scalar::Approx(z) => Val::complex(*z),
    }
}

fn rep_val(rep: &MonodromyRep) -> Val {
    obj! {
        "convention" => Val::Str(rep.convention.to_string()),
        "basepoint" => Val::complex(rep.basepoint),
        "ordering" => Val::Arr(rep.ordering.iter().map(|i| Val::Int(*i as i64 + 1)).collect()),
        "matrices" => Val::Arr(rep.matrices.iter().map(Val::matrix).collect()),
        "transport_error_estimates" => Val::floats(&rep.transport_bounds),
        "relation_residual" => Val::Float(rep.relation_residual),
        "infinity_monodromy" => match &rep.infinity {
            Some(m) => Val::matrix(m),
            None => Val::Null,
        },
    }
}

/// Monodromy + local Riemann-Hilbert comparison + singular-locus verdict.
pub fn cmd_monodromy(inst: &InstanceFile, tol: Option<f64>) -> Result<CommandOutput, Error> {
    let conn = inst.connection()?;
    let rh_tol = tol.unwrap_or(1e-6);
    let rep = monodromy_rep(conn.system(), inst.tolerances.transport)?;
    let rh_report = check_rh_consistency(&rep, conn.exponents(), rh_tol)?;
    let local = rh_map(conn.exponents());
    let singular = is_singular_point(&rep, conn.exponents(), inst.tolerances.base.max(1e-9))?;

    let bound: f64 = rep.transport_bounds.iter().sum();
    let relation_ok = rep.relation_residual <= (10.0 * bound).max(1e-8);
    let check_failed = !rh_report.pass || !relation_ok;

    let mut fields = header("monodromy", inst);
    fields.push(("representation".into(), rep_val(&rep)));
    fields.push(("relation_ok".into(), Val::Bool(relation_ok)));
    fields.push((
        "rh".into(),
        obj! {
            "prescribed_coefficients" => Val::Arr(local.a.iter().map(|row| {
                Val::Arr(row.iter().map(|z| Val::complex(*z)).collect())
            }).collect()),
            "product_constraint_residual" => Val::Float(local.product_constraint_residual),
            "coefficient_deviations" => Val::floats(&rh_report.coefficient_deviations),
            "det_deviations" => Val::floats(&rh_report.det_deviations),
            "max_deviation" => Val::Float(rh_report.max_deviation),
            "tol" => Val::Float(rh_report.tol),
            "pass" => Val::Bool(rh_report.pass),
        },
    ));
    fields.push((
        "singular_locus".into(),
        obj! {
            "singular" => Val::Bool(singular.singular),
            "reducibility_exhaustive" => Val::Bool(singular.reducibility_exhaustive),
            "witness" => match &singular.witness {
                None => Val::Null,
                Some(SingularWitness::Reducible { basis }) => obj! {
                    "kind" => Val::Str("reducible".into()),
                    "invariant_subspace" => Val::matrix(basis),
                },
                Some(SingularWitness::RepeatedEigenspace { point, j, dim }) => obj! {
                    "kind" => Val::Str("repeated_eigenspace".into()),
                    "point" => Val::Int(*point as i64 + 1),
                    "j" => Val::Int(*j as i64),
                    "dim" => Val::Int(*dim as i64),
                },
            },
        },
    ));
    Ok(CommandOutput { report: Val::Obj(fields), check_failed })
}

/// α-stability with exact slope comparisons.
pub fn cmd_stability(inst: &InstanceFile, tol: Option<f64>) -> Result<CommandOutput, Error> {
    let conn = inst.connection()?;
    let weights = inst
        .weights()?
        .ok_or_else(|| Error::Validation("stability needs a weights table".into()))?;
    let base_tol = tol.unwrap_or(inst.tolerances.base);
    let genericity = weights.genericity_certificate();
    let report = stability_test(&conn, &weights, &[], base_tol)?;

    let verdict = match &report.verdict {
        StabilityVerdict::Stable => Val::Str("stable".into()),
        StabilityVerdict::Unstable { .. } => Val::Str("unstable".into()),
        StabilityVerdict::Undecided { .. } => Val::Str("undecided".into()),
    };
    let witness = match &report.verdict {
        StabilityVerdict::Unstable { witness } => Val::Int(*witness as i64),
        _ => Val::Null,
    };
    let reason = match &report.verdict {
        StabilityVerdict::Undecided { reason } => Val::Str(reason.clone()),
        _ => Val::Null,
    };

    let mut fields = header("stability", inst);
    fields.push((
        "genericity".into(),
        obj! {
            "generic" => Val::Bool(genericity.generic),
            "exhaustive" => Val::Bool(genericity.exhaustive),
        },
    ));
    fields.push(("verdict".into(), verdict));
    fields.push(("witness".into(), witness));
    fields.push(("undecided_reason".into(), reason));
    fields.push(("exhaustive_enumeration".into(), Val::Bool(report.exhaustive_enumeration)));
    fields.push((
        "candidates".into(),
        Val::Arr(
            report
                .evaluations
                .iter()
                .map(|e| {
                    obj! {
                        "label" => Val::Str(e.candidate.label.clone()),
                        "rank" => Val::Int(e.candidate.rank as i64),
                        "degree" => Val::Int(e.candidate.degree),
                        "intersection_dims" => Val::Arr(e.candidate.intersection_dims.iter().map(|row| {
                            Val::Arr(row.iter().map(|m| Val::Int(*m as i64)).collect())
                        }).collect()),
                        "slope" => Val::rational(&e.lhs),
                        "total_slope" => Val::rational(&e.rhs),
                        "violates" => Val::Bool(e.violates),
                    }
                })
                .collect(),
        ),
    ));
    Ok(CommandOutput { report: Val::Obj(fields), check_failed: false })
}

fn record_val(rec: &TransformRecord) -> Val {
    let kind = match &rec.kind {
        TransformKind::Elm { point, level } => obj! {
            "op" => Val::Str("elm".into()),
            "point" => Val::Int(*point as i64 + 1),
            "level" => Val::Int(*level as i64),
        },
        TransformKind::Permute { point, permutation, tie_broken_by_im } => obj! {
            "op" => Val::Str("permute".into()),
            "point" => Val::Int(*point as i64 + 1),
            "permutation" => Val::Arr(permutation.iter().map(|k| Val::Int(*k as i64)).collect()),
            "tie_broken_by_im" => Val::Bool(*tie_broken_by_im),
        },
        TransformKind::Twist { point, direction } => obj! {
            "op" => Val::Str("twist".into()),
            "point" => Val::Int(*point as i64 + 1),
            "direction" => Val::Int(*direction as i64),
        },
        TransformKind::Gauge { description } => obj! {
            "op" => Val::Str("gauge".into()),
            "description" => Val::Str(description.clone()),
        },
    };
    obj! {
        "kind" => kind,
        "row_before" => Val::Arr(rec.row_before.iter().map(scalar_val).collect()),
        "row_after" => Val::Arr(rec.row_after.iter().map(scalar_val).collect()),
        "degree_delta" => Val::Int(rec.degree_delta),
    }
}

/// Serialize a connection back into instance-file form (the output of a
/// transform run is itself a usable instance).
fn instance_val(conn: &ParabolicConnection, template: &InstanceFile) -> Val {
    let system = conn.system();
    obj! {
        "schema_version" => Val::Int(1),
        "rank" => Val::Int(conn.rank() as i64),
        "punctures" => Val::Arr(system.sphere().punctures().iter().map(|t| Val::complex(*t)).collect()),
        "include_infinity" => Val::Bool(system.sphere().include_infinity()),
        "basepoint" => Val::complex(system.sphere().basepoint()),
        "residues" => Val::Arr(system.residues().iter().map(Val::matrix).collect()),
        "lambda" => Val::Arr(conn.exponents().rows().iter().map(|row| {
            Val::Arr(row.iter().map(|s| match s {
                Scalar::Exact(g) => {
                    if g.is_real() {
                        Val::Str(iml_core::exact::format_rational(&g.re))
                    } else {
                        Val::Arr(vec![
                            Val::Str(iml_core::exact::format_rational(&g.re)),
                            Val::Str(iml_core::exact::format_rational(&g.im)),
                        ])
                    }
                }
                Scalar::Approx(z) => Val::complex(*z),
            }).collect())
        }).collect()),
        "seed" => match template.seed {
            Some(s) => Val::Int(s as i64),
            None => Val::Null,
        },
    }
}

/// Apply the instance's transform script and emit the transformed instance.
pub fn cmd_transform(inst: &InstanceFile, tol: Option<f64>) -> Result<CommandOutput, Error> {
    let base_tol = tol.unwrap_or(inst.tolerances.base);
    let mut conn = inst.connection()?;
    let mut log: Vec<TransformRecord> = Vec::new();
    let script = inst.transform_script.clone().unwrap_or_default();
    for step in &script {
        match step {
            TransformStep::Elm { point, level } => {
                let idx = point
                    .checked_sub(1)
                    .ok_or_else(|| Error::Validation("points are 1-based".into()))?;
                let (next, rec) = elm(&conn, idx, *level, base_tol)?;
                conn = next;
                log.push(rec);
            }
            TransformStep::Twist { point, direction } => {
                let idx = point
                    .checked_sub(1)
                    .ok_or_else(|| Error::Validation("points are 1-based".into()))?;
                let (next, rec) = twist_b(&conn, idx, *direction)?;
                conn = next;
                log.push(rec);
            }
            TransformStep::Permute { point } => {
                let idx = point
                    .checked_sub(1)
                    .ok_or_else(|| Error::Validation("points are 1-based".into()))?;
                let (next, rec) = permute_a(&conn, idx, base_tol)?;
                conn = next;
                log.push(rec);
            }
            TransformStep::Normalize => {
                let (next, recs) = normalize_sigma(&conn, base_tol)?;
                conn = next;
                log.extend(recs);
            }
        }
    }
    let compat = check_compatibility(&conn, (base_tol * 10.0).max(1e-7));
    let check_failed = !compat.pass;

    let mut fields = header("transform", inst);
    fields.push(("steps_applied".into(), Val::Int(log.len() as i64)));
    fields.push(("log".into(), Val::Arr(log.iter().map(record_val).collect())));
    fields.push(("degree".into(), Val::Int(conn.exponents().degree())));
    fields.push((
        "compatibility".into(),
        obj! {
            "worst_residual" => Val::Float(compat.worst()),
            "tol" => Val::Float(compat.tol),
            "pass" => Val::Bool(compat.pass),
        },
    ));
    fields.push(("output_instance".into(), instance_val(&conn, inst)));
    Ok(CommandOutput { report: Val::Obj(fields), check_failed })
}

/// Schlesinger flow along the instance's deformation path with isomonodromy
/// certification.
pub fn cmd_flow(inst: &InstanceFile, tol: Option<f64>) -> Result<CommandOutput, Error> {
    let conn = inst.connection()?;
    let path = inst
        .path()?
        .ok_or_else(|| Error::Validation("flow needs a deformation_path".into()))?;
    let options = FlowOptions { tol: inst.tolerances.flow, ..FlowOptions::default() };
    let result = flow_with_options(&conn, &path, &options)?;
    let iso_tol = tol.unwrap_or(1e-6);
    let iso = verify_isomonodromy_with_options(&conn, &path, iso_tol, &options)?;
    let check_failed = !iso.pass
        || result.conservation.sum_drift > 1e-9
        || result.conservation.spectrum_drift > 1e-8;

    let mut fields = header("flow", inst);
    fields.push((
        "endpoint".into(),
        obj! {
            "config" => Val::Arr(result.endpoint.system().sphere().punctures().iter().map(|t| Val::complex(*t)).collect()),
            "residues" => Val::Arr(result.endpoint.system().residues().iter().map(Val::matrix).collect()),
        },
    ));
    fields.push((
        "conservation".into(),
        obj! {
            "sum_drift" => Val::Float(result.conservation.sum_drift),
            "spectrum_drift" => Val::Float(result.conservation.spectrum_drift),
        },
    ));
    fields.push((
        "isomonodromy".into(),
        obj! {
            "invariant_deviation" => Val::Float(iso.deviation),
            "tol" => Val::Float(iso.tol),
            "pass" => Val::Bool(iso.pass),
            "relation_residual_start" => Val::Float(iso.relation_residual_start),
            "relation_residual_end" => Val::Float(iso.relation_residual_end),
        },
    ));
    fields.push((
        "stats".into(),
        obj! {
            "steps" => Val::Int(result.stats.steps as i64),
            "rejected" => Val::Int(result.stats.rejected as i64),
            "error_estimate" => Val::Float(result.stats.error_estimate),
        },
    ));
    fields.push((
        "checkpoints".into(),
        Val::Arr(
            result
                .checkpoints
                .iter()
                .map(|cp| {
                    obj! {
                        "s" => Val::Float(cp.s),
                        "config" => Val::Arr(cp.config.iter().map(|t| Val::complex(*t)).collect()),
                        "residue_norms" => Val::floats(&cp.residues.iter().map(frob).collect::<Vec<_>>()),
                    }
                })
                .collect(),
        ),
    ));
    Ok(CommandOutput { report: Val::Obj(fields), check_failed })
}

/// The full property suite on one instance.
pub fn cmd_verify(inst: &InstanceFile, tol: Option<f64>) -> Result<CommandOutput, Error> {
    let conn = inst.connection()?;
    let base_tol = tol.unwrap_or(inst.tolerances.base);
    let mut checks: Vec<(String, Val)> = Vec::new();
    let mut all_pass = true;
    let record = |pass: bool, detail: Val, all: &mut bool| -> Val {
        *all &= pass;
        detail
    };

    // dimension arithmetic
    let g = 0;
    let r = conn.rank() as i64;
    let n = conn.num_punctures() as i64;
    let dim = moduli_dimension(g, r, n);
    checks.push((
        "dimension".into(),
        obj! {
            "genus" => Val::Int(g),
            "rank" => Val::Int(r),
            "points" => Val::Int(n),
            "dimension" => Val::Int(dim.dimension),
            "assumption_rn_minus_2r_minus_2_positive" => Val::Bool(dim.assumption_satisfied),
        },
    ));

    // compatibility
    let compat = check_compatibility(&conn, base_tol.max(1e-8));
    let compat_pass = compat.pass;
    checks.push((
        "compatibility".into(),
        record(
            compat_pass,
            obj! {
                "worst_residual" => Val::Float(compat.worst()),
                "pass" => Val::Bool(compat_pass),
            },
            &mut all_pass,
        ),
    ));

    // λ classification and degree
    let class = classify_lambda(conn.exponents(), base_tol.max(1e-9));
    checks.push((
        "lambda".into(),
        obj! {
            "degree" => Val::Int(conn.exponents().degree()),
            "exact" => Val::Bool(conn.exponents().is_exact()),
            "class" => Val::Str(match &class {
                LambdaClass::Generic { exhaustive: true } => "generic".to_string(),
                LambdaClass::Generic { exhaustive: false } => "generic (within searched budget)".to_string(),
                LambdaClass::Resonant { .. } => "resonant".to_string(),
                LambdaClass::ReducibleSpecial { .. } => "reducible-special".to_string(),
            }),
        },
    ));

    // monodromy, relation, rh, determinant products
    let rep = monodromy_rep(conn.system(), inst.tolerances.transport)?;
    let bound: f64 = rep.transport_bounds.iter().sum();
    let relation_pass = rep.relation_residual <= (10.0 * bound).max(1e-8);
    let rh_report = check_rh_consistency(&rep, conn.exponents(), 1e-6)?;
    let det_pass = rh_report.det_deviations.iter().all(|d| *d <= 1e-6);
    checks.push((
        "monodromy".into(),
        record(
            relation_pass && rh_report.pass && det_pass,
            obj! {
                "relation_residual" => Val::Float(rep.relation_residual),
                "relation_pass" => Val::Bool(relation_pass),
                "rh_max_deviation" => Val::Float(rh_report.max_deviation),
                "rh_pass" => Val::Bool(rh_report.pass),
                "det_pass" => Val::Bool(det_pass),
            },
            &mut all_pass,
        ),
    ));

    // oracle cross-check on a short displaced segment near the basepoint
    let z0 = conn.system().sphere().basepoint();
    let probe_end = z0 + (z0 - conn.system().sphere().punctures()[0]) * num_complex::Complex64::new(0.15, 0.05);
    let probe = vec![z0, probe_end];
    let adaptive = transport(conn.system(), &probe, inst.tolerances.transport)?;
    let oracle = oracle_transport(conn.system(), &probe, 100_000);
    let oracle_gap = frob(&(&oracle - &adaptive.matrix));
    let oracle_pass = oracle_gap <= 1e-6;
    checks.push((
        "oracle".into(),
        record(
            oracle_pass,
            obj! {
                "gap" => Val::Float(oracle_gap),
                "steps" => Val::Int(100_000),
                "pass" => Val::Bool(oracle_pass),
            },
            &mut all_pass,
        ),
    ));

    // transform invariance spot check (needs r >= 2)
    if conn.rank() >= 2 {
        let before = rep_invariants(&rep, 2);
        let (transformed, _) = elm(&conn, 0, 1, base_tol)?;
        let rep_after = monodromy_rep(transformed.system(), inst.tolerances.transport)?;
        let after = rep_invariants(&rep_after, 2);
        let dev = before.max_deviation(&after);
        let pass = dev <= 1e-6;
        checks.push((
            "transform_invariance".into(),
            record(
                pass,
                obj! {
                    "trace_word_deviation" => Val::Float(dev),
                    "pass" => Val::Bool(pass),
                },
                &mut all_pass,
            ),
        ));
    }

    // singular locus
    let singular = is_singular_point(&rep, conn.exponents(), base_tol.max(1e-9))?;
    checks.push((
        "singular_locus".into(),
        obj! {
            "singular" => Val::Bool(singular.singular),
        },
    ));

    // flow conservation when a path is present
    if let Some(path) = inst.path()? {
        let options = FlowOptions { tol: inst.tolerances.flow, ..FlowOptions::default() };
        let result = flow_with_options(&conn, &path, &options)?;
        let pass = result.conservation.sum_drift <= 1e-9
            && result.conservation.spectrum_drift <= 1e-8;
        checks.push((
            "flow_conservation".into(),
            record(
                pass,
                obj! {
                    "sum_drift" => Val::Float(result.conservation.sum_drift),
                    "spectrum_drift" => Val::Float(result.conservation.spectrum_drift),
                    "pass" => Val::Bool(pass),
                },
                &mut all_pass,
            ),
        ));
    }

    all_pass &= compat_pass;

    let mut fields = header("verify", inst);
    fields.push(("dimension".into(), Val::Int(dim.dimension)));
    fields.push(("dimension_assumption_warning".into(), Val::Bool(!dim.assumption_satisfied)));
    for (name, val) in checks {
        fields.push((name, val));
    }
    fields.push(("all_checks_pass".into(), Val::Bool(all_pass)));
    Ok(CommandOutput { report: Val::Obj(fields), check_failed: !all_pass })
}

/// Helper shared by tests: exponent rows as complex values.
pub fn exponent_rows(conn: &ParabolicConnection) -> Vec<Vec<C64>> {
    conn.exponents()
        .rows()
        .iter()
        .map(|row| row.iter().map(Scalar::value).collect())
        .collect()
}
