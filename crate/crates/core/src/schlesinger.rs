//! Isomonodromic deformation: the Schlesinger vector field, its integration
//! along paths in the puncture configuration space, conservation reporting,
//! numerical isomonodromy certification, and the horizontal-lift harness.
//!
//! The residues evolve by
//! `∂A_i/∂t_j = -[A_i, A_j]/(t_i - t_j)` for `j ≠ i` and
//! `∂A_i/∂t_i = Σ_{k≠i} [A_i, A_k]/(t_i - t_k)`, so along a path with
//! velocities `dt` each derivative is a sum of commutators weighted by
//! `(dt_i - dt_k)/(t_i - t_k)` — Lax form, hence isospectral, with `Σ A_i`
//! conserved identically.

use num_complex::Complex64;

use crate::error::Error;
use crate::exact::Scalar;
use crate::integrate::integrate_unit;
use crate::matrix::{commutator, eigenvalues, frob, sort_lex, CMat, C64};
use crate::monodromy::{monodromy_rep, rep_invariants};
use crate::parabolic::{build_flags, FuchsianSystem, ParabolicConnection};
use crate::transforms::{normalize_sigma, TransformRecord};
use crate::{Result, DEFAULT_TOL};

/// Piecewise-linear path in the configuration space of distinct punctures.
#[derive(Debug, Clone)]
pub struct DeformationPath {
    configs: Vec<Vec<C64>>,
    moving: Vec<bool>,
    clearance: f64,
}

impl DeformationPath {
    /// Validates: at least one configuration, constant length, punctures
    /// pairwise distinct along every linear piece with clearance
    /// `1e-3 × diameter` of the start configuration.
    pub fn new(configs: Vec<Vec<C64>>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Validation("deformation path needs a configuration".into()));
        }
        let n = configs[0].len();
        if n < 2 {
            return Err(Error::Validation("need at least two punctures to deform".into()));
        }
        for (k, cfg) in configs.iter().enumerate() {
            if cfg.len() != n {
                return Err(Error::Validation(format!(
                    "configuration {k} has {} punctures, expected {n}",
                    cfg.len()
                )));
            }
        }
        let mut diameter = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                diameter = diameter.max((configs[0][i] - configs[0][j]).norm());
            }
        }
        let clearance = 1e-3 * diameter;
        let mut moving = vec![false; n];
        for w in configs.windows(2) {
            for i in 0..n {
                if (w[1][i] - w[0][i]).norm() > 0.0 {
                    moving[i] = true;
                }
            }
        }
        let path = DeformationPath { configs, moving, clearance };
        path.check_clearance()?;
        Ok(path)
    }

    fn check_clearance(&self) -> Result<()> {
        let n = self.num_punctures();
        for (seg, w) in self.configs.windows(2).enumerate() {
            for i in 0..n {
                for j in (i + 1)..n {
                    let a = w[0][i] - w[0][j];
                    let u = (w[1][i] - w[1][j]) - a;
                    let d = min_linear_distance(a, u);
                    if d < self.clearance {
                        let frac = seg as f64 / (self.configs.len() - 1).max(1) as f64;
                        return Err(Error::ConfigurationCollision {
                            i,
                            j,
                            distance: d,
                            clearance: self.clearance,
                            at: frac,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_punctures(&self) -> usize {
        self.configs[0].len()
    }

    pub fn configs(&self) -> &[Vec<C64>] {
        &self.configs
    }

    pub fn moving(&self) -> &[bool] {
        &self.moving
    }

    pub fn start(&self) -> &[C64] {
        &self.configs[0]
    }

    pub fn end(&self) -> &[C64] {
        self.configs.last().expect("nonempty")
    }

    pub fn reversed(&self) -> DeformationPath {
        let mut configs = self.configs.clone();
        configs.reverse();
        DeformationPath { configs, moving: self.moving.clone(), clearance: self.clearance }
    }

    /// Segment weights proportional to configuration-space arc length.
    fn segment_lengths(&self) -> Vec<f64> {
        self.configs
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (b - a).norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Minimum of `|a + s·u|` over `s ∈ [0, 1]`.
fn min_linear_distance(a: C64, u: C64) -> f64 {
    let uu = u.norm_sqr();
    if uu == 0.0 {
        return a.norm();
    }
    let s = -((a.re * u.re + a.im * u.im) / uu);
    let s = s.clamp(0.0, 1.0);
    (a + u * Complex64::new(s, 0.0)).norm()
}

/// The Schlesinger right-hand side along moving directions `dt`:
/// `dA_i = Σ_{k≠i} [A_i, A_k] · (dt_i - dt_k)/(t_i - t_k)`.
pub fn schlesinger_rhs(t: &[C64], a: &[CMat], dt: &[C64]) -> Result<Vec<CMat>> {
    let n = t.len();
    let r = a.first().map_or(0, CMat::nrows);
    let mut out = vec![CMat::zeros(r, r); n];
    for i in 0..n {
        for k in 0..n {
            if k == i {
                continue;
            }
            let gap = t[i] - t[k];
            if gap.norm() == 0.0 {
                return Err(Error::ConfigurationCollision {
                    i,
                    j: k,
                    distance: 0.0,
                    clearance: 0.0,
                    at: f64::NAN,
                });
            }
            let weight = (dt[i] - dt[k]) / gap;
            if weight.norm() > 0.0 {
                out[i] += commutator(&a[i], &a[k]) * weight;
            }
        }
    }
    Ok(out)
}

/// Vector-field variants: the honest Schlesinger field and a deliberately
/// corrupted one (the diagonal commutator sum dropped) used as a negative
/// control in isomonodromy certification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsVariant {
    Schlesinger,
    /// Keeps only the off-diagonal terms `-[A_i, A_j]/(t_i - t_j)·dt_j`;
    /// not isomonodromic, breaks conservation.
    TruncatedCommutators,
}

fn rhs_variant(t: &[C64], a: &[CMat], dt: &[C64], variant: RhsVariant) -> Result<Vec<CMat>> {
    match variant {
        RhsVariant::Schlesinger => schlesinger_rhs(t, a, dt),
        RhsVariant::TruncatedCommutators => {
            let n = t.len();
            let r = a.first().map_or(0, CMat::nrows);
            let mut out = vec![CMat::zeros(r, r); n];
            for i in 0..n {
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let weight = -dt[j] / (t[i] - t[j]);
                    if weight.norm() > 0.0 {
                        out[i] += commutator(&a[i], &a[j]) * weight;
                    }
                }
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowCheckpoint {
    /// Global arc-length fraction in `[0, 1]`.
    pub s: f64,
    pub config: Vec<C64>,
    pub residues: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct ConservationReport {
    /// `max_s ‖Σ A_i(s) - Σ A_i(0)‖` over checkpoints.
    pub sum_drift: f64,
    /// `max_{i, s}` of the sorted-eigenvalue distance of `A_i(s)` from
    /// `A_i(0)`.
    pub spectrum_drift: f64,
}

#[derive(Debug, Clone)]
pub struct FlowStats {
    pub steps: usize,
    pub rejected: usize,
    pub error_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub endpoint: ParabolicConnection,
    pub checkpoints: Vec<FlowCheckpoint>,
    pub conservation: ConservationReport,
    pub stats: FlowStats,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub tol: f64,
    pub chart_exit_threshold: f64,
    pub variant: RhsVariant,
    /// Dense-output samples per path segment.
    pub samples_per_segment: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-11,
            chart_exit_threshold: 1e6,
            variant: RhsVariant::Schlesinger,
            samples_per_segment: 64,
        }
    }
}

/// Integrate the Schlesinger system along the path.  The endpoint carries
/// the *same* exponents (they are flow invariants) with flags rebuilt from
/// the endpoint residues; the conservation report certifies `Σ A_i` and the
/// per-matrix spectra.
pub fn flow(conn: &ParabolicConnection, path: &DeformationPath, tol: f64) -> Result<FlowResult> {
    flow_with_options(conn, path, &FlowOptions { tol, ..FlowOptions::default() })
}

pub fn flow_with_options(
    conn: &ParabolicConnection,
    path: &DeformationPath,
    options: &FlowOptions,
) -> Result<FlowResult> {
    let (result, termination) = flow_raw(conn, path, options)?;
    match termination {
        FlowTermination::Completed => Ok(result),
        FlowTermination::ChartExit { at, point, norm } => Err(Error::ChartExit {
            at,
            point,
            norm,
            threshold: options.chart_exit_threshold,
        }),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FlowTermination {
    Completed,
    ChartExit { at: f64, point: usize, norm: f64 },
}

/// Internal flow that reports a chart exit instead of erroring, keeping the
/// partial trajectory (the horizontal-lift harness needs both).
pub fn flow_raw(
    conn: &ParabolicConnection,
    path: &DeformationPath,
    options: &FlowOptions,
) -> Result<(FlowResult, FlowTermination)> {
    let system = conn.system();
    let n = system.num_punctures();
    if path.num_punctures() != n {
        return Err(Error::Validation("path and connection puncture counts differ".into()));
    }
    let start_gap: f64 = path
        .start()
        .iter()
        .zip(system.sphere().punctures())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if start_gap > 1e-9 {
        return Err(Error::Validation(format!(
            "path start differs from the connection's punctures by {start_gap:.3e}"
        )));
    }

    let seg_lengths = path.segment_lengths();
    let total_length: f64 = seg_lengths.iter().sum();
    let mut s_done = 0.0; // global arc-length covered

    let mut residues: Vec<CMat> = system.residues().to_vec();
    let sum0 = system.residue_sum();
    let spectra0: Vec<Vec<C64>> = residues
        .iter()
        .map(|m| {
            let mut ev = eigenvalues(m).expect("residue eigenvalues");
            sort_lex(&mut ev);
            ev
        })
        .collect();

    let mut checkpoints: Vec<FlowCheckpoint> = vec![FlowCheckpoint {
        s: 0.0,
        config: path.start().to_vec(),
        residues: residues.clone(),
    }];
    let mut sum_drift = 0.0f64;
    let mut spectrum_drift = 0.0f64;
    let mut stats = FlowStats { steps: 0, rejected: 0, error_estimate: 0.0 };
    let mut termination = FlowTermination::Completed;

    'segments: for (seg, w) in path.configs().windows(2).enumerate() {
        let seg_len = seg_lengths[seg];
        if seg_len == 0.0 {
            continue;
        }
        let t0 = w[0].clone();
        let dt: Vec<C64> = w[1].iter().zip(&t0).map(|(b, a)| b - a).collect();
        let variant = options.variant;
        let t0c = t0.clone();
        let dtc = dt.clone();
        let mut f = move |s: f64, a: &Vec<CMat>| -> Vec<CMat> {
            let t: Vec<C64> = t0c
                .iter()
                .zip(&dtc)
                .map(|(a0, d)| a0 + d * Complex64::new(s, 0.0))
                .collect();
            rhs_variant(&t, a, &dtc, variant).expect("clearance was pre-validated")
        };
        let forced: Vec<f64> = (1..=options.samples_per_segment)
            .map(|k| k as f64 / options.samples_per_segment as f64)
            .collect();
        let run = integrate_unit(&mut f, residues.clone(), options.tol, &forced)?;
        stats.steps += run.steps;
        stats.rejected += run.rejected;
        stats.error_estimate += run.error_estimate;

        for (s_local, state) in &run.samples {
            let s_global = (s_done + s_local * seg_len) / total_length;
            let config: Vec<C64> = t0
                .iter()
                .zip(&dt)
                .map(|(a0, d)| a0 + d * Complex64::new(*s_local, 0.0))
                .collect();
            // conservation monitoring
            let mut sum = CMat::zeros(system.rank(), system.rank());
            for m in state {
                sum += m;
            }
            sum_drift = sum_drift.max(frob(&(&sum - &sum0)));
            for (i, m) in state.iter().enumerate() {
                let mut ev = eigenvalues(m)?;
                sort_lex(&mut ev);
                let d = crate::matrix::spectrum_distance(&ev, &spectra0[i]);
                spectrum_drift = spectrum_drift.max(d);
                let norm = frob(m);
                if norm > options.chart_exit_threshold {
                    termination = FlowTermination::ChartExit { at: s_global, point: i, norm };
                }
            }
            checkpoints.push(FlowCheckpoint { s: s_global, config, residues: state.clone() });
            if !matches!(termination, FlowTermination::Completed) {
                residues = state.clone();
                break 'segments;
            }
        }
        residues = run.y_end;
        s_done += seg_len;
    }

    // endpoint connection: same λ, flags rebuilt at the endpoint.  A field
    // that fails to conserve Σ A_i (the corrupted control does) leaves the
    // no-pole-at-∞ chart; mark ∞ rather than failing validation.
    let end_config = checkpoints.last().expect("at least the start").config.clone();
    let mut end_sum = CMat::zeros(system.rank(), system.rank());
    for m in &residues {
        end_sum += m;
    }
    let scale = residues.iter().map(frob).fold(1.0, f64::max);
    let include_infinity =
        system.sphere().include_infinity() || frob(&end_sum) > DEFAULT_TOL * scale * 10.0;
    let end_sphere = crate::sphere::MarkedSphere::with_separation(
        end_config,
        system.sphere().basepoint(),
        include_infinity,
        system.sphere().separation(),
    )?;
    let end_system = FuchsianSystem::new(end_sphere, residues)?;
    let flags = build_flags(&end_system, conn.exponents(), DEFAULT_TOL)?;
    let endpoint = ParabolicConnection::assemble(
        end_system,
        conn.exponents().clone(),
        flags,
        conn.provenance().to_vec(),
    );

    Ok((
        FlowResult {
            endpoint,
            checkpoints,
            conservation: ConservationReport { sum_drift, spectrum_drift },
            stats,
        },
        termination,
    ))
}

#[derive(Debug, Clone)]
pub struct IsomonodromyReport {
    pub deviation: f64,
    pub tol: f64,
    pub pass: bool,
    pub relation_residual_start: f64,
    pub relation_residual_end: f64,
    pub conservation: ConservationReport,
}

/// Certify that monodromy invariants are flat along the flow: loops are
/// rebuilt at both endpoint configurations under the same argument-sorted
/// convention, so the path must not cross the basepoint's sorting cut
/// (`OrderingCutCrossed` surfaces the braid bookkeeping instead of hiding
/// it).
pub fn verify_isomonodromy(
    conn: &ParabolicConnection,
    path: &DeformationPath,
    tol: f64,
) -> Result<IsomonodromyReport> {
    verify_isomonodromy_with_options(conn, path, tol, &FlowOptions::default())
}

pub fn verify_isomonodromy_with_options(
    conn: &ParabolicConnection,
    path: &DeformationPath,
    tol: f64,
    options: &FlowOptions,
) -> Result<IsomonodromyReport> {
    let result = flow_with_options(conn, path, options)?;
    check_ordering_stability(conn.system().sphere().basepoint(), &result.checkpoints)?;

    let transport_tol = (options.tol * 0.1).max(1e-13);
    let rep_start = monodromy_rep(conn.system(), transport_tol)?;
    let rep_end = monodromy_rep(result.endpoint.system(), transport_tol)?;
    let inv_start = rep_invariants(&rep_start, 3);
    let inv_end = rep_invariants(&rep_end, 3);
    let deviation = inv_start.max_deviation(&inv_end);
    Ok(IsomonodromyReport {
        deviation,
        tol,
        pass: deviation <= tol,
        relation_residual_start: rep_start.relation_residual,
        relation_residual_end: rep_end.relation_residual,
        conservation: result.conservation,
    })
}

/// The argument-sort permutation must stay constant and no puncture may wrap
/// through the branch cut of `arg(t - z0)` between checkpoints.
fn check_ordering_stability(basepoint: C64, checkpoints: &[FlowCheckpoint]) -> Result<()> {
    let mut reference: Option<Vec<usize>> = None;
    let mut prev_args: Option<Vec<f64>> = None;
    for cp in checkpoints {
        let sphere_args: Vec<f64> = cp.config.iter().map(|t| (t - basepoint).arg()).collect();
        let mut idx: Vec<usize> = (0..sphere_args.len()).collect();
        idx.sort_by(|&a, &b| {
            sphere_args[b]
                .partial_cmp(&sphere_args[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        match &reference {
            None => reference = Some(idx),
            Some(want) => {
                if *want != idx {
                    return Err(Error::OrderingCutCrossed {
                        at: cp.s,
                        detail: "argument sort order of the punctures changed".into(),
                    });
                }
            }
        }
        if let Some(prev) = &prev_args {
            for (i, (a, b)) in prev.iter().zip(&sphere_args).enumerate() {
                if (a - b).abs() > std::f64::consts::PI {
                    return Err(Error::OrderingCutCrossed {
                        at: cp.s,
                        detail: format!("puncture {i} wrapped through the argument cut"),
                    });
                }
            }
        }
        prev_args = Some(sphere_args);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LiftOptions {
    pub flow: FlowOptions,
    /// Apply normalizing transforms when residue norms pass this value.
    pub regularize: bool,
    pub soft_threshold: f64,
    /// Give up after this many regularization events.
    pub max_regularizations: usize,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions {
            flow: FlowOptions::default(),
            regularize: false,
            soft_threshold: 1e3,
            max_regularizations: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftPoint {
    pub s: f64,
    pub config: Vec<C64>,
    pub residues: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    pub endpoint: ParabolicConnection,
    pub trajectory: Vec<LiftPoint>,
    /// Chart-switch events: global s and the transform log applied there.
    pub transforms: Vec<(f64, Vec<TransformRecord>)>,
}

/// Dense horizontal lift of the path through the connection.  With
/// `regularize` enabled, when residue norms pass the soft threshold the
/// harness applies the normalizing transform chain (a chart switch on the
/// same local system), records it, and continues; otherwise growth runs
/// into `ChartExit` as in `flow`.
pub fn horizontal_lift(
    conn: &ParabolicConnection,
    path: &DeformationPath,
    tol: f64,
    options: &LiftOptions,
) -> Result<LiftResult> {
    let mut options = options.clone();
    options.flow.tol = tol;
    let mut current = conn.clone();
    let mut configs_left: Vec<Vec<C64>> = path.configs().to_vec();
    let mut trajectory: Vec<LiftPoint> = Vec::new();
    let mut transforms: Vec<(f64, Vec<TransformRecord>)> = Vec::new();
    let mut s_offset = 0.0; // fraction of the original path already covered
    let mut regularizations = 0usize;

    // immediate regularization at the start when already out of the window
    if options.regularize {
        if let Some(log) = try_regularize(&mut current, options.soft_threshold)? {
            transforms.push((0.0, log));
            regularizations += 1;
        }
    }

    loop {
        let sub_path = DeformationPath::new(configs_left.clone())?;
        let threshold = if options.regularize {
            options.soft_threshold
        } else {
            options.flow.chart_exit_threshold
        };
        let sub_options = FlowOptions { chart_exit_threshold: threshold, ..options.flow };
        let (result, termination) = flow_raw(&current, &sub_path, &sub_options)?;
        let span = 1.0 - s_offset;
        for cp in &result.checkpoints {
            trajectory.push(LiftPoint {
                s: s_offset + cp.s * span,
                config: cp.config.clone(),
                residues: cp.residues.clone(),
            });
        }
        match termination {
            FlowTermination::Completed => {
                return Ok(LiftResult { endpoint: result.endpoint, trajectory, transforms });
            }
            FlowTermination::ChartExit { at, point, norm } => {
                if !options.regularize {
                    return Err(Error::ChartExit {
                        at: s_offset + at * span,
                        point,
                        norm,
                        threshold,
                    });
                }
                if regularizations >= options.max_regularizations {
                    return Err(Error::ChartExit {
                        at: s_offset + at * span,
                        point,
                        norm,
                        threshold,
                    });
                }
                // switch charts at the exit point and resume from there
                let exit = trajectory.last().expect("at least the start").clone();
                current = result.endpoint.clone();
                let log = try_regularize(&mut current, options.soft_threshold)?
                    .ok_or(Error::ChartExit {
                        at: s_offset + at * span,
                        point,
                        norm,
                        threshold,
                    })?;
                transforms.push((s_offset + at * span, log));
                regularizations += 1;
                s_offset += at * span;
                // remaining path: from the exit configuration onward
                let mut rest = vec![exit.config];
                // skip configs already passed: keep segments after the exit.
                // The exit s maps into segment index by arc length.
                let consumed = at;
                let seg_lengths = sub_path.segment_lengths();
                let total: f64 = seg_lengths.iter().sum();
                let mut acc = 0.0;
                let mut first_remaining = sub_path.configs().len();
                for (k, len) in seg_lengths.iter().enumerate() {
                    acc += len / total;
                    if acc > consumed + 1e-12 {
                        first_remaining = k + 1;
                        break;
                    }
                }
                for cfg in sub_path.configs().iter().skip(first_remaining) {
                    rest.push(cfg.clone());
                }
                if rest.len() < 2 {
                    // exited at the very end: done
                    return Ok(LiftResult { endpoint: current, trajectory, transforms });
                }
                configs_left = rest;
            }
        }
    }
}

/// Attempt a norm-reducing chart switch: exponent normalization (integer
/// parts pulled into `[0, 1)`); returns the log when it changed anything and
/// brought the norms under the threshold.
fn try_regularize(
    conn: &mut ParabolicConnection,
    threshold: f64,
) -> Result<Option<Vec<TransformRecord>>> {
    let max_norm = conn.system().residues().iter().map(frob).fold(0.0, f64::max);
    if max_norm <= threshold {
        return Ok(None);
    }
    let (normalized, log) = normalize_sigma(conn, DEFAULT_TOL)?;
    let new_norm = normalized
        .system()
        .residues()
        .iter()
        .map(frob)
        .fold(0.0, f64::max);
    if log.is_empty() || new_norm > threshold {
        return Ok(None);
    }
    *conn = normalized;
    Ok(Some(log))
}

/// Exponent rows evaluated as floats; handy for assertions on flow
/// invariance.
pub fn exponent_values(conn: &ParabolicConnection) -> Vec<Vec<C64>> {
    conn.exponents()
        .rows()
        .iter()
        .map(|row| row.iter().map(Scalar::value).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{c, identity};
    use crate::parabolic::ExponentData;
    use crate::sphere::MarkedSphere;

    fn commuting_connection() -> (ParabolicConnection, DeformationPath) {
        let punctures = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)];
        let sphere = MarkedSphere::new(punctures.clone(), c(1.5, -2.5), false).unwrap();
        let diag = |a: f64, b: f64| {
            CMat::from_diagonal(&crate::matrix::CVec::from_column_slice(&[c(a, 0.0), c(b, 0.0)]))
        };
        let residues = vec![diag(0.25, -0.5), diag(0.3, 0.1), diag(-0.15, 0.2), diag(-0.4, 0.2)];
        let rows: Vec<Vec<C64>> = residues.iter().map(|m| vec![m[(0, 0)], m[(1, 1)]]).collect();
        let system = FuchsianSystem::new(sphere, residues).unwrap();
        let exps = ExponentData::from_complex_rows(&rows).unwrap();
        let conn = ParabolicConnection::from_system(system, exps).unwrap();
        let mut end = punctures.clone();
        end[3] = c(3.0, 1.0);
        let path = DeformationPath::new(vec![punctures, end]).unwrap();
        (conn, path)
    }

    #[test]
    fn rhs_commuting_vanishes() {
        let (conn, path) = commuting_connection();
        let dt: Vec<C64> = vec![c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)];
        let rhs = schlesinger_rhs(
            path.start(),
            conn.system().residues(),
            &dt,
        )
        .unwrap();
        for m in rhs {
            assert!(frob(&m) < 1e-14);
        }
    }

    #[test]
    fn rhs_two_point_cancellation() {
        // n=2 generic: the two derivatives cancel
        let t = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let a = vec![
            CMat::from_row_slice(2, 2, &[c(0.1, 0.2), c(1.0, 0.0), c(0.3, 0.0), c(-0.1, 0.0)]),
            CMat::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.0, 0.5), c(1.0, -0.2), c(0.0, 0.0)]),
        ];
        let dt = vec![c(0.2, 0.3), c(-0.1, 0.05)];
        let rhs = schlesinger_rhs(&t, &a, &dt).unwrap();
        assert!(frob(&(&rhs[0] + &rhs[1])) < 1e-13);
    }

    #[test]
    fn rhs_hand_commutator() {
        // ∂A_1/∂t_2 = -[A_1, A_2]/(t_1 - t_2); with t=(0,1,2) and dt = e_2
        let t = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        let a1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let a2 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let a3 = -(&a1 + &a2);
        let dt = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let rhs = schlesinger_rhs(&t, &[a1.clone(), a2.clone(), a3], &dt).unwrap();
        // dA_1 = [A_1, A_2]·(0-1)/(0-1) = [A_1, A_2] = diag(1, -1)
        let want = commutator(&a1, &a2);
        assert!(frob(&(&rhs[0] - &want)) < 1e-14);
        assert!((want[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((want[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn conservation_identity_finite_difference() {
        // Σ dA_i = 0 identically; cross-check by finite differences of Σ A_i
        let t = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.5, 0.5)];
        let a = vec![
            CMat::from_row_slice(2, 2, &[c(0.1, 0.2), c(1.0, 0.0), c(0.3, 0.0), c(-0.1, 0.0)]),
            CMat::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.0, 0.5), c(1.0, -0.2), c(0.0, 0.0)]),
            CMat::from_row_slice(2, 2, &[c(-0.5, 0.0), c(0.2, 0.0), c(0.0, 0.7), c(0.1, 0.0)]),
        ];
        let dt = vec![c(0.3, -0.2), c(0.0, 0.4), c(-0.6, 0.0)];
        let rhs = schlesinger_rhs(&t, &a, &dt).unwrap();
        let mut total = CMat::zeros(2, 2);
        for m in &rhs {
            total += m;
        }
        assert!(frob(&total) < 1e-13);
    }

    #[test]
    fn commuting_flow_is_constant() {
        let (conn, path) = commuting_connection();
        let result = flow(&conn, &path, 1e-10).unwrap();
        for (a, b) in result.endpoint.system().residues().iter().zip(conn.system().residues()) {
            assert!(frob(&(a - b)) < 1e-12);
        }
        assert!(result.conservation.sum_drift < 1e-12);
        assert!(result.conservation.spectrum_drift < 1e-10);
    }

    #[test]
    fn collision_path_rejected() {
        let start = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let end = vec![c(0.0, 0.0), c(0.0001, 0.0)];
        assert!(matches!(
            DeformationPath::new(vec![start, end]),
            Err(Error::ConfigurationCollision { .. })
        ));
    }

    #[test]
    fn chart_exit_reported() {
        let (conn, path) = commuting_connection();
        let options = FlowOptions { chart_exit_threshold: 1e-3, ..FlowOptions::default() };
        // commuting flow stays at norm ~0.6 > 1e-3 from the start
        match flow_with_options(&conn, &path, &options) {
            Err(Error::ChartExit { .. }) => {}
            other => panic!("expected ChartExit, got {other:?}"),
        }
    }

    #[test]
    fn trivial_path_constant_trajectory() {
        let (conn, _) = commuting_connection();
        let cfg = conn.system().sphere().punctures().to_vec();
        let path = DeformationPath::new(vec![cfg.clone(), cfg]).unwrap();
        let lift = horizontal_lift(&conn, &path, 1e-10, &LiftOptions::default()).unwrap();
        for p in &lift.trajectory {
            for (a, b) in p.residues.iter().zip(conn.system().residues()) {
                assert!(frob(&(a - b)) < 1e-12);
            }
        }
        assert!(lift.transforms.is_empty());
    }

    #[test]
    fn ordering_cut_detection() {
        let base = c(0.0, 0.0);
        // sort-order swap between checkpoints
        let cps = vec![
            FlowCheckpoint {
                s: 0.0,
                config: vec![c(1.0, 0.1), c(1.0, 1.0)],
                residues: vec![identity(1); 2],
            },
            FlowCheckpoint {
                s: 1.0,
                config: vec![c(1.0, 2.0), c(1.0, 1.0)],
                residues: vec![identity(1); 2],
            },
        ];
        assert!(matches!(
            check_ordering_stability(base, &cps),
            Err(Error::OrderingCutCrossed { .. })
        ));
        // wrap through the cut (arg jumps by ~2π)
        let cps = vec![
            FlowCheckpoint {
                s: 0.0,
                config: vec![c(-1.0, 0.2), c(3.0, 0.0)],
                residues: vec![identity(1); 2],
            },
            FlowCheckpoint {
                s: 1.0,
                config: vec![c(-1.0, -0.2), c(3.0, 0.0)],
                residues: vec![identity(1); 2],
            },
        ];
        assert!(matches!(
            check_ordering_stability(base, &cps),
            Err(Error::OrderingCutCrossed { .. })
        ));
        // stable ordering passes
        let cps = vec![
            FlowCheckpoint {
                s: 0.0,
                config: vec![c(1.0, 0.1), c(1.0, 1.0)],
                residues: vec![identity(1); 2],
            },
            FlowCheckpoint {
                s: 1.0,
                config: vec![c(1.2, 0.1), c(1.0, 1.0)],
                residues: vec![identity(1); 2],
            },
        ];
        assert!(check_ordering_stability(base, &cps).is_ok());
    }
}
