//! Embedded Dormand–Prince 5(4) integration for the matrix ODEs in this
//! crate (parallel transport and the Schlesinger flow).
//!
//! Step control is the standard accept/reject loop with a PI factor; forced
//! sample points are honored exactly by capping the step, which is how dense
//! output checkpoints stay bit-reproducible.

use crate::error::Error;
use crate::matrix::CMat;
use crate::Result;

/// State vectors the integrator can drive.
pub trait OdeState: Clone {
    /// `base + Σ a_k · x_k`.
    fn lin_comb(base: &Self, terms: &[(f64, &Self)]) -> Self;
    fn norm(&self) -> f64;
    fn diff_norm(a: &Self, b: &Self) -> f64;
}

impl OdeState for CMat {
    fn lin_comb(base: &Self, terms: &[(f64, &Self)]) -> Self {
        let mut out = base.clone();
        for (a, x) in terms {
            out.zip_apply(*x, |y, xv| *y += xv * num_complex::Complex64::new(*a, 0.0));
        }
        out
    }

    fn norm(&self) -> f64 {
        nalgebra::DMatrix::norm(self)
    }

    fn diff_norm(a: &Self, b: &Self) -> f64 {
        (a - b).norm()
    }
}

impl OdeState for Vec<CMat> {
    fn lin_comb(base: &Self, terms: &[(f64, &Self)]) -> Self {
        let mut out = base.clone();
        for (i, slot) in out.iter_mut().enumerate() {
            for (a, x) in terms {
                slot.zip_apply(&x[i], |y, xv| {
                    *y += xv * num_complex::Complex64::new(*a, 0.0)
                });
            }
        }
        out
    }

    fn norm(&self) -> f64 {
        self.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }

    fn diff_norm(a: &Self, b: &Self) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub struct SegmentRun<S> {
    pub y_end: S,
    /// States at the forced sample points, in order.
    pub samples: Vec<(f64, S)>,
    /// Sum of accepted local error estimates.
    pub error_estimate: f64,
    pub steps: usize,
    pub rejected: usize,
}

/// Integrate `dy/ds = f(s, y)` over `[0, 1]`, stopping exactly at each
/// forced point (strictly increasing values in `(0, 1]`).
pub fn integrate_unit<S: OdeState>(
    f: &mut dyn FnMut(f64, &S) -> S,
    y0: S,
    rtol: f64,
    forced: &[f64],
) -> Result<SegmentRun<S>> {
    let mut y = y0;
    let mut s = 0.0f64;
    let mut samples = Vec::with_capacity(forced.len());
    let mut forced_iter = forced.iter().copied().peekable();

    let mut h: f64 = (0.05f64).min(rtol.powf(0.2)).max(1e-4);
    let h_min = 1e-13;
    let mut error_estimate = 0.0;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut prev_err_ratio: f64 = 1.0;

    while s < 1.0 - 1e-15 {
        if steps + rejected > 2_000_000 {
            return Err(Error::Numerical("integrator exceeded its step budget".into()));
        }
        let mut target = 1.0;
        if let Some(&next_forced) = forced_iter.peek() {
            if next_forced > s + 1e-15 {
                target = next_forced;
            } else {
                // forced point at or behind current s; emit and advance
                forced_iter.next();
                samples.push((s, y.clone()));
                continue;
            }
        }
        let h_step = h.min(target - s);
        if h_step < h_min {
            return Err(Error::StepUnderflow { at: s, step: h_step, min: h_min });
        }

        // stages
        let mut k: Vec<S> = Vec::with_capacity(7);
        k.push(f(s, &y));
        for stage in 1..7 {
            let terms: Vec<(f64, &S)> = (0..stage)
                .filter(|&m| A[stage][m] != 0.0)
                .map(|m| (h_step * A[stage][m], &k[m]))
                .collect();
            let y_stage = S::lin_comb(&y, &terms);
            k.push(f(s + C[stage] * h_step, &y_stage));
        }
        let terms5: Vec<(f64, &S)> = (0..7)
            .filter(|&m| B5[m] != 0.0)
            .map(|m| (h_step * B5[m], &k[m]))
            .collect();
        let y5 = S::lin_comb(&y, &terms5);
        let terms4: Vec<(f64, &S)> = (0..7)
            .filter(|&m| B4[m] != 0.0)
            .map(|m| (h_step * B4[m], &k[m]))
            .collect();
        let y4 = S::lin_comb(&y, &terms4);

        let err = S::diff_norm(&y5, &y4);
        let sc = rtol * y.norm().max(1.0);
        let ratio = err / sc.max(f64::MIN_POSITIVE);

        if ratio <= 1.0 {
            s += h_step;
            y = y5;
            error_estimate += err;
            steps += 1;
            if let Some(&next_forced) = forced_iter.peek() {
                if (s - next_forced).abs() < 1e-14 {
                    forced_iter.next();
                    samples.push((s, y.clone()));
                }
            }
            // PI controller (Hairer's beta trick, mild)
            let alpha = 0.7 / 5.0;
            let beta = 0.4 / 5.0;
            let fac = 0.9 * ratio.max(1e-10).powf(-alpha) * prev_err_ratio.max(1e-10).powf(beta);
            h = (h_step * fac.clamp(0.2, 5.0)).min(0.5);
            prev_err_ratio = ratio;
        } else {
            rejected += 1;
            h = h_step * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    // flush any forced point recorded as exactly 1.0
    while forced_iter.next().is_some() {
        samples.push((1.0, y.clone()));
    }
    Ok(SegmentRun { y_end: y, samples, error_estimate, steps, rejected })
}
