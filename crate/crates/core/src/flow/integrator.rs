//! Dormand–Prince 5(4) with step-size control, sampling on a prescribed grid.
//!
//! Steps are shortened to land exactly on each grid point, so samples are
//! integrator states rather than interpolants.

use nalgebra::DVector;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus the embedded fourth-order ones
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;

/// Error weight of one component. The local error estimate of component `i`
/// is divided by `scale(i, |y_old_i|, |y_new_i|)`; a step is accepted when the
/// largest ratio is at most 1.
pub trait ErrorScale {
    fn scale(&self, i: usize, y_old: f64, y_new: f64) -> f64;
}

/// `abs_tol + rel_tol · max(|y_old|, |y_new|)` on every component.
pub struct Mixed {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl ErrorScale for Mixed {
    fn scale(&self, _: usize, y_old: f64, y_new: f64) -> f64 {
        self.abs_tol + self.rel_tol * y_old.abs().max(y_new.abs())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn weighted_max<S: ErrorScale>(err: &DVector<f64>, y: &DVector<f64>, y_new: &DVector<f64>, sc: &S) -> f64 {
    (0..err.len())
        .map(|i| (err[i] / sc.scale(i, y[i], y_new[i])).abs())
        .fold(0.0, f64::max)
}

/// Integrates `y' = f(t, y)` from `grid[0]` and returns the states at every grid point.
pub fn integrate<F, S>(
    mut f: F,
    y0: DVector<f64>,
    grid: &[f64],
    scale: &S,
) -> Result<(Vec<DVector<f64>>, Stats)>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    S: ErrorScale,
{
    assert!(!grid.is_empty());
    let mut stats = Stats::default();
    let mut t = grid[0];
    let mut y = y0;
    let mut out = Vec::with_capacity(grid.len());
    out.push(y.clone());
    if grid.len() == 1 {
        return Ok((out, stats));
    }

    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let fail = |t: f64, reason: String, y: &DVector<f64>| Error::Integrator {
        t,
        reason,
        last_state: y.iter().cloned().collect(),
    };
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(fail(t, "non-finite derivative at the initial state".into(), &y));
    }

    // starting step from the size of y and y'
    let mut h = {
        let zero = DVector::zeros(y.len());
        let d0 = weighted_max(&y, &y, &y, scale);
        let d1 = weighted_max(&k1, &zero, &zero, scale);
        let guess = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        guess.min(grid[grid.len() - 1] - t)
    };

    for &target in &grid[1..] {
        while t < target {
            if stats.accepted + stats.rejected >= MAX_STEPS {
                return Err(fail(t, format!("step limit of {MAX_STEPS} reached"), &y));
            }
            let remaining = target - t;
            let clipped = h >= remaining * (1.0 - 1e-12);
            let step = if clipped { remaining } else { h };
            if step <= 1e-14 * t.abs().max(1.0) {
                return Err(fail(t, format!("step size underflow (h = {step:e})"), &y));
            }

            let k2 = f(t + C2 * step, &(&y + &k1 * (A21 * step)));
            let k3 = f(t + C3 * step, &(&y + (&k1 * A31 + &k2 * A32) * step));
            let k4 = f(t + C4 * step, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * step));
            let k5 = f(
                t + C5 * step,
                &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * step),
            );
            let k6 = f(
                t + step,
                &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * step),
            );
            let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * step;
            let k7 = f(t + step, &y_new);
            stats.evaluations += 6;

            let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * step;
            let ratio = weighted_max(&err, &y, &y_new, scale);
            let finite = y_new.iter().chain(k7.iter()).all(|v| v.is_finite());

            if finite && ratio <= 1.0 {
                stats.accepted += 1;
                t = if clipped { target } else { t + step };
                y = y_new;
                k1 = k7;
                let factor = if ratio == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * ratio.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // a clipped step says nothing about how large the next one may be
                h = if clipped { h.max(step * factor) } else { step * factor };
            } else {
                stats.rejected += 1;
                if !finite && ratio.is_nan() {
                    h = step * MIN_FACTOR;
                } else {
                    h = step * (SAFETY * ratio.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                }
            }
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(fail(t, "non-finite state".into(), &y));
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}
