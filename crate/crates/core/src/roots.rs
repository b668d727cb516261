//! Bracketed scalar root finding and one-dimensional maximisation.
//!
//! Objectives are fallible because every evaluation runs a quadrature.

use crate::error::{Error, Result};

/// Bracket width at which root searches stop (price units).
pub const DEFAULT_XTOL: f64 = 1e-12;
const MAX_ITER: usize = 400;

/// Find a root of `f` inside `[lo, hi]`, where `f(lo)` and `f(hi)` differ in
/// sign. Secant steps are taken while they stay inside the bracket and keep
/// halving it at least every second iteration; otherwise the step falls back
/// to bisection. Stops once the bracket is narrower than `xtol`.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, xtol: f64, what: &'static str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let fa = f(a)?;
    if fa == 0.0 {
        return Ok(a);
    }
    let fb = f(b)?;
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Bracket { what, lo: a, hi: b });
    }
    find_root_with(&mut f, (a, fa), (b, fb), xtol, what).map(|(x, _)| x)
}

/// Same as [`find_root`] but with endpoint values already evaluated.
/// Returns the root and the residual at it.
pub fn find_root_with<F>(
    f: &mut F,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    xtol: f64,
    what: &'static str,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a > b {
        core::mem::swap(&mut a, &mut b);
        core::mem::swap(&mut fa, &mut fb);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { what, lo: a, hi: b });
    }
    // most recent two iterates for the secant
    let (mut x0, mut f0) = (a, fa);
    let (mut x1, mut f1) = (b, fb);
    let mut widths = [b - a, b - a];
    let mut force_bisect = false;

    for _ in 0..MAX_ITER {
        let width = b - a;
        if width <= xtol {
            return Ok(if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) });
        }
        let guard = 0.25 * xtol;
        let secant = if f1 != f0 {
            x1 - f1 * (x1 - x0) / (f1 - f0)
        } else {
            f64::NAN
        };
        let x = if !force_bisect && secant > a + guard && secant < b - guard {
            secant
        } else {
            a + 0.5 * width
        };
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok((x, fx));
        }
        if fx.is_nan() {
            return Err(Error::NoConvergence {
                what,
                iterations: MAX_ITER,
            });
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        x0 = x1;
        f0 = f1;
        x1 = x;
        f1 = fx;
        let new_width = b - a;
        force_bisect = new_width > 0.5 * widths[0];
        widths = [widths[1], new_width];
    }
    Err(Error::NoConvergence {
        what,
        iterations: MAX_ITER,
    })
}

/// Walk from `start` in steps of `step` (negative to go left), doubling the
/// step each time, until `f` changes sign relative to `f(start)`. Gives up
/// once the probe passes `limit`. Returns the bracketing pair with their
/// function values, ordered by position.
pub fn expand_bracket<F>(
    f: &mut F,
    start: f64,
    step: f64,
    limit: f64,
    what: &'static str,
) -> Result<((f64, f64), (f64, f64))>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_start = f(start)?;
    let mut prev = (start, f_start);
    let mut h = step;
    loop {
        let mut x = prev.0 + h;
        let past = if step > 0.0 { x >= limit } else { x <= limit };
        if past {
            x = limit;
        }
        let fx = f(x)?;
        if fx.signum() != f_start.signum() || fx == 0.0 {
            return Ok(if step > 0.0 {
                (prev, (x, fx))
            } else {
                ((x, fx), prev)
            });
        }
        if past {
            let (lo, hi) = if step > 0.0 { (start, limit) } else { (limit, start) };
            return Err(Error::Bracket { what, lo, hi });
        }
        prev = (x, fx);
        h *= 2.0;
    }
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iterations = 0;
    while b - a > xtol {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::NoConvergence {
                what: "golden-section search",
                iterations,
            });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}
