//! Adaptive Simpson quadrature.

use crate::scalar::Real;

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Richardson-corrected adaptive Simpson. Returns the signed integral, so
/// `b < a` is allowed.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    if b < a {
        return -adaptive_simpson(f, b, a, tol);
    }
    let tol = tol.abs();
    let m = (a + b) * T::lit(0.5);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Adaptive Simpson with the tolerance taken relative to a coarse estimate
/// of the integral (with `floor` as the absolute lower bound).
pub fn adaptive_simpson_rel<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, rel: T, floor: T) -> T {
    if a == b {
        return T::zero();
    }
    let m = (a + b) * T::lit(0.5);
    let coarse = simpson(a, b, f(a), f(m), f(b)).abs();
    adaptive_simpson(f, a, b, (coarse * rel).max(floor))
}

#[inline]
fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let m = (a + b) * T::lit(0.5);
    let lm = (a + m) * T::lit(0.5);
    let rm = (m + b) * T::lit(0.5);
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol || m <= a || m >= b {
        return left + right + delta / T::lit(15.0);
    }
    let half = tol * T::lit(0.5);
    recurse(f, a, m, fa, flm, fm, left, half, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, half, depth - 1)
}
