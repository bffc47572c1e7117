//! Changes of variables that reduce the Marcus equation to simpler problems.
//!
//! * `f(x) = ∫_base^x dt/σ(t)` turns `dX = a dt + σ ⋄ dZ` into
//!   `dY = (a/σ)(f⁻¹(Y)) dt + dZ`.
//! * When `a = kσ`, the solution is `X_t = φ(x, Z_t + k t)`.
//! * In general `X_t = φ(Y_t, Z_t)` where `Y' = b(Y, Z)` and
//!   `b(x, y) = a(φ(x, y))·exp(−∫_0^y σ̇(φ(x, u)) du)`.

use std::cell::RefCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{DiffusionField, ScalarField};
use crate::marcus::{jump_flow, jump_flow_phi, DEFAULT_PHI_TOL};
use crate::ode::integrate;
use crate::path_sampler::LevyPath;
use crate::quad::adaptive_simpson;
use crate::scalar::Real;

/// Quadrature tolerance for `f`.
pub const TRANSFORM_QUAD_TOL: f64 = 1e-10;
/// Tabulation nodes for `f` across the declared range.
const TABLE_NODES: usize = 2048;
const MAX_BRACKET_EXPANSIONS: u32 = 60;
const MAX_NEWTON_ITERATIONS: u32 = 100;

struct DiffeoTable<T> {
    sigma: DiffusionField<T>,
    base_point: T,
    lo: T,
    hi: T,
    /// `+1` when σ > 0 (f increasing), `−1` otherwise.
    sign: T,
    nodes: Vec<T>,
    values: Vec<T>,
}

/// `f(x) = ∫_base^x dt/σ(t)` with its numeric inverse.
///
/// `f` is tabulated by adaptive Simpson on a fine grid over `range` and
/// evaluated between nodes by quintic Hermite interpolation using the exact
/// `f′ = 1/σ` and `f″ = −σ̇/σ²`; outside `range` it falls back to direct
/// quadrature from the nearest end.
#[derive(Clone)]
pub struct Diffeomorphism<T> {
    inner: Arc<DiffeoTable<T>>,
}

impl<T: Real> std::fmt::Debug for Diffeomorphism<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Diffeomorphism")
            .field("sigma", &self.inner.sigma.name())
            .field("base_point", &self.inner.base_point)
            .field("range", &(self.inner.lo, self.inner.hi))
            .finish()
    }
}

/// Builds `f` for `σ` on `range`, checking that σ keeps its sign there.
pub fn unit_diffusion_transform<T: Real>(
    sigma: &DiffusionField<T>,
    base_point: T,
    range: (T, T),
) -> Result<Diffeomorphism<T>> {
    let (lo, hi) = range;
    if !(hi > lo) || !(base_point >= lo && base_point <= hi) {
        return Err(Error::domain(format!("base point {base_point} must lie in the range [{lo}, {hi}]")));
    }
    sigma.check_nonvanishing(lo, hi)?;
    let sign = sigma.eval(base_point).signum();
    let inv = |t: T| sigma.eval(t).recip();
    let n = TABLE_NODES;
    let nodes: Vec<T> = (0..=n).map(|i| lo + (hi - lo) * T::lit(i as f64 / n as f64)).collect();
    let mut values = vec![T::zero(); n + 1];
    for i in 1..=n {
        values[i] = values[i - 1] + adaptive_simpson(&inv, nodes[i - 1], nodes[i], T::lit(TRANSFORM_QUAD_TOL / n as f64));
    }
    let k = nodes.partition_point(|&x| x <= base_point).saturating_sub(1).min(n - 1);
    let shift = values[k] + adaptive_simpson(&inv, nodes[k], base_point, T::lit(TRANSFORM_QUAD_TOL / n as f64));
    for v in &mut values {
        *v -= shift;
    }
    Ok(Diffeomorphism {
        inner: Arc::new(DiffeoTable { sigma: sigma.clone(), base_point, lo, hi, sign, nodes, values }),
    })
}

impl<T: Real> Diffeomorphism<T> {
    pub fn base_point(&self) -> T {
        self.inner.base_point
    }

    pub fn range(&self) -> (T, T) {
        (self.inner.lo, self.inner.hi)
    }

    pub fn sigma(&self) -> &DiffusionField<T> {
        &self.inner.sigma
    }

    /// `f′(x) = 1/σ(x)`.
    pub fn forward_derivative(&self, x: T) -> T {
        self.inner.sigma.eval(x).recip()
    }

    /// `f(x)` by direct adaptive quadrature from the base point.
    pub fn forward_quadrature(&self, x: T) -> T {
        let s = &self.inner.sigma;
        adaptive_simpson(&|t: T| s.eval(t).recip(), self.inner.base_point, x, T::lit(TRANSFORM_QUAD_TOL))
    }

    pub fn forward(&self, x: T) -> T {
        let d = &*self.inner;
        let s = &d.sigma;
        let inv = |t: T| s.eval(t).recip();
        let n = d.nodes.len() - 1;
        if x < d.lo {
            return d.values[0] - adaptive_simpson(&inv, x, d.lo, T::lit(TRANSFORM_QUAD_TOL));
        }
        if x > d.hi {
            return d.values[n] + adaptive_simpson(&inv, d.hi, x, T::lit(TRANSFORM_QUAD_TOL));
        }
        let k = d.nodes.partition_point(|&t| t <= x).saturating_sub(1).min(n - 1);
        let (x0, x1) = (d.nodes[k], d.nodes[k + 1]);
        let h = x1 - x0;
        let u = (x - x0) / h;
        let (s0, s1) = (s.eval(x0), s.eval(x1));
        let (p0, p1) = (s0.recip() * h, s1.recip() * h);
        let (q0, q1) = (-s.deriv(x0) / (s0 * s0) * h * h, -s.deriv(x1) / (s1 * s1) * h * h);
        d.values[k] * h00(u) + p0 * h10(u) + q0 * h20(u) + d.values[k + 1] * h01(u) + p1 * h11(u) + q1 * h21(u)
    }

    /// `f⁻¹(y)` by bracketing then safeguarded Newton.
    pub fn inverse(&self, y: T) -> Result<T> {
        let d = &*self.inner;
        let g = |x: T| d.sign * (self.forward(x) - y);
        let (mut lo, mut hi) = self.bracket(y, &g)?;
        let mut x = (lo + hi) * T::lit(0.5);
        let tol = T::lit(1e-15) * (T::one() + y.abs());
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let gx = g(x);
            if gx.abs() <= tol {
                return Ok(x);
            }
            if gx < T::zero() {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - gx * d.sigma.eval(x).abs();
            x = if newton > lo && newton < hi { newton } else { (lo + hi) * T::lit(0.5) };
            if hi - lo <= T::epsilon() * (T::one() + x.abs()) {
                return Ok(x);
            }
        }
        Ok(x)
    }

    fn bracket(&self, y: T, g: &impl Fn(T) -> T) -> Result<(T, T)> {
        let d = &*self.inner;
        let n = d.nodes.len() - 1;
        let (first, last) = (d.sign * (d.values[0] - y), d.sign * (d.values[n] - y));
        if first <= T::zero() && last >= T::zero() {
            // first node with sign·(f − y) ≥ 0
            let (mut a, mut b) = (0usize, n);
            while a < b {
                let m = (a + b) / 2;
                if d.sign * (d.values[m] - y) < T::zero() {
                    a = m + 1;
                } else {
                    b = m;
                }
            }
            let hi = a.clamp(1, n);
            return Ok((d.nodes[hi - 1], d.nodes[hi]));
        }
        let width = d.hi - d.lo;
        let mut w = width;
        for _ in 0..MAX_BRACKET_EXPANSIONS {
            if first > T::zero() {
                let cand = d.lo - w;
                if g(cand) <= T::zero() {
                    return Ok((cand, d.lo));
                }
            } else {
                let cand = d.hi + w;
                if g(cand) >= T::zero() {
                    return Ok((d.hi, cand));
                }
            }
            w = w + w;
        }
        Err(Error::Bracketing(format!("no preimage of {y} found within 2^60 range widths")))
    }

    /// Largest `|f⁻¹(f(x)) − x|` over the probe grid of the range.
    pub fn roundtrip_error(&self) -> Result<T> {
        let mut worst = T::zero();
        for x in crate::field::probe_grid(self.inner.lo, self.inner.hi) {
            worst = worst.max((self.inverse(self.forward(x))? - x).abs());
        }
        Ok(worst)
    }
}

fn h00<T: Real>(u: T) -> T {
    let u3 = u * u * u;
    T::one() - T::lit(10.0) * u3 + T::lit(15.0) * u3 * u - T::lit(6.0) * u3 * u * u
}
fn h10<T: Real>(u: T) -> T {
    let u3 = u * u * u;
    u - T::lit(6.0) * u3 + T::lit(8.0) * u3 * u - T::lit(3.0) * u3 * u * u
}
fn h20<T: Real>(u: T) -> T {
    let u2 = u * u;
    T::lit(0.5) * (u2 - T::lit(3.0) * u2 * u + T::lit(3.0) * u2 * u2 - u2 * u2 * u)
}
fn h01<T: Real>(u: T) -> T {
    let u3 = u * u * u;
    T::lit(10.0) * u3 - T::lit(15.0) * u3 * u + T::lit(6.0) * u3 * u * u
}
fn h11<T: Real>(u: T) -> T {
    let u3 = u * u * u;
    -T::lit(4.0) * u3 + T::lit(7.0) * u3 * u - T::lit(3.0) * u3 * u * u
}
fn h21<T: Real>(u: T) -> T {
    let u3 = u * u * u;
    T::lit(0.5) * (u3 - T::lit(2.0) * u3 * u + u3 * u * u)
}

/// `y ↦ (a/σ)(f⁻¹(y))` with derivative `(ȧσ − aσ̇)/σ` at `f⁻¹(y)`.
///
/// An inverse that cannot be bracketed evaluates to NaN, which the ODE
/// solvers report as a non-finite state.
pub fn reduced_drift<T: Real>(a: &ScalarField<T>, diffeo: &Diffeomorphism<T>) -> ScalarField<T> {
    let (a1, d1) = (a.clone(), diffeo.clone());
    let (a2, d2) = (a.clone(), diffeo.clone());
    ScalarField::new(
        format!("reduced({}, {})", a.name(), diffeo.sigma().name()),
        move |y| match d1.inverse(y) {
            Ok(x) => a1.eval(x) / d1.sigma().eval(x),
            Err(_) => T::nan(),
        },
        move |y| match d2.inverse(y) {
            Ok(x) => {
                let s = d2.sigma();
                (a2.deriv(x) * s.eval(x) - a2.eval(x) * s.deriv(x)) / s.eval(x)
            }
            Err(_) => T::nan(),
        },
    )
}

/// Terminal value `φ(x0, Z_h + k·h)` of the Marcus equation with `a = kσ`.
pub fn proportional_solution<T: Real>(sigma: &DiffusionField<T>, k: T, x0: T, path: &LevyPath<T>) -> Result<T> {
    jump_flow_phi(sigma, x0, path.terminal() + k * path.horizon(), T::lit(DEFAULT_PHI_TOL))
}

/// `ψ(x, t)`: the `u` with `φ(x, u) = t`.
pub fn phi_inverse_psi<T: Real>(sigma: &DiffusionField<T>, x: T, t: T) -> Result<T> {
    let s0 = sigma.eval(x);
    if s0 == T::zero() || !s0.is_finite() {
        return Err(Error::AssumptionHViolation { x: x.to_f64_lossy(), value: s0.to_f64_lossy() });
    }
    let sign = s0.signum();
    let tol = T::lit(1e-13);
    // increasing in u; a blown-up flow counts as ±∞ in the direction of u
    let g = |u: T| -> Result<(T, T)> {
        match jump_flow_phi(sigma, x, u, tol) {
            Ok(p) => Ok((sign * (p - t), sigma.eval(p).abs())),
            Err(Error::FlowDivergence { .. }) => Ok((u.signum() * T::infinity(), T::infinity())),
            Err(e) => Err(e),
        }
    };
    let u0 = (t - x) / s0;
    let (g0, _) = g(u0)?;
    if g0 == T::zero() {
        return Ok(u0);
    }
    let mut step = u0.abs().max(T::one()) * T::lit(0.5);
    let (mut lo, mut hi) = (u0, u0);
    let mut found = false;
    for _ in 0..MAX_BRACKET_EXPANSIONS {
        let cand = if g0 < T::zero() { u0 + step } else { u0 - step };
        let (gc, _) = g(cand)?;
        if (g0 < T::zero()) == (gc >= T::zero()) {
            if g0 < T::zero() {
                hi = cand;
            } else {
                lo = cand;
            }
            found = true;
            break;
        }
        if g0 < T::zero() {
            lo = cand;
        } else {
            hi = cand;
        }
        step = step + step;
    }
    if !found {
        return Err(Error::Bracketing(format!("ψ({x}, {t}): no sign change after range expansion")));
    }
    let mut u = (lo + hi) * T::lit(0.5);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let (gu, slope) = g(u)?;
        if gu.abs() <= T::lit(1e-14) * (T::one() + t.abs()) {
            return Ok(u);
        }
        if gu < T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - gu / slope;
        u = if newton > lo && newton < hi { newton } else { (lo + hi) * T::lit(0.5) };
        if hi - lo <= T::epsilon() * (T::one() + u.abs()) {
            return Ok(u);
        }
    }
    Ok(u)
}

/// Pathwise representation `X_h = φ(Y_h, Z_h)` with `Y' = b(Y, Z)`.
///
/// The exponent `∫_0^y σ̇(φ(x, u)) du` is the logarithm of `∂φ/∂x`; along
/// the solve it is evaluated through `f` as `log(σ(φ(x, y))/σ(x))`, with
/// `φ(x, y) = f⁻¹(f(x) + y)`. [`DossSussman::drift_by_flow`] evaluates the
/// same quantity by integrating the flow directly.
#[derive(Clone)]
pub struct DossSussman<T> {
    a: ScalarField<T>,
    diffeo: Diffeomorphism<T>,
}

impl<T: Real> DossSussman<T> {
    /// `range` should cover the states the solution visits; `f` stays valid
    /// beyond it but is slower to evaluate there.
    pub fn new(a: &ScalarField<T>, sigma: &DiffusionField<T>, range: (T, T)) -> Result<Self> {
        let base = (range.0 + range.1) * T::lit(0.5);
        Ok(Self { a: a.clone(), diffeo: unit_diffusion_transform(sigma, base, range)? })
    }

    pub fn diffeomorphism(&self) -> &Diffeomorphism<T> {
        &self.diffeo
    }

    /// `b(x, y)` through the unit-diffusion transform.
    pub fn drift(&self, x: T, y: T) -> Result<T> {
        let d = &self.diffeo;
        let p = d.inverse(d.forward(x) + y)?;
        let s = d.sigma();
        Ok(self.a.eval(p) * s.eval(x) / s.eval(p))
    }

    /// `b(x, y)` by integrating `φ` and `∫σ̇(φ)` along the flow.
    pub fn drift_by_flow(&self, x: T, y: T, tol: T) -> Result<T> {
        let p = jump_flow(self.diffeo.sigma(), x, y, tol)?;
        Ok(self.a.eval(p.value) * (-p.log_derivative).exp())
    }

    /// Returns `(Y_h, X_h)`.
    pub fn solve(&self, path: &LevyPath<T>, x0: T, step: T) -> Result<(T, T)> {
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let r = integrate(
            path,
            [x0],
            step,
            |z, _, s: &[T; 1]| match self.drift(s[0], z) {
                Ok(b) => [b],
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    [T::nan()]
                }
            },
            |_, _, _| Ok(()),
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let y = r?.states.last().expect("nonempty grid")[0];
        let x = jump_flow_phi(self.diffeo.sigma(), y, path.terminal(), T::lit(DEFAULT_PHI_TOL))?;
        Ok((y, x))
    }
}

/// `X_h` by the pathwise representation; `f` is tabulated on `x0 ± 1` and
/// extended by quadrature beyond it.
pub fn doss_sussman_solve<T: Real>(
    a: &ScalarField<T>,
    sigma: &DiffusionField<T>,
    path: &LevyPath<T>,
    x0: T,
    step: T,
) -> Result<T> {
    DossSussman::new(a, sigma, (x0 - T::one(), x0 + T::one()))?.solve(path, x0, step).map(|(_, x)| x)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn psi_roundtrip(x in -2.0f64..2.0, u in -2.0f64..2.0) {
            let s = DiffusionField::new(ScalarField::logistic(1.0, 0.5, 1.5));
            let t = jump_flow_phi(&s, x, u, 1e-13).unwrap();
            prop_assert!((phi_inverse_psi(&s, x, t).unwrap() - u).abs() < 1e-8);
        }

        #[test]
        fn monotone_ratio_gives_monotone_reduced_drift(center in -1.5f64..1.5, slope in 0.5f64..2.0) {
            let s = DiffusionField::new(ScalarField::logistic(1.0, 0.3, 1.0));
            let a = ScalarField::logistic(0.0, 1.0, slope).product(&s.field);
            // b = a/σ = tanh(slope·x), strictly increasing
            let d = unit_diffusion_transform(&s, 0.0, (-3.0, 3.0)).unwrap();
            let r = reduced_drift(&a, &d);
            let fc = d.forward(center);
            for y in crate::field::probe_grid(fc - 0.2, fc + 0.2) {
                prop_assert!(r.deriv(y) > 0.0);
            }
        }
    }
}
