//! Coefficient fields: a real function together with its analytic derivative.
//!
//! Fields come from a closed-form catalogue so that derivatives are exact; the
//! probe-grid checks below guard the pairing of value and derivative.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type RealFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Number of probe points used by the derivative and ellipticity checks.
pub const PROBE_POINTS: usize = 101;

/// A C¹ drift coefficient `a` with derivative `ȧ`.
#[derive(Clone)]
pub struct ScalarField<T> {
    name: String,
    value: RealFn<T>,
    derivative: RealFn<T>,
    /// `‖a‖_∞`, when known.
    pub sup_bound: Option<T>,
    /// Bound on `|ȧ|`, when known.
    pub lipschitz_bound: Option<T>,
}

impl<T> fmt::Debug for ScalarField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField").field("name", &self.name).finish_non_exhaustive()
    }
}

impl<T: Real> ScalarField<T> {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(T) -> T + Send + Sync + 'static,
        derivative: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            sup_bound: None,
            lipschitz_bound: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        (self.value)(x)
    }

    #[inline]
    pub fn deriv(&self, x: T) -> T {
        (self.derivative)(x)
    }

    pub fn with_bounds(mut self, sup: Option<T>, lipschitz: Option<T>) -> Self {
        self.sup_bound = sup;
        self.lipschitz_bound = lipschitz;
        self
    }

    /// Checks `ȧ` against a central difference of `a` on a uniform probe grid
    /// over `[lo, hi]`: `|fd − ȧ| ≤ 1e-6·(1 + |ȧ|)`.
    pub fn check_derivative(&self, lo: T, hi: T) -> Result<()> {
        for x in probe_grid(lo, hi) {
            let h = T::lit(1e-5) * (T::one() + x.abs());
            let fd = (self.eval(x + h) - self.eval(x - h)) / (h + h);
            let d = self.deriv(x);
            if !((fd - d).abs() <= T::lit(1e-6) * (T::one() + d.abs())) {
                return Err(Error::Precondition(format!(
                    "derivative of field `{}` disagrees with finite difference at x = {}: {} vs {}",
                    self.name, x, d, fd
                )));
            }
        }
        Ok(())
    }

    // Catalogue.

    pub fn constant(c: T) -> Self {
        Self::new(format!("constant({c})"), move |_| c, |_| T::zero())
            .with_bounds(Some(c.abs()), Some(T::zero()))
    }

    /// `a(x) = k·x`.
    pub fn linear(k: T) -> Self {
        Self::new(format!("linear({k})"), move |x| k * x, move |_| k).with_bounds(None, Some(k.abs()))
    }

    /// `a(x) = k·x + c`.
    pub fn affine(k: T, c: T) -> Self {
        Self::new(format!("affine({k}, {c})"), move |x| k * x + c, move |_| k)
            .with_bounds(None, Some(k.abs()))
    }

    /// `a(x) = offset + amplitude·tanh(slope·x)`; strictly monotone when
    /// `amplitude·slope ≠ 0`.
    pub fn logistic(offset: T, amplitude: T, slope: T) -> Self {
        Self::new(
            format!("logistic({offset}, {amplitude}, {slope})"),
            move |x| offset + amplitude * (slope * x).tanh(),
            move |x| {
                let t = (slope * x).tanh();
                amplitude * slope * (T::one() - t * t)
            },
        )
        .with_bounds(Some(offset.abs() + amplitude.abs()), Some((amplitude * slope).abs()))
    }

    /// `σ(x) = 1 + x²`, whose unit-diffusion transform is `arctan`.
    pub fn arctan_diffusion() -> Self {
        Self::new("arctan_diffusion", |x: T| T::one() + x * x, |x: T| x + x)
    }

    /// `a(x) = c·x²`.
    pub fn quadratic(c: T) -> Self {
        Self::new(format!("quadratic({c})"), move |x| c * x * x, move |x| (c + c) * x)
    }

    /// `a(x) = offset + amplitude·sin(frequency·x)`: bounded, not monotone.
    pub fn sine(offset: T, amplitude: T, frequency: T) -> Self {
        Self::new(
            format!("sine({offset}, {amplitude}, {frequency})"),
            move |x| offset + amplitude * (frequency * x).sin(),
            move |x| amplitude * frequency * (frequency * x).cos(),
        )
        .with_bounds(Some(offset.abs() + amplitude.abs()), Some((amplitude * frequency).abs()))
    }

    /// Constant `level` on `[center − half_width, center + half_width]`, with
    /// C² ramps outside: the slope rises smoothly to `slope` over `ramp`, then
    /// stays there. Nondecreasing for `slope ≥ 0`.
    pub fn plateau(level: T, center: T, half_width: T, ramp: T, slope: T) -> Self {
        let excess = move |x: T| {
            let d = x - center;
            (d.signum(), d.abs() - half_width)
        };
        let value = move |x: T| {
            let (sign, out) = excess(x);
            if out <= T::zero() {
                level
            } else if out < ramp {
                let u = out / ramp;
                level + sign * slope * ramp * u * u * u * (T::one() - u * T::lit(0.5))
            } else {
                level + sign * slope * (out - ramp * T::lit(0.5))
            }
        };
        let derivative = move |x: T| {
            let (_, out) = excess(x);
            if out <= T::zero() {
                T::zero()
            } else if out < ramp {
                let u = out / ramp;
                slope * u * u * (T::lit(3.0) - u - u)
            } else {
                slope
            }
        };
        Self::new(format!("plateau({level}, {center}, {half_width}, {ramp}, {slope})"), value, derivative)
            .with_bounds(None, Some(slope.abs()))
    }

    /// C² step from `low` (left of `start`) to `high` (right of `end`), quintic in between.
    pub fn smooth_step(low: T, high: T, start: T, end: T) -> Self {
        let width = end - start;
        let value = move |x: T| {
            if x <= start {
                low
            } else if x >= end {
                high
            } else {
                let u = (x - start) / width;
                low + (high - low) * u * u * u * (u * (u * T::lit(6.0) - T::lit(15.0)) + T::lit(10.0))
            }
        };
        let derivative = move |x: T| {
            if x <= start || x >= end {
                T::zero()
            } else {
                let u = (x - start) / width;
                let v = u * (T::one() - u);
                (high - low) * T::lit(30.0) * v * v / width
            }
        };
        Self::new(format!("smooth_step({low}, {high}, {start}, {end})"), value, derivative)
            .with_bounds(Some(low.abs().max(high.abs())), None)
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x, |_| T::one())
    }

    /// `log x`; only meaningful on the positive half-line.
    pub fn log() -> Self {
        Self::new("log", |x: T| x.ln(), |x: T| x.recip())
    }

    pub fn arctan() -> Self {
        Self::new("arctan", |x: T| x.atan(), |x: T| (T::one() + x * x).recip())
    }

    /// `x ↦ k·f(x)`.
    pub fn scaled(&self, k: T) -> Self {
        let (v, d) = (self.value.clone(), self.derivative.clone());
        Self::new(format!("{}*{}", k, self.name), move |x| k * v(x), move |x| k * d(x))
            .with_bounds(self.sup_bound.map(|s| s * k.abs()), self.lipschitz_bound.map(|l| l * k.abs()))
    }

    /// `x ↦ f(x)·g(x)`.
    pub fn product(&self, other: &ScalarField<T>) -> Self {
        let (fv, fd) = (self.value.clone(), self.derivative.clone());
        let (gv, gd) = (other.value.clone(), other.derivative.clone());
        let (fv2, gv2) = (fv.clone(), gv.clone());
        Self::new(
            format!("({})*({})", self.name, other.name),
            move |x| fv(x) * gv(x),
            move |x| fd(x) * gv2(x) + fv2(x) * gd(x),
        )
    }

    /// `x ↦ f(x) + g(x)`.
    pub fn sum(&self, other: &ScalarField<T>) -> Self {
        let (fv, fd) = (self.value.clone(), self.derivative.clone());
        let (gv, gd) = (other.value.clone(), other.derivative.clone());
        Self::new(
            format!("({})+({})", self.name, other.name),
            move |x| fv(x) + gv(x),
            move |x| fd(x) + gd(x),
        )
    }
}

/// A diffusion coefficient `σ` for the Marcus equation.
#[derive(Clone, Debug)]
pub struct DiffusionField<T> {
    pub field: ScalarField<T>,
    /// Witness of ellipticity: `|σ| ≥ min_abs` on the scenario range.
    pub min_abs: Option<T>,
}

impl<T: Real> DiffusionField<T> {
    pub fn new(field: ScalarField<T>) -> Self {
        Self { field, min_abs: None }
    }

    pub fn with_min_abs(mut self, m: T) -> Self {
        self.min_abs = Some(m);
        self
    }

    pub fn unit() -> Self {
        Self::new(ScalarField::constant(T::one())).with_min_abs(T::one())
    }

    pub fn name(&self) -> &str {
        self.field.name()
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        self.field.eval(x)
    }

    #[inline]
    pub fn deriv(&self, x: T) -> T {
        self.field.deriv(x)
    }

    /// Derivative probe plus, when `min_abs` is set, `|σ| ≥ min_abs` on the grid.
    pub fn check(&self, lo: T, hi: T) -> Result<()> {
        self.field.check_derivative(lo, hi)?;
        self.check_nonvanishing(lo, hi)
    }

    /// Checks that σ keeps one sign and stays away from zero on `[lo, hi]`.
    pub fn check_nonvanishing(&self, lo: T, hi: T) -> Result<()> {
        let floor = self.min_abs.unwrap_or(T::zero());
        let mut sign = None;
        for x in probe_grid(lo, hi) {
            let s = self.eval(x);
            let bad = s == T::zero() || s.abs() < floor || sign.is_some_and(|sg: T| sg != s.signum());
            if bad || !s.is_finite() {
                return Err(Error::AssumptionHViolation { x: x.to_f64_lossy(), value: s.to_f64_lossy() });
            }
            sign = Some(s.signum());
        }
        Ok(())
    }
}

/// Uniform probe grid of [`PROBE_POINTS`] points over `[lo, hi]`.
pub fn probe_grid<T: Real>(lo: T, hi: T) -> impl Iterator<Item = T> {
    let n = PROBE_POINTS - 1;
    (0..=n).map(move |i| lo + (hi - lo) * T::lit(i as f64 / n as f64))
}
