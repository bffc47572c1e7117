//! Lévy triplets, jump measures and the classical absolute-continuity criteria.
//!
//! A [`JumpMeasureSpec`] is one of three shapes: a finite list of atoms, a
//! truncated atomic family whose idealized limit may be infinite, or a density
//! on a bounded punctured interval. Integrals against density forms are
//! computed shell by shell on dyadic shells `[2^{-k-1}, 2^{-k}]` so that power
//! laws at the origin never reach the quadrature rule.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::RealFn;
use crate::quad::adaptive_simpson_rel;
use crate::scalar::Real;

/// Partial sums beyond this are declared divergent.
const DIVERGENCE_CAP: f64 = 1e6;
/// A shell contributing less than this fraction of the running sum ends the sum.
const CAUCHY_RATIO: f64 = 1e-15;
const SHELL_REL_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom<T> {
    pub size: T,
    /// Intensity per unit time.
    pub rate: T,
}

/// A positive intensity supported on `[lower, upper] ∖ {0}`.
#[derive(Clone)]
pub struct DensityForm<T> {
    pub name: String,
    pub intensity: RealFn<T>,
    pub lower: T,
    pub upper: T,
}

impl<T> fmt::Debug for DensityForm<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityForm")
            .field("name", &self.name)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

/// The jump (Lévy) measure ν.
#[derive(Clone, Debug)]
pub enum JumpMeasureSpec<T> {
    FiniteAtomic { atoms: Vec<Atom<T>> },
    /// Levels `n = 1..=N`; `sizes[n-1]`, `rates[n-1]`. `idealized_infinite`
    /// records whether the `N → ∞` limit has infinite mass.
    TruncatedAtomicFamily { sizes: Vec<T>, rates: Vec<T>, idealized_infinite: bool },
    DensityForm(DensityForm<T>),
}

/// A Borel band `{ z : lo ⋖ |z| ⋖ hi }` used to restrict integrals.
#[derive(Clone, Copy, Debug)]
struct Band<T> {
    lo: T,
    lo_inclusive: bool,
    hi: Option<T>,
    hi_inclusive: bool,
}

impl<T: Real> Band<T> {
    fn contains(&self, z: T) -> bool {
        let m = z.abs();
        let above = if self.lo_inclusive { m >= self.lo } else { m > self.lo };
        let below = match self.hi {
            None => true,
            Some(h) if self.hi_inclusive => m <= h,
            Some(h) => m < h,
        };
        above && below
    }
}

impl<T: Real> JumpMeasureSpec<T> {
    pub fn zero() -> Self {
        JumpMeasureSpec::FiniteAtomic { atoms: Vec::new() }
    }

    pub fn finite_atomic(atoms: Vec<Atom<T>>) -> Result<Self> {
        for a in &atoms {
            if a.size == T::zero() || !a.size.is_finite() {
                return Err(Error::domain(format!("atom size must be finite and nonzero, got {}", a.size)));
            }
            if !(a.rate >= T::zero()) || !a.rate.is_finite() {
                return Err(Error::domain(format!("atom rate must be finite and >= 0, got {}", a.rate)));
            }
        }
        Ok(JumpMeasureSpec::FiniteAtomic { atoms })
    }

    pub fn single_atom(size: T, rate: T) -> Result<Self> {
        Self::finite_atomic(vec![Atom { size, rate }])
    }

    /// Family with `size(n) = size_of_level(n)`, `rate(n) = rate_of_level(n)`, `n = 1..=levels`.
    pub fn truncated_family(
        size_of_level: impl Fn(u32) -> T,
        rate_of_level: impl Fn(u32) -> T,
        levels: u32,
        idealized_infinite: bool,
    ) -> Result<Self> {
        if levels == 0 {
            return Err(Error::domain("a truncated family needs at least one level"));
        }
        let sizes: Vec<T> = (1..=levels).map(&size_of_level).collect();
        let rates: Vec<T> = (1..=levels).map(&rate_of_level).collect();
        for (s, r) in sizes.iter().zip(&rates) {
            if *s == T::zero() || !s.is_finite() || !(*r >= T::zero()) || !r.is_finite() {
                return Err(Error::domain(format!("invalid family level: size {s}, rate {r}")));
            }
        }
        if sizes.windows(2).any(|w| !(w[1].abs() < w[0].abs())) {
            return Err(Error::domain("family sizes must decrease strictly toward 0"));
        }
        Ok(JumpMeasureSpec::TruncatedAtomicFamily { sizes, rates, idealized_infinite })
    }

    /// Sizes `2^{-n}`, rates `2^{n}`, `n = 1..=levels`; infinite in the limit.
    pub fn dyadic_family(levels: u32) -> Result<Self> {
        Self::truncated_family(
            |n| T::lit(2f64.powi(-(n as i32))),
            |n| T::lit(2f64.powi(n as i32)),
            levels,
            true,
        )
    }

    pub fn density(
        name: impl Into<String>,
        intensity: impl Fn(T) -> T + Send + Sync + 'static,
        lower: T,
        upper: T,
    ) -> Result<Self> {
        if !(lower <= T::zero() && upper >= T::zero() && lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::domain("density support must be a finite interval containing 0"));
        }
        let spec = JumpMeasureSpec::DensityForm(DensityForm {
            name: name.into(),
            intensity: Arc::new(intensity),
            lower,
            upper,
        });
        spec.check_integrability()?;
        Ok(spec)
    }

    /// `scale·|z|^{-exponent}` on `[lower, upper] ∖ {0}`.
    pub fn power_density(scale: T, exponent: T, lower: T, upper: T) -> Result<Self> {
        Self::density(
            format!("{scale}*|z|^-{exponent}"),
            move |z: T| scale * z.abs().powf(-exponent),
            lower,
            upper,
        )
    }

    /// Checks `∫ min(1, z²) ν(dz) < ∞` (the Lévy-measure condition).
    pub fn check_integrability(&self) -> Result<()> {
        if let JumpMeasureSpec::DensityForm(d) = self {
            let small = shell_sum(d, |z| z * z, T::one().min(d.upper.max(-d.lower)));
            if small.diverged {
                return Err(Error::domain(format!("density `{}` violates ∫min(1,z²)ν(dz) < ∞", d.name)));
            }
            let big = self.integrate(|_| T::one(), Band { lo: T::one(), lo_inclusive: true, hi: None, hi_inclusive: false });
            if !big.is_finite() {
                return Err(Error::domain(format!("density `{}` has infinite mass away from 0", d.name)));
            }
        }
        Ok(())
    }

    /// `∫_band g(z) ν(dz)`.
    fn integrate<G: Fn(T) -> T>(&self, g: G, band: Band<T>) -> T {
        match self {
            JumpMeasureSpec::FiniteAtomic { atoms } => atoms
                .iter()
                .filter(|a| band.contains(a.size))
                .fold(T::zero(), |acc, a| acc + a.rate * g(a.size)),
            JumpMeasureSpec::TruncatedAtomicFamily { sizes, rates, .. } => sizes
                .iter()
                .zip(rates)
                .filter(|(s, _)| band.contains(**s))
                .fold(T::zero(), |acc, (s, r)| acc + *r * g(*s)),
            JumpMeasureSpec::DensityForm(d) => integrate_density(d, &g, band),
        }
    }

    /// `ν({|z| ≥ cutoff})`.
    pub fn total_rate(&self, cutoff: T) -> Result<T> {
        if !(cutoff > T::zero()) {
            return Err(Error::domain(format!("cutoff must be positive, got {cutoff}")));
        }
        Ok(self.integrate(|_| T::one(), Band { lo: cutoff, lo_inclusive: true, hi: None, hi_inclusive: false }))
    }

    /// Whether the (idealized) measure has infinite total mass.
    pub fn is_infinite(&self) -> bool {
        match self {
            JumpMeasureSpec::FiniteAtomic { .. } => false,
            JumpMeasureSpec::TruncatedAtomicFamily { idealized_infinite, .. } => *idealized_infinite,
            JumpMeasureSpec::DensityForm(d) => {
                let reach = T::one().min(d.upper.max(-d.lower));
                shell_sum(d, |_| T::one(), reach).diverged
            }
        }
    }

    /// `μ(−ε, ε) = ∫_{|z|<ε} z²(1+z²)^{-1} ν(dz)`.
    pub fn mu_measure(&self, epsilon: T) -> Result<T> {
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        let w = |z: T| z * z / (T::one() + z * z);
        Ok(match self {
            JumpMeasureSpec::DensityForm(d) => shell_sum(d, w, epsilon).sum,
            _ => self.integrate(w, Band { lo: T::zero(), lo_inclusive: false, hi: Some(epsilon), hi_inclusive: false }),
        })
    }

    /// Atom-sum formula for `μ(−ε, ε)`; `None` for density forms.
    pub fn mu_measure_atom_sum(&self, epsilon: T) -> Option<T> {
        let atoms: Vec<(T, T)> = match self {
            JumpMeasureSpec::FiniteAtomic { atoms } => atoms.iter().map(|a| (a.size, a.rate)).collect(),
            JumpMeasureSpec::TruncatedAtomicFamily { sizes, rates, .. } => {
                sizes.iter().copied().zip(rates.iter().copied()).collect()
            }
            JumpMeasureSpec::DensityForm(_) => return None,
        };
        Some(
            atoms
                .into_iter()
                .filter(|(s, _)| s.abs() < epsilon)
                .map(|(s, r)| r * s * s / (T::one() + s * s))
                .fold(T::zero(), |a, b| a + b),
        )
    }

    /// `∫_{lo<|z|≤hi} z ν(dz)`; the compensator of jumps between truncation and 1.
    pub fn compensator(&self, lo: T, hi: T) -> T {
        if !(hi > lo) {
            return T::zero();
        }
        self.integrate(|z| z, Band { lo, lo_inclusive: false, hi: Some(hi), hi_inclusive: true })
    }

    /// `∫_{|z|≥cutoff} z ν(dz)`: mean jump sum per unit time above `cutoff`.
    pub fn first_moment_above(&self, cutoff: T) -> T {
        self.integrate(|z| z, Band { lo: cutoff, lo_inclusive: true, hi: None, hi_inclusive: false })
    }

    /// Smallest nonzero |size| carried by an atomic measure.
    pub fn smallest_atom(&self) -> Option<T> {
        match self {
            JumpMeasureSpec::FiniteAtomic { atoms } => atoms.iter().filter(|a| a.rate > T::zero()).map(|a| a.size.abs()).reduce(T::min),
            JumpMeasureSpec::TruncatedAtomicFamily { sizes, rates, .. } => sizes
                .iter()
                .zip(rates)
                .filter(|(_, r)| **r > T::zero())
                .map(|(s, _)| s.abs())
                .reduce(T::min),
            JumpMeasureSpec::DensityForm(_) => None,
        }
    }

    /// Adds atoms (e.g. of size ≥ 1) to an atomic measure. Density forms are rejected.
    pub fn with_extra_atoms(&self, extra: &[Atom<T>]) -> Result<Self> {
        match self {
            JumpMeasureSpec::FiniteAtomic { atoms } => {
                let mut all = atoms.clone();
                all.extend_from_slice(extra);
                Self::finite_atomic(all)
            }
            _ => Err(Error::domain("extra atoms can only be added to a finite atomic measure")),
        }
    }
}

/// Evaluates `μ(−ε,ε)/(ε²|log ε|)` at one `ε`.
fn kallenberg_ratio<T: Real>(spec: &JumpMeasureSpec<T>, eps: T) -> Result<T> {
    Ok(spec.mu_measure(eps)? / (eps * eps * eps.ln().abs()))
}

/// Drift, Gaussian variance and jump measure of a Lévy process.
#[derive(Clone, Debug)]
pub struct LevyTriplet<T> {
    pub drift: T,
    pub brownian_variance: T,
    pub jumps: JumpMeasureSpec<T>,
}

impl<T: Real> LevyTriplet<T> {
    pub fn new(drift: T, brownian_variance: T, jumps: JumpMeasureSpec<T>) -> Result<Self> {
        if !(brownian_variance >= T::zero()) || !brownian_variance.is_finite() {
            return Err(Error::domain(format!("brownian variance must be >= 0, got {brownian_variance}")));
        }
        if !drift.is_finite() {
            return Err(Error::domain("drift must be finite"));
        }
        Ok(Self { drift, brownian_variance, jumps })
    }

    /// Pure-jump triplet (no Gaussian part).
    pub fn pure_jump(drift: T, jumps: JumpMeasureSpec<T>) -> Self {
        Self { drift, brownian_variance: T::zero(), jumps }
    }
}

/// Condition (a) of the Kallenberg–Sato criterion is never evaluated numerically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvolutionCondition {
    NotEvaluated,
}

/// Condition (b) profile: `(ε, μ(−ε,ε)/(ε²|log ε|))` along a decreasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KallenbergProfile<T> {
    pub grid: Vec<(T, T)>,
    /// Ratios strictly increasing as ε decreases.
    pub diverging: bool,
    pub convolution_condition: ConvolutionCondition,
}

impl<T: Real> KallenbergProfile<T> {
    pub fn ratio_at(&self, eps: T) -> Option<T> {
        self.grid.iter().find(|(e, _)| *e == eps).map(|(_, r)| *r)
    }
}

/// `ε_i = 10^{-i/2}`, `i = 2..=12`.
pub fn default_epsilon_grid<T: Real>() -> Vec<T> {
    (2..=12).map(|i| T::lit(10f64.powf(-(i as f64) / 2.0))).collect()
}

pub fn kallenberg_b_profile<T: Real>(spec: &JumpMeasureSpec<T>, eps_grid: &[T]) -> Result<KallenbergProfile<T>> {
    if eps_grid.is_empty() {
        return Err(Error::domain("epsilon grid is empty"));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("epsilon grid must be strictly decreasing"));
    }
    let grid = eps_grid
        .iter()
        .map(|&e| kallenberg_ratio(spec, e).map(|r| (e, r)))
        .collect::<Result<Vec<_>>>()?;
    let diverging = grid.len() >= 2 && grid.windows(2).all(|w| w[1].1 > w[0].1);
    Ok(KallenbergProfile { grid, diverging, convolution_condition: ConvolutionCondition::NotEvaluated })
}

/// Döblin: `Z_t` carries atoms iff ν is finite.
pub fn doblin_predicts_atoms<T: Real>(spec: &JumpMeasureSpec<T>) -> bool {
    !spec.is_infinite()
}

#[derive(Clone, Copy, Debug)]
struct ShellSum<T> {
    sum: T,
    diverged: bool,
}

/// `∫_{0<|z|<reach} g(z) ν(dz)` as a sum over dyadic shells `[reach·2^{-k-1}, reach·2^{-k}]`.
fn shell_sum<T: Real, G: Fn(T) -> T>(d: &DensityForm<T>, g: G, reach: T) -> ShellSum<T> {
    let cap = T::lit(DIVERGENCE_CAP);
    let min_exp = T::min_positive_value().log2().abs().to_f64_lossy().floor() as i32;
    let max_shells = (min_exp - 4).clamp(16, 1000) as usize;
    let mut sum = T::zero();
    let mut terms: Vec<T> = Vec::new();
    let mut hi = reach;
    for _ in 0..max_shells {
        let lo = hi * T::lit(0.5);
        let term = shell_term(d, &g, lo, hi);
        sum += term;
        terms.push(term);
        if sum.abs() > cap || !sum.is_finite() {
            return ShellSum { sum, diverged: true };
        }
        if term.abs() <= T::lit(CAUCHY_RATIO) * sum.abs() {
            return ShellSum { sum, diverged: false };
        }
        hi = lo;
    }
    // No Cauchy decay within the representable range: look at the tail trend.
    let n = terms.len();
    let lag = 20.min(n - 1);
    let tail_ratio = terms[n - 1].abs() / terms[n - 1 - lag].abs().max(T::min_positive_value());
    ShellSum { sum, diverged: tail_ratio > T::lit(0.5) && sum.abs() > T::zero() }
}

/// Integral of `g·intensity` over `[lo, hi] ∪ [−hi, −lo]` restricted to the support.
fn shell_term<T: Real, G: Fn(T) -> T>(d: &DensityForm<T>, g: &G, lo: T, hi: T) -> T {
    let f = |z: T| g(z) * (d.intensity)(z);
    let mut total = T::zero();
    let (plo, phi) = (lo, hi.min(d.upper));
    if phi > plo {
        total += adaptive_simpson_rel(&f, plo, phi, T::lit(SHELL_REL_TOL), T::zero());
    }
    let (nlo, nhi) = ((-hi).max(d.lower), -lo);
    if nhi > nlo {
        total += adaptive_simpson_rel(&f, nlo, nhi, T::lit(SHELL_REL_TOL), T::zero());
    }
    total
}

fn integrate_density<T: Real, G: Fn(T) -> T>(d: &DensityForm<T>, g: &G, band: Band<T>) -> T {
    let outer = match band.hi {
        Some(h) => h.min(d.upper.max(-d.lower)),
        None => d.upper.max(-d.lower),
    };
    if band.lo <= T::zero() {
        // Reaches the origin: dyadic shells below `outer`.
        return shell_sum(d, g, outer).sum;
    }
    // Geometric pieces of ratio 2 from `lo` to `outer`.
    let mut total = T::zero();
    let mut lo = band.lo;
    while lo < outer {
        let hi = (lo + lo).min(outer);
        total += shell_term(d, g, lo, hi);
        lo = hi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pow32() -> JumpMeasureSpec<f64> {
        JumpMeasureSpec::power_density(1.0, 1.5, -1.0, 1.0).unwrap()
    }

    #[test]
    fn total_rate_examples() {
        let s = JumpMeasureSpec::single_atom(1.0, 2.0).unwrap();
        assert_eq!(s.total_rate(0.5).unwrap(), 2.0);
        assert_eq!(s.total_rate(1.5).unwrap(), 0.0);
        assert!(s.total_rate(0.0).is_err());
        assert!(s.total_rate(-1.0).is_err());
        // 2∫_{1/4}^1 z^{-3/2} dz = 4
        let r = pow32().total_rate(0.25).unwrap();
        assert!((r - 4.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn total_rate_density_matches_independent_quadrature() {
        // Composite Simpson on the substitution z = 1/u², which is smooth on [1, 2].
        let n = 2000;
        let (a, b) = (1.0f64, 2.0f64);
        let h = (b - a) / n as f64;
        let g = |u: f64| 2.0 * u.powi(-3) * u.powi(3); // z^{-3/2} dz with z = u^{-2}
        let mut s = g(a) + g(b);
        for i in 1..n {
            s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = 2.0 * s * h / 3.0; // both signs
        assert!((pow32().total_rate(0.25).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn infinite_mass_detection() {
        assert!(!JumpMeasureSpec::single_atom(1.0, 2.0).unwrap().is_infinite());
        assert!(JumpMeasureSpec::<f64>::dyadic_family(12).unwrap().is_infinite());
        let finite_family = JumpMeasureSpec::<f64>::truncated_family(|n| 0.5f64.powi(n as i32), |_| 1.0, 5, false).unwrap();
        assert!(!finite_family.is_infinite());
        assert!(pow32().is_infinite());
        let log_div = JumpMeasureSpec::power_density(1.0, 1.0, -1.0, 1.0).unwrap();
        assert!(log_div.is_infinite());
        let integrable = JumpMeasureSpec::power_density(1.0, 0.5, -1.0, 1.0).unwrap();
        assert!(!integrable.is_infinite());
    }

    #[test]
    fn non_levy_density_is_rejected() {
        assert!(JumpMeasureSpec::power_density(1.0f64, 3.5, -1.0, 1.0).is_err());
        assert!(JumpMeasureSpec::power_density(1.0f64, 1.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn mu_measure_examples() {
        let s = JumpMeasureSpec::single_atom(1.0, 2.0).unwrap();
        assert_eq!(s.mu_measure(0.5).unwrap(), 0.0);
        let t = JumpMeasureSpec::single_atom(0.1f64, 3.0).unwrap();
        assert!((t.mu_measure(0.5).unwrap() - 3.0 * 0.01 / 1.01).abs() < 1e-15);
        assert!(s.mu_measure(0.0).is_err());
        assert!(s.mu_measure(1.0).is_err());
        let eps = 1e-4;
        let m = pow32().mu_measure(eps).unwrap();
        let approx = 4.0 / 3.0 * eps.powf(1.5);
        assert!(((m - approx) / approx).abs() < 1e-7, "{m} vs {approx}");
    }

    #[test]
    fn kallenberg_profile_examples() {
        let p = kallenberg_b_profile(&pow32(), &[1e-4]).unwrap();
        let r = p.grid[0].1;
        let expected = (4.0 / 3.0) * 1e2 / (1e-4f64).ln().abs();
        assert!((r - expected).abs() / expected < 1e-6);
        assert!((r - 14.476).abs() < 1e-3, "{r}");

        let atoms = JumpMeasureSpec::finite_atomic(vec![Atom { size: 0.1, rate: 4.0 }, Atom { size: 0.5, rate: 1.0 }]).unwrap();
        assert_eq!(kallenberg_b_profile(&atoms, &[0.01]).unwrap().grid[0].1, 0.0);

        let logd = JumpMeasureSpec::power_density(1.0f64, 1.0, -1.0, 1.0).unwrap();
        let prof = kallenberg_b_profile(&logd, &default_epsilon_grid()).unwrap();
        for (e, r) in &prof.grid {
            // μ(−ε,ε) = ln(1+ε²), so the ratio is ln(1+ε²)/(ε²|ln ε|)
            let exact = (e * e).ln_1p() / (e * e * e.ln().abs());
            assert!((r - exact).abs() < 1e-9 * exact, "{e}: {r} vs {exact}");
        }
        assert!(prof.grid.last().unwrap().1 < prof.grid[0].1);
        assert!(!prof.diverging);
        assert_eq!(prof.convolution_condition, ConvolutionCondition::NotEvaluated);
    }

    #[test]
    fn profile_grid_validation() {
        let s = pow32();
        assert!(kallenberg_b_profile(&s, &[]).is_err());
        assert!(kallenberg_b_profile(&s, &[1e-3, 1e-2]).is_err());
        assert!(kallenberg_b_profile(&s, &[1e-3, 2.0]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_epsilon_grid::<f64>();
        assert_eq!(g.len(), 11);
        assert!((g[0] - 0.1).abs() < 1e-15);
        assert!((g[10] - 1e-6).abs() < 1e-20);
        assert!(kallenberg_b_profile(&pow32(), &g).unwrap().diverging);
    }

    #[test]
    fn doblin_examples() {
        assert!(doblin_predicts_atoms(&JumpMeasureSpec::single_atom(1.0f64, 2.0).unwrap()));
        assert!(!doblin_predicts_atoms(&JumpMeasureSpec::<f64>::dyadic_family(12).unwrap()));
        assert!(!doblin_predicts_atoms(&pow32()));
    }

    #[test]
    fn family_validation() {
        assert!(JumpMeasureSpec::<f64>::truncated_family(|_| 0.5, |_| 1.0, 3, true).is_err());
        assert!(JumpMeasureSpec::<f64>::truncated_family(|n| n as f64, |_| 1.0, 3, true).is_err());
        assert!(JumpMeasureSpec::<f64>::dyadic_family(0).is_err());
        let d = JumpMeasureSpec::<f64>::dyadic_family(12).unwrap();
        assert_eq!(d.total_rate(1e-9).unwrap(), 8190.0);
        assert_eq!(d.first_moment_above(1e-9), 12.0);
    }

    #[test]
    fn atom_validation() {
        assert!(JumpMeasureSpec::single_atom(0.0f64, 1.0).is_err());
        assert!(JumpMeasureSpec::single_atom(1.0f64, -1.0).is_err());
        assert!(JumpMeasureSpec::single_atom(1.0f64, f64::INFINITY).is_err());
        assert!(LevyTriplet::new(0.0, -1.0, JumpMeasureSpec::<f64>::zero()).is_err());
    }

    #[test]
    fn compensator_of_symmetric_density_vanishes() {
        let c = pow32().compensator(0.01, 1.0);
        assert!(c.abs() < 1e-10);
        let one_sided = JumpMeasureSpec::power_density(1.0f64, 1.5, 0.0, 1.0).unwrap();
        // ∫_{0.01}^1 z^{-1/2} dz = 2(1 − 0.1)
        assert!((one_sided.compensator(0.01, 1.0) - 1.8).abs() < 1e-10);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn atoms() -> impl Strategy<Value = Vec<Atom<f64>>> {
        prop::collection::vec(
            (prop_oneof![1e-4f64..0.99, -0.99f64..-1e-4], 0.0f64..50.0).prop_map(|(size, rate)| Atom { size, rate }),
            0..12,
        )
    }

    proptest! {
        #[test]
        fn mu_nondecreasing_and_bounded(atoms in atoms()) {
            let spec = JumpMeasureSpec::finite_atomic(atoms.clone()).unwrap();
            let total: f64 = atoms.iter().map(|a| a.rate * a.size * a.size / (1.0 + a.size * a.size)).sum();
            let mut prev = 0.0;
            for i in 1..=20 {
                let e = i as f64 / 21.0;
                let m = spec.mu_measure(e).unwrap();
                prop_assert!(m >= prev);
                prop_assert!(m <= total + 1e-12);
                prev = m;
            }
        }

        #[test]
        fn atom_sum_matches_band_integral(atoms in atoms(), e in 0.001f64..0.999) {
            let spec = JumpMeasureSpec::finite_atomic(atoms).unwrap();
            let a = spec.mu_measure_atom_sum(e).unwrap();
            let q = spec.mu_measure(e).unwrap();
            prop_assert!((a - q).abs() <= 1e-12);
        }

        #[test]
        fn large_atoms_leave_profile_unchanged(atoms in atoms(), big in prop::collection::vec((1.0f64..10.0, 0.0f64..5.0), 1..4)) {
            let spec = JumpMeasureSpec::finite_atomic(atoms).unwrap();
            let extra: Vec<Atom<f64>> = big.into_iter().map(|(s, r)| Atom { size: s, rate: r }).collect();
            let more = spec.with_extra_atoms(&extra).unwrap();
            let g = default_epsilon_grid::<f64>();
            prop_assert_eq!(kallenberg_b_profile(&spec, &g).unwrap(), kallenberg_b_profile(&more, &g).unwrap());
        }
    }
}
