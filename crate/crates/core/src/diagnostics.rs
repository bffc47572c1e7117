//! Statistics on Monte Carlo samples of terminal values: atom detection,
//! lattice concentration, two-sample Kolmogorov–Smirnov, kernel density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow_engine::Trajectory;
use crate::ode::rk4_autonomous;
use crate::scalar::Real;

/// Minimum sample size for the asymptotic statistics below.
pub const MIN_BATCH: usize = 1000;
/// `c(α)` of the asymptotic two-sample KS test at α = 1%.
pub const KS_C_ONE_PERCENT: f64 = 1.628;
pub const KDE_POINTS: usize = 512;
const SKELETON_STEPS_PER_UNIT: f64 = 4096.0;

/// Sorted sample with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch<T> {
    values: Vec<T>,
    pub label: String,
    pub seed: u64,
}

impl<T: Real> SampleBatch<T> {
    pub fn new(mut values: Vec<T>, label: impl Into<String>, seed: u64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sample contains non-finite values"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        Ok(Self { values, label: label.into(), seed })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn range(&self) -> T {
        match (self.values.first(), self.values.last()) {
            (Some(&lo), Some(&hi)) => hi - lo,
            _ => T::zero(),
        }
    }

    /// A batch with `x ↦ f(x)` applied to every value.
    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.label.clone(), self.seed)
    }

    pub fn mean(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v) / T::lit(self.count().max(1) as f64)
    }

    pub fn std_dev(&self) -> T {
        let m = self.mean();
        let n = self.count();
        if n < 2 {
            return T::zero();
        }
        (self.values.iter().fold(T::zero(), |acc, &v| acc + (v - m) * (v - m)) / T::lit((n - 1) as f64)).sqrt()
    }

    /// Linear-interpolated sample quantile.
    pub fn quantile(&self, p: T) -> T {
        let n = self.count();
        let pos = p.max(T::zero()).min(T::one()) * T::lit((n - 1) as f64);
        let i = pos.floor().to_usize().unwrap_or(0).min(n - 1);
        let j = (i + 1).min(n - 1);
        let frac = pos - T::lit(i as f64);
        self.values[i] + (self.values[j] - self.values[i]) * frac
    }

    /// Fraction of values in `[center − half, center + half]`.
    pub fn mass_near(&self, center: T, half: T) -> T {
        let lo = self.values.partition_point(|&v| v < center - half);
        let hi = self.values.partition_point(|&v| v <= center + half);
        T::lit((hi - lo) as f64 / self.count().max(1) as f64)
    }

    fn require(&self, min: usize) -> Result<()> {
        if self.count() < min {
            return Err(Error::Precondition(format!(
                "batch `{}` has {} values, at least {min} needed",
                self.label,
                self.count()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCandidate<T> {
    pub location: T,
    pub mass: T,
    pub window: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport<T> {
    /// Sorted by mass, largest first.
    pub candidates: Vec<AtomCandidate<T>>,
    pub atoms_present: bool,
    pub threshold: T,
    pub window: T,
}

/// Solution at time `t` of the jump-free equation `x' = a(x) + d`.
pub fn deterministic_skeleton<T: Real>(a: &ScalarField<T>, d: T, x0: T, t: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::domain(format!("skeleton time must be positive, got {t}")));
    }
    let n = (t.to_f64_lossy() * SKELETON_STEPS_PER_UNIT).ceil().max(1.0) as usize;
    Ok(rk4_autonomous(|x| a.eval(x) + d, x0, t, n))
}

/// Standard error `√(p(1−p)/n)` of an estimated atom mass `p` from `n` draws.
pub fn atom_mass_standard_error(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n.max(1) as f64).sqrt()
}

/// Window `10⁻⁶·range` (or `10⁻⁶·max(1, |x|)` for a constant sample).
pub fn default_atom_window<T: Real>(batch: &SampleBatch<T>) -> T {
    let r = batch.range();
    if r > T::zero() {
        T::lit(1e-6) * r
    } else {
        T::lit(1e-6) * batch.values.first().map_or(T::one(), |v| v.abs().max(T::one()))
    }
}

/// Threshold `3·√(ln n / n)`.
pub fn default_atom_threshold<T: Real>(n: usize) -> T {
    let n = n.max(2) as f64;
    T::lit(3.0 * (n.ln() / n).sqrt())
}

/// Slides a closed window of width `window` over the sorted sample. Runs of
/// overlapping windows that each hold at least `threshold·n` values form one
/// candidate, located at the midpoint of the values in its heaviest window.
pub fn detect_atoms<T: Real>(batch: &SampleBatch<T>, window: T, threshold: T) -> Result<AtomReport<T>> {
    if !(window > T::zero()) || !window.is_finite() {
        return Err(Error::domain(format!("atom window must be positive, got {window}")));
    }
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::domain(format!("atom threshold must lie in (0, 1), got {threshold}")));
    }
    batch.require(MIN_BATCH)?;
    let v = &batch.values;
    let n = v.len();
    let need = (threshold * T::lit(n as f64)).to_f64_lossy();
    let mut candidates = Vec::new();
    // current cluster: (best count, best i, best j, right edge of the cluster)
    let mut cluster: Option<(usize, usize, usize, T)> = None;
    let mut j = 0;
    for i in 0..n {
        if j < i {
            j = i;
        }
        while j + 1 < n && v[j + 1] - v[i] <= window {
            j += 1;
        }
        let count = j - i + 1;
        let heavy = count as f64 >= need;
        match (&mut cluster, heavy) {
            (Some(c), true) if v[i] <= c.3 => {
                if count > c.0 {
                    *c = (count, i, j, v[i] + window);
                } else {
                    c.3 = v[i] + window;
                }
            }
            (_, true) => {
                if let Some(c) = cluster.take() {
                    candidates.push(candidate(v, c, n, window));
                }
                cluster = Some((count, i, j, v[i] + window));
            }
            (Some(c), false) if v[i] > c.3 => {
                candidates.push(candidate(v, *c, n, window));
                cluster = None;
            }
            _ => {}
        }
    }
    if let Some(c) = cluster {
        candidates.push(candidate(v, c, n, window));
    }
    candidates.sort_by(|a, b| b.mass.partial_cmp(&a.mass).expect("finite").then(a.location.partial_cmp(&b.location).expect("finite")));
    Ok(AtomReport { atoms_present: !candidates.is_empty(), candidates, threshold, window })
}

fn candidate<T: Real>(v: &[T], c: (usize, usize, usize, T), n: usize, window: T) -> AtomCandidate<T> {
    let (count, i, j, _) = c;
    AtomCandidate { location: (v[i] + v[j]) * T::lit(0.5), mass: T::lit(count as f64 / n as f64), window }
}

/// [`detect_atoms`] with the default window and threshold.
pub fn detect_atoms_default<T: Real>(batch: &SampleBatch<T>) -> Result<AtomReport<T>> {
    detect_atoms(batch, default_atom_window(batch), default_atom_threshold(batch.count()))
}

/// Fraction of the sample within `halfwidth` of `offset + spacing·ℤ`.
pub fn lattice_concentration_at<T: Real>(batch: &SampleBatch<T>, spacing: T, halfwidth: T, offset: T) -> Result<T> {
    check_lattice(spacing, halfwidth)?;
    let hits = batch
        .values
        .iter()
        .filter(|&&v| {
            let r = residue(v - offset, spacing);
            r <= halfwidth || spacing - r <= halfwidth
        })
        .count();
    Ok(T::lit(hits as f64 / batch.count().max(1) as f64))
}

/// Fraction of the sample within `halfwidth` of the best-placed translate
/// of `spacing·ℤ`. The offset is optimized exactly: residues modulo
/// `spacing` are sorted and the fullest circular arc of length
/// `2·halfwidth` is found by a sliding window.
pub fn lattice_concentration<T: Real>(batch: &SampleBatch<T>, spacing: T, halfwidth: T) -> Result<T> {
    check_lattice(spacing, halfwidth)?;
    let n = batch.count();
    if n == 0 {
        return Ok(T::zero());
    }
    let mut r: Vec<T> = batch.values.iter().map(|&v| residue(v, spacing)).collect();
    r.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let width = halfwidth + halfwidth;
    let mut best = 0;
    let mut j = 0;
    // unrolled circle: index k ≥ n stands for r[k − n] + spacing
    let at = |k: usize| if k < n { r[k] } else { r[k - n] + spacing };
    for (i, &ri) in r.iter().enumerate() {
        j = j.max(i);
        while j + 1 < i + n && at(j + 1) - ri <= width {
            j += 1;
        }
        best = best.max(j - i + 1);
    }
    Ok(T::lit(best as f64 / n as f64))
}

fn check_lattice<T: Real>(spacing: T, halfwidth: T) -> Result<()> {
    if !(spacing > T::zero()) || !(halfwidth > T::zero()) || !(halfwidth < spacing * T::lit(0.5)) {
        return Err(Error::domain(format!(
            "lattice needs spacing > 0 and 0 < halfwidth < spacing/2, got {spacing}, {halfwidth}"
        )));
    }
    Ok(())
}

fn residue<T: Real>(v: T, spacing: T) -> T {
    let q = v / spacing;
    let r = (q - q.floor()) * spacing;
    if r >= spacing {
        T::zero()
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult<T> {
    pub statistic: T,
    pub critical_1pct: T,
}

impl<T: Real> KsResult<T> {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F₁ − F₂|` and the
/// asymptotic 1% critical value `1.628·√((n+m)/(nm))`.
pub fn two_sample_ks<T: Real>(a: &SampleBatch<T>, b: &SampleBatch<T>) -> Result<KsResult<T>> {
    a.require(MIN_BATCH)?;
    b.require(MIN_BATCH)?;
    let (x, y) = (&a.values, &b.values);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < n && x[i] == t {
            i += 1;
        }
        while j < m && y[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(KsResult {
        statistic: T::lit(d),
        critical_1pct: T::lit(KS_C_ONE_PERCENT * ((nf + mf) / (nf * mf)).sqrt()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KdeResult<T> {
    Curve { bandwidth: T, points: Vec<(T, T)> },
    /// Zero-variance sample.
    Degenerate,
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n^{-1/5}` (falls back to `sd`
/// when the IQR vanishes).
pub fn silverman_bandwidth<T: Real>(batch: &SampleBatch<T>) -> T {
    let sd = batch.std_dev();
    let iqr = (batch.quantile(T::lit(0.75)) - batch.quantile(T::lit(0.25))) / T::lit(1.34);
    let spread = if iqr > T::zero() { sd.min(iqr) } else { sd };
    T::lit(0.9) * spread * T::lit((batch.count() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate on [`KDE_POINTS`] points spanning the
/// sample range widened by three bandwidths on each side.
pub fn kde<T: Real>(batch: &SampleBatch<T>, bandwidth: Option<T>) -> Result<KdeResult<T>> {
    batch.require(MIN_BATCH)?;
    if batch.range() == T::zero() {
        return Ok(KdeResult::Degenerate);
    }
    let bw = match bandwidth {
        Some(b) if b > T::zero() => b,
        Some(b) => return Err(Error::domain(format!("bandwidth must be positive, got {b}"))),
        None => silverman_bandwidth(batch),
    };
    if !(bw > T::zero()) {
        return Ok(KdeResult::Degenerate);
    }
    let v = &batch.values;
    let lo = v[0] - T::lit(3.0) * bw;
    let hi = v[v.len() - 1] + T::lit(3.0) * bw;
    let reach = T::lit(9.0) * bw;
    let norm = T::one() / (T::lit(v.len() as f64) * bw * T::lit((2.0 * std::f64::consts::PI).sqrt()));
    let points = (0..KDE_POINTS)
        .map(|k| {
            let x = lo + (hi - lo) * T::lit(k as f64 / (KDE_POINTS - 1) as f64);
            let a = v.partition_point(|&s| s < x - reach);
            let b = v.partition_point(|&s| s <= x + reach);
            let sum = v[a..b].iter().fold(T::zero(), |acc, &s| {
                let u = (x - s) / bw;
                acc + (-(u * u) * T::lit(0.5)).exp()
            });
            (x, sum * norm)
        })
        .collect();
    Ok(KdeResult::Curve { bandwidth: bw, points })
}

/// Trapezoid integral of a density curve.
pub fn curve_mass<T: Real>(points: &[(T, T)]) -> T {
    points.windows(2).fold(T::zero(), |acc, w| acc + (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::lit(0.5))
}

/// Jump times at which `|a(X_t) − a(X_{t−})| ≥ eta`.
pub fn drift_jump_events<T: Real, R: Trajectory<T>>(a: &ScalarField<T>, traj: &R, eta: T) -> Result<Vec<T>> {
    if !(eta > T::zero()) {
        return Err(Error::domain(format!("eta must be positive, got {eta}")));
    }
    Ok(traj
        .jump_nodes()
        .iter()
        .filter(|&&k| (a.eval(traj.x()[k]) - a.eval(traj.x_left()[k])).abs() >= eta)
        .map(|&k| traj.times()[k])
        .collect())
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn clustered(seed: u64) -> SampleBatch<f64> {
        let mut r = RngStream::new(seed, 0);
        let vals = (0..3000)
            .map(|i| if i % 3 == 0 { 0.75 } else if i % 7 == 0 { -1.25 } else { r.standard_normal() })
            .collect();
        SampleBatch::new(vals, "c", seed).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn atom_detection_is_scale_equivariant(seed in 0u64..1000, k in -3i32..4, shift in -10.0f64..10.0) {
            let b = clustered(seed);
            let w = 1e-6;
            let base = detect_atoms(&b, w, 0.05).unwrap();
            let scale = 2f64.powi(k);
            let t = detect_atoms(&b.map(|v| scale * v + shift).unwrap(), w * scale, 0.05).unwrap();
            prop_assert_eq!(base.atoms_present, t.atoms_present);
            prop_assert_eq!(base.candidates.len(), t.candidates.len());
            for (p, q) in base.candidates.iter().zip(&t.candidates) {
                prop_assert!((scale * p.location + shift - q.location).abs() < 1e-9);
                prop_assert_eq!(p.mass, q.mass);
            }
        }

        #[test]
        fn lattice_concentration_bounded_and_monotone(seed in 0u64..1000, h in 1e-6f64..0.1) {
            let b = clustered(seed);
            let c1 = lattice_concentration(&b, 0.25, h).unwrap();
            let c2 = lattice_concentration(&b, 0.25, (h * 1.5).min(0.124)).unwrap();
            prop_assert!((0.0..=1.0).contains(&c1));
            prop_assert!(c2 >= c1);
        }

        #[test]
        fn ks_invariant_under_monotone_maps(seed in 0u64..1000) {
            let mut r = RngStream::new(seed, 1);
            let a = SampleBatch::new((0..1500).map(|_| r.standard_normal()).collect(), "a", seed).unwrap();
            let b = SampleBatch::new((0..1200).map(|_| r.uniform() * 3.0 - 1.0).collect(), "b", seed).unwrap();
            let d = two_sample_ks(&a, &b).unwrap();
            let e = two_sample_ks(&a.map(|v| v * v * v).unwrap(), &b.map(|v| v * v * v).unwrap()).unwrap();
            prop_assert_eq!(d, e);
        }
    }
}
