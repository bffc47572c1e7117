//! Realized Lévy paths, compound-Poisson sampling above a truncation level,
//! and the first-marked-jump decomposition used for stratification.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::levy_spec::{JumpMeasureSpec, LevyTriplet};
use crate::quad::adaptive_simpson_rel;
use crate::rng::RngStream;
use crate::scalar::Real;

/// Default Brownian skeleton resolution (cells per unit time).
pub const DEFAULT_BROWNIAN_CELLS_PER_UNIT: usize = 1 << 12;

/// Cells per side used to tabulate a density form for size sampling.
const DENSITY_TABLE_CELLS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump<T> {
    pub time: T,
    pub size: T,
}

/// Piecewise-linear Brownian path on a uniform grid, `values[0] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianSkeleton<T> {
    pub cell: T,
    pub values: Vec<T>,
}

impl<T: Real> BrownianSkeleton<T> {
    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.cells();
        let pos = (t / self.cell).max(T::zero());
        let i = pos.floor().to_usize().unwrap_or(n).min(n.saturating_sub(1));
        let frac = pos - T::lit(i as f64);
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// Slope on the cell containing `t` (right-continuous at nodes).
    pub fn slope_at(&self, t: T) -> T {
        let n = self.cells();
        let i = (t / self.cell).floor().to_usize().unwrap_or(n).min(n - 1);
        (self.values[i + 1] - self.values[i]) / self.cell
    }
}

/// A realized càdlàg driver: `Z_t = drift_rate·t + Σ_{t_i ≤ t} size_i (+ B_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyPath<T> {
    horizon: T,
    drift_rate: T,
    jumps: Vec<Jump<T>>,
    /// `cumulative[i] = Σ_{j ≤ i} size_j`.
    cumulative: Vec<T>,
    brownian: Option<BrownianSkeleton<T>>,
}

/// A time at which the driver's piecewise-linear description changes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint<T> {
    pub time: T,
    /// Total jump at this time (zero when none).
    pub jump: T,
}

impl<T: Real> LevyPath<T> {
    pub fn new(horizon: T, drift_rate: T, jumps: Vec<Jump<T>>, brownian: Option<BrownianSkeleton<T>>) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if !drift_rate.is_finite() {
            return Err(Error::domain("drift rate must be finite"));
        }
        let mut prev = T::zero();
        for j in &jumps {
            if !(j.time > prev) || j.time > horizon {
                return Err(Error::domain(format!(
                    "jump times must be strictly increasing in (0, {horizon}], got {} after {prev}",
                    j.time
                )));
            }
            if j.size == T::zero() || !j.size.is_finite() {
                return Err(Error::domain(format!("jump size must be finite and nonzero, got {}", j.size)));
            }
            prev = j.time;
        }
        if let Some(b) = &brownian {
            if b.values.len() < 2 || b.values[0] != T::zero() || !(b.cell > T::zero()) {
                return Err(Error::domain("malformed Brownian skeleton"));
            }
            let span = b.cell * T::lit(b.cells() as f64);
            if (span - horizon).abs() > T::lit(1e-9) * horizon {
                return Err(Error::domain("Brownian skeleton does not span the horizon"));
            }
        }
        let cumulative = jumps
            .iter()
            .scan(T::zero(), |acc, j| {
                *acc += j.size;
                Some(*acc)
            })
            .collect();
        Ok(Self { horizon, drift_rate, jumps, cumulative, brownian })
    }

    /// A jump path without Brownian part from `(time, size)` pairs.
    pub fn from_jumps(horizon: T, drift_rate: T, jumps: &[(T, T)]) -> Result<Self> {
        Self::new(horizon, drift_rate, jumps.iter().map(|&(time, size)| Jump { time, size }).collect(), None)
    }

    pub fn pure_drift(horizon: T, drift_rate: T) -> Result<Self> {
        Self::new(horizon, drift_rate, Vec::new(), None)
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn drift_rate(&self) -> T {
        self.drift_rate
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn brownian(&self) -> Option<&BrownianSkeleton<T>> {
        self.brownian.as_ref()
    }

    /// Sum of jumps with `t_i ≤ t`.
    pub fn jump_sum_through(&self, t: T) -> T {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            T::zero()
        } else {
            self.cumulative[k - 1]
        }
    }

    fn jump_sum_before(&self, t: T) -> T {
        let k = self.jumps.partition_point(|j| j.time < t);
        if k == 0 {
            T::zero()
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Continuous part `drift_rate·t + B_t`.
    pub fn continuous_part(&self, t: T) -> T {
        self.drift_rate * t + self.brownian.as_ref().map_or(T::zero(), |b| b.eval(t))
    }

    /// `Z_t` (right-continuous).
    pub fn eval(&self, t: T) -> T {
        self.continuous_part(t) + self.jump_sum_through(t)
    }

    /// `Z_{t−}`.
    pub fn eval_left(&self, t: T) -> T {
        self.continuous_part(t) + self.jump_sum_before(t)
    }

    pub fn terminal(&self) -> T {
        self.eval(self.horizon)
    }

    /// Slope of the continuous part on the linear piece starting at `t`.
    pub fn slope_at(&self, t: T) -> T {
        self.drift_rate + self.brownian.as_ref().map_or(T::zero(), |b| b.slope_at(t))
    }

    /// Sorted breakpoints: `0`, every jump time, every skeleton node, and the horizon.
    pub fn breakpoints(&self) -> Vec<Breakpoint<T>> {
        let mut times: Vec<T> = Vec::with_capacity(self.jumps.len() + 2);
        times.push(T::zero());
        if let Some(b) = &self.brownian {
            times.extend((1..b.cells()).map(|i| b.cell * T::lit(i as f64)));
        }
        times.extend(self.jumps.iter().map(|j| j.time));
        times.push(self.horizon);
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        times.dedup();
        let mut out = Vec::with_capacity(times.len());
        let mut k = 0;
        for t in times {
            let mut jump = T::zero();
            while k < self.jumps.len() && self.jumps[k].time == t {
                jump += self.jumps[k].size;
                k += 1;
            }
            out.push(Breakpoint { time: t, jump });
        }
        out
    }

    /// Index of the jump at exactly time `t`.
    pub fn jump_index_at(&self, t: T) -> Option<usize> {
        let k = self.jumps.partition_point(|j| j.time < t);
        (k < self.jumps.len() && self.jumps[k].time == t).then_some(k)
    }

    /// CSV dump with columns `kind,time,value` (`kind ∈ {drift, jump, brown}`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "kind,time,value")?;
        writeln!(w, "drift,0,{:?}", self.drift_rate.to_f64_lossy())?;
        for j in &self.jumps {
            writeln!(w, "jump,{:?},{:?}", j.time.to_f64_lossy(), j.size.to_f64_lossy())?;
        }
        if let Some(b) = &self.brownian {
            for (i, v) in b.values.iter().enumerate() {
                writeln!(w, "brown,{:?},{:?}", (b.cell * T::lit(i as f64)).to_f64_lossy(), v.to_f64_lossy())?;
            }
        }
        Ok(())
    }

    fn with_jumps_replaced(&self, jumps: Vec<Jump<T>>) -> Result<Self> {
        Self::new(self.horizon, self.drift_rate, jumps, self.brownian.clone())
    }
}

/// How jump sizes are drawn from the normalized, truncated jump measure.
#[derive(Clone, Debug)]
enum SizeSampler<T> {
    Empty,
    Discrete { sizes: Vec<T>, cumulative: Vec<f64> },
    /// Piecewise tabulation: cells `(lo, hi)` with cumulative masses; sizes
    /// within a cell are drawn by rejection against the cell's envelope.
    Tabulated { cells: Vec<(T, T, T)>, cumulative: Vec<f64>, density: crate::levy_spec::DensityForm<T> },
}

impl<T: Real> SizeSampler<T> {
    fn build(spec: &JumpMeasureSpec<T>, trunc: T) -> Self {
        match spec {
            JumpMeasureSpec::FiniteAtomic { atoms } => {
                Self::discrete(atoms.iter().map(|a| (a.size, a.rate)), trunc)
            }
            JumpMeasureSpec::TruncatedAtomicFamily { sizes, rates, .. } => {
                Self::discrete(sizes.iter().copied().zip(rates.iter().copied()), trunc)
            }
            JumpMeasureSpec::DensityForm(d) => {
                let f = |z: T| (d.intensity)(z);
                let mut cells = Vec::new();
                let mut push_side = |lo: T, hi: T, sign: T| {
                    if !(hi > lo) {
                        return;
                    }
                    let ratio = (hi / lo).ln() / T::lit(DENSITY_TABLE_CELLS as f64);
                    for i in 0..DENSITY_TABLE_CELLS {
                        let a = lo * (ratio * T::lit(i as f64)).exp();
                        let b = if i + 1 == DENSITY_TABLE_CELLS { hi } else { lo * (ratio * T::lit((i + 1) as f64)).exp() };
                        let (za, zb) = if sign > T::zero() { (a, b) } else { (-b, -a) };
                        let mass = adaptive_simpson_rel(&f, za, zb, T::lit(1e-10), T::zero());
                        let env = [za, zb, (za + zb) * T::lit(0.5)].iter().map(|&z| f(z)).fold(T::zero(), T::max)
                            * T::lit(1.05);
                        cells.push((za, zb, mass, env));
                    }
                };
                push_side(trunc, d.upper, T::one());
                push_side(trunc, -d.lower, -T::one());
                if cells.is_empty() {
                    return SizeSampler::Empty;
                }
                let mut acc = 0.0;
                let cumulative = cells
                    .iter()
                    .map(|c| {
                        acc += c.2.to_f64_lossy();
                        acc
                    })
                    .collect();
                SizeSampler::Tabulated {
                    cells: cells.into_iter().map(|(a, b, _, e)| (a, b, e)).collect(),
                    cumulative,
                    density: d.clone(),
                }
            }
        }
    }

    fn discrete(pairs: impl Iterator<Item = (T, T)>, trunc: T) -> Self {
        let kept: Vec<(T, T)> = pairs.filter(|(s, r)| s.abs() >= trunc && *r > T::zero()).collect();
        if kept.is_empty() {
            return SizeSampler::Empty;
        }
        let mut acc = 0.0;
        let cumulative = kept
            .iter()
            .map(|(_, r)| {
                acc += r.to_f64_lossy();
                acc
            })
            .collect();
        SizeSampler::Discrete { sizes: kept.into_iter().map(|(s, _)| s).collect(), cumulative }
    }

    fn sample(&self, rng: &mut RngStream) -> T {
        match self {
            SizeSampler::Empty => unreachable!("no jumps to size when the rate is zero"),
            SizeSampler::Discrete { sizes, cumulative } => sizes[pick(cumulative, rng.uniform())],
            SizeSampler::Tabulated { cells, cumulative, density } => {
                let (lo, hi, env) = cells[pick(cumulative, rng.uniform())];
                loop {
                    let z = lo + (hi - lo) * T::lit(rng.uniform_open());
                    if T::lit(rng.uniform()) * env <= (density.intensity)(z) {
                        return z;
                    }
                }
            }
        }
    }
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let target = u * cumulative[cumulative.len() - 1];
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
}

/// Reusable compound-Poisson sampler for one `(triplet, horizon, truncation)`.
#[derive(Clone, Debug)]
pub struct PathSampler<T> {
    horizon: T,
    rate: T,
    drift_rate: T,
    sizes: SizeSampler<T>,
    brownian_sd: T,
    brownian_cells: usize,
}

impl<T: Real> PathSampler<T> {
    pub fn new(triplet: &LevyTriplet<T>, horizon: T, trunc: T, compensate: bool) -> Result<Self> {
        Self::with_brownian_resolution(triplet, horizon, trunc, compensate, DEFAULT_BROWNIAN_CELLS_PER_UNIT)
    }

    pub fn with_brownian_resolution(
        triplet: &LevyTriplet<T>,
        horizon: T,
        trunc: T,
        compensate: bool,
        cells_per_unit: usize,
    ) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if !(trunc > T::zero()) {
            return Err(Error::domain(format!("truncation level must be positive, got {trunc}")));
        }
        let rate = triplet.jumps.total_rate(trunc)?;
        if !rate.is_finite() {
            return Err(Error::domain(format!("jump measure above {trunc} is not finite")));
        }
        let compensation = if compensate { triplet.jumps.compensator(trunc, T::one()) } else { T::zero() };
        let brownian_cells = if triplet.brownian_variance > T::zero() {
            let n = (T::lit(cells_per_unit.max(1) as f64) * horizon).ceil().to_usize().unwrap_or(1);
            n.max(1)
        } else {
            0
        };
        let brownian_sd = if brownian_cells > 0 {
            (triplet.brownian_variance * horizon / T::lit(brownian_cells as f64)).sqrt()
        } else {
            T::zero()
        };
        Ok(Self {
            horizon,
            rate,
            drift_rate: triplet.drift - compensation,
            sizes: SizeSampler::build(&triplet.jumps, trunc),
            brownian_sd,
            brownian_cells,
        })
    }

    /// `ν({|z| ≥ trunc})`.
    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn drift_rate(&self) -> T {
        self.drift_rate
    }

    /// Draw order: jump count, then `(time, size)` per jump, then Brownian increments.
    pub fn sample(&self, rng: &mut RngStream) -> LevyPath<T> {
        let mean = (self.rate * self.horizon).to_f64_lossy();
        let count = if matches!(self.sizes, SizeSampler::Empty) { 0 } else { rng.poisson(mean) as usize };
        let mut jumps: Vec<Jump<T>> = (0..count)
            .map(|_| {
                let time = self.horizon * T::lit(1.0 - rng.uniform());
                let size = self.sizes.sample(rng);
                Jump { time, size }
            })
            .collect();
        jumps.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        for i in 1..jumps.len() {
            if jumps[i].time <= jumps[i - 1].time {
                jumps[i].time = jumps[i - 1].time.nudge_up();
            }
        }
        // A nudge past the horizon (ties at the horizon itself) is folded back by dropping it.
        while jumps.last().is_some_and(|j| j.time > self.horizon) {
            jumps.pop();
        }
        let brownian = (self.brownian_cells > 0).then(|| {
            let mut values = Vec::with_capacity(self.brownian_cells + 1);
            let mut b = T::zero();
            values.push(b);
            for _ in 0..self.brownian_cells {
                b += self.brownian_sd * T::lit(rng.standard_normal());
                values.push(b);
            }
            BrownianSkeleton { cell: self.horizon / T::lit(self.brownian_cells as f64), values }
        });
        LevyPath::new(self.horizon, self.drift_rate, jumps, brownian).expect("sampler produces valid paths")
    }
}

/// Compound-Poisson path from `triplet` with jumps of size ≥ `trunc`.
pub fn sample_path<T: Real>(
    triplet: &LevyTriplet<T>,
    horizon: T,
    trunc: T,
    compensate: bool,
    rng: &mut RngStream,
) -> Result<LevyPath<T>> {
    Ok(PathSampler::new(triplet, horizon, trunc, compensate)?.sample(rng))
}

/// A path split at its first jump with size in `[eta, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathDecomposition<T> {
    pub eta: T,
    pub upper: T,
    /// First marked jump time `T`.
    pub first_time: T,
    /// Second marked jump time `T₂`.
    pub second_time: T,
    pub marked_size: T,
    /// The path with the first marked jump removed.
    pub residual: LevyPath<T>,
}

impl<T: Real> PathDecomposition<T> {
    /// The full path with the marked jump placed at `t ∈ (0, T₂)`.
    pub fn rebuild_at(&self, t: T) -> Result<LevyPath<T>> {
        if !(t > T::zero() && t < self.second_time) {
            return Err(Error::domain(format!("marked jump time {t} outside (0, {})", self.second_time)));
        }
        let mut jumps = self.residual.jumps().to_vec();
        let mut k = jumps.partition_point(|j| j.time < t);
        let mut time = t;
        while k < jumps.len() && jumps[k].time == time {
            time = time.nudge_up();
            k += 1;
        }
        jumps.insert(k, Jump { time, size: self.marked_size });
        self.residual.with_jumps_replaced(jumps)
    }

    /// The original path.
    pub fn path(&self) -> Result<LevyPath<T>> {
        self.rebuild_at(self.first_time)
    }
}

pub fn decompose_first_jump<T: Real>(path: &LevyPath<T>, eta: T, upper: T) -> Result<PathDecomposition<T>> {
    if !(eta > T::zero() && upper >= eta) {
        return Err(Error::domain(format!("invalid marked window [{eta}, {upper}]")));
    }
    let marked: Vec<usize> = path
        .jumps()
        .iter()
        .enumerate()
        .filter(|(_, j)| j.size >= eta && j.size <= upper)
        .map(|(i, _)| i)
        .take(2)
        .collect();
    if marked.len() < 2 {
        let found = path.jumps().iter().filter(|j| j.size >= eta && j.size <= upper).count();
        return Err(Error::NotEnoughMarkedJumps { eta: eta.to_f64_lossy(), upper: upper.to_f64_lossy(), found });
    }
    let first = path.jumps()[marked[0]];
    let second = path.jumps()[marked[1]];
    let mut rest = path.jumps().to_vec();
    rest.remove(marked[0]);
    Ok(PathDecomposition {
        eta,
        upper,
        first_time: first.time,
        second_time: second.time,
        marked_size: first.size,
        residual: path.with_jumps_replaced(rest)?,
    })
}

/// Places the marked jump at a fresh `T' ~ Uniform(0, T₂)`.
pub fn resample_first_jump_time<T: Real>(decomp: &PathDecomposition<T>, rng: &mut RngStream) -> LevyPath<T> {
    let t = decomp.second_time * T::lit(rng.uniform_open());
    decomp.rebuild_at(t).expect("uniform draw lies inside (0, T2)")
}

/// Moves jump `jump_index` by `h` (either sign).
pub fn shift_jump_time<T: Real>(path: &LevyPath<T>, jump_index: usize, h: T) -> Result<LevyPath<T>> {
    let jumps = path.jumps();
    let j = jumps
        .get(jump_index)
        .ok_or_else(|| Error::domain(format!("no jump with index {jump_index}")))?;
    let t = j.time + h;
    let lo = if jump_index == 0 { T::zero() } else { jumps[jump_index - 1].time };
    let hi_ok = match jumps.get(jump_index + 1) {
        Some(next) => t < next.time,
        None => t <= path.horizon(),
    };
    if !(t > lo) || !hi_ok || t > path.horizon() {
        return Err(Error::domain(format!("shifted jump time {t} breaks ordering or leaves (0, horizon]")));
    }
    let mut moved = jumps.to_vec();
    moved[jump_index].time = t;
    path.with_jumps_replaced(moved)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decompose_resample_roundtrip(seed in 0u64..10_000, rate in 5.0f64..40.0) {
            let spec = JumpMeasureSpec::finite_atomic(vec![
                crate::levy_spec::Atom { size: 0.05, rate },
                crate::levy_spec::Atom { size: -0.3, rate: 3.0 },
            ]).unwrap();
            let tr = LevyTriplet::pure_jump(0.2, spec);
            let p = sample_path(&tr, 1.0, 0.01, false, &mut RngStream::new(seed, 0)).unwrap();
            if let Ok(d) = decompose_first_jump(&p, 0.01, 0.1) {
                prop_assert_eq!(d.residual.jump_count(), p.jump_count() - 1);
                let q = resample_first_jump_time(&d, &mut RngStream::new(seed, 1));
                let dd = decompose_first_jump(&q, 0.01, 0.1).unwrap();
                prop_assert_eq!(dd.second_time, d.second_time);
                prop_assert_eq!(dd.marked_size, d.marked_size);
                prop_assert_eq!(dd.residual, d.residual);
            }
        }
    }
}
