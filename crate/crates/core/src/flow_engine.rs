//! Pathwise solution of `X_t = x + ∫_0^t a(X_s) ds + Z_t`.
//!
//! Writing `X = Y + Z` turns the equation into the random ODE
//! `Y' = a(Y + Z)`, `Y_0 = x`, whose solution is continuous; every jump of
//! `Z` passes straight into `X`. The flow `x ↦ X_t(x)` is differentiable with
//! derivative `exp ∫_0^t ȧ(X_s) ds`, and moving a single jump time `T`
//! changes `Y_h` at rate `(a(X_{T−}) − a(X_T))·exp ∫_T^h ȧ(X_s) ds`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::ode::integrate;
use crate::path_sampler::{LevyPath, PathDecomposition};
use crate::scalar::Real;

/// Default number of RK4 substeps per unit horizon.
pub const DEFAULT_STEPS_PER_HORIZON: usize = 1 << 12;

pub fn default_step<T: Real>(horizon: T) -> T {
    horizon / T::lit(DEFAULT_STEPS_PER_HORIZON as f64)
}

/// A càdlàg state trajectory on a grid containing every jump time.
pub trait Trajectory<T: Real> {
    fn times(&self) -> &[T];
    /// Right values `X_{t_i}`.
    fn x(&self) -> &[T];
    /// Left limits `X_{t_i−}`; equal to `x()` off jump nodes.
    fn x_left(&self) -> &[T];
    /// State at the midpoint of each interval.
    fn x_mid(&self) -> &[T];
    /// Grid index of each jump time.
    fn jump_nodes(&self) -> &[usize];

    fn terminal_x(&self) -> T {
        *self.x().last().expect("nonempty grid")
    }

    /// `∫ g(X_s) ds` between grid nodes `from ≤ to` (Simpson's rule per interval).
    fn integral(&self, g: impl Fn(T) -> T, from: usize, to: usize) -> T {
        let (t, x, xl, xm) = (self.times(), self.x(), self.x_left(), self.x_mid());
        let mut acc = T::zero();
        for i in from..to {
            let h = t[i + 1] - t[i];
            acc += h / T::lit(6.0) * (g(x[i]) + T::lit(4.0) * g(xm[i]) + g(xl[i + 1]));
        }
        acc
    }

    /// `∫_0^{t_i} g(X_s) ds` for every node `i`.
    fn cumulative_integral(&self, g: impl Fn(T) -> T) -> Vec<T> {
        let (t, x, xl, xm) = (self.times(), self.x(), self.x_left(), self.x_mid());
        let mut out = Vec::with_capacity(t.len());
        let mut acc = T::zero();
        out.push(acc);
        for i in 0..t.len() - 1 {
            let h = t[i + 1] - t[i];
            acc += h / T::lit(6.0) * (g(x[i]) + T::lit(4.0) * g(xm[i]) + g(xl[i + 1]));
            out.push(acc);
        }
        out
    }

    /// Node index of `time`, which must be an exact grid time.
    fn node_of(&self, time: T) -> Option<usize> {
        let t = self.times();
        let k = t.partition_point(|&s| s < time);
        (k < t.len() && t[k] == time).then_some(k)
    }
}

/// Solution of the random ODE along one path.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution<T> {
    pub x0: T,
    pub times: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
    pub z_left: Vec<T>,
    pub x: Vec<T>,
    pub x_left: Vec<T>,
    pub x_mid: Vec<T>,
    /// Driver slope on each interval.
    pub slopes: Vec<T>,
    pub jump_nodes: Vec<usize>,
    /// `Y_h`.
    pub terminal: T,
    /// `∂X_h/∂x = exp ∫_0^h ȧ(X_s) ds`.
    pub flow_derivative: T,
}

impl<T: Real> Trajectory<T> for FlowSolution<T> {
    fn times(&self) -> &[T] {
        &self.times
    }
    fn x(&self) -> &[T] {
        &self.x
    }
    fn x_left(&self) -> &[T] {
        &self.x_left
    }
    fn x_mid(&self) -> &[T] {
        &self.x_mid
    }
    fn jump_nodes(&self) -> &[usize] {
        &self.jump_nodes
    }
}

impl<T: Real> FlowSolution<T> {
    pub fn horizon(&self) -> T {
        *self.times.last().expect("nonempty grid")
    }

    /// `X` at an arbitrary time, interpolating `Y` by the cubic Hermite
    /// polynomial of its interval (right-continuous at nodes).
    pub fn x_at(&self, a: &ScalarField<T>, t: T) -> T {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.times.len() - 2);
        self.x_in_interval(a, i, t)
    }

    fn x_in_interval(&self, a: &ScalarField<T>, i: usize, t: T) -> T {
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let (d0, d1) = (a.eval(self.x[i]) * h, a.eval(self.x_left[i + 1]) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let y = (two * s3 - three * s2 + T::one()) * y0
            + (s3 - two * s2 + s) * d0
            + (three * s2 - two * s3) * y1
            + (s3 - s2) * d1;
        y + self.z[i] + self.slopes[i] * (t - t0)
    }

    /// `sup_i |X_{t_i} − x − ∫_0^{t_i} a(X_s) ds − Z_{t_i}|`.
    pub fn integral_equation_residual(&self, a: &ScalarField<T>) -> T {
        let cum = self.cumulative_integral(|x| a.eval(x));
        (0..self.times.len())
            .map(|i| (self.x[i] - self.x0 - cum[i] - self.z[i]).abs())
            .fold(T::zero(), T::max)
    }

    /// CSV with columns `time,Y,X,X_left`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,Y,X,X_left")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?}",
                self.times[i].to_f64_lossy(),
                self.y[i].to_f64_lossy(),
                self.x[i].to_f64_lossy(),
                self.x_left[i].to_f64_lossy()
            )?;
        }
        Ok(())
    }
}

/// Solves `Y' = a(Y + Z)`, `Y_0 = x0` by RK4 with substeps `≤ step` between breakpoints.
pub fn solve_random_ode<T: Real>(a: &ScalarField<T>, path: &LevyPath<T>, x0: T, step: T) -> Result<FlowSolution<T>> {
    let r = integrate(path, [x0], step, |z, _, s: &[T; 1]| [a.eval(s[0] + z)], |_, _, _| Ok(()))?;
    let half = T::lit(0.5);
    let y: Vec<T> = r.states.iter().map(|s| s[0]).collect();
    let x: Vec<T> = y.iter().zip(&r.z).map(|(&y, &z)| y + z).collect();
    let x_left: Vec<T> = y.iter().zip(&r.z_left).map(|(&y, &z)| y + z).collect();
    let x_mid: Vec<T> = (0..r.mids.len())
        .map(|i| r.mids[i][0] + r.z[i] + r.slopes[i] * (r.times[i + 1] - r.times[i]) * half)
        .collect();
    let mut sol = FlowSolution {
        x0,
        terminal: *y.last().expect("nonempty grid"),
        times: r.times,
        y,
        z: r.z,
        z_left: r.z_left,
        x,
        x_left,
        x_mid,
        slopes: r.slopes,
        jump_nodes: r.jump_nodes,
        flow_derivative: T::one(),
    };
    sol.flow_derivative = flow_derivative_exponential(a, &sol);
    Ok(sol)
}

/// `exp ∫_0^h ȧ(X_s) ds` along a stored solution.
pub fn flow_derivative_exponential<T: Real>(a: &ScalarField<T>, solution: &FlowSolution<T>) -> T {
    solution.integral(|x| a.deriv(x), 0, solution.times.len() - 1).exp()
}

/// `u_h` for the variational equation `u' = ȧ(X)u`, `u_0 = 1`, integrated
/// jointly with `Y` on the same grid.
pub fn flow_derivative_variational<T: Real>(a: &ScalarField<T>, path: &LevyPath<T>, x0: T, step: T) -> Result<T> {
    let r = integrate(
        path,
        [x0, T::one()],
        step,
        |z, _, s: &[T; 2]| {
            let x = s[0] + z;
            [a.eval(x), a.deriv(x) * s[1]]
        },
        |_, _, _| Ok(()),
    )?;
    Ok(r.states.last().expect("nonempty grid")[1])
}

/// `dY_h/dT` for the jump at `jump_time`, read off a stored solution:
/// `(a(X_{T−}) − a(X_T))·exp ∫_T^h ȧ(X_s) ds`, and `0` for `T > eval_time`.
pub fn jump_time_derivative_on<T: Real>(
    a: &ScalarField<T>,
    solution: &FlowSolution<T>,
    jump_time: T,
    eval_time: T,
) -> Result<T> {
    if eval_time != solution.horizon() {
        return Err(Error::domain(format!(
            "jump-time derivative is evaluated at the horizon {}, got {eval_time}",
            solution.horizon()
        )));
    }
    if jump_time == eval_time {
        return Err(Error::NonDifferentiablePoint { time: jump_time.to_f64_lossy() });
    }
    if jump_time > eval_time {
        return Ok(T::zero());
    }
    let k = solution
        .node_of(jump_time)
        .filter(|k| solution.jump_nodes.contains(k))
        .ok_or_else(|| Error::domain(format!("no jump at t = {jump_time} in this solution")))?;
    let gap = a.eval(solution.x_left[k]) - a.eval(solution.x[k]);
    Ok(gap * solution.integral(|x| a.deriv(x), k, solution.times.len() - 1).exp())
}

/// `dY_h/dT` for the first marked jump of `decomp` on `path`.
pub fn jump_time_derivative<T: Real>(
    a: &ScalarField<T>,
    path: &LevyPath<T>,
    decomp: &PathDecomposition<T>,
    eval_time: T,
    x0: T,
    step: T,
) -> Result<T> {
    if decomp.first_time == eval_time {
        return Err(Error::NonDifferentiablePoint { time: eval_time.to_f64_lossy() });
    }
    if path.jump_index_at(decomp.first_time).is_none() {
        return Err(Error::domain("decomposition does not belong to this path"));
    }
    let sol = solve_random_ode(a, path, x0, step)?;
    jump_time_derivative_on(a, &sol, decomp.first_time, eval_time)
}

/// First time at which `|ȧ(X_t)| ≥ c`, refined by bisection inside the
/// grid interval where the threshold is crossed.
pub fn hitting_time_of_slope<T: Real>(a: &ScalarField<T>, solution: &FlowSolution<T>, c: T) -> Option<T> {
    let hit = |x: T| a.deriv(x).abs() >= c;
    if hit(solution.x[0]) {
        return Some(solution.times[0]);
    }
    for i in 0..solution.times.len() - 1 {
        let (t0, t1) = (solution.times[i], solution.times[i + 1]);
        let crosses_inside = hit(solution.x_mid[i]) || hit(solution.x_left[i + 1]);
        if crosses_inside {
            let mut lo = t0;
            let mut hi = if hit(solution.x_mid[i]) { (t0 + t1) * T::lit(0.5) } else { t1 };
            for _ in 0..200 {
                let m = (lo + hi) * T::lit(0.5);
                if m <= lo || m >= hi {
                    break;
                }
                if hit(solution.x_in_interval(a, i, m)) {
                    hi = m;
                } else {
                    lo = m;
                }
            }
            return Some(hi);
        }
        if hit(solution.x[i + 1]) {
            // entered by a jump
            return Some(t1);
        }
    }
    None
}
