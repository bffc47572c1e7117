//! Fixed-step RK4 along a driver path, with the grid aligned to every
//! breakpoint of the path (jump times and Brownian skeleton nodes).

use crate::error::{Error, Result};
use crate::path_sampler::LevyPath;
use crate::scalar::Real;

/// Raw output of [`integrate`]. Node `i` carries the right value; the left
/// value differs only at jump nodes. Interval `i` spans nodes `i..=i+1`.
#[derive(Clone, Debug)]
pub(crate) struct Integration<T, const N: usize> {
    pub times: Vec<T>,
    pub states: Vec<[T; N]>,
    pub states_left: Vec<[T; N]>,
    pub z: Vec<T>,
    pub z_left: Vec<T>,
    /// Slope of the driver's continuous part on each interval.
    pub slopes: Vec<T>,
    /// Cubic-Hermite midpoint state of each interval.
    pub mids: Vec<[T; N]>,
    /// Node index of each path jump, in order.
    pub jump_nodes: Vec<usize>,
}

#[inline]
fn axpy<T: Real, const N: usize>(y: &[T; N], h: T, k: &[T; N]) -> [T; N] {
    let mut out = *y;
    for (o, ki) in out.iter_mut().zip(k) {
        *o += h * *ki;
    }
    out
}

fn all_finite<T: Real, const N: usize>(s: &[T; N]) -> bool {
    s.iter().all(|v| v.is_finite())
}

/// Integrates `state' = rhs(z, ż, state)` along `path`, applying `on_jump`
/// at each jump time. Substeps are uniform within each breakpoint segment
/// and no longer than `step`.
pub(crate) fn integrate<T, const N: usize, F, J>(
    path: &LevyPath<T>,
    init: [T; N],
    step: T,
    rhs: F,
    mut on_jump: J,
) -> Result<Integration<T, N>>
where
    T: Real,
    F: Fn(T, T, &[T; N]) -> [T; N],
    J: FnMut(T, T, &mut [T; N]) -> Result<()>,
{
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    if !all_finite(&init) {
        return Err(Error::domain("initial state must be finite"));
    }
    let bps = path.breakpoints();
    let capacity = bps.len() + (path.horizon() / step).ceil().to_usize().unwrap_or(0) + 1;
    let mut out = Integration {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        states_left: Vec::with_capacity(capacity),
        z: Vec::with_capacity(capacity),
        z_left: Vec::with_capacity(capacity),
        slopes: Vec::with_capacity(capacity),
        mids: Vec::with_capacity(capacity),
        jump_nodes: Vec::with_capacity(path.jump_count()),
    };
    let mut state = init;
    let mut z = T::zero();
    out.times.push(T::zero());
    out.states.push(state);
    out.states_left.push(state);
    out.z.push(z);
    out.z_left.push(z);

    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let eighth = T::lit(0.125);
    for w in bps.windows(2) {
        let (t0, t1) = (w[0].time, w[1].time);
        let len = t1 - t0;
        let slope = path.slope_at(t0 + len * half);
        let n = (len / step).ceil().to_usize().unwrap_or(1).max(1);
        let h = len / T::lit(n as f64);
        let z0 = z;
        let mut f0 = rhs(z, slope, &state);
        for j in 0..n {
            let ts = t0 + h * T::lit(j as f64);
            let zs = z0 + slope * (h * T::lit(j as f64));
            let zm = zs + slope * h * half;
            let (t_end, z_end) = if j + 1 == n {
                (t1, path.eval_left(t1))
            } else {
                (t0 + h * T::lit((j + 1) as f64), z0 + slope * (h * T::lit((j + 1) as f64)))
            };
            let k1 = f0;
            let k2 = rhs(zm, slope, &axpy(&state, h * half, &k1));
            let k3 = rhs(zm, slope, &axpy(&state, h * half, &k2));
            let k4 = rhs(zs + slope * h, slope, &axpy(&state, h, &k3));
            let mut next = state;
            for i in 0..N {
                next[i] += h * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
            }
            if !all_finite(&next) {
                return Err(Error::NonFinite { last_good_time: ts.to_f64_lossy(), last_good_value: state[0].to_f64_lossy() });
            }
            let f1 = rhs(z_end, slope, &next);
            let mut mid = [T::zero(); N];
            for i in 0..N {
                mid[i] = (state[i] + next[i]) * half + h * eighth * (f0[i] - f1[i]);
            }
            out.mids.push(mid);
            out.slopes.push(slope);
            state = next;
            z = z_end;
            f0 = f1;
            out.times.push(t_end);
            out.states_left.push(state);
            out.z_left.push(z);
            if j + 1 < n {
                out.states.push(state);
                out.z.push(z);
            }
        }
        if w[1].jump != T::zero() {
            on_jump(t1, w[1].jump, &mut state)?;
            if !all_finite(&state) {
                return Err(Error::NonFinite { last_good_time: t1.to_f64_lossy(), last_good_value: out.states_left.last().unwrap()[0].to_f64_lossy() });
            }
            out.jump_nodes.push(out.times.len() - 1);
        }
        z = path.eval(t1);
        out.states.push(state);
        out.z.push(z);
    }
    Ok(out)
}

/// Classical RK4 for the autonomous scalar ODE `x' = f(x)` over `[0, t]` in `n` steps.
pub(crate) fn rk4_autonomous<T: Real>(f: impl Fn(T) -> T, x0: T, t: T, n: usize) -> T {
    let h = t / T::lit(n as f64);
    let half = T::lit(0.5);
    let mut x = x0;
    for _ in 0..n {
        let k1 = f(x);
        let k2 = f(x + h * half * k1);
        let k3 = f(x + h * half * k2);
        let k4 = f(x + h * k3);
        x += h / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_every_jump_and_respects_step() {
        let path = LevyPath::from_jumps(1.0, 0.0, &[(0.3, 1.0), (0.3001, -1.0), (1.0, 2.0)]).unwrap();
        let r = integrate(&path, [0.0], 0.1, |_, _, _| [1.0], |_, _, _| Ok(())).unwrap();
        for j in path.jumps() {
            assert!(r.times.contains(&j.time));
        }
        assert!(r.times.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-15));
        assert_eq!(r.jump_nodes.len(), 3);
        assert_eq!(*r.times.last().unwrap(), 1.0);
        assert_eq!(r.z[r.times.len() - 1], path.terminal());
        assert_eq!(r.mids.len(), r.times.len() - 1);
    }

    #[test]
    fn blow_up_is_reported_with_last_good_time() {
        let path = LevyPath::pure_drift(2.0, 0.0).unwrap();
        let err = integrate(&path, [1.0f64], 0.01, |_, _, s| [s[0] * s[0] * s[0]], |_, _, _| Ok(())).unwrap_err();
        match err {
            Error::NonFinite { last_good_time, .. } => assert!(last_good_time < 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step() {
        let path = LevyPath::pure_drift(1.0, 0.0).unwrap();
        assert!(integrate(&path, [0.0], 0.0, |_, _, _| [1.0], |_, _, _| Ok(())).is_err());
        assert!(integrate(&path, [0.0], f64::NAN, |_, _, _| [1.0], |_, _, _| Ok(())).is_err());
    }

    #[test]
    fn autonomous_rk4_exponential() {
        let v = rk4_autonomous(|x: f64| -x, 1.0, 1.0, 1000);
        assert!((v - (-1.0f64).exp()).abs() < 1e-13);
    }
}
