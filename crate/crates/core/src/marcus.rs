//! Marcus canonical equation `dX = a(X) dt + σ(X) ⋄ dZ`.
//!
//! Between jumps the state follows `X' = a(X) + σ(X)·ż` along the
//! piecewise-linear continuous part of the driver (a Stratonovich
//! interpretation of the Brownian skeleton). A jump `ΔZ` moves the state
//! along the unit-time flow of the vector field `σ(·)ΔZ`: `X_t = φ(X_{t−}, ΔZ)`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::field::{probe_grid, DiffusionField, ScalarField};
use crate::flow_engine::Trajectory;
use crate::ode::integrate;
use crate::path_sampler::LevyPath;
use crate::scalar::Real;

/// Default local tolerance for the jump flow.
pub const DEFAULT_PHI_TOL: f64 = 1e-12;
/// Magnitude beyond which the jump flow is treated as blown up.
const DIVERGENCE_LIMIT: f64 = 1e100;
const MAX_PHI_DOUBLINGS: u32 = 14;

/// `φ(y, u)` together with `log ∂φ/∂y = ∫_0^u σ̇(φ(y, v)) dv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint<T> {
    pub value: T,
    pub log_derivative: T,
}

fn rk4_flow<T: Real>(sigma: &DiffusionField<T>, y: T, u: T, n: usize) -> [T; 2] {
    let h = T::one() / T::lit(n as f64);
    let half = T::lit(0.5);
    let rhs = |p: T| [sigma.eval(p) * u, sigma.deriv(p) * u];
    let mut s = [y, T::zero()];
    for _ in 0..n {
        let k1 = rhs(s[0]);
        let k2 = rhs(s[0] + h * half * k1[0]);
        let k3 = rhs(s[0] + h * half * k2[0]);
        let k4 = rhs(s[0] + h * k3[0]);
        for i in 0..2 {
            s[i] += h / T::lit(6.0) * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        if !(s[0].abs() < T::lit(DIVERGENCE_LIMIT)) {
            break;
        }
    }
    s
}

/// Solves `dφ/ds = σ(φ)·u` on `[0, 1]` from `y`, with the log-derivative in
/// `y` carried alongside. Starts from `max(8, ⌈|u|/0.05⌉)` RK4 steps and
/// doubles until the Richardson error estimate falls below `tol` (relative
/// to `1 + |φ|`).
pub fn jump_flow<T: Real>(sigma: &DiffusionField<T>, y: T, u: T, tol: T) -> Result<FlowPoint<T>> {
    if !(tol > T::zero()) {
        return Err(Error::domain(format!("flow tolerance must be positive, got {tol}")));
    }
    if u == T::zero() {
        return Ok(FlowPoint { value: y, log_derivative: T::zero() });
    }
    if sigma.field.lipschitz_bound == Some(T::zero()) {
        // constant field: the flow is a translation
        return Ok(FlowPoint { value: y + sigma.eval(y) * u, log_derivative: T::zero() });
    }
    let diverged = || Error::FlowDivergence {
        start: y.to_f64_lossy(),
        span: u.to_f64_lossy(),
        context: String::new(),
    };
    let mut n = ((u.abs() / T::lit(0.05)).ceil().to_usize().unwrap_or(usize::MAX)).max(8);
    let mut coarse = rk4_flow(sigma, y, u, n);
    for _ in 0..MAX_PHI_DOUBLINGS {
        n *= 2;
        let fine = rk4_flow(sigma, y, u, n);
        if !fine.iter().all(|v| v.is_finite() && v.abs() < T::lit(DIVERGENCE_LIMIT)) {
            return Err(diverged());
        }
        // Richardson estimate of the error left in `fine`
        let r = T::lit(15.0);
        let err = (fine[0] - coarse[0]).abs().max((fine[1] - coarse[1]).abs()) / r;
        if err <= tol * (T::one() + fine[0].abs()) {
            return Ok(FlowPoint {
                value: fine[0] + (fine[0] - coarse[0]) / r,
                log_derivative: fine[1] + (fine[1] - coarse[1]) / r,
            });
        }
        coarse = fine;
    }
    Err(diverged())
}

/// `φ(y, u)`: the value at time 1 of `dφ/ds = σ(φ)·u`, `φ(0) = y`.
pub fn jump_flow_phi<T: Real>(sigma: &DiffusionField<T>, y: T, u: T, tol: T) -> Result<T> {
    jump_flow(sigma, y, u, tol).map(|p| p.value)
}

/// `ρ(y, z) = φ(y, z) − y − σ(y)·z`.
pub fn marcus_remainder_rho<T: Real>(sigma: &DiffusionField<T>, y: T, z: T) -> Result<T> {
    Ok(jump_flow_phi(sigma, y, z, T::lit(DEFAULT_PHI_TOL))? - y - sigma.eval(y) * z)
}

/// `max |ρ(y, z)|/z²` over a `ny × nz` grid of `[y_lo, y_hi] × [−z_max, z_max] ∖ {0}`.
pub fn remainder_constant<T: Real>(
    sigma: &DiffusionField<T>,
    y_range: (T, T),
    z_max: T,
    ny: usize,
    nz: usize,
) -> Result<T> {
    if ny < 2 || nz < 1 || !(z_max > T::zero()) || !(y_range.1 >= y_range.0) {
        return Err(Error::domain("remainder grid needs ny ≥ 2, nz ≥ 1, z_max > 0"));
    }
    let mut k = T::zero();
    for i in 0..ny {
        let y = y_range.0 + (y_range.1 - y_range.0) * T::lit(i as f64 / (ny - 1) as f64);
        for j in 1..=nz {
            let z = z_max * T::lit(j as f64 / nz as f64);
            for zz in [z, -z] {
                k = k.max(marcus_remainder_rho(sigma, y, zz)?.abs() / (zz * zz));
            }
        }
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord<T> {
    pub time: T,
    pub pre: T,
    pub size: T,
    pub post: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarcusTrajectory<T> {
    pub x0: T,
    pub times: Vec<T>,
    pub x: Vec<T>,
    pub x_left: Vec<T>,
    pub x_mid: Vec<T>,
    pub slopes: Vec<T>,
    pub jump_nodes: Vec<usize>,
    pub terminal: T,
    pub jump_log: Vec<JumpRecord<T>>,
}

impl<T: Real> Trajectory<T> for MarcusTrajectory<T> {
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

impl<T: Real> MarcusTrajectory<T> {
    /// Smallest and largest state visited on the grid, left limits included.
    pub fn state_range(&self) -> (T, T) {
        self.x
            .iter()
            .chain(&self.x_left)
            .chain(&self.x_mid)
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// CSV with columns `time,pre,size,post`.
    pub fn write_jump_log_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,pre,size,post")?;
        for r in &self.jump_log {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?}",
                r.time.to_f64_lossy(),
                r.pre.to_f64_lossy(),
                r.size.to_f64_lossy(),
                r.post.to_f64_lossy()
            )?;
        }
        Ok(())
    }
}

pub fn marcus_solve<T: Real>(
    a: &ScalarField<T>,
    sigma: &DiffusionField<T>,
    path: &LevyPath<T>,
    x0: T,
    step: T,
) -> Result<MarcusTrajectory<T>> {
    marcus_solve_with_tol(a, sigma, path, x0, step, T::lit(DEFAULT_PHI_TOL))
}

pub fn marcus_solve_with_tol<T: Real>(
    a: &ScalarField<T>,
    sigma: &DiffusionField<T>,
    path: &LevyPath<T>,
    x0: T,
    step: T,
    phi_tol: T,
) -> Result<MarcusTrajectory<T>> {
    let mut jump_log = Vec::with_capacity(path.jump_count());
    let r = integrate(
        path,
        [x0],
        step,
        |_, slope, s: &[T; 1]| [a.eval(s[0]) + sigma.eval(s[0]) * slope],
        |time, size, s| {
            let pre = s[0];
            let post = jump_flow_phi(sigma, pre, size, phi_tol).map_err(|e| e.with_jump_context(time.to_f64_lossy()))?;
            jump_log.push(JumpRecord { time, pre, size, post });
            s[0] = post;
            Ok(())
        },
    )?;
    let x: Vec<T> = r.states.iter().map(|s| s[0]).collect();
    Ok(MarcusTrajectory {
        x0,
        terminal: *x.last().expect("nonempty grid"),
        times: r.times,
        x,
        x_left: r.states_left.iter().map(|s| s[0]).collect(),
        x_mid: r.mids.iter().map(|s| s[0]).collect(),
        slopes: r.slopes,
        jump_nodes: r.jump_nodes,
        jump_log,
    })
}

/// `sup_t |f(X_t) − f(x0) − ∫_0^t f′(X_s)a(X_s) ds − k·Z_t|` over the grid,
/// valid when `f′σ ≡ k` on the visited range.
pub fn chain_rule_residual<T: Real>(
    f: &ScalarField<T>,
    a: &ScalarField<T>,
    sigma: &DiffusionField<T>,
    traj: &MarcusTrajectory<T>,
    k: T,
    path: &LevyPath<T>,
) -> Result<T> {
    let (lo, hi) = traj.state_range();
    for x in probe_grid(lo, hi) {
        let v = f.deriv(x) * sigma.eval(x);
        if !((v - k).abs() <= T::lit(1e-8)) {
            return Err(Error::Precondition(format!("f'σ = {v} at x = {x}, expected the constant {k}")));
        }
    }
    let cum = traj.cumulative_integral(|x| f.deriv(x) * a.eval(x));
    let f0 = f.eval(traj.x0);
    Ok((0..traj.times.len())
        .map(|i| (f.eval(traj.x[i]) - f0 - cum[i] - k * path.eval(traj.times[i])).abs())
        .fold(T::zero(), T::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_engine::{default_step, solve_random_ode};

    fn sig(f: ScalarField<f64>) -> DiffusionField<f64> {
        DiffusionField::new(f)
    }

    #[test]
    fn phi_closed_forms() {
        let c = sig(ScalarField::constant(1.7));
        assert!((jump_flow_phi(&c, 0.4, -0.3, 1e-12).unwrap() - (0.4 - 1.7 * 0.3)).abs() < 1e-15);
        let lin = sig(ScalarField::identity());
        assert!((jump_flow_phi(&lin, 2.0, 0.5, 1e-12).unwrap() - 2.0 * 0.5f64.exp()).abs() < 1e-11);
        let t = sig(ScalarField::arctan_diffusion());
        assert!((jump_flow_phi(&t, 0.0, 0.3, 1e-12).unwrap() - 0.3f64.tan()).abs() < 1e-12);
        // ∂φ/∂y for σ = 1 + x²: sec²(atan y + u)/(1 + y²)
        let p = jump_flow(&t, 0.2, 0.4, 1e-12).unwrap();
        let exact = (1.0 / (0.2f64.atan() + 0.4).cos().powi(2)) / (1.0 + 0.04);
        assert!((p.log_derivative.exp() - exact).abs() < 1e-10);
    }

    #[test]
    fn phi_blow_up_is_an_error() {
        // tan reaches infinity at u = π/2
        let t = sig(ScalarField::arctan_diffusion());
        assert!(matches!(jump_flow_phi(&t, 0.0, 2.0, 1e-12), Err(Error::FlowDivergence { .. })));
        assert!(jump_flow_phi(&t, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(marcus_remainder_rho(&sig(ScalarField::constant(2.0)), 0.3, 0.4).unwrap(), 0.0);
        let r = marcus_remainder_rho(&sig(ScalarField::identity()), 1.0, 0.1).unwrap();
        assert!((r - (0.1f64.exp() - 1.1)).abs() < 1e-12);
    }

    #[test]
    fn remainder_constant_is_stable_under_refinement() {
        let s = sig(ScalarField::logistic(1.0, 0.4, 1.0));
        let coarse = remainder_constant(&s, (-2.0, 2.0), 0.5, 11, 10).unwrap();
        let fine = remainder_constant(&s, (-2.0, 2.0), 0.5, 101, 100).unwrap();
        assert!(coarse > 0.0 && ((fine - coarse) / coarse).abs() <= 0.1, "{coarse} {fine}");
        for y in [-2.0, 0.0, 1.5] {
            for z in [-0.37, 0.011, 0.49] {
                assert!(marcus_remainder_rho(&s, y, z).unwrap().abs() <= fine * z * z * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn unit_diffusion_reduces_to_random_ode() {
        let a = ScalarField::logistic(0.2, 1.0, 1.3);
        let path = LevyPath::from_jumps(1.0, 0.35, &[(0.2, 0.5), (0.45, -1.2), (0.8, 0.1)]).unwrap();
        let step = default_step(1.0);
        let m = marcus_solve(&a, &DiffusionField::unit(), &path, -0.3, step).unwrap();
        let s = solve_random_ode(&a, &path, -0.3, step).unwrap();
        assert_eq!(m.times, s.times);
        let gap = m.x.iter().zip(&s.x).map(|(p, q): (&f64, &f64)| (p - q).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10, "{gap}");
    }

    #[test]
    fn exponential_solution_for_linear_sigma() {
        let path = LevyPath::from_jumps(1.0, 0.2, &[(0.3, 0.4), (0.6, -0.7)]).unwrap();
        let m = marcus_solve(&ScalarField::constant(0.0), &sig(ScalarField::identity()), &path, 1.0, default_step(1.0)).unwrap();
        assert!((m.terminal - path.terminal().exp()).abs() < 1e-6);
        for r in &m.jump_log {
            assert!((r.post - r.pre * r.size.exp()).abs() < 1e-10);
        }
        let res = chain_rule_residual(
            &ScalarField::log(),
            &ScalarField::constant(0.0),
            &sig(ScalarField::identity()),
            &m,
            1.0,
            &path,
        )
        .unwrap();
        assert!(res < 1e-6, "{res}");
    }

    #[test]
    fn interchange_with_explicit_composition() {
        let a = ScalarField::sine(0.1, 0.5, 1.0);
        let s = sig(ScalarField::logistic(1.0, 0.3, 2.0));
        let step = 1.0 / 256.0;
        let t = 0.4;
        let d = 0.25;
        let path = LevyPath::from_jumps(1.0, d, &[(t, 0.6)]).unwrap();
        let m = marcus_solve(&a, &s, &path, 0.2, step).unwrap();
        let first = marcus_solve(&a, &s, &LevyPath::pure_drift(t, d).unwrap(), 0.2, step).unwrap();
        let jumped = jump_flow_phi(&s, first.terminal, 0.6, 1e-12).unwrap();
        let second = marcus_solve(&a, &s, &LevyPath::pure_drift(1.0 - t, d).unwrap(), jumped, step).unwrap();
        assert!((m.terminal - second.terminal).abs() < 1e-8);
    }

    #[test]
    fn chain_rule_precondition() {
        let path = LevyPath::from_jumps(1.0, 0.0, &[(0.5, 0.3)]).unwrap();
        let s = sig(ScalarField::arctan_diffusion());
        let a = ScalarField::constant(0.0);
        let m = marcus_solve(&a, &s, &path, 0.1, 0.01).unwrap();
        assert!(matches!(
            chain_rule_residual(&ScalarField::identity(), &a, &s, &m, 1.0, &path),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn arctan_chain_rule() {
        let s = sig(ScalarField::arctan_diffusion());
        let a = ScalarField::arctan_diffusion().product(&ScalarField::logistic(0.0, 0.3, 1.0));
        let path = LevyPath::from_jumps(1.0, 0.1, &[(0.25, 0.2), (0.5, -0.3), (0.75, 0.25)]).unwrap();
        let m = marcus_solve(&a, &s, &path, 0.1, default_step(1.0)).unwrap();
        let r = chain_rule_residual(&ScalarField::arctan(), &a, &s, &m, 1.0, &path).unwrap();
        assert!(r < 1e-5, "{r}");
    }

    #[test]
    fn jump_log_csv() {
        let path = LevyPath::from_jumps(1.0, 0.0, &[(0.5, 1.0)]).unwrap();
        let m = marcus_solve(&ScalarField::constant(0.0), &DiffusionField::unit(), &path, 0.0, 0.1).unwrap();
        let mut buf = Vec::new();
        m.write_jump_log_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,pre,size,post\n0.5,0.0,1.0,1.0\n");
    }
}
