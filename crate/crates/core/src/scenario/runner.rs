//! Parallel replication of a scenario and reduction to a [`RunSummary`].

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    atom_mass_standard_error, default_atom_threshold, default_atom_window, detect_atoms, deterministic_skeleton, kde, lattice_concentration,
    lattice_concentration_at, two_sample_ks, AtomCandidate, KdeResult, SampleBatch,
};
use crate::error::{Error, Result};
use crate::field::{DiffusionField, ScalarField};
use crate::flow_engine::{
    flow_derivative_exponential, flow_derivative_variational, jump_time_derivative_on, solve_random_ode, Trajectory,
};
use crate::marcus::{chain_rule_residual, marcus_solve, remainder_constant};
use crate::path_sampler::{decompose_first_jump, resample_first_jump_time, LevyPath, PathDecomposition, PathSampler};
use crate::rng::RngStream;
use crate::transforms::{proportional_solution, reduced_drift, unit_diffusion_transform, DossSussman};

use super::catalogue::ScenarioId;
use super::config::{ConfigError, FieldSpec, MeasureConfig, ScenarioConfig};
use super::ScenarioError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerances the verdict flags in [`Diagnostics`] are judged against.
pub mod tolerance {
    pub const JUMP_TIME_REL: f64 = 1e-4;
    pub const FLOW_FD_REL: f64 = 1e-5;
    pub const FLOW_VARIATIONAL_REL: f64 = 1e-8;
    pub const UNIT_REDUCTION: f64 = 1e-10;
    pub const CLOSED_FORM: f64 = 1e-6;
    pub const CONJUGACY: f64 = 1e-5;
    pub const CHAIN_RULE: f64 = 1e-5;
    pub const REMAINDER_REL: f64 = 0.1;
    pub const LATTICE_Z_MIN: f64 = 0.999;
    pub const LATTICE_X_MAX: f64 = 0.01;
    pub const FLAT_LATTICE_MIN: f64 = 0.95;
    pub const KS_PASS_FRACTION: f64 = 0.95;
}

/// Draw budget for conditioning a path on two marked jumps.
const MARKED_ATTEMPTS: usize = 1000;
/// Margin added around the visited range when tabulating transforms.
const RANGE_MARGIN: f64 = 0.5;
const DS_RANGE_HALFWIDTH: f64 = 4.0;
/// Remainder constants below this are rounding noise of an exactly linear flow.
const REMAINDER_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicaSample {
    pub replica: usize,
    pub terminal_x: f64,
    pub terminal_z: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    Atom {
        skeleton: f64,
        expected_mass: f64,
        standard_error: f64,
        window: f64,
        threshold: f64,
        atoms_present: bool,
        candidates: Vec<AtomCandidate<f64>>,
        nearest_location: Option<f64>,
        nearest_mass: Option<f64>,
        location_ok: bool,
        mass_ok: bool,
    },
    Derivative {
        checked: usize,
        max_rel_jump_time_right: f64,
        max_rel_jump_time_left: f64,
        max_rel_flow_fd: f64,
        max_rel_flow_variational: f64,
        jump_time_ok: bool,
        flow_ok: bool,
    },
    Regularization {
        spacing: f64,
        halfwidth: f64,
        lattice_z: f64,
        lattice_x: f64,
        atoms_present_x: bool,
        window: f64,
        threshold: f64,
        lattice_z_ok: bool,
        lattice_x_ok: bool,
    },
    FlatDrift {
        shift: f64,
        spacing: f64,
        halfwidth: f64,
        lattice_z: f64,
        lattice_x_shifted: f64,
        lattice_x_shifted_fixed_offset: f64,
        concentrated: bool,
    },
    Stratification {
        ks_blocks: usize,
        ks_passes: usize,
        ks_skipped: usize,
        max_statistic: f64,
        critical_1pct: f64,
        monotone_checked: usize,
        monotone_ok: usize,
        invariant: bool,
        all_monotone: bool,
    },
    Marcus {
        checked: usize,
        max_unit_reduction: f64,
        max_closed_form: f64,
        max_conjugacy: f64,
        max_chain_rule: f64,
        max_remainder_rel_change: f64,
        unit_reduction_ok: bool,
        closed_form_ok: bool,
        conjugacy_ok: bool,
        chain_rule_ok: bool,
        remainder_ok: bool,
    },
    DossSussman {
        compared: usize,
        statistic: f64,
        critical_1pct: f64,
        equivalent: bool,
    },
    /// Too few successful replicas for the scenario's statistics.
    Unavailable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub replicas: usize,
    pub failures: usize,
    pub failed_replicas: Vec<usize>,
    pub diagnostics: Diagnostics,
    pub version: String,
    pub wall_time_seconds: f64,
}

impl RunSummary {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / self.replicas.max(1) as f64
    }

    /// Equality ignoring the wall time.
    pub fn same_result(&self, other: &RunSummary) -> bool {
        RunSummary { wall_time_seconds: 0.0, ..self.clone() } == RunSummary { wall_time_seconds: 0.0, ..other.clone() }
    }
}

/// In-memory result of [`simulate`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub samples: Vec<ReplicaSample>,
    /// Kernel density of the terminal values, when estimable.
    pub density: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Copy, Debug)]
enum Extra {
    None,
    Derivative { right: f64, left: f64, flow_fd: f64, flow_var: f64 },
    Stratified { resampled: f64, monotone: Option<bool> },
    Marcus { unit: f64, closed_form: f64, conjugacy: f64, chain_rule: f64, remainder_rel: f64 },
    Paired { other: f64 },
}

struct Outcome {
    x: f64,
    z: f64,
    extra: Extra,
}

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    sampler: PathSampler<f64>,
    a: ScalarField<f64>,
    sigma: DiffusionField<f64>,
    doss_sussman: Option<DossSussman<f64>>,
    max_jump: f64,
}

/// Runs every replica on a pool of `threads` workers and reduces the
/// results. Output is identical for every `threads` value.
pub fn simulate(cfg: &ScenarioConfig, threads: usize) -> std::result::Result<RunOutput, ScenarioError> {
    cfg.validate()?;
    if threads == 0 {
        return Err(ConfigError::Range { key: "threads".into(), message: "must be at least 1".into() }.into());
    }
    let start = Instant::now();
    let ctx = Context::new(cfg).map_err(ScenarioError::Setup)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ScenarioError::ThreadPool(e.to_string()))?;
    let outcomes: Vec<Result<Outcome>> =
        pool.install(|| (0..cfg.replicas).into_par_iter().map(|i| ctx.replica(i)).collect());

    let samples: Vec<ReplicaSample> = outcomes
        .iter()
        .enumerate()
        .map(|(replica, o)| match o {
            Ok(o) => ReplicaSample { replica, terminal_x: o.x, terminal_z: o.z, failed: false },
            Err(_) => ReplicaSample { replica, terminal_x: f64::NAN, terminal_z: f64::NAN, failed: true },
        })
        .collect();
    let failed_replicas: Vec<usize> = samples.iter().filter(|s| s.failed).map(|s| s.replica).collect();
    let diagnostics = ctx.reduce(&outcomes).unwrap_or_else(|e| Diagnostics::Unavailable { reason: e.to_string() });
    let xs: Vec<f64> = samples.iter().filter(|s| !s.failed).map(|s| s.terminal_x).collect();
    let density = SampleBatch::new(xs, cfg.scenario.to_string(), cfg.seed)
        .and_then(|b| kde(&b, None))
        .ok()
        .and_then(|k| match k {
            KdeResult::Curve { points, .. } => Some(points),
            KdeResult::Degenerate => None,
        });
    Ok(RunOutput {
        summary: RunSummary {
            scenario: cfg.scenario,
            seed: cfg.seed,
            replicas: cfg.replicas,
            failures: failed_replicas.len(),
            failed_replicas,
            diagnostics,
            version: VERSION.to_string(),
            wall_time_seconds: start.elapsed().as_secs_f64(),
        },
        samples,
        density,
    })
}

fn uniform_in(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

/// A monotone or non-monotone bounded drift from the catalogue.
fn random_drift(rng: &mut RngStream) -> FieldSpec {
    match rng.below(3) {
        0 => {
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            FieldSpec::Logistic(uniform_in(rng, -1.0, 1.0), sign * uniform_in(rng, 0.2, 2.0), uniform_in(rng, 0.3, 2.0))
        }
        1 => FieldSpec::Sine(uniform_in(rng, -0.5, 0.5), uniform_in(rng, 0.2, 1.5), uniform_in(rng, 0.5, 3.0)),
        _ => FieldSpec::Affine(uniform_in(rng, -1.5, 1.5), uniform_in(rng, -0.5, 0.5)),
    }
}

/// Small drift and an elliptic diffusion coefficient for the Marcus suite.
fn random_marcus_pair(rng: &mut RngStream) -> (FieldSpec, FieldSpec) {
    let a = match rng.below(3) {
        0 => FieldSpec::Logistic(uniform_in(rng, -0.3, 0.3), uniform_in(rng, -0.3, 0.3), uniform_in(rng, 0.5, 2.0)),
        1 => FieldSpec::Sine(uniform_in(rng, -0.2, 0.2), uniform_in(rng, 0.05, 0.3), uniform_in(rng, 0.5, 3.0)),
        _ => FieldSpec::Affine(uniform_in(rng, -0.3, 0.3), uniform_in(rng, -0.2, 0.2)),
    };
    let sigma = match rng.below(4) {
        0 => FieldSpec::ArctanDiffusion,
        1 => FieldSpec::Logistic(uniform_in(rng, 1.0, 1.5), uniform_in(rng, -0.5, 0.5), uniform_in(rng, 0.5, 2.0)),
        2 => FieldSpec::Affine(uniform_in(rng, -0.2, 0.2), uniform_in(rng, 1.0, 1.5)),
        _ => FieldSpec::Constant(uniform_in(rng, 0.5, 2.0)),
    };
    (a, sigma)
}

/// `2D(δ/2) − D(δ)` twice: cancels the `δ` and `δ²` error terms of a
/// one-sided difference quotient.
fn richardson_one_sided(d: impl Fn(f64) -> Result<f64>, delta: f64) -> Result<f64> {
    let (d1, d2, d4) = (d(delta)?, d(delta / 2.0)?, d(delta / 4.0)?);
    let (r1, r2) = (2.0 * d2 - d1, 2.0 * d4 - d2);
    Ok((4.0 * r2 - r1) / 3.0)
}

fn rel(err: f64, scale: f64) -> f64 {
    err.abs() / scale.abs().max(f64::MIN_POSITIVE)
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self> {
        let sampler = cfg.sampler()?;
        let sigma = cfg.diffusion_field();
        let a = cfg.drift_field();
        let doss_sussman = match cfg.scenario {
            ScenarioId::S7 => Some(DossSussman::new(
                &a,
                &sigma,
                (cfg.x0 - DS_RANGE_HALFWIDTH, cfg.x0 + DS_RANGE_HALFWIDTH),
            )?),
            _ => None,
        };
        let max_jump = match &cfg.measure {
            MeasureConfig::Atoms(atoms) => atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max),
            MeasureConfig::Family(f) => f.size_base,
            MeasureConfig::Density(d) => d.upper.max(-d.lower),
            MeasureConfig::Zero => 0.0,
        };
        Ok(Self { cfg, sampler, a, sigma, doss_sussman, max_jump: if max_jump > 0.0 { max_jump } else { 0.5 } })
    }

    fn replica(&self, index: usize) -> Result<Outcome> {
        let mut rng = RngStream::new(self.cfg.seed, index as u64);
        match self.cfg.scenario {
            ScenarioId::S1 | ScenarioId::S3 | ScenarioId::S4 => {
                let path = self.sampler.sample(&mut rng);
                let sol = solve_random_ode(&self.a, &path, self.cfg.x0, self.cfg.step)?;
                Ok(Outcome { x: sol.terminal_x(), z: path.terminal(), extra: Extra::None })
            }
            ScenarioId::S2 => self.derivative_replica(&mut rng),
            ScenarioId::S5 => self.stratified_replica(index, &mut rng),
            ScenarioId::S6 => self.marcus_replica(&mut rng),
            ScenarioId::S7 => self.doss_sussman_replica(&mut rng),
        }
    }

    /// A path with at least two jumps in the marked window, by rejection.
    fn marked_path(&self, rng: &mut RngStream) -> Result<(LevyPath<f64>, PathDecomposition<f64>)> {
        let d = &self.cfg.diagnostics;
        let mut last = None;
        for _ in 0..MARKED_ATTEMPTS {
            let path = self.sampler.sample(rng);
            match decompose_first_jump(&path, d.eta, d.upper) {
                Ok(dec) => return Ok((path, dec)),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn terminal_y(&self, a: &ScalarField<f64>, path: &LevyPath<f64>, x0: f64) -> Result<f64> {
        let sol = solve_random_ode(a, path, x0, self.cfg.step)?;
        Ok(*sol.y.last().expect("nonempty grid"))
    }

    fn derivative_replica(&self, rng: &mut RngStream) -> Result<Outcome> {
        let cfg = self.cfg;
        let (path, dec) = self.marked_path(rng)?;
        let (a, x0) = if cfg.coefficients.randomize {
            (random_drift(rng).build(), uniform_in(rng, -1.0, 1.0))
        } else {
            (self.a.clone(), cfg.x0)
        };
        let h = cfg.horizon;
        let sol = solve_random_ode(&a, &path, x0, cfg.step)?;
        let y0 = *sol.y.last().expect("nonempty grid");
        let t = dec.first_time;
        let analytic = jump_time_derivative_on(&a, &sol, t, h)?;

        let jumps = path.jumps();
        let k = path.jump_index_at(t).ok_or_else(|| Error::Precondition("marked jump missing from its path".into()))?;
        let before = if k == 0 { 0.0 } else { jumps[k - 1].time };
        let after = jumps.get(k + 1).map_or(h, |j| j.time);
        let delta = cfg.diagnostics.fd_step.min(0.4 * (t - before)).min(0.4 * (after - t));
        let y_at = |s: f64| self.terminal_y(&a, &dec.rebuild_at(s)?, x0);
        let right = richardson_one_sided(|d| Ok((y_at(t + d)? - y0) / d), delta)?;
        let left = richardson_one_sided(|d| Ok((y0 - y_at(t - d)?) / d), delta)?;
        let scale = analytic.abs().max(right.abs()).max(left.abs());

        let flow = flow_derivative_exponential(&a, &sol);
        let variational = flow_derivative_variational(&a, &path, x0, cfg.step)?;
        let dx = cfg.diagnostics.fd_step;
        let central = |d: f64| -> Result<f64> {
            Ok((self.terminal_y(&a, &path, x0 + d)? - self.terminal_y(&a, &path, x0 - d)?) / (2.0 * d))
        };
        let (c1, c2) = (central(dx)?, central(dx / 2.0)?);
        let fd = (4.0 * c2 - c1) / 3.0;
        Ok(Outcome {
            x: sol.terminal_x(),
            z: path.terminal(),
            extra: Extra::Derivative {
                right: rel(analytic - right, scale),
                left: rel(analytic - left, scale),
                flow_fd: rel(flow - fd, flow),
                flow_var: rel(flow - variational, flow),
            },
        })
    }

    fn stratified_replica(&self, index: usize, rng: &mut RngStream) -> Result<Outcome> {
        let cfg = self.cfg;
        let (path, dec) = self.marked_path(rng)?;
        let x = solve_random_ode(&self.a, &path, cfg.x0, cfg.step)?.terminal_x();
        let moved = resample_first_jump_time(&dec, rng);
        let resampled = solve_random_ode(&self.a, &moved, cfg.x0, cfg.step)?.terminal_x();
        let monotone = if index < cfg.diagnostics.monotone_paths {
            let n = cfg.diagnostics.t_grid;
            let ys = (1..=n)
                .map(|k| self.terminal_y(&self.a, &dec.rebuild_at(dec.second_time * (k as f64 / (n + 1) as f64))?, cfg.x0))
                .collect::<Result<Vec<f64>>>()?;
            let inc = ys.windows(2).all(|w| w[1] > w[0]);
            let dec = ys.windows(2).all(|w| w[1] < w[0]);
            Some(inc || dec)
        } else {
            None
        };
        Ok(Outcome { x, z: path.terminal(), extra: Extra::Stratified { resampled, monotone } })
    }

    fn marcus_replica(&self, rng: &mut RngStream) -> Result<Outcome> {
        let cfg = self.cfg;
        let path = self.sampler.sample(rng);
        let (a, sigma, x0, k) = if cfg.coefficients.randomize {
            let (a, s) = random_marcus_pair(rng);
            (a.build(), DiffusionField::new(s.build()), uniform_in(rng, -0.5, 0.5), uniform_in(rng, -0.3, 0.3))
        } else {
            (self.a.clone(), self.sigma.clone(), cfg.x0, 0.2)
        };
        let step = cfg.step;

        let unit = marcus_solve(&a, &DiffusionField::unit(), &path, x0, step)?.terminal
            - solve_random_ode(&a, &path, x0, step)?.terminal_x();

        let proportional = sigma.field.scaled(k);
        let closed_form = marcus_solve(&proportional, &sigma, &path, x0, step)?.terminal
            - proportional_solution(&sigma, k, x0, &path)?;

        let traj = marcus_solve(&a, &sigma, &path, x0, step)?;
        let (lo, hi) = traj.state_range();
        let (lo, hi) = (lo - RANGE_MARGIN, hi + RANGE_MARGIN);
        let diffeo = unit_diffusion_transform(&sigma, x0, (lo, hi))?;
        let reduced = solve_random_ode(&reduced_drift(&a, &diffeo), &path, diffeo.forward(x0), step)?.terminal_x();
        let conjugacy = diffeo.forward(traj.terminal) - reduced;

        let (fwd, s) = (diffeo.clone(), sigma.clone());
        let f = ScalarField::new("unit_transform", move |x| fwd.forward(x), move |x| s.eval(x).recip());
        let chain_rule = chain_rule_residual(&f, &a, &sigma, &traj, 1.0, &path)?;

        let coarse = remainder_constant(&sigma, (lo, hi), self.max_jump, 8, 8)?;
        let fine = remainder_constant(&sigma, (lo, hi), self.max_jump, 16, 16)?;
        let remainder_rel = if coarse.max(fine) < REMAINDER_FLOOR { 0.0 } else { rel(fine - coarse, coarse) };
        Ok(Outcome {
            x: traj.terminal,
            z: path.terminal(),
            extra: Extra::Marcus { unit, closed_form, conjugacy, chain_rule, remainder_rel },
        })
    }

    fn doss_sussman_replica(&self, rng: &mut RngStream) -> Result<Outcome> {
        let cfg = self.cfg;
        let ds = self.doss_sussman.as_ref().expect("built for this scenario");
        let path = self.sampler.sample(rng);
        let (_, x) = ds.solve(&path, cfg.x0, cfg.step)?;
        let mut other_rng = rng.derive(1);
        let other_path = self.sampler.sample(&mut other_rng);
        let other = marcus_solve(&self.a, &self.sigma, &other_path, cfg.x0, cfg.step)?.terminal;
        Ok(Outcome { x, z: path.terminal(), extra: Extra::Paired { other } })
    }

    fn batch(&self, values: Vec<f64>, label: &str) -> Result<SampleBatch<f64>> {
        SampleBatch::new(values, format!("{}:{label}", self.cfg.scenario), self.cfg.seed)
    }

    fn reduce(&self, outcomes: &[Result<Outcome>]) -> Result<Diagnostics> {
        let cfg = self.cfg;
        let dg = &cfg.diagnostics;
        let ok: Vec<&Outcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let xs = || ok.iter().map(|o| o.x).collect::<Vec<f64>>();
        let zs = || ok.iter().map(|o| o.z).collect::<Vec<f64>>();
        Ok(match cfg.scenario {
            ScenarioId::S1 => {
                let batch = self.batch(xs(), "X")?;
                let window = dg.window.unwrap_or_else(|| default_atom_window(&batch));
                let threshold = dg.threshold.unwrap_or_else(|| default_atom_threshold(batch.count()));
                let report = detect_atoms(&batch, window, threshold)?;
                let skeleton =
                    deterministic_skeleton(&self.a, self.sampler.drift_rate(), cfg.x0, cfg.horizon)?;
                let expected_mass = (-self.sampler.rate() * cfg.horizon).exp();
                let standard_error = atom_mass_standard_error(expected_mass, batch.count());
                let nearest = report
                    .candidates
                    .iter()
                    .min_by(|p, q| (p.location - skeleton).abs().total_cmp(&(q.location - skeleton).abs()))
                    .copied();
                Diagnostics::Atom {
                    skeleton,
                    expected_mass,
                    standard_error,
                    window,
                    threshold,
                    atoms_present: report.atoms_present,
                    location_ok: nearest.is_some_and(|c| (c.location - skeleton).abs() <= window),
                    mass_ok: nearest.is_some_and(|c| (c.mass - expected_mass).abs() <= 3.0 * standard_error),
                    nearest_location: nearest.map(|c| c.location),
                    nearest_mass: nearest.map(|c| c.mass),
                    candidates: report.candidates,
                }
            }
            ScenarioId::S3 => {
                let x = self.batch(xs(), "X")?;
                let z = self.batch(zs(), "Z")?;
                let window = dg.window.unwrap_or_else(|| default_atom_window(&x));
                let threshold = dg.threshold.unwrap_or_else(|| default_atom_threshold(x.count()));
                let lattice_z = lattice_concentration(&z, dg.spacing, dg.halfwidth)?;
                let lattice_x = lattice_concentration(&x, dg.spacing, dg.halfwidth)?;
                Diagnostics::Regularization {
                    spacing: dg.spacing,
                    halfwidth: dg.halfwidth,
                    lattice_z,
                    lattice_x,
                    atoms_present_x: detect_atoms(&x, window, threshold)?.atoms_present,
                    window,
                    threshold,
                    lattice_z_ok: lattice_z >= tolerance::LATTICE_Z_MIN,
                    lattice_x_ok: lattice_x <= tolerance::LATTICE_X_MAX,
                }
            }
            ScenarioId::S4 => {
                let shift = cfg.x0 + self.a.eval(cfg.x0) * cfg.horizon;
                let x = self.batch(xs(), "X")?.map(|v| v - shift)?;
                let z = self.batch(zs(), "Z")?;
                let lattice_x_shifted = lattice_concentration(&x, dg.spacing, dg.halfwidth)?;
                Diagnostics::FlatDrift {
                    shift,
                    spacing: dg.spacing,
                    halfwidth: dg.halfwidth,
                    lattice_z: lattice_concentration(&z, dg.spacing, dg.halfwidth)?,
                    lattice_x_shifted,
                    lattice_x_shifted_fixed_offset: lattice_concentration_at(
                        &x,
                        dg.spacing,
                        dg.halfwidth,
                        self.sampler.drift_rate() * cfg.horizon,
                    )?,
                    concentrated: lattice_x_shifted >= tolerance::FLAT_LATTICE_MIN,
                }
            }
            ScenarioId::S2 => {
                let d: Vec<(f64, f64, f64, f64)> = ok
                    .iter()
                    .filter_map(|o| match o.extra {
                        Extra::Derivative { right, left, flow_fd, flow_var } => Some((right, left, flow_fd, flow_var)),
                        _ => None,
                    })
                    .collect();
                if d.is_empty() {
                    return Err(Error::Precondition("no replica completed".into()));
                }
                let r = max_of(d.iter().map(|v| v.0));
                let l = max_of(d.iter().map(|v| v.1));
                let fd = max_of(d.iter().map(|v| v.2));
                let var = max_of(d.iter().map(|v| v.3));
                Diagnostics::Derivative {
                    checked: d.len(),
                    max_rel_jump_time_right: r,
                    max_rel_jump_time_left: l,
                    max_rel_flow_fd: fd,
                    max_rel_flow_variational: var,
                    jump_time_ok: r <= tolerance::JUMP_TIME_REL && l <= tolerance::JUMP_TIME_REL,
                    flow_ok: fd <= tolerance::FLOW_FD_REL && var <= tolerance::FLOW_VARIATIONAL_REL,
                }
            }
            ScenarioId::S5 => self.reduce_stratified(outcomes)?,
            ScenarioId::S6 => {
                let m: Vec<[f64; 5]> = ok
                    .iter()
                    .filter_map(|o| match o.extra {
                        Extra::Marcus { unit, closed_form, conjugacy, chain_rule, remainder_rel } => {
                            Some([unit.abs(), closed_form.abs(), conjugacy.abs(), chain_rule.abs(), remainder_rel])
                        }
                        _ => None,
                    })
                    .collect();
                if m.is_empty() {
                    return Err(Error::Precondition("no replica completed".into()));
                }
                let col = |i: usize| max_of(m.iter().map(|v| v[i]));
                Diagnostics::Marcus {
                    checked: m.len(),
                    max_unit_reduction: col(0),
                    max_closed_form: col(1),
                    max_conjugacy: col(2),
                    max_chain_rule: col(3),
                    max_remainder_rel_change: col(4),
                    unit_reduction_ok: col(0) <= tolerance::UNIT_REDUCTION,
                    closed_form_ok: col(1) <= tolerance::CLOSED_FORM,
                    conjugacy_ok: col(2) <= tolerance::CONJUGACY,
                    chain_rule_ok: col(3) < tolerance::CHAIN_RULE,
                    remainder_ok: col(4) <= tolerance::REMAINDER_REL,
                }
            }
            ScenarioId::S7 => {
                let other: Vec<f64> = ok
                    .iter()
                    .filter_map(|o| match o.extra {
                        Extra::Paired { other } => Some(other),
                        _ => None,
                    })
                    .collect();
                let ks = two_sample_ks(&self.batch(xs(), "doss_sussman")?, &self.batch(other, "marcus")?)?;
                Diagnostics::DossSussman {
                    compared: ok.len(),
                    statistic: ks.statistic,
                    critical_1pct: ks.critical_1pct,
                    equivalent: ks.passes(),
                }
            }
        })
    }

    fn reduce_stratified(&self, outcomes: &[Result<Outcome>]) -> Result<Diagnostics> {
        let dg = &self.cfg.diagnostics;
        let (mut passes, mut skipped, mut max_stat, mut critical) = (0, 0, 0.0f64, 0.0f64);
        let blocks = outcomes.len() / dg.ks_batch;
        for block in outcomes.chunks_exact(dg.ks_batch) {
            let (orig, moved): (Vec<f64>, Vec<f64>) = block
                .iter()
                .filter_map(|o| match o {
                    Ok(Outcome { x, extra: Extra::Stratified { resampled, .. }, .. }) => Some((*x, *resampled)),
                    _ => None,
                })
                .unzip();
            match two_sample_ks(&self.batch(orig, "X")?, &self.batch(moved, "X_resampled")?) {
                Ok(ks) => {
                    passes += usize::from(ks.passes());
                    max_stat = max_stat.max(ks.statistic);
                    critical = critical.max(ks.critical_1pct);
                }
                Err(_) => skipped += 1,
            }
        }
        let flags: Vec<bool> = outcomes
            .iter()
            .filter_map(|o| match o {
                Ok(Outcome { extra: Extra::Stratified { monotone: Some(m), .. }, .. }) => Some(*m),
                _ => None,
            })
            .collect();
        let monotone_ok = flags.iter().filter(|&&m| m).count();
        let tested = blocks - skipped;
        Ok(Diagnostics::Stratification {
            ks_blocks: blocks,
            ks_passes: passes,
            ks_skipped: skipped,
            max_statistic: max_stat,
            critical_1pct: critical,
            monotone_checked: flags.len(),
            monotone_ok,
            invariant: tested > 0 && passes as f64 >= tolerance::KS_PASS_FRACTION * blocks as f64,
            all_monotone: monotone_ok == flags.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::catalogue::default_config;

    fn small(id: ScenarioId, replicas: usize) -> ScenarioConfig {
        ScenarioConfig { replicas, ..default_config(id) }
    }

    #[test]
    fn richardson_is_exact_on_cubics() {
        let f = |x: f64| 1.0 + 2.0 * x - 3.0 * x * x + 0.5 * x * x * x;
        let d = richardson_one_sided(|h| Ok((f(0.3 + h) - f(0.3)) / h), 0.1).unwrap();
        assert!((d - (2.0 - 1.8 + 1.5 * 0.09)).abs() < 1e-12);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small(ScenarioId::S1, 2000);
        let a = simulate(&cfg, 1).unwrap();
        let b = simulate(&cfg, 3).unwrap();
        assert!(a.summary.same_result(&b.summary));
        assert_eq!(format!("{:?}", a.samples), format!("{:?}", b.samples));
    }

    #[test]
    fn too_few_replicas_leave_diagnostics_unavailable() {
        let out = simulate(&small(ScenarioId::S1, 10), 1).unwrap();
        assert!(matches!(out.summary.diagnostics, Diagnostics::Unavailable { .. }));
        assert_eq!(out.samples.len(), 10);
        assert!(out.density.is_none());
    }

    #[test]
    fn diverging_replicas_are_isolated() {
        let mut cfg = small(ScenarioId::S1, 50);
        cfg.coefficients.a = FieldSpec::Affine(60.0, 0.0);
        cfg.measure = MeasureConfig::Atoms(vec![(1.0, 1.0)]);
        cfg.x0 = 1.0;
        cfg.triplet.drift = 0.0;
        cfg.step = 0.25;
        cfg.horizon = 50.0;
        let out = simulate(&cfg, 2).unwrap();
        assert_eq!(out.summary.failures, 50);
        assert_eq!(out.summary.failed_replicas.len(), 50);
        assert!(out.samples.iter().all(|s| s.failed && s.terminal_x.is_nan()));
    }

    #[test]
    fn summary_json_round_trips() {
        let out = simulate(&small(ScenarioId::S6, 3), 1).unwrap();
        let text = serde_json::to_string(&out.summary).unwrap();
        let back: RunSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out.summary);
    }

    #[test]
    fn zero_threads_is_a_config_error() {
        assert!(matches!(simulate(&small(ScenarioId::S1, 10), 0), Err(ScenarioError::Config(_))));
    }
}
