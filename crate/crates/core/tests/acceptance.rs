//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::time::{Duration, Instant};

use levyreg::levy_spec::{default_epsilon_grid, kallenberg_b_profile, JumpMeasureSpec};
use levyreg::quad::adaptive_simpson;
use levyreg::scenario::{default_config, run_scenario, simulate, Diagnostics, RunSummary, ScenarioConfig, ScenarioId};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn run(cfg: &ScenarioConfig) -> (RunSummary, Duration) {
    let start = Instant::now();
    let out = simulate(cfg, 1).expect("scenario runs");
    (out.summary, start.elapsed())
}

fn scenario(id: ScenarioId) -> (RunSummary, Duration) {
    run(&default_config(id))
}

fn jump_time_derivative() -> Verdict {
    let (s, t) = scenario(ScenarioId::S2);
    match s.diagnostics {
        Diagnostics::Derivative { checked, max_rel_jump_time_right: r, max_rel_jump_time_left: l, .. } => verdict(
            checked == 100 && s.failures == 0 && r <= 1e-4 && l <= 1e-4 && t < Duration::from_secs(60),
            format!("{checked} configs, max rel error right {r:.2e} left {l:.2e}, {:.1}s", t.as_secs_f64()),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn flow_derivative() -> Verdict {
    let (s, _) = scenario(ScenarioId::S2);
    match s.diagnostics {
        Diagnostics::Derivative { checked, max_rel_flow_fd: fd, max_rel_flow_variational: var, .. } => verdict(
            checked == 100 && fd <= 1e-5 && var <= 1e-8,
            format!("{checked} configs, vs central difference {fd:.2e}, vs variational {var:.2e}"),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn doblin_atom() -> Verdict {
    let cfg = default_config(ScenarioId::S1);
    let (s, t) = run(&cfg);
    match s.diagnostics {
        Diagnostics::Atom { skeleton, expected_mass, standard_error, nearest_location, nearest_mass, location_ok, mass_ok, .. } => {
            verdict(
                cfg.replicas == 100_000 && location_ok && mass_ok && t < Duration::from_secs(120),
                format!(
                    "skeleton {skeleton:.12}, atom at {:?} mass {:?} (expected {expected_mass:.5} ± 3·{standard_error:.5}), {:.1}s",
                    nearest_location, nearest_mass, t.as_secs_f64()
                ),
            )
        }
        other => verdict(false, format!("{other:?}")),
    }
}

fn regularization() -> Verdict {
    let cfg = default_config(ScenarioId::S3);
    let rate = cfg.sampler().expect("valid").rate();
    let (s, t) = run(&cfg);
    match s.diagnostics {
        Diagnostics::Regularization { lattice_z, lattice_x, atoms_present_x, .. } => verdict(
            rate == 8190.0
                && cfg.replicas == 10_000
                && lattice_z >= 0.999
                && lattice_x <= 0.01
                && !atoms_present_x
                && t < Duration::from_secs(300),
            format!(
                "rate {rate}, lattice(Z_1) {lattice_z}, lattice(X_1) {lattice_x}, atoms in X_1: {atoms_present_x}, {:.1}s",
                t.as_secs_f64()
            ),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn flat_drift() -> Verdict {
    let (s, _) = scenario(ScenarioId::S4);
    match s.diagnostics {
        Diagnostics::FlatDrift { lattice_x_shifted, lattice_z, shift, .. } => verdict(
            lattice_x_shifted >= 0.95,
            format!("lattice(X_1 - {shift}) {lattice_x_shifted}, lattice(Z_1) {lattice_z}"),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn stratification() -> Verdict {
    let cfg = default_config(ScenarioId::S5);
    let (s, _) = run(&cfg);
    match s.diagnostics {
        Diagnostics::Stratification { ks_blocks, ks_passes, monotone_checked, monotone_ok, .. } => verdict(
            ks_blocks == 100 && ks_passes >= 95 && monotone_checked == 100 && monotone_ok == 100,
            format!(
                "KS passes {ks_passes}/{ks_blocks} (batches of {}), monotone {monotone_ok}/{monotone_checked} on a {}-point grid",
                cfg.diagnostics.ks_batch, cfg.diagnostics.t_grid
            ),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn marcus_suite() -> Verdict {
    let (s, _) = scenario(ScenarioId::S6);
    match s.diagnostics {
        Diagnostics::Marcus {
            checked,
            max_unit_reduction: u,
            max_closed_form: c,
            max_conjugacy: g,
            max_chain_rule: r,
            max_remainder_rel_change: k,
            ..
        } => verdict(
            checked == 50 && u <= 1e-10 && c <= 1e-6 && g <= 1e-5 && r < 1e-5 && k <= 0.1,
            format!(
                "{checked} configs: unit σ {u:.1e}, closed form {c:.1e}, conjugacy {g:.1e}, chain rule {r:.1e}, K refinement {:.1}%",
                k * 100.0
            ),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn doss_sussman() -> Verdict {
    let (s, _) = scenario(ScenarioId::S7);
    match s.diagnostics {
        Diagnostics::DossSussman { compared, statistic, critical_1pct, equivalent } => verdict(
            compared == 10_000 && equivalent,
            format!("{compared} paths, KS {statistic:.4} vs critical {critical_1pct:.4}"),
        ),
        other => verdict(false, format!("{other:?}")),
    }
}

fn determinism() -> Verdict {
    let cfg = ScenarioConfig { replicas: 10_000, ..default_config(ScenarioId::S1) };
    let dir = tempfile::tempdir().expect("temp dir");
    let runs = [("a", 1), ("b", 1), ("c", 8)];
    let mut summaries = Vec::new();
    let mut files = Vec::new();
    for (name, threads) in runs {
        let out = dir.path().join(name);
        summaries.push(run_scenario(&cfg, threads, &out).expect("run succeeds"));
        files.push(fs::read(out.join("samples.csv")).expect("samples written"));
    }
    let same_files = files.windows(2).all(|w| w[0] == w[1]);
    let same_summaries = summaries.windows(2).all(|w| w[0].same_result(&w[1]));
    verdict(
        same_files && same_summaries,
        format!("samples.csv byte-identical: {same_files}, summary identical modulo wall time: {same_summaries}"),
    )
}

fn kallenberg() -> Verdict {
    let spec = JumpMeasureSpec::power_density(1.0, 1.5, -1.0, 1.0).expect("valid density");
    let eps = 1e-4f64;
    let ratio = kallenberg_b_profile(&spec, &[eps]).expect("profile").grid[0].1;
    // μ(−ε, ε) = 2∫_0^ε √z/(1+z²) dz; z = s² removes the endpoint singularity
    let mu = 2.0 * adaptive_simpson(&|s: f64| 2.0 * s * s / (1.0 + s.powi(4)), 0.0, eps.sqrt(), 1e-16);
    let oracle = mu / (eps * eps * eps.ln().abs());
    let profile = kallenberg_b_profile(&spec, &default_epsilon_grid()).expect("profile");
    let monotone = profile.grid.windows(2).all(|w| w[1].1 > w[0].1);
    let atomic = JumpMeasureSpec::finite_atomic(vec![
        levyreg::Atom { size: 0.3, rate: 2.0 },
        levyreg::Atom { size: -0.05, rate: 1.0 },
    ])
    .expect("valid atoms");
    let below: Vec<f64> = default_epsilon_grid().into_iter().filter(|&e| e <= 0.05).collect();
    let zero = kallenberg_b_profile(&atomic, &below).expect("profile").grid.iter().all(|&(_, r)| r == 0.0);
    verdict(
        (ratio - 14.48).abs() <= 0.01 * oracle && (ratio - oracle).abs() <= 0.01 * oracle && monotone && zero,
        format!("ratio {ratio:.4} vs oracle {oracle:.4}, increasing: {monotone}, atomic below smallest atom zero: {zero}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("jump-time derivative vs finite differences", jump_time_derivative),
        ("flow derivative vs central difference and variational ODE", flow_derivative),
        ("atom at the deterministic skeleton", doblin_atom),
        ("regularization of a lattice driver", regularization),
        ("flat drift keeps the lattice", flat_drift),
        ("first-jump resampling invariance", stratification),
        ("Marcus reductions", marcus_suite),
        ("Doss-Sussman vs Marcus in law", doss_sussman),
        ("determinism across runs and thread counts", determinism),
        ("Kallenberg profile", kallenberg),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("{} {:>2}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
