use levyreg::path_sampler::{Jump, LevyPath as GenericPath, PathSampler as GenericSampler};
use levyreg::levy_spec::{JumpMeasureSpec as GenericMeasure, LevyTriplet as GenericTriplet};
use levyreg::field::ScalarField as GenericField;
use levyreg::scenario::{default_config, run_scenario, RunSummary, ScenarioId};
use levyreg::{
    doss_sussman_solve, marcus_solve, solve_random_ode, Atom, DiffusionField, JumpMeasureSpec, LevyPath, LevyTriplet,
    PathSampler, RngStream, SampleBatch, ScalarField, Trajectory,
};

fn atoms() -> JumpMeasureSpec {
    JumpMeasureSpec::finite_atomic(vec![Atom { size: 0.4, rate: 3.0 }, Atom { size: -0.25, rate: 2.0 }]).unwrap()
}

#[test]
fn constant_drift_adds_a_straight_line() {
    let triplet = LevyTriplet::new(0.2, 0.0, atoms()).unwrap();
    let sampler = PathSampler::new(&triplet, 1.0, 1e-6, false).unwrap();
    let a = ScalarField::constant(0.7);
    for id in 0..20 {
        let path = sampler.sample(&mut RngStream::new(3, id));
        let x = solve_random_ode(&a, &path, 0.5, 1.0 / 256.0).unwrap().terminal_x();
        assert!((x - (0.5 + 0.7 + path.terminal())).abs() < 1e-12);
    }
}

#[test]
fn solvers_agree_with_unit_diffusion() {
    let path = LevyPath::new(
        1.0,
        0.1,
        vec![Jump { time: 0.3, size: 0.5 }, Jump { time: 0.7, size: -0.8 }],
        None,
    )
    .unwrap();
    let a = ScalarField::logistic(0.2, 1.0, 1.0);
    let step = 1.0 / 512.0;
    let ode = solve_random_ode(&a, &path, 0.1, step).unwrap().terminal_x();
    let marcus = marcus_solve(&a, &DiffusionField::unit(), &path, 0.1, step).unwrap().terminal_x();
    let ds = doss_sussman_solve(&a, &DiffusionField::unit(), &path, 0.1, step).unwrap();
    assert!((ode - marcus).abs() < 1e-9, "{ode} vs {marcus}");
    assert!((ode - ds).abs() < 1e-9, "{ode} vs {ds}");
}

#[test]
fn doss_sussman_tracks_marcus_pathwise() {
    let path = LevyPath::new(1.0, 0.05, vec![Jump { time: 0.25, size: 0.6 }, Jump { time: 0.6, size: -0.4 }], None)
        .unwrap();
    let a = ScalarField::logistic(0.2, 0.5, 1.0);
    let sigma = DiffusionField::new(ScalarField::logistic(1.0, 0.4, 1.0));
    let step = 1.0 / 1024.0;
    let marcus = marcus_solve(&a, &sigma, &path, 0.0, step).unwrap().terminal_x();
    let ds = doss_sussman_solve(&a, &sigma, &path, 0.0, step).unwrap();
    assert!((marcus - ds).abs() < 1e-6, "{marcus} vs {ds}");
}

#[test]
fn single_precision_matches_double() {
    let spec = GenericMeasure::finite_atomic(vec![Atom { size: 0.4f32, rate: 3.0 }]).unwrap();
    let triplet = GenericTriplet::new(0.2f32, 0.0, spec).unwrap();
    let sampler = GenericSampler::new(&triplet, 1.0, 1e-6, false).unwrap();
    let path: GenericPath<f32> = sampler.sample(&mut RngStream::new(9, 0));
    let x32 = solve_random_ode(&GenericField::logistic(0.0f32, 1.0, 1.0), &path, 0.0, 1.0 / 128.0).unwrap().terminal_x();

    let jumps = path.jumps().iter().map(|j| Jump { time: j.time as f64, size: j.size as f64 }).collect();
    let path64 = LevyPath::new(1.0, 0.2, jumps, None).unwrap();
    let x64 = solve_random_ode(&ScalarField::logistic(0.0, 1.0, 1.0), &path64, 0.0, 1.0 / 128.0).unwrap().terminal_x();
    assert!(((x32 as f64) - x64).abs() < 1e-4);
}

#[test]
fn batch_statistics_from_simulated_terminals() {
    let triplet = LevyTriplet::new(0.0, 0.0, atoms()).unwrap();
    let sampler = PathSampler::new(&triplet, 1.0, 1e-6, false).unwrap();
    let values: Vec<f64> = (0..2000).map(|i| sampler.sample(&mut RngStream::new(1, i)).terminal()).collect();
    let batch = SampleBatch::new(values, "Z_1", 1).unwrap();
    // E[Z_1] = 3·0.4 − 2·0.25
    assert!((batch.mean() - 0.7).abs() < 4.0 * batch.std_dev() / (2000f64).sqrt());
    let lattice = levyreg::lattice_concentration(&batch, 0.05, 1e-9).unwrap();
    assert!(lattice > 0.999);
}

#[test]
fn scenario_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = levyreg::scenario::ScenarioConfig { replicas: 40, ..default_config(ScenarioId::S6) };
    let summary = run_scenario(&cfg, 2, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let parsed: RunSummary = serde_json::from_str(&text).unwrap();
    assert!(parsed.same_result(&summary));
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 41);
    let reparsed = levyreg::scenario::parse_config(&std::fs::read_to_string(dir.path().join("config.txt")).unwrap()).unwrap();
    assert_eq!(reparsed, cfg);
}
