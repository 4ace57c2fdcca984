use cofactor::experiment::{run_recovery_experiment, ExperimentConfig};
use cofactor_core::interpret::SweepGrid;

fn small_config() -> ExperimentConfig {
    let grid = SweepGrid::spaced(0.05, 1.0, 5, 0.5, 3.0, 3).unwrap();
    ExperimentConfig {
        p: 10,
        q: 3,
        models: vec![(1, 1)],
        ns: vec![300, 1200],
        trials: 3,
        seed: 17,
        lambdas: grid.lambdas().to_vec(),
        gammas: grid.gammas().to_vec(),
        ..ExperimentConfig::recovery_default()
    }
}

fn render(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>) {
    let r = run_recovery_experiment(cfg).unwrap();
    let (mut summary, mut trials) = (Vec::new(), Vec::new());
    r.write_summary(&mut summary).unwrap();
    r.write_trials(&mut trials).unwrap();
    (summary, trials)
}

#[test]
fn outputs_are_byte_deterministic() {
    let cfg = small_config();
    let first = render(&cfg);
    assert_eq!(first, render(&cfg));
    let summary = String::from_utf8(first.0).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.starts_with("k_x,k_u,n,trials,selected,mean_deviation,recovery_probability"));
    assert_eq!(String::from_utf8(first.1).unwrap().lines().count(), 1 + 2 * 3);
}

#[test]
fn seed_changes_the_draws() {
    let cfg = small_config();
    let other = ExperimentConfig { seed: 18, ..cfg.clone() };
    assert_ne!(render(&cfg).1, render(&other).1);
}

#[test]
fn rows_follow_model_and_sample_size_order() {
    let cfg = ExperimentConfig { models: vec![(1, 1), (1, 2)], ns: vec![200], trials: 1, ..small_config() };
    let r = run_recovery_experiment(&cfg).unwrap();
    let keys: Vec<_> = r.rows.iter().map(|row| (row.k_x, row.k_u, row.n)).collect();
    assert_eq!(keys, vec![(1, 1, 200), (1, 2, 200)]);
    for row in &r.rows {
        assert!((0.0..=1.0).contains(&row.recovery_probability));
    }
    assert!(run_recovery_experiment(&ExperimentConfig { trials: 0, ..cfg }).is_err());
}
