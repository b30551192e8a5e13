use dimcollapse::harness::{
    parse_csv, run_experiment, to_csv, Estimator, ExperimentConfig, SystemId,
};
use dimcollapse::policies::PolicyKind;

/// With linear dynamics and a correctly initialized filter the bound is the
/// exact error covariance, so the mean squared error over many seeds must
/// track its trace.
#[test]
fn filter_error_matches_the_bound_on_average() {
    let seeds = 400;
    let steps = 25;
    let (mut err2, mut trace) = (vec![0.0; steps], vec![0.0; steps]);
    for seed in 0..seeds {
        let mut cfg = ExperimentConfig::new(SystemId::Linear2, 2);
        cfg.policy = PolicyKind::Random;
        cfg.estimator = Estimator::Ekf;
        cfg.steps = steps;
        cfg.seed = seed;
        let rec = run_experiment(&cfg).unwrap();
        for (i, r) in rec.rows.iter().enumerate() {
            err2[i] += r.err_norm.unwrap().powi(2) / seeds as f64;
            trace[i] += r.trace_crlb / seeds as f64;
        }
    }
    for i in [0, steps / 2, steps - 1] {
        let ratio = err2[i] / trace[i];
        assert!(
            (ratio - 1.0).abs() < 0.15,
            "step {i}: mean squared error / trace = {ratio}"
        );
    }
}

#[test]
fn runs_are_reproducible_and_survive_csv() {
    let mut cfg = ExperimentConfig::new(SystemId::Hopf, 2);
    cfg.steps = 40;
    cfg.seed = 99;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(to_csv(&a), to_csv(&b));
    assert_eq!(parse_csv(&to_csv(&a)).unwrap(), a);
}

#[test]
fn collapse_keeps_the_forecast_bound_below_random_on_van_der_pol() {
    let mut cfg = ExperimentConfig::new(SystemId::VanDerPol, 2);
    cfg.steps = 300;
    let collapse = run_experiment(&cfg).unwrap().final_forecast().unwrap();
    cfg.policy = PolicyKind::Random;
    let random = run_experiment(&cfg).unwrap().final_forecast().unwrap();
    assert!(
        collapse <= random,
        "collapse {collapse:e} vs random {random:e}"
    );
}
