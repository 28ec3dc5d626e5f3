use sabrlab_core::process_models::cev_exact_stratonovich;
use sabrlab_core::simulation::{map_paths, simulate_decoupled, simulate_sabr_euler};
use sabrlab_core::stats::ks_two_sample;
use sabrlab_core::time_change::{equivalence_experiment, EquivalenceConfig};
use sabrlab_core::{ModelParams, State2, TimeGrid};

fn reduced(beta: f64, rho: f64, drifted: bool) -> EquivalenceConfig {
    let mut cfg = EquivalenceConfig::standard(ModelParams::new(beta, rho, 1.0).unwrap(), drifted);
    cfg.n_paths = 4000;
    cfg.dt = 1e-3;
    cfg
}

#[test]
fn correlated_beta_zero_equivalence() {
    let r = equivalence_experiment(&reduced(0.0, 0.5, false)).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn drifted_equivalence_reduced() {
    let r = equivalence_experiment(&reduced(0.5, 0.5, true)).unwrap();
    assert!(r.pass, "{r:?}");
}

/// The drifted decoupled forward uses the explicit Stratonovich solution;
/// an Euler scheme of the equivalent Itô equation must have the same law.
#[test]
fn drifted_forward_matches_euler() {
    let p = ModelParams::new(0.5, 0.0, 0.0).unwrap();
    let init = State2::new(1.0, 1.0).unwrap();
    let grid = TimeGrid::with_step(0.5, 1e-4).unwrap();
    let exact: Vec<f64> = map_paths(4000, 1, |s| simulate_decoupled(&p, init, &grid, true, s).unwrap().terminal().x);
    let euler: Vec<f64> = map_paths(4000, 2, |s| simulate_sabr_euler(&p, init, &grid, true, s).unwrap().terminal().x);
    let r = ks_two_sample(&exact, &euler).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}");
    // endpoint consistency of the explicit map with a zero driver
    assert_eq!(cev_exact_stratonovich(1.7, 0.5, 1.0, 0.0).unwrap(), 1.7);
}
