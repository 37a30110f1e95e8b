//! Temporary probe: per-repeat paired errors for the unraveling comparison.

use magnus_qsd::ensemble::{error_vs_exact, exact_reference, run_ensemble, EnsembleConfig};
use magnus_qsd::magnus::{MagnusOrder, SchemeConfig, SchemeKind, UnravelingKind};
use magnus_qsd::models::{build_fmo, fmo_initial_state};

#[test]
fn pairs() {
    let model = build_fmo().unwrap();
    let initial = fmo_initial_state();
    let mut errs = Vec::new();
    for unravel in [UnravelingKind::Nonlinear, UnravelingKind::Linear] {
        let mut cfg = EnsembleConfig::new(
            SchemeConfig::new(SchemeKind::Magnus(MagnusOrder::First), unravel),
            5.0,
            100,
        );
        cfg.n_traj = 1000;
        cfg.n_repeats = 10;
        cfg.master_seed = 0xACC4;
        let est = run_ensemble(&model, &initial, &cfg).unwrap();
        let reference = exact_reference(&model, &initial, 5.0, 100).unwrap();
        errs.push(
            error_vs_exact(&est, &reference)
                .unwrap()
                .per_repeat_overall,
        );
    }
    println!("nonlinear: {:?}", errs[0]);
    println!("linear:    {:?}", errs[1]);
    let d: Vec<f64> = errs[0]
        .iter()
        .zip(errs[1].iter())
        .map(|(n, l)| n - l)
        .collect();
    println!("diff (nl - lin): {d:?}");
}
