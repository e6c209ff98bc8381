//! End-to-end experiment on the closed ring of 32 sites at half filling.

use cutoff_core::*;

#[test]
fn torus_experiment_reproduces_profile_tails_and_centre() {
    let g = build_torus(1, 32).unwrap();
    let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
    let initial = extremal_config(&g, &sp, &[0.5; 32], ExtremalMode::Density(0.5)).unwrap();
    let k = initial.iter().map(|&b| b as usize).sum::<usize>();
    let rho = solve_stationary_density(&g, Some(k as f64 / 32.0)).unwrap().rho_ss;
    let prediction = ProfilePrediction::new(&g, &sp, &rho, initial).unwrap();
    let report = run_experiment(&g, &sp, &rho, &prediction, &[-3.0, 0.0, 3.0], 20_000, 8).unwrap();
    let [early, centre, late] = &report.rows[..] else { panic!("three rows expected") };

    assert!(early.clamped && !centre.clamped && !late.clamped);
    assert!(early.empirical_tv >= 0.9, "{}", early.empirical_tv);
    assert!(late.empirical_tv <= 0.1, "{}", late.empirical_tv);
    let erf_centre = cutoff_core::profile::erf(1.0 / std::f64::consts::PI);
    assert!((centre.empirical_tv - erf_centre).abs() <= 0.08, "{}", centre.empirical_tv);
    assert!((centre.mean_qv_total - 0.25).abs() <= 0.025, "{}", centre.mean_qv_total);
    assert!(centre.ci_lo <= centre.empirical_tv && centre.empirical_tv <= centre.ci_hi);

    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("t,predicted_tv,empirical_tv,ci_lo,ci_hi,mean_qv_bulk,mean_qv_boundary,predicted_xi,replicas,seed"));
    assert_eq!(lines.count(), 3);
    assert_eq!(report.graph_digest, g.digest());
}
