use cutoff_core::profile::{pi_function, ProfilePrediction};
use cutoff_core::stationary::{stationary_residual, uncorrelated};
use cutoff_core::*;
use proptest::prelude::*;

fn open_face() -> impl Strategy<Value = FaceSpec> {
    (0.05f64..2.0, 0.05f64..0.95, prop_oneof![Just(0.0), Just(1.0), Just(2.0)])
        .prop_map(|(plus, minus, theta)| FaceSpec::open(plus, minus, theta))
}

fn face() -> impl Strategy<Value = FaceSpec> {
    prop_oneof![3 => open_face(), 1 => Just(FaceSpec::Closed)]
}

fn segment() -> impl Strategy<Value = GraphWithBoundary> {
    (3usize..24, open_face(), face()).prop_map(|(n, l, r)| build_segment(n, l, r).unwrap())
}

fn square() -> impl Strategy<Value = GraphWithBoundary> {
    (2usize..6, open_face(), face(), face(), face()).prop_map(|(n, a, b, c, d)| build_lattice(2, n, &[a, b, c, d]).unwrap())
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigenpairs_are_orthonormal_and_accurate(g in prop_oneof![segment(), square()]) {
        let lap = assemble_laplacian(&g);
        let sp = eigendecompose(&lap).unwrap();
        let nv = g.num_vertices();
        let lam = sp.eigenvalues();
        prop_assert!(lam.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(lam[0] > 0.0, "reservoirs make the spectrum positive");
        for k in 0..nv {
            prop_assert!(sp.residuals()[k] <= 1e-8 * (1.0 + lam[k]), "residual {} at {k}", sp.residuals()[k]);
            for l in k..nv {
                let ip = lap.inner(sp.vector(k), sp.vector(l));
                let want = if k == l { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() < 1e-9, "<ψ{k},ψ{l}> = {ip}");
            }
        }
        let m = sp.multiplicity();
        prop_assert!(m >= 1);
        prop_assert_eq!(sp.first_cluster().len(), m);
    }

    #[test]
    fn laplacian_is_self_adjoint((g, f, h) in segment().prop_flat_map(|g| { let n = g.num_vertices(); (Just(g), vector(n), vector(n)) })) {
        let lap = assemble_laplacian(&g);
        let lhs = lap.inner(&lap.apply(&f), &h);
        let rhs = lap.inner(&f, &lap.apply(&h));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        // The stored operator is −Δ, so ⟨−Δf, f⟩ is the Dirichlet energy.
        let forms = energy_forms(&g, &f, None).unwrap();
        let e = lap.inner(&lap.apply(&f), &f);
        prop_assert!((forms.energy - e).abs() <= 1e-9 * (1.0 + e.abs()));
        prop_assert!(forms.energy >= -1e-12);
        prop_assert!(forms.gamma.iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn stationary_density_obeys_the_maximum_principle(g in prop_oneof![segment(), square()]) {
        let sol = solve_stationary_density(&g, None).unwrap();
        let bar = g.rho_bar();
        let lo = bar.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = bar.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(sol.rho_ss.iter().all(|&r| r >= lo - 1e-12 && r <= hi + 1e-12));
        prop_assert!(stationary_residual(&g, &sol.rho_ss).unwrap() < 1e-9);
    }

    #[test]
    fn stationary_correlations_are_nonpositive(g in segment()) {
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        let phi = stationary_correlation(&g, &rho).unwrap();
        prop_assert!(phi.max_off_diagonal() <= 1e-12, "{}", phi.max_off_diagonal());
        for x in 0..g.num_vertices() {
            for y in 0..g.num_vertices() {
                prop_assert_eq!(phi.get(x, y), phi.get(y, x));
            }
        }
    }

    #[test]
    fn dynamic_correlations_stay_nonpositive(
        (g, bits) in (3usize..10, open_face(), open_face())
            .prop_flat_map(|(n, l, r)| (Just(build_segment(n, l, r).unwrap()), prop::collection::vec(0u8..2, n + 1))),
        t in prop_oneof![Just(0.1), Just(1.0)],
    ) {
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let rho = solve_stationary_density(&g, None).unwrap().rho_ss;
        let eta: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
        let gamma = gamma_path(&sp, &rho, &eta).unwrap();
        let phi = dynamic_correlation(&g, &uncorrelated(&eta), &gamma, &rho, t).unwrap();
        prop_assert!(phi.max_off_diagonal() <= 1e-10, "{}", phi.max_off_diagonal());
    }

    #[test]
    fn profile_is_a_decreasing_probability(n in 8usize..40, density in 0.1f64..0.9) {
        let g = build_torus(1, n).unwrap();
        let sp = eigendecompose(&assemble_laplacian(&g)).unwrap();
        let k = (density * n as f64).floor() + 1.0;
        let rho = vec![k / n as f64; n];
        let init = extremal_config(&g, &sp, &rho, ExtremalMode::Density(density)).unwrap();
        let p = ProfilePrediction::new(&g, &sp, &rho, init).unwrap();
        prop_assert!(p.c_star_norm > 0.0);
        let mut last = 1.0;
        for i in 0..40 {
            let v = p.profile(-4.0 + 0.2 * i as f64).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v < last || (v == 1.0 && last == 1.0));
            last = v;
        }
    }

    #[test]
    fn pi_is_positive_and_bounded(j in 1usize..7, rho in 0.001f64..0.999) {
        let v = pi_function(j, rho);
        prop_assert!(v > 0.0);
        prop_assert!(v <= (2.0 * j as f64).sqrt() / std::f64::consts::PI);
    }
}
