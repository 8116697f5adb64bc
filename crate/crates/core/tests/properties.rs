use nhskin::analysis::{binormalize, vicinity, Gauge, StateSource};
use nhskin::greens::{dress, dyson_update, numeric_greens, PbcGreens};
use nhskin::linalg::{max_abs_diff, overlap, C64};
use nhskin::model::{build_dense, pbc_spectrum_hn, Boundary, HatanoNelsonParams, Impurity, ImpuritySet, LatticeModel, Site, SshParams};
use nhskin::obc::{impurity_matrix, obc_eigenstates_green, obc_spectrum_hn, PoleProblem};
use nhskin::oracle::{dense_eig, match_spectra};
use nhskin::closed_form::hn_skin_state_closed;
use proptest::prelude::*;

fn ring(delta: f64, n: usize) -> (HatanoNelsonParams, LatticeModel) {
    let p = HatanoNelsonParams::new(1.0, delta, n).unwrap();
    (p, LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reversing_asymmetry_conjugates_periodic_spectrum(delta in -0.95f64..0.95, n in 3usize..40) {
        let a = pbc_spectrum_hn(&HatanoNelsonParams::new(1.0, delta, n).unwrap()).unwrap();
        let b = pbc_spectrum_hn(&HatanoNelsonParams::new(1.0, -delta, n).unwrap()).unwrap();
        let conj: Vec<C64> = a.eigenvalues().iter().map(|z| z.conj()).collect();
        prop_assert!(match_spectra(&conj, b.eigenvalues(), 1e-13).is_ok());
    }

    #[test]
    fn open_spectrum_is_even_in_asymmetry(delta in -0.95f64..0.95, n in 3usize..40) {
        let a = obc_spectrum_hn(&HatanoNelsonParams::new(1.0, delta, n).unwrap()).unwrap();
        let b = obc_spectrum_hn(&HatanoNelsonParams::new(1.0, -delta, n).unwrap()).unwrap();
        prop_assert_eq!(a.eigenvalues(), b.eigenvalues());
    }

    #[test]
    fn periodic_resolvent_is_translation_covariant(
        delta in -0.8f64..0.8, n in 4usize..24, m in 0usize..24, k in 0usize..24, shift in 1usize..24,
        re in -3.0f64..3.0, im in 0.1f64..2.0,
    ) {
        let (_, model) = ring(delta, n);
        let pg = PbcGreens::new(&model).unwrap();
        let z = C64::new(re, im);
        let (m, k) = (m % n, k % n);
        let a = pg.element(z, m, k).unwrap();
        let b = pg.element(z, (m + shift) % n, (k + shift) % n).unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn dyson_updates_commute(
        delta in -0.6f64..0.6, e1 in 0.1f64..5.0, e2 in 0.1f64..5.0, re in -2.0f64..2.0, im in 0.2f64..1.5,
    ) {
        let (_, model) = ring(delta, 9);
        let pg = PbcGreens::new(&model).unwrap();
        let sites: Vec<Site> = (1..=9).map(|c| Site::new(c, 0)).collect();
        let z = C64::new(re, im);
        let g = pg.evaluate(z, &sites).unwrap();
        let (s1, s2) = (Site::new(2, 0), Site::new(6, 0));
        let forward = dyson_update(&dyson_update(&g, s1, e1).unwrap(), s2, e2).unwrap();
        let backward = dyson_update(&dyson_update(&g, s2, e2).unwrap(), s1, e1).unwrap();
        prop_assert!(max_abs_diff(&forward.matrix, &backward.matrix) < 1e-11);

        let set = ImpuritySet::new(vec![Impurity { site: s1, strength: e1 }, Impurity { site: s2, strength: e2 }]).unwrap();
        let dense = numeric_greens(&model, &set, z, &sites).unwrap();
        prop_assert!(max_abs_diff(&dress(&g, &set).unwrap().matrix, &dense.matrix) < 1e-10);
    }

    #[test]
    fn pole_roots_are_impurity_eigenvalues(delta in -0.7f64..0.7, n in 3usize..16, eps in 0.01f64..50.0) {
        let (_, model) = ring(delta, n);
        let site = model.last_site();
        let roots = PoleProblem::new(&model, site).unwrap().solve(eps, None).unwrap();
        let eig = dense_eig(&impurity_matrix(&model, site, eps).unwrap()).unwrap();
        let tol = (0..eig.len()).map(|k| eig.tolerance_for(k, 1e-8).unwrap()).fold(0.0, f64::max);
        prop_assert!(match_spectra(&roots.roots, &eig.eigenvalues, tol).is_ok());
    }

    #[test]
    fn green_states_match_closed_form(delta in -0.9f64..0.9, n in 3usize..60, q_frac in 0.0f64..1.0) {
        let (p, model) = ring(delta, n);
        let q = 1 + ((n - 1) as f64 * q_frac) as usize % (n - 1);
        let closed = hn_skin_state_closed(&p, q).unwrap();
        let st = obc_eigenstates_green(&model.opened().unwrap(), C64::new(closed.energy, 0.0)).unwrap();
        let right: ndarray::Array1<C64> = closed.right.iter().map(|&x| C64::new(x, 0.0)).collect();
        let left: ndarray::Array1<C64> = closed.left.iter().map(|&x| C64::new(x, 0.0)).collect();
        prop_assert!(overlap(st.right.view(), right.view()) > 1.0 - 1e-9);
        prop_assert!(overlap(st.left.view(), left.view()) > 1.0 - 1e-9);
    }

    #[test]
    fn binormalization_is_idempotent_and_complete(delta in -0.5f64..0.5, n in 3usize..24) {
        let (_, model) = ring(delta, n);
        let h = build_dense(&model.opened().unwrap(), &ImpuritySet::empty()).unwrap();
        let once = binormalize(&dense_eig(&h).unwrap().eigenpairs()).unwrap();
        let twice = binormalize(&once).unwrap();
        prop_assert!(max_abs_diff(&once.right, &twice.right) < 1e-12);
        prop_assert!(once.completeness_residual() < 1e-8);
    }

    #[test]
    fn vicinity_is_bounded(t1 in 0.5f64..2.0, t2 in 0.05f64..3.0, g_frac in 0.0f64..0.95, n in 4usize..30) {
        let p = SshParams::new(t1, t2, 2.0 * t1 * g_frac, n).unwrap();
        for gauge in [Gauge::LargestReal, Gauge::None] {
            let v = vicinity(&p, gauge, StateSource::ClosedForm).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{}", v);
        }
    }
}
