use nhskin::analysis::{figure_data, linear_grid, log_grid, Figure, FigureParams};
use nhskin::linalg::{overlap, C64};
use nhskin::model::{build_dense, Boundary, HatanoNelsonParams, ImpuritySet, LatticeModel, SshParams};
use nhskin::obc::{epsilon_sweep, obc_eigenstates_green_all, obc_spectrum_hn, obc_spectrum_ssh, GreenRoute};
use nhskin::oracle::dense_eig;
use nhskin::validate::{validate_hn, validate_ssh};

#[test]
fn vacancy_is_the_infinite_potential_limit() {
    let p = HatanoNelsonParams::new(1.0, 0.3, 12).unwrap();
    let ring = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap();
    let sweep = epsilon_sweep(&ring, ring.last_site(), &log_grid(1e-1, 1e9, 60)).unwrap();
    let mut last: Vec<C64> = sweep.spectra.last().unwrap().eigenvalues().to_vec();
    last.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let open = obc_spectrum_hn(&p).unwrap();
    let rep = nhskin::oracle::match_spectra(&last[1..], open.eigenvalues(), 1e-7).unwrap();
    assert!(rep.max_distance < 1e-7);
    assert!(sweep.ep_count() >= 1);
}

#[test]
fn ssh_states_through_exceptional_bloch_point() {
    // t1 + gamma/2 = t2 makes the Bloch matrix defective at k = pi
    let p = SshParams::new(1.0, 2.0, 2.0, 10).unwrap();
    let opened = LatticeModel::ssh(&p, Boundary::Periodic).unwrap().opened().unwrap();
    let spec = obc_spectrum_ssh(&p).unwrap();
    let states = obc_eigenstates_green_all(&opened, &spec).unwrap();
    assert!(states.iter().any(|s| s.route == GreenRoute::Contour));
    assert!(states.iter().all(|s| s.residual < 1e-8));
}

#[test]
fn hermitian_ssh_zero_mode_matches_dense_vector() {
    let p = SshParams::new(1.0, 1.0, 0.0, 8).unwrap();
    let opened = LatticeModel::ssh(&p, Boundary::Periodic).unwrap().opened().unwrap();
    let spec = obc_spectrum_ssh(&p).unwrap();
    let states = obc_eigenstates_green_all(&opened, &spec).unwrap();
    let eig = dense_eig(&build_dense(&opened, &ImpuritySet::empty()).unwrap()).unwrap();
    let zero = states.last().unwrap();
    assert_eq!(zero.route, GreenRoute::Contour);
    let k = eig.nearest(zero.energy);
    assert!(overlap(zero.right.view(), eig.right.column(k)) > 1.0 - 1e-10);
}

#[test]
fn validation_tables_pass_for_reference_models() {
    for c in validate_hn(&HatanoNelsonParams::new(1.0, 0.05, 30).unwrap(), Some(3.0)).unwrap() {
        assert!(c.passed, "{c:?}");
    }
    for t in [(1.0, 2.0, 1.0), (2.0, 1.0, 1.0), (1.0, 1.0, 0.0), (1.0, 2.0, 2.0)] {
        for c in validate_ssh(&SshParams::new(t.0, t.1, t.2, 8).unwrap(), None).unwrap() {
            assert!(c.passed, "{t:?}: {c:?}");
        }
    }
}

#[test]
fn figure_tables_have_expected_shape() {
    let fig3 = figure_data(
        Figure::Fig3,
        &FigureParams {
            n_cells: Some(8),
            epsilon_grid: Some(log_grid(1e-2, 1e3, 20)),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(fig3.rows.len(), 8 * 20);
    assert_eq!(fig3.columns, ["epsilon", "track", "re_energy", "im_energy", "ep_flags"]);

    let fig4 = figure_data(
        Figure::Fig4,
        &FigureParams {
            sizes: Some(vec![20, 40]),
            t2_grid: Some(linear_grid(0.1, 1.5, 8)),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(fig4.rows.len(), 16);
}
