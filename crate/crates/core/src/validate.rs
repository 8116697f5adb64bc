//! Cross-checks of the analytic and Green's-function results against the dense eigensolver.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::Serialize;

use crate::analysis::{Table, Value};
use crate::closed_form::{
    hn_left_norm_constant, hn_norm_constant, ssh_closed_eigenstates, ssh_proportionality_constants,
    ssh_similarity_transform, Side, SshState,
};
use crate::error::{Error, Result};
use crate::greens::{greens_hn, PbcGreens};
use crate::linalg::{eigen_residual, left_eigen_residual, overlap, C64};
use crate::model::{build_dense, pbc_spectrum, Boundary, HatanoNelsonParams, ImpuritySet, LatticeModel, Site, SshParams};
use crate::obc::{impurity_matrix, obc_eigenstates_green_all, obc_spectrum_hn, obc_spectrum_ssh, GreenRoute, PoleProblem};
use crate::oracle::{dense_eig, match_spectra, MAX_RELAXED_TOLERANCE};
use crate::spectrum::ComplexSpectrum;

/// One named comparison: passes when `value <= tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub parameters: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, parameters: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_owned(),
            parameters: parameters.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new("validate", &["check", "parameters", "value", "tolerance", "passed"]);
    for c in checks {
        t.push(vec![
            c.name.as_str().into(),
            c.parameters.as_str().into(),
            c.value.into(),
            c.tolerance.into(),
            Value::Int(c.passed as i64),
        ]);
    }
    t
}

/// Distance between an analytic spectrum and the dense eigenvalues of `h`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumAgreement {
    pub max_distance: f64,
    /// Largest ratio of a matched distance to its conditioning-relaxed tolerance.
    pub max_ratio: f64,
    /// Largest relaxed tolerance used.
    pub tolerance: f64,
}

pub fn spectrum_agreement(analytic: &[C64], h: &Array2<C64>, base: f64) -> Result<SpectrumAgreement> {
    let eig = dense_eig(h)?;
    let report = match_spectra(analytic, &eig.eigenvalues, f64::INFINITY)?;
    let mut max_ratio = 0.0f64;
    let mut tolerance = base;
    for (i, &j) in report.pairs.iter().enumerate() {
        // defective eigenvalues have unbounded condition numbers; cap the relaxation
        let tol = eig.tolerance_for(j, base).unwrap_or(MAX_RELAXED_TOLERANCE);
        tolerance = tolerance.max(tol);
        max_ratio = max_ratio.max(report.distances[i] / tol);
    }
    Ok(SpectrumAgreement {
        max_distance: report.max_distance,
        max_ratio,
        tolerance,
    })
}

/// Agreement of Green's-function eigenstates with dense eigenvectors.
///
/// Non-degenerate eigenvalues compare states up to scale; degenerate ones,
/// whose eigenvectors are not unique, are checked by their residual.
#[derive(Debug, Clone, Serialize)]
pub struct StateAgreement {
    pub min_overlap: f64,
    pub overlap_checked: usize,
    pub max_residual: f64,
    pub residual_checked: usize,
    pub contour_states: usize,
}

pub fn green_state_agreement(opened: &LatticeModel, spectrum: &ComplexSpectrum) -> Result<StateAgreement> {
    let states = obc_eigenstates_green_all(opened, spectrum)?;
    let h = build_dense(opened, &ImpuritySet::empty())?;
    let eig = dense_eig(&h)?;
    let mut out = StateAgreement {
        min_overlap: 1.0,
        overlap_checked: 0,
        max_residual: 0.0,
        residual_checked: 0,
        contour_states: states.iter().filter(|s| s.route == GreenRoute::Contour).count(),
    };
    for st in &states {
        let k = eig.nearest(st.energy);
        if eig.degenerate[k] {
            let res = eigen_residual(&h, st.energy, st.right.view()).max(left_eigen_residual(&h, st.energy, st.left.view()));
            out.max_residual = out.max_residual.max(res / opened.energy_scale());
            out.residual_checked += 1;
        } else {
            let o = overlap(st.right.view(), eig.right.column(k)).min(overlap(st.left.view(), eig.left.column(k)));
            out.min_overlap = out.min_overlap.min(o);
            out.overlap_checked += 1;
        }
    }
    Ok(out)
}

/// Largest deviation of `G(n, N; E_q)` from `A_q rho^n sin(k_q n / 2)` and of
/// `G(N, n; E_q)` from its left analogue, relative to `max(1, |lhs|, |rhs|)`.
///
/// Momenta whose constant is singular (even `q` at `delta = 0`) are skipped.
pub fn hn_summation_rule_deviation(p: &HatanoNelsonParams) -> Result<f64> {
    let rho = p.rho();
    let mut worst = 0.0f64;
    for q in 1..p.n {
        let (Ok(a), Ok(al)) = (hn_norm_constant(p, q), hn_left_norm_constant(p, q)) else {
            continue;
        };
        let half_k = PI * q as f64 / p.n as f64;
        let e = C64::new(2.0 * p.j * (1.0 - p.delta * p.delta).sqrt() * half_k.cos(), 0.0);
        for n in 1..p.n {
            let s = (half_k * n as f64).sin();
            for (lhs, rhs) in [
                (greens_hn(n, p.n, e, p)?, a * rho.powi(n as i32) * s),
                (greens_hn(p.n, n, e, p)?, al * rho.powi(-(n as i32)) * s),
            ] {
                let dev = (lhs - rhs).norm() / lhs.norm().max(rhs.abs()).max(1.0);
                worst = worst.max(dev);
            }
        }
    }
    Ok(worst)
}

/// Largest entrywise deviation of the Green's-function columns and rows at the
/// vacancy from the proportionality constants times the closed-form states.
pub fn ssh_constant_deviation(p: &SshParams) -> Result<f64> {
    let ring = LatticeModel::ssh(p, Boundary::Periodic)?;
    let pg = PbcGreens::new(&ring)?;
    let s = ring.site_index(ring.last_site())?;
    let active: Vec<usize> = (0..s).collect();
    let mut worst = 0.0f64;
    let mut which = vec![SshState::Zero];
    for q in 1..p.n {
        for band in [crate::spectrum::Band::Upper, crate::spectrum::Band::Lower] {
            which.push(SshState::Band { q, band });
        }
    }
    for w in which {
        let e = crate::closed_form::ssh_open_energy(p, w);
        let (Ok(k), Ok(kl)) = (
            ssh_proportionality_constants(p, w, Side::Right),
            ssh_proportionality_constants(p, w, Side::Left),
        ) else {
            continue;
        };
        let (right, left) = ssh_closed_eigenstates(p, w)?;
        let mut idx = active.clone();
        idx.push(s);
        let Ok(g) = pg.block(e, &idx) else {
            continue;
        };
        for x in 0..active.len() {
            for (lhs, rhs) in [(g[[x, s]], k * right[x]), (g[[s, x]], kl * left[x])] {
                let dev = (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0);
                worst = worst.max(dev);
            }
        }
    }
    Ok(worst)
}

/// Hermiticity defect of `W^{-1} H W` and its spectral distance to `H` (open SSH lattice).
pub fn ssh_similarity_defects(p: &SshParams) -> Result<(Option<f64>, f64)> {
    let t = ssh_similarity_transform(p)?;
    let opened = LatticeModel::ssh(p, Boundary::Periodic)?.opened()?;
    let h = build_dense(&opened, &ImpuritySet::empty())?;
    let n = h.nrows();
    let image = Array2::from_shape_fn((n, n), |(i, j)| h[[i, j]] * t.w[j] / t.w[i]);
    let hermiticity = t.hermitian_image.then(|| {
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                m = m.max((image[[i, j]] - image[[j, i]].conj()).norm());
            }
        }
        m
    });
    let a = dense_eig(&h)?;
    let b = dense_eig(&image)?;
    let dist = match_spectra(&a.eigenvalues, &b.eigenvalues, f64::INFINITY)?.max_distance;
    Ok((hermiticity, dist))
}

/// Magnitudes of consecutive A-site ratios of the right and left zero modes.
pub fn zero_mode_ratios(right: &[C64], left: &[C64], n_cells: usize) -> (f64, f64) {
    let fit = |v: &[C64]| {
        let a: Vec<f64> = (0..n_cells).map(|n| v[2 * n].norm()).collect();
        let m = (n_cells - 1) as f64;
        let mean_log = (1..n_cells).map(|n| (a[n] / a[n - 1]).ln()).sum::<f64>() / m;
        mean_log.exp()
    };
    (fit(right), fit(left))
}

pub fn validate_hn(p: &HatanoNelsonParams, epsilon: Option<f64>) -> Result<Vec<Check>> {
    let params = format!("J={} delta={} N={}", p.j, p.delta, p.n);
    let ring = LatticeModel::hatano_nelson(p, Boundary::Periodic)?;
    let opened = ring.opened()?;
    let mut out = Vec::new();

    let pbc = pbc_spectrum(&ring)?;
    let agree = spectrum_agreement(pbc.eigenvalues(), &build_dense(&ring, &ImpuritySet::empty())?, 1e-10)?;
    out.push(Check::new("pbc_spectrum", params.as_str(), agree.max_ratio, 1.0));

    let obc = obc_spectrum_hn(p)?;
    let agree = spectrum_agreement(obc.eigenvalues(), &build_dense(&opened, &ImpuritySet::empty())?, 1e-9)?;
    out.push(Check::new("obc_spectrum", params.as_str(), agree.max_ratio, 1.0));

    let states = green_state_agreement(&opened, &obc)?;
    out.push(Check::new("green_states_overlap", params.as_str(), 1.0 - states.min_overlap, 1e-8));
    out.push(Check::new("green_states_residual", params.as_str(), states.max_residual, 1e-8));

    if p.delta.abs() < 1.0 {
        out.push(Check::new("summation_rule", params.as_str(), hn_summation_rule_deviation(p)?, 1e-10));
    }

    if let Some(eps) = epsilon {
        out.extend(pole_check(&ring, ring.last_site(), eps, &params)?);
    }
    Ok(out)
}

pub fn validate_ssh(p: &SshParams, epsilon: Option<f64>) -> Result<Vec<Check>> {
    let params = format!("t1={} t2={} gamma={} N={}", p.t1, p.t2, p.gamma, p.n);
    let ring = LatticeModel::ssh(p, Boundary::Periodic)?;
    let opened = ring.opened()?;
    let mut out = Vec::new();

    let obc = obc_spectrum_ssh(p)?;
    let h = build_dense(&opened, &ImpuritySet::empty())?;
    let agree = spectrum_agreement(obc.eigenvalues(), &h, 1e-8)?;
    out.push(Check::new("obc_spectrum", params.as_str(), agree.max_ratio, 1.0));

    let states = green_state_agreement(&opened, &obc)?;
    out.push(Check::new("green_states_overlap", params.as_str(), 1.0 - states.min_overlap, 1e-8));
    out.push(Check::new("green_states_residual", params.as_str(), states.max_residual, 1e-8));

    // the open eigenvalues are zeros of G(s, s) wherever it is regular there
    let pg = PbcGreens::new(&ring)?;
    let s = ring.site_index(ring.last_site())?;
    let scale = ring.energy_scale();
    let diag = obc
        .eigenvalues()
        .iter()
        .filter_map(|e| pg.element(*e, s, s).ok())
        .map(|g| g.norm() * scale)
        .fold(0.0, f64::max);
    out.push(Check::new("vacancy_diagonal_zero", params.as_str(), diag, 1e-8));

    if p.c().norm() > 0.0 && p.r().map(|r| r.norm() > 0.0).unwrap_or(false) {
        out.push(Check::new("proportionality_constants", params.as_str(), ssh_constant_deviation(p)?, 1e-9));
        let (herm, iso) = ssh_similarity_defects(p)?;
        if let Some(hd) = herm {
            out.push(Check::new("similarity_hermitian", params.as_str(), hd, 1e-10));
        }
        out.push(Check::new("similarity_isospectral", params.as_str(), iso, 1e-9));

        let (right, left) = ssh_closed_eigenstates(p, SshState::Zero)?;
        let (rr, rl) = zero_mode_ratios(right.as_slice().unwrap(), left.as_slice().unwrap(), p.n);
        let er = p.backward_intra().abs() / p.t2;
        let el = p.forward_intra().abs() / p.t2;
        out.push(Check::new("zero_mode_ratio_right", params.as_str(), (rr - er).abs(), 1e-6));
        out.push(Check::new("zero_mode_ratio_left", params.as_str(), (rl - el).abs(), 1e-6));
    }
    if let Some(eps) = epsilon {
        out.extend(pole_check(&ring, ring.last_site(), eps, &params)?);
    }
    Ok(out)
}

fn pole_check(ring: &LatticeModel, site: Site, eps: f64, params: &str) -> Result<Option<Check>> {
    let problem = match PoleProblem::new(ring, site) {
        Ok(p) => p,
        Err(Error::DegenerateBloch(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let roots = problem.solve(eps, None)?;
    let h = impurity_matrix(ring, site, eps)?;
    let agree = spectrum_agreement(&roots.roots, &h, 1e-8)?;
    Ok(Some(Check::new("impurity_poles", format!("{params} eps={eps}"), agree.max_ratio, 1.0)))
}
