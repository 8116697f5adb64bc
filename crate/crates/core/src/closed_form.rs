//! Explicit skin states, edge states, their normalization constants and the
//! diagonal similarity that maps the open non-Hermitian SSH chain to a Hermitian one.

use std::f64::consts::PI;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, ONE, ZERO};
use crate::model::{HatanoNelsonParams, SshParams};
use crate::spectrum::Band;

/// Relative size below which a closed-form denominator counts as vanishing.
const SINGULAR_DENOMINATOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

/// Open Hatano-Nelson state `q` on sites `n = 1..N-1`.
#[derive(Debug, Clone, Serialize)]
pub struct SkinStateHn {
    pub q: usize,
    pub rho: f64,
    pub energy: f64,
    /// `rho^n sin(k_q n / 2)`
    pub right: Vec<f64>,
    /// `rho^{-n} sin(k_q n / 2)`
    pub left: Vec<f64>,
    /// `A_q(rho)`; `None` where the constant is singular (even `q` at `rho = 1`).
    pub norm_constant: Option<f64>,
}

fn check_open_index(q: usize, n: usize) -> Result<()> {
    if q == 0 || q >= n {
        return Err(Error::InvalidParameter(format!("open-lattice index q = {q} outside 1..{n}")));
    }
    Ok(())
}

fn check_skin_params(p: &HatanoNelsonParams) -> Result<()> {
    p.validate()?;
    if p.delta.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "skin states need |delta| < 1, got {}",
            p.delta
        )));
    }
    Ok(())
}

pub fn hn_skin_state_closed(p: &HatanoNelsonParams, q: usize) -> Result<SkinStateHn> {
    check_skin_params(p)?;
    check_open_index(q, p.n)?;
    let rho = p.rho();
    let half_k = 0.5 * p.momentum(q);
    let sites = 1..p.n;
    let right = sites.clone().map(|n| rho.powi(n as i32) * (half_k * n as f64).sin()).collect();
    let left = sites.map(|n| rho.powi(-(n as i32)) * (half_k * n as f64).sin()).collect();
    Ok(SkinStateHn {
        q,
        rho,
        energy: 2.0 * p.j * (1.0 - p.delta * p.delta).sqrt() * half_k.cos(),
        right,
        left,
        norm_constant: hn_norm_constant(p, q).ok(),
    })
}

/// `A_q = (1 + rho^2) / (2 rho J (-1 + (-1)^q rho^N) sin(k_q / 2))`.
///
/// Links the periodic Green's function sum at an open eigenvalue to the skin state:
/// `G(n, N; E_q) = A_q rho^n sin(k_q n / 2)`; the left version uses `rho -> 1/rho`.
pub fn hn_norm_constant(p: &HatanoNelsonParams, q: usize) -> Result<f64> {
    hn_norm_constant_with(p, q, p.rho_checked()?)
}

/// Left-state constant, `A_q` evaluated at `1 / rho`.
pub fn hn_left_norm_constant(p: &HatanoNelsonParams, q: usize) -> Result<f64> {
    hn_norm_constant_with(p, q, 1.0 / p.rho_checked()?)
}

fn hn_norm_constant_with(p: &HatanoNelsonParams, q: usize, rho: f64) -> Result<f64> {
    check_open_index(q, p.n)?;
    let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
    let bracket = -1.0 + sign * rho.powi(p.n as i32);
    let half_k = PI * q as f64 / p.n as f64;
    let den = 2.0 * rho * p.j * bracket * half_k.sin();
    if bracket.abs() <= SINGULAR_DENOMINATOR * rho.powi(p.n as i32).max(1.0) || den == 0.0 {
        return Err(Error::DegenerateNormalization(format!(
            "A_q denominator vanishes for q = {q}, rho = {rho}"
        )));
    }
    Ok((1.0 + rho * rho) / den)
}

impl HatanoNelsonParams {
    fn rho_checked(&self) -> Result<f64> {
        check_skin_params(self)?;
        Ok(self.rho())
    }
}

/// Diagonal similarity `W` for the open SSH lattice with a dangling last A site.
///
/// Over the ordering `(A_1, B_1, ..., A_N)` the diagonal is `{1, r, r, r^2, r^2, ...}`,
/// i.e. `A_n -> r^{n-1}`, `B_n -> r^n`, and `W^{-1} H W` has hoppings `c` and `d`.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityTransform {
    pub w: Vec<C64>,
    pub r: C64,
    pub c: C64,
    pub d: f64,
    /// `t1 - gamma/2 > 0` (and `t1 + gamma/2 > 0`): `r` is real and the image Hermitian.
    pub hermitian_image: bool,
}

pub fn ssh_similarity_transform(p: &SshParams) -> Result<SimilarityTransform> {
    p.validate()?;
    let r = p.r()?;
    if r.norm() == 0.0 {
        return Err(Error::Domain("similarity transform is singular for t1 = gamma/2 (r = 0)".into()));
    }
    let dim = 2 * p.n - 1;
    let w = (0..dim).map(|j| r.powu(((j + 1) / 2) as u32)).collect();
    Ok(SimilarityTransform {
        w,
        r,
        c: p.c(),
        d: p.d(),
        hermitian_image: p.backward_intra() > 0.0 && p.forward_intra() > 0.0,
    })
}

/// Which open SSH eigenstate to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SshState {
    Zero,
    Band { q: usize, band: Band },
}

/// Open SSH eigenvalue of a closed-form state.
pub fn ssh_open_energy(p: &SshParams, which: SshState) -> C64 {
    match which {
        SshState::Zero => ZERO,
        SshState::Band { q, band } => {
            let c = p.c();
            let d = p.d();
            let half_k = PI * q as f64 / p.n as f64;
            band.sign() * (c * c + d * d + 2.0 * c * d * half_k.cos()).sqrt()
        }
    }
}

/// Right and left (bra) amplitudes of an open SSH eigenstate over `(A_1, B_1, ..., A_N)`.
///
/// Zero mode: `A_n = (-c/d)^n r^{n-1}`, `B_n = 0`.
/// Band state: `A_n = alpha_n r^{n-1}`, `B_n = E beta_n r^n` with
/// `alpha_n = (d/c) sin((n-1)k/2) + sin(nk/2)` and `beta_n = sin(nk/2) / c`.
/// Left states replace `r` by `1/r`.
pub fn ssh_closed_eigenstates(p: &SshParams, which: SshState) -> Result<(Array1<C64>, Array1<C64>)> {
    p.validate()?;
    let r = p.r()?;
    if r.norm() == 0.0 || !r.norm().is_finite() {
        return Err(Error::Domain(format!("similarity ratio r = {r} is singular")));
    }
    let c = p.c();
    let d = p.d();
    let n_cells = p.n;
    let dim = 2 * n_cells - 1;
    let mut right = Array1::zeros(dim);
    let mut left = Array1::zeros(dim);
    let rinv = ONE / r;
    match which {
        SshState::Zero => {
            if d == 0.0 {
                return Err(Error::Domain("zero mode undefined for t2 = 0".into()));
            }
            let ratio = -c / d;
            for n in 1..=n_cells {
                let base = ratio.powu(n as u32);
                right[2 * (n - 1)] = base * r.powu(n as u32 - 1);
                left[2 * (n - 1)] = base * rinv.powu(n as u32 - 1);
            }
        }
        SshState::Band { q, band: _ } => {
            check_open_index(q, n_cells)?;
            if c.norm() == 0.0 {
                return Err(Error::DegenerateNormalization(
                    "band states are singular for c = 0 (gamma = 2 t1, flat bands)".into(),
                ));
            }
            let e = ssh_open_energy(p, which);
            let half_k = PI * q as f64 / n_cells as f64;
            for n in 1..=n_cells {
                let nf = n as f64;
                let alpha = d / c * ((nf - 1.0) * half_k).sin() + (nf * half_k).sin();
                right[2 * (n - 1)] = alpha * r.powu(n as u32 - 1);
                left[2 * (n - 1)] = alpha * rinv.powu(n as u32 - 1);
                if n < n_cells {
                    let beta = (nf * half_k).sin() / c;
                    right[2 * n - 1] = e * beta * r.powu(n as u32);
                    left[2 * n - 1] = e * beta * rinv.powu(n as u32);
                }
            }
        }
    }
    Ok((right, left))
}

/// Constants linking the periodic Green's function to the closed-form states:
/// `G((n, a), (N, B); E) = K * closed_right` and `G((N, B), (n, a); E) = K_left * closed_left`.
///
/// `K0 = [c - c (-c r / d)^N]^{-1}` and `K = [d (-1 + (-1)^q r^N) sin(k_q / 2)]^{-1}`;
/// the left versions use `r -> 1/r`.
pub fn ssh_proportionality_constants(p: &SshParams, which: SshState, side: Side) -> Result<C64> {
    p.validate()?;
    let mut r = p.r()?;
    if side == Side::Left {
        if r.norm() == 0.0 {
            return Err(Error::DegenerateNormalization("left constant needs r != 0".into()));
        }
        r = ONE / r;
    }
    let c = p.c();
    let d = p.d();
    let n = p.n as u32;
    let den = match which {
        SshState::Zero => {
            let x = c * (-c * r / d).powu(n);
            let den = c - x;
            if den.norm() <= SINGULAR_DENOMINATOR * c.norm().max(x.norm()) {
                return Err(Error::DegenerateNormalization(format!("K0 denominator vanishes (c = {c}, r = {r})")));
            }
            den
        }
        SshState::Band { q, .. } => {
            check_open_index(q, p.n)?;
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            let rn = r.powu(n);
            let bracket = -ONE + sign * rn;
            if bracket.norm() <= SINGULAR_DENOMINATOR * rn.norm().max(1.0) {
                return Err(Error::DegenerateNormalization(format!(
                    "K denominator vanishes for q = {q} (r^N = {rn})"
                )));
            }
            d * bracket * (PI * q as f64 / p.n as f64).sin()
        }
    };
    if den == ZERO {
        return Err(Error::DegenerateNormalization("vanishing denominator".into()));
    }
    Ok(ONE / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigen_residual;
    use crate::model::{build_dense, Boundary, ImpuritySet, LatticeModel};

    #[test]
    fn hermitian_skin_state_is_standing_wave() {
        let p = HatanoNelsonParams::new(1.0, 0.0, 10).unwrap();
        let s = hn_skin_state_closed(&p, 3).unwrap();
        assert_eq!(s.rho, 1.0);
        for (i, a) in s.right.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((a - (0.3 * PI * n).sin()).abs() < 1e-15);
        }
        assert!(s.norm_constant.is_some());
        assert!(hn_norm_constant(&p, 2).is_err());
    }

    #[test]
    fn skin_ratio_for_small_asymmetry() {
        let p = HatanoNelsonParams::new(1.0, 0.05, 100).unwrap();
        let s = hn_skin_state_closed(&p, 1).unwrap();
        assert!((s.rho - (1.05f64 / 0.95).sqrt()).abs() < 1e-15);
        assert!((s.rho - 1.0513).abs() < 1e-4);
        for (i, (r, l)) in s.right.iter().zip(&s.left).enumerate() {
            let sn = (PI * (i + 1) as f64 / 100.0).sin();
            assert!(((r * l).abs() - sn * sn).abs() < 1e-13);
        }
    }

    #[test]
    fn trivial_similarity_for_hermitian_chain() {
        let p = SshParams::new(1.0, 2.0, 0.0, 5).unwrap();
        let t = ssh_similarity_transform(&p).unwrap();
        assert!(t.w.iter().all(|w| (w - ONE).norm() < 1e-15));
        assert!((t.c - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(t.hermitian_image);
    }

    #[test]
    fn similarity_ratio_for_unit_gamma() {
        let p = SshParams::new(1.0, 2.0, 1.0, 5).unwrap();
        let t = ssh_similarity_transform(&p).unwrap();
        assert!((t.r.re - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((t.c.re - 0.75f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.w.len(), 9);
        assert!((t.w[3] - t.r * t.r).norm() < 1e-15);
        assert!((t.w[4] - t.r * t.r).norm() < 1e-15);
    }

    #[test]
    fn closed_states_solve_open_ssh() {
        let p = SshParams::new(1.0, 2.0, 1.0, 20).unwrap();
        let m = LatticeModel::ssh(&p, Boundary::Periodic).unwrap().opened().unwrap();
        let h = build_dense(&m, &ImpuritySet::empty()).unwrap();
        let ht = h.t().to_owned();
        let mut states = vec![SshState::Zero];
        for q in 1..20 {
            states.push(SshState::Band { q, band: Band::Upper });
            states.push(SshState::Band { q, band: Band::Lower });
        }
        for which in states {
            let e = ssh_open_energy(&p, which);
            let (r, l) = ssh_closed_eigenstates(&p, which).unwrap();
            assert!(eigen_residual(&h, e, r.view()) < 1e-12, "{which:?}");
            assert!(eigen_residual(&ht, e, l.view()) < 1e-12, "{which:?}");
        }
    }

    #[test]
    fn flat_band_case_is_reported() {
        let p = SshParams::new(1.0, 2.0, 2.0, 8).unwrap();
        assert!(matches!(
            ssh_closed_eigenstates(&p, SshState::Band { q: 1, band: Band::Upper }),
            Err(Error::Domain(_)) | Err(Error::DegenerateNormalization(_))
        ));
    }

    #[test]
    fn hermitian_constants_are_singular_for_even_q() {
        let p = SshParams::new(1.0, 2.0, 0.0, 8).unwrap();
        let which = |q| SshState::Band { q, band: Band::Upper };
        assert!(ssh_proportionality_constants(&p, which(1), Side::Right).is_ok());
        assert!(ssh_proportionality_constants(&p, which(2), Side::Right).is_err());
    }
}
