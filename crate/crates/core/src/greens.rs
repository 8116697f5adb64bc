//! Lattice resolvents `G(z) = (z - H)^{-1}` of periodic lattices and their
//! impurity dressing through the rank-one Dyson update.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{csum, max_abs, resolvent, CompensatedSum, Lu, C64, ONE, ZERO};
use crate::oracle::DEGENERACY_TOLERANCE;
use crate::model::{
    bloch_eigen, build_dense, pbc_bloch_ssh, vacancy_reduce, BlochEigen, HatanoNelsonParams, ImpuritySet,
    LatticeModel, Site, SshParams,
};

/// Relative distance to a periodic eigenvalue below which `z` counts as a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;

fn pole_check(z: C64, q: usize, energy: C64) -> Result<()> {
    if (z - energy).norm() < POLE_TOLERANCE * energy.norm().max(1.0) {
        return Err(Error::Pole { z, q, energy });
    }
    Ok(())
}

/// How a [`GreensEvaluation`] was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SpectralSum,
    DysonDressed(ImpuritySet),
    NumericInverse,
}

/// Resolvent block `matrix[i, j] = G(sites[i], sites[j]; z)`.
#[derive(Debug, Clone, Serialize)]
pub struct GreensEvaluation {
    pub z: C64,
    pub sites: Vec<Site>,
    pub matrix: Array2<C64>,
    pub provenance: Provenance,
}

impl GreensEvaluation {
    pub fn position(&self, site: Site) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    pub fn get(&self, a: Site, b: Site) -> Option<C64> {
        Some(self.matrix[[self.position(a)?, self.position(b)?]])
    }
}

/// `<m|G|n>` of the periodic Hatano-Nelson ring as the spectral sum over `q = 1..=N`.
pub fn greens_hn(m: usize, n: usize, z: C64, p: &HatanoNelsonParams) -> Result<C64> {
    p.validate()?;
    for site in [m, n] {
        if site == 0 || site > p.n {
            return Err(Error::IndexOutOfRange { index: site, len: p.n });
        }
    }
    let lag = m as f64 - n as f64;
    let mut acc = CompensatedSum::new();
    for q in 1..=p.n {
        let k = p.momentum(q);
        let e = p.band(k);
        pole_check(z, q, e)?;
        acc.add(C64::from_polar(1.0, k * lag) / (z - e));
    }
    Ok(acc.value() / p.n as f64)
}

/// `G_{mn}^{ab}(z)` of the periodic SSH lattice from binormalized Bloch eigenvectors.
///
/// Fails if any momentum is an exceptional point of the Bloch matrix.
pub fn greens_ssh(m: usize, n: usize, alpha: usize, beta: usize, z: C64, p: &SshParams) -> Result<C64> {
    p.validate()?;
    for cell in [m, n] {
        if cell == 0 || cell > p.n {
            return Err(Error::IndexOutOfRange { index: cell, len: p.n });
        }
    }
    for s in [alpha, beta] {
        if s > 1 {
            return Err(Error::IndexOutOfRange { index: s, len: 2 });
        }
    }
    let blochs: Vec<_> = (1..=p.n).map(|q| pbc_bloch_ssh(p, q)).collect::<Result<_>>()?;
    let degenerate: Vec<usize> = blochs.iter().filter(|b| b.degenerate).map(|b| b.q).collect();
    if !degenerate.is_empty() {
        return Err(Error::DegenerateBloch(degenerate));
    }
    let lag = m as f64 - n as f64;
    let mut acc = CompensatedSum::new();
    for b in &blochs {
        let (r, l) = (b.right.unwrap(), b.left.unwrap());
        let phase = C64::from_polar(1.0, b.k * lag);
        for s in 0..2 {
            pole_check(z, b.q, b.eigenvalues[s])?;
            acc.add(phase * r[s][alpha] * l[s][beta] / (z - b.eigenvalues[s]));
        }
    }
    Ok(acc.value() / p.n as f64)
}

/// Precomputed Bloch data of a translation-invariant lattice for repeated resolvent evaluation.
///
/// Non-degenerate momenta use the spectral decomposition; exceptional Bloch
/// points use the direct inverse of `z - H(k)`.
#[derive(Debug, Clone)]
pub struct PbcGreens {
    model: LatticeModel,
    points: Vec<BlochEigen>,
}

/// One pole `E` of `G(s, s; z)` with residue `weight`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralWeight {
    pub q: usize,
    pub band: usize,
    pub energy: C64,
    pub weight: C64,
}

impl PbcGreens {
    pub fn new(model: &LatticeModel) -> Result<Self> {
        model.validate()?;
        if !model.is_translation_invariant() {
            return Err(Error::Domain("periodic resolvent needs a periodic lattice without vacancies".into()));
        }
        let points = (1..=model.n_cells)
            .map(|q| bloch_eigen(model, model.momentum(q)))
            .collect::<Result<_>>()?;
        Ok(Self {
            model: model.clone(),
            points,
        })
    }

    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    /// Momentum indices whose Bloch matrix is not diagonalizable.
    pub fn degenerate_momenta(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.degenerate)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// All periodic eigenvalues with their momentum index.
    pub fn poles(&self) -> Vec<(usize, C64)> {
        self.points
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.eigenvalues.iter().map(move |&e| (i + 1, e)))
            .collect()
    }

    fn check_poles(&self, z: C64) -> Result<()> {
        for (q, e) in self.poles() {
            pole_check(z, q, e)?;
        }
        Ok(())
    }

    /// `(z - H(k))^{-1}` for each momentum.
    fn bloch_resolvents(&self, z: C64) -> Result<Vec<Array2<C64>>> {
        self.check_poles(z)?;
        let ns = self.model.n_sublattices;
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.degenerate {
                    return resolvent(&p.matrix, z).map_err(|_| Error::Pole {
                        z,
                        q: i + 1,
                        energy: p.eigenvalues[0],
                    });
                }
                let mut r = Array2::zeros((ns, ns));
                for (s, e) in p.eigenvalues.iter().enumerate() {
                    let inv = 1.0 / (z - e);
                    for a in 0..ns {
                        for b in 0..ns {
                            r[[a, b]] += p.right[s][a] * p.left[s][b] * inv;
                        }
                    }
                }
                Ok(r)
            })
            .collect()
    }

    /// `G(m, n; z)` for full-lattice linear indices.
    pub fn element(&self, z: C64, m: usize, n: usize) -> Result<C64> {
        let dim = self.model.full_dimension();
        for i in [m, n] {
            if i >= dim {
                return Err(Error::IndexOutOfRange { index: i, len: dim });
            }
        }
        let ns = self.model.n_sublattices;
        let (cm, a) = (m / ns, m % ns);
        let (cn, b) = (n / ns, n % ns);
        let lag = cm as f64 - cn as f64;
        let rs = self.bloch_resolvents(z)?;
        let total = csum(
            self.points
                .iter()
                .zip(&rs)
                .map(|(p, r)| C64::from_polar(1.0, p.k * lag) * r[[a, b]]),
        );
        Ok(total / self.model.n_cells as f64)
    }

    /// Lag table `T[d][a][b] = G((d+1, a), (1, b); z)`; translation invariance gives every element.
    fn lag_table(&self, z: C64) -> Result<Vec<Array2<C64>>> {
        let ns = self.model.n_sublattices;
        let n = self.model.n_cells;
        let rs = self.bloch_resolvents(z)?;
        let mut table = Vec::with_capacity(n);
        for d in 0..n {
            let mut t = Array2::zeros((ns, ns));
            for a in 0..ns {
                for b in 0..ns {
                    let v = csum(
                        self.points
                            .iter()
                            .zip(&rs)
                            .map(|(p, r)| C64::from_polar(1.0, p.k * d as f64) * r[[a, b]]),
                    );
                    t[[a, b]] = v / n as f64;
                }
            }
            table.push(t);
        }
        Ok(table)
    }

    /// `G` on a block of full-lattice linear indices.
    pub fn block(&self, z: C64, indices: &[usize]) -> Result<Array2<C64>> {
        let dim = self.model.full_dimension();
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfRange { index: bad, len: dim });
        }
        let ns = self.model.n_sublattices;
        let n = self.model.n_cells;
        let table = self.lag_table(z)?;
        Ok(Array2::from_shape_fn((indices.len(), indices.len()), |(i, j)| {
            let (m, x) = (indices[i], indices[j]);
            let lag = (m / ns + n - x / ns) % n;
            table[lag][[m % ns, x % ns]]
        }))
    }

    /// Full `N N_s x N N_s` resolvent matrix.
    pub fn matrix(&self, z: C64) -> Result<Array2<C64>> {
        let all: Vec<usize> = (0..self.model.full_dimension()).collect();
        self.block(z, &all)
    }

    pub fn evaluate(&self, z: C64, sites: &[Site]) -> Result<GreensEvaluation> {
        let indices = sites
            .iter()
            .map(|&s| self.model.site_index(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(GreensEvaluation {
            z,
            sites: sites.to_vec(),
            matrix: self.block(z, &indices)?,
            provenance: Provenance::SpectralSum,
        })
    }

    /// Poles and residues of the diagonal element `G(s, s; z)`.
    ///
    /// A degenerate momentum is allowed only when `H(k)` is a multiple of the
    /// identity; a defective Bloch matrix gives higher-order poles and is rejected.
    pub fn site_weights(&self, site: Site) -> Result<Vec<SpectralWeight>> {
        let idx = self.model.site_index(site)?;
        let ns = self.model.n_sublattices;
        let a = idx % ns;
        let n = self.model.n_cells as f64;
        let tol = DEGENERACY_TOLERANCE * self.model.energy_scale();
        let mut defective = Vec::new();
        let mut out = Vec::with_capacity(self.points.len() * ns);
        for (i, p) in self.points.iter().enumerate() {
            if p.degenerate {
                let mean = (0..ns).map(|j| p.matrix[[j, j]]).sum::<C64>() / ns as f64;
                let scalar = p
                    .matrix
                    .indexed_iter()
                    .all(|((r, c), v)| (v - if r == c { mean } else { ZERO }).norm() <= tol);
                if !scalar {
                    defective.push(i + 1);
                    continue;
                }
                for s in 0..ns {
                    out.push(SpectralWeight {
                        q: i + 1,
                        band: s,
                        energy: mean,
                        weight: C64::new(if s == 0 { 1.0 / n } else { 0.0 }, 0.0),
                    });
                }
                continue;
            }
            for (s, &e) in p.eigenvalues.iter().enumerate() {
                out.push(SpectralWeight {
                    q: i + 1,
                    band: s,
                    energy: e,
                    weight: p.right[s][a] * p.left[s][a] / n,
                });
            }
        }
        if !defective.is_empty() {
            return Err(Error::DegenerateBloch(defective));
        }
        Ok(out)
    }
}

/// Rank-one Dyson update for a potential `eps` on `site`.
///
/// `G^eps = G + eps G|s><s|G / (1 - eps G_ss)`; `eps = +inf` gives the vacancy
/// limit `G - G|s><s|G / G_ss`. A vanishing denominator is reported as a dressed pole.
pub fn dyson_update(g: &GreensEvaluation, site: Site, eps: f64) -> Result<GreensEvaluation> {
    if eps.is_nan() {
        return Err(Error::InvalidParameter("impurity strength is NaN".into()));
    }
    if eps == 0.0 {
        return Ok(g.clone());
    }
    let p = g.position(site).ok_or_else(|| {
        Error::InvalidParameter(format!("site {site} is not part of the evaluated Green's function block"))
    })?;
    let gss = g.matrix[[p, p]];
    let n = g.sites.len();
    let factor = if eps.is_infinite() {
        if gss.norm() <= 1e-13 * max_abs(&g.matrix) || gss == ZERO {
            return Err(Error::DressedPole {
                z: g.z,
                denominator: gss.norm(),
            });
        }
        -ONE / gss
    } else {
        let den = ONE - eps * gss;
        if den.norm() <= POLE_TOLERANCE * (eps * gss).norm().max(1.0) {
            return Err(Error::DressedPole {
                z: g.z,
                denominator: den.norm(),
            });
        }
        C64::new(eps, 0.0) / den
    };
    let col: Vec<C64> = (0..n).map(|i| g.matrix[[i, p]]).collect();
    let row: Vec<C64> = (0..n).map(|j| g.matrix[[p, j]]).collect();
    let matrix = Array2::from_shape_fn((n, n), |(i, j)| g.matrix[[i, j]] + factor * col[i] * row[j]);

    let mut entries = match &g.provenance {
        Provenance::DysonDressed(set) => set.entries().to_vec(),
        _ => Vec::new(),
    };
    entries.retain(|e| e.site != site);
    entries.push(crate::model::Impurity { site, strength: eps });
    Ok(GreensEvaluation {
        z: g.z,
        sites: g.sites.clone(),
        matrix,
        provenance: Provenance::DysonDressed(ImpuritySet::new(entries)?),
    })
}

/// Applies [`dyson_update`] for every impurity, in site order.
pub fn dress(g: &GreensEvaluation, impurities: &ImpuritySet) -> Result<GreensEvaluation> {
    let mut out = g.clone();
    for imp in impurities.sorted() {
        out = dyson_update(&out, imp.site, imp.strength)?;
    }
    Ok(out)
}

/// `<s|G^eps(z)|s> = G_ss / (1 - eps G_ss)` for a single impurity on `site`.
pub fn dressed_diagonal(z: C64, eps: f64, model: &LatticeModel, site: Site) -> Result<C64> {
    let pg = PbcGreens::new(model)?;
    let idx = model.site_index(site)?;
    let g = pg.element(z, idx, idx)?;
    if eps == 0.0 {
        return Ok(g);
    }
    if eps.is_infinite() {
        return Ok(ZERO);
    }
    let den = ONE - eps * g;
    if den.norm() <= POLE_TOLERANCE * (eps * g).norm().max(1.0) {
        return Err(Error::DressedPole {
            z,
            denominator: den.norm(),
        });
    }
    Ok(g / den)
}

/// Resolvent block by dense inversion of the impurity Hamiltonian.
///
/// Infinite strengths remove their sites; the requested sites must remain.
pub fn numeric_greens(
    model: &LatticeModel,
    impurities: &ImpuritySet,
    z: C64,
    sites: &[Site],
) -> Result<GreensEvaluation> {
    let vacancies: Vec<Site> = impurities
        .entries()
        .iter()
        .filter(|e| e.strength.is_infinite())
        .map(|e| e.site)
        .collect();
    let finite = ImpuritySet::new(
        impurities
            .entries()
            .iter()
            .filter(|e| e.strength.is_finite())
            .copied()
            .collect(),
    )?;
    let reduced = if vacancies.is_empty() {
        model.clone()
    } else {
        vacancy_reduce(model, &vacancies)?
    };
    let h = build_dense(&reduced, &finite)?;
    let dim = h.nrows();
    let shifted = Array2::from_shape_fn((dim, dim), |(i, j)| if i == j { z - h[[i, j]] } else { -h[[i, j]] });
    let inv = Lu::new(&shifted)
        .map_err(|_| Error::DressedPole { z, denominator: 0.0 })?
        .inverse();
    let pos = sites
        .iter()
        .map(|&s| {
            let full = reduced.site_index(s)?;
            reduced
                .reduced_index(full)
                .ok_or_else(|| Error::Domain(format!("site {s} is a vacancy")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GreensEvaluation {
        z,
        sites: sites.to_vec(),
        matrix: Array2::from_shape_fn((pos.len(), pos.len()), |(i, j)| inv[[pos[i], pos[j]]]),
        provenance: Provenance::NumericInverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::model::Boundary;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hermitian_ring_hand_sum() {
        let p = HatanoNelsonParams::new(1.0, 0.0, 4).unwrap();
        let g = greens_hn(2, 2, c(3.0, 0.0), &p).unwrap();
        let expect = 0.25 * (1.0 / 3.0 + 1.0 / 5.0 + 1.0 / 3.0 + 1.0);
        assert!((g - c(expect, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pole_is_reported() {
        let p = HatanoNelsonParams::new(1.0, 0.0, 4).unwrap();
        assert!(matches!(greens_hn(1, 1, c(2.0, 0.0), &p), Err(Error::Pole { q: 4, .. })));
    }

    #[test]
    fn large_z_asymptotics() {
        let p = HatanoNelsonParams::new(1.0, 0.3, 12).unwrap();
        let z = c(1e7, 3e6);
        assert!((z * greens_hn(5, 5, z, &p).unwrap() - ONE).norm() < 1e-6);
        let s = SshParams::new(1.0, 2.0, 1.0, 6).unwrap();
        for a in 0..2 {
            assert!((z * greens_ssh(3, 3, a, a, z, &s).unwrap() - ONE).norm() < 1e-6);
        }
    }

    #[test]
    fn ssh_spectral_sum_matches_inverse() {
        let s = SshParams::new(1.0, 2.0, 1.0, 10).unwrap();
        let m = LatticeModel::ssh(&s, Boundary::Periodic).unwrap();
        let z = c(0.0, 0.7);
        let inv = resolvent(&build_dense(&m, &ImpuritySet::empty()).unwrap(), z).unwrap();
        for (cm, cn) in [(1, 1), (3, 7), (10, 2)] {
            for a in 0..2 {
                for b in 0..2 {
                    let g = greens_ssh(cm, cn, a, b, z, &s).unwrap();
                    let e = inv[[(cm - 1) * 2 + a, (cn - 1) * 2 + b]];
                    assert!((g - e).norm() < 1e-12);
                }
            }
        }
        let pg = PbcGreens::new(&m).unwrap();
        assert!(max_abs_diff(&pg.matrix(z).unwrap(), &inv) < 1e-12);
    }

    #[test]
    fn exceptional_bloch_point_uses_direct_inverse() {
        // gamma = 2 t1: f_ba vanishes at every k; t1 = t2 = 1 with gamma = 0 closes the gap at k = pi
        let s = SshParams::new(1.0, 1.0, 0.0, 4).unwrap();
        assert!(matches!(
            greens_ssh(1, 1, 0, 0, c(0.3, 0.1), &s),
            Err(Error::DegenerateBloch(ref q)) if q == &vec![2]
        ));
        let m = LatticeModel::ssh(&s, Boundary::Periodic).unwrap();
        let pg = PbcGreens::new(&m).unwrap();
        let z = c(0.3, 0.1);
        let inv = resolvent(&build_dense(&m, &ImpuritySet::empty()).unwrap(), z).unwrap();
        assert!(max_abs_diff(&pg.matrix(z).unwrap(), &inv) < 1e-12);
    }

    #[test]
    fn dyson_identity_and_vacancy_limit() {
        let p = HatanoNelsonParams::new(1.0, 0.3, 20).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap();
        let pg = PbcGreens::new(&m).unwrap();
        let sites: Vec<Site> = (1..=20).map(|n| Site::new(n, 0)).collect();
        let z = c(1.0, 0.2);
        let g = pg.evaluate(z, &sites).unwrap();
        let same = dyson_update(&g, Site::new(20, 0), 0.0).unwrap();
        assert_eq!(same.matrix, g.matrix);

        let dressed = dyson_update(&g, Site::new(20, 0), 5.0).unwrap();
        let imp = ImpuritySet::single(Site::new(20, 0), 5.0).unwrap();
        let num = numeric_greens(&m, &imp, z, &sites).unwrap();
        assert!(max_abs_diff(&dressed.matrix, &num.matrix) < 1e-12);

        let d = dressed_diagonal(z, 5.0, &m, Site::new(20, 0)).unwrap();
        assert!((d - dressed.get(Site::new(20, 0), Site::new(20, 0)).unwrap()).norm() < 1e-13);

        let opened = dyson_update(&g, Site::new(20, 0), f64::INFINITY).unwrap();
        let vac = ImpuritySet::single(Site::new(20, 0), f64::INFINITY).unwrap();
        let num = numeric_greens(&m, &vac, z, &sites[..19]).unwrap();
        let block = opened.matrix.slice(ndarray::s![..19, ..19]).to_owned();
        assert!(max_abs_diff(&block, &num.matrix) < 1e-12);
    }

    #[test]
    fn real_energy_above_band_gives_real_diagonal() {
        let p = HatanoNelsonParams::new(1.0, 0.3, 20).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap();
        let d = dressed_diagonal(c(10.0, 0.0), 5.0, &m, Site::new(20, 0)).unwrap();
        assert!(d.im.abs() < 1e-10);
    }
}
