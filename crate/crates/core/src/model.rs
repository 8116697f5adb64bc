//! Tight-binding lattice models, dense Hamiltonians and periodic Bloch diagonalization.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{principal_sqrt, C64, ZERO};
use crate::oracle::{dense_eig, DEGENERACY_TOLERANCE};
use crate::spectrum::{ComplexSpectrum, EigenpairSet, Normalization, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

/// A lattice site: `cell` is 1-based, `sublattice` 0-based (A = 0, B = 1, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub cell: usize,
    pub sublattice: usize,
}

impl Site {
    pub const fn new(cell: usize, sublattice: usize) -> Self {
        Self { cell, sublattice }
    }

    /// Linear index `(cell - 1) * n_sublattices + sublattice`.
    pub fn index(&self, n_sublattices: usize) -> usize {
        (self.cell - 1) * n_sublattices + self.sublattice
    }

    pub fn from_index(index: usize, n_sublattices: usize) -> Self {
        Self {
            cell: index / n_sublattices + 1,
            sublattice: index % n_sublattices,
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sub = match self.sublattice {
            s @ 0..=25 => ((b'A' + s as u8) as char).to_string(),
            s => s.to_string(),
        };
        write!(f, "({},{})", self.cell, sub)
    }
}

/// Pointlike on-site potential; an infinite strength is a vacancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impurity {
    pub site: Site,
    pub strength: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpuritySet {
    entries: Vec<Impurity>,
}

impl ImpuritySet {
    pub fn new(entries: Vec<Impurity>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.strength.is_nan() || e.strength < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "impurity strength at {} must be non-negative, got {}",
                    e.site, e.strength
                )));
            }
            if !seen.insert(e.site) {
                return Err(Error::InvalidParameter(format!("duplicate impurity site {}", e.site)));
            }
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(site: Site, strength: f64) -> Result<Self> {
        Self::new(vec![Impurity { site, strength }])
    }

    pub fn entries(&self) -> &[Impurity] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ordered by site, the canonical order for iterated Dyson updates.
    pub fn sorted(&self) -> Vec<Impurity> {
        let mut v = self.entries.clone();
        v.sort_by_key(|e| e.site);
        v
    }
}

/// Hatano-Nelson chain: hopping `J(1 + delta)` to the right, `J(1 - delta)` to the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HatanoNelsonParams {
    pub j: f64,
    pub delta: f64,
    pub n: usize,
}

impl HatanoNelsonParams {
    pub fn new(j: f64, delta: f64, n: usize) -> Result<Self> {
        let p = Self { j, delta, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("need N >= 2 sites, got {}", self.n)));
        }
        if !self.j.is_finite() || !self.delta.is_finite() {
            return Err(Error::InvalidParameter("J and delta must be finite".into()));
        }
        if self.delta.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in [-1, 1], got {}",
                self.delta
            )));
        }
        Ok(())
    }

    /// Localization ratio `sqrt((1 + delta) / (1 - delta))`.
    pub fn rho(&self) -> f64 {
        ((1.0 + self.delta) / (1.0 - self.delta)).sqrt()
    }

    pub fn momentum(&self, q: usize) -> f64 {
        2.0 * PI * q as f64 / self.n as f64
    }

    /// Periodic band `E(k) = 2J (cos k - i delta sin k)`.
    pub fn band(&self, k: f64) -> C64 {
        C64::new(2.0 * self.j * k.cos(), -2.0 * self.j * self.delta * k.sin())
    }

    pub fn energy_scale(&self) -> f64 {
        (2.0 * self.j.abs()).max(1.0)
    }
}

/// Non-Hermitian SSH chain: intracell `t1 +- gamma/2`, intercell `t2`, `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SshParams {
    pub t1: f64,
    pub t2: f64,
    pub gamma: f64,
    pub n: usize,
}

impl SshParams {
    pub fn new(t1: f64, t2: f64, gamma: f64, n: usize) -> Result<Self> {
        let p = Self { t1, t2, gamma, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("need N >= 2 cells, got {}", self.n)));
        }
        if !(self.t1.is_finite() && self.t2.is_finite() && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter("t1, t2 and gamma must be finite".into()));
        }
        Ok(())
    }

    /// `A_n -> B_n` hopping `t1 + gamma/2`.
    pub fn forward_intra(&self) -> f64 {
        self.t1 + 0.5 * self.gamma
    }

    /// `B_n -> A_n` hopping `t1 - gamma/2`.
    pub fn backward_intra(&self) -> f64 {
        self.t1 - 0.5 * self.gamma
    }

    /// Hermitian-image intracell hopping `c = sqrt(t1^2 - gamma^2/4)`, principal branch.
    pub fn c(&self) -> C64 {
        principal_sqrt(self.t1 * self.t1 - 0.25 * self.gamma * self.gamma)
    }

    /// Hermitian-image intercell hopping.
    pub fn d(&self) -> f64 {
        self.t2
    }

    /// Similarity ratio `r = sqrt((t1 - gamma/2) / (t1 + gamma/2))`, principal branch.
    pub fn r(&self) -> Result<C64> {
        let den = self.forward_intra();
        if den == 0.0 {
            return Err(Error::Domain("similarity ratio undefined for t1 + gamma/2 = 0".into()));
        }
        Ok(principal_sqrt(self.backward_intra() / den))
    }

    pub fn momentum(&self, q: usize) -> f64 {
        2.0 * PI * q as f64 / self.n as f64
    }

    pub fn energy_scale(&self) -> f64 {
        (self.t1.abs() + self.t2.abs() + self.gamma.abs()).max(1.0)
    }
}

/// General 1D lattice with same-cell and nearest-neighbour-cell couplings.
///
/// `forward[a, b] = <n+1, a|H|n, b>` and `backward[a, b] = <n, a|H|n+1, b>`.
/// `vacancies` lists removed sites by linear index (sorted, distinct).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeModel {
    pub n_cells: usize,
    pub n_sublattices: usize,
    pub intra: Array2<C64>,
    pub forward: Array2<C64>,
    pub backward: Array2<C64>,
    pub onsite: Array1<C64>,
    pub boundary: Boundary,
    pub vacancies: Vec<usize>,
}

impl LatticeModel {
    pub fn new(
        n_cells: usize,
        intra: Array2<C64>,
        forward: Array2<C64>,
        backward: Array2<C64>,
        onsite: Option<Array1<C64>>,
        boundary: Boundary,
    ) -> Result<Self> {
        let ns = intra.nrows();
        let onsite = onsite.unwrap_or_else(|| Array1::zeros(ns));
        let model = Self {
            n_cells,
            n_sublattices: ns,
            intra,
            forward,
            backward,
            onsite,
            boundary,
            vacancies: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.n_sublattices;
        if self.n_cells < 2 {
            return Err(Error::InvalidParameter(format!("need N >= 2 cells, got {}", self.n_cells)));
        }
        if ns == 0 {
            return Err(Error::InvalidParameter("need at least one sublattice".into()));
        }
        for (name, m) in [("intra", &self.intra), ("forward", &self.forward), ("backward", &self.backward)] {
            if m.dim() != (ns, ns) {
                return Err(Error::InvalidParameter(format!(
                    "{name} couplings have shape {:?}, expected ({ns}, {ns})",
                    m.dim()
                )));
            }
        }
        if self.onsite.len() != ns {
            return Err(Error::InvalidParameter(format!(
                "onsite energies have length {}, expected {ns}",
                self.onsite.len()
            )));
        }
        let all = [&self.intra, &self.forward, &self.backward]
            .into_iter()
            .flat_map(|m| m.iter())
            .chain(self.onsite.iter());
        for z in all {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::InvalidParameter("couplings must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn hatano_nelson(p: &HatanoNelsonParams, boundary: Boundary) -> Result<Self> {
        p.validate()?;
        let one = |x: f64| Array2::from_elem((1, 1), C64::new(x, 0.0));
        Self::new(
            p.n,
            one(0.0),
            one(p.j * (1.0 + p.delta)),
            one(p.j * (1.0 - p.delta)),
            None,
            boundary,
        )
    }

    pub fn ssh(p: &SshParams, boundary: Boundary) -> Result<Self> {
        p.validate()?;
        let c = |x: f64| C64::new(x, 0.0);
        let intra = ndarray::array![[ZERO, c(p.forward_intra())], [c(p.backward_intra()), ZERO]];
        // <n+1,A|H|n,B> = <n,B|H|n+1,A> = t2
        let forward = ndarray::array![[ZERO, c(p.t2)], [ZERO, ZERO]];
        let backward = ndarray::array![[ZERO, ZERO], [c(p.t2), ZERO]];
        Self::new(p.n, intra, forward, backward, None, boundary)
    }

    /// Number of sites before vacancies are removed.
    pub fn full_dimension(&self) -> usize {
        self.n_cells * self.n_sublattices
    }

    pub fn dimension(&self) -> usize {
        self.full_dimension() - self.vacancies.len()
    }

    pub fn site_index(&self, site: Site) -> Result<usize> {
        if site.cell == 0 || site.cell > self.n_cells || site.sublattice >= self.n_sublattices {
            let len = self.full_dimension();
            let index = if site.cell == 0 {
                usize::MAX
            } else {
                (site.cell - 1) * self.n_sublattices + site.sublattice
            };
            return Err(Error::IndexOutOfRange { index, len });
        }
        Ok(site.index(self.n_sublattices))
    }

    pub fn site(&self, index: usize) -> Site {
        Site::from_index(index, self.n_sublattices)
    }

    /// The last site of the last cell.
    pub fn last_site(&self) -> Site {
        Site::new(self.n_cells, self.n_sublattices - 1)
    }

    /// Linear (full-lattice) indices of the sites that remain after vacancies.
    pub fn active_sites(&self) -> Vec<usize> {
        let removed: BTreeSet<usize> = self.vacancies.iter().copied().collect();
        (0..self.full_dimension()).filter(|i| !removed.contains(i)).collect()
    }

    /// Position of a full-lattice index among the active sites.
    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        if full >= self.full_dimension() || self.vacancies.binary_search(&full).is_ok() {
            return None;
        }
        Some(full - self.vacancies.partition_point(|&v| v < full))
    }

    /// Translationally invariant: periodic, no vacancies.
    pub fn is_translation_invariant(&self) -> bool {
        self.boundary == Boundary::Periodic && self.vacancies.is_empty()
    }

    /// Periodic model opened by removing its last site.
    pub fn opened(&self) -> Result<Self> {
        vacancy_reduce(self, &[self.last_site()])
    }

    /// Dense Hamiltonian of the full lattice including vacated sites.
    fn full_matrix(&self) -> Array2<C64> {
        let ns = self.n_sublattices;
        let n = self.n_cells;
        let dim = n * ns;
        let mut h = Array2::zeros((dim, dim));
        for cell in 0..n {
            let base = cell * ns;
            for a in 0..ns {
                h[[base + a, base + a]] += self.onsite[a];
                for b in 0..ns {
                    h[[base + a, base + b]] += self.intra[[a, b]];
                }
            }
            let next = if cell + 1 < n {
                Some(cell + 1)
            } else if self.boundary == Boundary::Periodic {
                Some(0)
            } else {
                None
            };
            if let Some(next) = next {
                let nb = next * ns;
                for a in 0..ns {
                    for b in 0..ns {
                        h[[nb + a, base + b]] += self.forward[[a, b]];
                        h[[base + a, nb + b]] += self.backward[[a, b]];
                    }
                }
            }
        }
        h
    }

    /// Bloch Hamiltonian `H(k) = intra + onsite + e^{-ik} forward + e^{ik} backward`.
    pub fn bloch_matrix(&self, k: f64) -> Array2<C64> {
        let ns = self.n_sublattices;
        let em = C64::from_polar(1.0, -k);
        let ep = C64::from_polar(1.0, k);
        Array2::from_shape_fn((ns, ns), |(a, b)| {
            let mut v = self.intra[[a, b]] + em * self.forward[[a, b]] + ep * self.backward[[a, b]];
            if a == b {
                v += self.onsite[a];
            }
            v
        })
    }

    pub fn momentum(&self, q: usize) -> f64 {
        2.0 * PI * q as f64 / self.n_cells as f64
    }

    /// Energy scale used by relative tolerances.
    pub fn energy_scale(&self) -> f64 {
        let s: f64 = [&self.intra, &self.forward, &self.backward]
            .into_iter()
            .flat_map(|m| m.iter())
            .chain(self.onsite.iter())
            .map(|z| z.norm())
            .sum();
        s.max(1.0)
    }
}

/// Dense Hamiltonian with finite impurity potentials on the diagonal.
///
/// Rows and columns of vacated sites are absent; impurity sites must be active.
pub fn build_dense(model: &LatticeModel, impurities: &ImpuritySet) -> Result<Array2<C64>> {
    model.validate()?;
    let mut full = model.full_matrix();
    for imp in impurities.entries() {
        let idx = model.site_index(imp.site)?;
        if !imp.strength.is_finite() {
            return Err(Error::Domain(format!(
                "infinite potential at {}: remove the site with vacancy_reduce instead",
                imp.site
            )));
        }
        if model.reduced_index(idx).is_none() {
            return Err(Error::Domain(format!("impurity site {} is a vacancy", imp.site)));
        }
        full[[idx, idx]] += imp.strength;
    }
    if model.vacancies.is_empty() {
        return Ok(full);
    }
    let active = model.active_sites();
    Ok(Array2::from_shape_fn((active.len(), active.len()), |(i, j)| {
        full[[active[i], active[j]]]
    }))
}

/// Removes sites (the infinite-potential limit), returning the reduced model.
pub fn vacancy_reduce(model: &LatticeModel, vacancies: &[Site]) -> Result<LatticeModel> {
    let mut set: BTreeSet<usize> = model.vacancies.iter().copied().collect();
    for &site in vacancies {
        let idx = model.site_index(site)?;
        if !set.insert(idx) {
            return Err(Error::InvalidParameter(format!("site {site} is already a vacancy")));
        }
    }
    if set.len() >= model.full_dimension() {
        return Err(Error::Domain("cannot remove every site of the lattice".into()));
    }
    let mut out = model.clone();
    out.vacancies = set.into_iter().collect();
    Ok(out)
}

/// Periodic Hatano-Nelson spectrum `E(k_q)`, `q = 1..=N`.
pub fn pbc_spectrum_hn(p: &HatanoNelsonParams) -> Result<ComplexSpectrum> {
    p.validate()?;
    let (values, labels) = (1..=p.n)
        .map(|q| (p.band(p.momentum(q)), StateLabel::Bloch { q, band: 0 }))
        .unzip();
    ComplexSpectrum::new(values, labels)
}

/// Bloch data of one SSH momentum.
///
/// Eigenvalues are ordered `(+omega, -omega)`. Right vectors are
/// `(1, +-omega / f_ab) / sqrt 2`; left (bra) vectors `(1, +-omega / f_ba) / sqrt 2`,
/// which are binormalized. Vectors are absent at a degenerate point.
#[derive(Debug, Clone, Serialize)]
pub struct SshBloch {
    pub q: usize,
    pub k: f64,
    pub matrix: Array2<C64>,
    pub f_ab: C64,
    pub f_ba: C64,
    pub omega: C64,
    pub eigenvalues: [C64; 2],
    pub degenerate: bool,
    pub right: Option<[[C64; 2]; 2]>,
    pub left: Option<[[C64; 2]; 2]>,
}

pub fn pbc_bloch_ssh(p: &SshParams, q: usize) -> Result<SshBloch> {
    p.validate()?;
    if q == 0 || q > p.n {
        return Err(Error::InvalidParameter(format!("momentum index q = {q} outside 1..={}", p.n)));
    }
    let k = p.momentum(q);
    let f_ab = p.forward_intra() + C64::from_polar(p.t2, -k);
    let f_ba = p.backward_intra() + C64::from_polar(p.t2, k);
    let omega = (f_ab * f_ba).sqrt();
    let matrix = ndarray::array![[ZERO, f_ab], [f_ba, ZERO]];
    let degenerate = 2.0 * omega.norm() <= DEGENERACY_TOLERANCE * p.energy_scale();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (right, left) = if degenerate {
        (None, None)
    } else {
        let r = [[C64::new(s, 0.0), omega / f_ab * s], [C64::new(s, 0.0), -omega / f_ab * s]];
        let l = [[C64::new(s, 0.0), omega / f_ba * s], [C64::new(s, 0.0), -omega / f_ba * s]];
        (Some(r), Some(l))
    };
    Ok(SshBloch {
        q,
        k,
        matrix,
        f_ab,
        f_ba,
        omega,
        eigenvalues: [omega, -omega],
        degenerate,
        right,
        left,
    })
}

/// Eigensystem of one Bloch matrix.
///
/// `right[s]` and `left[s]` are binormalized (`sum_a left[s][a] right[s][a] = 1`).
#[derive(Debug, Clone)]
pub struct BlochEigen {
    pub k: f64,
    pub matrix: Array2<C64>,
    pub eigenvalues: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub left: Vec<Vec<C64>>,
    pub degenerate: bool,
}

/// Diagonalizes `H(k)`: closed forms for one and two sublattices, the oracle otherwise.
pub fn bloch_eigen(model: &LatticeModel, k: f64) -> Result<BlochEigen> {
    let h = model.bloch_matrix(k);
    let ns = model.n_sublattices;
    let tol = DEGENERACY_TOLERANCE * model.energy_scale();
    let one = C64::new(1.0, 0.0);
    match ns {
        1 => Ok(BlochEigen {
            k,
            eigenvalues: vec![h[[0, 0]]],
            right: vec![vec![one]],
            left: vec![vec![one]],
            matrix: h,
            degenerate: false,
        }),
        2 => {
            let (a, b, c, d) = (h[[0, 0]], h[[0, 1]], h[[1, 0]], h[[1, 1]]);
            let half = 0.5 * (a - d);
            let disc = (half * half + b * c).sqrt();
            let mid = 0.5 * (a + d);
            let eigenvalues = vec![mid + disc, mid - disc];
            if 2.0 * disc.norm() <= tol {
                return Ok(BlochEigen {
                    k,
                    matrix: h,
                    eigenvalues,
                    right: vec![],
                    left: vec![],
                    degenerate: true,
                });
            }
            let mut right = Vec::with_capacity(2);
            let mut left = Vec::with_capacity(2);
            for &lam in &eigenvalues {
                let r1 = [b, lam - a];
                let r2 = [lam - d, c];
                let rv = if r1[0].norm() + r1[1].norm() >= r2[0].norm() + r2[1].norm() { r1 } else { r2 };
                let l1 = [c, lam - a];
                let l2 = [lam - d, b];
                let lv = if l1[0].norm() + l1[1].norm() >= l2[0].norm() + l2[1].norm() { l1 } else { l2 };
                let p = (lv[0] * rv[0] + lv[1] * rv[1]).sqrt();
                right.push(rv.iter().map(|x| x / p).collect());
                left.push(lv.iter().map(|x| x / p).collect());
            }
            Ok(BlochEigen {
                k,
                matrix: h,
                eigenvalues,
                right,
                left,
                degenerate: false,
            })
        }
        _ => {
            let res = dense_eig(&h)?;
            let degenerate = res.any_degenerate();
            let mut right = Vec::with_capacity(ns);
            let mut left = Vec::with_capacity(ns);
            if !degenerate {
                for s in 0..ns {
                    let p = crate::linalg::pair(res.left.column(s), res.right.column(s)).sqrt();
                    right.push(res.right.column(s).iter().map(|x| x / p).collect());
                    left.push(res.left.column(s).iter().map(|x| x / p).collect());
                }
            }
            Ok(BlochEigen {
                k,
                matrix: h,
                eigenvalues: res.eigenvalues,
                right,
                left,
                degenerate,
            })
        }
    }
}

/// Periodic spectrum of a translation-invariant model, labelled by `(q, band)`.
pub fn pbc_spectrum(model: &LatticeModel) -> Result<ComplexSpectrum> {
    require_translation_invariant(model)?;
    let mut values = Vec::with_capacity(model.full_dimension());
    let mut labels = Vec::with_capacity(model.full_dimension());
    for q in 1..=model.n_cells {
        let be = bloch_eigen(model, model.momentum(q))?;
        for (band, e) in be.eigenvalues.into_iter().enumerate() {
            values.push(e);
            labels.push(StateLabel::Bloch { q, band });
        }
    }
    ComplexSpectrum::new(values, labels)
}

fn require_translation_invariant(model: &LatticeModel) -> Result<()> {
    model.validate()?;
    if !model.is_translation_invariant() {
        return Err(Error::Domain(
            "Bloch states need a periodic lattice without vacancies or impurities".into(),
        ));
    }
    Ok(())
}

/// Binormalized Bloch eigenstates `<n, a|R> = e^{ikn} v_a / sqrt N`, `<L|n, a> = e^{-ikn} l_a / sqrt N`.
pub fn pbc_full_eigenstates(model: &LatticeModel) -> Result<EigenpairSet> {
    require_translation_invariant(model)?;
    let n = model.n_cells;
    let ns = model.n_sublattices;
    let dim = n * ns;
    let norm = 1.0 / (n as f64).sqrt();
    let mut right = Array2::zeros((dim, dim));
    let mut left = Array2::zeros((dim, dim));
    let mut values = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    let mut degenerate_q = Vec::new();
    let mut col = 0;
    for q in 1..=n {
        let be = bloch_eigen(model, model.momentum(q))?;
        if be.degenerate {
            degenerate_q.push(q);
            continue;
        }
        for (band, e) in be.eigenvalues.iter().enumerate() {
            for cell in 1..=n {
                let phase = C64::from_polar(norm, be.k * cell as f64);
                for a in 0..ns {
                    let i = (cell - 1) * ns + a;
                    right[[i, col]] = phase * be.right[band][a];
                    left[[i, col]] = phase.conj() * be.left[band][a];
                }
            }
            values.push(*e);
            labels.push(StateLabel::Bloch { q, band });
            col += 1;
        }
    }
    if !degenerate_q.is_empty() {
        return Err(Error::DegenerateBloch(degenerate_q));
    }
    EigenpairSet::new(right, left, ComplexSpectrum::new(values, labels)?, Normalization::Binormalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigen_residual, max_abs_diff};

    #[test]
    fn hermitian_ring_is_circulant() {
        let p = HatanoNelsonParams::new(1.0, 0.0, 4).unwrap();
        let h = build_dense(&LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap(), &ImpuritySet::empty()).unwrap();
        let one = C64::new(1.0, 0.0);
        let expect = ndarray::array![
            [ZERO, one, ZERO, one],
            [one, ZERO, one, ZERO],
            [ZERO, one, ZERO, one],
            [one, ZERO, one, ZERO]
        ];
        assert_eq!(max_abs_diff(&h, &expect), 0.0);
    }

    #[test]
    fn skin_chain_hopping_asymmetry() {
        let p = HatanoNelsonParams::new(1.0, 0.05, 100).unwrap();
        let h = build_dense(&LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap(), &ImpuritySet::empty()).unwrap();
        assert!((h[[1, 0]].re - 1.05).abs() < 1e-15);
        assert!((h[[0, 1]].re - 0.95).abs() < 1e-15);
        assert!((h[[0, 99]].re - 1.05).abs() < 1e-15);
        assert!((h[[99, 0]].re - 0.95).abs() < 1e-15);
    }

    #[test]
    fn ssh_impurity_on_last_b_site() {
        let p = SshParams::new(1.0, 2.0, 1.0, 3).unwrap();
        let m = LatticeModel::ssh(&p, Boundary::Periodic).unwrap();
        let imp = ImpuritySet::single(Site::new(3, 1), 10.0).unwrap();
        let h = build_dense(&m, &imp).unwrap();
        assert_eq!(h[[5, 5]], C64::new(10.0, 0.0));
        for i in 0..5 {
            assert_eq!(h[[i, i]], ZERO);
        }
        assert_eq!(h[[0, 1]], C64::new(1.5, 0.0));
        assert_eq!(h[[1, 0]], C64::new(0.5, 0.0));
        assert_eq!(h[[2, 1]], C64::new(2.0, 0.0));
        assert_eq!(h[[1, 2]], C64::new(2.0, 0.0));
        assert_eq!(h[[0, 5]], C64::new(2.0, 0.0));
        assert_eq!(h[[5, 0]], C64::new(2.0, 0.0));
    }

    #[test]
    fn infinite_impurity_is_rejected() {
        let p = HatanoNelsonParams::new(1.0, 0.1, 5).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap();
        let imp = ImpuritySet::single(Site::new(5, 0), f64::INFINITY).unwrap();
        assert!(matches!(build_dense(&m, &imp), Err(Error::Domain(_))));
        let out = ImpuritySet::single(Site::new(6, 0), 1.0).unwrap();
        assert!(matches!(build_dense(&m, &out), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn vacancy_opens_the_ring() {
        let p = HatanoNelsonParams::new(1.0, 0.05, 100).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap().opened().unwrap();
        let h = build_dense(&m, &ImpuritySet::empty()).unwrap();
        assert_eq!(h.dim(), (99, 99));
        assert_eq!(h[[0, 98]], ZERO);
        let open = LatticeModel::hatano_nelson(&HatanoNelsonParams::new(1.0, 0.05, 99).unwrap(), Boundary::Open).unwrap();
        assert_eq!(max_abs_diff(&h, &build_dense(&open, &ImpuritySet::empty()).unwrap()), 0.0);
    }

    #[test]
    fn ssh_vacancy_leaves_dangling_a_site() {
        let p = SshParams::new(1.0, 2.0, 1.0, 4).unwrap();
        let m = LatticeModel::ssh(&p, Boundary::Periodic).unwrap().opened().unwrap();
        assert_eq!(m.dimension(), 7);
        assert_eq!(m.active_sites().last(), Some(&6));
        let h = build_dense(&m, &ImpuritySet::empty()).unwrap();
        assert_eq!(h[[6, 5]], C64::new(2.0, 0.0));
        assert_eq!(h[[0, 6]], ZERO);
    }

    #[test]
    fn two_site_ring_reduces_to_zero() {
        let p = HatanoNelsonParams::new(1.0, 0.0, 2).unwrap();
        let m = LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap();
        let r = vacancy_reduce(&m, &[Site::new(2, 0)]).unwrap();
        let h = build_dense(&r, &ImpuritySet::empty()).unwrap();
        assert_eq!(h.dim(), (1, 1));
        assert_eq!(h[[0, 0]], ZERO);
        assert!(vacancy_reduce(&r, &[Site::new(1, 0)]).is_err());
        assert!(vacancy_reduce(&r, &[Site::new(2, 0)]).is_err());
    }

    #[test]
    fn hn_spectrum_examples() {
        let s = pbc_spectrum_hn(&HatanoNelsonParams::new(1.0, 0.0, 4).unwrap()).unwrap();
        let expect = [0.0, -2.0, 0.0, 2.0];
        for (z, e) in s.eigenvalues().iter().zip(expect) {
            assert!((z - C64::new(e, 0.0)).norm() < 1e-15);
        }
        let s = pbc_spectrum_hn(&HatanoNelsonParams::new(1.0, 0.5, 6).unwrap()).unwrap();
        assert!((s.eigenvalues()[0] - C64::new(1.0, -0.75f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn ssh_bloch_examples() {
        let b = pbc_bloch_ssh(&SshParams::new(1.0, 1.0, 0.0, 4).unwrap(), 2).unwrap();
        assert!(b.degenerate && b.right.is_none());
        let b = pbc_bloch_ssh(&SshParams::new(1.0, 2.0, 1.0, 4).unwrap(), 1).unwrap();
        assert!((b.f_ab - C64::new(1.5, -2.0)).norm() < 1e-15);
        assert!((b.f_ba - C64::new(0.5, 2.0)).norm() < 1e-15);
        let (r, l) = (b.right.unwrap(), b.left.unwrap());
        for s in 0..2 {
            let hv0 = b.f_ab * r[s][1];
            let hv1 = b.f_ba * r[s][0];
            assert!((hv0 - b.eigenvalues[s] * r[s][0]).norm() < 1e-14);
            assert!((hv1 - b.eigenvalues[s] * r[s][1]).norm() < 1e-14);
            for t in 0..2 {
                let p = l[t][0] * r[s][0] + l[t][1] * r[s][1];
                let expect = if s == t { 1.0 } else { 0.0 };
                assert!((p - C64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn ssh_bloch_states_solve_the_dense_problem() {
        let p = SshParams::new(1.0, 2.0, 1.0, 8).unwrap();
        let m = LatticeModel::ssh(&p, Boundary::Periodic).unwrap();
        let h = build_dense(&m, &ImpuritySet::empty()).unwrap();
        let set = pbc_full_eigenstates(&m).unwrap();
        for (k, e) in set.spectrum.eigenvalues().iter().enumerate() {
            assert!(eigen_residual(&h, *e, set.right_state(k)) < 1e-12);
        }
        assert!(set.completeness_residual() < 1e-12);
    }

    #[test]
    fn site_indexing_roundtrip() {
        let s = Site::new(3, 1);
        assert_eq!(s.index(2), 5);
        assert_eq!(Site::from_index(5, 2), s);
        assert_eq!(s.to_string(), "(3,B)");
    }
}
