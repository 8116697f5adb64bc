//! Impurity and open-boundary spectra from the poles of the dressed resolvent,
//! and open-lattice eigenstates from periodic Green's-function matrix elements.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::{PbcGreens, SpectralWeight};
use crate::linalg::{eigen_residual, left_eigen_residual, norm2, pair, C64, ONE, ZERO};
use crate::model::{build_dense, HatanoNelsonParams, ImpuritySet, LatticeModel, Site, SshParams, Boundary};
use crate::oracle::{dense_eig, match_spectra};
use crate::spectrum::{Band, ComplexSpectrum, StateLabel};

/// Required relative residual of a pole-equation root.
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Required relative residual of a Green's-function eigenstate.
pub const STATE_RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Relative distance to the periodic spectrum below which the contour route is used.
pub const COLLISION_TOLERANCE: f64 = 1e-8;
/// Exceptional-point confirmation thresholds: eigenvalue gap (relative) and `|<L|R>|` of unit vectors.
pub const EP_GAP_TOLERANCE: f64 = 1e-6;
pub const EP_OVERLAP_TOLERANCE: f64 = 1e-3;

const CLUSTER_TOLERANCE: f64 = 1e-10;
const ZERO_WEIGHT: f64 = 1e-13;
const DISTINCT_ROOTS: f64 = 1e-9;
const MAX_SUBDIVISION: usize = 16;

/// Open Hatano-Nelson spectrum `2J sqrt(1 - delta^2) cos(k_q / 2)`, `q = 1..N-1`.
pub fn obc_spectrum_hn(p: &HatanoNelsonParams) -> Result<ComplexSpectrum> {
    p.validate()?;
    let amp = 2.0 * p.j * (1.0 - p.delta * p.delta).sqrt();
    let (values, labels) = (1..p.n)
        .map(|q| {
            (
                C64::new(amp * (PI * q as f64 / p.n as f64).cos(), 0.0),
                StateLabel::Standing { q, band: Band::Single },
            )
        })
        .unzip();
    ComplexSpectrum::new(values, labels)
}

/// Open SSH spectrum `+-sqrt(c^2 + t2^2 + 2 c t2 cos(k_q / 2))`, `q = 1..N-1`, plus the zero mode.
pub fn obc_spectrum_ssh(p: &SshParams) -> Result<ComplexSpectrum> {
    p.validate()?;
    let c = p.c();
    let d = p.d();
    let mut values = Vec::with_capacity(2 * p.n - 1);
    let mut labels = Vec::with_capacity(2 * p.n - 1);
    for q in 1..p.n {
        let e = (c * c + d * d + 2.0 * c * d * (PI * q as f64 / p.n as f64).cos()).sqrt();
        let e = if e.re < 0.0 || (e.re == 0.0 && e.im < 0.0) { -e } else { e };
        for band in [Band::Upper, Band::Lower] {
            values.push(band.sign() * e);
            labels.push(StateLabel::Standing { q, band });
        }
    }
    values.push(ZERO);
    labels.push(StateLabel::ZeroMode);
    ComplexSpectrum::new(values, labels)
}

/// The pole condition `1 - eps G(s, s; z) = 0` in polynomial form.
///
/// Degenerate periodic eigenvalues are merged into clusters. A cluster of
/// multiplicity `m` keeps `m - 1` eigenvalues unchanged by the impurity (all `m`
/// if its weight on the site vanishes); the remaining roots are the zeros of
/// `R(z) = prod_c (z - E_c) (1 - eps sum_c W_c / (z - E_c))`.
#[derive(Debug, Clone)]
pub struct PoleProblem {
    clusters: Vec<(C64, C64)>,
    persistent: Vec<C64>,
    scale: f64,
}

struct Evaluation {
    log_derivative: C64,
    log_abs: f64,
    residual: f64,
}

/// Roots of the pole condition in slot order.
#[derive(Debug, Clone, Serialize)]
pub struct PoleRoots {
    pub roots: Vec<C64>,
    pub residuals: Vec<f64>,
    pub simultaneous: bool,
}

impl PoleProblem {
    pub fn new(model: &LatticeModel, site: Site) -> Result<Self> {
        let weights = PbcGreens::new(model)?.site_weights(site)?;
        Ok(Self::from_weights(&weights, model.energy_scale()))
    }

    pub fn from_weights(weights: &[SpectralWeight], scale: f64) -> Self {
        let n = weights.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if (weights[i].energy - weights[j].energy).norm() <= CLUSTER_TOLERANCE * scale {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut clusters = Vec::new();
        let mut persistent = Vec::new();
        for root in 0..n {
            let members: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == root).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let energy = members.iter().map(|&i| weights[i].energy).sum::<C64>() / m;
            let weight: C64 = members.iter().map(|&i| weights[i].weight).sum();
            let keep = if weight.norm() <= ZERO_WEIGHT {
                members.len()
            } else {
                clusters.push((energy, weight));
                members.len() - 1
            };
            persistent.extend(std::iter::repeat_n(energy, keep));
        }
        Self {
            clusters,
            persistent,
            scale,
        }
    }

    /// Total number of eigenvalues of the impurity Hamiltonian.
    pub fn len(&self) -> usize {
        self.clusters.len() + self.persistent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Eigenvalues unaffected by the impurity.
    pub fn persistent(&self) -> &[C64] {
        &self.persistent
    }

    /// Periodic spectrum in slot order: persistent values first, then cluster energies.
    pub fn periodic_roots(&self) -> Vec<C64> {
        self.persistent.iter().copied().chain(self.clusters.iter().map(|c| c.0)).collect()
    }

    /// `G(s, s; z)` from the pole decomposition.
    pub fn diagonal(&self, z: C64) -> C64 {
        self.clusters.iter().map(|(e, w)| w / (z - e)).sum()
    }

    fn evaluate(&self, z: C64, eps: f64) -> Evaluation {
        let nearest = self
            .clusters
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .0 - z).norm().total_cmp(&(b.1 .0 - z).norm()))
            .map(|(i, _)| i)
            .unwrap();
        let mut f_rest = ZERO;
        let mut df_rest = ZERO;
        let mut sum_inv = ZERO;
        let mut log_abs = 0.0;
        for (i, &(e, w)) in self.clusters.iter().enumerate() {
            if i == nearest {
                continue;
            }
            let inv = ONE / (z - e);
            f_rest += w * inv;
            df_rest -= w * inv * inv;
            sum_inv += inv;
            log_abs += (z - e).norm().ln();
        }
        let (e0, w0) = self.clusters[nearest];
        let u = z - e0;
        let a = ONE - eps * f_rest;
        let s = u * a - eps * w0;
        let ds = a - u * eps * df_rest;
        let backward = s.norm() / (u.norm() * (1.0 + (eps * f_rest).norm()) + (eps * w0).norm()).max(f64::MIN_POSITIVE);
        let forward = (s / ds).norm() / self.scale;
        let residual = backward.min(forward);
        Evaluation {
            log_derivative: sum_inv + ds / s,
            log_abs: log_abs + s.norm().ln(),
            residual,
        }
    }

    fn newton(&self, z0: C64, eps: f64) -> (C64, f64) {
        let mut z = z0;
        let mut ev = self.evaluate(z, eps);
        for _ in 0..200 {
            if ev.residual < 1e-15 || !ev.log_abs.is_finite() {
                break;
            }
            let step = ONE / ev.log_derivative;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let zt = z - t * step;
                let et = self.evaluate(zt, eps);
                if et.log_abs < ev.log_abs || et.residual < ev.residual {
                    z = zt;
                    ev = et;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved || (t * step).norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
                break;
            }
        }
        (z, ev.residual)
    }

    fn aberth(&self, seeds: &[C64], eps: f64) -> Vec<C64> {
        let mut z: Vec<C64> = seeds.to_vec();
        let m = z.len();
        for i in 0..m {
            for j in 0..i {
                if (z[i] - z[j]).norm() <= DISTINCT_ROOTS * self.scale {
                    z[i] += C64::from_polar(1e-6 * self.scale, 0.7 + i as f64);
                }
            }
        }
        for _ in 0..1000 {
            let mut max_step = 0.0f64;
            for i in 0..m {
                let ev = self.evaluate(z[i], eps);
                if ev.residual < 1e-16 {
                    continue;
                }
                let repulsion: C64 = (0..m).filter(|&j| j != i).map(|j| ONE / (z[i] - z[j])).sum();
                let w = ONE / (ev.log_derivative - repulsion);
                if w.re.is_finite() && w.im.is_finite() {
                    z[i] -= w;
                    max_step = max_step.max(w.norm() / z[i].norm().max(1.0));
                }
            }
            if max_step < 1e-15 {
                break;
            }
        }
        z
    }

    fn circle_seeds(&self, eps: f64) -> Vec<C64> {
        let m = self.clusters.len();
        let radius = self.clusters.iter().map(|c| c.0.norm()).fold(0.0, f64::max)
            + eps * self.clusters.iter().map(|c| c.1.norm()).sum::<f64>()
            + 1.0;
        (0..m)
            .map(|j| C64::from_polar(radius, 2.0 * PI * (j as f64 + 0.25) / m as f64 + 0.4))
            .collect()
    }

    /// Roots for potential `eps`, following `seeds` slot by slot.
    ///
    /// Without full-length seeds, the persistent values come first and the rest
    /// is found by simultaneous iteration from a circle.
    pub fn solve(&self, eps: f64, seeds: Option<&[C64]>) -> Result<PoleRoots> {
        self.solve_inner(eps, seeds, true)
    }

    fn solve_inner(&self, eps: f64, seeds: Option<&[C64]>, allow_simultaneous: bool) -> Result<PoleRoots> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "impurity strength must be finite and non-negative, got {eps}"
            )));
        }
        let total = self.len();
        let (persistent_slots, free_slots, free_seeds) = match seeds {
            Some(s) if s.len() == total => {
                let mut taken = vec![false; total];
                let mut pslots = Vec::with_capacity(self.persistent.len());
                for p in &self.persistent {
                    let slot = (0..total)
                        .filter(|&i| !taken[i])
                        .min_by(|&a, &b| (s[a] - p).norm().total_cmp(&(s[b] - p).norm()))
                        .unwrap();
                    taken[slot] = true;
                    pslots.push(slot);
                }
                let free: Vec<usize> = (0..total).filter(|&i| !taken[i]).collect();
                let fs = free.iter().map(|&i| s[i]).collect();
                (pslots, free, fs)
            }
            _ => {
                let np = self.persistent.len();
                ((0..np).collect(), (np..total).collect(), self.circle_seeds(eps))
            }
        };
        let mut roots = vec![ZERO; total];
        let mut residuals = vec![0.0; total];
        for (slot, p) in persistent_slots.iter().zip(&self.persistent) {
            roots[*slot] = *p;
        }
        if eps == 0.0 {
            let energies: Vec<C64> = self.clusters.iter().map(|c| c.0).collect();
            let report = match_spectra(&free_seeds, &energies, f64::INFINITY)?;
            for (i, slot) in free_slots.iter().enumerate() {
                roots[*slot] = energies[report.pairs[i]];
            }
            return Ok(PoleRoots {
                roots,
                residuals,
                simultaneous: false,
            });
        }

        let newton: Vec<(C64, f64)> = free_seeds.iter().map(|&z| self.newton(z, eps)).collect();
        let newton_ok = newton.iter().all(|(_, r)| *r < ROOT_TOLERANCE) && self.distinct(newton.iter().map(|x| x.0));
        let (free_roots, simultaneous) = if newton_ok {
            (newton, false)
        } else if allow_simultaneous {
            let z = self.aberth(&free_seeds, eps);
            let polished: Vec<(C64, f64)> = z
                .iter()
                .map(|&z| {
                    let (zp, rp) = self.newton(z, eps);
                    let r0 = self.evaluate(z, eps).residual;
                    if rp <= r0 && (zp - z).norm() < 1e-8 * self.scale {
                        (zp, rp)
                    } else {
                        (z, r0)
                    }
                })
                .collect();
            (polished, true)
        } else {
            (newton, false)
        };
        let failed: Vec<usize> = free_roots
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| !(*r < ROOT_TOLERANCE))
            .map(|(i, _)| free_slots[i])
            .collect();
        let distinct = self.distinct(free_roots.iter().map(|x| x.0));
        if !failed.is_empty() || !distinct {
            let worst = free_roots.iter().map(|x| x.1).fold(0.0, f64::max);
            return Err(Error::RootFinding {
                failed,
                total,
                details: format!(
                    "eps = {eps:.6e}: worst residual {worst:.3e}{}",
                    if distinct { "" } else { ", roots not distinct" }
                ),
            });
        }
        for (i, slot) in free_slots.iter().enumerate() {
            roots[*slot] = free_roots[i].0;
            residuals[*slot] = free_roots[i].1;
        }
        Ok(PoleRoots {
            roots,
            residuals,
            simultaneous,
        })
    }

    fn distinct(&self, roots: impl Iterator<Item = C64>) -> bool {
        let v: Vec<C64> = roots.collect();
        for i in 0..v.len() {
            for j in 0..i {
                if (v[i] - v[j]).norm() <= DISTINCT_ROOTS * self.scale {
                    return false;
                }
            }
        }
        true
    }
}

/// Eigenvalues of `H + eps |site><site|` from the pole condition, seeded by `seeds`.
pub fn solve_pole_equation(
    model: &LatticeModel,
    site: Site,
    eps: f64,
    seeds: &ComplexSpectrum,
) -> Result<ComplexSpectrum> {
    let problem = PoleProblem::new(model, site)?;
    let seeds = (!seeds.is_empty()).then_some(seeds.eigenvalues());
    let roots = problem.solve(eps, seeds)?;
    Ok(ComplexSpectrum::unlabeled(roots.roots))
}

/// Dense impurity Hamiltonian `H + eps |site><site|`.
pub fn impurity_matrix(model: &LatticeModel, site: Site, eps: f64) -> Result<Array2<C64>> {
    build_dense(model, &ImpuritySet::single(site, eps)?)
}

/// A coalescence of two eigenvalues located during an `eps` sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ExceptionalPointEvent {
    /// Grid index of the first grid value at or above the located `epsilon`.
    pub grid_index: usize,
    pub epsilon: f64,
    pub energy: C64,
    pub gap: f64,
    /// Largest `|<L|R>|` of the two unit-norm eigenvector pairs.
    pub overlap: f64,
    pub tracks: (usize, usize),
    pub confirmed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoleSweepResult {
    pub epsilons: Vec<f64>,
    /// Per grid value, eigenvalue `i` continues trajectory `i`.
    pub spectra: Vec<ComplexSpectrum>,
    /// Per grid value, confirmed exceptional points in the preceding grid cell.
    pub ep_flags: Vec<Vec<ExceptionalPointEvent>>,
    /// Candidates that failed confirmation.
    pub unconfirmed: Vec<ExceptionalPointEvent>,
    /// Grid indices reached only through simultaneous iteration (tracked roots nearly collided).
    pub ambiguous: Vec<usize>,
    /// Grid indices where tracking was re-seeded from the dense eigensolver.
    pub reseeded: Vec<usize>,
}

impl PoleSweepResult {
    pub fn ep_count(&self) -> usize {
        self.ep_flags.iter().map(Vec::len).sum()
    }

    pub fn max_abs_imag(&self, index: usize) -> f64 {
        self.spectra[index].max_abs_imag()
    }
}

struct Tracker<'a> {
    problem: &'a PoleProblem,
    model: &'a LatticeModel,
    site: Site,
    ambiguous: bool,
    reseeded: bool,
}

impl Tracker<'_> {
    fn unambiguous(&self, old: &[C64], new: &[C64]) -> bool {
        let scale = self.problem.scale();
        (0..old.len()).all(|i| {
            let moved = (new[i] - old[i]).norm();
            if moved <= DISTINCT_ROOTS * scale {
                return true;
            }
            let nearest = (0..old.len())
                .filter(|&j| j != i)
                .map(|j| (old[i] - old[j]).norm())
                .fold(f64::INFINITY, f64::min);
            moved <= 0.5 * nearest
        })
    }

    fn advance(&mut self, old: &[C64], a: f64, b: f64, depth: usize) -> Result<Vec<C64>> {
        if let Ok(r) = self.problem.solve_inner(b, Some(old), false) {
            if self.unambiguous(old, &r.roots) {
                return Ok(r.roots);
            }
        }
        if depth < MAX_SUBDIVISION {
            let mid = if a > 0.0 && b / a > 4.0 { (a * b).sqrt() } else { 0.5 * (a + b) };
            let half = self.advance(old, a, mid, depth + 1)?;
            return self.advance(&half, mid, b, depth + 1);
        }
        self.ambiguous = true;
        if let Ok(r) = self.problem.solve_inner(b, Some(old), true) {
            return Ok(r.roots);
        }
        self.reseeded = true;
        let eig = dense_eig(&impurity_matrix(self.model, self.site, b)?)?;
        let report = match_spectra(old, &eig.eigenvalues, f64::INFINITY)?;
        Ok(report.pairs.iter().map(|&j| eig.eigenvalues[j]).collect())
    }
}

/// Tracks the impurity spectrum along an increasing grid of potentials and locates exceptional points.
pub fn epsilon_sweep(model: &LatticeModel, site: Site, grid: &[f64]) -> Result<PoleSweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty potential grid".into()));
    }
    if grid.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidParameter("potentials must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("potential grid must be strictly increasing".into()));
    }
    let problem = PoleProblem::new(model, site)?;
    let mut tracker = Tracker {
        problem: &problem,
        model,
        site,
        ambiguous: false,
        reseeded: false,
    };
    let mut current = problem.periodic_roots();
    let mut last = 0.0;
    let mut trajectories = Vec::with_capacity(grid.len());
    let mut ambiguous = Vec::new();
    let mut reseeded = Vec::new();
    for (g, &eps) in grid.iter().enumerate() {
        tracker.ambiguous = false;
        tracker.reseeded = false;
        if eps > last || g == 0 {
            current = if eps == 0.0 {
                problem.periodic_roots()
            } else {
                tracker.advance(&current, last, eps, 0)?
            };
        }
        if tracker.ambiguous {
            ambiguous.push(g);
        }
        if tracker.reseeded {
            reseeded.push(g);
        }
        trajectories.push(current.clone());
        last = eps;
    }

    let real_model = [&model.intra, &model.forward, &model.backward]
        .iter()
        .flat_map(|m| m.iter())
        .chain(model.onsite.iter())
        .all(|z| z.im == 0.0);
    let candidates = if real_model {
        realness_candidates(grid, &trajectories, problem.scale())
    } else {
        gap_candidates(grid, &trajectories, problem.scale())
    };
    let events: Vec<ExceptionalPointEvent> = candidates
        .par_iter()
        .map(|c| refine_candidate(model, site, grid, c, real_model, problem.scale()))
        .collect::<Result<_>>()?;

    let mut ep_flags = vec![Vec::new(); grid.len()];
    let mut unconfirmed = Vec::new();
    for e in events {
        if e.confirmed {
            ep_flags[e.grid_index].push(e);
        } else {
            unconfirmed.push(e);
        }
    }
    let spectra = trajectories.into_iter().map(ComplexSpectrum::unlabeled).collect();
    Ok(PoleSweepResult {
        epsilons: grid.to_vec(),
        spectra,
        ep_flags,
        unconfirmed,
        ambiguous,
        reseeded,
    })
}

struct Candidate {
    lo: usize,
    hi: usize,
    tracks: (usize, usize),
    energy: C64,
}

/// For real Hamiltonians a pair of real eigenvalues can only turn into a
/// complex-conjugate pair (or back) through an exceptional point.
fn realness_candidates(grid: &[f64], traj: &[Vec<C64>], scale: f64) -> Vec<Candidate> {
    let tol = 1e-9 * scale;
    let mut out = Vec::new();
    for g in 0..grid.len().saturating_sub(1) {
        let (a, b) = (&traj[g], &traj[g + 1]);
        let changed: Vec<usize> = (0..a.len())
            .filter(|&i| (a[i].im.abs() <= tol) != (b[i].im.abs() <= tol))
            .collect();
        let mut used = vec![false; changed.len()];
        for x in 0..changed.len() {
            if used[x] {
                continue;
            }
            let i = changed[x];
            let side = if a[i].im.abs() > tol { a } else { b };
            let best = (0..changed.len())
                .filter(|&y| y != x && !used[y])
                .filter(|&y| side[changed[y]].im.abs() > tol)
                .min_by(|&p, &q| {
                    (side[changed[p]] - side[i].conj())
                        .norm()
                        .total_cmp(&(side[changed[q]] - side[i].conj()).norm())
                });
            if let Some(y) = best {
                used[x] = true;
                used[y] = true;
                out.push(Candidate {
                    lo: g,
                    hi: g + 1,
                    tracks: (i, changed[y]),
                    energy: C64::new(side[i].re, 0.0),
                });
            }
        }
    }
    out
}

/// For general Hamiltonians, interior minima of the distance between tracked roots.
fn gap_candidates(grid: &[f64], traj: &[Vec<C64>], scale: f64) -> Vec<Candidate> {
    let mut out = Vec::new();
    if grid.len() < 3 {
        return out;
    }
    let m = traj[0].len();
    for g in 1..grid.len() - 1 {
        for i in 0..m {
            for j in i + 1..m {
                let d = |t: &Vec<C64>| (t[i] - t[j]).norm();
                let (dl, dm, dr) = (d(&traj[g - 1]), d(&traj[g]), d(&traj[g + 1]));
                if dm < dl && dm < dr && dm < 1e-2 * scale {
                    out.push(Candidate {
                        lo: g - 1,
                        hi: g + 1,
                        tracks: (i, j),
                        energy: 0.5 * (traj[g][i] + traj[g][j]),
                    });
                }
            }
        }
    }
    out
}

/// The two eigenvalues nearest `target` with their `|<L|R>|`.
fn nearest_pair(model: &LatticeModel, site: Site, eps: f64, target: C64) -> Result<(C64, C64, f64)> {
    let eig = dense_eig(&impurity_matrix(model, site, eps)?)?;
    let mut idx: Vec<usize> = (0..eig.len()).collect();
    idx.sort_by(|&a, &b| (eig.eigenvalues[a] - target).norm().total_cmp(&(eig.eigenvalues[b] - target).norm()));
    let (i, j) = (idx[0], idx[1]);
    let ov = |k: usize| pair(eig.left.column(k), eig.right.column(k)).norm();
    Ok((eig.eigenvalues[i], eig.eigenvalues[j], ov(i).max(ov(j))))
}

fn refine_candidate(
    model: &LatticeModel,
    site: Site,
    grid: &[f64],
    c: &Candidate,
    real_model: bool,
    scale: f64,
) -> Result<ExceptionalPointEvent> {
    let (mut lo, mut hi) = (grid[c.lo], grid[c.hi]);
    let mut target = c.energy;
    let (eps, l1, l2, overlap) = if real_model {
        // sign of (l1 - l2)^2 distinguishes a real pair (> 0) from a conjugate pair (< 0)
        let sign = |eps: f64, target: C64| -> Result<(bool, C64, C64, f64)> {
            let (a, b, ov) = nearest_pair(model, site, eps, target)?;
            Ok(((a - b).powu(2).re > 0.0, a, b, ov))
        };
        let (s_lo, ..) = sign(lo, target)?;
        for _ in 0..80 {
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (s, a, b, _) = sign(mid, target)?;
            target = C64::new(0.5 * (a.re + b.re), 0.0);
            if s == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (_, a1, b1, o1) = sign(lo, target)?;
        let (_, a2, b2, o2) = sign(hi, target)?;
        if (a1 - b1).norm() <= (a2 - b2).norm() {
            (lo, a1, b1, o1)
        } else {
            (hi, a2, b2, o2)
        }
    } else {
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        let gap = |eps: f64, target: C64| -> Result<(f64, C64, C64, f64)> {
            let (a, b, ov) = nearest_pair(model, site, eps, target)?;
            Ok(((a - b).norm(), a, b, ov))
        };
        let mut x1 = hi - golden * (hi - lo);
        let mut x2 = lo + golden * (hi - lo);
        let mut f1 = gap(x1, target)?;
        let mut f2 = gap(x2, target)?;
        for _ in 0..80 {
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            if f1.0 <= f2.0 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                target = 0.5 * (f2.1 + f2.2);
                x1 = hi - golden * (hi - lo);
                f1 = gap(x1, target)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                target = 0.5 * (f1.1 + f1.2);
                x2 = lo + golden * (hi - lo);
                f2 = gap(x2, target)?;
            }
        }
        let best = if f1.0 <= f2.0 { (x1, f1) } else { (x2, f2) };
        (best.0, best.1 .1, best.1 .2, best.1 .3)
    };
    let gap = (l1 - l2).norm();
    Ok(ExceptionalPointEvent {
        grid_index: grid.partition_point(|&g| g < eps).min(grid.len() - 1),
        epsilon: eps,
        energy: 0.5 * (l1 + l2),
        gap,
        overlap,
        tracks: c.tracks,
        confirmed: gap < EP_GAP_TOLERANCE * scale && overlap < EP_OVERLAP_TOLERANCE,
    })
}

/// How an open-lattice eigenstate was extracted from the resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenRoute {
    /// Column and row of the periodic `G` at the vacancy site, evaluated at the eigenvalue.
    Direct,
    /// Residue of the vacancy-dressed resolvent on a small circle around the eigenvalue.
    Contour,
}

/// Unnormalized open-lattice eigenstate over the active sites.
///
/// `right[x] = G(x, s; E)` and `left[x] = G(s, x; E)` (bra components).
#[derive(Debug, Clone, Serialize)]
pub struct GreenEigenstate {
    pub energy: C64,
    pub right: Array1<C64>,
    pub left: Array1<C64>,
    pub route: GreenRoute,
    pub residual: f64,
    pub left_residual: f64,
}

/// Number of trapezoid nodes on the residue contour.
const CONTOUR_NODES: usize = 32;

fn vacancy_setup(model: &LatticeModel) -> Result<(PbcGreens, usize, Vec<usize>)> {
    if model.boundary != Boundary::Periodic || model.vacancies.len() != 1 {
        return Err(Error::Domain(
            "Green's-function eigenstates need a periodic lattice opened by exactly one vacancy".into(),
        ));
    }
    let mut base = model.clone();
    base.vacancies.clear();
    let pg = PbcGreens::new(&base)?;
    Ok((pg, model.vacancies[0], model.active_sites()))
}

/// Eigenstates of the vacancy-opened lattice at `energy` from periodic Green's functions.
///
/// When `energy` coincides with a periodic eigenvalue the bare `G` is singular
/// there, and the state is taken from the residue of `G^inf` on a circle of
/// radius `1e-4 * scale` instead.
pub fn obc_eigenstates_green(model: &LatticeModel, energy: C64) -> Result<GreenEigenstate> {
    let (pg, s, active) = vacancy_setup(model)?;
    let h = build_dense(model, &ImpuritySet::empty())?;
    green_state(&pg, &h, s, &active, None, energy, model.energy_scale())
}

/// `eps = None` dresses with a vacancy at `s`, otherwise with on-site potential `eps`.
fn green_state(
    pg: &PbcGreens,
    h: &Array2<C64>,
    s: usize,
    active: &[usize],
    eps: Option<f64>,
    energy: C64,
    scale: f64,
) -> Result<GreenEigenstate> {
    let collides = pg
        .poles()
        .iter()
        .any(|(_, e)| (energy - e).norm() < COLLISION_TOLERANCE * scale);
    let (right, left, route) = if collides {
        let (r, l) = contour_residue(pg, s, active, eps, energy, scale)?;
        (r, l, GreenRoute::Contour)
    } else {
        let mut idx = active.to_vec();
        idx.push(s);
        let g = pg.block(energy, &idx)?;
        let last = idx.len() - 1;
        let right: Array1<C64> = (0..active.len()).map(|i| g[[i, last]]).collect();
        let left: Array1<C64> = (0..active.len()).map(|i| g[[last, i]]).collect();
        (right, left, GreenRoute::Direct)
    };
    if norm2(right.view()) == 0.0 || norm2(left.view()) == 0.0 {
        return Err(Error::Collision { energy });
    }
    let residual = eigen_residual(h, energy, right.view());
    let left_residual = left_eigen_residual(h, energy, left.view());
    let tolerance = STATE_RESIDUAL_TOLERANCE * scale;
    if !(residual <= tolerance && left_residual <= tolerance) {
        return Err(Error::Residual {
            energy,
            residual: residual.max(left_residual),
            tolerance,
        });
    }
    Ok(GreenEigenstate {
        energy,
        right,
        left,
        route,
        residual,
        left_residual,
    })
}

fn contour_residue(
    pg: &PbcGreens,
    s: usize,
    active: &[usize],
    eps: Option<f64>,
    energy: C64,
    scale: f64,
) -> Result<(Array1<C64>, Array1<C64>)> {
    let eta = 1e-4 * scale.max(energy.norm());
    let mut idx = active.to_vec();
    idx.push(s);
    let last = idx.len() - 1;
    let n = active.len();
    let mut residue = Array2::<C64>::zeros((n, n));
    for j in 0..CONTOUR_NODES {
        let theta = 2.0 * PI * (j as f64 + 0.5) / CONTOUR_NODES as f64;
        let dz = C64::from_polar(eta, theta);
        let g = pg.block(energy + dz, &idx)?;
        let gss = g[[last, last]];
        let coupling = match eps {
            None => -1.0 / gss,
            Some(e) => e / (1.0 - e * gss),
        };
        let w = dz / CONTOUR_NODES as f64;
        for x in 0..n {
            let gx = g[[x, last]] * coupling;
            for m in 0..n {
                residue[[x, m]] += w * (g[[x, m]] + gx * g[[last, m]]);
            }
        }
    }
    let m_star = (0..n)
        .max_by(|&a, &b| residue[[a, a]].norm().total_cmp(&residue[[b, b]].norm()))
        .ok_or(Error::Collision { energy })?;
    let right = residue.column(m_star).to_owned();
    let left = residue.row(m_star).to_owned();
    Ok((right, left))
}

/// Green's-function eigenstates for every value of `spectrum` (columns in spectrum order).
pub fn obc_eigenstates_green_all(
    model: &LatticeModel,
    spectrum: &ComplexSpectrum,
) -> Result<Vec<GreenEigenstate>> {
    let (pg, s, active) = vacancy_setup(model)?;
    let h = build_dense(model, &ImpuritySet::empty())?;
    let scale = model.energy_scale();
    spectrum
        .eigenvalues()
        .par_iter()
        .map(|&e| green_state(&pg, &h, s, &active, None, e, scale))
        .collect()
}

/// Green's-function eigenstates of a periodic lattice carrying potential `eps` at `site`.
///
/// Off the periodic spectrum `right[x] = G(x, site; E)` and `left[x] = G(site, x; E)`;
/// on it the residue of the dressed resolvent is used.
pub fn impurity_eigenstates_green(
    model: &LatticeModel,
    site: Site,
    eps: f64,
    spectrum: &ComplexSpectrum,
) -> Result<Vec<GreenEigenstate>> {
    let pg = PbcGreens::new(model)?;
    let s = model.site_index(site)?;
    let h = impurity_matrix(model, site, eps)?;
    let active: Vec<usize> = (0..model.full_dimension()).collect();
    let scale = model.energy_scale();
    spectrum
        .eigenvalues()
        .par_iter()
        .map(|&e| green_state(&pg, &h, s, &active, Some(eps), e, scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::overlap;

    fn hn(delta: f64, n: usize) -> (HatanoNelsonParams, LatticeModel) {
        let p = HatanoNelsonParams::new(1.0, delta, n).unwrap();
        (p, LatticeModel::hatano_nelson(&p, Boundary::Periodic).unwrap())
    }

    #[test]
    fn hermitian_open_chain_spectrum() {
        let s = obc_spectrum_hn(&HatanoNelsonParams::new(1.0, 0.0, 4).unwrap()).unwrap();
        let expect = [2f64.sqrt(), 0.0, -(2f64.sqrt())];
        for (z, e) in s.eigenvalues().iter().zip(expect) {
            assert!((z.re - e).abs() < 1e-15 && z.im == 0.0);
        }
    }

    #[test]
    fn flat_band_ssh_spectrum() {
        let s = obc_spectrum_ssh(&SshParams::new(1.0, 3.0, 2.0, 5).unwrap()).unwrap();
        assert_eq!(s.len(), 9);
        for (l, z) in s.iter() {
            let expect = match l {
                StateLabel::Standing { band, .. } => band.sign() * 3.0,
                _ => 0.0,
            };
            assert!((z - C64::new(expect, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn pole_roots_match_dense_eigenvalues() {
        let (_, m) = hn(0.3, 20);
        let site = m.last_site();
        let problem = PoleProblem::new(&m, site).unwrap();
        for eps in [0.1, 1.0, 5.0, 50.0] {
            let roots = problem.solve(eps, None).unwrap();
            let eig = dense_eig(&impurity_matrix(&m, site, eps).unwrap()).unwrap();
            let rep = match_spectra(&roots.roots, &eig.eigenvalues, 1e-8).unwrap();
            assert!(rep.max_distance < 1e-8, "eps = {eps}: {}", rep.max_distance);
        }
    }

    #[test]
    fn degenerate_ring_keeps_persistent_roots() {
        let (_, m) = hn(0.0, 8);
        let problem = PoleProblem::new(&m, m.last_site()).unwrap();
        assert_eq!(problem.len(), 8);
        assert_eq!(problem.persistent().len(), 3);
        let roots = problem.solve(2.0, None).unwrap();
        let eig = dense_eig(&impurity_matrix(&m, m.last_site(), 2.0).unwrap()).unwrap();
        assert!(match_spectra(&roots.roots, &eig.eigenvalues, 1e-10).is_ok());
    }

    #[test]
    fn small_potential_is_perturbative() {
        let (p, m) = hn(0.3, 20);
        let pbc = crate::model::pbc_spectrum_hn(&p).unwrap();
        let roots = solve_pole_equation(&m, m.last_site(), 1e-6, &pbc).unwrap();
        for (a, b) in roots.eigenvalues().iter().zip(pbc.eigenvalues()) {
            assert!((a - b).norm() < 1e-4);
        }
    }

    #[test]
    fn green_states_hermitian_standing_waves() {
        let (p, m) = hn(0.0, 12);
        let opened = m.opened().unwrap();
        let spec = obc_spectrum_hn(&p).unwrap();
        let states = obc_eigenstates_green_all(&opened, &spec).unwrap();
        for (st, (label, _)) in states.iter().zip(spec.iter()) {
            let q = label.q().unwrap();
            let wave: Array1<C64> = (1..12)
                .map(|n| C64::new((PI * q as f64 * n as f64 / 12.0).sin(), 0.0))
                .collect();
            assert!(overlap(st.right.view(), wave.view()) > 1.0 - 1e-10, "q = {q} via {:?}", st.route);
            if q % 2 == 0 {
                assert_eq!(st.route, GreenRoute::Contour);
            }
        }
    }

    #[test]
    fn non_eigenvalue_fails_residual_check() {
        let (_, m) = hn(0.2, 10);
        let opened = m.opened().unwrap();
        assert!(matches!(
            obc_eigenstates_green(&opened, C64::new(0.123, 0.0)),
            Err(Error::Residual { .. })
        ));
    }

    #[test]
    fn ssh_zero_mode_lives_on_a_sites() {
        let p = SshParams::new(1.0, 2.0, 1.0, 20).unwrap();
        let opened = LatticeModel::ssh(&p, Boundary::Periodic).unwrap().opened().unwrap();
        let st = obc_eigenstates_green(&opened, ZERO).unwrap();
        let max = st.right.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for n in 0..19 {
            assert!(st.right[2 * n + 1].norm() < 1e-14 * max);
        }
        let ratio = st.right[2] / st.right[0];
        assert!((ratio - C64::new(-0.25, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hermitian_sweep_has_no_exceptional_points() {
        let (_, m) = hn(0.0, 10);
        let grid: Vec<f64> = (0..30).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect();
        let res = epsilon_sweep(&m, m.last_site(), &grid).unwrap();
        assert_eq!(res.ep_count(), 0);
        assert!(res.spectra.iter().all(|s| s.max_abs_imag() < 1e-12));
    }

    #[test]
    fn impurity_states_are_eigenvectors() {
        for delta in [0.3, 0.0] {
            let (_, ring) = hn(delta, 10);
            let site = ring.last_site();
            let roots = PoleProblem::new(&ring, site).unwrap().solve(2.5, None).unwrap();
            let spec = ComplexSpectrum::unlabeled(roots.roots);
            let states = impurity_eigenstates_green(&ring, site, 2.5, &spec).unwrap();
            assert_eq!(states.len(), 10);
            assert!(states.iter().all(|s| s.residual < 1e-8 && s.left_residual < 1e-8));
            if delta == 0.0 {
                assert!(states.iter().any(|s| s.route == GreenRoute::Contour));
            }
        }
    }
}
