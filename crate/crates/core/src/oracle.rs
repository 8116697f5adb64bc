//! Brute-force dense eigensolver used as the independent reference.
//!
//! General complex matrices are diagonalized by
//!
//! 1. diagonal similarity balancing (minimizing the off-diagonal Frobenius
//!    norm over positive diagonal scalings, solved in log coordinates),
//! 2. Householder reduction to upper Hessenberg form,
//! 3. single-shift implicit QR iteration to complex Schur form,
//! 4. back substitution on the triangular factor for right and left vectors.
//!
//! Balancing matters for the open non-Hermitian lattices handled here: their
//! eigenvector matrices are exponentially ill-conditioned in the chain length,
//! but a diagonal similarity removes nearly all of that non-normality.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{frobenius, left_eigen_residual, eigen_residual, norm2, pair, Lu, C64, ONE, ZERO};
use crate::spectrum::{ComplexSpectrum, EigenpairSet, Normalization};

/// Largest matrix dimension accepted by [`dense_eig`].
pub const DEFAULT_DIMENSION_CAP: usize = 2000;
/// Base tolerance of the oracle comparisons.
pub const BASE_TOLERANCE: f64 = 1e-10;
/// Upper bound of a conditioning-relaxed tolerance.
pub const MAX_RELAXED_TOLERANCE: f64 = 1e-4;
/// Relative gap below which two eigenvalues count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

const BALANCE_NEWTON_MAX_DIM: usize = 500;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub dimension_cap: usize,
    pub balance: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            dimension_cap: DEFAULT_DIMENSION_CAP,
            balance: true,
        }
    }
}

/// Full eigendecomposition of a dense matrix.
///
/// `right` columns are unit-norm right eigenvectors. `left` columns are
/// unit-norm left eigenvectors stored as bra components, i.e. `l^T A = lambda l^T`.
#[derive(Debug, Clone, Serialize)]
pub struct DenseEigenResult {
    pub eigenvalues: Vec<C64>,
    pub right: Array2<C64>,
    pub left: Array2<C64>,
    /// `||A v - lambda v|| / (||A|| ||v||)`
    pub residuals: Vec<f64>,
    pub left_residuals: Vec<f64>,
    /// Eigenvalue condition numbers `||l|| ||v|| / |l^T v|` of the input matrix.
    pub condition: Vec<f64>,
    /// The same condition numbers after balancing; these govern the attained accuracy.
    pub balanced_condition: Vec<f64>,
    /// Eigenvalues sharing a cluster within [`DEGENERACY_TOLERANCE`].
    pub degenerate: Vec<bool>,
    pub qr_iterations: usize,
    pub matrix_norm: f64,
}

impl DenseEigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectrum(&self) -> ComplexSpectrum {
        ComplexSpectrum::unlabeled(self.eigenvalues.clone())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .chain(self.left_residuals.iter())
            .fold(0.0, |a, &b| a.max(b))
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    pub fn max_balanced_condition(&self) -> f64 {
        self.balanced_condition.iter().fold(1.0, |a, &b| a.max(b))
    }

    /// Tolerance for comparisons against eigenvalue `k`, relaxed by its conditioning.
    pub fn tolerance_for(&self, k: usize, base: f64) -> Result<f64> {
        relaxed_tolerance(base, self.balanced_condition[k], self.matrix_norm)
    }

    /// Index of the eigenvalue nearest to `z`.
    pub fn nearest(&self, z: C64) -> usize {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - z).norm().total_cmp(&(b.1 - z).norm()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Unnormalized eigenpair set (unit-norm right and left vectors).
    pub fn eigenpairs(&self) -> EigenpairSet {
        EigenpairSet::new(
            self.right.clone(),
            self.left.clone(),
            self.spectrum(),
            Normalization::Raw,
        )
        .expect("consistent shapes")
    }
}

/// Tolerance relaxed in proportion to an eigenvalue condition number.
///
/// Fails once the relaxation would exceed [`MAX_RELAXED_TOLERANCE`].
pub fn relaxed_tolerance(base: f64, condition: f64, scale: f64) -> Result<f64> {
    let tol = base.max(100.0 * f64::EPSILON * condition * scale.max(1.0));
    if tol > MAX_RELAXED_TOLERANCE || !tol.is_finite() {
        return Err(Error::Domain(format!(
            "conditioning {condition:.3e} would relax tolerance to {tol:.3e} (> {MAX_RELAXED_TOLERANCE:.0e})"
        )));
    }
    Ok(tol)
}

pub fn dense_eig(a: &Array2<C64>) -> Result<DenseEigenResult> {
    dense_eig_with(a, OracleOptions::default())
}

pub fn dense_eig_with(a: &Array2<C64>, opts: OracleOptions) -> Result<DenseEigenResult> {
    let (n, m) = a.dim();
    if n != m {
        return Err(Error::InvalidParameter(format!("matrix is {n}x{m}, not square")));
    }
    if n > opts.dimension_cap {
        return Err(Error::InvalidParameter(format!(
            "dimension {n} exceeds the oracle cap {}",
            opts.dimension_cap
        )));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(DenseEigenResult {
            eigenvalues: vec![],
            right: Array2::zeros((0, 0)),
            left: Array2::zeros((0, 0)),
            residuals: vec![],
            left_residuals: vec![],
            condition: vec![],
            balanced_condition: vec![],
            degenerate: vec![],
            qr_iterations: 0,
            matrix_norm: 0.0,
        });
    }

    let log_scale = if opts.balance { balance(a) } else { vec![0.0; n] };
    let mut h = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * (log_scale[j] - log_scale[i]).exp());
    let balanced_norm = frobenius(&h);

    let mut z = Array2::from_diag_elem(n, ONE);
    hessenberg(&mut h, &mut z);
    let qr_iterations = schur(&mut h, &mut z)?;
    let t = h;

    let eigenvalues: Vec<C64> = (0..n).map(|k| t[[k, k]]).collect();
    let xr = triangular_right_vectors(&t);
    let yl = triangular_left_vectors(&t);

    // balanced-basis vectors
    let vb = z.dot(&xr);
    let lb = yl.t().dot(&z.t().mapv(|c| c.conj())).reversed_axes();

    let scale: Array1<f64> = log_scale.iter().map(|x| x.exp()).collect();
    let mut right = Array2::zeros((n, n));
    let mut left = Array2::zeros((n, n));
    let mut balanced_condition = Vec::with_capacity(n);
    for k in 0..n {
        let v = vb.column(k);
        let l = lb.column(k);
        balanced_condition.push(norm2(v) * norm2(l) / pair(l, v).norm());
        let mut rv: Array1<C64> = v.iter().zip(scale.iter()).map(|(x, s)| x * *s).collect();
        let mut lv: Array1<C64> = l.iter().zip(scale.iter()).map(|(x, s)| x / *s).collect();
        let rn = norm2(rv.view());
        let ln = norm2(lv.view());
        rv.mapv_inplace(|x| x / rn);
        lv.mapv_inplace(|x| x / ln);
        right.column_mut(k).assign(&rv);
        left.column_mut(k).assign(&lv);
    }

    let matrix_norm = frobenius(a);
    let mut residuals = Vec::with_capacity(n);
    let mut left_residuals = Vec::with_capacity(n);
    let mut condition = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = eigenvalues[k];
        let denom = matrix_norm.max(f64::MIN_POSITIVE);
        residuals.push(eigen_residual(a, lambda, right.column(k)) / denom);
        left_residuals.push(left_eigen_residual(a, lambda, left.column(k)) / denom);
        condition.push(1.0 / pair(left.column(k), right.column(k)).norm());
    }

    let degenerate = degeneracy_flags(&eigenvalues, &balanced_condition);

    Ok(DenseEigenResult {
        eigenvalues,
        right,
        left,
        residuals,
        left_residuals,
        condition,
        balanced_condition,
        degenerate,
        qr_iterations,
        matrix_norm: balanced_norm,
    })
}

/// Eigendecomposition of `H` through the similar matrix `W^{-1} H W` for a diagonal `W`.
///
/// Vectors are mapped back as `R = W phi` and `L = phi_L W^{-1}`. Useful when
/// `W^{-1} H W` is much better conditioned than `H` (e.g. Hermitian).
pub fn dense_eig_similarity(h: &Array2<C64>, w_diag: &[C64]) -> Result<DenseEigenResult> {
    let n = h.nrows();
    if w_diag.len() != n {
        return Err(Error::InvalidParameter(format!(
            "similarity diagonal has length {} for a {n}x{n} matrix",
            w_diag.len()
        )));
    }
    if w_diag.iter().any(|w| w.norm() == 0.0) {
        return Err(Error::Domain("similarity transform is singular".into()));
    }
    let image = Array2::from_shape_fn((n, n), |(i, j)| h[[i, j]] * w_diag[j] / w_diag[i]);
    let mut res = dense_eig(&image)?;
    for k in 0..n {
        let mut rv: Array1<C64> = res.right.column(k).iter().zip(w_diag).map(|(x, w)| x * w).collect();
        let mut lv: Array1<C64> = res.left.column(k).iter().zip(w_diag).map(|(x, w)| x / w).collect();
        let rn = norm2(rv.view());
        let ln = norm2(lv.view());
        rv.mapv_inplace(|x| x / rn);
        lv.mapv_inplace(|x| x / ln);
        res.residuals[k] = eigen_residual(h, res.eigenvalues[k], rv.view()) / frobenius(h).max(f64::MIN_POSITIVE);
        res.left_residuals[k] =
            left_eigen_residual(h, res.eigenvalues[k], lv.view()) / frobenius(h).max(f64::MIN_POSITIVE);
        res.condition[k] = 1.0 / pair(lv.view(), rv.view()).norm();
        res.right.column_mut(k).assign(&rv);
        res.left.column_mut(k).assign(&lv);
    }
    Ok(res)
}

fn degeneracy_flags(eigenvalues: &[C64], condition: &[f64]) -> Vec<bool> {
    let n = eigenvalues.len();
    let mut flags = vec![false; n];
    for i in 0..n {
        if condition[i] > 1e12 || !condition[i].is_finite() {
            flags[i] = true;
        }
        for j in i + 1..n {
            let scale = eigenvalues[i].norm().max(eigenvalues[j].norm()).max(1.0);
            if (eigenvalues[i] - eigenvalues[j]).norm() <= DEGENERACY_TOLERANCE * scale {
                flags[i] = true;
                flags[j] = true;
            }
        }
    }
    flags
}

/// Log-scales `x` of the balancing similarity `B = D^{-1} A D`, `D = diag(e^x)`.
///
/// Minimizes `f(x) = sum_{i != j} |a_ij|^2 e^{2 (x_j - x_i)}`, which is convex in `x`;
/// coordinate sweeps (Osborne) get close and Newton steps finish the job.
fn balance(a: &Array2<C64>) -> Vec<f64> {
    let n = a.nrows();
    let mut x = vec![0.0; n];
    if n < 2 {
        return x;
    }
    let w: Vec<(usize, usize, f64)> = a
        .indexed_iter()
        .filter(|((i, j), z)| i != j && z.norm() > 0.0)
        .map(|((i, j), z)| (i, j, z.norm_sqr()))
        .collect();
    if w.is_empty() {
        return x;
    }
    let norm0: f64 = w.iter().map(|e| e.2).sum();
    let weights: Vec<(usize, usize, f64)> = w.into_iter().map(|(i, j, v)| (i, j, v / norm0)).collect();

    const X_MAX: f64 = 300.0;
    let objective = |x: &[f64]| -> f64 {
        weights
            .iter()
            .map(|&(i, j, v)| v * (2.0 * (x[j] - x[i])).exp())
            .sum()
    };
    let col_row = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut c = vec![0.0; n];
        let mut r = vec![0.0; n];
        for &(i, j, v) in &weights {
            let e = v * (2.0 * (x[j] - x[i])).exp();
            c[j] += e;
            r[i] += e;
        }
        (c, r)
    };
    let imbalance = |c: &[f64], r: &[f64]| -> f64 {
        c.iter()
            .zip(r)
            .filter(|(c, r)| **c + **r > 0.0)
            .map(|(c, r)| (c - r).abs() / (c + r))
            .fold(0.0, f64::max)
    };

    // Osborne sweeps: exact minimization along each coordinate.
    let mut adjacency: Vec<Vec<(usize, f64, bool)>> = vec![Vec::new(); n];
    for &(i, j, v) in &weights {
        adjacency[j].push((i, v, true)); // contributes to column j
        adjacency[i].push((j, v, false)); // contributes to row i
    }
    for _ in 0..20 {
        let mut moved = 0.0f64;
        for k in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for &(other, v, is_col) in &adjacency[k] {
                if is_col {
                    c += v * (2.0 * (x[k] - x[other])).exp();
                } else {
                    r += v * (2.0 * (x[other] - x[k])).exp();
                }
            }
            if c > 0.0 && r > 0.0 {
                let step = 0.25 * (r / c).ln();
                let new = (x[k] + step).clamp(-X_MAX, X_MAX);
                moved = moved.max((new - x[k]).abs());
                x[k] = new;
            }
        }
        if moved < 1e-3 {
            break;
        }
    }
    if n > BALANCE_NEWTON_MAX_DIM {
        return x;
    }

    let mut f = objective(&x);
    for _ in 0..100 {
        let (c, r) = col_row(&x);
        if imbalance(&c, &r) < 1e-12 {
            break;
        }
        let grad: Vec<f64> = c.iter().zip(&r).map(|(c, r)| 2.0 * (c - r)).collect();
        let mut hess = Array2::<C64>::zeros((n, n));
        for &(i, j, v) in &weights {
            let e = 4.0 * v * (2.0 * (x[j] - x[i])).exp();
            hess[[i, i]] += e;
            hess[[j, j]] += e;
            hess[[i, j]] -= e;
            hess[[j, i]] -= e;
        }
        let diag_max = (0..n).map(|k| hess[[k, k]].re).fold(0.0, f64::max);
        for k in 0..n {
            hess[[k, k]] += 1e-10 * diag_max + 1e-300;
        }
        let Ok(lu) = Lu::new(&hess) else { break };
        let rhs: Array1<C64> = grad.iter().map(|g| C64::new(-g, 0.0)).collect();
        let mut dir: Vec<f64> = lu.solve(rhs.view()).iter().map(|z| z.re).collect();
        let dmax = dir.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        if dmax > 4.0 {
            dir.iter_mut().for_each(|d| *d *= 4.0 / dmax);
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if slope >= 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(x, d)| (x + t * d).clamp(-X_MAX, X_MAX))
                .collect();
            let ft = objective(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                let rel = (f - ft) / f;
                x = trial;
                f = ft;
                accepted = rel > 1e-15;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    x.iter_mut().for_each(|v| *v -= mean);
    x
}

/// Householder reduction to upper Hessenberg form, accumulating `Z`.
fn hessenberg(h: &mut Array2<C64>, z: &mut Array2<C64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let tail: f64 = (k + 2..n).map(|i| h[[i, k]].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = h[[k + 1, k]];
        let alpha_norm = (tail + x0.norm_sqr()).sqrt();
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let alpha = -phase * alpha_norm;
        let mut v: Vec<C64> = (k + 1..n).map(|i| h[[i, k]]).collect();
        v[0] -= alpha;
        let vn = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= vn);

        // H <- P H
        for j in 0..n {
            let s: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * h[[k + 1 + i, j]]).sum();
            if s != ZERO {
                for (i, vi) in v.iter().enumerate() {
                    h[[k + 1 + i, j]] -= 2.0 * vi * s;
                }
            }
        }
        // H <- H P, Z <- Z P
        for mat in [&mut *h, &mut *z] {
            for i in 0..n {
                let s: C64 = v.iter().enumerate().map(|(j, vj)| mat[[i, k + 1 + j]] * vj).sum();
                if s != ZERO {
                    for (j, vj) in v.iter().enumerate() {
                        mat[[i, k + 1 + j]] -= 2.0 * s * vj.conj();
                    }
                }
            }
        }
        h[[k + 1, k]] = alpha;
        for i in k + 2..n {
            h[[i, k]] = ZERO;
        }
    }
}

/// Rotation `[c s; -conj(s) c]` mapping `(x, y)` to `(r, 0)`.
fn givens(x: C64, y: C64) -> (f64, C64, C64) {
    if y == ZERO {
        return (1.0, ZERO, x);
    }
    if x == ZERO {
        return (0.0, y.conj() / y.norm(), C64::new(y.norm(), 0.0));
    }
    let ax = x.norm();
    let norm = ax.hypot(y.norm());
    let phase = x / ax;
    (ax / norm, phase * y.conj() / norm, phase * norm)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mid = (a + d) * 0.5;
    let l1 = mid + disc;
    let l2 = mid - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Single-shift implicit QR on a Hessenberg matrix, reducing it to upper triangular form.
fn schur(h: &mut Array2<C64>, z: &mut Array2<C64>) -> Result<usize> {
    let n = h.nrows();
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ulp);
    let hnorm = frobenius(h).max(f64::MIN_POSITIVE);
    let max_iter = 30 * n.max(10);
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n as isize - 1;

    while hi >= 0 {
        let hiu = hi as usize;
        let mut l = hiu;
        while l > 0 {
            let sub = h[[l, l - 1]].norm();
            if sub <= smlnum {
                h[[l, l - 1]] = ZERO;
                break;
            }
            let mut tst = h[[l - 1, l - 1]].norm() + h[[l, l]].norm();
            if tst == 0.0 {
                if l >= 2 {
                    tst += h[[l - 1, l - 2]].norm();
                }
                if l < hiu {
                    tst += h[[l + 1, l]].norm();
                }
                if tst == 0.0 {
                    tst = hnorm;
                }
            }
            if sub <= ulp * tst {
                let up = h[[l - 1, l]].norm();
                let ab = sub.max(up);
                let ba = sub.min(up);
                let diff = (h[[l - 1, l - 1]] - h[[l, l]]).norm();
                let aa = h[[l, l]].norm().max(diff);
                let bb = h[[l, l]].norm().min(diff);
                let s = aa + ab;
                if ba * (ab / s) <= smlnum.max(ulp * (bb * (aa / s))) {
                    h[[l, l - 1]] = ZERO;
                    break;
                }
            }
            l -= 1;
        }
        if l == hiu {
            hi -= 1;
            since_deflation = 0;
            continue;
        }

        total += 1;
        since_deflation += 1;
        if total > max_iter {
            return Err(Error::NoConvergence {
                iterations: total,
                remaining: hiu + 1,
            });
        }

        let mu = if since_deflation % 11 == 10 {
            h[[hiu, hiu]] + 0.75 * h[[hiu, hiu - 1]].norm()
        } else if since_deflation % 11 == 0 && since_deflation > 0 {
            h[[l, l]] + 0.75 * h[[l + 1, l]].norm()
        } else {
            wilkinson_shift(h[[hiu - 1, hiu - 1]], h[[hiu - 1, hiu]], h[[hiu, hiu - 1]], h[[hiu, hiu]])
        };

        let mut x = h[[l, l]] - mu;
        let mut y = h[[l + 1, l]];
        for k in l..hiu {
            if k > l {
                x = h[[k, k - 1]];
                y = h[[k + 1, k - 1]];
            }
            let (c, s, r) = givens(x, y);
            let col0 = if k > l { k - 1 } else { k };
            for j in col0..n {
                let a = h[[k, j]];
                let b = h[[k + 1, j]];
                h[[k, j]] = c * a + s * b;
                h[[k + 1, j]] = -s.conj() * a + c * b;
            }
            if k > l {
                h[[k, k - 1]] = r;
                h[[k + 1, k - 1]] = ZERO;
            }
            let rmax = (k + 2).min(hiu);
            for i in 0..=rmax {
                let a = h[[i, k]];
                let b = h[[i, k + 1]];
                h[[i, k]] = c * a + s.conj() * b;
                h[[i, k + 1]] = -s * a + c * b;
            }
            for i in 0..n {
                let a = z[[i, k]];
                let b = z[[i, k + 1]];
                z[[i, k]] = c * a + s.conj() * b;
                z[[i, k + 1]] = -s * a + c * b;
            }
        }
    }
    // clear round-off below the diagonal
    for i in 1..n {
        for j in 0..i {
            h[[i, j]] = ZERO;
        }
    }
    Ok(total)
}

fn small_pivot(t: &Array2<C64>) -> f64 {
    let n = t.nrows() as f64;
    (f64::EPSILON * frobenius(t)).max(f64::MIN_POSITIVE * n / f64::EPSILON)
}

/// Right eigenvectors of an upper triangular matrix, one per column.
fn triangular_right_vectors(t: &Array2<C64>) -> Array2<C64> {
    let n = t.nrows();
    let smin = small_pivot(t);
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let lambda = t[[k, k]];
        let mut x = vec![ZERO; k + 1];
        x[k] = ONE;
        for i in (0..k).rev() {
            let s: C64 = (i + 1..=k).map(|j| t[[i, j]] * x[j]).sum();
            let mut d = t[[i, i]] - lambda;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            x[i] = -s / d;
            if x[i].norm() > 1e150 {
                let f = 1.0 / x[i].norm();
                x.iter_mut().for_each(|v| *v *= f);
            }
        }
        for (i, v) in x.into_iter().enumerate() {
            out[[i, k]] = v;
        }
    }
    out
}

/// Left eigenvectors `y^T T = lambda y^T` of an upper triangular matrix, one per column.
fn triangular_left_vectors(t: &Array2<C64>) -> Array2<C64> {
    let n = t.nrows();
    let smin = small_pivot(t);
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let lambda = t[[k, k]];
        let mut y = vec![ZERO; n];
        y[k] = ONE;
        for j in k + 1..n {
            let s: C64 = (k..j).map(|i| y[i] * t[[i, j]]).sum();
            let mut d = lambda - t[[j, j]];
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            y[j] = s / d;
            if y[j].norm() > 1e150 {
                let f = 1.0 / y[j].norm();
                y.iter_mut().for_each(|v| *v *= f);
            }
        }
        for (i, v) in y.into_iter().enumerate() {
            out[[i, k]] = v;
        }
    }
    out
}

/// Outcome of pairing two spectra.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    /// `pairs[i] = j` pairs `a[i]` with `b[j]`.
    pub pairs: Vec<usize>,
    pub distances: Vec<f64>,
    pub max_distance: f64,
}

/// Pairs two equally long spectra so that every matched distance is within `tol`.
///
/// Greedy nearest-neighbour assignment is tried first; if it leaves a pair
/// beyond `tol`, an exact bipartite matching restricted to pairs within `tol`
/// decides whether any admissible assignment exists.
pub fn match_spectra(a: &[C64], b: &[C64], tol: f64) -> Result<MatchReport> {
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    let dist = |i: usize, j: usize| (a[i] - b[j]).norm();

    // greedy, processing the globally closest pairs first
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            edges.push((dist(i, j), i, j));
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut pairs = vec![usize::MAX; n];
    let mut used = vec![false; n];
    let mut assigned = 0;
    for &(_, i, j) in &edges {
        if pairs[i] == usize::MAX && !used[j] {
            pairs[i] = j;
            used[j] = true;
            assigned += 1;
            if assigned == n {
                break;
            }
        }
    }
    let greedy_max = (0..n).map(|i| dist(i, pairs[i])).fold(0.0, f64::max);
    if greedy_max > tol {
        // exact decision via augmenting paths on the admissible graph
        let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist(i, j) <= tol).collect()).collect();
        let mut match_b = vec![usize::MAX; n];
        fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], match_b: &mut [usize]) -> bool {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    if match_b[j] == usize::MAX || augment(match_b[j], adj, seen, match_b) {
                        match_b[j] = i;
                        return true;
                    }
                }
            }
            false
        }
        let mut unmatched = Vec::new();
        for i in 0..n {
            let mut seen = vec![false; n];
            if !augment(i, &adj, &mut seen, &mut match_b) {
                unmatched.push(i);
            }
        }
        if !unmatched.is_empty() {
            let detail: Vec<String> = unmatched
                .iter()
                .take(8)
                .map(|&i| {
                    let nearest = (0..n).map(|j| dist(i, j)).fold(f64::INFINITY, f64::min);
                    format!("{} (nearest at {:.3e})", a[i], nearest)
                })
                .collect();
            return Err(Error::Mismatch(format!(
                "{} eigenvalue(s) have no partner within {tol:.1e}: {}",
                unmatched.len(),
                detail.join(", ")
            )));
        }
        for (j, &i) in match_b.iter().enumerate() {
            pairs[i] = j;
        }
    }
    let distances: Vec<f64> = (0..n).map(|i| dist(i, pairs[i])).collect();
    let max_distance = distances.iter().fold(0.0, |a: f64, &b| a.max(b));
    Ok(MatchReport {
        pairs,
        distances,
        max_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn off_diagonal_two_by_two() {
        let (a, b) = (c(2.0, 1.0), c(0.5, -3.0));
        let m = array![[ZERO, a], [b, ZERO]];
        let res = dense_eig(&m).unwrap();
        let root = (a * b).sqrt();
        let rep = match_spectra(&res.eigenvalues, &[root, -root], 1e-14).unwrap();
        assert!(rep.max_distance < 1e-14);
        assert!(res.max_residual() < 1e-14);
    }

    #[test]
    fn jordan_block_is_flagged() {
        let m = array![[ZERO, ONE], [ZERO, ZERO]];
        let res = dense_eig(&m).unwrap();
        assert!(res.eigenvalues.iter().all(|z| z.norm() < 1e-15));
        assert!(res.max_residual() < 1e-10);
        assert!(res.degenerate.iter().all(|&d| d));
    }

    #[test]
    fn random_like_matrix_reconstructs() {
        let n = 9;
        let m = Array2::from_shape_fn((n, n), |(i, j)| {
            let x = ((i * 7 + j * 13) % 17) as f64 / 17.0 - 0.4;
            let y = ((i * 5 + j * 3) % 11) as f64 / 11.0 - 0.5;
            c(x, y)
        });
        let res = dense_eig(&m).unwrap();
        assert!(res.max_residual() < 1e-13, "{}", res.max_residual());
        let mut pairs = res.eigenpairs();
        for k in 0..n {
            let s = pairs.pairing(k, k).sqrt();
            pairs.right.column_mut(k).mapv_inplace(|x| x / s);
            pairs.left.column_mut(k).mapv_inplace(|x| x / s);
        }
        assert!(max_abs_diff(&pairs.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn balancing_rescues_strongly_nonnormal_chain() {
        // asymmetric open chain: eigenvalues 2 sqrt(ab) cos(pi j/(n+1))
        let n = 60;
        let (a, b) = (3.0, 0.2);
        let m = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j + 1 {
                c(a, 0.0)
            } else if j == i + 1 {
                c(b, 0.0)
            } else {
                ZERO
            }
        });
        let res = dense_eig(&m).unwrap();
        let exact: Vec<C64> = (1..=n)
            .map(|j| c(2.0 * (a * b).sqrt() * (std::f64::consts::PI * j as f64 / (n + 1) as f64).cos(), 0.0))
            .collect();
        let rep = match_spectra(&res.eigenvalues, &exact, 1e-12).unwrap();
        assert!(rep.max_distance < 1e-12);
        assert!(res.max_balanced_condition() < 10.0);
    }

    #[test]
    fn match_spectra_handles_permutations_and_mismatch() {
        let a = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)];
        let b = vec![c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0)];
        assert_eq!(match_spectra(&a, &b, 1e-15).unwrap().max_distance, 0.0);
        assert_eq!(match_spectra(&a, &a, 1e-15).unwrap().max_distance, 0.0);
        let bad = vec![c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 2.0)];
        assert!(matches!(match_spectra(&a, &bad, 1e-3), Err(Error::Mismatch(_))));
    }

    #[test]
    fn greedy_failure_falls_back_to_exact_matching() {
        // greedy grabs (0.0 <-> 0.05) first and strands 0.1
        let a = vec![c(0.0, 0.0), c(0.1, 0.0)];
        let b = vec![c(0.05, 0.0), c(-0.04, 0.0)];
        let rep = match_spectra(&a, &b, 0.06).unwrap();
        assert!(rep.max_distance <= 0.06);
    }

    #[test]
    fn relaxation_cap() {
        assert!(relaxed_tolerance(1e-10, 1.0, 1.0).unwrap() == 1e-10);
        assert!(relaxed_tolerance(1e-10, 1e14, 1.0).is_err());
    }
}
