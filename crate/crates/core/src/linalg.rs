//! Small dense complex linear-algebra helpers shared by the solvers.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Neumaier-compensated accumulator for complex sums.
///
/// The real and imaginary parts are compensated independently.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    re: f64,
    im: f64,
    re_c: f64,
    im_c: f64,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: C64) {
        neumaier(&mut self.re, &mut self.re_c, z.re);
        neumaier(&mut self.im, &mut self.im_c, z.im);
    }

    pub fn value(&self) -> C64 {
        C64::new(self.re + self.re_c, self.im + self.im_c)
    }
}

impl FromIterator<C64> for CompensatedSum {
    fn from_iter<T: IntoIterator<Item = C64>>(iter: T) -> Self {
        let mut acc = CompensatedSum::new();
        for z in iter {
            acc.add(z);
        }
        acc
    }
}

/// Compensated sum of an iterator of complex numbers.
pub fn csum<I: IntoIterator<Item = C64>>(iter: I) -> C64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Principal square root of a real number, returned as a complex number.
pub fn principal_sqrt(x: f64) -> C64 {
    if x >= 0.0 {
        C64::new(x.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-x).sqrt())
    }
}

pub fn norm2(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product `sum conj(a_i) b_i`.
pub fn inner(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    csum(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y))
}

/// Bilinear pairing `sum a_i b_i` used for `<L|R>` with `L` stored as bra components.
pub fn pair(a: ArrayView1<C64>, b: ArrayView1<C64>) -> C64 {
    csum(a.iter().zip(b.iter()).map(|(x, y)| x * y))
}

/// Modulus of the normalized Hermitian overlap, 1 when the vectors are parallel.
pub fn overlap(a: ArrayView1<C64>, b: ArrayView1<C64>) -> f64 {
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    inner(a, b).norm() / (na * nb)
}

/// Rescales `v` so its largest-modulus component is real positive and its 2-norm is 1.
pub fn canonical_gauge(v: ArrayView1<C64>) -> Array1<C64> {
    let Some((_, pivot)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
    else {
        return v.to_owned();
    };
    if pivot.norm() == 0.0 {
        return v.to_owned();
    }
    let phase = pivot / pivot.norm();
    let scaled = v.mapv(|z| z / phase);
    let n = norm2(scaled.view());
    scaled.mapv(|z| z / n)
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, ONE)
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Array2<C64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(a: &Array2<C64>) -> Result<Self> {
        let (n, m) = a.dim();
        if n != m {
            return Err(Error::InvalidParameter(format!("LU of non-square {n}x{m} matrix")));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = max_abs(a).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[[i, k]].norm()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if pmax <= f64::EPSILON * scale * 1e-3 {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
            }
            let pivot = lu[[k, k]];
            for i in k + 1..n {
                let f = lu[[i, k]] / pivot;
                lu[[i, k]] = f;
                if f != ZERO {
                    for j in k + 1..n {
                        let u = lu[[k, j]];
                        lu[[i, j]] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: ArrayView1<C64>) -> Array1<C64> {
        let n = self.perm.len();
        let mut x: Array1<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[[i, j]] * x[j];
            }
            x[i] = s / self.lu[[i, i]];
        }
        x
    }

    pub fn inverse(&self) -> Array2<C64> {
        let n = self.perm.len();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e.fill(ZERO);
            e[j] = ONE;
            let col = self.solve(e.view());
            inv.column_mut(j).assign(&col);
        }
        inv
    }
}

/// Dense inverse via LU with partial pivoting.
pub fn inverse(a: &Array2<C64>) -> Result<Array2<C64>> {
    Ok(Lu::new(a)?.inverse())
}

/// Resolvent `(z - H)^{-1}` by dense inversion.
pub fn resolvent(h: &Array2<C64>, z: C64) -> Result<Array2<C64>> {
    let n = h.nrows();
    let shifted = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            z - h[[i, j]]
        } else {
            -h[[i, j]]
        }
    });
    inverse(&shifted)
}

pub fn matvec(a: &Array2<C64>, x: ArrayView1<C64>) -> Array1<C64> {
    a.dot(&x)
}

/// Relative eigen-residual `||(A - lambda) v|| / ||v||`.
pub fn eigen_residual(a: &Array2<C64>, lambda: C64, v: ArrayView1<C64>) -> f64 {
    let av = a.dot(&v);
    let r: f64 = av
        .iter()
        .zip(v.iter())
        .map(|(x, y)| (x - lambda * y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    r / norm2(v).max(f64::MIN_POSITIVE)
}

/// Relative left eigen-residual `||l (A - lambda)|| / ||l||` with `l` stored as bra components.
pub fn left_eigen_residual(a: &Array2<C64>, lambda: C64, l: ArrayView1<C64>) -> f64 {
    let la = l.dot(a);
    let r: f64 = la
        .iter()
        .zip(l.iter())
        .map(|(x, y)| (x - lambda * y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    r / norm2(l).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let terms = [C64::new(1e16, 0.0), C64::new(1.0, 1.0), C64::new(-1e16, 0.0)];
        assert_eq!(csum(terms), C64::new(1.0, 1.0));
    }

    #[test]
    fn lu_inverse_roundtrip() {
        let a = array![
            [C64::new(2.0, 1.0), C64::new(0.0, -1.0), ONE],
            [C64::new(1.0, 0.0), C64::new(3.0, 0.0), C64::new(0.5, 0.5)],
            [ZERO, C64::new(-1.0, 2.0), C64::new(4.0, 0.0)]
        ];
        let inv = inverse(&a).unwrap();
        assert!(max_abs_diff(&a.dot(&inv), &identity(3)) < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = array![[ONE, ONE], [ONE, ONE]];
        assert_eq!(inverse(&a).unwrap_err(), Error::Singular);
    }

    #[test]
    fn canonical_gauge_fixes_phase_and_norm() {
        let v = array![C64::new(0.0, 2.0), C64::new(0.0, -1.0)];
        let g = canonical_gauge(v.view());
        assert!((g[0] - C64::new(2.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!((norm2(g.view()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn principal_sqrt_of_negative_is_imaginary() {
        assert_eq!(principal_sqrt(-4.0), C64::new(0.0, 2.0));
    }
}
