//! Dense linear algebra used by the estimators: Cholesky solves for Newton
//! steps and a one-sided Jacobi SVD for minimum-norm least squares and
//! pseudo-inverses.

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` if not PD.
pub fn cholesky_solve<T: Real>(a: &Matrix<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum = sum - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum.is_nan() || sum <= T::zero() {
                    return None;
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] = y[i] - l[(i, k)] * y[k];
        }
        y[i] = y[i] / l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] = y[i] - l[(k, i)] * y[k];
        }
        y[i] = y[i] / l[(i, i)];
    }
    Some(y)
}

/// Thin SVD `a = u diag(s) vᵀ` with `u` (m×n, orthonormal where s > 0) and `v` (n×n).
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    /// One-sided Jacobi (Hestenes) rotations applied to the columns of `a`.
    pub fn new(a: &Matrix<T>) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut u = a.clone();
        let mut v = Matrix::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..80 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                    for i in 0..m {
                        let (x, y) = (u[(i, p)], u[(i, q)]);
                        alpha = alpha + x * x;
                        beta = beta + y * y;
                        gamma = gamma + x * y;
                    }
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (gamma + gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let (x, y) = (u[(i, p)], u[(i, q)]);
                        u[(i, p)] = c * x - s * y;
                        u[(i, q)] = s * x + c * y;
                    }
                    for i in 0..n {
                        let (x, y) = (v[(i, p)], v[(i, q)]);
                        v[(i, p)] = c * x - s * y;
                        v[(i, q)] = s * x + c * y;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut s = vec![T::zero(); n];
        for j in 0..n {
            let len = (0..m).fold(T::zero(), |acc, i| acc + u[(i, j)] * u[(i, j)]).sqrt();
            s[j] = len;
            if len > T::zero() {
                for i in 0..m {
                    u[(i, j)] = u[(i, j)] / len;
                }
            }
        }
        Svd { u, s, v }
    }

    /// Singular values below this are treated as zero.
    pub fn tolerance(&self) -> T {
        let smax = self.s.iter().copied().fold(T::zero(), T::max);
        T::count(self.u.rows().max(self.v.rows()).max(1)) * T::epsilon() * smax
    }

    pub fn rank(&self) -> usize {
        let tol = self.tolerance();
        self.s.iter().filter(|&&x| x > tol).count()
    }

    /// Minimum-norm solution of `min ‖a x − b‖`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.v.rows();
        let tol = self.tolerance();
        let mut x = vec![T::zero(); n];
        for j in 0..self.s.len() {
            if self.s[j] <= tol {
                continue;
            }
            let coef = dot(&self.u.column(j), b) / self.s[j];
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = *xi + self.v[(i, j)] * coef;
            }
        }
        x
    }

    /// Moore-Penrose pseudo-inverse `v diag(1/s) uᵀ`.
    pub fn pseudo_inverse(&self) -> Matrix<T> {
        let (m, n) = (self.u.rows(), self.v.rows());
        let tol = self.tolerance();
        let mut out = Matrix::zeros(n, m);
        for j in 0..self.s.len() {
            if self.s[j] <= tol {
                continue;
            }
            let inv = T::one() / self.s[j];
            for r in 0..n {
                let vr = self.v[(r, j)] * inv;
                for c in 0..m {
                    out[(r, c)] = out[(r, c)] + vr * self.u[(c, j)];
                }
            }
        }
        out
    }

    /// Whether coordinate `i` is identifiable, i.e. the unit vector eᵢ lies in
    /// the row space of the decomposed matrix.
    pub fn coordinate_identifiable(&self, i: usize) -> bool {
        let tol = self.tolerance();
        let null_mass = (0..self.s.len())
            .filter(|&j| self.s[j] <= tol)
            .fold(T::zero(), |acc, j| acc + self.v[(i, j)] * self.v[(i, j)]);
        null_mass.sqrt() < T::epsilon().sqrt() * T::lit(100.0)
    }
}
