//! Dense solvers for the small least-squares systems of the affine attacks.

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(n: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self[(i, i)] += v;
        }
    }

    /// `self += x xᵀ`, upper and lower halves both written.
    pub fn add_outer(&mut self, x: &[T]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let xi = x[i];
            if xi == T::zero() {
                continue;
            }
            let row = &mut self.data[i * self.n..(i + 1) * self.n];
            for (r, &xj) in row.iter_mut().zip(x) {
                *r += xi * xj;
            }
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// or `None` when a pivot is not positive.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Option<Matrix<T>> {
    let n = a.dim();
    let mut l = Matrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` for each right-hand side column of `rhs` (`n × m`, row-major).
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, rhs: &[T], m: usize) -> Vec<T> {
    let n = l.dim();
    let mut x = rhs.to_vec();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[i * m + c];
            for k in 0..i {
                s -= l[(i, k)] * x[k * m + c];
            }
            x[i * m + c] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k * m + c];
            }
            x[i * m + c] = s / l[(i, i)];
        }
    }
    x
}

/// Gaussian elimination with partial pivoting on `a x = rhs` for `m`
/// right-hand sides; `None` if a pivot falls below `tol` times the largest
/// absolute entry of `a`.
pub fn solve_general<T: Scalar>(a: &Matrix<T>, rhs: &[T], m: usize, tol: T) -> Option<Vec<T>> {
    let n = a.dim();
    let mut a = a.clone();
    let mut x = rhs.to_vec();
    let scale = a.data().iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty range");
        if !(a[(piv, col)].abs() > tol * scale) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.data.swap(piv * n + k, col * n + k);
            }
            for c in 0..m {
                x.swap(piv * m + c, col * m + c);
            }
        }
        let p = a[(col, col)];
        for i in col + 1..n {
            let f = a[(i, col)] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[(col, k)];
                a[(i, k)] -= f * v;
            }
            for c in 0..m {
                let v = x[col * m + c];
                x[i * m + c] -= f * v;
            }
        }
    }
    for c in 0..m {
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for k in i + 1..n {
                s -= a[(i, k)] * x[k * m + c];
            }
            x[i * m + c] = s / a[(i, i)];
        }
    }
    Some(x)
}

/// Solves a symmetric system by Cholesky, falling back to pivoted
/// elimination when the matrix is not numerically positive definite.
pub fn solve_symmetric<T: Scalar>(a: &Matrix<T>, rhs: &[T], m: usize) -> Option<Vec<T>> {
    match cholesky(a) {
        Some(l) => Some(cholesky_solve(&l, rhs, m)),
        None => solve_general(a, rhs, m, T::epsilon()),
    }
    .filter(|x| x.iter().all(|v| v.is_finite()))
}
