//! Dense square matrices and LU solves at any precision level.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::precision::{dispatch_level, LevelVisitor, PrecisionLevel, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("singular matrix: zero pivot in column {column}")]
    Singular { column: usize },
    #[error("dimension mismatch: matrix is {n}x{n}, right-hand side has {rhs}")]
    Dimension { n: usize, rhs: usize },
}

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend_from_slice(r);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mul_vec(&self, x: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (a, b) in self.row(i).iter().zip(x) {
                acc += *a * *b;
            }
            *o = acc;
        }
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Solves `self * x = b` in place (`b` becomes `x`) by LU with partial
    /// pivoting; `self` is overwritten with its factors.
    pub fn solve_in_place(&mut self, b: &mut [T], perm: &mut Vec<usize>) -> Result<(), LinearSolveError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinearSolveError::Dimension { n, rhs: b.len() });
        }
        perm.clear();
        perm.extend(0..n);
        for k in 0..n {
            let mut piv = k;
            let mut best = self.data[k * n + k].abs();
            for i in k + 1..n {
                let v = self.data[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(LinearSolveError::Singular { column: k });
            }
            if piv != k {
                for j in 0..n {
                    self.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
                b.swap(k, piv);
            }
            let pivot = self.data[k * n + k];
            let (upper, lower) = self.data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n + k + 1..k * n + n];
            for i in k + 1..n {
                let row = &mut lower[(i - k - 1) * n..(i - k) * n];
                let l = row[k] / pivot;
                row[k] = l;
                if l != T::zero() {
                    for (a, &p) in row[k + 1..].iter_mut().zip(pivot_row) {
                        *a -= l * p;
                    }
                    b[i] -= l * b[k];
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            let row = self.row(i);
            for j in i + 1..n {
                acc -= row[j] * b[j];
            }
            b[i] = acc / row[i];
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Solves `a x = b` with every operation rounded to `level`.
///
/// Inputs are rounded to `level` first; the solution is returned as binary64.
pub fn linear_solve(a: &[Vec<f64>], b: &[f64], level: PrecisionLevel) -> Result<Vec<f64>, LinearSolveError> {
    struct Solve<'a> {
        a: &'a [Vec<f64>],
        b: &'a [f64],
    }
    impl LevelVisitor for Solve<'_> {
        type Output = Result<Vec<f64>, LinearSolveError>;
        fn visit<T: Real>(self) -> Self::Output {
            let n = self.a.len();
            if self.b.len() != n {
                return Err(LinearSolveError::Dimension { n, rhs: self.b.len() });
            }
            let rows: Vec<Vec<T>> = self.a.iter().map(|r| r.iter().map(|&x| T::from_f64(x)).collect()).collect();
            let mut m = Matrix::from_rows(&rows);
            let mut x: Vec<T> = self.b.iter().map(|&v| T::from_f64(v)).collect();
            m.solve_in_place(&mut x, &mut Vec::new())?;
            Ok(x.into_iter().map(Real::to_f64).collect())
        }
    }
    dispatch_level(level, Solve { a, b })
}
