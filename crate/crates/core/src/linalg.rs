//! Dense row-major matrices and LU with partial pivoting over any [`Scalar`].

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    /// Sub-matrix on the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])].clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = a.clone() * other[(k, j)].clone();
                    out[(i, j)] = out[(i, j)].clone() + v;
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.rows, "dimension mismatch in vector product");
        let mut out = vec![S::zero(); self.cols];
        for (i, vi) in v.iter().enumerate() {
            if vi.is_zero() {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o = o.clone() + vi.clone() * self[(i, j)].clone();
            }
        }
        out
    }

    /// Matrix times column vector.
    pub fn right_mul(&self, v: &[S]) -> Vec<S> {
        assert_eq!(v.len(), self.cols, "dimension mismatch in vector product");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a.clone() * b.clone()).sum())
            .collect()
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect(),
        }
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).iter().cloned().sum()).collect()
    }

    /// Largest absolute entry difference, as `f64`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        crate::scalar::sup_distance(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.abs().to_f64()).fold(0.0, f64::max)
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn lu(&self) -> Lu<S> {
        Lu::factor(self)
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: fmt::Display> fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> =
                self.data[i * self.cols..(i + 1) * self.cols].iter().map(|x| x.to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

/// `PA = LU` with unit lower-triangular `L`, stored compactly.
///
/// Rank-deficient inputs are factored to completion; zero pivots are recorded
/// so that [`Lu::rank`] is meaningful and [`Lu::solve`] can refuse.
#[derive(Clone)]
pub struct Lu<S> {
    n: usize,
    lu: Matrix<S>,
    perm: Vec<usize>,
    singular_columns: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    fn factor(a: &Matrix<S>) -> Self {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let scale = a.max_abs().max(1.0);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular_columns = Vec::new();
        for k in 0..n {
            let mut best = k;
            let mut best_mag = lu[(k, k)].abs().to_f64();
            for i in k + 1..n {
                let mag = lu[(i, k)].abs().to_f64();
                if mag > best_mag || (S::EXACT && best_mag == 0.0 && !lu[(i, k)].is_zero()) {
                    best = i;
                    best_mag = mag;
                }
            }
            if best != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, best * n + j);
                }
                perm.swap(k, best);
            }
            let pivot = lu[(k, k)].clone();
            if pivot.negligible(scale) {
                singular_columns.push(k);
                continue;
            }
            for i in k + 1..n {
                if lu[(i, k)].is_zero() {
                    continue;
                }
                let factor = lu[(i, k)].clone() / pivot.clone();
                for j in k + 1..n {
                    let v = factor.clone() * lu[(k, j)].clone();
                    lu[(i, j)] = lu[(i, j)].clone() - v;
                }
                lu[(i, k)] = factor;
            }
        }
        Lu { n, lu, perm, singular_columns }
    }

    pub fn is_singular(&self) -> bool {
        !self.singular_columns.is_empty()
    }

    /// Numerical rank (exact for exact scalars).
    ///
    /// Counts nonzero pivots of the partially pivoted elimination, which is
    /// reliable for the well-conditioned matrices used here.
    pub fn rank(&self) -> usize {
        self.n - self.singular_columns.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[S]) -> Option<Vec<S>> {
        if self.is_singular() {
            return None;
        }
        let n = self.n;
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let v = self.lu[(i, j)].clone() * x[j].clone();
                x[i] = x[i].clone() - v;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let v = self.lu[(i, j)].clone() * x[j].clone();
                x[i] = x[i].clone() - v;
            }
            x[i] = x[i].clone() / self.lu[(i, i)].clone();
        }
        Some(x)
    }

    /// Solves `x A = b` for a row vector `x`.
    pub fn solve_left(&self, b: &[S]) -> Option<Vec<S>> {
        if self.is_singular() {
            return None;
        }
        let n = self.n;
        // x P^T L U = b  =>  solve U^T z = b, L^T w = z, x = w P
        let mut z = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                let v = self.lu[(j, i)].clone() * z[j].clone();
                z[i] = z[i].clone() - v;
            }
            z[i] = z[i].clone() / self.lu[(i, i)].clone();
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let v = self.lu[(j, i)].clone() * z[j].clone();
                z[i] = z[i].clone() - v;
            }
        }
        let mut x = vec![S::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k].clone();
        }
        Some(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix<S>) -> Option<Matrix<S>> {
        let mut out = Matrix::zeros(self.n, b.cols);
        for j in 0..b.cols {
            let col: Vec<S> = (0..b.rows).map(|i| b[(i, j)].clone()).collect();
            let x = self.solve(&col)?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Some(out)
    }

    pub fn inverse(&self) -> Option<Matrix<S>> {
        self.solve_matrix(&Matrix::identity(self.n))
    }
}

/// `(I - Q)^{-1}` for a sub-stochastic block `Q`.
pub fn fundamental_matrix<S: Scalar>(q: &Matrix<S>) -> Option<Matrix<S>> {
    Matrix::identity(q.rows()).sub(q).lu().inverse()
}

pub fn ones<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::one(); n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn solves_small_system_in_both_directions() {
        let a: Matrix<f64> = Matrix::from_rows(vec![vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]);
        let lu = a.lu();
        let x = lu.solve(&[1.0, 2.0, 3.0]).unwrap();
        let back = a.right_mul(&x);
        for (u, v) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
        let y = lu.solve_left(&[1.0, 2.0, 3.0]).unwrap();
        let back = a.left_mul(&y);
        for (u, v) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = Matrix::from_rows(vec![vec![q(0, 1), q(1, 1)], vec![q(1, 1), q(1, 1)]]);
        let x = a.lu().solve(&[q(2, 1), q(3, 1)]).unwrap();
        assert_eq!(x, vec![q(1, 1), q(2, 1)]);
    }

    #[test]
    fn exact_inverse_round_trips() {
        let a = Matrix::from_rows(vec![vec![q(1, 2), q(1, 3)], vec![q(1, 4), q(1, 5)]]);
        let inv = a.lu().inverse().unwrap();
        assert_eq!(a.mul(&inv), Matrix::identity(2));
    }

    #[test]
    fn singular_matrix_is_reported_with_rank() {
        let a = Matrix::from_rows(vec![vec![q(1, 1), q(2, 1)], vec![q(2, 1), q(4, 1)]]);
        let lu = a.lu();
        assert!(lu.is_singular());
        assert_eq!(lu.rank(), 1);
        assert!(lu.solve(&[q(1, 1), q(1, 1)]).is_none());
        let f = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(f.lu().rank(), 1);
    }

    #[test]
    fn fundamental_matrix_of_geometric_block() {
        let qm = Matrix::from_rows(vec![vec![q(1, 2)]]);
        assert_eq!(fundamental_matrix(&qm).unwrap()[(0, 0)], q(2, 1));
    }
}
