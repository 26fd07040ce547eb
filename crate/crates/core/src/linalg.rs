//! Dense and tridiagonal linear algebra used by the assimilation pipeline.
//!
//! Everything here is written against [`Real`] so the same code serves `f32`
//! and `f64`. Matrices are small (Gram blocks) or structured (finite-element
//! operators), so plain loops with a fixed reduction order are sufficient and
//! keep every result bit-reproducible.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row vectors. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == ncols), "ragged rows");
        Self {
            rows: rows.len(),
            cols: ncols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>], nrows: usize) -> Self {
        assert!(columns.iter().all(|c| c.len() == nrows), "ragged columns");
        Self::from_fn(nrows, columns.len(), |i, j| columns[j][i])
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Mat<T> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Mat<T>) -> Mat<T> {
        self.add(&other.scale(-T::one()))
    }

    pub fn add_to_diagonal(&mut self, shift: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += shift;
        }
    }

    /// Replaces the matrix by `(P + Pᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        let half = T::lit(0.5);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = (self[(i, j)] + self[(j, i)]) * half;
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat<T>) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// Symmetric tridiagonal matrix: the exact storage of 1D linear finite-element
/// operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag<T> {
    diag: Vec<T>,
    /// `off[i]` couples rows `i` and `i + 1`.
    off: Vec<T>,
}

impl<T: Real> SymTridiag<T> {
    pub fn new(diag: Vec<T>, off: Vec<T>) -> Self {
        assert!(
            off.len() + 1 == diag.len() || (diag.is_empty() && off.is_empty()),
            "off-diagonal length must be n - 1"
        );
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn off(&self) -> &[T] {
        &self.off
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n, "tridiagonal matvec dimension mismatch");
        let mut y: Vec<T> = self.diag.iter().zip(x).map(|(&d, &v)| d * v).collect();
        for i in 0..n.saturating_sub(1) {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// Bilinear form `xᵀ · self · y`.
    pub fn form(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.matvec(y))
    }

    /// `a · self + b · other`.
    pub fn combine(&self, a: T, other: &SymTridiag<T>, b: T) -> SymTridiag<T> {
        assert_eq!(self.dim(), other.dim());
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(&p, &q)| a * p + b * q).collect(),
            off: self.off.iter().zip(&other.off).map(|(&p, &q)| a * p + b * q).collect(),
        }
    }

    /// Principal submatrix on the contiguous index range `lo..hi`.
    pub fn principal(&self, lo: usize, hi: usize) -> SymTridiag<T> {
        assert!(lo < hi && hi <= self.dim());
        SymTridiag {
            diag: self.diag[lo..hi].to_vec(),
            off: self.off[lo..hi - 1].to_vec(),
        }
    }

    pub fn entry_sum(&self) -> T {
        self.diag.iter().copied().sum::<T>() + self.off.iter().copied().sum::<T>() * T::lit(2.0)
    }

    pub fn row_sum(&self, i: usize) -> T {
        let mut s = self.diag[i];
        if i > 0 {
            s += self.off[i - 1];
        }
        if i + 1 < self.dim() {
            s += self.off[i];
        }
        s
    }

    pub fn to_dense(&self) -> Mat<T> {
        Mat::from_fn(self.dim(), self.dim(), |i, j| self.get(i, j))
    }
}

/// Cholesky factor `L` of a symmetric positive-definite tridiagonal matrix.
///
/// The factor of a tridiagonal matrix is lower bidiagonal, so this is the
/// dense Cholesky factorization with the structural zeros skipped.
#[derive(Debug, Clone)]
pub struct TridiagCholesky<T> {
    l_diag: Vec<T>,
    l_sub: Vec<T>,
}

impl<T: Real> TridiagCholesky<T> {
    pub fn factor(a: &SymTridiag<T>) -> Result<Self> {
        let n = a.dim();
        let mut l_diag = Vec::with_capacity(n);
        let mut l_sub = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut pivot = a.diag[i];
            if i > 0 {
                let s: T = l_sub[i - 1];
                pivot -= s * s;
            }
            if !(pivot > T::zero()) || !pivot.is_finite() {
                return Err(Error::numerical(format!(
                    "tridiagonal Cholesky breakdown at row {i} (pivot {pivot:e})"
                )));
            }
            let d = pivot.sqrt();
            l_diag.push(d);
            if i + 1 < n {
                l_sub.push(a.off[i] / d);
            }
        }
        Ok(Self { l_diag, l_sub })
    }

    pub fn dim(&self) -> usize {
        self.l_diag.len()
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.dim();
        assert_eq!(b.len(), n, "tridiagonal solve dimension mismatch");
        if n == 0 {
            return;
        }
        b[0] /= self.l_diag[0];
        for i in 1..n {
            let prev = b[i - 1];
            b[i] = (b[i] - self.l_sub[i - 1] * prev) / self.l_diag[i];
        }
        b[n - 1] /= self.l_diag[n - 1];
        for i in (0..n - 1).rev() {
            let next = b[i + 1];
            b[i] = (b[i] - self.l_sub[i] * next) / self.l_diag[i];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense Cholesky factorization `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        assert!(a.is_square(), "Cholesky needs a square matrix");
        let n = a.nrows();
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut pivot = a[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if !(pivot > T::zero()) || !pivot.is_finite() {
                return Err(Error::numerical(format!(
                    "matrix not positive definite (pivot {pivot:e} at column {j})"
                )));
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    /// Factors `a`, adding a diagonal shift when plain factorization fails.
    ///
    /// Shifts are `10^k · trace(a)/n` for `k = -12, …, -8`. Returns the factor
    /// together with the shift that was applied (zero when none was needed).
    pub fn factor_with_jitter(a: &Mat<T>) -> Result<(Self, T)> {
        if let Ok(c) = Self::factor(a) {
            return Ok((c, T::zero()));
        }
        let n = a.nrows().max(1);
        let scale = (a.trace() / T::count(n)).abs();
        let mut last = None;
        for exp in -12..=-8 {
            let jitter = scale * T::lit(10f64.powi(exp));
            let mut shifted = a.clone();
            shifted.add_to_diagonal(jitter);
            match Self::factor(&shifted) {
                Ok(c) => return Ok((c, jitter)),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::numerical("matrix not positive definite")))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_l(&self) -> &Mat<T> {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "Cholesky solve dimension mismatch");
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = y[i] - dot(&row[..i], &y[..i]);
            y[i] = s / row[i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(y.len(), n, "Cholesky solve dimension mismatch");
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> T {
        self.l.diagonal().into_iter().map(|d| d.ln()).sum::<T>() * T::lit(2.0)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Mat<T>) -> Result<Self> {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        let tiny = scale * T::epsilon() * T::count(n.max(1));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pmax > tiny) {
                return Err(Error::numerical(format!(
                    "singular system (pivot {pmax:e} at column {k})"
                )));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.nrows();
        assert_eq!(b.len(), n, "LU solve dimension mismatch");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s = x[i] - dot(&row[i + 1..], &x[i + 1..]);
            x[i] = s / row[i];
        }
        x
    }
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as matrix columns.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    assert!(a.is_square(), "eigen-decomposition needs a square matrix");
    let n = a.nrows();
    let mut w = a.clone();
    w.symmetrize();
    let mut v = Mat::identity(n);
    let frob2: T = w.as_slice().iter().map(|&x| x * x).sum();
    let tol = T::epsilon() * T::epsilon() * frob2;
    const MAX_SWEEPS: usize = 100;

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += w[(i, j)] * w[(i, j)];
            }
        }
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = w[(k, p)];
                    let akq = w[(k, q)];
                    w[(k, p)] = c * akp - s * akq;
                    w[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = w[(p, k)];
                    let aqk = w[(q, k)];
                    w[(p, k)] = c * apk - s * aqk;
                    w[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].partial_cmp(&w[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| w[(i, i)]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(a: &Mat<T>) -> Result<T> {
    let (vals, _) = sym_eigen(a)?;
    Ok(vals.last().copied().unwrap_or_else(T::zero))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spd(n: usize) -> Mat<f64> {
        let b = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + if i == j { 0.3 } else { 0.0 });
        let mut a = b.matmul(&b.transpose());
        a.add_to_diagonal(0.5);
        a
    }

    #[test]
    fn cholesky_solves() {
        let a = spd(6);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.0).collect();
        let x = Cholesky::factor(&a).unwrap().solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(Cholesky::factor(&a), Err(Error::Numerical(_))));
        assert!(Cholesky::factor_with_jitter(&a).is_err());
    }

    #[test]
    fn jitter_rescues_rank_deficient() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let (_, jitter) = Cholesky::factor_with_jitter(&a).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-8);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let t = SymTridiag::new(vec![4.0, 5.0, 6.0, 4.5], vec![-1.0, 0.5, -2.0]);
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let x = TridiagCholesky::factor(&t).unwrap().solve(&b);
        let y = Cholesky::factor(&t.to_dense()).unwrap().solve(&b);
        for (a, c) in x.iter().zip(&y) {
            assert_relative_eq!(a, c, epsilon = 1e-13);
        }
    }

    #[test]
    fn lu_solves_indefinite() {
        let a = Mat::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 0.0, -1.0], vec![3.0, 1.0, 0.0]]);
        let b = vec![1.0, 2.0, 3.0];
        let x = Lu::factor(&a).unwrap().solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-12);
        }
        let singular = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(Lu::factor(&singular).is_err());
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = spd(7);
        let (vals, vecs) = sym_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let lam = Mat::from_fn(7, 7, |i, j| if i == j { vals[i] } else { 0.0 });
        let rebuilt = vecs.matmul(&lam).matmul(&vecs.transpose());
        assert!(rebuilt.max_abs_diff(&a) < 1e-10 * a.max_abs());
        let gram = vecs.transpose().matmul(&vecs);
        assert!(gram.max_abs_diff(&Mat::identity(7)) < 1e-12);
    }
}
