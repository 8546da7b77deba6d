//! Small dense linear algebra for fitting-sized problems.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. Everything here is
//! sized for a handful of parameters and a few hundred data points, so the
//! kernels are plain loops.

use std::fmt;
use std::ops::{Deref, Index};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("empty matrix or vector")]
    Empty,
    #[error("matrix is singular or numerically indistinguishable from singular")]
    SingularMatrix,
}

/// A finite, non-empty real vector.
#[derive(Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self, NumError> {
        if data.is_empty() {
            return Err(NumError::Empty);
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(i));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len >= 1, "vector length must be at least one");
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Sum of absolute entries, i.e. the matrix 1-norm of the vector viewed
    /// as a single column.
    pub fn one_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Squared Euclidean norm, summed in index order.
    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64, NumError> {
        check_len(self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// View as an n×1 column matrix.
    pub fn to_column(&self) -> Matrix {
        Matrix {
            rows: self.len(),
            cols: 1,
            data: self.data.clone(),
        }
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.data).finish()
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = NumError;

    fn try_from(data: Vec<f64>) -> Result<Self, NumError> {
        Vector::new(data)
    }
}

impl TryFrom<&[f64]> for Vector {
    type Error = NumError;

    fn try_from(data: &[f64]) -> Result<Self, NumError> {
        Vector::new(data.to_vec())
    }
}

/// A finite, non-empty dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if rows == 0 || cols == 0 {
            return Err(NumError::Empty);
        }
        if data.len() != rows * cols {
            return Err(NumError::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumError> {
        let nrows = rows.len();
        let ncols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(nrows * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(NumError::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::new(nrows, ncols, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 1, "matrix dimension must be at least one");
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vector {
        Vector {
            data: (0..self.rows).map(|r| self.get(r, c)).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mat_vec(&self, v: &Vector) -> Result<Vector, NumError> {
        if v.len() != self.cols {
            return Err(NumError::ShapeMismatch(format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let data = (0..self.rows)
            .map(|r| self.row(r).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect();
        Ok(Vector { data })
    }

    /// `selfᵀ · v` without materializing the transpose.
    pub fn tr_mat_vec(&self, v: &Vector) -> Result<Vector, NumError> {
        if v.len() != self.rows {
            return Err(NumError::ShapeMismatch(format!(
                "transpose of {}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let vr = v[r];
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        Ok(Vector { data: out })
    }

    /// Gram matrix `selfᵀ · self`.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut data = vec![0.0; n * n];
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                for j in i..n {
                    data[i * n + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        Matrix {
            rows: n,
            cols: n,
            data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

fn check_len(a: &Vector, b: &Vector) -> Result<(), NumError> {
    if a.len() != b.len() {
        return Err(NumError::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Matrix 1-norm: the largest column sum of absolute values.
pub fn one_norm(m: &Matrix) -> f64 {
    (0..m.cols)
        .map(|c| (0..m.rows).map(|r| m.get(r, c).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, NumError> {
    if a.cols != b.rows {
        return Err(NumError::ShapeMismatch(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut data = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            for j in 0..b.cols {
                data[i * b.cols + j] += aik * b.get(k, j);
            }
        }
    }
    Ok(Matrix {
        rows: a.rows,
        cols: b.cols,
        data,
    })
}

pub fn transpose(m: &Matrix) -> Matrix {
    let mut data = Vec::with_capacity(m.data.len());
    for c in 0..m.cols {
        for r in 0..m.rows {
            data.push(m.get(r, c));
        }
    }
    Matrix {
        rows: m.cols,
        cols: m.rows,
        data,
    }
}

pub fn sub(a: &Vector, b: &Vector) -> Result<Vector, NumError> {
    check_len(a, b)?;
    Ok(Vector {
        data: a.iter().zip(b.iter()).map(|(x, y)| x - y).collect(),
    })
}

pub fn scale(v: &Vector, s: f64) -> Vector {
    Vector {
        data: v.iter().map(|x| x * s).collect(),
    }
}

/// Largest 1-norm condition number accepted by the solvers: 1/(100·ε).
pub fn max_condition() -> f64 {
    1.0 / (100.0 * f64::EPSILON)
}

/// Pivots smaller than this fraction of the matrix 1-norm count as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

enum Factorization {
    /// Unit lower-triangular `L` (strict lower part stored) and the pivots
    /// `D` of `m = L·D·Lᵀ`.
    Ldlt { l: Vec<f64>, d: Vec<f64> },
    Lu { lu: Vec<f64>, perm: Vec<usize> },
}

impl Factorization {
    fn solve(&self, n: usize, rhs: &[f64]) -> Vec<f64> {
        match self {
            Factorization::Ldlt { l, d } => {
                let mut y = rhs.to_vec();
                for i in 0..n {
                    for k in 0..i {
                        y[i] -= l[i * n + k] * y[k];
                    }
                }
                for i in 0..n {
                    y[i] /= d[i];
                }
                for i in (0..n).rev() {
                    for k in i + 1..n {
                        y[i] -= l[k * n + i] * y[k];
                    }
                }
                y
            }
            Factorization::Lu { lu, perm } => {
                let mut y: Vec<f64> = perm.iter().map(|&p| rhs[p]).collect();
                for i in 0..n {
                    for k in 0..i {
                        y[i] -= lu[i * n + k] * y[k];
                    }
                }
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in i + 1..n {
                        s -= lu[i * n + k] * y[k];
                    }
                    y[i] = s / lu[i * n + i];
                }
                y
            }
        }
    }
}

/// Square-root-free Cholesky. Returns `None` unless every pivot exceeds
/// `tol`, i.e. unless `m` is safely positive definite.
fn ldlt(m: &Matrix, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = m.rows;
    let mut l = vec![0.0; n * n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = m.get(j, j);
        for k in 0..j {
            dj -= l[j * n + k] * l[j * n + k] * d[k];
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(dj > tol) {
            return None;
        }
        d[j] = dj;
        for i in j + 1..n {
            // symmetric: read the lower triangle only
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k] * d[k];
            }
            l[i * n + j] = s / dj;
        }
    }
    Some((l, d))
}

fn lu_partial_pivot(m: &Matrix, tol: f64) -> Result<(Vec<f64>, Vec<usize>), NumError> {
    let n = m.rows;
    let mut lu = m.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax < tol || pmax == 0.0 {
            return Err(NumError::SingularMatrix);
        }
        if p != k {
            for c in 0..n {
                lu.swap(k * n + c, p * n + c);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            lu[i * n + k] = f;
            for c in k + 1..n {
                lu[i * n + c] -= f * lu[k * n + c];
            }
        }
    }
    Ok((lu, perm))
}

fn check_square(m: &Matrix, rhs_len: usize) -> Result<(), NumError> {
    if !m.is_square() {
        return Err(NumError::ShapeMismatch(format!(
            "{}x{} matrix is not square",
            m.rows, m.cols
        )));
    }
    if rhs_len != m.rows {
        return Err(NumError::ShapeMismatch(format!(
            "right-hand side of length {rhs_len} for a {0}x{0} system",
            m.rows
        )));
    }
    Ok(())
}

/// Factorizes `m`, preferring LDLᵀ when `symmetric` and falling back to
/// LU with partial pivoting. Rejects the factorization when the exact
/// 1-norm condition number exceeds [`max_condition`].
fn factorize(m: &Matrix, symmetric: bool) -> Result<Factorization, NumError> {
    let n = m.rows;
    let norm = one_norm(m);
    if norm == 0.0 {
        return Err(NumError::SingularMatrix);
    }
    let tol = PIVOT_TOLERANCE * norm;
    let fact = match symmetric.then(|| ldlt(m, tol)).flatten() {
        Some((l, d)) => Factorization::Ldlt { l, d },
        None => {
            let (lu, perm) = lu_partial_pivot(m, tol)?;
            Factorization::Lu { lu, perm }
        }
    };
    // ‖m⁻¹‖₁ column by column; n is small enough for this to be cheap.
    let mut inv_norm = 0.0f64;
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = fact.solve(n, &e);
        let s: f64 = col.iter().map(|v| v.abs()).sum();
        if !s.is_finite() {
            return Err(NumError::SingularMatrix);
        }
        inv_norm = inv_norm.max(s);
    }
    if norm * inv_norm > max_condition() {
        return Err(NumError::SingularMatrix);
    }
    Ok(fact)
}

fn finish(x: Vec<f64>) -> Result<Vector, NumError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumError::SingularMatrix);
    }
    Ok(Vector { data: x })
}

/// Solves `m·x = rhs` for symmetric (positive-definite in the common case)
/// `m`. Indefinite matrices are handled by the pivoted fallback.
pub fn solve_spd(m: &Matrix, rhs: &Vector) -> Result<Vector, NumError> {
    check_square(m, rhs.len())?;
    let fact = factorize(m, true)?;
    finish(fact.solve(m.rows, rhs))
}

/// Solves `m·x = rhs` for a general square `m` by pivoted LU.
pub fn solve(m: &Matrix, rhs: &Vector) -> Result<Vector, NumError> {
    check_square(m, rhs.len())?;
    let fact = factorize(m, false)?;
    finish(fact.solve(m.rows, rhs))
}

pub fn inverse(m: &Matrix) -> Result<Matrix, NumError> {
    check_square(m, m.rows)?;
    let n = m.rows;
    let fact = factorize(m, false)?;
    let mut data = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for c in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[c] = 1.0;
        let col = fact.solve(n, &e);
        for r in 0..n {
            data[r * n + c] = col[r];
        }
    }
    Matrix::new(n, n, data).map_err(|_| NumError::SingularMatrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn one_norm_examples() {
        let m = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(one_norm(&m), 6.0);
        assert_eq!(one_norm(&Matrix::from_rows(&[[0.0]]).unwrap()), 0.0);
        assert_eq!(one_norm(&v(&[1.0, -1.0, 1.0]).to_column()), 3.0);
        assert_eq!(v(&[1.0, -1.0, 1.0]).one_norm(), 3.0);
    }

    #[test]
    fn solve_spd_examples() {
        let x = solve_spd(&Matrix::identity(2), &v(&[3.0, 5.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 5.0]);
        let x = solve_spd(&Matrix::diagonal(&[2.0, 4.0]), &v(&[2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
        let s = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(solve_spd(&s, &v(&[1.0, 2.0])), Err(NumError::SingularMatrix));
    }

    #[test]
    fn solve_spd_indefinite_uses_pivoted_fallback() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let x = solve_spd(&m, &v(&[2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 2.0]);
    }

    #[test]
    fn ill_conditioned_is_singular() {
        let m = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0 + 1e-15]]).unwrap();
        assert_eq!(solve_spd(&m, &v(&[1.0, 1.0])), Err(NumError::SingularMatrix));
    }

    #[test]
    fn shape_errors() {
        let a = Matrix::identity(2);
        let b = Matrix::identity(3);
        assert!(matches!(matmul(&a, &b), Err(NumError::ShapeMismatch(_))));
        assert!(matches!(
            sub(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(NumError::ShapeMismatch(_))
        ));
        let rect = Matrix::new(2, 3, vec![1.0; 6]).unwrap();
        assert!(matches!(
            solve_spd(&rect, &v(&[1.0, 2.0])),
            Err(NumError::ShapeMismatch(_))
        ));
        assert!(matches!(
            solve_spd(&a, &v(&[1.0, 2.0, 3.0])),
            Err(NumError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn construction_rejects_bad_entries() {
        assert_eq!(Vector::new(vec![]), Err(NumError::Empty));
        assert_eq!(Vector::new(vec![1.0, f64::NAN]), Err(NumError::NonFinite(1)));
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert_eq!(
            Matrix::new(1, 2, vec![f64::INFINITY, 0.0]),
            Err(NumError::NonFinite(0))
        );
    }

    #[test]
    fn plumbing_examples() {
        let col = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert_eq!(matmul(&Matrix::identity(2), &col).unwrap(), col);
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(transpose(&transpose(&m)), m);
        assert_eq!(transpose(&m).rows(), 2);
        assert_eq!(sub(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(scale(&v(&[1.0, -2.0]), 3.0).as_slice(), &[3.0, -6.0]);
    }

    #[test]
    fn gram_matches_explicit_product() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(m.gram(), matmul(&transpose(&m), &m).unwrap());
        let y = v(&[1.0, 0.5, -1.0]);
        assert_eq!(
            m.tr_mat_vec(&y).unwrap(),
            transpose(&m).mat_vec(&y).unwrap()
        );
    }

    #[test]
    fn inverse_round_trips() {
        let m = Matrix::from_rows(&[[4.0, 1.0], [2.0, 3.0]]).unwrap();
        let inv = inverse(&m).unwrap();
        let p = matmul(&m, &inv).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((p[(r, c)] - want).abs() < 1e-14);
            }
        }
    }
}
