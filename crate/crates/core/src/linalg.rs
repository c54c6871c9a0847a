//! Dense row-major matrices, vectors, and the closed-form ridge projection
//! used by the geometric projection score.
//!
//! Everything is `f64`. The projection of `z` onto the column span of a thin
//! matrix `A` (d x k, k small) is computed by factoring the k x k Gram system
//! `(A^T A + lambda I) w = A^T z` and returning `A w`, so one call costs
//! O(d k^2) and never materialises a d x d hat matrix.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

/// Default ridge constant for the projection solve.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Norm guard used by [`cosine_similarity`].
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_mismatch("Matrix::new", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`Matrix::new`] but skips the finiteness scan. Length is still
    /// enforced.
    pub(crate) fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(dim_mismatch("Matrix::from_rows", c, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    /// Stacks equally sized column vectors into a d x k matrix.
    pub fn from_columns(cols: &[&[f64]]) -> Result<Self> {
        let k = cols.len();
        let d = cols.first().map_or(0, |c| c.len());
        let mut m = Self::zeros(d, k);
        for (j, col) in cols.iter().enumerate() {
            if col.len() != d {
                return Err(dim_mismatch("Matrix::from_columns", d, col.len()));
            }
            for (i, &v) in col.iter().enumerate() {
                m.data[i * k + j] = v;
            }
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_columns"));
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(dim_mismatch(
                "Matrix::matmul",
                format!("inner {}", self.cols),
                format!("inner {}", other.rows),
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_vec(n, m, out))
    }

    /// Selects rows by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec(idx.len(), self.cols, data)
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hconcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(dim_mismatch("Matrix::hconcat", rows, bad.rows));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Vector::new"));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    /// Standard basis vector `e_i` of length `dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.data
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cholesky factor `L` of a symmetric positive-definite matrix, `G = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(g: &Matrix) -> Result<Self> {
        if g.rows != g.cols {
            return Err(dim_mismatch("Cholesky::factor", "square", format!("{:?}", g.shape())));
        }
        Self::factor_slice(g.rows, &g.data)
    }

    pub(crate) fn factor_slice(n: usize, g: &[f64]) -> Result<Self> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = g[i * n + j];
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `G x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[i * n + p] * b[p];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in i + 1..n {
                s -= l[p * n + i] * b[p];
            }
            b[i] = s / l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Factored ridge system for a fixed set of k spanning columns in R^d.
///
/// Holds the columns and the Cholesky factor of `A^T A + lambda I` so the
/// same span can project many vectors, which is what the N x N score matrix
/// of a batch needs.
#[derive(Debug, Clone)]
pub struct RidgeProjector {
    d: usize,
    /// Columns of `A`, each of length `d`, stored contiguously.
    columns: Vec<f64>,
    k: usize,
    chol: Cholesky,
}

impl RidgeProjector {
    pub fn from_columns(cols: &[&[f64]], lambda: f64) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::Empty("RidgeProjector::from_columns"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("ridge lambda must be positive, got {lambda}")));
        }
        let d = cols[0].len();
        if d == 0 {
            return Err(Error::Empty("RidgeProjector::from_columns"));
        }
        let k = cols.len();
        let mut columns = Vec::with_capacity(d * k);
        for c in cols {
            if c.len() != d {
                return Err(dim_mismatch("RidgeProjector::from_columns", d, c.len()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("RidgeProjector::from_columns"));
            }
            columns.extend_from_slice(c);
        }
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&columns[i * d..(i + 1) * d], &columns[j * d..(j + 1) * d]);
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
            gram[i * k + i] += lambda;
        }
        let chol = Cholesky::factor_slice(k, &gram)?;
        Ok(Self { d, columns, k, chol })
    }

    pub fn from_matrix(a: &Matrix, lambda: f64) -> Result<Self> {
        let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.col(j)).collect();
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        Self::from_columns(&refs, lambda)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j * self.d..(j + 1) * self.d]
    }

    /// `A^T v`.
    pub fn at_times(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k).map(|j| dot(self.column(j), v)).collect()
    }

    /// `A w`.
    pub fn a_times(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (j, &wj) in w.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.column(j)) {
                *o += wj * a;
            }
        }
        out
    }

    /// Solves `(A^T A + lambda I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.chol.solve_in_place(b)
    }

    /// Returns `(w, z_bar)` with `w = (A^T A + lambda I)^-1 A^T z` and
    /// `z_bar = A w`.
    pub fn project_with_weights(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut w = self.at_times(z);
        self.chol.solve_in_place(&mut w);
        let zbar = self.a_times(&w);
        (w, zbar)
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        self.project_with_weights(z).1
    }
}

/// Ridge projection of `z` onto the column span of `a`:
/// `A (A^T A + lambda I)^-1 A^T z`.
pub fn ridge_project(a: &Matrix, z: &Vector, lambda: f64) -> Result<Vector> {
    if a.cols() == 0 || a.rows() == 0 {
        return Err(Error::Empty("ridge_project"));
    }
    if a.rows() != z.dim() {
        return Err(dim_mismatch("ridge_project", a.rows(), z.dim()));
    }
    if !a.is_finite() || z.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge_project"));
    }
    let proj = RidgeProjector::from_matrix(a, lambda)?;
    Ok(Vector {
        data: proj.project(z.as_slice()),
    })
}

/// Guarded cosine similarity on raw slices; see [`cosine_similarity`].
pub fn cosine_slices(u: &[f64], v: &[f64], eps: f64) -> f64 {
    let nu = norm(u).max(eps);
    let nv = norm(v).max(eps);
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// `u.v / (max(|u|, eps) max(|v|, eps))`, clamped to [-1, 1].
pub fn cosine_similarity(u: &Vector, v: &Vector, eps: f64) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(dim_mismatch("cosine_similarity", u.dim(), v.dim()));
    }
    Ok(cosine_slices(u.as_slice(), v.as_slice(), eps))
}

/// Overflow-free `log(sum(exp(v)))`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("log_sum_exp"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log_sum_exp"));
    }
    Ok(lse_unchecked(values.iter().copied()))
}

pub(crate) fn lse_unchecked(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hat-matrix oracle: forms A (A^T A + lambda I)^-1 A^T by explicit
    /// Gauss-Jordan inversion, then multiplies.
    fn hat_matrix_projection(a: &Matrix, z: &[f64], lambda: f64) -> Vec<f64> {
        let k = a.cols();
        let at = a.transpose();
        let mut g = at.matmul(a).unwrap();
        for i in 0..k {
            g.set(i, i, g.get(i, i) + lambda);
        }
        let inv = gauss_jordan_inverse(&g);
        let hat = a.matmul(&inv).unwrap().matmul(&at).unwrap();
        (0..hat.rows()).map(|i| dot(hat.row(i), z)).collect()
    }

    fn gauss_jordan_inverse(m: &Matrix) -> Matrix {
        let n = m.rows();
        let mut aug = vec![vec![0.0; 2 * n]; n];
        for i in 0..n {
            for j in 0..n {
                aug[i][j] = m.get(i, j);
            }
            aug[i][n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| aug[x][c].abs().partial_cmp(&aug[y][c].abs()).unwrap())
                .unwrap();
            aug.swap(c, p);
            let piv = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    for j in 0..2 * n {
                        aug[r][j] -= f * aug[c][j];
                    }
                }
            }
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, aug[i][n + j]);
            }
        }
        out
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn vector_in_span_is_preserved() {
        let a = Matrix::from_columns(&[Vector::basis(3, 0).as_slice(), Vector::basis(3, 1).as_slice()]).unwrap();
        let zbar = ridge_project(&a, &Vector::basis(3, 0), 1e-8).unwrap();
        assert!((zbar.as_slice()[0] - 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((zbar.as_slice()[0] - 1.0).abs() < 1e-7);
        assert_eq!(&zbar.as_slice()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn orthogonal_vector_projects_to_zero() {
        let a = Matrix::from_columns(&[Vector::basis(3, 0).as_slice()]).unwrap();
        let zbar = ridge_project(&a, &Vector::basis(3, 2), 1e-8).unwrap();
        assert_eq!(zbar.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn seeded_case_matches_hat_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 4, 2);
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = ridge_project(&a, &Vector::new(z.clone()).unwrap(), 1e-8).unwrap();
        let want = hat_matrix_projection(&a, &z, 1e-8);
        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn hundred_random_cases_match_hat_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let k = rng.random_range(1..=4);
            let d = rng.random_range(k..=16);
            let a = random_matrix(&mut rng, d, k);
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = ridge_project(&a, &Vector::new(z.clone()).unwrap(), 1e-8).unwrap();
            let want = hat_matrix_projection(&a, &z, 1e-8);
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "d={d} k={k}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn ridge_project_errors() {
        let a = Matrix::zeros(3, 1);
        assert!(matches!(
            ridge_project(&a, &Vector::zeros(2), 1e-8),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        let a = Matrix::identity(2);
        assert!(ridge_project(&a, &Vector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let u = Vector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(cosine_similarity(&u, &u, COSINE_EPS).unwrap(), 1.0);
        let e1 = Vector::basis(2, 0);
        let e2 = Vector::basis(2, 1);
        assert_eq!(cosine_similarity(&e1, &e2, COSINE_EPS).unwrap(), 0.0);
        let one_one = Vector::new(vec![1.0, 1.0]).unwrap();
        let c = cosine_similarity(&one_one, &e1, COSINE_EPS).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(cosine_similarity(&e1, &Vector::zeros(3), COSINE_EPS).is_err());
        // zero vector: guarded, not NaN
        assert_eq!(cosine_similarity(&e1, &Vector::zeros(2), COSINE_EPS).unwrap(), 0.0);
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        // direct summation: ln(e + e^2 + e^3)
        let direct = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((direct - 3.4076059).abs() < 1e-7);
        assert!((log_sum_exp(&[1.0, 2.0, 3.0]).unwrap() - direct).abs() < 1e-14);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::factor(&m), Err(Error::NotPositiveDefinite)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mat_and_vec() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
            (1usize..=8, 1usize..=4).prop_flat_map(|(d, k)| {
                (
                    Just(d),
                    Just(k),
                    prop::collection::vec(-2.0f64..2.0, d * k),
                    prop::collection::vec(-2.0f64..2.0, d),
                )
            })
        }

        proptest! {
            #[test]
            fn projection_contracts((d, k, a, z) in mat_and_vec()) {
                let a = Matrix::new(d, k, a).unwrap();
                let z = Vector::new(z).unwrap();
                let zbar = ridge_project(&a, &z, 1e-8).unwrap();
                prop_assert!(zbar.norm() <= z.norm() * (1.0 + 1e-12) + 1e-15);
            }

            #[test]
            fn projection_is_nearly_idempotent((d, k, a, z) in mat_and_vec()) {
                let lambda = 1e-7;
                let a = Matrix::new(d, k, a).unwrap();
                // well-conditioned spans only: smallest eigenvalue of A^T A at least 0.1
                prop_assume!(k <= d);
                let mut g = a.transpose().matmul(&a).unwrap();
                for i in 0..k {
                    g.set(i, i, g.get(i, i) - 0.1);
                }
                prop_assume!(Cholesky::factor(&g).is_ok());
                let z = Vector::new(z).unwrap();
                let once = ridge_project(&a, &z, lambda).unwrap();
                let twice = ridge_project(&a, &once, lambda).unwrap();
                let diff: Vec<f64> = once.as_slice().iter().zip(twice.as_slice()).map(|(x, y)| x - y).collect();
                prop_assert!(norm(&diff) <= 10.0 * lambda * z.norm() + 1e-12);
            }
        }
    }

    #[test]
    fn span_fidelity_well_conditioned() {
        // orthonormal columns, so the smallest singular value is 1
        let q = Matrix::from_rows(&[
            vec![0.6, 0.0],
            vec![0.8, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let lambda = 1e-6;
        let z = Vector::new(vec![0.6 * 2.0, 0.8 * 2.0, -3.0, 0.0]).unwrap();
        let zbar = ridge_project(&q, &z, lambda).unwrap();
        let diff: Vec<f64> = z.as_slice().iter().zip(zbar.as_slice()).map(|(x, y)| x - y).collect();
        assert!(norm(&diff) <= 2.0 * lambda * z.norm());
    }
}
