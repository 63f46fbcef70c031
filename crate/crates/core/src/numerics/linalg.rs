//! Small dense linear algebra: a row-major matrix, a symmetric wrapper,
//! cyclic Jacobi eigendecomposition and Cholesky-based SPD solves.
//!
//! Matrices in this crate are tiny (covariances of a few hundred dimensions
//! at most, design matrices of a few thousand rows), so everything is kept
//! in plain `Vec<f64>` storage.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a symmetric matrix is treated as
/// singular.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(Error::Shape(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.rows_iter().map(|r| dot(r, v)).collect())
    }

    /// `selfᵀ v`.
    pub fn t_mat_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::Shape(format!(
                "vector of length {} against {} rows",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &w) in self.rows_iter().zip(v) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += w * x;
            }
        }
        Ok(out)
    }

    /// Gram matrix `selfᵀ self`.
    pub fn gram(&self) -> SymMatrix {
        let d = self.cols;
        let mut g = Matrix::zeros(d, d);
        for r in self.rows_iter() {
            for a in 0..d {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in a..d {
                    g[(a, b)] += ra * r[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        SymMatrix(g)
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                out[(i, jj)] = self[(i, j)];
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Square symmetric matrix. Construction averages `a` with its transpose so
/// the stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Shape("symmetric matrix must have dim >= 1".into()));
        }
        if !m.is_finite() {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        let mut m = m;
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(Matrix::identity(n))
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diag(diag))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// Principal submatrix on the given indices.
    pub fn submatrix(&self, idx: &[usize]) -> SymMatrix {
        let mut m = Matrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m[(a, b)] = self.0[(i, j)];
            }
        }
        SymMatrix(m)
    }

    /// `vᵀ A v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.0.mat_vec(v)?))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Eigenvalues sorted descending; column `i` of `eigenvectors` pairs with
/// `eigenvalues[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigDecomposition {
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty decomposition")
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n)
                    .map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)])
                    .sum();
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn eig_sym(a: &SymMatrix) -> Result<EigDecomposition> {
    let n = a.dim();
    let mut m = a.matrix().clone();
    let mut v = Matrix::identity(n);

    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(EigDecomposition {
            eigenvalues: vec![0.0; n],
            eigenvectors: v,
        });
    }

    let total_sq: f64 = m.as_slice().iter().map(|x| x * x).sum();
    let tol = (f64::EPSILON * f64::EPSILON) * total_sq;

    let mut converged = n == 1;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                // theta == 0 gives signum 1.0, which is the right rotation
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;

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
        return Err(Error::NumericFailure(format!(
            "Jacobi eigendecomposition did not converge in {JACOBI_MAX_SWEEPS} sweeps \
             (dim {n}, max |entry| {scale:e})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(EigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Rejects decompositions whose smallest eigenvalue is not above the SPD floor.
pub fn check_spd(eig: &EigDecomposition) -> Result<()> {
    let max = eig.max_eigenvalue();
    let min = eig.min_eigenvalue();
    if !(max > 0.0) || !(min > SPD_RELATIVE_FLOOR * max) {
        return Err(Error::RankDeficient(format!(
            "eigenvalue range [{min:e}, {max:e}] is not positive definite \
             (condition floor {SPD_RELATIVE_FLOOR:e})"
        )));
    }
    Ok(())
}

/// `Tr(A⁻¹) = Σ 1/λᵢ` for a symmetric positive definite matrix.
pub fn spd_inverse_trace(a: &SymMatrix) -> Result<f64> {
    let eig = eig_sym(a)?;
    check_spd(&eig)?;
    Ok(eig.eigenvalues.iter().map(|l| 1.0 / l).sum())
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = Matrix::zeros(n, n);
        let max_diag = a.diagonal().into_iter().fold(0.0_f64, f64::max);
        for j in 0..n {
            let mut s = a[(j, j)];
            for k in 0..j {
                s -= l[(j, k)] * l[(j, k)];
            }
            if !(s > SPD_RELATIVE_FLOOR * max_diag) {
                return Err(Error::RankDeficient(format!(
                    "Cholesky pivot {j} is {s:e}; matrix is singular or indefinite"
                )));
            }
            let d = s.sqrt();
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

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.nrows();
        if b.len() != n {
            return Err(Error::Shape(format!(
                "right-hand side of length {} for dim {n}",
                b.len()
            )));
        }
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.l.nrows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        SymMatrix::new(inv).expect("inverse of SPD is finite and square")
    }
}

/// `Tr(Σ A⁻¹)` for SPD `A`, via Cholesky.
pub fn trace_product_inverse(sigma: &SymMatrix, a: &SymMatrix) -> Result<f64> {
    if sigma.dim() != a.dim() {
        return Err(Error::Shape(format!(
            "Σ has dim {}, A has dim {}",
            sigma.dim(),
            a.dim()
        )));
    }
    let inv = Cholesky::new(a)?.inverse();
    let n = a.dim();
    let mut t = 0.0;
    for i in 0..n {
        for j in 0..n {
            t += sigma[(i, j)] * inv[(j, i)];
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = Matrix::from_vec(
            d,
            d,
            (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut g = a.gram().into_matrix();
        for i in 0..d {
            g[(i, i)] += 0.1;
        }
        SymMatrix::new(g).unwrap()
    }

    fn orthogonality_error(v: &Matrix) -> f64 {
        let vtv = v.transpose().matmul(v).unwrap();
        let n = v.nrows();
        let mut e = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((vtv[(i, j)] - target).abs());
            }
        }
        e
    }

    #[test]
    fn identity_eigenvalues() {
        let e = eig_sym(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0]);
        assert!(orthogonality_error(&e.eigenvectors) < 1e-12);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        // roots of (2-l)^2 - 1 = 0 are 3 and 1
        let a = SymMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = eig_sym(&a).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-12);
        let r = e.reconstruct();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_is_signed_permutation() {
        let a = SymMatrix::from_diag(&[9.0, 4.0]).unwrap();
        let e = eig_sym(&a).unwrap();
        assert_eq!(e.eigenvalues, vec![9.0, 4.0]);
        for v in e.eigenvectors.as_slice() {
            assert!(v.abs() == 0.0 || v.abs() == 1.0);
        }
    }

    #[test]
    fn reconstruction_and_orthogonality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=12 {
            let a = random_spd(d, &mut rng);
            let e = eig_sym(&a).unwrap();
            assert!(orthogonality_error(&e.eigenvectors) <= 1e-10);
            let r = e.reconstruct();
            let tol = 1e-8 * a.matrix().max_abs();
            for i in 0..d {
                for j in 0..d {
                    assert!((r[(i, j)] - a[(i, j)]).abs() <= tol);
                }
            }
            assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn inverse_trace_cases() {
        assert_eq!(spd_inverse_trace(&SymMatrix::identity(4)).unwrap(), 4.0);
        let t = spd_inverse_trace(&SymMatrix::from_diag(&[2.0, 4.0]).unwrap()).unwrap();
        assert!((t - 0.75).abs() < 1e-15);
    }

    #[test]
    fn inverse_trace_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(5, &mut rng);
        let via_eig = spd_inverse_trace(&a).unwrap();
        let explicit = Cholesky::new(&a).unwrap().inverse().matrix().trace();
        assert!((via_eig - explicit).abs() <= 1e-8 * explicit);
    }

    #[test]
    fn singular_rejected() {
        let a = SymMatrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            spd_inverse_trace(&a),
            Err(Error::RankDeficient(_))
        ));
        assert!(matches!(Cholesky::new(&a), Err(Error::RankDeficient(_))));
        let indefinite = SymMatrix::from_diag(&[1.0, -1.0]).unwrap();
        assert!(spd_inverse_trace(&indefinite).is_err());
    }

    #[test]
    fn symmetrized_on_construction() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [4.0, 1.0]]).unwrap();
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 0)], 3.0);
        assert!(SymMatrix::new(Matrix::from_diag(&[f64::NAN])).is_err());
    }

    #[test]
    fn cholesky_solve_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_spd(6, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b = a.matrix().mat_vec(&x).unwrap();
        let sol = Cholesky::new(&a).unwrap().solve(&b).unwrap();
        for (s, t) in sol.iter().zip(&x) {
            assert!((s - t).abs() < 1e-9);
        }
    }
}
