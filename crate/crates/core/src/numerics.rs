//! Dense linear algebra shared by the estimators.
//!
//! Matrices are small row-major containers; the heavy decompositions
//! (Hermitian eigensolver, SVD, general eigenvalues) are delegated to
//! `faer` running sequentially, so results do not depend on how many
//! worker threads the caller uses.

use std::ops::{Index, IndexMut};
use std::sync::Once;

use faer::{Mat, Par, Side};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Inverse condition numbers above this ceiling are treated as singular.
pub const CONDITION_CEILING: f64 = 1e12;

const AB_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("structural error: {0}")]
    Structural(String),
    #[error("{routine} did not converge after {iterations} iterations")]
    NotConverged {
        routine: &'static str,
        iterations: usize,
    },
    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { condition: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

fn sequential() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericsError::Structural(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn real_part(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H v`
    pub fn adjoint_mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    /// `self^H other`
    pub fn adjoint_mul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "row counts differ");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, a) in self.row(k).iter().enumerate() {
                let a = a.conj();
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += a * bv;
                }
            }
        }
        out
    }

    /// True when `max|A - A^H| <= tol * max|A|`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs();
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst <= tol * scale
    }

    fn to_faer(&self) -> Mat<C64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NumericsError::Structural(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Structural("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Real matrix times complex vector.
    pub fn mul_complex_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| b * a).sum())
            .collect()
    }

    /// `self^T v` for a complex vector.
    pub fn transpose_mul_complex_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Real matrix times complex matrix.
    pub fn mul_complex(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows(), "inner dimensions differ");
        let mut out = ComplexMatrix::zeros(self.rows, other.cols());
        let oc = other.cols();
        for i in 0..self.rows {
            let dst = &mut out.data[i * oc..(i + 1) * oc];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += b * a;
                }
            }
        }
        out
    }

    /// Keeps the first `m` rows.
    pub fn top_rows(&self, m: usize) -> Self {
        assert!(m <= self.rows);
        Self {
            rows: m,
            cols: self.cols,
            data: self.data[..m * self.cols].to_vec(),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.max_abs();
        (0..self.rows)
            .all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale))
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(lambda) V^H`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * v[(j, k)].conj() * self.eigenvalues[k])
                .sum()
        })
    }
}

const HERMITIAN_TOL: f64 = 1e-10;

pub fn hermitian_eig(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    if !a.is_square() {
        return Err(NumericsError::Structural(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_hermitian(HERMITIAN_TOL) {
        return Err(NumericsError::Structural("matrix is not Hermitian".into()));
    }
    sequential();
    let n = a.rows();
    let evd =
        a.to_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| NumericsError::NotConverged {
                routine: "hermitian_eig",
                iterations: 30 * n.max(1),
            })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer sorts ascending; a stable sort on the reversed key keeps ties in index order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].re.total_cmp(&s[i].re));
    let eigenvalues = order.iter().map(|&i| s[i].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues of a real symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: &RealMatrix) -> Result<Vec<f64>> {
    if m.rows() != m.cols() {
        return Err(NumericsError::Structural("matrix is not square".into()));
    }
    sequential();
    let mut vals = m
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| NumericsError::NotConverged {
            routine: "symmetric_eigenvalues",
            iterations: 30 * m.rows().max(1),
        })?;
    vals.reverse();
    Ok(vals)
}

/// Inverse of a symmetric positive definite matrix through its
/// eigendecomposition, refusing inputs whose condition number exceeds
/// [`CONDITION_CEILING`].
pub fn invert_symmetric(m: &RealMatrix) -> Result<RealMatrix> {
    if m.rows() != m.cols() {
        return Err(NumericsError::Structural("matrix is not square".into()));
    }
    sequential();
    let n = m.rows();
    let evd =
        m.to_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| NumericsError::NotConverged {
                routine: "invert_symmetric",
                iterations: 30 * n.max(1),
            })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let max = (0..n).map(|i| s[i]).fold(f64::MIN, f64::max);
    let min = (0..n).map(|i| s[i]).fold(f64::MAX, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= CONDITION_CEILING) {
        return Err(NumericsError::Singular { condition });
    }
    Ok(RealMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| u[(i, k)] * u[(j, k)] / s[k]).sum()
    }))
}

/// `argmin_d ||y - B d||` computed through a thin SVD of `B`.
pub fn least_squares(b: &ComplexMatrix, y: &[C64]) -> Result<Vec<C64>> {
    if b.rows() < b.cols() {
        return Err(NumericsError::Structural(format!(
            "least squares needs rows >= cols, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    if y.len() != b.rows() {
        return Err(NumericsError::Structural(format!(
            "right-hand side has {} entries, matrix has {} rows",
            y.len(),
            b.rows()
        )));
    }
    sequential();
    let svd = b
        .to_faer()
        .thin_svd()
        .map_err(|_| NumericsError::NotConverged {
            routine: "least_squares",
            iterations: 0,
        })?;
    let s = svd.S().column_vector();
    let n = b.cols();
    let condition = singular_condition((0..n).map(|i| s[i].re));
    if !(condition <= CONDITION_CEILING) {
        return Err(NumericsError::Singular { condition });
    }
    let u = svd.U();
    let v = svd.V();
    let mut coeffs = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let proj: C64 = (0..b.rows()).map(|i| u[(i, k)].conj() * y[i]).sum();
        let scaled = proj / s[k].re;
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c += v[(j, k)] * scaled;
        }
    }
    Ok(coeffs)
}

fn singular_condition(values: impl Iterator<Item = f64>) -> f64 {
    let (mut max, mut min) = (0.0f64, f64::INFINITY);
    for v in values {
        max = max.max(v);
        min = min.min(v);
    }
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `(M^T M)^{-1} M^T` for a full-column-rank real matrix.
pub fn real_pseudoinverse(m: &RealMatrix) -> Result<RealMatrix> {
    if m.rows() < m.cols() {
        return Err(NumericsError::Structural(format!(
            "pseudoinverse needs rows >= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    sequential();
    let svd = m
        .to_faer()
        .thin_svd()
        .map_err(|_| NumericsError::NotConverged {
            routine: "real_pseudoinverse",
            iterations: 0,
        })?;
    let s = svd.S().column_vector();
    let n = m.cols();
    let condition = singular_condition((0..n).map(|i| s[i]));
    if !(condition <= CONDITION_CEILING) {
        return Err(NumericsError::Singular { condition });
    }
    let u = svd.U();
    let v = svd.V();
    Ok(RealMatrix::from_fn(n, m.rows(), |i, j| {
        (0..n).map(|k| v[(i, k)] * u[(j, k)] / s[k]).sum()
    }))
}

/// Coefficients (ascending degree) together with the roots found for them.
#[derive(Debug, Clone)]
pub struct PolynomialRoots {
    pub coefficients: Vec<C64>,
    pub roots: Vec<C64>,
}

impl PolynomialRoots {
    /// Largest `|p(r)|` over the returned roots.
    pub fn max_residual(&self) -> f64 {
        self.roots
            .iter()
            .map(|&r| horner(&self.coefficients, r).norm())
            .fold(0.0, f64::max)
    }
}

/// Evaluates `sum c_k z^k`.
pub fn horner(coefficients: &[C64], z: C64) -> C64 {
    coefficients
        .iter()
        .rev()
        .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Splits off exact zero coefficients: trailing ones lower the degree,
/// leading ones are roots at the origin.
fn trim(coefficients: &[C64]) -> Result<(usize, &[C64])> {
    let zero = C64::new(0.0, 0.0);
    let Some(top) = coefficients.iter().rposition(|&c| c != zero) else {
        return Err(NumericsError::Structural(
            "polynomial has no nonzero coefficient".into(),
        ));
    };
    let low = coefficients.iter().position(|&c| c != zero).unwrap_or(0);
    if top == 0 {
        return Err(NumericsError::Structural(
            "polynomial is constant; degree must be at least 1".into(),
        ));
    }
    Ok((low, &coefficients[low..=top]))
}

/// All roots from the eigenvalues of the companion matrix.
pub fn poly_roots(coefficients: &[C64]) -> Result<PolynomialRoots> {
    let (zeros_at_origin, core) = trim(coefficients)?;
    let mut roots = vec![C64::new(0.0, 0.0); zeros_at_origin];
    roots.extend(companion_roots(core)?);
    Ok(PolynomialRoots {
        coefficients: coefficients.to_vec(),
        roots,
    })
}

fn companion_roots(core: &[C64]) -> Result<Vec<C64>> {
    let n = core.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    sequential();
    let lead = core[n];
    let mut m = Mat::<C64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -core[i] / lead;
    }
    m.eigenvalues().map_err(|_| NumericsError::NotConverged {
        routine: "poly_roots",
        iterations: 30 * n,
    })
}

/// All roots by simultaneous Aberth-Ehrlich iteration, falling back to the
/// companion matrix if some root fails to settle.
pub fn poly_roots_aberth(coefficients: &[C64]) -> Result<PolynomialRoots> {
    let (zeros_at_origin, core) = trim(coefficients)?;
    let mut roots = vec![C64::new(0.0, 0.0); zeros_at_origin];
    match aberth(core) {
        Some(found) => roots.extend(found),
        None => roots.extend(companion_roots(core)?),
    }
    Ok(PolynomialRoots {
        coefficients: coefficients.to_vec(),
        roots,
    })
}

/// Newton correction `p(z)/p'(z)` plus a flag telling whether `|p(z)|` is
/// already below its rounding-error bound. Large `|z|` is handled through
/// the reversed polynomial so nothing overflows.
fn newton_ratio(core: &[C64], abs_core: &[f64], z: C64) -> (C64, bool) {
    let n = core.len() - 1;
    let eps = f64::EPSILON;
    if z.norm() <= 1.0 {
        let mut p = core[n];
        let mut dp = C64::new(0.0, 0.0);
        let mut bound = abs_core[n];
        let az = z.norm();
        for k in (0..n).rev() {
            dp = dp * z + p;
            p = p * z + core[k];
            bound = bound * az + abs_core[k];
        }
        let settled = p.norm() <= 4.0 * eps * bound;
        (p / dp, settled)
    } else {
        // p(z) = z^n q(1/z) with q having the coefficients reversed.
        let u = z.inv();
        let au = u.norm();
        let mut q = core[0];
        let mut dq = C64::new(0.0, 0.0);
        let mut bound = abs_core[0];
        for k in 1..=n {
            dq = dq * u + q;
            q = q * u + core[k];
            bound = bound * au + abs_core[k];
        }
        let settled = q.norm() <= 4.0 * eps * bound;
        let denom = C64::new(n as f64, 0.0) - u * dq / q;
        (z / denom, settled)
    }
}

fn aberth(core: &[C64]) -> Option<Vec<C64>> {
    let n = core.len() - 1;
    if n == 1 {
        return Some(vec![-core[0] / core[1]]);
    }
    let abs_core: Vec<f64> = core.iter().map(|c| c.norm()).collect();
    let radius = (abs_core[0] / abs_core[n]).powf(1.0 / n as f64);
    let radius = if radius.is_finite() && radius > 0.0 {
        radius
    } else {
        1.0
    };
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64 + 0.4))
        .collect();
    let mut done = vec![false; n];
    let mut remaining = n;
    for _ in 0..AB_MAX_ITERATIONS {
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (ratio, settled) = newton_ratio(core, &abs_core, z[i]);
            if settled || !ratio.is_finite() {
                done[i] = true;
                remaining -= 1;
                continue;
            }
            let zi = z[i];
            let repulsion: C64 = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &zj)| (zi - zj).inv())
                .sum();
            let step = ratio / (C64::new(1.0, 0.0) - ratio * repulsion);
            if !step.is_finite() {
                return None;
            }
            z[i] = zi - step;
            if step.norm() <= 4.0 * f64::EPSILON * z[i].norm().max(f64::MIN_POSITIVE) {
                done[i] = true;
                remaining -= 1;
            }
        }
        if remaining == 0 {
            return Some(z);
        }
    }
    None
}
