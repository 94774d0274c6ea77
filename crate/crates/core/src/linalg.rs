//! Dense Hermitian and real-symmetric linear algebra.
//!
//! Every rank decision downstream goes through [`eig_hermitian`] or
//! [`eig_symmetric`] so that pseudo-inverses, support projectors and
//! estimability verdicts all share one cutoff rule: an eigenvalue is
//! zero when it is below `rank_tol * max|eigenvalue|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Absolute tolerance on `A - A^dagger` accepted at construction (scaled by the
/// largest entry when that exceeds one).
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Below this every eigenvalue counts as zero regardless of the relative cutoff.
pub const ABSOLUTE_ZERO: f64 = 1e-300;

/// Default relative rank tolerance for a `dim x dim` problem.
pub fn default_rank_tol(dim: usize) -> f64 {
    dim.max(1) as f64 * f64::EPSILON
}

fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

fn max_abs_r(m: &RMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// A complex square matrix that is Hermitian within [`HERMITIAN_TOL`].
///
/// The stored matrix is exactly Hermitian: construction symmetrizes away the
/// residual that passed the check.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput(
                "operator has non-finite entries".into(),
            ));
        }
        let scale = max_abs_c(&m).max(1.0);
        let dev = max_abs_c(&(&m - m.adjoint()));
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "operator is not Hermitian (max |A - A^dagger| = {dev:.3e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Returns `(m + m^dagger) / 2` without checking how far `m` was from Hermitian.
    pub fn symmetrized(m: CMatrix) -> Self {
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Self(h)
    }

    pub fn from_real(m: &RMatrix) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Re Tr[self * other]`; the imaginary part vanishes for Hermitian pairs.
    pub fn trace_product(&self, other: &HermitianOperator) -> f64 {
        let (a, b) = (&self.0, &other.0);
        let n = a.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += (a[(i, j)] * b[(j, i)]).re;
            }
        }
        s
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * C64::new(c, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// A real matrix that is symmetric within [`HERMITIAN_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealSymmetricMatrix(RMatrix);

impl RealSymmetricMatrix {
    pub fn new(m: RMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = max_abs_r(&m).max(1.0);
        let dev = max_abs_r(&(&m - m.transpose()));
        if dev > HERMITIAN_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max |S - S^T| = {dev:.3e})"
            )));
        }
        Ok(Self::symmetrized(m))
    }

    pub fn symmetrized(m: RMatrix) -> Self {
        let s = (&m + m.transpose()) * 0.5;
        Self(s)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> RMatrix {
        self.0
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: RVector,
    pub vectors: CMatrix,
}

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: RVector,
    pub vectors: RMatrix,
}

fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

pub fn eig_hermitian(h: &HermitianOperator) -> Result<HermitianEigen> {
    let m = h.matrix();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput(
            "operator has non-finite entries".into(),
        ));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen {
            values: RVector::zeros(0),
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition produced non-finite values".into(),
        ));
    }
    let order = ascending_order(&raw);
    let values = RVector::from_iterator(n, order.iter().map(|&i| raw[i]));
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

pub fn eig_symmetric(s: &RealSymmetricMatrix) -> Result<SymmetricEigen> {
    let m = s.matrix();
    let n = m.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: RVector::zeros(0),
            vectors: RMatrix::zeros(0, 0),
        });
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let raw: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(
            "eigendecomposition produced non-finite values".into(),
        ));
    }
    let order = ascending_order(&raw);
    let values = RVector::from_iterator(n, order.iter().map(|&i| raw[i]));
    let vectors = RMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Absolute eigenvalue cutoff implied by a relative tolerance.
pub fn rank_cutoff(values: &RVector, rank_tol: f64) -> f64 {
    let max = values.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    (rank_tol * max).max(ABSOLUTE_ZERO)
}

/// Moore-Penrose pseudo-inverse of a real symmetric matrix together with the
/// spectral data used to build it.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub pinv: RMatrix,
    pub rank: usize,
    pub eigen: SymmetricEigen,
    pub cutoff: f64,
    pub rank_tol: f64,
}

impl PseudoInverse {
    /// Orthonormal basis of the numerical null space, one vector per column.
    pub fn null_space(&self) -> RMatrix {
        let cols: Vec<RVector> = self
            .eigen
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() <= self.cutoff)
            .map(|(i, _)| self.eigen.vectors.column(i).into_owned())
            .collect();
        let n = self.eigen.values.len();
        if cols.is_empty() {
            RMatrix::zeros(n, 0)
        } else {
            RMatrix::from_columns(&cols)
        }
    }
}

pub fn pseudo_inverse(s: &RealSymmetricMatrix, rank_tol: Option<f64>) -> Result<PseudoInverse> {
    let rank_tol = rank_tol.unwrap_or_else(|| default_rank_tol(s.dim()));
    if !(rank_tol > 0.0) || !rank_tol.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }
    let eigen = eig_symmetric(s)?;
    let cutoff = rank_cutoff(&eigen.values, rank_tol);
    Ok(pinv_from_eigen(eigen, cutoff, rank_tol))
}

/// Pseudo-inverse with an absolute eigenvalue cutoff, for sub-blocks that must
/// share the rank decision of an enclosing matrix.
pub fn pseudo_inverse_with_cutoff(s: &RealSymmetricMatrix, cutoff: f64) -> Result<PseudoInverse> {
    let eigen = eig_symmetric(s)?;
    Ok(pinv_from_eigen(eigen, cutoff.max(ABSOLUTE_ZERO), f64::NAN))
}

fn pinv_from_eigen(eigen: SymmetricEigen, cutoff: f64, rank_tol: f64) -> PseudoInverse {
    let n = eigen.values.len();
    let mut pinv = RMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lam) in eigen.values.iter().enumerate() {
        if lam.abs() > cutoff {
            rank += 1;
            let v = eigen.vectors.column(k);
            pinv += (v * v.transpose()) / lam;
        }
    }
    PseudoInverse {
        pinv: RealSymmetricMatrix::symmetrized(pinv).into_matrix(),
        rank,
        eigen,
        cutoff,
        rank_tol,
    }
}

/// Orthogonal projector onto the range of `s`, computed as `S^+ S`.
pub fn support_projector(s: &RealSymmetricMatrix, rank_tol: Option<f64>) -> Result<RMatrix> {
    let p = pseudo_inverse(s, rank_tol)?;
    let n = s.dim();
    let mut proj = RMatrix::zeros(n, n);
    for (k, &lam) in p.eigen.values.iter().enumerate() {
        if lam.abs() > p.cutoff {
            let v = p.eigen.vectors.column(k);
            proj += v * v.transpose();
        }
    }
    Ok(proj)
}

/// Real coordinates of a Hermitian matrix: the diagonal, then `sqrt(2) Re`
/// of the strict upper triangle (row-major), then `sqrt(2) Im` of the same
/// entries. The map preserves the Frobenius inner product.
pub fn vectorize_hermitian(h: &HermitianOperator) -> RVector {
    let m = h.matrix();
    let d = m.nrows();
    let off = d * (d.saturating_sub(1)) / 2;
    let mut out = RVector::zeros(d + 2 * off);
    for i in 0..d {
        out[i] = m[(i, i)].re;
    }
    let s2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            out[d + k] = s2 * m[(i, j)].re;
            out[d + off + k] = s2 * m[(i, j)].im;
            k += 1;
        }
    }
    out
}

/// Least-squares test of whether `target` lies in the span of `basis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanVerdict {
    pub in_span: bool,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub target_norm: f64,
    pub tol: f64,
}

impl SpanVerdict {
    pub fn relative_residual(&self) -> f64 {
        if self.target_norm == 0.0 {
            0.0
        } else {
            self.residual_norm / self.target_norm
        }
    }
}

/// Pivots of a span basis below this fraction of the largest are treated as
/// zero.
pub const SPAN_BASIS_RANK_TOL: f64 = 1e-12;

/// Minimum-norm least-squares solution of `b c = t` through a column-pivoted
/// QR for the rank and a QR of the retained rows for the minimum norm.
fn min_norm_solve(b: &RMatrix, t: &RVector) -> RVector {
    let k = b.ncols();
    let qr = b.clone().col_piv_qr();
    let r = qr.r();
    let top = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(k))
        .take_while(|&i| top > 0.0 && r[(i, i)].abs() > SPAN_BASIS_RANK_TOL * top)
        .count();
    if rank == 0 {
        return RVector::zeros(k);
    }
    let rhs = qr.q().columns(0, rank).transpose() * t;
    // M y = rhs with M = R[..rank, ..] of full row rank; y = Q2 z, R2^T z = rhs
    let m = r.rows(0, rank).into_owned();
    let qr2 = m.transpose().qr();
    let z = qr2
        .r()
        .transpose()
        .solve_lower_triangular(&rhs)
        .expect("retained pivots are nonzero");
    let mut y = qr2.q() * z;
    qr.p().inv_permute_rows(&mut y);
    y
}

/// Minimum-norm least-squares fit of `target` by the columns in `basis`.
///
/// `in_span` holds when the residual is at most `tol * |target|`.
pub fn residual_in_span(target: &RVector, basis: &[RVector], tol: f64) -> Result<SpanVerdict> {
    if !(tol >= 0.0) || !tol.is_finite() {
        return Err(Error::InvalidInput(format!(
            "tolerance must be non-negative, got {tol}"
        )));
    }
    if target.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("target has non-finite entries".into()));
    }
    for b in basis {
        if b.len() != target.len() {
            return Err(Error::InvalidInput(format!(
                "basis vector length {} differs from target length {}",
                b.len(),
                target.len()
            )));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("basis has non-finite entries".into()));
        }
    }
    let tnorm = target.norm();
    if tnorm == 0.0 {
        return Ok(SpanVerdict {
            in_span: true,
            coefficients: vec![0.0; basis.len()],
            residual_norm: 0.0,
            target_norm: 0.0,
            tol,
        });
    }
    if basis.is_empty() {
        return Ok(SpanVerdict {
            in_span: false,
            coefficients: Vec::new(),
            residual_norm: tnorm,
            target_norm: tnorm,
            tol,
        });
    }
    let b = RMatrix::from_columns(basis);
    let coeffs = min_norm_solve(&b, target);
    let residual = (target - &b * &coeffs).norm();
    Ok(SpanVerdict {
        in_span: residual <= tol * tnorm,
        coefficients: coeffs.iter().copied().collect(),
        residual_norm: residual,
        target_norm: tnorm,
        tol,
    })
}
