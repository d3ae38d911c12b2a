//! Dense complex Hermitian matrices and the handful of spectral primitives the
//! solvers need: eigendecomposition, `tr(AB)`, reconstruction from a spectrum,
//! and symmetrization.
//!
//! Every constructor funnels through [`hermitize`], so a [`HermitianMatrix`] is
//! exactly Hermitian in floating point, not merely up to rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const EIG_EPS: f64 = f64::EPSILON;

/// A dense `d x d` complex matrix equal to its own conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: DMatrix<Complex64>,
}

/// Eigenvalues in ascending order with the matching unitary eigenvector matrix
/// (column `k` belongs to `eigenvalues[k]`).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

/// Returns `(M + M*) / 2`.
///
/// The upper triangle is computed and mirrored, which makes the result exactly
/// Hermitian (real diagonal, conjugate-symmetric off-diagonal) and the map
/// idempotent bit-for-bit.
pub fn hermitize(m: &DMatrix<Complex64>) -> Result<HermitianMatrix> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "hermitize needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    let mut out = DMatrix::<Complex64>::zeros(d, d);
    for k in 0..d {
        for j in 0..k {
            let v = (m[(j, k)] + m[(k, j)].conj()) * 0.5;
            out[(j, k)] = v;
            out[(k, j)] = v.conj();
        }
        out[(k, k)] = Complex64::new(m[(k, k)].re, 0.0);
    }
    Ok(HermitianMatrix { entries: out })
}

impl HermitianMatrix {
    /// Hermitizes `m`; see [`hermitize`].
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        hermitize(&m)
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        hermitize(&m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, value: f64) -> Self {
        Self {
            entries: DMatrix::from_diagonal_element(d, d, Complex64::new(value, 0.0)),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            entries: DMatrix::zeros(d, d),
        }
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let diag =
            DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
        Self {
            entries: DMatrix::from_diagonal(&diag),
        }
    }

    /// The rank-one projector `|psi><psi|` (no normalization is applied).
    pub fn outer(psi: &[Complex64]) -> Self {
        let v = DVector::from_column_slice(psi);
        let m = &v * v.adjoint();
        hermitize(&m).expect("outer product is square")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.map(|z| z * factor),
        }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &HermitianMatrix, factor: f64) -> Result<Self> {
        check_same_dim(self.dim(), other.dim())?;
        let m = &self.entries + other.entries.map(|z| z * factor);
        hermitize(&m)
    }

    pub fn add_assign(&mut self, other: &HermitianMatrix) -> Result<()> {
        check_same_dim(self.dim(), other.dim())?;
        self.entries += &other.entries;
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.entries)
    }

    pub fn eig(&self) -> Result<SpectralDecomposition> {
        eig_hermitian(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eig_hermitian(self)?.eigenvalues[0])
    }
}

pub(crate) fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let d = m.dim();
    if d == 0 {
        return Err(Error::invalid("cannot decompose a 0x0 matrix"));
    }
    let eig = SymmetricEigen::try_new(m.entries.clone(), EIG_EPS, 1000 + 100 * d)
        .ok_or(Error::DecompositionFailure { dim: d })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::DecompositionFailure { dim: d });
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::<Complex64>::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Real part of `tr(AB)`.
pub fn trace_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let d = a.dim();
    let (ma, mb) = (&a.entries, &b.entries);
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..d {
        for k in 0..d {
            acc += ma[(j, k)] * mb[(k, j)];
        }
    }
    debug_assert!(
        acc.im.abs() <= 1e-10 * acc.re.abs().max(1.0),
        "tr(AB) of Hermitian matrices has imaginary part {}",
        acc.im
    );
    Ok(acc.re)
}

/// Rebuilds `U diag(values) U*`, hermitized.
pub fn from_spectrum(u: &DMatrix<Complex64>, values: &[f64]) -> Result<HermitianMatrix> {
    if !u.is_square() || u.nrows() != values.len() {
        return Err(Error::invalid(format!(
            "basis is {}x{} but {} eigenvalues were given",
            u.nrows(),
            u.ncols(),
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite eigenvalue"));
    }
    let mut scaled = u.clone();
    for (k, &v) in values.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v);
    }
    hermitize(&(scaled * u.adjoint()))
}

impl SpectralDecomposition {
    pub fn reconstruct(&self) -> Result<HermitianMatrix> {
        from_spectrum(&self.eigenvectors, &self.eigenvalues)
    }
}
