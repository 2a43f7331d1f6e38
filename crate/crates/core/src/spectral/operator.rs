use nalgebra::{DMatrix, DVector};

use super::SpectralError;
use crate::grassmann::Subspace;
use crate::linalg::{sym_eigen, symmetrize, SortedEigen};
use crate::scalar::Scalar;

/// Relative asymmetry accepted by [`SymOperator::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A dense symmetric matrix standing for a self-adjoint operator on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOperator<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> SymOperator<T> {
    /// Validates squareness, finiteness and symmetry up to
    /// `SYMMETRY_TOL · (1 + ‖A‖_F)`.
    pub fn new(entries: DMatrix<T>) -> Result<Self, SpectralError> {
        if entries.nrows() != entries.ncols() {
            return Err(SpectralError::NotSquare { rows: entries.nrows(), cols: entries.ncols() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let n = entries.nrows();
        let scale = T::one() + entries.norm();
        let mut asym = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        if asym > T::tol(SYMMETRY_TOL) * scale {
            return Err(SpectralError::NotSymmetric { asymmetry: asym.as_f64() });
        }
        Ok(Self { entries })
    }

    /// Symmetrizes `(A + Aᵀ)/2` first; use for matrices that are symmetric up
    /// to roundoff by construction.
    pub fn symmetrized(entries: DMatrix<T>) -> Result<Self, SpectralError> {
        Self::new(symmetrize(&entries))
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        Self { entries: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { entries: DMatrix::zeros(n, n) }
    }

    /// `Q · diag(values) · Qᵀ` for a matrix `Q` with orthonormal columns.
    pub fn from_eigenpairs(q: &DMatrix<T>, values: &[T]) -> Result<Self, SpectralError> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(values));
        Self::symmetrized(q * d * q.transpose())
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.entries * x
    }

    /// `⟨Ax, x⟩`.
    pub fn quadratic_form(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.entries * x))
    }

    /// Eigenpairs with eigenvalues in ascending order.
    pub fn eigen(&self) -> SortedEigen<T> {
        sym_eigen(&self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.eigen().values
    }

    /// Operator 2-norm, computed as the largest |eigenvalue|.
    pub fn norm(&self) -> T {
        self.eigenvalues().iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        if self.dim() != other.dim() {
            return Err(SpectralError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(Self { entries: &self.entries + &other.entries })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        if self.dim() != other.dim() {
            return Err(SpectralError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(Self { entries: &self.entries - &other.entries })
    }

    pub fn scale(&self, factor: T) -> Self {
        Self { entries: &self.entries * factor }
    }

    /// Compression `Bᵀ A B` onto a subspace, in the subspace's coordinates.
    pub fn compress(&self, onto: &Subspace<T>) -> Result<Self, SpectralError> {
        if onto.ambient_dim() != self.dim() {
            return Err(SpectralError::DimensionMismatch { expected: self.dim(), found: onto.ambient_dim() });
        }
        let b = onto.basis();
        Self::symmetrized(b.transpose() * &self.entries * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(SymOperator::new(m), Err(SpectralError::NotSymmetric { .. })));
    }

    #[test]
    fn rejects_nan_and_rectangles() {
        let m = DMatrix::from_row_slice(2, 2, &[f64::NAN, 0.0, 0.0, 1.0]);
        assert_eq!(SymOperator::new(m), Err(SpectralError::NonFinite));
        let r = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(SymOperator::new(r), Err(SpectralError::NotSquare { .. })));
    }

    #[test]
    fn norm_is_largest_absolute_eigenvalue() {
        let a = SymOperator::from_diagonal(&[-5.0, 0.0, 3.0]);
        assert_eq!(a.norm(), 5.0);
    }

    #[test]
    fn compression_onto_axis() {
        let a = SymOperator::from_diagonal(&[-2.0, 0.0, 3.0]);
        let c = a.compress(&Subspace::coordinate(3, &[2])).unwrap();
        assert_eq!(c.entries()[(0, 0)], 3.0);
    }
}
