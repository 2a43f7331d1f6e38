use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::GrassmannError;
use crate::linalg::{max_abs, sym_eigen};
use crate::scalar::Scalar;

/// Orthonormality defect accepted by [`Subspace::from_orthonormal`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Columns whose norm falls below this after orthogonalization are dropped.
pub const RANK_DROP_TOL: f64 = 1e-10;

/// A linear subspace of `R^n`, stored as an `n × k` matrix with orthonormal
/// columns. `k = 0` is the zero subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T: Scalar> {
    basis: DMatrix<T>,
}

impl<T: Scalar> Subspace<T> {
    pub fn zero(ambient_dim: usize) -> Self {
        Self { basis: DMatrix::zeros(ambient_dim, 0) }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self { basis: DMatrix::identity(ambient_dim, ambient_dim) }
    }

    /// Span of the listed coordinate axes.
    pub fn coordinate(ambient_dim: usize, axes: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(ambient_dim, axes.len());
        for (c, &a) in axes.iter().enumerate() {
            basis[(a, c)] = T::one();
        }
        Self::span(&basis)
    }

    /// Wraps a basis that is already orthonormal within [`ORTHONORMAL_TOL`].
    pub fn from_orthonormal(basis: DMatrix<T>) -> Result<Self, GrassmannError> {
        let k = basis.ncols();
        if k > 0 {
            let gram = basis.transpose() * &basis - DMatrix::<T>::identity(k, k);
            let defect = max_abs(&gram);
            if defect > T::tol(ORTHONORMAL_TOL) {
                return Err(GrassmannError::NotOrthonormal { defect: defect.as_f64() });
            }
        }
        Ok(Self { basis })
    }

    /// Column span of `columns`, orthonormalized by classical Gram–Schmidt with
    /// one reorthogonalization pass. Numerically dependent columns are dropped,
    /// so the result may have fewer columns than the input.
    pub fn span(columns: &DMatrix<T>) -> Self {
        let n = columns.nrows();
        let mut accepted: Vec<DVector<T>> = Vec::with_capacity(columns.ncols());
        for col in columns.column_iter() {
            let mut v = col.clone_owned();
            let start = v.norm();
            for _ in 0..2 {
                for q in &accepted {
                    let c = q.dot(&v);
                    v.axpy(-c, q, T::one());
                }
            }
            let norm = v.norm();
            if norm > T::tol(RANK_DROP_TOL) * start.max(T::one()) {
                accepted.push(v / norm);
            }
        }
        let mut basis = DMatrix::zeros(n, accepted.len());
        for (c, q) in accepted.iter().enumerate() {
            basis.set_column(c, q);
        }
        Self { basis }
    }

    /// Uniformly distributed `k`-dimensional subspace (Gaussian columns,
    /// orthonormalized).
    pub fn random<R: Rng + ?Sized>(ambient_dim: usize, k: usize, rng: &mut R) -> Self {
        loop {
            let m = DMatrix::from_fn(ambient_dim, k, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
            let s = Self::span(&m);
            if s.dim() == k {
                return s;
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<T> {
        self.basis
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DMatrix<T> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Euclidean distance from `x` to the subspace.
    pub fn distance_to(&self, x: &DVector<T>) -> T {
        (x - self.project(x)).norm()
    }

    /// Orthogonal complement in the ambient space.
    pub fn complement(&self) -> Self {
        let n = self.ambient_dim();
        let comp = DMatrix::<T>::identity(n, n) - self.projector();
        Self::top_eigenspace(&comp, n - self.dim())
    }

    /// Orthogonal complement of `inner` inside `self` (`inner ⊆ self` is
    /// assumed; any part of `inner` outside `self` is ignored).
    pub fn relative_complement(&self, inner: &Self) -> Self {
        let k = self.dim();
        let coords = self.basis.transpose() * &inner.basis;
        let inner_coords = Self::span(&coords);
        if inner_coords.dim() >= k {
            return Self::zero(self.ambient_dim());
        }
        let local = inner_coords.complement();
        Self { basis: &self.basis * local.basis }
    }

    /// Span of `op · B`, i.e. the image of this subspace under `op`.
    pub fn image(&self, op: &DMatrix<T>) -> Self {
        Self::span(&(op * &self.basis))
    }

    /// Concatenates bases without any orthogonality check.
    pub(crate) fn stack(parts: &[&Self]) -> DMatrix<T> {
        let n = parts.first().map(|p| p.ambient_dim()).unwrap_or(0);
        let k: usize = parts.iter().map(|p| p.dim()).sum();
        let mut out = DMatrix::zeros(n, k);
        let mut c = 0;
        for p in parts {
            for col in p.basis.column_iter() {
                out.set_column(c, &col);
                c += 1;
            }
        }
        out
    }

    /// Eigenvectors of the symmetric `m` for its `count` largest eigenvalues.
    fn top_eigenspace(m: &DMatrix<T>, count: usize) -> Self {
        let n = m.nrows();
        if count == 0 {
            return Self::zero(n);
        }
        let eig = sym_eigen(m);
        let basis = eig.vectors.columns(n - count, count).clone_owned();
        Self { basis }
    }
}
