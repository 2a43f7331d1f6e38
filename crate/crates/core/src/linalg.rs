//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Scalar;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SortedEigen<T: Scalar> {
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<T>,
}

pub fn sym_eigen<T: Scalar>(m: &DMatrix<T>) -> SortedEigen<T> {
    let n = m.nrows();
    if n == 0 {
        return SortedEigen { values: Vec::new(), vectors: DMatrix::zeros(0, 0) };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SortedEigen { values, vectors }
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().fold(T::zero(), |acc, &s| acc.max(s))
}

/// Smallest singular value; zero for empty matrices.
pub fn min_singular_value<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 || m.ncols() == 0 {
        return T::zero();
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().skip(1).fold(sv[0], |acc, &s| acc.min(s))
}

/// Spectral norm of a symmetric matrix, as the largest |eigenvalue|.
pub fn sym_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigen(m).values.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

/// `exp(s·A)` for symmetric `A`, through its eigendecomposition.
pub fn sym_exp<T: Scalar>(m: &DMatrix<T>, s: T) -> DMatrix<T> {
    let eig = sym_eigen(m);
    let n = m.nrows();
    let mut scaled = eig.vectors.clone();
    for (c, &lambda) in eig.values.iter().enumerate() {
        let f = (s * lambda).exp();
        scaled.column_mut(c).scale_mut(f);
    }
    if n == 0 {
        return scaled;
    }
    &scaled * eig.vectors.transpose()
}

/// Largest absolute entry, used for symmetry and orthogonality defects.
pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_come_sorted() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0f64, -1.0, 2.0]));
        let e = sym_eigen(&m);
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, -1.0]));
        let e = sym_exp(&m, 2.0);
        assert!((e[(0, 0)] - 2f64.exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - 1.0).abs() < 1e-14);
        assert!((e[(2, 2)] - (-2f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn norms_of_empty_matrices_vanish() {
        let m = DMatrix::<f64>::zeros(4, 0);
        assert_eq!(spectral_norm(&m), 0.0);
        assert_eq!(min_singular_value(&m), 0.0);
    }
}
